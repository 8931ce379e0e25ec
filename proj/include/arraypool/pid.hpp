#pragma once
// Page-id arithmetic: a pid is a raw 64-bit integer split into a prefix that
// selects a last-level translation array and a suffix that indexes into it.
// Groups are the runs of entries sharing one OS page of translation memory.

#include "common.hpp"

namespace arraypool {

static constexpr u32 kMinSuffixWidth = 8;
static constexpr u32 kMaxSuffixWidth = 48;
static constexpr u32 kDefaultSuffixWidth = 32;
static constexpr u32 kEntryBytes = 8;  // one 64-bit translation word per page

// The top two pids are reserved as hash-table sentinels (empty/tombstone), so
// every backend accepts at most this pid.
static constexpr PageId kMaxUsablePid = ~PageId(0) - 2;

struct PidLayout {
  u32 suffixWidth = kDefaultSuffixWidth;
  u32 osPageBytes = 4096;

  void validate() const {
    if (suffixWidth < kMinSuffixWidth || suffixWidth > kMaxSuffixWidth)
      throw ConfigError("suffix width must be in [8,48]");
    if (osPageBytes < 4096 || (osPageBytes & (osPageBytes - 1)) != 0)
      throw ConfigError("os page bytes must be a power of two >= 4096");
  }

  u64 suffixMask() const { return (u64(1) << suffixWidth) - 1; }
  u64 prefixOf(PageId pid) const { return pid >> suffixWidth; }
  u64 suffixOf(PageId pid) const { return pid & suffixMask(); }
  PageId makePid(u64 prefix, u64 suffix) const {
    return (prefix << suffixWidth) | (suffix & suffixMask());
  }

  // entries covered by one OS page of translation memory
  u64 entriesPerGroup() const { return osPageBytes / kEntryBytes; }
  u64 groupOf(u64 suffix) const { return suffix / entriesPerGroup(); }
  u64 entriesPerArray() const { return u64(1) << suffixWidth; }
  u64 groupsPerArray() const {
    u64 epg = entriesPerGroup();
    return (entriesPerArray() + epg - 1) / epg;
  }
};

}  // namespace arraypool
