// Page-id layout arithmetic: prefix/suffix splits, group indexing, and the
// config guard rails. Expected values below were computed independently.
#include <catch2/catch_amalgamated.hpp>

#include "arraypool/pid.hpp"

using namespace arraypool;

TEST_CASE("pid split examples") {
  PidLayout l16{16, 4096};
  PageId pid = 0x0123456789abcdefull;
  CHECK(l16.prefixOf(pid) == 0x123456789abull);
  CHECK(l16.suffixOf(pid) == 0xcdefull);
  CHECK(l16.groupOf(l16.suffixOf(pid)) == 102);  // 0xcdef / 512

  PidLayout l8{8, 4096};
  CHECK(l8.prefixOf(pid) == 0x123456789abcdull);
  CHECK(l8.suffixOf(pid) == 0xefull);
  CHECK(l8.groupOf(l8.suffixOf(pid)) == 0);

  PidLayout l32{32, 4096};
  CHECK(l32.prefixOf(kMaxUsablePid) == 0xffffffffull);
  CHECK(l32.suffixOf(kMaxUsablePid) == 0xfffffffdull);
  CHECK(l32.groupOf(l32.suffixOf(kMaxUsablePid)) == 8388607);
}

TEST_CASE("pid derived sizes") {
  PidLayout l{16, 4096};
  CHECK(l.entriesPerGroup() == 512);  // 4096 / 8-byte entries
  CHECK(l.entriesPerArray() == 65536);
  CHECK(l.groupsPerArray() == 128);

  PidLayout big{32, 4096};
  CHECK(big.entriesPerArray() == (u64(1) << 32));
  CHECK(big.groupsPerArray() == (u64(1) << 23));

  PidLayout osBig{16, 16384};
  CHECK(osBig.entriesPerGroup() == 2048);
  CHECK(osBig.groupsPerArray() == 32);
}

TEST_CASE("pid round trip") {
  for (u32 sw : {8u, 13u, 16u, 24u, 32u, 48u}) {
    PidLayout l{sw, 4096};
    Rng64 rng(0xfeedu + sw);
    for (int i = 0; i < 1000; i++) {
      PageId pid = rng.next() & kMaxUsablePid;
      CHECK(l.makePid(l.prefixOf(pid), l.suffixOf(pid)) == pid);
      CHECK(l.suffixOf(pid) < l.entriesPerArray());
      CHECK(l.groupOf(l.suffixOf(pid)) < l.groupsPerArray());
    }
  }
}

TEST_CASE("pid layout validation") {
  CHECK_THROWS_AS((PidLayout{7, 4096}).validate(), ConfigError);
  CHECK_THROWS_AS((PidLayout{49, 4096}).validate(), ConfigError);
  CHECK_THROWS_AS((PidLayout{16, 2048}).validate(), ConfigError);
  CHECK_THROWS_AS((PidLayout{16, 6000}).validate(), ConfigError);
  CHECK_NOTHROW((PidLayout{8, 4096}).validate());
  CHECK_NOTHROW((PidLayout{48, 65536}).validate());
}
