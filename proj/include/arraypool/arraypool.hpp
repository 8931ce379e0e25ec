#pragma once
// Umbrella header: the whole library.

#include "common.hpp"          // IWYU pragma: export
#include "pid.hpp"             // IWYU pragma: export
#include "entry.hpp"           // IWYU pragma: export
#include "memory_provider.hpp" // IWYU pragma: export
#include "hparray.hpp"         // IWYU pragma: export
#include "translation.hpp"     // IWYU pragma: export
#include "hash_translation.hpp" // IWYU pragma: export
#include "frame_store.hpp"     // IWYU pragma: export
#include "page_store.hpp"      // IWYU pragma: export
#include "buffer_pool.hpp"     // IWYU pragma: export
#include "btree.hpp"           // IWYU pragma: export
#include "page_graph.hpp"      // IWYU pragma: export
#include "workloads.hpp"       // IWYU pragma: export
