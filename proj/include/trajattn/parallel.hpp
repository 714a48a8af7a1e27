#pragma once

#include <functional>

namespace trajattn {

// Thread count for parallel sections: `requested` if positive, otherwise the
// TRAJATTN_THREADS environment variable, otherwise 1.
int resolve_thread_count(int requested = 0);

// Runs fn(i) for i in [0, n) over a static block partition. Work items must
// not share mutable state; any reduction happens afterwards in index order,
// so results are identical for every thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace trajattn
