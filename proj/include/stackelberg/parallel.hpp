#pragma once

#include <cstddef>
#include <functional>

namespace stackelberg {

// Caps the worker count used by parallel_for (the CLI's --threads flag).
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs fn(i) for i in [0, n) split into contiguous chunks. Callers write
// per-index results and reduce them afterwards in index order, so results
// do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace stackelberg
