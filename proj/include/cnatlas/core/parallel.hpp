#pragma once

#include <cstddef>
#include <functional>

namespace cnatlas {

/// Worker count used by parallel_for. Defaults to $CNATLAS_WORKERS, else the
/// hardware concurrency.
int worker_count();
void set_worker_count(int workers);

/// Runs body(begin, end) over a static partition of [0, n). Callers must write
/// results per index (or reduce in index order afterwards) so output does not
/// depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cnatlas
