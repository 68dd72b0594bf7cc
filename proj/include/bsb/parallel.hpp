#pragma once

#include <cstddef>
#include <functional>

namespace bsb {

// Process-wide cap on worker threads; 0 restores the default (hardware concurrency).
void set_thread_budget(unsigned threads);
unsigned thread_budget();

// Runs body(i) for i in [0, count) over at most thread_budget() threads.
// Exceptions from workers are rethrown on the caller (first by index wins).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace bsb
