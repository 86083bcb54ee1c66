#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace urb {

// Strided index-parallel loop: worker t handles indices t, t+T, t+2T, ...
// Results must be written to per-index slots; under that discipline the
// output is bitwise identical for any thread count. threads <= 1 runs the
// body inline. The first exception (by worker index) is rethrown after join.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::size_t t_count = static_cast<std::size_t>(threads);
  if (t_count > n) t_count = n;
  std::vector<std::exception_ptr> errors(t_count);
  std::vector<std::thread> workers;
  workers.reserve(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += t_count) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace urb
