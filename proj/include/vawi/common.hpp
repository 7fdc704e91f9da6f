#pragma once

#include <complex>
#include <future>
#include <stdexcept>
#include <string>
#include <vector>

namespace vawi {

using cplx = std::complex<double>;

inline constexpr double pi = 3.141592653589793238462643383279502884;

// thrown when a linear solve or factorization breaks down
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// chunked parallel loop over [0, n); fn must be safe to call concurrently
// for distinct indices. threads <= 1 runs inline.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int w = std::min(threads, n);
  std::vector<std::future<void>> jobs;
  jobs.reserve(w);
  for (int t = 0; t < w; ++t) {
    jobs.push_back(std::async(std::launch::async, [&, t] {
      for (int i = t; i < n; i += w) fn(i);
    }));
  }
  for (auto& j : jobs) j.get();  // rethrows worker exceptions
}

}  // namespace vawi
