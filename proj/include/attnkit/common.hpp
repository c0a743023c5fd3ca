#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace attnkit {

// Thrown when tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown by the simulators when a tile configuration does not fit a buffer.
// `buffer` names the violated buffer ("L0", "L1").
class InfeasibleConfigError : public std::runtime_error {
 public:
  InfeasibleConfigError(std::string buffer, const std::string& what)
      : std::runtime_error(what), buffer_(std::move(buffer)) {}
  const std::string& buffer() const { return buffer_; }

 private:
  std::string buffer_;
};

// Runs fn(i) for i in [0, n). With workers <= 1 the loop is sequential.
// Work items must write to disjoint state; the partitioning is static, so
// results do not depend on the worker count.
inline void parallel_for(std::int64_t n, int workers,
                         const std::function<void(std::int64_t)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nw = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < n; i += nw) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Worker-count override used by the CLI; 0 means "caller's default".
inline int env_worker_override() {
  if (const char* env = std::getenv("ATTNKIT_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<int>(v);
  }
  return 0;
}

}  // namespace attnkit
