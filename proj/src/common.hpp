#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tsppc {

/// Error categories surfaced across the C API boundary as status codes.
enum class ErrorCode {
  Argument,   // bad argument / violated precondition
  Io,         // file system failure
  Format,     // parse error, version or shape mismatch
  Limit,      // instance size exceeds a solver limit
  Numeric,    // non-finite values in numerical computation
  Invalid,    // invariant breach (invalid tour, infeasible result)
  Internal,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

/// Shortest decimal form that round-trips the exact double value.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::Format, "bad floating point value: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::Format, "bad integer value: '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep);

/// Runs fn(begin, end) over [0, count) split into contiguous chunks, one per
/// worker. Deterministic given the thread count: chunk boundaries depend only
/// on (count, threads) and workers write disjoint state.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads < 1) threads = 1;
  std::size_t nthread = std::min<std::size_t>(threads, count);
  if (nthread <= 1) {
    if (count > 0) fn(std::size_t{0}, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nthread);
  std::size_t chunk = (count + nthread - 1) / nthread;
  for (std::size_t t = 0; t < nthread; ++t) {
    std::size_t begin = t * chunk;
    std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace tsppc
