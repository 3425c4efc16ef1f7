#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <cstddef>
#include <thread>

namespace liveval {

// Resident set size of this process, 0 when unavailable.
std::size_t current_rss_bytes();

// Samples the resident set on a background thread at a fixed interval and
// keeps the maximum seen between construction and stop().
class PeakRssSampler {
public:
  explicit PeakRssSampler(std::chrono::milliseconds interval = std::chrono::milliseconds(100));
  ~PeakRssSampler();
  PeakRssSampler(const PeakRssSampler &) = delete;
  PeakRssSampler &operator=(const PeakRssSampler &) = delete;

  std::size_t stop();
  std::size_t peak() const noexcept { return peak_.load(); }

private:
  void observe() noexcept;

  std::chrono::milliseconds interval_;
  std::atomic<std::size_t> peak_{0};
  std::mutex mutex_;
  std::condition_variable wake_;
  bool running_ = true;
  std::thread worker_;
};

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

} // namespace liveval
