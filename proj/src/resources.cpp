#include "liveval/resources.hpp"

#include <fstream>
#include <string>

namespace liveval {

std::size_t current_rss_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      try {
        return static_cast<std::size_t>(std::stoull(line.substr(6))) * 1024;
      } catch (...) {
        return 0;
      }
    }
  }
  return 0;
}

PeakRssSampler::PeakRssSampler(std::chrono::milliseconds interval) : interval_(interval) {
  observe();
  worker_ = std::thread([this] {
    std::unique_lock lock(mutex_);
    while (running_) {
      if (wake_.wait_for(lock, interval_, [this] { return !running_; }))
        break;
      observe();
    }
  });
}

PeakRssSampler::~PeakRssSampler() { stop(); }

void PeakRssSampler::observe() noexcept {
  const std::size_t now = current_rss_bytes();
  std::size_t prev = peak_.load();
  while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
  }
}

std::size_t PeakRssSampler::stop() {
  {
    std::lock_guard lock(mutex_);
    if (!running_)
      return peak_.load();
    running_ = false;
  }
  wake_.notify_all();
  if (worker_.joinable())
    worker_.join();
  observe();
  return peak_.load();
}

} // namespace liveval
