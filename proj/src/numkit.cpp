#include "liveval/numkit.hpp"

#include <cmath>
#include <numbers>

#include "liveval/error.hpp"

namespace liveval {

namespace {

void check_same_length(std::size_t a, std::size_t b, const char *op) {
  if (a != b)
    fail(ErrorKind::dimension, std::string(op) + ": length mismatch (" +
                                   std::to_string(a) + " vs " +
                                   std::to_string(b) + ")");
}

} // namespace

RealVector axpy(double alpha, std::span<const double> x,
                std::span<const double> y) {
  check_same_length(x.size(), y.size(), "axpy");
  RealVector out(y.begin(), y.end());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] += alpha * x[i];
  return out;
}

void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y) {
  check_same_length(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] += alpha * x[i];
}

RealVector subtract(std::span<const double> x, std::span<const double> y) {
  check_same_length(x.size(), y.size(), "subtract");
  RealVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] - y[i];
  return out;
}

RealVector scaled(double alpha, std::span<const double> x) {
  RealVector out(x.begin(), x.end());
  for (auto &v : out)
    v *= alpha;
  return out;
}

double dot(std::span<const double> x, std::span<const double> y) {
  check_same_length(x.size(), y.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) {
  // Scaled accumulation avoids overflow for large entries.
  double scale = 0.0;
  double ssq = 1.0;
  for (double v : x) {
    if (!std::isfinite(v))
      fail(ErrorKind::numeric, "norm2: non-finite entry");
    if (v != 0.0) {
      const double a = std::fabs(v);
      if (scale < a) {
        ssq = 1.0 + ssq * (scale / a) * (scale / a);
        scale = a;
      } else {
        ssq += (a / scale) * (a / scale);
      }
    }
  }
  return scale * std::sqrt(ssq);
}

bool all_finite(std::span<const double> x) noexcept {
  for (double v : x)
    if (!std::isfinite(v))
      return false;
  return true;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t key = mix64(state_.seed ^ mix64(state_.stream + 0x632be59bd9b4e019ULL));
  return mix64(key ^ (counter_++ * 0xd1b54a32d192ed03ULL));
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n <= 1)
    return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Rng Rng::split(std::uint64_t key) const noexcept {
  return Rng(state_.seed, mix64(state_.stream ^ mix64(key + 0x2545f4914f6cdd1dULL)));
}

RealVector gaussian_draw(RngState state, std::size_t n, double sigma) {
  require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::parameter,
          "gaussian_draw: sigma must be finite and >= 0");
  require(n > 0, ErrorKind::parameter, "gaussian_draw: n must be > 0");
  Rng rng(state);
  RealVector out(n);
  for (auto &v : out)
    v = sigma * rng.normal();
  return out;
}

} // namespace liveval
