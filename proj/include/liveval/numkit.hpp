#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace liveval {

using RealVector = std::vector<double>;

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  bool operator==(const Matrix &) const = default;
};

RealVector axpy(double alpha, std::span<const double> x, std::span<const double> y);
void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y);
RealVector subtract(std::span<const double> x, std::span<const double> y);
RealVector scaled(double alpha, std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);

// Euclidean norm. Throws numeric error on a non-finite entry.
double norm2(std::span<const double> x);

bool all_finite(std::span<const double> x) noexcept;

// Counter-based generator: draw k of (seed, stream) is a pure function of
// (seed, stream, k), so splitting never shares state between consumers.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  bool operator==(const RngState &) const = default;
};

// Named streams so independent consumers never collide.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t batch = 2;
inline constexpr std::uint64_t corrupt = 3;
inline constexpr std::uint64_t pool = 4;
inline constexpr std::uint64_t data = 5;
inline constexpr std::uint64_t heldout = 6;
inline constexpr std::uint64_t fuzz = 7;
} // namespace streams

class Rng {
public:
  explicit Rng(RngState state) : state_(state) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : state_{seed, stream} {}

  const RngState &state() const noexcept { return state_; }
  std::uint64_t position() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); unbiased via rejection.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;

  // Child generator on a stream derived from this one and `key`.
  Rng split(std::uint64_t key) const noexcept;

  template <typename T> void shuffle(std::vector<T> &v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  RngState state_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

// n i.i.d. N(0, sigma^2) draws.
RealVector gaussian_draw(RngState rng, std::size_t n, double sigma);

} // namespace liveval
