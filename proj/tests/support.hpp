#pragma once

#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>
#include <string>

#include "liveval/dataio.hpp"
#include "liveval/error.hpp"

namespace testing {

template <typename Fn> bool throws_kind(liveval::ErrorKind kind, Fn &&fn) {
  try {
    fn();
  } catch (const liveval::Error &e) {
    return e.kind() == kind;
  }
  return false;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag);
  ~TempDir();
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// 1-feature regression set with real targets.
liveval::Dataset scalar_regression(std::initializer_list<double> xs,
                                   std::initializer_list<double> ts);

} // namespace testing

#include "liveval/model.hpp"

namespace testing {

// |g - fd| / max(|g|, |fd|) with fd the central difference of the loss at
// step h, coordinate by coordinate.
double fd_gradient_error(const liveval::Model &model, std::span<const double> params,
                         std::span<const double> x, liveval::Target target, double h = 1e-6);

// Random (params, x, target) for a model; x entries N(0, 1), params uniform
// in +-scale.
struct FuzzCase {
  liveval::ParamVector params;
  liveval::RealVector x;
  int label = 0;
  liveval::RealVector values; // mse targets, empty for cross-entropy
  liveval::Target target() const { return {label, values}; }
};
FuzzCase fuzz_case(const liveval::Model &model, liveval::Rng &rng, double scale = 1.0);

// Explicit Hessian of the mean 0.5 * |W x + b - t|^2 loss over `rows`, in
// the library's parameter layout, assembled from the Gram matrix.
liveval::Matrix linear_mse_hessian(const liveval::Dataset &ds, std::size_t outputs,
                                   std::span<const std::size_t> rows);

// Dense Gaussian elimination with partial pivoting; solves A s = b.
liveval::RealVector dense_solve(liveval::Matrix a, liveval::RealVector b);

} // namespace testing

namespace testing {

// Influence values -<(H + damping I)^-1 g_test, g_i> for a linear mse model
// [F, C] with bias, computed from closed forms only: residual-times-input
// gradients, the Gram-matrix Hessian over every training row and a dense
// solve. Targets are one-hot labels unless the dataset carries real targets.
std::map<liveval::SampleId, double>
linear_mse_influence(const liveval::Dataset &train, const liveval::Dataset &test,
                     std::span<const double> theta, std::size_t outputs, double damping);

} // namespace testing

namespace testing {

// Checks `doc` against the JSON-schema subset used by docs/*.schema.json
// (type, required, properties, additionalProperties: false, items, enum,
// minimum, maximum, minItems). Returns the first violation, empty if valid.
std::string schema_violation(const std::string &schema_text, const std::string &doc_text);

} // namespace testing
