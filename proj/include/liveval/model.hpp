#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "liveval/dataio.hpp"
#include "liveval/numkit.hpp"

namespace liveval {

enum class LossKind { cross_entropy, mse };

struct ModelSpec {
  // Input F, hidden widths..., output C. Two entries is a linear model.
  std::vector<std::size_t> widths;
  LossKind loss = LossKind::cross_entropy;
  bool bias = true;

  std::size_t param_count() const;
  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  void validate() const;
  bool operator==(const ModelSpec &) const = default;
};

const char *to_string(LossKind kind) noexcept;
LossKind loss_kind_from_string(const std::string &s);

std::string model_spec_json(const ModelSpec &spec);
ModelSpec parse_model_spec(const std::string &json);

// Flat parameter state. Layer l occupies [W_l (out x in, row-major), b_l].
using ParamVector = RealVector;

// Supervision for one sample: a class label, or a real target row for mse.
struct Target {
  int label = 0;
  std::span<const double> values; // empty: one-hot of label
};

// Dense layers with ReLU between them, softmax cross-entropy or squared
// error on the output. ReLU'(0) is taken as 0.
class Model {
public:
  explicit Model(ModelSpec spec);

  const ModelSpec &spec() const noexcept { return spec_; }
  std::size_t param_count() const noexcept { return param_count_; }

  // Uniform in +-1/sqrt(fan_in) for weights and biases.
  ParamVector init_params(RngState rng) const;

  std::vector<double> forward(std::span<const double> params,
                              std::span<const double> x) const;
  double sample_loss(std::span<const double> params, std::span<const double> x,
                     Target target) const;
  // Loss of one sample; writes its gradient into `grad` (size d).
  double loss_and_grad(std::span<const double> params, std::span<const double> x,
                       Target target, std::span<double> grad) const;
  RealVector per_sample_grad(std::span<const double> params,
                             std::span<const double> x, Target target) const;

  // Convenience forms that read sample `row` from a dataset.
  static Target target_of(const Dataset &ds, std::size_t row);
  RealVector per_sample_grad(std::span<const double> params, const Dataset &ds,
                             std::size_t row) const;

  // Mean per-sample loss / gradient over `rows` (duplicates counted).
  double batch_loss(std::span<const double> params, const Dataset &ds,
                    std::span<const std::size_t> rows) const;
  RealVector batch_grad(std::span<const double> params, const Dataset &ds,
                        std::span<const std::size_t> rows) const;
  // Mean loss over the whole dataset.
  double dataset_loss(std::span<const double> params, const Dataset &ds) const;
  double accuracy(std::span<const double> params, const Dataset &ds) const;

  // Hessian of the batch loss times v, by central differences of the
  // analytic gradient along v/|v| with step 1e-5.
  RealVector hessian_vector_product(std::span<const double> params,
                                    const Dataset &ds,
                                    std::span<const std::size_t> rows,
                                    std::span<const double> v) const;

private:
  ModelSpec spec_;
  std::size_t param_count_ = 0;
  std::vector<std::size_t> offsets_; // start of each layer's block
};

void save_params(const ParamVector &params, const std::filesystem::path &path);
ParamVector load_params(const std::filesystem::path &path);

} // namespace liveval
