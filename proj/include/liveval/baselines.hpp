#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "liveval/dataio.hpp"
#include "liveval/model.hpp"
#include "liveval/trainer.hpp"

namespace liveval {

struct BaselineResult {
  std::string method; // "loo", "if", "gradnd"
  std::map<SampleId, double> values;
  double wall_seconds = 0.0;
  std::size_t peak_rss_bytes = 0;
  // Method-specific run facts recorded in manifests.
  std::map<std::string, double> stats;
};

struct LooOptions {
  std::size_t threads = 1;
};

// L(D \ {i}) - L(D), both losses over the full training set at the final
// step. Retraining reuses the seed and skips the removed sample.
BaselineResult loo_value(const Dataset &ds, const Model &model, const TrainConfig &config,
                         std::span<const SampleId> pool, const LooOptions &opts = {});

struct IfOptions {
  double damping = 0.01;
  double tolerance = 1e-6; // relative residual
  int max_iterations = 200;
};

struct CgResult {
  RealVector solution;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Conjugate gradient on (H + damping I) s = b with H applied through
// `apply`. Throws solver error when max_iterations is exhausted.
template <typename ApplyFn>
CgResult conjugate_gradient(ApplyFn &&apply, std::span<const double> b, double damping,
                            double tolerance, int max_iterations);

// -<s, grad_i> with (H + damping I) s = mean test gradient, H the Hessian
// of the mean training loss at theta_star.
BaselineResult if_value(const Dataset &ds, const Model &model,
                        std::span<const double> theta_star,
                        std::span<const SampleId> pool, const Dataset &test_set,
                        const IfOptions &opts = {});

struct GradNdOptions {
  std::vector<Step> checkpoints; // empty: every step of the first epoch
};

// Mean over checkpoint steps t of |grad_i at theta_t|.
BaselineResult gradnd_value(const Dataset &ds, const Model &model, const TrainConfig &config,
                            std::span<const SampleId> pool, const GradNdOptions &opts = {});

} // namespace liveval

#include "liveval/detail/cg.hpp"
