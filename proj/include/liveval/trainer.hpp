#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "liveval/dataio.hpp"
#include "liveval/model.hpp"

namespace liveval {

using Step = std::int64_t;

struct LrSchedule {
  enum class Kind { constant, step_decay };
  Kind kind = Kind::constant;
  double eta = 0.1;
  double factor = 0.5; // step_decay only
  Step every = 100;    // step_decay only

  double at(Step t) const;
  bool operator==(const LrSchedule &) const = default;
};

enum class ShuffleMode { with_replacement, epoch_permutation };

const char *to_string(ShuffleMode mode) noexcept;
ShuffleMode shuffle_mode_from_string(const std::string &s);

struct TrainConfig {
  Step total_steps = 100;
  std::size_t batch_size = 25;
  LrSchedule lr;
  RngState rng{0, streams::batch};
  RngState init_rng{0, streams::init};
  ShuffleMode shuffle = ShuffleMode::epoch_permutation;

  void validate() const;
  bool operator==(const TrainConfig &) const = default;
};

// Steps per pass over n samples; the last batch of an epoch may be short.
Step steps_per_epoch(std::size_t n, std::size_t batch_size);

struct StepRecord {
  Step step = 0;
  ParamVector params_before; // theta_{t-1}
  double lr = 0.0;
  std::vector<std::size_t> batch; // dataset rows
  double batch_loss = 0.0;        // loss of `batch` at theta_t
  bool operator==(const StepRecord &) const = default;
};

// Observers run synchronously on the training thread after each step.
class TrainingHook {
public:
  virtual ~TrainingHook() = default;
  virtual void on_start(const ParamVector & /*theta0*/) {}
  virtual void on_step(const StepRecord &record, const ParamVector &theta_t) = 0;
};

struct TrajectoryStore {
  std::vector<StepRecord> records; // records[t - 1] is step t
  ParamVector initial_params;
  ParamVector final_params;

  Step steps() const noexcept { return static_cast<Step>(records.size()); }
  // Throws store error when step t is absent.
  const StepRecord &at(Step t) const;
  bool complete(Step total_steps) const;
};

// theta - lr * mean per-sample gradient over `batch`.
ParamVector sgd_step(const Model &model, std::span<const double> params,
                     const Dataset &ds, std::span<const std::size_t> batch,
                     double lr);

// Deterministic in (rng, t). In epoch mode, step t reads a slice of the
// epoch's permutation. An excluded row is skipped and the batch is refilled
// from the rest of the same permutation, leaving every other batch intact.
std::vector<std::size_t> sample_batch(RngState rng, std::size_t n,
                                      std::size_t batch_size, Step t,
                                      ShuffleMode mode,
                                      std::optional<std::size_t> excluded = {});

struct TrainOptions {
  bool keep_records = true;
  std::optional<std::size_t> excluded_row;
  std::optional<ParamVector> initial_params; // overrides init_rng
};

TrajectoryStore run_training(const Dataset &ds, const Model &model,
                             const TrainConfig &config,
                             std::span<TrainingHook *const> hooks = {},
                             const TrainOptions &options = {});

// Layout: model.json, steps/<t>.bin (theta_{t-1}), steps/<t>.json, final.bin.
void save_checkpoints(const TrajectoryStore &store, const ModelSpec &spec,
                      const std::filesystem::path &dir);
TrajectoryStore load_checkpoints(const std::filesystem::path &dir,
                                 ModelSpec *spec = nullptr);

} // namespace liveval
