#pragma once

#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <vector>

#include "liveval/dataio.hpp"
#include "liveval/model.hpp"
#include "liveval/trainer.hpp"

namespace liveval {

enum class Denominator { symmetric, delta_only };
enum class LossRateMode { online, deferred };

const char *to_string(Denominator d) noexcept;
const char *to_string(LossRateMode m) noexcept;
Denominator denominator_from_string(const std::string &s);
LossRateMode loss_rate_mode_from_string(const std::string &s);

// (|dtheta| - |u|) / (|dtheta| + |u|), or / |dtheta| for delta_only.
// Both norms zero gives 0.
double step_value(double delta_norm, double u_norm,
                  Denominator denominator = Denominator::symmetric);

// theta_ref - (theta_prev - lr * grad)
RealVector hypothetical_state(std::span<const double> theta_ref,
                              std::span<const double> theta_prev, double lr,
                              std::span<const double> grad);

struct StepValue {
  SampleId id = 0;
  Step step = 0;     // evaluation step t
  Step ref_step = 0; // step whose parameters served as the reference
  double value = 0.0;
  double delta_norm = 0.0; // |theta_ref - theta_{t-1}|
  double grad_norm = 0.0;  // |grad of sample at theta_{t-1}|
  bool operator==(const StepValue &) const = default;
};

// Append-only step values plus per-sample running totals. Writers are
// single-threaded; snapshot() may be called from other threads.
class ValuationLedger {
public:
  ValuationLedger() = default;
  explicit ValuationLedger(std::span<const SampleId> ids);
  ValuationLedger(const ValuationLedger &other);
  ValuationLedger &operator=(const ValuationLedger &other);

  void append(const StepValue &v);

  // Unsynchronised views, for the owning thread.
  const std::vector<StepValue> &step_values() const noexcept { return values_; }
  const std::map<SampleId, double> &cumulative() const noexcept { return cumulative_; }
  double cumulative(SampleId id) const;

  ValuationLedger snapshot() const { return *this; }

private:
  mutable std::shared_mutex mutex_;
  std::vector<StepValue> values_;
  std::map<SampleId, double> cumulative_;
};

// Recomputes every batched sample's gradient against the stored trajectory
// and the static reference theta_T.
ValuationLedger basic_valuate(const TrajectoryStore &store, const Dataset &ds,
                              const Model &model,
                              Denominator denominator = Denominator::symmetric);

struct WindowConfig {
  Step delta0 = 10;
  Step delta_min = 1;
  Step delta_max = 50;
  Step delta_step = 1;
  double eps_min = 0.005;
  double eps_max = 0.05;

  void validate() const;
  bool operator==(const WindowConfig &) const = default;
};

struct WindowState {
  Step delta = 10;
  Step delta_min = 1;
  Step delta_max = 50;
  Step delta_step = 1;
  double eps_min = 0.005;
  double eps_max = 0.05;
  double loss_rate = 0.0;

  static WindowState from(const WindowConfig &c);
};

// Grow on fast loss change, shrink on slow change, clamp to bounds.
WindowState window_update(WindowState state, double loss_rate);

// min(t - 1 + delta_prev, T)
Step reference_step(Step t, Step delta_prev, Step total_steps);

struct LiveValConfig {
  WindowConfig window;
  Denominator denominator = Denominator::symmetric;
  LossRateMode loss_rate = LossRateMode::online;
  Step total_steps = 0;
};

struct QueueEntry {
  ParamVector theta;
  std::vector<std::size_t> batch;
  double lr = 0.0;
  std::optional<double> loss;
};

struct DualQueue {
  std::map<Step, QueueEntry> model;      // Q_theta
  std::set<std::pair<Step, Step>> refs;  // Q_ref as (t_eval, t_ref)
};

struct QueueStats {
  std::size_t max_model = 0;
  std::size_t max_refs = 0;
  std::size_t model_after_last = 0;
  std::size_t refs_after_last = 0;
};

// Online valuation driven by training steps through a bounded model queue
// and a queue of pending (evaluation, reference) step pairs.
class LiveValEngine : public TrainingHook {
public:
  LiveValEngine(const Dataset &ds, const Model &model, LiveValConfig config);

  void on_start(const ParamVector &theta0) override;
  void on_step(const StepRecord &record, const ParamVector &theta_t) override;

  const ValuationLedger &ledger() const noexcept { return ledger_; }
  const DualQueue &queue() const noexcept { return queue_; }
  const WindowState &window() const noexcept { return window_; }
  // deltas()[t] is the window after step t; deltas()[0] = delta0.
  const std::vector<Step> &deltas() const noexcept { return deltas_; }
  const QueueStats &queue_stats() const noexcept { return stats_; }
  Step current_step() const noexcept { return current_; }

  struct Snapshot {
    ValuationLedger ledger;
    bool provisional = false;
    Step step = 0;
  };
  // Ledger as of now, with pending pairs valued against the newest
  // parameters. The engine's own ledger is unchanged.
  Snapshot provisional_snapshot() const;

private:
  void value_pair(Step t_eval, Step t_ref, const ParamVector &theta_ref,
                  ValuationLedger &out) const;

  const Dataset &ds_;
  const Model &model_;
  LiveValConfig config_;
  WindowState window_;
  ValuationLedger ledger_;
  DualQueue queue_;
  std::vector<Step> deltas_;
  QueueStats stats_;
  Step current_ = 0;
};

// Train once with the engine attached and return its ledger.
ValuationLedger liveval_valuate(const Dataset &ds, const Model &model,
                                const TrainConfig &train, const LiveValConfig &config);

struct VolatilityConfig {
  TrainConfig train;
  LiveValConfig valuation;
  std::vector<RngState> seeds; // batch-order seeds; init draw stays fixed
};

struct VolatilityEntry {
  SampleId id = 0;
  Step step = 0;
  std::size_t observations = 0;
  double stddev = 0.0;
  double bound = 0.0;       // 2 * lr_t * G / min |dtheta_t|
  double proof_bound = 0.0; // lr_t * G / min |dtheta_t|
};

struct VolatilityReport {
  std::vector<VolatilityEntry> entries;
  std::size_t skipped_pairs = 0; // fewer than two observations
  std::size_t violations = 0;
  std::size_t proof_bound_violations = 0;
  double max_grad_norm = 0.0;
  std::vector<double> max_stddev_per_step; // index t - 1, NaN when unobserved
  double spearman_step_vs_max_stddev = 0.0;
};

VolatilityReport volatility_probe(const Dataset &ds, const Model &model,
                                  const VolatilityConfig &config);

// Rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

void write_step_values_csv(const ValuationLedger &ledger, const std::filesystem::path &path);
void write_cumulative_csv(const ValuationLedger &ledger, const std::filesystem::path &path);

} // namespace liveval
