#include "liveval/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "liveval/error.hpp"
#include "format.hpp"

namespace liveval {

const char *to_string(Denominator d) noexcept {
  return d == Denominator::symmetric ? "symmetric" : "delta-only";
}

const char *to_string(LossRateMode m) noexcept {
  return m == LossRateMode::online ? "online" : "deferred";
}

Denominator denominator_from_string(const std::string &s) {
  if (s == "symmetric")
    return Denominator::symmetric;
  if (s == "delta-only")
    return Denominator::delta_only;
  fail(ErrorKind::config, "unknown denominator '" + s + "'");
}

LossRateMode loss_rate_mode_from_string(const std::string &s) {
  if (s == "online")
    return LossRateMode::online;
  if (s == "deferred")
    return LossRateMode::deferred;
  fail(ErrorKind::config, "unknown loss-rate mode '" + s + "'");
}

double step_value(double delta_norm, double u_norm, Denominator denominator) {
  require(delta_norm >= 0.0 && u_norm >= 0.0, ErrorKind::parameter,
          "step_value: norms must be non-negative");
  require(std::isfinite(delta_norm) && std::isfinite(u_norm), ErrorKind::numeric,
          "step_value: non-finite norm");
  if (denominator == Denominator::delta_only) {
    if (delta_norm == 0.0)
      return u_norm == 0.0 ? 0.0 : -1.0;
    return (delta_norm - u_norm) / delta_norm;
  }
  const double sum = delta_norm + u_norm;
  if (sum == 0.0)
    return 0.0;
  return (delta_norm - u_norm) / sum;
}

RealVector hypothetical_state(std::span<const double> theta_ref,
                              std::span<const double> theta_prev, double lr,
                              std::span<const double> grad) {
  require(theta_ref.size() == theta_prev.size() && theta_prev.size() == grad.size(),
          ErrorKind::dimension, "hypothetical_state: dimension mismatch");
  RealVector u(theta_ref.size());
  for (std::size_t k = 0; k < u.size(); ++k)
    u[k] = theta_ref[k] - (theta_prev[k] - lr * grad[k]);
  return u;
}

ValuationLedger::ValuationLedger(std::span<const SampleId> ids) {
  for (auto id : ids)
    cumulative_.emplace(id, 0.0);
}

ValuationLedger::ValuationLedger(const ValuationLedger &other) {
  std::shared_lock lock(other.mutex_);
  values_ = other.values_;
  cumulative_ = other.cumulative_;
}

ValuationLedger &ValuationLedger::operator=(const ValuationLedger &other) {
  if (this == &other)
    return *this;
  std::vector<StepValue> values;
  std::map<SampleId, double> cumulative;
  {
    std::shared_lock lock(other.mutex_);
    values = other.values_;
    cumulative = other.cumulative_;
  }
  std::unique_lock lock(mutex_);
  values_ = std::move(values);
  cumulative_ = std::move(cumulative);
  return *this;
}

void ValuationLedger::append(const StepValue &v) {
  std::unique_lock lock(mutex_);
  values_.push_back(v);
  cumulative_[v.id] += v.value;
}

double ValuationLedger::cumulative(SampleId id) const {
  auto it = cumulative_.find(id);
  return it == cumulative_.end() ? 0.0 : it->second;
}

namespace {

// Values every sample of one evaluation step against `theta_ref`.
void value_batch(const Dataset &ds, const Model &model, Step t_eval, Step t_ref,
                 const ParamVector &theta_prev, const ParamVector &theta_ref,
                 std::span<const std::size_t> batch, double lr,
                 Denominator denominator, ValuationLedger &out) {
  const RealVector delta = subtract(theta_ref, theta_prev);
  const double delta_norm = norm2(delta);
  RealVector grad(model.param_count());
  for (auto row : batch) {
    model.loss_and_grad(theta_prev, ds.x(row), Model::target_of(ds, row), grad);
    const RealVector u = hypothetical_state(theta_ref, theta_prev, lr, grad);
    StepValue v;
    v.id = ds.ids[row];
    v.step = t_eval;
    v.ref_step = t_ref;
    v.value = step_value(delta_norm, norm2(u), denominator);
    v.delta_norm = delta_norm;
    v.grad_norm = norm2(grad);
    out.append(v);
  }
}

} // namespace

ValuationLedger basic_valuate(const TrajectoryStore &store, const Dataset &ds,
                              const Model &model, Denominator denominator) {
  require(!store.final_params.empty(), ErrorKind::store, "basic_valuate: missing final parameters");
  ValuationLedger ledger(ds.ids);
  const Step total = store.steps();
  for (Step t = 1; t <= total; ++t) {
    const StepRecord &rec = store.at(t);
    value_batch(ds, model, t, total, rec.params_before, store.final_params, rec.batch,
                rec.lr, denominator, ledger);
  }
  return ledger;
}

void WindowConfig::validate() const {
  require(delta_min >= 1, ErrorKind::config, "window: delta_min must be >= 1");
  require(delta_min <= delta_max, ErrorKind::config, "window: delta_min > delta_max");
  require(delta0 >= delta_min && delta0 <= delta_max, ErrorKind::config,
          "window: delta0 outside [delta_min, delta_max]");
  require(delta_step >= 0, ErrorKind::config, "window: delta_step must be >= 0");
  require(eps_min >= 0.0 && eps_min <= eps_max, ErrorKind::config,
          "window: need 0 <= eps_min <= eps_max");
}

WindowState WindowState::from(const WindowConfig &c) {
  WindowState s;
  s.delta = c.delta0;
  s.delta_min = c.delta_min;
  s.delta_max = c.delta_max;
  s.delta_step = c.delta_step;
  s.eps_min = c.eps_min;
  s.eps_max = c.eps_max;
  return s;
}

WindowState window_update(WindowState state, double loss_rate) {
  const double rate = std::fabs(loss_rate);
  state.loss_rate = loss_rate;
  if (rate > state.eps_max)
    state.delta = std::min(state.delta + state.delta_step, state.delta_max);
  else if (rate < state.eps_min)
    state.delta = std::max(state.delta - state.delta_step, state.delta_min);
  return state;
}

Step reference_step(Step t, Step delta_prev, Step total_steps) {
  return std::min(t - 1 + delta_prev, total_steps);
}

LiveValEngine::LiveValEngine(const Dataset &ds, const Model &model, LiveValConfig config)
    : ds_(ds), model_(model), config_(config), window_(WindowState::from(config.window)),
      ledger_(ds.ids) {
  config_.window.validate();
  require(config_.total_steps >= 1, ErrorKind::config, "liveval: total_steps must be >= 1");
  deltas_.reserve(static_cast<std::size_t>(config_.total_steps) + 1);
  deltas_.push_back(config_.window.delta0);
}

void LiveValEngine::on_start(const ParamVector &theta0) {
  queue_.model[0] = QueueEntry{theta0, {}, 0.0, std::nullopt};
}

void LiveValEngine::value_pair(Step t_eval, Step t_ref, const ParamVector &theta_ref,
                               ValuationLedger &out) const {
  auto prev = queue_.model.find(t_eval - 1);
  auto eval = queue_.model.find(t_eval);
  if (prev == queue_.model.end() || eval == queue_.model.end())
    fail(ErrorKind::internal, "liveval: pair (" + std::to_string(t_eval) + ", " +
                                  std::to_string(t_ref) + ") references an evicted step");
  value_batch(ds_, model_, t_eval, t_ref, prev->second.theta, theta_ref,
              eval->second.batch, eval->second.lr, config_.denominator, out);
}

void LiveValEngine::on_step(const StepRecord &record, const ParamVector &theta_t) {
  const Step t = record.step;
  require(t == current_ + 1, ErrorKind::internal, "liveval: steps must arrive in order");
  require(t <= config_.total_steps, ErrorKind::internal, "liveval: step beyond total_steps");
  if (queue_.model.empty())
    on_start(record.params_before);
  current_ = t;
  const Step delta_prev = deltas_[static_cast<std::size_t>(t - 1)];

  queue_.model[t] = QueueEntry{theta_t, record.batch, record.lr, record.batch_loss};
  queue_.refs.emplace(t, reference_step(t, delta_prev, config_.total_steps));

  if (config_.loss_rate == LossRateMode::online) {
    auto prev = queue_.model.find(t - 1);
    if (prev != queue_.model.end() && prev->second.loss)
      window_ = window_update(window_, (record.batch_loss - *prev->second.loss) /
                                           static_cast<double>(delta_prev));
  }

  // Resolve pairs whose reference is this step, ascending t_eval.
  Step last_eval = 0;
  for (auto it = queue_.refs.begin(); it != queue_.refs.end();) {
    if (it->second == t) {
      value_pair(it->first, t, theta_t, ledger_);
      last_eval = it->first;
      it = queue_.refs.erase(it);
    } else {
      ++it;
    }
  }

  if (config_.loss_rate == LossRateMode::deferred && last_eval > 0) {
    auto base = queue_.model.find(last_eval - 1);
    if (base != queue_.model.end() && base->second.loss) {
      const Step d = deltas_[static_cast<std::size_t>(last_eval - 1)];
      window_ = window_update(window_, (record.batch_loss - *base->second.loss) /
                                           static_cast<double>(d));
    }
  }
  deltas_.push_back(window_.delta);

  while (!queue_.model.empty() && queue_.model.begin()->first < t - config_.window.delta_max)
    queue_.model.erase(queue_.model.begin());
  for (auto it = queue_.refs.begin(); it != queue_.refs.end();) {
    if (it->second < t)
      fail(ErrorKind::internal, "liveval: unresolved pair with past reference");
    ++it;
  }

  stats_.model_after_last = queue_.model.size();
  stats_.refs_after_last = queue_.refs.size();
  stats_.max_model = std::max(stats_.max_model, queue_.model.size());
  stats_.max_refs = std::max(stats_.max_refs, queue_.refs.size());
}

LiveValEngine::Snapshot LiveValEngine::provisional_snapshot() const {
  Snapshot snap;
  snap.ledger = ledger_;
  snap.step = current_;
  if (queue_.refs.empty() || queue_.model.empty())
    return snap;
  const ParamVector &latest = queue_.model.rbegin()->second.theta;
  for (const auto &[t_eval, t_ref] : queue_.refs)
    value_pair(t_eval, current_, latest, snap.ledger);
  snap.provisional = true;
  return snap;
}

ValuationLedger liveval_valuate(const Dataset &ds, const Model &model,
                                const TrainConfig &train, const LiveValConfig &config) {
  LiveValConfig c = config;
  c.total_steps = train.total_steps;
  LiveValEngine engine(ds, model, c);
  TrainingHook *hooks[] = {&engine};
  TrainOptions opts;
  opts.keep_records = false;
  run_training(ds, model, train, hooks, opts);
  return engine.ledger();
}

void write_step_values_csv(const ValuationLedger &ledger, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  out << "sample_id,step,value\n";
  for (const auto &v : ledger.step_values())
    out << v.id << ',' << v.step << ',' << format_double(v.value) << '\n';
  if (!out)
    fail(ErrorKind::io, "write failed: " + path.string());
}

void write_cumulative_csv(const ValuationLedger &ledger, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  out << "sample_id,cumulative\n";
  for (const auto &[id, v] : ledger.cumulative())
    out << id << ',' << format_double(v) << '\n';
  if (!out)
    fail(ErrorKind::io, "write failed: " + path.string());
}

} // namespace liveval
