#include "liveval/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "liveval/error.hpp"

namespace liveval {

double LrSchedule::at(Step t) const {
  if (kind == Kind::constant)
    return eta;
  const Step decays = (t - 1) / every;
  return eta * std::pow(factor, static_cast<double>(decays));
}

const char *to_string(ShuffleMode mode) noexcept {
  return mode == ShuffleMode::with_replacement ? "with-replacement" : "epoch-permutation";
}

ShuffleMode shuffle_mode_from_string(const std::string &s) {
  if (s == "with-replacement")
    return ShuffleMode::with_replacement;
  if (s == "epoch-permutation")
    return ShuffleMode::epoch_permutation;
  fail(ErrorKind::config, "unknown shuffle mode '" + s + "'");
}

void TrainConfig::validate() const {
  require(total_steps >= 1, ErrorKind::config, "train: total_steps must be >= 1");
  require(batch_size >= 1, ErrorKind::config, "train: batch_size must be >= 1");
  require(lr.eta > 0.0 && std::isfinite(lr.eta), ErrorKind::config, "train: lr must be > 0");
  if (lr.kind == LrSchedule::Kind::step_decay) {
    require(lr.factor > 0.0 && lr.factor <= 1.0, ErrorKind::config,
            "train: decay factor must be in (0, 1]");
    require(lr.every >= 1, ErrorKind::config, "train: decay interval must be >= 1");
  }
}

Step steps_per_epoch(std::size_t n, std::size_t batch_size) {
  require(batch_size >= 1 && n >= 1, ErrorKind::parameter, "steps_per_epoch: empty input");
  return static_cast<Step>((n + batch_size - 1) / batch_size);
}

const StepRecord &TrajectoryStore::at(Step t) const {
  if (t < 1 || t > steps() || records[static_cast<std::size_t>(t - 1)].step != t)
    fail(ErrorKind::store, "trajectory: missing record for step " + std::to_string(t));
  return records[static_cast<std::size_t>(t - 1)];
}

bool TrajectoryStore::complete(Step total_steps) const {
  if (steps() != total_steps || final_params.empty())
    return false;
  for (Step t = 1; t <= total_steps; ++t)
    if (records[static_cast<std::size_t>(t - 1)].step != t)
      return false;
  return true;
}

ParamVector sgd_step(const Model &model, std::span<const double> params,
                     const Dataset &ds, std::span<const std::size_t> batch, double lr) {
  const RealVector g = model.batch_grad(params, ds, batch);
  ParamVector next = axpy(-lr, g, params);
  if (!all_finite(next))
    fail(ErrorKind::numeric, "sgd_step: non-finite parameters");
  return next;
}

std::vector<std::size_t> sample_batch(RngState state, std::size_t n, std::size_t batch_size,
                                      Step t, ShuffleMode mode,
                                      std::optional<std::size_t> excluded) {
  require(batch_size >= 1 && batch_size <= n, ErrorKind::parameter,
          "sample_batch: need 1 <= B <= N");
  require(t >= 1, ErrorKind::parameter, "sample_batch: step must be >= 1");
  const bool has_excluded = excluded && *excluded < n;
  require(!has_excluded || n >= 2, ErrorKind::parameter,
          "sample_batch: cannot exclude the only sample");
  const Rng base(state);
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);

  if (mode == ShuffleMode::with_replacement) {
    Rng rng = base.split(static_cast<std::uint64_t>(t));
    while (batch.size() < batch_size) {
      const auto r = static_cast<std::size_t>(rng.below(n));
      if (has_excluded && r == *excluded)
        continue;
      batch.push_back(r);
    }
    return batch;
  }

  const Step spe = steps_per_epoch(n, batch_size);
  const auto epoch = static_cast<std::uint64_t>((t - 1) / spe);
  const auto slot = static_cast<std::size_t>((t - 1) % spe);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i)
    perm[i] = i;
  Rng rng = base.split(0x65706f6368ULL ^ (epoch << 8));
  rng.shuffle(perm);

  const std::size_t begin = slot * batch_size;
  const std::size_t end = std::min(begin + batch_size, n);
  bool dropped = false;
  for (std::size_t k = begin; k < end; ++k) {
    if (has_excluded && perm[k] == *excluded) {
      dropped = true;
      continue;
    }
    batch.push_back(perm[k]);
  }
  if (dropped) {
    const std::size_t want = std::min(end - begin, n - 1);
    for (std::size_t step = 0; step < n && batch.size() < want; ++step) {
      const std::size_t cand = perm[(end + step) % n];
      if (cand == *excluded)
        continue;
      if (std::find(batch.begin(), batch.end(), cand) != batch.end())
        continue;
      batch.push_back(cand);
    }
  }
  return batch;
}

TrajectoryStore run_training(const Dataset &ds, const Model &model,
                             const TrainConfig &config,
                             std::span<TrainingHook *const> hooks,
                             const TrainOptions &options) {
  config.validate();
  require(ds.size() > 0, ErrorKind::parameter, "run_training: empty dataset");
  require(ds.dim() == model.spec().input_dim(), ErrorKind::dimension,
          "run_training: dataset width does not match model input");
  const std::size_t available = ds.size() - (options.excluded_row ? 1 : 0);
  require(config.batch_size <= ds.size(), ErrorKind::config,
          "run_training: batch_size exceeds dataset size");
  require(available >= 1, ErrorKind::parameter, "run_training: no samples to train on");

  TrajectoryStore store;
  ParamVector theta = options.initial_params ? *options.initial_params
                                             : model.init_params(config.init_rng);
  require(theta.size() == model.spec().param_count(), ErrorKind::dimension,
          "initial parameter vector has wrong length");
  store.initial_params = theta;
  for (auto *hook : hooks)
    hook->on_start(theta);

  StepRecord record;
  for (Step t = 1; t <= config.total_steps; ++t) {
    record.step = t;
    record.lr = config.lr.at(t);
    record.batch = sample_batch(config.rng, ds.size(), config.batch_size, t,
                                config.shuffle, options.excluded_row);
    ParamVector next = sgd_step(model, theta, ds, record.batch, record.lr);
    record.batch_loss = model.batch_loss(next, ds, record.batch);
    record.params_before = std::move(theta);
    theta = std::move(next);
    for (auto *hook : hooks) {
      try {
        hook->on_step(record, theta);
      } catch (const Error &e) {
        throw Error(e.kind(), "hook failed at step " + std::to_string(t) + ": " + e.what());
      } catch (const std::exception &e) {
        fail(ErrorKind::internal, "hook failed at step " + std::to_string(t) + ": " + e.what());
      }
    }
    if (options.keep_records)
      store.records.push_back(record);
  }
  store.final_params = std::move(theta);
  return store;
}

void save_checkpoints(const TrajectoryStore &store, const ModelSpec &spec,
                      const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "steps", ec);
  if (ec)
    fail(ErrorKind::io, "cannot create " + (dir / "steps").string() + ": " + ec.message());
  {
    std::ofstream out(dir / "model.json");
    if (!out)
      fail(ErrorKind::io, "cannot write " + (dir / "model.json").string());
    out << model_spec_json(spec) << '\n';
  }
  for (const auto &rec : store.records) {
    const auto stem = dir / "steps" / std::to_string(rec.step);
    save_params(rec.params_before, stem.string() + ".bin");
    nlohmann::ordered_json j;
    j["step"] = rec.step;
    j["lr"] = rec.lr;
    j["batch"] = rec.batch;
    j["loss"] = rec.batch_loss;
    std::ofstream out(stem.string() + ".json");
    if (!out)
      fail(ErrorKind::io, "cannot write " + stem.string() + ".json");
    out << j.dump() << '\n';
  }
  save_params(store.final_params, dir / "final.bin");
}

TrajectoryStore load_checkpoints(const std::filesystem::path &dir, ModelSpec *spec) {
  if (spec) {
    std::ifstream in(dir / "model.json");
    if (!in)
      fail(ErrorKind::io, "cannot open " + (dir / "model.json").string());
    std::stringstream ss;
    ss << in.rdbuf();
    *spec = parse_model_spec(ss.str());
  }
  TrajectoryStore store;
  for (Step t = 1;; ++t) {
    const auto stem = dir / "steps" / std::to_string(t);
    if (!std::filesystem::exists(stem.string() + ".bin"))
      break;
    StepRecord rec;
    rec.params_before = load_params(stem.string() + ".bin");
    std::ifstream in(stem.string() + ".json");
    if (!in)
      fail(ErrorKind::store, "checkpoint: missing " + stem.string() + ".json");
    try {
      const auto j = nlohmann::json::parse(in);
      rec.step = j.at("step").get<Step>();
      rec.lr = j.at("lr").get<double>();
      rec.batch = j.at("batch").get<std::vector<std::size_t>>();
      rec.batch_loss = j.at("loss").get<double>();
    } catch (const nlohmann::json::exception &e) {
      fail(ErrorKind::format, "checkpoint " + stem.string() + ".json: " + e.what());
    }
    if (rec.step != t)
      fail(ErrorKind::store, "checkpoint: step mismatch in " + stem.string() + ".json");
    store.records.push_back(std::move(rec));
  }
  std::size_t on_disk = 0;
  std::error_code ec;
  for (const auto &entry : std::filesystem::directory_iterator(dir / "steps", ec))
    on_disk += entry.path().extension() == ".bin";
  if (ec)
    fail(ErrorKind::io, "cannot list " + (dir / "steps").string() + ": " + ec.message());
  if (on_disk != store.records.size())
    fail(ErrorKind::store, "checkpoint: step " + std::to_string(store.records.size() + 1) +
                               " missing from " + (dir / "steps").string());
  if (!store.records.empty())
    store.initial_params = store.records.front().params_before;
  store.final_params = load_params(dir / "final.bin");
  return store;
}

} // namespace liveval
