#include "liveval/baselines.hpp"

#include <algorithm>
#include <thread>

#include "liveval/error.hpp"
#include "liveval/resources.hpp"

namespace liveval {

namespace {

std::vector<std::size_t> resolve_pool(const Dataset &ds, std::span<const SampleId> pool) {
  const auto index = ds.row_index();
  std::vector<std::size_t> rows;
  rows.reserve(pool.size());
  for (auto id : pool) {
    auto it = index.find(id);
    if (it == index.end())
      fail(ErrorKind::parameter, "pool sample " + std::to_string(id) + " not in dataset");
    rows.push_back(it->second);
  }
  return rows;
}

std::vector<std::size_t> all_rows(const Dataset &ds) {
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = i;
  return rows;
}

} // namespace

BaselineResult loo_value(const Dataset &ds, const Model &model, const TrainConfig &config,
                         std::span<const SampleId> pool, const LooOptions &opts) {
  const auto rows = resolve_pool(ds, pool);
  PeakRssSampler rss;
  Stopwatch clock;
  TrainOptions train_opts;
  train_opts.keep_records = false;

  const TrajectoryStore full = run_training(ds, model, config, {}, train_opts);
  const double full_loss = model.dataset_loss(full.final_params, ds);

  std::vector<double> losses(rows.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t k = begin; k < rows.size(); k += stride) {
      TrainOptions o = train_opts;
      o.excluded_row = rows[k];
      const TrajectoryStore without = run_training(ds, model, config, {}, o);
      losses[k] = model.dataset_loss(without.final_params, ds);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, rows.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < threads; ++w)
      workers.emplace_back([&, w] {
        try {
          work(w, threads);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto &th : workers)
      th.join();
    for (auto &e : errors)
      if (e)
        std::rethrow_exception(e);
  }

  BaselineResult result;
  result.method = "loo";
  for (std::size_t k = 0; k < rows.size(); ++k)
    result.values[pool[k]] = losses[k] - full_loss;
  result.stats["full_loss"] = full_loss;
  result.stats["retrainings"] = static_cast<double>(rows.size());
  result.wall_seconds = clock.seconds();
  result.peak_rss_bytes = rss.stop();
  return result;
}

BaselineResult if_value(const Dataset &ds, const Model &model,
                        std::span<const double> theta_star,
                        std::span<const SampleId> pool, const Dataset &test_set,
                        const IfOptions &opts) {
  require(opts.damping > 0.0, ErrorKind::parameter, "if_value: damping must be > 0");
  require(test_set.size() > 0, ErrorKind::parameter, "if_value: empty test batch");
  require(theta_star.size() == model.param_count(), ErrorKind::dimension,
          "if_value: parameter size mismatch");
  const auto rows = resolve_pool(ds, pool);
  PeakRssSampler rss;
  Stopwatch clock;

  const auto train_rows = all_rows(ds);
  const RealVector test_grad = model.batch_grad(theta_star, test_set, all_rows(test_set));
  auto apply = [&](std::span<const double> v) {
    return model.hessian_vector_product(theta_star, ds, train_rows, v);
  };
  const CgResult cg =
      conjugate_gradient(apply, test_grad, opts.damping, opts.tolerance, opts.max_iterations);

  BaselineResult result;
  result.method = "if";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const RealVector g = model.per_sample_grad(theta_star, ds, rows[k]);
    result.values[pool[k]] = -dot(cg.solution, g);
  }
  result.stats["damping"] = opts.damping;
  result.stats["cg_iterations"] = cg.iterations;
  result.stats["cg_relative_residual"] = cg.relative_residual;
  result.wall_seconds = clock.seconds();
  result.peak_rss_bytes = rss.stop();
  return result;
}

namespace {

class GradNormHook : public TrainingHook {
public:
  GradNormHook(const Dataset &ds, const Model &model, std::vector<std::size_t> rows,
               std::vector<Step> checkpoints)
      : ds_(ds), model_(model), rows_(std::move(rows)), checkpoints_(std::move(checkpoints)),
        sums_(rows_.size(), 0.0) {
    std::sort(checkpoints_.begin(), checkpoints_.end());
    checkpoints_.erase(std::unique(checkpoints_.begin(), checkpoints_.end()), checkpoints_.end());
  }

  void on_step(const StepRecord &record, const ParamVector &theta_t) override {
    if (!std::binary_search(checkpoints_.begin(), checkpoints_.end(), record.step))
      return;
    RealVector g(model_.param_count());
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      model_.loss_and_grad(theta_t, ds_.x(rows_[k]), Model::target_of(ds_, rows_[k]), g);
      sums_[k] += norm2(g);
    }
    ++seen_;
  }

  std::size_t seen() const noexcept { return seen_; }
  const std::vector<double> &sums() const noexcept { return sums_; }

private:
  const Dataset &ds_;
  const Model &model_;
  std::vector<std::size_t> rows_;
  std::vector<Step> checkpoints_;
  std::vector<double> sums_;
  std::size_t seen_ = 0;
};

} // namespace

BaselineResult gradnd_value(const Dataset &ds, const Model &model, const TrainConfig &config,
                            std::span<const SampleId> pool, const GradNdOptions &opts) {
  auto rows = resolve_pool(ds, pool);
  PeakRssSampler rss;
  Stopwatch clock;

  std::vector<Step> checkpoints = opts.checkpoints;
  if (checkpoints.empty()) {
    const Step spe = std::min(steps_per_epoch(ds.size(), config.batch_size), config.total_steps);
    for (Step t = 1; t <= spe; ++t)
      checkpoints.push_back(t);
  }
  for (auto t : checkpoints)
    require(t >= 1 && t <= config.total_steps, ErrorKind::parameter,
            "gradnd: checkpoint step out of range");

  GradNormHook hook(ds, model, rows, checkpoints);
  TrainingHook *hooks[] = {&hook};
  TrainOptions train_opts;
  train_opts.keep_records = false;
  TrainConfig run = config;
  run.total_steps = *std::max_element(checkpoints.begin(), checkpoints.end());
  run_training(ds, model, run, hooks, train_opts);

  BaselineResult result;
  result.method = "gradnd";
  const double n = static_cast<double>(hook.seen());
  for (std::size_t k = 0; k < rows.size(); ++k)
    result.values[pool[k]] = hook.sums()[k] / n;
  result.stats["checkpoints"] = n;
  result.wall_seconds = clock.seconds();
  result.peak_rss_bytes = rss.stop();
  return result;
}

} // namespace liveval
