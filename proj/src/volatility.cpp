#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "liveval/error.hpp"
#include "liveval/valuation.hpp"

namespace liveval {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
      ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::dimension, "spearman: length mismatch");
  if (x.size() < 2)
    return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

VolatilityReport volatility_probe(const Dataset &ds, const Model &model,
                                  const VolatilityConfig &config) {
  require(config.seeds.size() >= 8, ErrorKind::parameter,
          "volatility_probe: need at least eight seeds");
  const Step total = config.train.total_steps;

  // (id, t) -> one value per run that batched the sample at t.
  std::map<std::pair<SampleId, Step>, std::vector<double>> observed;
  std::vector<double> min_delta(static_cast<std::size_t>(total),
                                std::numeric_limits<double>::infinity());
  double max_grad = 0.0;

  for (const auto &seed : config.seeds) {
    TrainConfig train = config.train;
    train.rng = seed;
    const ValuationLedger ledger = liveval_valuate(ds, model, train, config.valuation);
    std::map<std::pair<SampleId, Step>, bool> seen;
    for (const auto &v : ledger.step_values()) {
      auto &md = min_delta[static_cast<std::size_t>(v.step - 1)];
      md = std::min(md, v.delta_norm);
      max_grad = std::max(max_grad, v.grad_norm);
      const auto key = std::make_pair(v.id, v.step);
      // A duplicate inside one batch carries the identical value.
      if (seen.emplace(key, true).second)
        observed[key].push_back(v.value);
    }
  }

  VolatilityReport report;
  report.max_grad_norm = max_grad;
  report.max_stddev_per_step.assign(static_cast<std::size_t>(total),
                                    std::numeric_limits<double>::quiet_NaN());
  for (const auto &[key, values] : observed) {
    if (values.size() < 2) {
      ++report.skipped_pairs;
      continue;
    }
    // Welford: identical observations give exactly zero spread.
    double mean = 0.0, ss = 0.0, n = 0.0;
    for (double v : values) {
      n += 1.0;
      const double d = v - mean;
      mean += d / n;
      ss += d * (v - mean);
    }
    VolatilityEntry e;
    e.id = key.first;
    e.step = key.second;
    e.observations = values.size();
    e.stddev = std::sqrt(ss / (n - 1.0));
    const double lr = config.train.lr.at(e.step);
    const double dmin = min_delta[static_cast<std::size_t>(e.step - 1)];
    const double ratio = dmin > 0.0 ? lr * max_grad / dmin
                                    : std::numeric_limits<double>::infinity();
    e.bound = 2.0 * ratio;
    e.proof_bound = ratio;
    if (e.stddev > e.bound)
      ++report.violations;
    if (e.stddev > e.proof_bound)
      ++report.proof_bound_violations;
    auto &slot = report.max_stddev_per_step[static_cast<std::size_t>(e.step - 1)];
    slot = std::isnan(slot) ? e.stddev : std::max(slot, e.stddev);
    report.entries.push_back(e);
  }

  std::vector<double> steps, maxima;
  for (std::size_t i = 0; i < report.max_stddev_per_step.size(); ++i) {
    if (std::isnan(report.max_stddev_per_step[i]))
      continue;
    steps.push_back(static_cast<double>(i + 1));
    maxima.push_back(report.max_stddev_per_step[i]);
  }
  report.spearman_step_vs_max_stddev = spearman(steps, maxima);
  return report;
}

} // namespace liveval
