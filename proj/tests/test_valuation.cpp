#include <doctest.h>

#include <cmath>
#include <map>
#include <thread>

#include "liveval/valuation.hpp"
#include "support.hpp"

using namespace liveval;
using testing::throws_kind;

namespace {

const ModelSpec kScalar{{1, 1}, LossKind::mse, false};

Dataset scalar_data() { return testing::scalar_regression({1.0, -0.5, 2.0}, {0.8, -0.2, 1.0}); }

// Full-batch training of the scalar model from w0 = 0.3 at lr 0.1.
TrainConfig scalar_config(Step steps) {
  TrainConfig cfg;
  cfg.total_steps = steps;
  cfg.batch_size = 3;
  cfg.lr.eta = 0.1;
  return cfg;
}

TrainOptions from_w0() {
  TrainOptions o;
  o.initial_params = ParamVector{0.3};
  return o;
}

using Keyed = std::map<std::pair<Step, SampleId>, double>;

Keyed by_step_and_id(const ValuationLedger &ledger) {
  Keyed out;
  for (const auto &v : ledger.step_values())
    out[{v.step, v.id}] = v.value;
  return out;
}

void check_conservation(const ValuationLedger &ledger) {
  std::map<SampleId, double> sums;
  for (const auto &v : ledger.step_values())
    sums[v.id] += v.value;
  for (const auto &[id, total] : ledger.cumulative()) {
    const auto it = sums.find(id);
    CHECK(std::abs((it == sums.end() ? 0.0 : it->second) - total) < 1e-12);
  }
}

struct QueueWatch : TrainingHook {
  const LiveValEngine *engine = nullptr;
  std::size_t max_model = 0, max_refs = 0;
  void on_step(const StepRecord &, const ParamVector &) override {
    max_model = std::max(max_model, engine->queue().model.size());
    max_refs = std::max(max_refs, engine->queue().refs.size());
    for (const auto &[te, tr] : engine->queue().refs) {
      CHECK(te <= tr);
      CHECK(tr <= engine->current_step() + engine->window().delta_max);
    }
  }
};

} // namespace

TEST_CASE("step_value examples") {
  CHECK(step_value(5, 3) == 0.25);
  CHECK(step_value(2.5, 2.5) == 0.0);
  CHECK(step_value(4, 0) == 1.0);
  CHECK(step_value(0, 4) == -1.0);
  CHECK(step_value(0, 0) == 0.0);
  CHECK(step_value(4, 2, Denominator::delta_only) == 0.5);
  CHECK(step_value(1, 3, Denominator::delta_only) == -2.0);
  CHECK(step_value(0, 0, Denominator::delta_only) == 0.0);
  CHECK(throws_kind(ErrorKind::parameter, [] { step_value(-1, 1); }));
  CHECK(throws_kind(ErrorKind::parameter, [] { step_value(1, -1e-300); }));
}

TEST_CASE("step_value antisymmetry and bounds") {
  Rng rng(1, streams::fuzz);
  for (int i = 0; i < 5000; ++i) {
    const double a = std::pow(10.0, rng.uniform(-8, 8)) * rng.uniform();
    const double b = std::pow(10.0, rng.uniform(-8, 8)) * rng.uniform();
    const double v = step_value(a, b);
    CHECK(v == -step_value(b, a));
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("hypothetical_state") {
  const RealVector ref{5, 4}, prev{1, 1};
  const RealVector zero{0, 0};
  CHECK(hypothetical_state(ref, prev, 0.5, zero) == subtract(ref, prev));
  const RealVector g{8, 0};
  CHECK(hypothetical_state(ref, prev, 0.5, g) == RealVector{8, 3});
  // ref - prev = (4, 3) and the sample's own update -lr * grad = (4, 0)
  // leave u = (0, 3).
  const RealVector toward{-8, 0};
  const auto u2 = hypothetical_state(ref, prev, 0.5, toward);
  CHECK(u2 == RealVector{0, 3});
  CHECK(step_value(norm2(subtract(ref, prev)), norm2(u2)) == 0.25);
  CHECK(throws_kind(ErrorKind::dimension, [&] {
    hypothetical_state(ref, RealVector{1}, 0.5, g);
  }));
}

TEST_CASE("reverse triangle bound on |u| - |dtheta|") {
  Rng rng(2, streams::fuzz);
  for (int i = 0; i < 2000; ++i) {
    RealVector ref(5), prev(5), g(5);
    for (std::size_t k = 0; k < 5; ++k) {
      ref[k] = rng.normal();
      prev[k] = rng.normal();
      g[k] = rng.normal() * 10;
    }
    const double lr = rng.uniform(1e-4, 1);
    const auto u = hypothetical_state(ref, prev, lr, g);
    const double gap = std::abs(norm2(u) - norm2(subtract(ref, prev)));
    CHECK(gap <= lr * norm2(g) * (1 + 1e-12));
  }
}

TEST_CASE("window_update and reference_step") {
  WindowState s;
  s.delta = 5;
  s.delta_step = 1;
  s.delta_min = 1;
  s.delta_max = 10;
  s.eps_min = 0.005;
  s.eps_max = 0.05;
  CHECK(window_update(s, 0.2).delta == 6);
  CHECK(window_update(s, -0.2).delta == 6);
  CHECK(window_update(s, 0.01).delta == 5);
  CHECK(window_update(s, 0.001).delta == 4);
  auto capped = s;
  capped.delta = 10;
  CHECK(window_update(capped, 1.0).delta == 10);
  auto floored = s;
  floored.delta = 1;
  CHECK(window_update(floored, 0.0).delta == 1);

  CHECK(reference_step(1, 5, 100) == 5);
  CHECK(reference_step(98, 5, 100) == 100);
  CHECK(reference_step(100, 1, 100) == 100);
  CHECK(reference_step(100, 30, 100) == 100);
}

TEST_CASE("window config validation") {
  WindowConfig c;
  c.validate();
  auto bad = c;
  bad.delta_min = 0;
  CHECK(throws_kind(ErrorKind::config, [&] { bad.validate(); }));
  bad = c;
  bad.delta0 = 60;
  CHECK(throws_kind(ErrorKind::config, [&] { bad.validate(); }));
  bad = c;
  bad.eps_min = 0.1;
  CHECK(throws_kind(ErrorKind::config, [&] { bad.validate(); }));
}

TEST_CASE("basic valuation on the scalar model matches the unrolled trajectory") {
  const auto ds = scalar_data();
  Model model(kScalar);
  const auto store = run_training(ds, model, scalar_config(3), {}, from_w0());
  CHECK(store.final_params[0] == doctest::Approx(0.4106651041666667).epsilon(1e-14));
  const auto got = by_step_and_id(basic_valuate(store, ds, model));
  const Keyed expected{
      {{1, 0}, 0.29183411662420866}, {{1, 1}, 0.011424382488325717},
      {{1, 2}, 0.5660502517007303},  {{2, 0}, 0.5214676406449235},
      {{2, 1}, 0.010606552316423419}, {{2, 2}, 0.8821144802983626},
      {{3, 0}, 0.43353534350007517}, {{3, 1}, 0.008130791332978154},
      {{3, 2}, 0.25887715930902055},
  };
  REQUIRE(got.size() == expected.size());
  for (const auto &[key, value] : expected)
    CHECK(std::abs(got.at(key) - value) < 1e-12);
}

TEST_CASE("one-step window on the scalar model matches the unrolled trajectory") {
  const auto ds = scalar_data();
  Model model(kScalar);
  LiveValConfig cfg;
  cfg.window = {1, 1, 1, 1, 0.005, 0.05};
  cfg.total_steps = 3;
  LiveValEngine engine(ds, model, cfg);
  TrainingHook *hooks[] = {&engine};
  run_training(ds, model, scalar_config(3), hooks, from_w0());
  const auto got = by_step_and_id(engine.ledger());
  const Keyed expected{
      {{1, 0}, 0.7666666666666679},  {{1, 1}, 0.02912621359223302},
      {{1, 2}, 0.10416666666666698}, {{2, 0}, 0.5987202925045698},
      {{2, 1}, 0.019527834450597272}, {{2, 2}, 0.16911764705882357},
      {{3, 0}, 0.43353534350007517}, {{3, 1}, 0.008130791332978154},
      {{3, 2}, 0.25887715930902055},
  };
  REQUIRE(got.size() == expected.size());
  for (const auto &[key, value] : expected)
    CHECK(std::abs(got.at(key) - value) < 1e-12);
  for (const auto &v : engine.ledger().step_values())
    CHECK(v.ref_step == v.step);
}

TEST_CASE("basic valuation edge cases") {
  Model model(kScalar);
  SUBCASE("single step landing on the final params has value 1") {
    const auto ds = testing::scalar_regression({1.0}, {2.0});
    const auto store = run_training(ds, model, [] {
      auto c = scalar_config(1);
      c.batch_size = 1;
      return c;
    }(), {}, from_w0());
    const auto ledger = basic_valuate(store, ds, model);
    CHECK(ledger.cumulative(0) == 1.0);
  }
  SUBCASE("never batched samples stay at zero") {
    const auto ds = testing::scalar_regression({1.0, 2.0, 3.0, 4.0}, {1, 1, 1, 1});
    auto cfg = scalar_config(1);
    cfg.batch_size = 2;
    const auto store = run_training(ds, model, cfg, {}, from_w0());
    const auto ledger = basic_valuate(store, ds, model);
    std::size_t zero = 0;
    for (const auto &[id, v] : ledger.cumulative())
      zero += v == 0.0;
    CHECK(ledger.cumulative().size() == 4);
    CHECK(zero >= 2);
    CHECK(ledger.step_values().size() == 2);
  }
  SUBCASE("zero-gradient sample gets zero at every step") {
    // Sample 1 has x = 0, so its gradient vanishes everywhere.
    const auto ds = testing::scalar_regression({1.0, 0.0, 2.0}, {0.5, 0.3, 1.5});
    const auto store = run_training(ds, model, scalar_config(5), {}, from_w0());
    for (const auto &v : basic_valuate(store, ds, model).step_values())
      if (v.id == 1)
        CHECK(v.value == 0.0);
  }
  SUBCASE("incomplete store") {
    const auto ds = scalar_data();
    auto store = run_training(ds, model, scalar_config(3), {}, from_w0());
    store.records.erase(store.records.begin() + 1);
    CHECK(throws_kind(ErrorKind::store, [&] { basic_valuate(store, ds, model); }));
  }
}

TEST_CASE("liveval with a window covering T equals basic valuation") {
  const auto ds = synth_gaussian_blobs({5, streams::data}, {40, 2, 6, 3.0, 1.0});
  Model model({{6, 5, 2}});
  TrainConfig train;
  train.total_steps = 30;
  train.batch_size = 10;
  LiveValConfig cfg;
  cfg.window = {40, 40, 40, 1, 0.005, 0.05};
  cfg.total_steps = 30;
  LiveValEngine engine(ds, model, cfg);
  TrainingHook *hooks[] = {&engine};
  const auto store = run_training(ds, model, train, hooks);
  const auto basic = basic_valuate(store, ds, model);
  const auto &a = engine.ledger().step_values();
  const auto &b = basic.step_values();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].step == b[i].step);
    CHECK(std::abs(a[i].value - b[i].value) <= 1e-10);
  }
}

TEST_CASE("adaptive window keeps queues bounded and drains") {
  const auto ds = synth_gaussian_blobs({6, streams::data}, {50, 2, 6, 3.0, 1.0});
  Model model({{6, 5, 2}});
  TrainConfig train;
  train.total_steps = 120;
  train.batch_size = 10;
  for (auto mode : {LossRateMode::online, LossRateMode::deferred}) {
    LiveValConfig cfg;
    cfg.window = {5, 1, 8, 1, 0.005, 0.05};
    cfg.loss_rate = mode;
    cfg.total_steps = train.total_steps;
    LiveValEngine engine(ds, model, cfg);
    QueueWatch watch;
    watch.engine = &engine;
    TrainingHook *hooks[] = {&engine, &watch};
    const auto store = run_training(ds, model, train, hooks);
    CHECK(watch.max_model <= 9);
    CHECK(watch.max_refs <= 8);
    CHECK(engine.queue().refs.empty());
    CHECK(engine.queue_stats().max_model == watch.max_model);
    CHECK(engine.deltas().size() == 121);
    for (Step d : engine.deltas()) {
      CHECK(d >= 1);
      CHECK(d <= 8);
    }
    // One value per batched occurrence.
    std::size_t occurrences = 0;
    for (const auto &r : store.records)
      occurrences += r.batch.size();
    CHECK(engine.ledger().step_values().size() == occurrences);
    check_conservation(engine.ledger());
    for (const auto &v : engine.ledger().step_values()) {
      CHECK(v.value >= -1.0);
      CHECK(v.value <= 1.0);
      CHECK(v.ref_step >= v.step);
      CHECK(v.ref_step <= train.total_steps);
    }
  }
}

TEST_CASE("window actually moves on a real loss curve") {
  const auto ds = synth_gaussian_blobs({6, streams::data}, {50, 2, 6, 3.0, 1.0});
  Model model({{6, 5, 2}});
  TrainConfig train;
  train.total_steps = 100;
  train.batch_size = 10;
  LiveValConfig cfg;
  cfg.total_steps = 100;
  LiveValEngine engine(ds, model, cfg);
  TrainingHook *hooks[] = {&engine};
  run_training(ds, model, train, hooks);
  const auto [lo, hi] = std::minmax_element(engine.deltas().begin(), engine.deltas().end());
  CHECK(*lo < *hi);
}

TEST_CASE("engine rejects out of order steps") {
  const auto ds = scalar_data();
  Model model(kScalar);
  LiveValConfig cfg;
  cfg.total_steps = 5;
  LiveValEngine engine(ds, model, cfg);
  StepRecord rec;
  rec.step = 2;
  rec.params_before = {0.1};
  rec.batch = {0};
  rec.lr = 0.1;
  CHECK(throws_kind(ErrorKind::internal, [&] { engine.on_step(rec, ParamVector{0.2}); }));
}

TEST_CASE("provisional snapshot resolves pending pairs against the latest params") {
  const auto ds = synth_gaussian_blobs({8, streams::data}, {30, 2, 4, 3.0, 1.0});
  Model model({{4, 2}});
  TrainConfig train;
  train.total_steps = 20;
  train.batch_size = 10;
  LiveValConfig cfg;
  cfg.window = {10, 10, 10, 1, 0.005, 0.05};
  cfg.total_steps = 20;
  LiveValEngine engine(ds, model, cfg);
  struct Probe : TrainingHook {
    LiveValEngine *engine;
    std::size_t checked = 0;
    void on_step(const StepRecord &rec, const ParamVector &) override {
      if (rec.step != 6)
        return;
      const auto snap = engine->provisional_snapshot();
      CHECK(snap.provisional);
      CHECK(snap.step == 6);
      // Nothing resolved yet; every batched sample of steps 1..6 is valued.
      CHECK(engine->ledger().step_values().empty());
      CHECK(snap.ledger.step_values().size() == 60);
      checked = 1;
    }
  } probe;
  probe.engine = &engine;
  TrainingHook *hooks[] = {&engine, &probe};
  run_training(ds, model, train, hooks);
  CHECK(probe.checked == 1);
  CHECK_FALSE(engine.provisional_snapshot().provisional);
}

TEST_CASE("ledger snapshots are safe under a concurrent writer") {
  std::vector<SampleId> ids{1, 2, 3};
  ValuationLedger ledger(ids);
  std::thread writer([&] {
    for (int i = 0; i < 20000; ++i)
      ledger.append({static_cast<SampleId>(1 + i % 3), i + 1, i + 1, 0.001, 1, 1});
  });
  for (int i = 0; i < 200; ++i) {
    const auto snap = ledger.snapshot();
    double sum = 0;
    for (const auto &v : snap.step_values())
      sum += v.value;
    double cum = 0;
    for (const auto &[id, v] : snap.cumulative())
      cum += v;
    CHECK(std::abs(sum - cum) < 1e-9);
  }
  writer.join();
  CHECK(ledger.step_values().size() == 20000);
  CHECK(ledger.cumulative(99) == 0.0);
}

TEST_CASE("delta-only denominator") {
  const auto ds = scalar_data();
  Model model(kScalar);
  const auto store = run_training(ds, model, scalar_config(3), {}, from_w0());
  const auto sym = basic_valuate(store, ds, model, Denominator::symmetric);
  const auto del = basic_valuate(store, ds, model, Denominator::delta_only);
  REQUIRE(sym.step_values().size() == del.step_values().size());
  for (std::size_t i = 0; i < sym.step_values().size(); ++i) {
    const auto &s = sym.step_values()[i];
    const auto &d = del.step_values()[i];
    const double u = std::abs(d.delta_norm * (1 - d.value));
    CHECK(std::abs(s.value - step_value(s.delta_norm, u)) < 1e-12);
  }
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 6, 8, 100};
  const std::vector<double> down{5, 4, 3, 2, 1};
  CHECK(spearman(x, up) == doctest::Approx(1.0));
  CHECK(spearman(x, down) == doctest::Approx(-1.0));
  // Ties get average ranks: ranks of y are 1.5, 1.5, 3, 4, 5.
  const std::vector<double> tied{1, 1, 2, 3, 4};
  CHECK(spearman(x, tied) == doctest::Approx(0.9746794344808964));
  CHECK(throws_kind(ErrorKind::dimension, [&] { spearman(x, std::vector<double>{1}); }));
}

TEST_CASE("volatility probe") {
  const auto ds = synth_gaussian_blobs({9, streams::data}, {20, 2, 4, 3.0, 1.0});
  Model model({{4, 4, 2}});
  VolatilityConfig cfg;
  cfg.train.total_steps = 20;
  cfg.train.batch_size = 8;
  cfg.train.shuffle = ShuffleMode::with_replacement;
  cfg.valuation.window = {5, 5, 5, 1, 0.005, 0.05};

  SUBCASE("repeated seed gives zero spread") {
    cfg.seeds.assign(8, RngState{3, streams::batch});
    const auto rep = volatility_probe(ds, model, cfg);
    CHECK_FALSE(rep.entries.empty());
    for (const auto &e : rep.entries) {
      CHECK(e.stddev == 0.0);
      CHECK(e.bound >= 0.0);
      CHECK(e.observations >= 8);
    }
    CHECK(rep.violations == 0);
  }
  SUBCASE("distinct seeds stay within the bound") {
    for (std::uint64_t s = 0; s < 8; ++s)
      cfg.seeds.push_back({100 + s, streams::batch});
    const auto rep = volatility_probe(ds, model, cfg);
    CHECK(rep.entries.size() > 0);
    CHECK(rep.max_grad_norm > 0.0);
    CHECK(rep.violations == 0);
    for (const auto &e : rep.entries) {
      CHECK(e.observations >= 2);
      CHECK(e.bound == doctest::Approx(2 * e.proof_bound));
    }
  }
  SUBCASE("too few seeds") {
    cfg.seeds.assign(7, RngState{3, streams::batch});
    CHECK(throws_kind(ErrorKind::parameter, [&] { volatility_probe(ds, model, cfg); }));
  }
}

TEST_CASE("ledger csv export") {
  std::vector<SampleId> ids{4, 9};
  ValuationLedger ledger(ids);
  ledger.append({9, 1, 3, 0.1, 1, 1});
  ledger.append({4, 2, 3, -0.25, 1, 1});
  ledger.append({9, 2, 3, 0.2, 1, 1});
  testing::TempDir dir("ledger");
  write_step_values_csv(ledger, dir / "s.csv");
  write_cumulative_csv(ledger, dir / "c.csv");
  CHECK(testing::read_file(dir / "s.csv") == "sample_id,step,value\n9,1,0.1\n4,2,-0.25\n9,2,0.2\n");
  CHECK(testing::read_file(dir / "c.csv") == "sample_id,cumulative\n4,-0.25\n9,0.30000000000000004\n");
  CHECK(throws_kind(ErrorKind::io, [&] { write_cumulative_csv(ledger, dir / "no/such/c.csv"); }));
}
