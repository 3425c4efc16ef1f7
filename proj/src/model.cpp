#include "liveval/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "liveval/error.hpp"

namespace liveval {

const char *to_string(LossKind kind) noexcept {
  return kind == LossKind::cross_entropy ? "cross-entropy" : "mse";
}

LossKind loss_kind_from_string(const std::string &s) {
  if (s == "cross-entropy")
    return LossKind::cross_entropy;
  if (s == "mse")
    return LossKind::mse;
  fail(ErrorKind::config, "unknown loss '" + s + "'");
}

std::size_t ModelSpec::param_count() const {
  std::size_t d = 0;
  for (std::size_t l = 1; l < widths.size(); ++l)
    d += widths[l - 1] * widths[l] + (bias ? widths[l] : 0);
  return d;
}

void ModelSpec::validate() const {
  require(widths.size() >= 2, ErrorKind::parameter,
          "model: need at least input and output widths");
  for (auto w : widths)
    require(w > 0, ErrorKind::parameter, "model: layer widths must be positive");
}

std::string model_spec_json(const ModelSpec &spec) {
  nlohmann::ordered_json j;
  j["widths"] = spec.widths;
  j["activation"] = "relu";
  j["loss"] = to_string(spec.loss);
  j["bias"] = spec.bias;
  j["init"] = "seeded-uniform-fan-in";
  return j.dump(2);
}

ModelSpec parse_model_spec(const std::string &text) {
  ModelSpec spec;
  try {
    const auto j = nlohmann::json::parse(text);
    spec.widths = j.at("widths").get<std::vector<std::size_t>>();
    spec.loss = loss_kind_from_string(j.value("loss", std::string("cross-entropy")));
    spec.bias = j.value("bias", true);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::format, std::string("model spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t off = 0;
  for (std::size_t l = 1; l < spec_.widths.size(); ++l) {
    offsets_.push_back(off);
    off += spec_.widths[l - 1] * spec_.widths[l] + (spec_.bias ? spec_.widths[l] : 0);
  }
  param_count_ = off;
}

ParamVector Model::init_params(RngState state) const {
  Rng rng(state);
  ParamVector p(param_count_);
  for (std::size_t l = 1; l < spec_.widths.size(); ++l) {
    const std::size_t in = spec_.widths[l - 1];
    const std::size_t out = spec_.widths[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const std::size_t n = in * out + (spec_.bias ? out : 0);
    for (std::size_t k = 0; k < n; ++k)
      p[offsets_[l - 1] + k] = rng.uniform(-bound, bound);
  }
  return p;
}

Target Model::target_of(const Dataset &ds, std::size_t row) {
  Target t;
  t.label = ds.labels[row];
  if (!ds.targets.data.empty())
    t.values = ds.targets.row(row);
  return t;
}

namespace {

struct Activations {
  // pre[l], post[l] for l = 0..L; post[0] is the input.
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};

} // namespace

// Shared forward pass; returns the output layer pre-activations.
static void run_forward(const ModelSpec &spec, const std::vector<std::size_t> &offsets,
                        std::span<const double> params, std::span<const double> x,
                        Activations &act) {
  const std::size_t layers = spec.widths.size() - 1;
  act.pre.resize(layers + 1);
  act.post.resize(layers + 1);
  act.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 1; l <= layers; ++l) {
    const std::size_t in = spec.widths[l - 1];
    const std::size_t out = spec.widths[l];
    const double *w = params.data() + offsets[l - 1];
    const double *b = w + in * out;
    auto &z = act.pre[l];
    z.assign(out, 0.0);
    const auto &a = act.post[l - 1];
    for (std::size_t o = 0; o < out; ++o) {
      double s = spec.bias ? b[o] : 0.0;
      const double *wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i)
        s += wr[i] * a[i];
      z[o] = s;
    }
    auto &h = act.post[l];
    h = z;
    if (l < layers)
      for (auto &v : h)
        v = v > 0.0 ? v : 0.0;
  }
  if (!all_finite(act.pre[layers]))
    fail(ErrorKind::numeric, "model: non-finite forward activation");
}

std::vector<double> Model::forward(std::span<const double> params,
                                   std::span<const double> x) const {
  require(params.size() == param_count_, ErrorKind::dimension, "model: parameter size mismatch");
  require(x.size() == spec_.input_dim(), ErrorKind::dimension, "model: input size mismatch");
  Activations act;
  run_forward(spec_, offsets_, params, x, act);
  return act.pre.back();
}

double Model::loss_and_grad(std::span<const double> params, std::span<const double> x,
                            Target target, std::span<double> grad) const {
  require(params.size() == param_count_, ErrorKind::dimension, "model: parameter size mismatch");
  require(x.size() == spec_.input_dim(), ErrorKind::dimension, "model: input size mismatch");
  const std::size_t layers = spec_.widths.size() - 1;
  const std::size_t c_out = spec_.output_dim();
  Activations act;
  run_forward(spec_, offsets_, params, x, act);
  const auto &z = act.pre[layers];

  std::vector<double> delta(c_out);
  double loss = 0.0;
  if (spec_.loss == LossKind::cross_entropy) {
    require(target.label >= 0 && static_cast<std::size_t>(target.label) < c_out,
            ErrorKind::parameter, "model: label out of range for output width");
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < c_out; ++c) {
      delta[c] = std::exp(z[c] - zmax);
      sum += delta[c];
    }
    const auto y = static_cast<std::size_t>(target.label);
    loss = std::log(sum) + zmax - z[y];
    for (std::size_t c = 0; c < c_out; ++c)
      delta[c] /= sum;
    delta[y] -= 1.0;
  } else {
    for (std::size_t c = 0; c < c_out; ++c) {
      double t;
      if (!target.values.empty()) {
        require(target.values.size() == c_out, ErrorKind::dimension,
                "model: target width mismatch");
        t = target.values[c];
      } else {
        t = static_cast<std::size_t>(target.label) == c ? 1.0 : 0.0;
      }
      delta[c] = z[c] - t;
      loss += 0.5 * delta[c] * delta[c];
    }
  }
  if (!std::isfinite(loss))
    fail(ErrorKind::numeric, "model: non-finite loss");
  if (grad.empty())
    return loss;
  require(grad.size() == param_count_, ErrorKind::dimension, "model: gradient size mismatch");

  for (std::size_t l = layers; l >= 1; --l) {
    const std::size_t in = spec_.widths[l - 1];
    const std::size_t out = spec_.widths[l];
    const double *w = params.data() + offsets_[l - 1];
    double *gw = grad.data() + offsets_[l - 1];
    double *gb = gw + in * out;
    const auto &a = act.post[l - 1];
    for (std::size_t o = 0; o < out; ++o) {
      double *gr = gw + o * in;
      for (std::size_t i = 0; i < in; ++i)
        gr[i] = delta[o] * a[i];
      if (spec_.bias)
        gb[o] = delta[o];
    }
    if (l == 1)
      break;
    std::vector<double> prev(in, 0.0);
    const auto &zp = act.pre[l - 1];
    for (std::size_t o = 0; o < out; ++o) {
      const double *wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i)
        prev[i] += wr[i] * delta[o];
    }
    for (std::size_t i = 0; i < in; ++i)
      if (!(zp[i] > 0.0))
        prev[i] = 0.0;
    delta = std::move(prev);
  }
  return loss;
}

double Model::sample_loss(std::span<const double> params, std::span<const double> x,
                          Target target) const {
  return loss_and_grad(params, x, target, {});
}

RealVector Model::per_sample_grad(std::span<const double> params,
                                  std::span<const double> x, Target target) const {
  RealVector g(param_count_);
  loss_and_grad(params, x, target, g);
  return g;
}

RealVector Model::per_sample_grad(std::span<const double> params, const Dataset &ds,
                                  std::size_t row) const {
  return per_sample_grad(params, ds.x(row), target_of(ds, row));
}

double Model::batch_loss(std::span<const double> params, const Dataset &ds,
                         std::span<const std::size_t> rows) const {
  require(!rows.empty(), ErrorKind::parameter, "batch_loss: empty batch");
  double s = 0.0;
  for (auto r : rows)
    s += sample_loss(params, ds.x(r), target_of(ds, r));
  return s / static_cast<double>(rows.size());
}

RealVector Model::batch_grad(std::span<const double> params, const Dataset &ds,
                             std::span<const std::size_t> rows) const {
  require(!rows.empty(), ErrorKind::parameter, "batch_grad: empty batch");
  RealVector sum(param_count_, 0.0);
  RealVector g(param_count_);
  for (auto r : rows) {
    loss_and_grad(params, ds.x(r), target_of(ds, r), g);
    for (std::size_t k = 0; k < param_count_; ++k)
      sum[k] += g[k];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto &v : sum)
    v *= inv;
  return sum;
}

double Model::dataset_loss(std::span<const double> params, const Dataset &ds) const {
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = i;
  return batch_loss(params, ds, rows);
}

double Model::accuracy(std::span<const double> params, const Dataset &ds) const {
  require(ds.size() > 0, ErrorKind::parameter, "accuracy: empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto out = forward(params, ds.x(i));
    const auto pred = std::max_element(out.begin(), out.end()) - out.begin();
    if (pred == ds.labels[i])
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

RealVector Model::hessian_vector_product(std::span<const double> params,
                                         const Dataset &ds,
                                         std::span<const std::size_t> rows,
                                         std::span<const double> v) const {
  require(v.size() == param_count_, ErrorKind::dimension, "hvp: vector size mismatch");
  const double vnorm = norm2(v);
  if (vnorm == 0.0)
    return RealVector(param_count_, 0.0);
  constexpr double step = 1e-5;
  const double eps = step / vnorm;
  const RealVector plus = axpy(eps, v, params);
  const RealVector minus = axpy(-eps, v, params);
  const RealVector gp = batch_grad(plus, ds, rows);
  const RealVector gm = batch_grad(minus, ds, rows);
  RealVector out(param_count_);
  const double inv = 1.0 / (2.0 * eps);
  for (std::size_t k = 0; k < param_count_; ++k)
    out[k] = (gp[k] - gm[k]) * inv;
  if (!all_finite(out))
    fail(ErrorKind::numeric, "hvp: non-finite result");
  return out;
}

void save_params(const ParamVector &params, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  for (double v : params) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b)
      bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(bytes, 8);
  }
  if (!out)
    fail(ErrorKind::io, "write failed: " + path.string());
}

ParamVector load_params(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::io, "cannot open " + path.string());
  ParamVector out;
  char bytes[8];
  while (in.read(bytes, 8)) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= std::uint64_t{static_cast<unsigned char>(bytes[b])} << (8 * b);
    out.push_back(std::bit_cast<double>(bits));
  }
  if (in.gcount() != 0)
    fail(ErrorKind::format, "params: trailing partial value in " + path.string());
  return out;
}

} // namespace liveval
