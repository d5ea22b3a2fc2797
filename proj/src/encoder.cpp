#include "oodkit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oodkit/error.hpp"
#include "oodkit/rng.hpp"

namespace ood {

using nlohmann::json;

std::size_t EncoderParams::input_dim() const {
  return layers.empty() ? softmax_weights.cols() : layers.front().weight.cols();
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  for (const auto& l : layers) {
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0)});
  }
  z.softmax_weights = Matrix(softmax_weights.rows(), softmax_weights.cols());
  z.softmax_bias.assign(softmax_bias.size(), 0.0);
  return z;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

std::vector<std::span<double>> EncoderParams::tensors() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.push_back(l.weight.storage());
    out.push_back(l.bias);
  }
  out.push_back(softmax_weights.storage());
  out.push_back(softmax_bias);
  return out;
}

std::vector<std::span<const double>> EncoderParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.push_back(l.weight.storage());
    out.push_back(l.bias);
  }
  out.push_back(softmax_weights.storage());
  out.push_back(softmax_bias);
  return out;
}

EncoderParams init_params(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                          std::size_t rep_dim, std::size_t num_classes, std::uint64_t seed) {
  if (input_dim < 1 || rep_dim < 1 || num_classes < 1 ||
      std::any_of(hidden_dims.begin(), hidden_dims.end(), [](std::size_t h) { return h < 1; })) {
    throw Error(Errc::InvalidShape, "encoder dimensions must be >= 1");
  }
  SplitMix64 rng(seed);
  auto glorot = [&](std::size_t out, std::size_t in) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (double& x : w.storage()) x = rng.uniform(-a, a);
    return w;
  };

  EncoderParams p;
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(rep_dim);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    p.layers.push_back({glorot(dims[k + 1], dims[k]), Vector(dims[k + 1], 0.0)});
  }
  p.softmax_weights = glorot(num_classes, rep_dim);
  p.softmax_bias.assign(num_classes, 0.0);
  return p;
}

const Vector& ForwardRecord::unit_rep() const {
  if (degenerate()) {
    throw Error(Errc::DegenerateRepresentation,
                "representation norm " + std::to_string(h_norm) + " too small to normalize");
  }
  return z;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::EmptyInput, "log-sum-exp of nothing");
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

Vector softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  Vector p(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) p[j] = std::exp(logits[j] - lse);
  return p;
}

ForwardRecord forward(const EncoderParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw Error(Errc::DimensionMismatch, "input has dimension " + std::to_string(x.size()) +
                                             ", encoder expects " +
                                             std::to_string(params.input_dim()));
  }
  ForwardRecord rec;
  rec.activations.emplace_back(x.begin(), x.end());
  for (const auto& layer : params.layers) {
    Vector pre = matvec(layer.weight, rec.activations.back());
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layer.bias[i];
    Vector act(pre.size());
    std::transform(pre.begin(), pre.end(), act.begin(), [](double v) { return std::tanh(v); });
    rec.pre_activations.push_back(std::move(pre));
    rec.activations.push_back(std::move(act));
  }
  rec.h = rec.activations.back();
  rec.h_norm = norm2(rec.h);
  if (rec.h_norm > kMinRepNorm) {
    rec.z = rec.h;
    for (double& v : rec.z) v /= rec.h_norm;
  }
  rec.logits = matvec(params.softmax_weights, rec.h);
  for (std::size_t j = 0; j < rec.logits.size(); ++j) rec.logits[j] += params.softmax_bias[j];
  rec.probs = softmax(rec.logits);
  return rec;
}

namespace {

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != 0 && got != want) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " gradient has " + std::to_string(got) +
                                         " entries, expected " + std::to_string(want));
  }
}

}  // namespace

ParamGrads backward(const EncoderParams& params, std::span<const ForwardRecord> records,
                    std::span<const UpstreamGrad> grads) {
  if (records.size() != grads.size()) {
    throw Error(Errc::ShapeMismatch, std::to_string(grads.size()) + " upstream gradients for " +
                                         std::to_string(records.size()) + " records");
  }
  ParamGrads out = params.zeros_like();
  const std::size_t d = params.rep_dim();
  const std::size_t C = params.num_classes();

  for (std::size_t n = 0; n < records.size(); ++n) {
    const ForwardRecord& rec = records[n];
    const UpstreamGrad& g = grads[n];
    require_size(g.logits.size(), C, "logit");
    require_size(g.h.size(), d, "h");
    require_size(g.z.size(), d, "z");
    if (rec.h.size() != d || rec.activations.size() != params.layers.size() + 1) {
      throw Error(Errc::ShapeMismatch, "forward record does not match encoder shape");
    }

    Vector grad_h = g.h.empty() ? Vector(d, 0.0) : g.h;
    if (!g.logits.empty()) {
      for (std::size_t j = 0; j < C; ++j) {
        const double gl = g.logits[j];
        out.softmax_bias[j] += gl;
        auto wrow = out.softmax_weights.row(j);
        for (std::size_t k = 0; k < d; ++k) wrow[k] += gl * rec.h[k];
      }
      const Vector back = matvec_transposed(params.softmax_weights, g.logits);
      for (std::size_t k = 0; k < d; ++k) grad_h[k] += back[k];
    }
    if (!g.z.empty()) {
      const Vector& z = rec.unit_rep();
      // dz/dh = (I − z zᵀ) / ‖h‖
      const double zg = dot(z, g.z);
      for (std::size_t k = 0; k < d; ++k) grad_h[k] += (g.z[k] - z[k] * zg) / rec.h_norm;
    }

    Vector upstream = std::move(grad_h);
    for (std::size_t l = params.layers.size(); l-- > 0;) {
      const Vector& act = rec.activations[l + 1];
      const Vector& input = rec.activations[l];
      Vector delta(upstream.size());
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = upstream[i] * (1.0 - act[i] * act[i]);
      DenseLayer& gl = out.layers[l];
      for (std::size_t i = 0; i < delta.size(); ++i) {
        gl.bias[i] += delta[i];
        if (delta[i] == 0.0) continue;
        auto wrow = gl.weight.row(i);
        for (std::size_t k = 0; k < input.size(); ++k) wrow[k] += delta[i] * input[k];
      }
      if (l > 0) upstream = matvec_transposed(params.layers[l].weight, delta);
    }
  }
  return out;
}

double AdamState::effective_rate() const {
  return lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

namespace {

void adam_update(const AdamState& s, double rate, std::span<double> p, std::span<const double> g,
                 std::span<double> m, std::span<double> v) {
  const double t = static_cast<double>(s.step + 1);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= rate * mhat / (std::sqrt(vhat) + s.eps);
  }
}

void prepare(AdamState& s, std::size_t n) {
  if (s.step >= s.total_steps) {
    throw Error(Errc::StepsExhausted, "Adam schedule of " + std::to_string(s.total_steps) +
                                          " steps is exhausted");
  }
  if (s.m.empty()) {
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
  }
  if (s.m.size() != n || s.v.size() != n) {
    throw Error(Errc::ShapeMismatch, "Adam moments do not match parameter count");
  }
}

}  // namespace

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw Error(Errc::ShapeMismatch, "params vs grads");
  prepare(state, params.size());
  adam_update(state, state.effective_rate(), params, grads, state.m, state.v);
  ++state.step;
}

void adam_step(AdamState& state, EncoderParams& params, const ParamGrads& grads) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size()) throw Error(Errc::ShapeMismatch, "params vs grads tensor count");
  prepare(state, params.parameter_count());
  const double rate = state.effective_rate();
  std::size_t offset = 0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size() != g[t].size()) throw Error(Errc::ShapeMismatch, "params vs grads tensor size");
    const std::span<double> m(state.m.data() + offset, p[t].size());
    const std::span<double> v(state.v.data() + offset, p[t].size());
    adam_update(state, rate, p[t], g[t], m, v);
    offset += p[t].size();
  }
  ++state.step;
}

// ------------------------------------------------------------ serialization

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t cols_hint) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.at(0).size() : cols_hint;
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& r : j) {
    if (r.size() != cols) throw Error(Errc::FormatError, "ragged matrix in checkpoint");
    for (const auto& x : r) data.push_back(x.get<double>());
  }
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

json params_to_json(const EncoderParams& params) {
  json layers = json::array();
  std::vector<std::size_t> hidden;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    layers.push_back({{"weight", matrix_to_json(layer.weight)}, {"bias", layer.bias}});
    if (l + 1 < params.layers.size()) hidden.push_back(layer.weight.rows());
  }
  return {
      {"input_dim", params.input_dim()},
      {"hidden_dims", hidden},
      {"rep_dim", params.rep_dim()},
      {"num_classes", params.num_classes()},
      {"activation", "tanh"},
      {"layers", layers},
      {"softmax_weights", matrix_to_json(params.softmax_weights)},
      {"softmax_bias", params.softmax_bias},
  };
}

EncoderParams params_from_json(const json& j) {
  try {
    EncoderParams p;
    std::size_t prev = j.at("input_dim").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      DenseLayer layer{matrix_from_json(l.at("weight"), prev), l.at("bias").get<Vector>()};
      if (layer.weight.cols() != prev || layer.bias.size() != layer.weight.rows()) {
        throw Error(Errc::FormatError, "layer shapes do not chain");
      }
      prev = layer.weight.rows();
      p.layers.push_back(std::move(layer));
    }
    p.softmax_weights = matrix_from_json(j.at("softmax_weights"), prev);
    p.softmax_bias = j.at("softmax_bias").get<Vector>();
    if (p.softmax_weights.cols() != prev || p.softmax_bias.size() != p.softmax_weights.rows() ||
        p.rep_dim() != j.at("rep_dim").get<std::size_t>() ||
        p.num_classes() != j.at("num_classes").get<std::size_t>()) {
      throw Error(Errc::FormatError, "softmax head shape does not match metadata");
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::FormatError, std::string("malformed encoder parameters: ") + e.what());
  }
}

}  // namespace ood
