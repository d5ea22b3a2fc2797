#include "oodkit/losses.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "oodkit/encoder.hpp"
#include "oodkit/error.hpp"

namespace ood {

std::string_view to_string(ContrastiveMode m) noexcept {
  switch (m) {
    case ContrastiveMode::None: return "none";
    case ContrastiveMode::Scl: return "scl";
    case ContrastiveMode::Margin: return "margin";
  }
  return "none";
}

std::string_view to_string(DistanceMetric m) noexcept {
  switch (m) {
    case DistanceMetric::L2: return "l2";
    case DistanceMetric::L1: return "l1";
    case DistanceMetric::Cosine: return "cosine";
  }
  return "l2";
}

std::string_view to_string(MarginGrad m) noexcept {
  return m == MarginGrad::Stop ? "stop" : "through";
}

ContrastiveMode parse_contrastive_mode(std::string_view s) {
  if (s == "none") return ContrastiveMode::None;
  if (s == "scl") return ContrastiveMode::Scl;
  if (s == "margin") return ContrastiveMode::Margin;
  throw Error(Errc::InvalidConfig, "unknown loss mode '" + std::string(s) + "'");
}

DistanceMetric parse_distance_metric(std::string_view s) {
  if (s == "l2" || s == "L2") return DistanceMetric::L2;
  if (s == "l1" || s == "L1") return DistanceMetric::L1;
  if (s == "cosine") return DistanceMetric::Cosine;
  throw Error(Errc::InvalidConfig, "unknown distance metric '" + std::string(s) + "'");
}

MarginGrad parse_margin_grad(std::string_view s) {
  if (s == "stop") return MarginGrad::Stop;
  if (s == "through") return MarginGrad::Through;
  throw Error(Errc::InvalidConfig, "unknown margin_grad '" + std::string(s) + "'");
}

void validate(const LossConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw Error(Errc::InvalidConfig, "tau must be > 0");
  if (!(cfg.lambda >= 0.0)) throw Error(Errc::InvalidConfig, "lambda must be >= 0");
}

namespace {

void require_batch(std::size_t reps, std::size_t labels, std::size_t min_size) {
  if (reps != labels) {
    throw Error(Errc::LengthMismatch, std::to_string(reps) + " representations for " +
                                          std::to_string(labels) + " labels");
  }
  if (reps < min_size) {
    throw Error(Errc::BatchTooSmall, "batch of " + std::to_string(reps) + " is below the minimum of " +
                                         std::to_string(min_size));
  }
}

struct DistanceGrad {
  Vector da;
  Vector db;
};

DistanceGrad distance_grad(std::span<const double> a, std::span<const double> b, DistanceMetric metric) {
  const std::size_t d = a.size();
  DistanceGrad g{Vector(d), Vector(d)};
  switch (metric) {
    case DistanceMetric::L2:
      for (std::size_t k = 0; k < d; ++k) {
        g.da[k] = 2.0 * (a[k] - b[k]);
        g.db[k] = -g.da[k];
      }
      break;
    case DistanceMetric::L1:
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        g.da[k] = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
        g.db[k] = -g.da[k];
      }
      break;
    case DistanceMetric::Cosine: {
      const double na = norm2(a);
      const double nb = norm2(b);
      const double c = dot(a, b) / (na * nb);
      // d(1 − cos)/da = −(b/(|a||b|) − cos·a/|a|²)
      for (std::size_t k = 0; k < d; ++k) {
        g.da[k] = -(b[k] / (na * nb) - c * a[k] / (na * na));
        g.db[k] = -(a[k] / (na * nb) - c * b[k] / (nb * nb));
      }
      break;
    }
  }
  return g;
}

void accumulate(Vector& dst, const Vector& src, double scale) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
}

struct MarginArg {
  double value;
  std::size_t i, p;
};

std::optional<MarginArg> max_positive_distance(std::span<const Vector> h, std::span<const int> labels,
                                               DistanceMetric metric) {
  std::optional<MarginArg> best;
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t p = i + 1; p < h.size(); ++p) {
      if (labels[i] != labels[p]) continue;
      const double dist = pair_distance(h[i], h[p], metric);
      if (!best || dist > best->value) best = MarginArg{dist, i, p};
    }
  return best;
}

}  // namespace

CrossEntropyResult cross_entropy(std::span<const Vector> logits, std::span<const int> labels) {
  require_batch(logits.size(), labels.size(), 1);
  const double M = static_cast<double>(logits.size());
  CrossEntropyResult out;
  out.grad_logits.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits[i].size()) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y) + " with " +
                                             std::to_string(logits[i].size()) + " classes");
    }
    const double lse = log_sum_exp(logits[i]);
    out.loss += (lse - logits[i][static_cast<std::size_t>(y)]) / M;
    Vector g(logits[i].size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = std::exp(logits[i][j] - lse) / M;
    g[static_cast<std::size_t>(y)] -= 1.0 / M;
    out.grad_logits.push_back(std::move(g));
  }
  return out;
}

ContrastiveResult scl_loss(std::span<const Vector> z, std::span<const int> labels, double tau) {
  require_batch(z.size(), labels.size(), 2);
  if (!(tau > 0.0)) throw Error(Errc::InvalidConfig, "tau must be > 0");
  for (const auto& v : z) {
    if (std::abs(norm2(v) - 1.0) > 1e-9) throw Error(Errc::NotNormalized, "z must have unit norm");
  }

  const std::size_t M = z.size();
  const std::size_t d = z.front().size();
  ContrastiveResult out;
  out.grad_z.assign(M, Vector(d, 0.0));

  Vector scaled(M);
  for (std::size_t i = 0; i < M; ++i) {
    std::size_t positives = 0;
    for (std::size_t a = 0; a < M; ++a)
      if (a != i && labels[a] == labels[i]) ++positives;
    if (positives == 0) continue;

    // Logits over A(i) = all a ≠ i; log-sum-exp with max subtraction.
    std::vector<double> over_anchors;
    over_anchors.reserve(M - 1);
    for (std::size_t a = 0; a < M; ++a) {
      scaled[a] = a == i ? 0.0 : dot(z[i], z[a]) / tau;
      if (a != i) over_anchors.push_back(scaled[a]);
    }
    const double lse = log_sum_exp(over_anchors);

    const double weight = 1.0 / (static_cast<double>(M) * static_cast<double>(positives));
    double term = 0.0;
    for (std::size_t p = 0; p < M; ++p)
      if (p != i && labels[p] == labels[i]) term += scaled[p] - lse;
    out.loss -= weight * term;

    // ∂/∂s_ia = (q_ia − [a∈P(i)]/|P(i)|) / (M τ), with s_ia = z_i·z_a.
    for (std::size_t a = 0; a < M; ++a) {
      if (a == i) continue;
      const double q = std::exp(scaled[a] - lse);
      const double positive = labels[a] == labels[i] ? 1.0 / static_cast<double>(positives) : 0.0;
      const double coef = (q - positive) / (static_cast<double>(M) * tau);
      accumulate(out.grad_z[i], z[a], coef);
      accumulate(out.grad_z[a], z[i], coef);
    }
  }
  return out;
}

double pair_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "pair distance dimensions differ");
  switch (metric) {
    case DistanceMetric::L2: {
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      return s;
    }
    case DistanceMetric::L1: {
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
      return s;
    }
    case DistanceMetric::Cosine: {
      const double na = norm2(a);
      const double nb = norm2(b);
      if (!(na > 0.0) || !(nb > 0.0)) throw Error(Errc::ZeroVector, "cosine distance of a zero vector");
      return 1.0 - dot(a, b) / (na * nb);
    }
  }
  return 0.0;
}

double adaptive_margin(std::span<const Vector> h, std::span<const int> labels, DistanceMetric metric) {
  require_batch(h.size(), labels.size(), 0);
  const auto best = max_positive_distance(h, labels, metric);
  if (!best) throw Error(Errc::NoPositivePairs, "batch has no same-class pair");
  return best->value;
}

ContrastiveResult margin_loss(std::span<const Vector> h, std::span<const int> labels,
                              DistanceMetric metric, MarginGrad margin_grad,
                              std::optional<double> fixed_margin) {
  require_batch(h.size(), labels.size(), 2);
  const std::size_t M = h.size();
  const std::size_t d = h.front().size();
  for (const auto& v : h)
    if (v.size() != d) throw Error(Errc::DimensionMismatch, "representations differ in dimension");

  const auto arg = max_positive_distance(h, labels, metric);
  const double xi = fixed_margin ? *fixed_margin : arg ? arg->value : 0.0;
  const double scale = 1.0 / (static_cast<double>(d) * static_cast<double>(M));

  ContrastiveResult out;
  out.margin = xi;
  out.grad_h.assign(M, Vector(d, 0.0));
  double pos = 0.0;
  double neg = 0.0;
  double xi_weight = 0.0;  // ∂loss/∂ξ

  for (std::size_t i = 0; i < M; ++i) {
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    for (std::size_t j = 0; j < M; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? n_pos : n_neg) += 1;
    }
    for (std::size_t j = 0; j < M; ++j) {
      if (j == i) continue;
      const double dist = pair_distance(h[i], h[j], metric);
      if (labels[j] == labels[i]) {
        const double w = 1.0 / static_cast<double>(n_pos);
        pos += w * dist;
        const DistanceGrad g = distance_grad(h[i], h[j], metric);
        accumulate(out.grad_h[i], g.da, w * scale);
        accumulate(out.grad_h[j], g.db, w * scale);
      } else {
        const double gap = xi - dist;
        if (!(gap > 0.0)) continue;
        const double w = 1.0 / static_cast<double>(n_neg);
        neg += w * gap;
        xi_weight += w * scale;
        const DistanceGrad g = distance_grad(h[i], h[j], metric);
        accumulate(out.grad_h[i], g.da, -w * scale);
        accumulate(out.grad_h[j], g.db, -w * scale);
      }
    }
  }
  out.loss = scale * (pos + neg);

  if (margin_grad == MarginGrad::Through && !fixed_margin && arg && xi_weight > 0.0) {
    const DistanceGrad g = distance_grad(h[arg->i], h[arg->p], metric);
    accumulate(out.grad_h[arg->i], g.da, xi_weight);
    accumulate(out.grad_h[arg->p], g.db, xi_weight);
  }
  return out;
}

LossReport joint_loss(const CrossEntropyResult& ce, const ContrastiveResult& cont, double lambda) {
  const std::size_t M = ce.grad_logits.size();
  if ((!cont.grad_z.empty() && cont.grad_z.size() != M) ||
      (!cont.grad_h.empty() && cont.grad_h.size() != M)) {
    throw Error(Errc::ShapeMismatch, "contrastive gradients do not match the batch");
  }
  LossReport r;
  r.ce = ce.loss;
  r.cont = cont.loss;
  r.total = ce.loss + lambda * cont.loss;
  r.grad_logits = ce.grad_logits;
  auto scaled = [lambda](const std::vector<Vector>& g) {
    std::vector<Vector> out = g;
    for (auto& v : out)
      for (double& x : v) x *= lambda;
    return out;
  };
  r.grad_z = scaled(cont.grad_z);
  r.grad_h = scaled(cont.grad_h);
  return r;
}

ContrastiveResult contrastive_loss(const BatchReps& reps, const LossConfig& cfg) {
  switch (cfg.mode) {
    case ContrastiveMode::None: return {};
    case ContrastiveMode::Scl: return scl_loss(reps.z, reps.labels, cfg.tau);
    case ContrastiveMode::Margin: return margin_loss(reps.h, reps.labels, cfg.metric, cfg.margin_grad);
  }
  return {};
}

LossReport compute_loss(const BatchReps& reps, const LossConfig& cfg) {
  validate(cfg);
  return joint_loss(cross_entropy(reps.logits, reps.labels), contrastive_loss(reps, cfg), cfg.lambda);
}

}  // namespace ood
