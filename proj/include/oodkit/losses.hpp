#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "oodkit/linalg.hpp"

namespace ood {

enum class ContrastiveMode { None, Scl, Margin };
enum class DistanceMetric { L2, L1, Cosine };
/// Whether the adaptive margin ξ passes gradient back to the pair that
/// attains it (Through) or is held constant (Stop).
enum class MarginGrad { Stop, Through };

std::string_view to_string(ContrastiveMode m) noexcept;
std::string_view to_string(DistanceMetric m) noexcept;
std::string_view to_string(MarginGrad m) noexcept;
ContrastiveMode parse_contrastive_mode(std::string_view s);
DistanceMetric parse_distance_metric(std::string_view s);
MarginGrad parse_margin_grad(std::string_view s);

struct LossConfig {
  ContrastiveMode mode = ContrastiveMode::Margin;
  double tau = 0.3;
  double lambda = 2.0;
  DistanceMetric metric = DistanceMetric::L2;
  MarginGrad margin_grad = MarginGrad::Stop;
};

void validate(const LossConfig& cfg);

/// Per-batch representations the losses consume.
struct BatchReps {
  std::vector<Vector> h;
  std::vector<Vector> z;
  std::vector<Vector> logits;
  std::vector<int> labels;
};

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<Vector> grad_logits;
};

/// Mean negative log-likelihood of the labels under softmax(logits).
CrossEntropyResult cross_entropy(std::span<const Vector> logits, std::span<const int> labels);

/// Contrastive term and its gradient. Exactly one of grad_z / grad_h is
/// populated (scl acts on z, margin on h); both are empty for mode None.
struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Vector> grad_z;
  std::vector<Vector> grad_h;
  double margin = 0.0;  // ξ, margin loss only
};

/// Supervised contrastive loss over unit vectors with temperature tau.
/// Anchors without a same-class partner in the batch contribute nothing.
ContrastiveResult scl_loss(std::span<const Vector> z, std::span<const int> labels, double tau);

/// Pair distance used by the margin loss: squared Euclidean (L2), Manhattan
/// (L1) or 1 − cos (Cosine).
double pair_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric);

/// Largest same-class pair distance in the batch.
double adaptive_margin(std::span<const Vector> h, std::span<const int> labels, DistanceMetric metric);

/// Pull-together/push-apart loss on h with the adaptive margin, scaled by
/// 1/(dM). A batch with no same-class pair uses ξ = 0, which makes every
/// hinge inactive. fixed_margin replaces the adaptive ξ (its gradient is then
/// zero regardless of margin_grad).
ContrastiveResult margin_loss(std::span<const Vector> h, std::span<const int> labels,
                              DistanceMetric metric, MarginGrad margin_grad = MarginGrad::Stop,
                              std::optional<double> fixed_margin = std::nullopt);

struct LossReport {
  double ce = 0.0;
  double cont = 0.0;
  double total = 0.0;
  std::vector<Vector> grad_logits;
  std::vector<Vector> grad_z;  // empty when the contrastive term does not use z
  std::vector<Vector> grad_h;  // empty when the contrastive term does not use h
};

/// total = ce + λ·cont, with the contrastive gradients scaled by λ.
LossReport joint_loss(const CrossEntropyResult& ce, const ContrastiveResult& cont, double lambda);

/// Contrastive term selected by cfg.mode.
ContrastiveResult contrastive_loss(const BatchReps& reps, const LossConfig& cfg);

/// Full objective for one batch.
LossReport compute_loss(const BatchReps& reps, const LossConfig& cfg);

}  // namespace ood
