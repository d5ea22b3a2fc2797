#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oodkit/linalg.hpp"

namespace ood {

// Score convention for every detector: higher means more likely OOD.
//
//   msp     1 − max_j p_j
//   energy  −log Σ_j exp(w_jᵀh + b_j)
//   maha    min_j (h − μ_j)ᵀ Σ⁺ (h − μ_j)      (positive distance, not its negation)
//   cosine  −max_i cos(h, h_i)                 over the validation bank

enum class ScorerKind { Msp, Energy, Maha, Cosine };

std::string_view to_string(ScorerKind k) noexcept;
ScorerKind parse_scorer_kind(std::string_view s);
std::vector<ScorerKind> parse_scorer_list(std::string_view csv);
inline constexpr ScorerKind kAllScorers[] = {ScorerKind::Msp, ScorerKind::Energy, ScorerKind::Maha,
                                             ScorerKind::Cosine};

struct ClassifierHead {
  Matrix weights;  // C × d
  Vector bias;     // C
  /// Drop the bias from the energy score (bias-free log-sum-exp of w_jᵀh).
  bool energy_ignore_bias = false;

  Vector logits(std::span<const double> h) const;
};

struct MahaDetector {
  std::vector<Vector> class_means;
  Matrix cov_pinv;
  std::size_t dim = 0;
};

struct CosineDetector {
  std::vector<Vector> bank;  // unit vectors
};

double score_msp(std::span<const double> probs);
double score_energy(const ClassifierHead& head, std::span<const double> h);

/// Class means, shared 1/M covariance and its pseudo-inverse from labelled
/// validation representations. Every class in [0, num_classes) must occur.
MahaDetector fit_maha(std::span<const Vector> val_h, std::span<const int> labels, int num_classes,
                      double pinv_rel_tol = kDefaultPinvRelTol);
double score_maha(const MahaDetector& det, std::span<const double> h);

CosineDetector fit_cosine(std::span<const Vector> val_h);
double score_cosine(const CosineDetector& det, std::span<const double> h);

inline constexpr std::string_view kDetectorFormat = "ood-det/1";

struct DetectorArtifact {
  ScorerKind kind = ScorerKind::Msp;
  std::variant<ClassifierHead, MahaDetector, CosineDetector> payload;

  std::size_t dim() const;
  int num_classes() const;
  double score(std::span<const double> h) const;
};

/// Fits one detector. MSP and energy wrap the head; Maha and cosine are
/// fitted on the given validation representations.
DetectorArtifact fit_detector(ScorerKind kind, const ClassifierHead& head,
                              std::span<const Vector> val_h, std::span<const int> labels,
                              int num_classes);

nlohmann::json detector_to_json(const DetectorArtifact& det);
DetectorArtifact detector_from_json(const nlohmann::json& j);

void save_detector(const DetectorArtifact& det, const std::filesystem::path& path);
DetectorArtifact load_detector(const std::filesystem::path& path);

}  // namespace ood
