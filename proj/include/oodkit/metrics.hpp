#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ood {

/// Detector scores on ID and OOD test data; higher = more OOD.
struct ScoreSample {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

struct EvalReport {
  double auroc = 0.0;
  double far95 = 0.0;
  std::optional<double> accuracy;
  std::size_t id_count = 0;
  std::size_t ood_count = 0;
};

/// P(ood > id) + ½·P(ood = id), from midranks of the pooled scores.
double auroc(const ScoreSample& s);

/// Fraction of OOD scores accepted (≤ t) where t is the nearest-rank 95th
/// percentile of the ID scores, i.e. the ⌈0.95·n⌉-th smallest ID score.
double far95(const ScoreSample& s);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

EvalReport evaluate_scores(const ScoreSample& s);

}  // namespace ood
