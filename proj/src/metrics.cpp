#include "oodkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "oodkit/error.hpp"

namespace ood {

namespace {

void require_sample(const ScoreSample& s) {
  if (s.id_scores.empty() || s.ood_scores.empty()) {
    throw Error(Errc::EmptyInput, "both ID and OOD score lists must be nonempty");
  }
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(s.id_scores.begin(), s.id_scores.end(), finite) ||
      !std::all_of(s.ood_scores.begin(), s.ood_scores.end(), finite)) {
    throw Error(Errc::EmptyInput, "scores must be finite");
  }
}

}  // namespace

double auroc(const ScoreSample& s) {
  require_sample(s);
  const std::size_t n_id = s.id_scores.size();
  const std::size_t n_ood = s.ood_scores.size();

  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> pooled;
  pooled.reserve(n_id + n_ood);
  for (double x : s.id_scores) pooled.push_back({x, false});
  for (double x : s.ood_scores) pooled.push_back({x, true});
  std::sort(pooled.begin(), pooled.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the OOD rank sum keeps every midrank an integer.
  std::size_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    std::size_t ood_in_group = 0;
    while (j < pooled.size() && pooled[j].score == pooled[i].score) {
      ood_in_group += pooled[j].ood ? 1 : 0;
      ++j;
    }
    // ranks i+1 .. j, midrank (i+1+j)/2
    twice_rank_sum += ood_in_group * (i + 1 + j);
    i = j;
  }
  const double u = static_cast<double>(twice_rank_sum) / 2.0 -
                   static_cast<double>(n_ood) * static_cast<double>(n_ood + 1) / 2.0;
  return u / (static_cast<double>(n_id) * static_cast<double>(n_ood));
}

double far95(const ScoreSample& s) {
  require_sample(s);
  std::vector<double> id = s.id_scores;
  std::sort(id.begin(), id.end());
  const std::size_t n = id.size();
  const std::size_t k = (95 * n + 99) / 100;  // ⌈0.95 n⌉ in exact arithmetic
  const double threshold = id[k - 1];
  const auto accepted = std::count_if(s.ood_scores.begin(), s.ood_scores.end(),
                                      [threshold](double x) { return x <= threshold; });
  return static_cast<double>(accepted) / static_cast<double>(s.ood_scores.size());
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                          std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error(Errc::EmptyInput, "accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

EvalReport evaluate_scores(const ScoreSample& s) {
  EvalReport r;
  r.auroc = auroc(s);
  r.far95 = far95(s);
  r.id_count = s.id_scores.size();
  r.ood_count = s.ood_scores.size();
  return r;
}

}  // namespace ood
