#include "oodkit/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "oodkit/encoder.hpp"
#include "oodkit/error.hpp"

namespace ood {

using nlohmann::json;

std::string_view to_string(ScorerKind k) noexcept {
  switch (k) {
    case ScorerKind::Msp: return "msp";
    case ScorerKind::Energy: return "energy";
    case ScorerKind::Maha: return "maha";
    case ScorerKind::Cosine: return "cosine";
  }
  return "msp";
}

ScorerKind parse_scorer_kind(std::string_view s) {
  for (ScorerKind k : kAllScorers)
    if (to_string(k) == s) return k;
  throw Error(Errc::InvalidConfig, "unknown scorer '" + std::string(s) + "'");
}

std::vector<ScorerKind> parse_scorer_list(std::string_view csv) {
  std::vector<ScorerKind> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    std::string_view item = csv.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      const ScorerKind k = parse_scorer_kind(item);
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    start = comma + 1;
  }
  if (out.empty()) throw Error(Errc::InvalidConfig, "scorer list is empty");
  return out;
}

Vector ClassifierHead::logits(std::span<const double> h) const {
  if (h.size() != weights.cols()) {
    throw Error(Errc::DimensionMismatch, "representation has dimension " + std::to_string(h.size()) +
                                             ", head expects " + std::to_string(weights.cols()));
  }
  Vector out = matvec(weights, h);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += bias[j];
  return out;
}

double score_msp(std::span<const double> probs) {
  if (probs.empty()) throw Error(Errc::NotADistribution, "empty probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw Error(Errc::NotADistribution, "negative or NaN probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-8) {
    throw Error(Errc::NotADistribution, "probabilities sum to " + std::to_string(sum));
  }
  return 1.0 - *std::max_element(probs.begin(), probs.end());
}

double score_energy(const ClassifierHead& head, std::span<const double> h) {
  if (h.size() != head.weights.cols()) {
    throw Error(Errc::DimensionMismatch, "representation has dimension " + std::to_string(h.size()) +
                                             ", head expects " + std::to_string(head.weights.cols()));
  }
  Vector z = matvec(head.weights, h);
  if (!head.energy_ignore_bias)
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += head.bias[j];
  return -log_sum_exp(z);
}

MahaDetector fit_maha(std::span<const Vector> val_h, std::span<const int> labels, int num_classes,
                      double pinv_rel_tol) {
  if (val_h.empty()) throw Error(Errc::EmptyInput, "no validation representations");
  if (val_h.size() != labels.size()) throw Error(Errc::LengthMismatch, "representations vs labels");
  if (num_classes < 1) throw Error(Errc::MissingClass, "detector needs at least one class");

  const std::size_t d = val_h.front().size();
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<Vector> sums(C, Vector(d, 0.0));
  std::vector<std::size_t> counts(C, 0);
  for (std::size_t i = 0; i < val_h.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y));
    if (val_h[i].size() != d) throw Error(Errc::DimensionMismatch, "validation dimensions differ");
    for (std::size_t k = 0; k < d; ++k) sums[static_cast<std::size_t>(y)][k] += val_h[i][k];
    ++counts[static_cast<std::size_t>(y)];
  }
  MahaDetector det;
  det.dim = d;
  for (std::size_t c = 0; c < C; ++c) {
    if (counts[c] == 0) {
      throw Error(Errc::MissingClass, "class " + std::to_string(c) + " has no validation examples");
    }
    for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
  }
  det.class_means = std::move(sums);
  det.cov_pinv = pseudo_inverse(shared_covariance(val_h, labels, det.class_means), pinv_rel_tol);
  return det;
}

double score_maha(const MahaDetector& det, std::span<const double> h) {
  if (h.size() != det.dim) {
    throw Error(Errc::DimensionMismatch, "representation has dimension " + std::to_string(h.size()) +
                                             ", detector expects " + std::to_string(det.dim));
  }
  double best = std::numeric_limits<double>::infinity();
  Vector diff(det.dim);
  for (const auto& mu : det.class_means) {
    for (std::size_t k = 0; k < det.dim; ++k) diff[k] = h[k] - mu[k];
    best = std::min(best, quadratic_form(det.cov_pinv, diff));
  }
  // Σ⁺ is PSD; clamp round-off below zero.
  return std::max(best, 0.0);
}

CosineDetector fit_cosine(std::span<const Vector> val_h) {
  if (val_h.empty()) throw Error(Errc::EmptyInput, "cosine bank needs at least one vector");
  CosineDetector det;
  det.bank.reserve(val_h.size());
  for (const auto& h : val_h) det.bank.push_back(l2_normalize(h));
  return det;
}

double score_cosine(const CosineDetector& det, std::span<const double> h) {
  if (det.bank.empty()) throw Error(Errc::EmptyInput, "empty cosine bank");
  const Vector u = l2_normalize(h);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& b : det.bank) best = std::max(best, dot(u, b));
  return -std::clamp(best, -1.0, 1.0);
}

std::size_t DetectorArtifact::dim() const {
  return std::visit(
      [](const auto& p) -> std::size_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ClassifierHead>) return p.weights.cols();
        else if constexpr (std::is_same_v<T, MahaDetector>) return p.dim;
        else return p.bank.empty() ? 0 : p.bank.front().size();
      },
      payload);
}

int DetectorArtifact::num_classes() const {
  return std::visit(
      [](const auto& p) -> int {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ClassifierHead>) return static_cast<int>(p.weights.rows());
        else if constexpr (std::is_same_v<T, MahaDetector>) return static_cast<int>(p.class_means.size());
        else return 0;
      },
      payload);
}

double DetectorArtifact::score(std::span<const double> h) const {
  switch (kind) {
    case ScorerKind::Msp: {
      const auto& head = std::get<ClassifierHead>(payload);
      return score_msp(softmax(head.logits(h)));
    }
    case ScorerKind::Energy: return score_energy(std::get<ClassifierHead>(payload), h);
    case ScorerKind::Maha: return score_maha(std::get<MahaDetector>(payload), h);
    case ScorerKind::Cosine: return score_cosine(std::get<CosineDetector>(payload), h);
  }
  return 0.0;
}

DetectorArtifact fit_detector(ScorerKind kind, const ClassifierHead& head, std::span<const Vector> val_h,
                              std::span<const int> labels, int num_classes) {
  switch (kind) {
    case ScorerKind::Msp:
    case ScorerKind::Energy: return {kind, head};
    case ScorerKind::Maha: return {kind, fit_maha(val_h, labels, num_classes)};
    case ScorerKind::Cosine: return {kind, fit_cosine(val_h)};
  }
  return {kind, head};
}

// ------------------------------------------------------------ persistence

namespace {

json rows_to_json(const std::vector<Vector>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back(r);
  return out;
}

std::vector<Vector> rows_from_json(const json& j, std::size_t dim) {
  std::vector<Vector> rows;
  for (const auto& r : j) {
    rows.push_back(r.get<Vector>());
    if (rows.back().size() != dim) throw Error(Errc::FormatError, "payload row has wrong dimension");
  }
  return rows;
}

}  // namespace

json detector_to_json(const DetectorArtifact& det) {
  json payload;
  switch (det.kind) {
    case ScorerKind::Msp:
    case ScorerKind::Energy: {
      const auto& head = std::get<ClassifierHead>(det.payload);
      std::vector<Vector> rows;
      for (std::size_t j = 0; j < head.weights.rows(); ++j) {
        const auto r = head.weights.row(j);
        rows.emplace_back(r.begin(), r.end());
      }
      payload = {{"softmax_weights", rows_to_json(rows)},
                 {"softmax_bias", head.bias},
                 {"energy_ignore_bias", head.energy_ignore_bias}};
      break;
    }
    case ScorerKind::Maha: {
      const auto& m = std::get<MahaDetector>(det.payload);
      const auto flat = m.cov_pinv.storage();
      payload = {{"means", rows_to_json(m.class_means)},
                 {"cov_pinv", std::vector<double>(flat.begin(), flat.end())}};
      break;
    }
    case ScorerKind::Cosine:
      payload = {{"bank", rows_to_json(std::get<CosineDetector>(det.payload).bank)}};
      break;
  }
  return {{"format", kDetectorFormat},
          {"kind", to_string(det.kind)},
          {"dim", det.dim()},
          {"num_classes", det.num_classes()},
          {"payload", payload}};
}

DetectorArtifact detector_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::FormatError, "detector file is not a JSON object");
  const std::string format = j.value("format", std::string{});
  if (format != kDetectorFormat) {
    throw Error(Errc::FormatError, "unsupported detector format version '" + format +
                                       "' (expected '" + std::string(kDetectorFormat) + "')");
  }
  try {
    DetectorArtifact det;
    const std::string kind = j.at("kind").get<std::string>();
    try {
      det.kind = parse_scorer_kind(kind);
    } catch (const Error&) {
      throw Error(Errc::FormatError, "unknown detector kind '" + kind + "'");
    }
    const auto dim = j.at("dim").get<std::size_t>();
    const auto C = j.at("num_classes").get<int>();
    const json& p = j.at("payload");

    switch (det.kind) {
      case ScorerKind::Msp:
      case ScorerKind::Energy: {
        if (!p.contains("softmax_weights")) throw Error(Errc::FormatError, "payload does not match kind");
        const auto rows = rows_from_json(p.at("softmax_weights"), dim);
        ClassifierHead head;
        head.weights = Matrix(rows.size(), dim);
        for (std::size_t r = 0; r < rows.size(); ++r)
          std::copy(rows[r].begin(), rows[r].end(), head.weights.row(r).begin());
        head.bias = p.at("softmax_bias").get<Vector>();
        head.energy_ignore_bias = p.value("energy_ignore_bias", false);
        if (head.bias.size() != rows.size() || static_cast<int>(rows.size()) != C) {
          throw Error(Errc::FormatError, "softmax head shape does not match num_classes");
        }
        det.payload = std::move(head);
        break;
      }
      case ScorerKind::Maha: {
        if (!p.contains("means")) throw Error(Errc::FormatError, "payload does not match kind");
        MahaDetector m;
        m.dim = dim;
        m.class_means = rows_from_json(p.at("means"), dim);
        m.cov_pinv = Matrix(dim, dim, p.at("cov_pinv").get<std::vector<double>>());
        if (static_cast<int>(m.class_means.size()) != C) {
          throw Error(Errc::FormatError, "means do not match num_classes");
        }
        if (!is_symmetric(m.cov_pinv, 1e-8)) throw Error(Errc::FormatError, "cov_pinv is not symmetric");
        det.payload = std::move(m);
        break;
      }
      case ScorerKind::Cosine: {
        if (!p.contains("bank")) throw Error(Errc::FormatError, "payload does not match kind");
        CosineDetector c;
        c.bank = rows_from_json(p.at("bank"), dim);
        if (c.bank.empty()) throw Error(Errc::FormatError, "empty cosine bank");
        for (const auto& b : c.bank)
          if (std::abs(norm2(b) - 1.0) > 1e-9) throw Error(Errc::FormatError, "bank vector not unit norm");
        det.payload = std::move(c);
        break;
      }
    }
    return det;
  } catch (const json::exception& e) {
    throw Error(Errc::FormatError, std::string("malformed detector: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::FormatError) throw;
    throw Error(Errc::FormatError, e.what());
  }
}

void save_detector(const DetectorArtifact& det, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  out << detector_to_json(det).dump() << '\n';
  if (!out) throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
}

DetectorArtifact load_detector(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for reading");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::FormatError, std::string("detector file is not JSON: ") + e.what());
  }
  return detector_from_json(j);
}

}  // namespace ood
