// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "oodkit/config.hpp"
#include "oodkit/encoder.hpp"
#include "oodkit/harness.hpp"
#include "oodkit/losses.hpp"
#include "oodkit/metrics.hpp"
#include "oodkit/scorers.hpp"
#include "oracles.hpp"

using namespace ood;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(const char* name, bool ok, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- gradients

struct GradInstance {
  EncoderParams params;
  std::vector<Vector> x;
  std::vector<int> y;
};

std::vector<int> mixed_labels(oracle::Rng& rng, std::size_t m, int classes) {
  while (true) {
    auto y = rng.labels(m, classes);
    std::vector<int> counts(classes, 0);
    for (int c : y) ++counts[c];
    if (std::any_of(counts.begin(), counts.end(), [](int c) { return c >= 2; }) &&
        std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) >= 2)
      return y;
  }
}

// Central differences of size 1e-5 must not straddle a hinge, an L1 kink or
// a change of the pair attaining ξ.
bool clear_of_kinks(const std::vector<Vector>& h, const std::vector<int>& y) {
  const double tol = 1e-3;
  for (auto metric : {DistanceMetric::L2, DistanceMetric::L1, DistanceMetric::Cosine}) {
    std::vector<double> same;
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = i + 1; j < h.size(); ++j)
        if (y[i] == y[j]) same.push_back(pair_distance(h[i], h[j], metric));
    std::sort(same.rbegin(), same.rend());
    const double xi = same.front();
    if (same.size() > 1 && same[0] - same[1] < tol) return false;
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = i + 1; j < h.size(); ++j)
        if (y[i] != y[j] && std::abs(pair_distance(h[i], h[j], metric) - xi) < tol) return false;
  }
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = i + 1; j < h.size(); ++j)
      for (std::size_t k = 0; k < h[i].size(); ++k)
        if (std::abs(h[i][k] - h[j][k]) < tol) return false;
  return true;
}

GradInstance random_instance(oracle::Rng& rng, std::uint64_t seed) {
  while (true) {
    const std::size_t in = rng.integer(2, 5);
    const std::size_t rep = rng.integer(2, 8);
    const int classes = rng.integer(2, 3);
    const std::size_t m = rng.integer(3, 6);
    const std::vector<std::size_t> hidden{std::size_t(rng.integer(2, 6))};
    GradInstance g{init_params(in, hidden, rep, classes, seed), {}, mixed_labels(rng, m, classes)};
    std::vector<Vector> h;
    for (std::size_t i = 0; i < m; ++i) {
      g.x.push_back(rng.vec(in, 1.5));
      h.push_back(forward(g.params, g.x.back()).h);
    }
    if (clear_of_kinks(h, g.y)) return g;
  }
}

double naive_cross_entropy(const std::vector<Vector>& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double s = 0.0;
    for (double l : logits[i]) s += std::exp(l);
    total += std::log(s) - logits[i][y[i]];
  }
  return total / static_cast<double>(logits.size());
}

// Largest relative error over every parameter for one loss configuration.
double gradient_error(const GradInstance& g, const LossConfig& cfg) {
  std::vector<ForwardRecord> recs;
  BatchReps reps;
  reps.labels = g.y;
  for (const auto& x : g.x) {
    recs.push_back(forward(g.params, x));
    reps.h.push_back(recs.back().h);
    reps.z.push_back(recs.back().unit_rep());
    reps.logits.push_back(recs.back().logits);
  }
  const LossReport lr = compute_loss(reps, cfg);
  std::vector<UpstreamGrad> up(g.x.size());
  for (std::size_t i = 0; i < up.size(); ++i) {
    up[i].logits = lr.grad_logits[i];
    if (!lr.grad_h.empty()) up[i].h = lr.grad_h[i];
    if (!lr.grad_z.empty()) up[i].z = lr.grad_z[i];
  }
  const ParamGrads analytic = backward(g.params, recs, up);

  // Stop-gradient treats ξ as a constant, so its reference freezes ξ.
  std::optional<double> frozen;
  if (cfg.mode == ContrastiveMode::Margin && cfg.margin_grad == MarginGrad::Stop)
    frozen = adaptive_margin(reps.h, g.y, cfg.metric);

  auto loss = [&](const EncoderParams& p) {
    std::vector<Vector> h, z, logits;
    for (const auto& x : g.x) {
      const auto r = forward(p, x);
      h.push_back(r.h);
      z.push_back(r.unit_rep());
      logits.push_back(r.logits);
    }
    double cont = 0.0;
    if (cfg.mode == ContrastiveMode::Scl) cont = oracle::direct_scl(z, g.y, cfg.tau);
    if (cfg.mode == ContrastiveMode::Margin) cont = oracle::direct_margin(h, g.y, cfg.metric, frozen);
    return naive_cross_entropy(logits, g.y) + cfg.lambda * cont;
  };
  return oracle::fd_param_check(g.params, analytic, loss, 1e-5);
}

void gradient_suite() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, LossConfig>> configs;
  configs.push_back({"ce", {ContrastiveMode::None, 0.3, 0.0, DistanceMetric::L2, MarginGrad::Stop}});
  configs.push_back({"scl", {ContrastiveMode::Scl, 0.3, 2.0, DistanceMetric::L2, MarginGrad::Stop}});
  for (auto metric : {DistanceMetric::L2, DistanceMetric::L1, DistanceMetric::Cosine})
    for (auto mg : {MarginGrad::Stop, MarginGrad::Through})
      configs.push_back({"margin-" + std::string(to_string(metric)) + "-" + std::string(to_string(mg)),
                         {ContrastiveMode::Margin, 0.3, 2.0, metric, mg}});

  oracle::Rng rng(20240601);
  const int instances = 24;
  std::vector<double> worst(configs.size(), 0.0);
  for (int i = 0; i < instances; ++i) {
    const GradInstance g = random_instance(rng, 1000 + i);
    for (std::size_t c = 0; c < configs.size(); ++c) worst[c] = std::max(worst[c], gradient_error(g, configs[c].second));
  }
  const double secs = seconds_since(t0);
  double overall = 0.0;
  std::string detail;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    overall = std::max(overall, worst[c]);
    detail += fmt(" %s=%.1e", configs[c].first.c_str(), worst[c]);
  }
  verdict("gradient-suite", overall < 1e-4 && secs < 30.0,
          fmt("%d instances, max rel err %.2e (< 1e-4), %.1fs (< 30s);", instances, overall, secs) + detail);
}

// ---------------------------------------------------------------- Mahalanobis

void maha_oracle() {
  oracle::Rng rng(77);
  const int instances = 60;
  double worst = 0.0;
  int rank_deficient = 0;
  for (int t = 0; t < instances; ++t) {
    const int classes = rng.integer(1, 4);
    const std::size_t d = rng.integer(1, 5);
    const std::size_t n = rng.integer(classes, 50);
    std::vector<Vector> centers;
    for (int c = 0; c < classes; ++c) centers.push_back(rng.vec(d, 3.0));
    std::vector<Vector> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = i < std::size_t(classes) ? int(i) : rng.integer(0, classes - 1);
      Vector v = rng.vec(d);
      for (std::size_t k = 0; k < d; ++k) v[k] += centers[c][k];
      rows.push_back(v);
      y.push_back(c);
    }
    if (n < d + std::size_t(classes)) ++rank_deficient;
    const MahaDetector det = fit_maha(rows, y, classes);
    const oracle::BruteMaha brute = oracle::brute_fit_maha(rows, y, classes);
    for (int q = 0; q < 10; ++q) {
      const Vector h = rng.vec(d, 4.0);
      const double want = oracle::quadratic_min(brute.means, brute.pinv, h);
      const double got = score_maha(det, h);
      worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
    }
  }
  verdict("maha-oracle", worst <= 1e-9,
          fmt("%d instances (%d rank-deficient), max rel diff %.2e (<= 1e-9)", instances, rank_deficient, worst));
}

// ---------------------------------------------------------------- metrics

void metric_oracle() {
  oracle::Rng rng(5150);
  const int samples = 150;
  int mismatches = 0, with_ties = 0;
  for (int t = 0; t < samples; ++t) {
    ScoreSample s;
    const int grid = rng.integer(2, 40);
    const int n_id = rng.integer(1, 120), n_ood = rng.integer(1, 80);
    for (int i = 0; i < n_id; ++i) s.id_scores.push_back(rng.integer(0, grid) * 0.25);
    for (int i = 0; i < n_ood; ++i) s.ood_scores.push_back(rng.integer(grid / 4, grid + 3) * 0.25);
    std::vector<double> pooled = s.id_scores;
    pooled.insert(pooled.end(), s.ood_scores.begin(), s.ood_scores.end());
    std::sort(pooled.begin(), pooled.end());
    if (std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end()) ++with_ties;
    if (auroc(s) != oracle::brute_auroc(s.id_scores, s.ood_scores)) ++mismatches;
    if (far95(s) != oracle::sweep_far95(s.id_scores, s.ood_scores)) ++mismatches;
  }
  verdict("metric-oracle", mismatches == 0 && with_ties >= 100,
          fmt("%d samples (%d with ties, n <= 200), %d inexact results", samples, with_ties, mismatches));
}

// ---------------------------------------------------------------- benchmark

struct SeedResult {
  std::uint64_t seed;
  double val_accuracy;
  std::vector<ScorerReport> reports;

  const EvalReport& of(ScorerKind k) const {
    for (const auto& r : reports)
      if (r.kind == k) return r.report;
    throw std::runtime_error("missing scorer");
  }
};

std::vector<SeedResult> run_benchmark(const RunConfig& cfg, const RunData& data) {
  std::vector<Example> id_test;
  for (const auto* e : data.id.split(Split::Test)) id_test.push_back(*e);
  std::vector<SeedResult> out;
  for (std::uint64_t s : cfg.seeds) {
    const Checkpoint ck = train_run(cfg, data.id, s);
    out.push_back({s, ck.selected.val_accuracy, evaluate_pair(ck, id_test, data.ood, cfg.scorers)});
  }
  return out;
}

double mean_of(const std::vector<SeedResult>& rs, ScorerKind k, double EvalReport::*field) {
  double s = 0.0;
  for (const auto& r : rs) s += r.of(k).*field;
  return s / static_cast<double>(rs.size());
}

void benchmark_criteria() {
  const auto t0 = Clock::now();
  RunConfig margin = load_run_config(OODKIT_DESK_CONFIG);
  RunConfig none = margin;
  none.loss.mode = ContrastiveMode::None;
  none.loss.lambda = 0.0;
  const RunData data = load_run_data(margin);

  const auto rm = run_benchmark(margin, data);
  const auto rn = run_benchmark(none, data);
  const double bench_secs = seconds_since(t0);

  // (a) Maha vs MSP, averaged over both training modes and every seed.
  const double maha_auroc = (mean_of(rm, ScorerKind::Maha, &EvalReport::auroc) +
                             mean_of(rn, ScorerKind::Maha, &EvalReport::auroc)) / 2.0;
  const double msp_auroc = (mean_of(rm, ScorerKind::Msp, &EvalReport::auroc) +
                            mean_of(rn, ScorerKind::Msp, &EvalReport::auroc)) / 2.0;
  verdict("directional-a", maha_auroc >= msp_auroc && bench_secs < 180.0,
          fmt("mean AUROC maha %.4f >= msp %.4f (margin: %.4f vs %.4f, none: %.4f vs %.4f); %zu seeds, %.1fs",
              maha_auroc, msp_auroc, mean_of(rm, ScorerKind::Maha, &EvalReport::auroc),
              mean_of(rm, ScorerKind::Msp, &EvalReport::auroc), mean_of(rn, ScorerKind::Maha, &EvalReport::auroc),
              mean_of(rn, ScorerKind::Msp, &EvalReport::auroc), rm.size(), bench_secs));

  const double far_margin = mean_of(rm, ScorerKind::Maha, &EvalReport::far95);
  const double far_none = mean_of(rn, ScorerKind::Maha, &EvalReport::far95);
  verdict("directional-b", far_margin <= far_none,
          fmt("mean maha FAR95 margin %.4f <= none %.4f", far_margin, far_none));

  double min_auroc = 1.0;
  for (const auto& r : rm) min_auroc = std::min(min_auroc, r.of(ScorerKind::Maha).auroc);
  const double displaced = mean_of(rm, ScorerKind::Maha, &EvalReport::auroc);
  verdict("directional-c", displaced >= 0.95 && min_auroc >= 0.95,
          fmt("margin+maha AUROC mean %.4f, worst seed %.4f (>= 0.95)", displaced, min_auroc));

  double worst_gap = 0.0;
  std::string per_seed;
  for (std::size_t i = 0; i < rm.size(); ++i) {
    const double gap = std::abs(rm[i].val_accuracy - rn[i].val_accuracy);
    worst_gap = std::max(worst_gap, gap);
    per_seed += fmt(" s%llu=%.3f/%.3f", static_cast<unsigned long long>(rm[i].seed), rm[i].val_accuracy,
                    rn[i].val_accuracy);
  }
  verdict("non-interference", worst_gap <= 0.02,
          fmt("max per-seed |val acc(lambda=2) - val acc(lambda=0)| = %.4f (<= 0.02);", worst_gap) + per_seed);

  // Novel class: the held-out class's mean sits 1.5σ from class 0.
  const auto t1 = Clock::now();
  RunConfig overlap = margin;
  overlap.synth.overlap_offset = 1.5;
  overlap.scorers = {ScorerKind::Maha};
  const Dataset base = load_run_data(overlap).id;
  double novel = 0.0;
  double overlapping_trial = 0.0;
  int overlapping_count = 0;
  const std::size_t trials = static_cast<std::size_t>(overlap.synth.num_classes);
  for (std::uint64_t s : overlap.seeds) {
    const NovelClassResult res = run_novel_class(overlap, base, trials, s);
    novel += res.mean[0].report.auroc;
    for (const auto& t : res.trials)
      if (t.held_out == overlap.synth.num_classes - 1) {
        overlapping_trial += t.reports[0].report.auroc;
        ++overlapping_count;
      }
  }
  novel /= static_cast<double>(overlap.seeds.size());
  overlapping_trial /= std::max(1, overlapping_count);
  verdict("novel-class", novel < displaced,
          fmt("novel-class maha AUROC %.4f < displaced %.4f (overlapping held-out class alone: %.4f); %.1fs", novel,
              displaced, overlapping_trial, seconds_since(t1)));
}

// ---------------------------------------------------------------- invariants

Vector map_by(const Matrix& a, const Vector& v) {
  Vector out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r] += a(r, c) * v[c];
  return out;
}

void scorer_invariants() {
  oracle::Rng rng(99);

  double affine_worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    std::vector<Vector> rows;
    std::vector<int> y;
    for (int i = 0; i < 36; ++i) {
      y.push_back(i % 3);
      Vector v = rng.vec(4);
      v[y.back()] += 4.0;
      rows.push_back(v);
    }
    Matrix a(4, 4);
    for (double& x : a.storage()) x = rng.normal();
    for (std::size_t k = 0; k < 4; ++k) a(k, k) += 3.0;
    std::vector<Vector> mapped;
    for (const auto& v : rows) mapped.push_back(map_by(a, v));
    const auto det = fit_maha(rows, y, 3);
    const auto det_a = fit_maha(mapped, y, 3);
    for (int q = 0; q < 10; ++q) {
      const Vector h = rng.vec(4, 4.0);
      const double base = score_maha(det, h);
      affine_worst = std::max(affine_worst, std::abs(score_maha(det_a, map_by(a, h)) - base) / std::max(1.0, base));
    }
  }

  int transform_breaks = 0;
  for (int t = 0; t < 100; ++t) {
    ScoreSample s;
    for (int i = 0; i < 50; ++i) s.id_scores.push_back(rng.integer(0, 15) * 0.5);
    for (int i = 0; i < 40; ++i) s.ood_scores.push_back(rng.integer(3, 18) * 0.5);
    const double a = auroc(s);
    for (const auto& f : std::vector<std::function<double(double)>>{
             [](double x) { return std::exp(x); }, [](double x) { return 2.5 * x - 4.0; },
             [](double x) { return x * x * x; }}) {
      ScoreSample u = s;
      for (double& x : u.id_scores) x = f(x);
      for (double& x : u.ood_scores) x = f(x);
      transform_breaks += auroc(u) != a;
    }
  }

  // Three tight clusters at 5·e_j with a nearest-mean head; the constructed
  // point sits opposite every class.
  std::vector<Vector> val;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    y.push_back(i % 3);
    Vector v = rng.vec(4, 0.5);
    v[y.back()] += 5.0;
    val.push_back(v);
  }
  ClassifierHead head{Matrix(3, 4), Vector(3)};
  for (int j = 0; j < 3; ++j) {
    head.weights(j, j) = 20.0;
    head.bias[j] = -50.0;
  }
  const Vector far_point{-3.0, -3.0, -3.0, -3.0};
  std::string sign_detail;
  bool sign_ok = true;
  for (ScorerKind kind : kAllScorers) {
    const auto det = fit_detector(kind, head, val, y, 3);
    double max_val = -std::numeric_limits<double>::infinity();
    for (const auto& v : val) max_val = std::max(max_val, det.score(v));
    const double far = det.score(far_point);
    sign_ok = sign_ok && far > max_val;
    sign_detail += fmt(" %s %.3g>%.3g", std::string(to_string(kind)).c_str(), far, max_val);
  }

  verdict("scorer-invariants", affine_worst <= 1e-6 && transform_breaks == 0 && sign_ok,
          fmt("maha affine max rel diff %.2e (<= 1e-6), auroc transform mismatches %d, sign convention:",
              affine_worst, transform_breaks) + sign_detail);
}

}  // namespace

int main() {
  try {
    gradient_suite();
    maha_oracle();
    metric_oracle();
    benchmark_criteria();
    scorer_invariants();
  } catch (const std::exception& e) {
    std::printf("FAIL  %-22s %s\n", "exception", e.what());
    return 1;
  }
  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
