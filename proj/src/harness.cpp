#include "oodkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "oodkit/error.hpp"
#include "oodkit/losses.hpp"
#include "oodkit/rng.hpp"

namespace ood {

using nlohmann::json;

const DetectorArtifact* Checkpoint::detector(ScorerKind kind) const {
  for (const auto& d : detectors)
    if (d.kind == kind) return &d;
  return nullptr;
}

// ------------------------------------------------------------ persistence

namespace {

json point_to_json(const EvalPoint& p) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"step", p.step},
          {"val_accuracy", num(p.val_accuracy)},
          {"val_cont_loss", num(p.val_cont_loss)},
          {"train_loss", num(p.train_loss)}};
}

EvalPoint point_from_json(const json& j) {
  auto num = [&](const char* key) {
    const json& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  EvalPoint p;
  p.step = j.at("step").get<std::size_t>();
  p.val_accuracy = num("val_accuracy");
  p.val_cont_loss = num("val_cont_loss");
  p.train_loss = num("train_loss");
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json history = json::array();
  for (const auto& p : ckpt.history) history.push_back(point_to_json(p));
  json detectors = json::array();
  for (const auto& d : ckpt.detectors) detectors.push_back(detector_to_json(d));
  const json j = {{"format", kCheckpointFormat},
                  {"seed", ckpt.seed},
                  {"config", ckpt.config_text},
                  {"selected", point_to_json(ckpt.selected)},
                  {"history", history},
                  {"params", params_to_json(ckpt.params)},
                  {"detectors", detectors}};
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for reading");
  try {
    const json j = json::parse(in);
    if (j.value("format", std::string{}) != kCheckpointFormat) {
      throw Error(Errc::FormatError, "not an ood-ckpt/1 checkpoint");
    }
    Checkpoint c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config_text = j.at("config").get<std::string>();
    c.selected = point_from_json(j.at("selected"));
    for (const auto& p : j.at("history")) c.history.push_back(point_from_json(p));
    c.params = params_from_json(j.at("params"));
    for (const auto& d : j.at("detectors")) c.detectors.push_back(detector_from_json(d));
    return c;
  } catch (const json::exception& e) {
    throw Error(Errc::FormatError, std::string("malformed checkpoint: ") + e.what());
  }
}

// ------------------------------------------------------------------- data

RunData load_run_data(const RunConfig& cfg) {
  RunData out;
  switch (cfg.source) {
    case DataSource::Synthetic: {
      SynthData s = gen_synthetic(cfg.synth);
      out.id = std::move(s.id);
      out.ood = std::move(s.ood);
      out.ood_name = "synth-ood";
      break;
    }
    case DataSource::Embeddings: {
      out.id = load_embeddings(cfg.id_path);
      if (!cfg.ood_path.empty()) {
        Dataset ood = load_embeddings(cfg.ood_path);
        if (ood.dim != out.id.dim) {
          throw Error(Errc::DimensionMismatch, "OOD file dimension differs from the ID file");
        }
        out.ood_name = ood.name;
        out.ood = std::move(ood.examples);
      }
      break;
    }
    case DataSource::Text: {
      out.id = load_text_corpus(cfg.id_path, cfg.text_dim, cfg.text_seed);
      if (!cfg.ood_path.empty()) {
        Dataset ood = load_text_corpus(cfg.ood_path, cfg.text_dim, cfg.text_seed, 0);
        out.ood_name = ood.name;
        out.ood = std::move(ood.examples);
      }
      break;
    }
  }
  validate_for_training(out.id);
  return out;
}

std::vector<ForwardRecord> encode(const EncoderParams& params, std::span<const Example* const> rows) {
  std::vector<ForwardRecord> out;
  out.reserve(rows.size());
  for (const Example* ex : rows) out.push_back(forward(params, ex->vector));
  return out;
}

// --------------------------------------------------------------- training

namespace {

std::size_t argmax(const Vector& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

BatchReps batch_reps(std::span<const ForwardRecord> records, std::span<const Example* const> rows,
                     bool need_z) {
  BatchReps reps;
  for (std::size_t i = 0; i < records.size(); ++i) {
    reps.h.push_back(records[i].h);
    if (need_z) reps.z.push_back(records[i].unit_rep());
    reps.logits.push_back(records[i].logits);
    reps.labels.push_back(*rows[i]->label);
  }
  return reps;
}

std::vector<const Example*> labelled(const Dataset& ds, Split s) {
  auto rows = ds.split(s);
  std::erase_if(rows, [](const Example* e) { return !e->label; });
  return rows;
}

bool better(const EvalPoint& cand, const EvalPoint* best) {
  if (!std::isfinite(cand.val_accuracy) || !std::isfinite(cand.val_cont_loss)) return false;
  if (!best) return true;
  if (cand.val_accuracy != best->val_accuracy) return cand.val_accuracy > best->val_accuracy;
  return cand.val_cont_loss < best->val_cont_loss;
}

}  // namespace

EvalPoint evaluate_validation(const EncoderParams& params, const Dataset& ds, const LossConfig& loss) {
  const auto rows = labelled(ds, Split::Val);
  EvalPoint p;
  if (rows.empty()) {
    p.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  const auto records = encode(params, rows);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    hits += static_cast<int>(argmax(records[i].logits)) == *rows[i]->label ? 1 : 0;
  p.val_accuracy = static_cast<double>(hits) / static_cast<double>(rows.size());
  if (loss.mode != ContrastiveMode::None && rows.size() >= 2) {
    const BatchReps reps = batch_reps(records, rows, loss.mode == ContrastiveMode::Scl);
    p.val_cont_loss = contrastive_loss(reps, loss).loss;
  }
  return p;
}

std::vector<DetectorArtifact> fit_detectors(const EncoderParams& params, const Dataset& ds,
                                            const RunConfig& cfg) {
  auto rows = labelled(ds, Split::Val);
  if (cfg.maha_fit_train_val) {
    auto train = labelled(ds, Split::Train);
    rows.insert(rows.begin(), train.begin(), train.end());
  }
  const auto records = encode(params, rows);
  std::vector<Vector> hs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    hs.push_back(records[i].h);
    labels.push_back(*rows[i]->label);
  }
  const ClassifierHead head{params.softmax_weights, params.softmax_bias, cfg.energy_ignore_bias};
  std::vector<DetectorArtifact> out;
  for (ScorerKind k : cfg.scorers) out.push_back(fit_detector(k, head, hs, labels, ds.num_classes));
  return out;
}

Checkpoint train_run(const RunConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  validate(cfg);
  validate_for_training(ds);
  const std::size_t n_train = ds.count(Split::Train);
  const std::size_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = cfg.epochs * per_epoch;
  const std::size_t interval = cfg.eval_interval ? cfg.eval_interval : per_epoch;

  EncoderParams params = init_params(ds.dim, cfg.hidden_dims, cfg.rep_dim,
                                     static_cast<std::size_t>(ds.num_classes), derive_seed(seed, 1));
  AdamState adam(cfg.lr, total);

  Checkpoint best;
  best.seed = seed;
  best.config_text = to_config_text(cfg);
  best.history.push_back(evaluate_validation(params, ds, cfg.loss));
  bool have_best = false;

  const bool need_z = cfg.loss.mode == ContrastiveMode::Scl;
  std::size_t step = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : batch_iter(ds, cfg.batch_size, derive_seed(seed, 1000 + epoch))) {
      std::vector<const Example*> rows;
      for (std::size_t idx : batch) rows.push_back(&ds.examples[idx]);
      const auto records = encode(params, rows);
      const BatchReps reps = batch_reps(records, rows, need_z && rows.size() >= 2);

      // A final batch of one example has no pairs; it trains on L_ce alone.
      LossConfig loss = cfg.loss;
      if (rows.size() < 2) loss.mode = ContrastiveMode::None;
      const LossReport report = compute_loss(reps, loss);
      if (!std::isfinite(report.total)) {
        throw Error(Errc::DivergenceError, "loss is not finite at step " + std::to_string(step));
      }
      loss_sum += report.total;
      ++loss_count;

      std::vector<UpstreamGrad> upstream(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        upstream[i].logits = report.grad_logits[i];
        if (!report.grad_h.empty()) upstream[i].h = report.grad_h[i];
        if (!report.grad_z.empty()) upstream[i].z = report.grad_z[i];
      }
      adam_step(adam, params, backward(params, records, upstream));
      ++step;

      if (step % interval == 0 || step == total) {
        EvalPoint p = evaluate_validation(params, ds, cfg.loss);
        p.step = step;
        p.train_loss = loss_sum / static_cast<double>(loss_count);
        loss_sum = 0.0;
        loss_count = 0;
        best.history.push_back(p);
        if (better(p, have_best ? &best.selected : nullptr)) {
          best.selected = p;
          best.params = params;
          best.detectors = fit_detectors(params, ds, cfg);
          have_best = true;
        }
      }
    }
  }
  if (!have_best) {
    throw Error(Errc::DivergenceError, "no evaluation produced finite validation metrics");
  }
  return best;
}

// ------------------------------------------------------------- evaluation

std::vector<ScorerReport> evaluate_pair(const Checkpoint& ckpt, std::span<const Example> id_test,
                                        std::span<const Example> ood, std::span<const ScorerKind> kinds) {
  std::vector<const Example*> id_rows;
  std::vector<const Example*> ood_rows;
  for (const auto& e : id_test) id_rows.push_back(&e);
  for (const auto& e : ood) ood_rows.push_back(&e);
  const auto id_rec = encode(ckpt.params, id_rows);
  const auto ood_rec = encode(ckpt.params, ood_rows);

  std::optional<double> acc;
  {
    std::vector<int> pred, labels;
    for (std::size_t i = 0; i < id_rows.size(); ++i) {
      if (!id_rows[i]->label) continue;
      pred.push_back(static_cast<int>(argmax(id_rec[i].logits)));
      labels.push_back(*id_rows[i]->label);
    }
    if (!labels.empty()) acc = accuracy(pred, labels);
  }

  std::vector<ScorerReport> out;
  for (ScorerKind k : kinds) {
    const DetectorArtifact* det = ckpt.detector(k);
    if (!det) {
      throw Error(Errc::InvalidConfig, "checkpoint has no fitted '" + std::string(to_string(k)) + "' detector");
    }
    ScoreSample s;
    for (const auto& r : id_rec) s.id_scores.push_back(det->score(r.h));
    for (const auto& r : ood_rec) s.ood_scores.push_back(det->score(r.h));
    EvalReport rep = evaluate_scores(s);
    rep.accuracy = acc;
    out.push_back({k, rep});
  }
  return out;
}

NovelClassResult run_novel_class(const RunConfig& cfg, const Dataset& base, std::size_t trials,
                                 std::uint64_t seed) {
  if (base.num_classes < 3) throw Error(Errc::TooFewClasses, "novel-class detection needs C >= 3");
  if (trials < 1) throw Error(Errc::InvalidConfig, "trials must be >= 1");
  const auto C = static_cast<std::uint64_t>(base.num_classes);
  const std::uint64_t start = derive_seed(seed, 0x6E6F76) % C;

  NovelClassResult out;
  for (std::size_t t = 0; t < trials; ++t) {
    const int held = static_cast<int>((start + t) % C);
    const NovelClassSplit split = split_novel_class(base, held);
    const Checkpoint ckpt = train_run(cfg, split.id, seed);
    std::vector<Example> id_test;
    for (const Example* e : split.id.split(Split::Test)) id_test.push_back(*e);
    out.trials.push_back({held, evaluate_pair(ckpt, id_test, split.ood, cfg.scorers)});
  }

  for (std::size_t k = 0; k < cfg.scorers.size(); ++k) {
    ScorerReport mean{cfg.scorers[k], {}};
    double acc = 0.0;
    bool have_acc = true;
    for (const auto& trial : out.trials) {
      const EvalReport& r = trial.reports[k].report;
      mean.report.auroc += r.auroc;
      mean.report.far95 += r.far95;
      mean.report.id_count += r.id_count;
      mean.report.ood_count += r.ood_count;
      if (r.accuracy) acc += *r.accuracy;
      else have_acc = false;
    }
    const double n = static_cast<double>(out.trials.size());
    mean.report.auroc /= n;
    mean.report.far95 /= n;
    if (have_acc) mean.report.accuracy = acc / n;
    out.mean.push_back(mean);
  }
  return out;
}

}  // namespace ood
