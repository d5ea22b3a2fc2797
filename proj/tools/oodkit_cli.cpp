// oodkit command-line interface.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oodkit/config.hpp"
#include "oodkit/data.hpp"
#include "oodkit/error.hpp"
#include "oodkit/harness.hpp"
#include "oodkit/report.hpp"

namespace {

using namespace ood;
namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create '" + dir.string() + "': " + ec.message());
}

std::vector<ReportRow> rows_for(const std::string& id_name, const std::string& ood_name,
                                const std::string& mode, const std::string& seed,
                                const std::vector<ScorerReport>& reports) {
  std::vector<ReportRow> rows;
  for (const auto& r : reports) {
    rows.push_back({id_name, ood_name, mode, std::string(to_string(r.kind)), r.report.auroc, r.report.far95,
                    r.report.accuracy, seed});
  }
  return rows;
}

std::vector<Example> test_rows(const Dataset& ds) {
  std::vector<Example> out;
  for (const Example* e : ds.split(Split::Test)) out.push_back(*e);
  return out;
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_run_config(path);
  if (seed) {
    cfg.seeds = {*seed};
    cfg.synth.seed = *seed;
  }
  return cfg;
}

int cmd_gen_synth(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(config, seed);
  const SynthData data = gen_synthetic(cfg.synth);
  ensure_dir(out);
  write_embeddings(fs::path(out) / "id.jsonl", data.id);
  Dataset ood{"synth-ood", data.id.num_classes, data.id.dim, data.ood};
  write_embeddings(fs::path(out) / "ood.jsonl", ood);
  std::cout << "wrote " << data.id.examples.size() << " ID and " << data.ood.size() << " OOD examples to "
            << out << '\n';
  return 0;
}

int cmd_train(const std::string& config, std::optional<std::string> out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(config, seed);
  if (out) cfg.out_dir = *out;
  const RunData data = load_run_data(cfg);
  ensure_dir(cfg.out_dir);

  std::vector<ReportRow> rows;
  for (std::uint64_t s : cfg.seeds) {
    const Checkpoint ckpt = train_run(cfg, data.id, s);
    const fs::path ckpt_path = cfg.out_dir / ("ckpt-seed" + std::to_string(s) + ".json");
    save_checkpoint(ckpt, ckpt_path);

    std::ofstream hist(cfg.out_dir / ("history-seed" + std::to_string(s) + ".csv"));
    if (!hist) throw Error(Errc::IoError, "cannot write history file");
    hist << "step,val_accuracy,val_cont_loss,train_loss\n";
    for (const auto& p : ckpt.history) {
      hist << p.step << ',' << p.val_accuracy << ',' << p.val_cont_loss << ',' << p.train_loss << '\n';
    }
    std::cout << "seed " << s << ": selected step " << ckpt.selected.step << ", val accuracy "
              << ckpt.selected.val_accuracy << ", val contrastive loss " << ckpt.selected.val_cont_loss
              << " -> " << ckpt_path.string() << '\n';

    if (!data.ood.empty()) {
      const auto reports = evaluate_pair(ckpt, test_rows(data.id), data.ood, cfg.scorers);
      auto r = rows_for(data.id.name, data.ood_name, std::string(to_string(cfg.loss.mode)),
                        std::to_string(s), reports);
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }
  if (!rows.empty()) {
    emit_reports(rows, cfg.out_dir);
    std::cout << render_markdown_summary(with_average_rows(rows));
  }
  return 0;
}

int cmd_fit(const std::string& ckpt_path, const std::string& val_path, const std::string& scorer,
            const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset val = load_embeddings(val_path);
  auto rows = val.split(Split::Val);
  if (rows.empty()) {
    for (const auto& e : val.examples)
      if (e.label) rows.push_back(&e);
  }
  std::erase_if(rows, [](const Example* e) { return !e->label; });
  const auto records = encode(ckpt.params, rows);
  std::vector<Vector> hs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    hs.push_back(records[i].h);
    labels.push_back(*rows[i]->label);
  }
  const ClassifierHead head{ckpt.params.softmax_weights, ckpt.params.softmax_bias, false};
  const DetectorArtifact det = fit_detector(parse_scorer_kind(scorer), head, hs, labels,
                                            static_cast<int>(ckpt.params.num_classes()));
  save_detector(det, out);
  std::cout << "fitted " << scorer << " detector on " << rows.size() << " rows -> " << out << '\n';
  return 0;
}

int cmd_score(const std::string& det_path, const std::string& input, const std::string& out,
              std::optional<std::string> ckpt_path) {
  const DetectorArtifact det = load_detector(det_path);
  const Dataset ds = load_embeddings(input);
  std::optional<Checkpoint> ckpt;
  if (ckpt_path) ckpt = load_checkpoint(*ckpt_path);

  std::ofstream o(out);
  if (!o) throw Error(Errc::IoError, "cannot open '" + out + "' for writing");
  o << "id,label,split,score\n";
  char buf[64];
  for (const auto& e : ds.examples) {
    const double s = ckpt ? det.score(forward(ckpt->params, e.vector).h) : det.score(e.vector);
    std::snprintf(buf, sizeof buf, "%.17g", s);
    o << e.id << ',' << (e.label ? std::to_string(*e.label) : std::string()) << ',' << split_name(e.split)
      << ',' << buf << '\n';
  }
  if (!o) throw Error(Errc::IoError, "write to '" + out + "' failed");
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& id_path, const std::string& ood_path,
             const std::string& scorers, std::optional<std::string> out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset id = load_embeddings(id_path);
  const Dataset ood = load_embeddings(ood_path);
  std::vector<Example> id_test = test_rows(id);
  if (id_test.empty()) id_test = id.examples;
  const auto kinds = parse_scorer_list(scorers);
  const RunConfig cfg = parse_run_config(ckpt.config_text);
  const auto reports = evaluate_pair(ckpt, id_test, ood.examples, kinds);
  const auto rows = rows_for(id.name, ood.name, std::string(to_string(cfg.loss.mode)),
                             std::to_string(ckpt.seed), reports);
  std::cout << render_csv(rows);
  if (out) emit_reports(rows, *out);
  return 0;
}

int cmd_novel_class(const std::string& config, std::size_t trials, std::optional<std::string> out,
                    std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(config, seed);
  if (out) cfg.out_dir = *out;
  const RunData data = load_run_data(cfg);
  std::vector<ReportRow> rows;
  for (std::uint64_t s : cfg.seeds) {
    const NovelClassResult res = run_novel_class(cfg, data.id, trials, s);
    for (const auto& t : res.trials) {
      auto r = rows_for(data.id.name, "held-out-" + std::to_string(t.held_out),
                        std::string(to_string(cfg.loss.mode)), std::to_string(s), t.reports);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    auto m = rows_for(data.id.name, "novel-class", std::string(to_string(cfg.loss.mode)),
                      std::to_string(s), res.mean);
    rows.insert(rows.end(), m.begin(), m.end());
  }
  emit_reports(rows, cfg.out_dir);
  std::cout << render_csv(with_average_rows(rows));
  return 0;
}

int cmd_project(const std::string& ckpt_path, const std::string& input, const std::string& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset ds = load_embeddings(input);
  std::vector<Vector> hs;
  for (const auto& e : ds.examples) hs.push_back(forward(ckpt.params, e.vector).h);
  const auto xy = pca_project_2d(hs);
  std::vector<ProjectedPoint> points;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& e = ds.examples[i];
    points.push_back({e.id, e.label ? "id:" + std::to_string(*e.label) : std::string("ood"), xy[i]});
  }
  emit_projection(points, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oodkit: contrastive training and OOD detection toolkit"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override every seed in the config");

  std::string config, out, ckpt, val, scorer, det, input, id, ood, scorers = "msp,energy,maha,cosine";
  std::optional<std::string> out_opt, ckpt_opt;
  std::size_t trials = 5;

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic ID/OOD embedding pair");
  gen->add_option("--config", config)->required();
  gen->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "Train one checkpoint per seed and evaluate on OOD data");
  train->add_option("--config", config)->required();
  train->add_option("--out", out_opt);

  auto* fit = app.add_subcommand("fit", "Fit a detector on validation rows");
  fit->add_option("--ckpt", ckpt)->required();
  fit->add_option("--val", val)->required();
  fit->add_option("--scorer", scorer)->required();
  fit->add_option("--out", out)->required();

  auto* score = app.add_subcommand("score", "Write per-example OOD scores as CSV");
  score->add_option("--det", det)->required();
  score->add_option("--input", input)->required();
  score->add_option("--out", out)->required();
  score->add_option("--ckpt", ckpt_opt, "Encode inputs with this checkpoint before scoring");

  auto* eval = app.add_subcommand("eval", "AUROC / FAR95 of a checkpoint's detectors");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--id", id)->required();
  eval->add_option("--ood", ood)->required();
  eval->add_option("--scorers", scorers);
  eval->add_option("--out", out_opt);

  auto* novel = app.add_subcommand("novel-class", "Hold out one class per trial and detect it");
  novel->add_option("--config", config)->required();
  novel->add_option("--trials", trials);
  novel->add_option("--out", out_opt);

  auto* project = app.add_subcommand("project", "PCA 2-D projection of encoded representations");
  project->add_option("--ckpt", ckpt)->required();
  project->add_option("--input", input)->required();
  project->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_synth(config, out, seed);
    if (*train) return cmd_train(config, out_opt, seed);
    if (*fit) return cmd_fit(ckpt, val, scorer, out);
    if (*score) return cmd_score(det, input, out, ckpt_opt);
    if (*eval) return cmd_eval(ckpt, id, ood, scorers, out_opt);
    if (*novel) return cmd_novel_class(config, trials, out_opt, seed);
    if (*project) return cmd_project(ckpt, input, out);
  } catch (const ood::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ood::Errc::IoError ? 2 : 1;
  }
  return 1;
}
