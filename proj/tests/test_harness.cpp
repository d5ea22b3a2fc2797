#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "oodkit/config.hpp"
#include "oodkit/error.hpp"
#include "oodkit/harness.hpp"
#include "oodkit/report.hpp"

using namespace ood;
namespace fs = std::filesystem;

namespace {

Error error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected ood::Error");
  return Error(Errc::IoError, "unreachable");
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.synth.num_classes = 3;
  cfg.synth.dim = 8;
  cfg.synth.per_class = 60;
  cfg.synth.ood_count = 40;
  cfg.synth.seed = 3;
  cfg.hidden_dims = {16};
  cfg.rep_dim = 8;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.lr = 5e-3;
  cfg.seeds = {1};
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "oodkit_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Example> test_split(const Dataset& ds) {
  std::vector<Example> out;
  for (const auto* e : ds.split(Split::Test)) out.push_back(*e);
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_run_config("# comment\nloss.mode = scl\nloss.tau = 0.5\nencoder.hidden = 8,4\n");
  CHECK(cfg.loss.mode == ContrastiveMode::Scl);
  CHECK(cfg.loss.tau == 0.5);
  CHECK(cfg.hidden_dims == std::vector<std::size_t>{8, 4});
  CHECK(parse_run_config("encoder.hidden = none\n").hidden_dims.empty());

  const Error unknown = error_of([] { parse_run_config("name = x\n\nloss.temperature = 1\n"); });
  CHECK(unknown.code() == Errc::InvalidConfig);
  CHECK(unknown.line() == 3);
  CHECK(error_of([] { parse_run_config("optim.epochs = ten\n"); }).line() == 1);
  CHECK(error_of([] { parse_run_config("optim.batch_size = 1\n"); }).code() == Errc::InvalidConfig);
  CHECK(error_of([] { parse_run_config("scorers = msp,odin\n"); }).code() == Errc::InvalidConfig);

  // preset is applied first, so the later-listed lr still wins
  const RunConfig ref = parse_run_config("optim.lr = 0.01\npreset = reference\n");
  CHECK(ref.lr == 0.01);
  CHECK(ref.batch_size == 32);
  CHECK(ref.epochs == 10);
  CHECK(ref.loss.tau == 0.3);
  CHECK(ref.loss.lambda == 2.0);
  CHECK(parse_run_config("preset = reference\n").lr == 1e-5);

  RunConfig custom = small_config();
  custom.loss.metric = DistanceMetric::Cosine;
  custom.loss.margin_grad = MarginGrad::Through;
  custom.lr = 0.1 / 3.0;
  custom.scorers = {ScorerKind::Maha, ScorerKind::Msp};
  custom.maha_fit_train_val = true;
  const std::string text = to_config_text(custom);
  CHECK(to_config_text(parse_run_config(text)) == text);
  CHECK(parse_run_config(text).lr == custom.lr);
}

TEST_CASE("train_run") {
  const RunConfig base = small_config();
  const Dataset ds = load_run_data(base).id;

  SUBCASE("plain cross-entropy converges") {
    RunConfig cfg = base;
    cfg.loss.mode = ContrastiveMode::None;
    cfg.loss.lambda = 0.0;
    const Checkpoint ck = train_run(cfg, ds, 1);
    CHECK(ck.selected.val_accuracy >= 0.95);
    CHECK(ck.history.back().val_accuracy >= 0.95);
  }
  SUBCASE("margin training lowers the validation margin loss") {
    const Checkpoint ck = train_run(base, ds, 2);
    REQUIRE(ck.history.size() >= 2);
    CHECK(ck.history.front().step == 0);
    CHECK(ck.history.back().val_cont_loss < ck.history.front().val_cont_loss);
    // one evaluation per epoch plus step 0
    CHECK(ck.history.size() == base.epochs + 1);
    CHECK(ck.selected.step > 0);
    CHECK(std::isfinite(ck.selected.val_accuracy));
    CHECK(std::isfinite(ck.selected.val_cont_loss));
    CHECK(ck.detectors.size() == 4);
    for (const auto& p : ck.history)
      if (p.step > 0) CHECK(ck.selected.val_accuracy >= p.val_accuracy);
  }
  SUBCASE("deterministic per seed") {
    const Checkpoint a = train_run(base, ds, 5);
    const Checkpoint b = train_run(base, ds, 5);
    CHECK(a.params == b.params);
    CHECK(a.selected.step == b.selected.step);
    CHECK(a.selected.val_cont_loss == b.selected.val_cont_loss);
    CHECK_FALSE(train_run(base, ds, 6).params == a.params);
  }
  SUBCASE("eval interval") {
    RunConfig cfg = base;
    cfg.eval_interval = 7;
    const Checkpoint ck = train_run(cfg, ds, 1);
    const std::size_t per_epoch = (ds.count(Split::Train) + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = per_epoch * cfg.epochs;
    CHECK(ck.history.back().step == total);
    for (std::size_t i = 1; i + 1 < ck.history.size(); ++i) CHECK(ck.history[i].step == 7 * i);
  }
  SUBCASE("checkpoint round trip") {
    const Checkpoint ck = train_run(base, ds, 1);
    const fs::path p = scratch("ckpt") / "ck.json";
    save_checkpoint(ck, p);
    const Checkpoint back = load_checkpoint(p);
    CHECK(back.params == ck.params);
    CHECK(back.seed == 1);
    CHECK(back.selected.step == ck.selected.step);
    CHECK(back.history.size() == ck.history.size());
    REQUIRE(back.detector(ScorerKind::Maha) != nullptr);
    const auto h = forward(ck.params, ds.examples[0].vector).h;
    CHECK(back.detector(ScorerKind::Maha)->score(h) == ck.detector(ScorerKind::Maha)->score(h));
  }
}

TEST_CASE("evaluate_pair") {
  RunConfig cfg = small_config();
  cfg.synth.per_class = 200;
  const RunData data = load_run_data(cfg);
  const Checkpoint ck = train_run(cfg, data.id, 1);
  const auto id_test = test_split(data.id);

  const auto same = evaluate_pair(ck, id_test, id_test, kAllScorers);
  REQUIRE(same.size() == 4);
  for (const auto& r : same) {
    CHECK(r.report.auroc == 0.5);
    REQUIRE(r.report.accuracy.has_value());
  }
  const auto two = std::vector<ScorerKind>{ScorerKind::Maha, ScorerKind::Msp};
  const auto reports = evaluate_pair(ck, id_test, data.ood, two);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].kind == ScorerKind::Maha);
  CHECK(reports[0].report.auroc > 0.95);
  CHECK(reports[0].report.ood_count == data.ood.size());
  CHECK(reports[0].report.id_count == id_test.size());

  std::vector<Example> bad = id_test;
  bad[0].vector.push_back(0.0);
  CHECK(error_of([&] { evaluate_pair(ck, bad, data.ood, two); }).code() == Errc::DimensionMismatch);
}

TEST_CASE("run_novel_class") {
  RunConfig cfg = small_config();
  cfg.synth.num_classes = 4;
  cfg.epochs = 3;
  cfg.scorers = {ScorerKind::Maha, ScorerKind::Msp};
  const Dataset ds = load_run_data(cfg).id;

  const auto res = run_novel_class(cfg, ds, 4, 11);
  REQUIRE(res.trials.size() == 4);
  std::set<int> held;
  for (const auto& t : res.trials) held.insert(t.held_out);
  CHECK(held == std::set<int>{0, 1, 2, 3});
  // rotation: consecutive trials hold out consecutive classes
  for (std::size_t i = 1; i < 4; ++i) CHECK(res.trials[i].held_out == (res.trials[i - 1].held_out + 1) % 4);

  REQUIRE(res.mean.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    double auroc = 0.0, far = 0.0;
    for (const auto& t : res.trials) {
      auroc += t.reports[k].report.auroc;
      far += t.reports[k].report.far95;
    }
    CHECK(std::abs(res.mean[k].report.auroc - auroc / 4) < 1e-12);
    CHECK(std::abs(res.mean[k].report.far95 - far / 4) < 1e-12);
  }

  SynthConfig two = cfg.synth;
  two.num_classes = 2;
  CHECK(error_of([&] { run_novel_class(cfg, gen_synthetic(two).id, 1, 0); }).code() == Errc::TooFewClasses);
}

TEST_CASE("emit_reports") {
  const fs::path empty_dir = scratch("empty");
  emit_reports(std::vector<ReportRow>{}, empty_dir);
  CHECK(slurp(empty_dir / "report.csv") == "id_dataset,ood_dataset,loss_mode,scorer,auroc,far95,accuracy,seed\n");

  std::vector<ReportRow> rows;
  for (const char* seed : {"1", "2"})
    for (const char* scorer : {"maha", "msp"})
      rows.push_back({"synth", "synth-ood", "margin", scorer, seed[0] == '1' ? 0.9 : 0.8, 0.25, 0.5, seed});
  const auto all = with_average_rows(rows);
  REQUIRE(all.size() == 6);
  CHECK(all[4].seed == "avg");
  CHECK(all[4].scorer == "maha");
  CHECK(all[4].auroc == doctest::Approx(0.85));
  CHECK(all[5].scorer == "msp");

  const fs::path dir = scratch("rows");
  emit_reports(rows, dir);
  const std::string csv = slurp(dir / "report.csv");
  const std::string md = slurp(dir / "summary.md");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(csv.find("synth,synth-ood,margin,maha,0.850000,0.250000,0.500000,avg") != std::string::npos);
  CHECK(md.find("85.0 / 25.0") != std::string::npos);
  emit_reports(rows, dir);
  CHECK(slurp(dir / "report.csv") == csv);
  CHECK(slurp(dir / "summary.md") == md);

  CHECK(error_of([&] { emit_reports(rows, "/proc/oodkit/nope"); }).code() == Errc::IoError);
}

TEST_CASE("cli exit codes") {
  const char* cli = std::getenv("OODKIT_CLI");
  REQUIRE(cli != nullptr);
  const fs::path dir = scratch("cli");
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };

  std::ofstream(dir / "tiny.conf") << "synth.num_classes = 3\nsynth.dim = 6\nsynth.per_class = 30\n"
                                      "synth.ood_count = 20\nencoder.hidden = 8\nencoder.dim = 6\n"
                                      "optim.epochs = 2\noptim.batch_size = 16\nseeds = 1\n";
  std::ofstream(dir / "bad.conf") << "optim.speed = 3\n";

  CHECK(run("gen-synth --config " + (dir / "tiny.conf").string() + " --out " + (dir / "data").string()) == 0);
  CHECK(fs::exists(dir / "data" / "id.jsonl"));
  CHECK(run("train --config " + (dir / "tiny.conf").string() + " --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "ckpt-seed1.json"));
  CHECK(fs::exists(dir / "run" / "report.csv"));

  const std::string ck = (dir / "run" / "ckpt-seed1.json").string();
  const std::string id = (dir / "data" / "id.jsonl").string();
  const std::string ood = (dir / "data" / "ood.jsonl").string();
  CHECK(run("eval --ckpt " + ck + " --id " + id + " --ood " + ood + " --scorers maha,msp") == 0);
  CHECK(run("fit --ckpt " + ck + " --val " + id + " --scorer cosine --out " + (dir / "det.json").string()) == 0);
  CHECK(run("score --det " + (dir / "det.json").string() + " --ckpt " + ck + " --input " + ood + " --out " +
            (dir / "scores.csv").string()) == 0);
  CHECK(run("project --ckpt " + ck + " --input " + id + " --out " + (dir / "pca.csv").string()) == 0);
  CHECK(slurp(dir / "pca.csv").rfind("id,group,x,y\n", 0) == 0);

  CHECK(run("train --config " + (dir / "bad.conf").string()) == 1);
  CHECK(run("train") == 1);
  CHECK(run("bogus-command") == 1);
  CHECK(run("train --config " + (dir / "missing.conf").string()) == 2);
  CHECK(run("eval --ckpt " + (dir / "nope.json").string() + " --id " + id + " --ood " + ood) == 2);
}
