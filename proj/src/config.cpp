#include "oodkit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "oodkit/error.hpp"

namespace ood {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    const auto item = trim(s.substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw Error(Errc::InvalidConfig, "cannot parse '" + std::string(s) + "' as a number");
  }
  return value;
}

double parse_double(std::string_view s) {
  // from_chars for double is missing on older libstdc++; strtod is exact too.
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    throw Error(Errc::InvalidConfig, "cannot parse '" + tmp + "' as a number");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(Errc::InvalidConfig, "cannot parse '" + std::string(s) + "' as a boolean");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, ScorerKind>) out += to_string(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"name", [](RunConfig& c, std::string_view v) { c.name = v; }},
      {"source",
       [](RunConfig& c, std::string_view v) {
         if (v == "synthetic") c.source = DataSource::Synthetic;
         else if (v == "embeddings") c.source = DataSource::Embeddings;
         else if (v == "text") c.source = DataSource::Text;
         else throw Error(Errc::InvalidConfig, "unknown source '" + std::string(v) + "'");
       }},
      {"synth.num_classes", [](RunConfig& c, std::string_view v) { c.synth.num_classes = parse_number<int>(v); }},
      {"synth.dim", [](RunConfig& c, std::string_view v) { c.synth.dim = parse_number<std::size_t>(v); }},
      {"synth.per_class", [](RunConfig& c, std::string_view v) { c.synth.per_class = parse_number<std::size_t>(v); }},
      {"synth.std", [](RunConfig& c, std::string_view v) { c.synth.intra_std = parse_double(v); }},
      {"synth.separation", [](RunConfig& c, std::string_view v) { c.synth.separation = parse_double(v); }},
      {"synth.ood_displacement", [](RunConfig& c, std::string_view v) { c.synth.ood_displacement = parse_double(v); }},
      {"synth.ood_count", [](RunConfig& c, std::string_view v) { c.synth.ood_count = parse_number<std::size_t>(v); }},
      {"synth.overlap_offset", [](RunConfig& c, std::string_view v) { c.synth.overlap_offset = parse_double(v); }},
      {"synth.seed", [](RunConfig& c, std::string_view v) { c.synth.seed = parse_number<std::uint64_t>(v); }},
      {"data.id_path", [](RunConfig& c, std::string_view v) { c.id_path = std::string(v); }},
      {"data.ood_path", [](RunConfig& c, std::string_view v) { c.ood_path = std::string(v); }},
      {"text.dim", [](RunConfig& c, std::string_view v) { c.text_dim = parse_number<std::size_t>(v); }},
      {"text.seed", [](RunConfig& c, std::string_view v) { c.text_seed = parse_number<std::uint64_t>(v); }},
      {"loss.mode", [](RunConfig& c, std::string_view v) { c.loss.mode = parse_contrastive_mode(v); }},
      {"loss.tau", [](RunConfig& c, std::string_view v) { c.loss.tau = parse_double(v); }},
      {"loss.lambda", [](RunConfig& c, std::string_view v) { c.loss.lambda = parse_double(v); }},
      {"loss.metric", [](RunConfig& c, std::string_view v) { c.loss.metric = parse_distance_metric(v); }},
      {"loss.margin_grad", [](RunConfig& c, std::string_view v) { c.loss.margin_grad = parse_margin_grad(v); }},
      {"encoder.hidden",
       [](RunConfig& c, std::string_view v) {
         c.hidden_dims.clear();
         if (v == "none") return;
         for (auto item : split_csv(v)) c.hidden_dims.push_back(parse_number<std::size_t>(item));
       }},
      {"encoder.dim", [](RunConfig& c, std::string_view v) { c.rep_dim = parse_number<std::size_t>(v); }},
      {"optim.lr", [](RunConfig& c, std::string_view v) { c.lr = parse_double(v); }},
      {"optim.epochs", [](RunConfig& c, std::string_view v) { c.epochs = parse_number<std::size_t>(v); }},
      {"optim.batch_size", [](RunConfig& c, std::string_view v) { c.batch_size = parse_number<std::size_t>(v); }},
      {"optim.eval_interval", [](RunConfig& c, std::string_view v) { c.eval_interval = parse_number<std::size_t>(v); }},
      {"scorers", [](RunConfig& c, std::string_view v) { c.scorers = parse_scorer_list(v); }},
      {"scorer.energy_ignore_bias", [](RunConfig& c, std::string_view v) { c.energy_ignore_bias = parse_bool(v); }},
      {"scorer.maha_fit",
       [](RunConfig& c, std::string_view v) {
         if (v == "val") c.maha_fit_train_val = false;
         else if (v == "train+val") c.maha_fit_train_val = true;
         else throw Error(Errc::InvalidConfig, "scorer.maha_fit must be val or train+val");
       }},
      {"seeds",
       [](RunConfig& c, std::string_view v) {
         c.seeds.clear();
         for (auto item : split_csv(v)) c.seeds.push_back(parse_number<std::uint64_t>(item));
       }},
      {"out_dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); }},
  };
  return table;
}

}  // namespace

void apply_preset(RunConfig& cfg, std::string_view preset) {
  if (preset == "desk") {
    const RunConfig defaults;
    cfg.lr = defaults.lr;
    cfg.batch_size = defaults.batch_size;
    cfg.epochs = defaults.epochs;
    cfg.loss.tau = defaults.loss.tau;
    cfg.loss.lambda = defaults.loss.lambda;
  } else if (preset == "reference") {
    cfg.lr = 1e-5;
    cfg.batch_size = 32;
    cfg.epochs = 10;
    cfg.loss.tau = 0.3;
    cfg.loss.lambda = 2.0;
  } else {
    throw Error(Errc::InvalidConfig, "unknown preset '" + std::string(preset) + "'");
  }
}

void validate(const RunConfig& cfg) {
  validate(cfg.loss);
  if (cfg.scorers.empty()) throw Error(Errc::InvalidConfig, "at least one scorer is required");
  if (cfg.seeds.empty()) throw Error(Errc::InvalidConfig, "at least one seed is required");
  if (cfg.batch_size < 2) throw Error(Errc::InvalidConfig, "optim.batch_size must be >= 2");
  if (cfg.epochs < 1) throw Error(Errc::InvalidConfig, "optim.epochs must be >= 1");
  if (!(cfg.lr > 0.0)) throw Error(Errc::InvalidConfig, "optim.lr must be > 0");
  if (cfg.rep_dim < 1) throw Error(Errc::InvalidConfig, "encoder.dim must be >= 1");
  for (auto h : cfg.hidden_dims)
    if (h < 1) throw Error(Errc::InvalidConfig, "encoder.hidden entries must be >= 1");
  if (cfg.source != DataSource::Synthetic && cfg.id_path.empty()) {
    throw Error(Errc::InvalidConfig, "data.id_path is required for this source");
  }
  if (cfg.source == DataSource::Text && cfg.text_dim < 16) {
    throw Error(Errc::InvalidConfig, "text.dim must be >= 16");
  }
}

RunConfig parse_run_config(std::string_view text) {
  struct Entry {
    std::string key, value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::InvalidConfig, "expected 'key = value'", lineno);
    }
    entries.push_back({std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), lineno});
  }

  RunConfig cfg;
  for (const auto& e : entries) {
    if (e.key != "preset") continue;
    try {
      apply_preset(cfg, e.value);
    } catch (const Error& err) {
      throw Error(Errc::InvalidConfig, err.what(), e.line);
    }
  }
  for (const auto& e : entries) {
    if (e.key == "preset") continue;
    const auto it = setters().find(e.key);
    if (it == setters().end()) throw Error(Errc::InvalidConfig, "unknown key '" + e.key + "'", e.line);
    try {
      it->second(cfg, e.value);
    } catch (const Error& err) {
      throw Error(Errc::InvalidConfig, err.what(), e.line);
    }
  }
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream o;
  o << "name = " << c.name << '\n';
  o << "source = "
    << (c.source == DataSource::Synthetic ? "synthetic" : c.source == DataSource::Embeddings ? "embeddings" : "text")
    << '\n';
  o << "synth.num_classes = " << c.synth.num_classes << '\n';
  o << "synth.dim = " << c.synth.dim << '\n';
  o << "synth.per_class = " << c.synth.per_class << '\n';
  o << "synth.std = " << fmt_double(c.synth.intra_std) << '\n';
  o << "synth.separation = " << fmt_double(c.synth.separation) << '\n';
  o << "synth.ood_displacement = " << fmt_double(c.synth.ood_displacement) << '\n';
  o << "synth.ood_count = " << c.synth.ood_count << '\n';
  o << "synth.overlap_offset = " << fmt_double(c.synth.overlap_offset) << '\n';
  o << "synth.seed = " << c.synth.seed << '\n';
  if (!c.id_path.empty()) o << "data.id_path = " << c.id_path.string() << '\n';
  if (!c.ood_path.empty()) o << "data.ood_path = " << c.ood_path.string() << '\n';
  o << "text.dim = " << c.text_dim << '\n';
  o << "text.seed = " << c.text_seed << '\n';
  o << "loss.mode = " << to_string(c.loss.mode) << '\n';
  o << "loss.tau = " << fmt_double(c.loss.tau) << '\n';
  o << "loss.lambda = " << fmt_double(c.loss.lambda) << '\n';
  o << "loss.metric = " << to_string(c.loss.metric) << '\n';
  o << "loss.margin_grad = " << to_string(c.loss.margin_grad) << '\n';
  o << "encoder.hidden = " << (c.hidden_dims.empty() ? std::string("none") : join(c.hidden_dims)) << '\n';
  o << "encoder.dim = " << c.rep_dim << '\n';
  o << "optim.lr = " << fmt_double(c.lr) << '\n';
  o << "optim.epochs = " << c.epochs << '\n';
  o << "optim.batch_size = " << c.batch_size << '\n';
  o << "optim.eval_interval = " << c.eval_interval << '\n';
  o << "scorers = " << join(c.scorers) << '\n';
  o << "scorer.energy_ignore_bias = " << (c.energy_ignore_bias ? "true" : "false") << '\n';
  o << "scorer.maha_fit = " << (c.maha_fit_train_val ? "train+val" : "val") << '\n';
  o << "seeds = " << join(c.seeds) << '\n';
  o << "out_dir = " << c.out_dir.string() << '\n';
  return o.str();
}

}  // namespace ood
