#include "oodkit/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "oodkit/error.hpp"
#include "oodkit/rng.hpp"

namespace ood {

using nlohmann::json;

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "test";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(Errc::ParseError, "unknown split '" + std::string(s) + "'");
}

std::vector<const Example*> Dataset::split(Split s) const {
  std::vector<const Example*> out;
  for (const auto& ex : examples)
    if (ex.split == s) out.push_back(&ex);
  return out;
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(), [s](const Example& e) { return e.split == s; }));
}

void validate_for_training(const Dataset& ds) {
  if (ds.num_classes < 1) throw Error(Errc::InvalidConfig, "dataset declares no classes");
  std::vector<bool> seen(static_cast<std::size_t>(ds.num_classes), false);
  for (const auto& ex : ds.examples) {
    if (ex.vector.size() != ds.dim) {
      throw Error(Errc::DimensionMismatch, "example '" + ex.id + "' has dimension " +
                                               std::to_string(ex.vector.size()) + ", dataset " +
                                               std::to_string(ds.dim));
    }
    if (ex.split == Split::Test && !ex.label) continue;
    if (!ex.label) throw Error(Errc::InvalidConfig, "unlabeled example '" + ex.id + "' in train/val");
    if (*ex.label < 0 || *ex.label >= ds.num_classes) {
      throw Error(Errc::LabelOutOfRange, "example '" + ex.id + "' label " + std::to_string(*ex.label));
    }
    if (ex.split == Split::Train) seen[static_cast<std::size_t>(*ex.label)] = true;
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw Error(Errc::MissingClass, "class " + std::to_string(c) + " absent from train");
  }
}

SplitSizes stratified_split_sizes(std::size_t n) {
  std::size_t val = n / 10;
  std::size_t test = n / 10;
  if (n >= 3) {
    val = std::max<std::size_t>(val, 1);
    test = std::max<std::size_t>(test, 1);
  }
  return {n - val - test, val, test};
}

// ---------------------------------------------------------------- synthetic

SynthData gen_synthetic(const SynthConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.dim < 1 || cfg.per_class < 1 || cfg.ood_count < 1) {
    throw Error(Errc::InvalidConfig, "synthetic counts and dimensions must be >= 1");
  }
  if (!(cfg.intra_std > 0.0) || !(cfg.separation > 0.0) || !(cfg.ood_displacement > 0.0) ||
      !(cfg.overlap_offset >= 0.0)) {
    throw Error(Errc::InvalidConfig, "synthetic scales must be positive");
  }

  const auto C = static_cast<std::size_t>(cfg.num_classes);
  const std::size_t d = cfg.dim;
  SplitMix64 rng(cfg.seed);

  auto random_unit = [&] {
    Vector u(d);
    double n = 0.0;
    while (n == 0.0) {
      for (double& x : u) x = rng.normal();
      n = norm2(u);
    }
    for (double& x : u) x /= n;
    return u;
  };

  // Means at (s/√2)·e_j give pairwise distance exactly s when C ≤ d.
  const double radius = cfg.separation / std::sqrt(2.0);
  std::vector<Vector> means(C, Vector(d, 0.0));
  for (std::size_t j = 0; j < C; ++j) {
    if (C <= d) {
      means[j][j] = radius;
    } else {
      means[j] = random_unit();
      for (double& x : means[j]) x *= radius;
    }
  }
  if (cfg.overlap_offset > 0.0 && C >= 2) {
    Vector dir(d);
    for (std::size_t k = 0; k < d; ++k) dir[k] = means[C - 1][k] - means[0][k];
    const double n = norm2(dir);
    for (std::size_t k = 0; k < d; ++k) means[C - 1][k] = means[0][k] + cfg.overlap_offset * dir[k] / n;
  }

  // OOD center: centroid moved along a direction orthogonal to every mean.
  Vector center = mean_vector(means);
  Vector away(d, 0.0);
  if (C < d) {
    away[C] = 1.0;
  } else {
    away = random_unit();
  }
  for (std::size_t k = 0; k < d; ++k) center[k] += cfg.ood_displacement * away[k];

  SynthData out;
  out.id.name = "synth";
  out.id.num_classes = cfg.num_classes;
  out.id.dim = d;
  const SplitSizes sizes = stratified_split_sizes(cfg.per_class);
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t k = 0; k < cfg.per_class; ++k) {
      Example ex;
      ex.id = "c" + std::to_string(j) + "-" + std::to_string(k);
      ex.label = static_cast<int>(j);
      ex.vector.resize(d);
      for (std::size_t t = 0; t < d; ++t) ex.vector[t] = means[j][t] + cfg.intra_std * rng.normal();
      ex.split = k < sizes.train ? Split::Train
                 : k < sizes.train + sizes.val ? Split::Val
                                               : Split::Test;
      out.id.examples.push_back(std::move(ex));
    }
  }
  for (std::size_t k = 0; k < cfg.ood_count; ++k) {
    Example ex;
    ex.id = "ood-" + std::to_string(k);
    ex.split = Split::Test;
    ex.vector.resize(d);
    for (std::size_t t = 0; t < d; ++t) ex.vector[t] = center[t] + cfg.intra_std * rng.normal();
    out.ood.push_back(std::move(ex));
  }
  return out;
}

// ------------------------------------------------------------ featurization

std::uint64_t hash_feature(std::string_view feature, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a offset basis
  for (unsigned char ch : feature) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  // SplitMix64 finalizer over the seeded FNV value.
  std::uint64_t z = h ^ (seed + 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

void add_feature(Vector& counts, std::string_view feature, std::uint64_t seed) {
  const std::uint64_t h = hash_feature(feature, seed);
  const std::size_t bucket = static_cast<std::size_t>(h % counts.size());
  counts[bucket] += (h >> 63) ? -1.0 : 1.0;
}

}  // namespace

Vector hashed_ngram_counts(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 16) throw Error(Errc::InvalidConfig, "featurizer dimension must be >= 16");
  Vector counts(dim, 0.0);
  for (const auto& w : words_of(text)) {
    add_feature(counts, "w:" + w, seed);
    const std::string padded = "<" + w + ">";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      add_feature(counts, "c:" + padded.substr(i, 3), seed);
    }
  }
  return counts;
}

Vector featurize_hashed_ngrams(std::string_view text, std::size_t dim, std::uint64_t seed) {
  Vector counts = hashed_ngram_counts(text, dim, seed);
  const double n = norm2(counts);
  if (n == 0.0) {
    Vector e0(dim, 0.0);
    e0[0] = 1.0;
    return e0;
  }
  for (double& x : counts) x /= n;
  return counts;
}

// ---------------------------------------------------------------- file I/O

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace

Dataset load_embeddings(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::ParseError, e.what(), lineno);
    }
    if (!obj.is_object()) throw Error(Errc::ParseError, "line is not a JSON object", lineno);

    try {
      if (!have_header) {
        if (obj.value("format", std::string{}) != kEmbedFormat) {
          throw Error(Errc::ParseError, "header must declare format \"ood-embed/1\"", lineno);
        }
        const auto dim = obj.at("dim").get<long long>();
        const auto classes = obj.at("num_classes").get<long long>();
        if (dim < 1 || classes < 0) throw Error(Errc::ParseError, "invalid dim/num_classes", lineno);
        ds.dim = static_cast<std::size_t>(dim);
        ds.num_classes = static_cast<int>(classes);
        ds.name = obj.at("name").get<std::string>();
        have_header = true;
        continue;
      }

      Example ex;
      ex.id = obj.at("id").get<std::string>();
      ex.split = parse_split(obj.at("split").get<std::string>());
      const json& label = obj.at("label");
      if (label.is_null()) {
        if (ex.split != Split::Test) {
          throw Error(Errc::ParseError, "null label outside the test split", lineno);
        }
      } else {
        if (!label.is_number_integer()) throw Error(Errc::ParseError, "label must be an integer", lineno);
        const auto y = label.get<long long>();
        if (y < 0 || y >= ds.num_classes) {
          throw Error(Errc::LabelOutOfRange,
                      "label " + std::to_string(y) + " outside 0.." + std::to_string(ds.num_classes - 1),
                      lineno);
        }
        ex.label = static_cast<int>(y);
      }
      const json& vec = obj.at("vector");
      if (!vec.is_array()) throw Error(Errc::ParseError, "vector must be an array", lineno);
      if (vec.size() != ds.dim) {
        throw Error(Errc::DimensionMismatch,
                    "vector has " + std::to_string(vec.size()) + " entries, header dim " +
                        std::to_string(ds.dim),
                    lineno);
      }
      ex.vector.reserve(ds.dim);
      for (const auto& v : vec) {
        if (!v.is_number()) throw Error(Errc::ParseError, "vector entries must be numbers", lineno);
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw Error(Errc::ParseError, "non-finite vector entry", lineno);
        ex.vector.push_back(x);
      }
      if (obj.contains("text") && obj["text"].is_string()) ex.text = obj["text"].get<std::string>();
      ds.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, e.what(), lineno);
    }
  }
  if (!have_header) throw Error(Errc::ParseError, "missing header line", lineno + 1);
  return ds;
}

void write_embeddings(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  json header = {{"format", kEmbedFormat}, {"dim", ds.dim}, {"num_classes", ds.num_classes},
                 {"name", ds.name}};
  out << header.dump() << '\n';
  for (const auto& ex : ds.examples) {
    json row;
    row["id"] = ex.id;
    row["label"] = ex.label ? json(*ex.label) : json(nullptr);
    row["split"] = split_name(ex.split);
    row["vector"] = ex.vector;
    out << row.dump() << '\n';
  }
  if (!out) throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
}

Dataset load_text_corpus(const std::filesystem::path& path, std::size_t dim, std::uint64_t seed,
                         std::optional<int> num_classes) {
  std::ifstream in = open_in(path);
  Dataset ds;
  ds.name = path.stem().string();
  ds.dim = dim;
  int max_label = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    for (int i = 0; i < 3 && std::getline(ss, f, '\t'); ++i) fields.push_back(f);
    std::string text;
    std::getline(ss, text);
    if (fields.size() != 3) throw Error(Errc::ParseError, "expected id, label, split, text", lineno);

    Example ex;
    ex.id = fields[0];
    try {
      ex.split = parse_split(fields[2]);
    } catch (const Error& e) {
      throw Error(Errc::ParseError, e.what(), lineno);
    }
    if (fields[1] != "null" && !fields[1].empty()) {
      try {
        std::size_t used = 0;
        const int y = std::stoi(fields[1], &used);
        if (used != fields[1].size()) throw std::invalid_argument("trailing");
        if (y < 0) throw Error(Errc::LabelOutOfRange, "negative label", lineno);
        ex.label = y;
        max_label = std::max(max_label, y);
      } catch (const std::logic_error&) {
        throw Error(Errc::ParseError, "bad label '" + fields[1] + "'", lineno);
      }
    } else if (ex.split != Split::Test) {
      throw Error(Errc::ParseError, "null label outside the test split", lineno);
    }
    ex.vector = featurize_hashed_ngrams(text, dim, seed);
    ex.text = std::move(text);
    ds.examples.push_back(std::move(ex));
  }
  ds.num_classes = num_classes.value_or(max_label + 1);
  if (max_label >= ds.num_classes) {
    throw Error(Errc::LabelOutOfRange, "label " + std::to_string(max_label) + " >= num_classes");
  }
  return ds;
}

// ------------------------------------------------------------------ splits

NovelClassSplit split_novel_class(const Dataset& ds, int held_out) {
  if (ds.num_classes < 3) throw Error(Errc::TooFewClasses, "novel-class split needs C >= 3");
  if (held_out < 0 || held_out >= ds.num_classes) {
    throw Error(Errc::UnknownClass, "class " + std::to_string(held_out) + " not in dataset");
  }
  NovelClassSplit out;
  out.id.name = ds.name + "-without-" + std::to_string(held_out);
  out.id.num_classes = ds.num_classes - 1;
  out.id.dim = ds.dim;
  for (const auto& ex : ds.examples) {
    if (ex.label && *ex.label == held_out) {
      Example o = ex;
      o.label.reset();
      o.split = Split::Test;
      out.ood.push_back(std::move(o));
      continue;
    }
    Example kept = ex;
    if (kept.label && *kept.label > held_out) --*kept.label;
    out.id.examples.push_back(std::move(kept));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(const Dataset& ds, std::size_t batch_size,
                                                 std::uint64_t epoch_seed) {
  if (batch_size < 2) throw Error(Errc::BatchTooSmall, "batch size must be >= 2");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    if (ds.examples[i].split == Split::Train) idx.push_back(i);
  SplitMix64 rng(epoch_seed);
  rng.shuffle(std::span<std::size_t>(idx));

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t stop = std::min(idx.size(), start + batch_size);
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

}  // namespace ood
