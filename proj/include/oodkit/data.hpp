#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oodkit/linalg.hpp"

namespace ood {

enum class Split { Train, Val, Test };

std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

struct Example {
  std::string id;
  std::optional<int> label;  // absent for unlabeled OOD test rows
  Vector vector;             // empty until featurized/ingested
  std::optional<std::string> text;
  Split split = Split::Train;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  std::size_t dim = 0;
  std::vector<Example> examples;

  std::vector<const Example*> split(Split s) const;
  std::size_t count(Split s) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Checks the invariants a dataset must satisfy before training: shared
/// dimension, labeled train/val rows with labels < C, and every class present
/// in train.
void validate_for_training(const Dataset& ds);

struct SynthConfig {
  int num_classes = 4;
  std::size_t dim = 16;
  std::size_t per_class = 200;
  double intra_std = 1.0;
  double separation = 6.0;        // pairwise distance between class means
  double ood_displacement = 8.0;  // minimum distance of the OOD center to any ID mean
  std::size_t ood_count = 100;
  /// When > 0, the last class's mean is placed this far from class 0's mean,
  /// producing an overlapping pair (novel-class experiments).
  double overlap_offset = 0.0;
  std::uint64_t seed = 0;
};

struct SynthData {
  Dataset id;
  std::vector<Example> ood;
};

/// Isotropic Gaussian clusters split 80/10/10 per class, plus a displaced
/// OOD cluster. Deterministic given cfg.seed.
SynthData gen_synthetic(const SynthConfig& cfg);

/// Per-class split sizes used by gen_synthetic: {train, val, test}.
struct SplitSizes {
  std::size_t train, val, test;
};
SplitSizes stratified_split_sizes(std::size_t per_class);

/// Seeded 64-bit hash of one namespaced n-gram feature (e.g. "w:abc").
std::uint64_t hash_feature(std::string_view feature, std::uint64_t seed) noexcept;

/// Signed hashed counts of word unigrams ("w:" prefix) and per-word
/// character 3-grams over "<word>" ("c:" prefix), lowercased ASCII.
/// Bucket is hash % d, sign is + when bit 63 of the hash is clear.
Vector hashed_ngram_counts(std::string_view text, std::size_t dim, std::uint64_t seed);

/// L2-normalized hashed_ngram_counts. Inputs with no features, or whose
/// signed counts cancel exactly, map to e_0.
Vector featurize_hashed_ngrams(std::string_view text, std::size_t dim, std::uint64_t seed);

inline constexpr std::string_view kEmbedFormat = "ood-embed/1";

/// Reads an "ood-embed/1" JSON-lines file.
Dataset load_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const Dataset& ds);

/// Reads a TSV corpus (id, label-or-"null", split, text) and featurizes it.
/// num_classes is max label + 1 unless given.
Dataset load_text_corpus(const std::filesystem::path& path, std::size_t dim, std::uint64_t seed,
                         std::optional<int> num_classes = std::nullopt);

struct NovelClassSplit {
  Dataset id;
  std::vector<Example> ood;
};

/// Removes class held_out from every split and re-indexes remaining labels
/// densely. Held-out rows come back unlabeled in the test split.
NovelClassSplit split_novel_class(const Dataset& ds, int held_out);

/// Shuffled contiguous batches over the train split. Each batch lists indices
/// into ds.examples; the final short batch is kept.
std::vector<std::vector<std::size_t>> batch_iter(const Dataset& ds, std::size_t batch_size,
                                                 std::uint64_t epoch_seed);

}  // namespace ood
