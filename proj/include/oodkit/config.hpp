#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oodkit/data.hpp"
#include "oodkit/losses.hpp"
#include "oodkit/scorers.hpp"

namespace ood {

enum class DataSource { Synthetic, Embeddings, Text };

/// Everything a training/evaluation run needs. Parsed from a flat
/// `key = value` file; see README for the schema.
struct RunConfig {
  std::string name = "run";
  DataSource source = DataSource::Synthetic;
  SynthConfig synth;
  std::filesystem::path id_path;   // embeddings (.jsonl) or text corpus (.tsv)
  std::filesystem::path ood_path;  // optional
  std::size_t text_dim = 256;
  std::uint64_t text_seed = 0;

  LossConfig loss;

  std::vector<std::size_t> hidden_dims{64};
  std::size_t rep_dim = 32;

  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t eval_interval = 0;  // steps between evaluations; 0 = once per epoch

  std::vector<ScorerKind> scorers{kAllScorers[0], kAllScorers[1], kAllScorers[2], kAllScorers[3]};
  bool energy_ignore_bias = false;
  bool maha_fit_train_val = false;

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path out_dir = "out";
};

/// Validates ranges; throws InvalidConfig.
void validate(const RunConfig& cfg);

/// Parses `key = value` lines. '#' starts a comment. Unknown keys and
/// malformed values are rejected with the offending line number. A
/// `preset` key is applied before every other key regardless of position.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical `key = value` rendering; parse_run_config(to_config_text(c))
/// reproduces c.
std::string to_config_text(const RunConfig& cfg);

/// Applies a named preset: "desk" (library defaults) or "reference"
/// (lr 1e-5, batch 32, 10 epochs, τ 0.3, λ 2).
void apply_preset(RunConfig& cfg, std::string_view preset);

}  // namespace ood
