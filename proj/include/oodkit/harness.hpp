#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oodkit/config.hpp"
#include "oodkit/data.hpp"
#include "oodkit/encoder.hpp"
#include "oodkit/metrics.hpp"
#include "oodkit/scorers.hpp"

namespace ood {

/// Validation metrics recorded at one evaluation step.
struct EvalPoint {
  std::size_t step = 0;
  double val_accuracy = 0.0;
  double val_cont_loss = 0.0;
  double train_loss = 0.0;  // mean total loss over the steps since the last evaluation
};

struct Checkpoint {
  EncoderParams params;
  std::vector<DetectorArtifact> detectors;  // fitted from `params`
  EvalPoint selected;
  std::vector<EvalPoint> history;  // history[0] is the untrained model at step 0
  std::uint64_t seed = 0;
  std::string config_text;

  const DetectorArtifact* detector(ScorerKind kind) const;
};

inline constexpr std::string_view kCheckpointFormat = "ood-ckpt/1";

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RunData {
  Dataset id;
  std::vector<Example> ood;  // may be empty
  std::string ood_name;
};

/// Materializes the configured data source.
RunData load_run_data(const RunConfig& cfg);

/// Encodes every example; rows must match the encoder's input dimension.
std::vector<ForwardRecord> encode(const EncoderParams& params, std::span<const Example* const> rows);

/// Validation accuracy and contrastive loss of `params` (whole val split as one batch).
EvalPoint evaluate_validation(const EncoderParams& params, const Dataset& ds, const LossConfig& loss);

/// Fits every configured scorer on the validation split (or train+val).
std::vector<DetectorArtifact> fit_detectors(const EncoderParams& params, const Dataset& ds,
                                            const RunConfig& cfg);

/// Trains with L = L_ce + λ·L_cont, evaluates every cfg.eval_interval steps
/// and returns the best snapshot: highest validation accuracy, ties broken by
/// lower validation contrastive loss.
Checkpoint train_run(const RunConfig& cfg, const Dataset& ds, std::uint64_t seed);

struct ScorerReport {
  ScorerKind kind;
  EvalReport report;
};

/// AUROC/FAR95 of each requested detector on ID test vs OOD rows, plus ID
/// classification accuracy over labelled ID rows.
std::vector<ScorerReport> evaluate_pair(const Checkpoint& ckpt, std::span<const Example> id_test,
                                        std::span<const Example> ood, std::span<const ScorerKind> kinds);

struct NovelClassTrial {
  int held_out = 0;
  std::vector<ScorerReport> reports;
};

struct NovelClassResult {
  std::vector<NovelClassTrial> trials;
  std::vector<ScorerReport> mean;  // macro average over trials
};

/// Holds out one class per trial (rotation from a seeded start), retrains on
/// the rest and detects the held-out class as OOD.
NovelClassResult run_novel_class(const RunConfig& cfg, const Dataset& base, std::size_t trials,
                                 std::uint64_t seed);

}  // namespace ood
