#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodkit/linalg.hpp"

namespace ood {

struct ReportRow {
  std::string id_dataset;
  std::string ood_dataset;
  std::string loss_mode;
  std::string scorer;
  double auroc = 0.0;
  double far95 = 0.0;
  std::optional<double> accuracy;
  std::string seed;
};

/// Input rows followed by one seed="avg" row per (id, ood, mode, scorer)
/// group, in first-appearance order.
std::vector<ReportRow> with_average_rows(std::span<const ReportRow> rows);

std::string render_csv(std::span<const ReportRow> rows);
/// "AUROC / FAR95" (percent) table of the avg rows, one column per ID→OOD pair.
std::string render_markdown_summary(std::span<const ReportRow> rows);

/// Writes report.csv and summary.md into outdir.
void emit_reports(std::span<const ReportRow> rows, const std::filesystem::path& outdir);

struct ProjectedPoint {
  std::string id;
  std::string group;  // e.g. "id:2" or "ood"
  Point2 xy;
};

void emit_projection(std::span<const ProjectedPoint> points, const std::filesystem::path& path);

}  // namespace ood
