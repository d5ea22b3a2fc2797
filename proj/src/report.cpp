#include "oodkit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include "oodkit/error.hpp"

namespace ood {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

using GroupKey = std::tuple<std::string, std::string, std::string, std::string>;

GroupKey key_of(const ReportRow& r) { return {r.id_dataset, r.ood_dataset, r.loss_mode, r.scorer}; }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
}

}  // namespace

std::vector<ReportRow> with_average_rows(std::span<const ReportRow> rows) {
  std::vector<ReportRow> out(rows.begin(), rows.end());
  std::vector<GroupKey> order;
  std::map<GroupKey, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    if (r.seed == "avg") continue;
    const GroupKey k = key_of(r);
    if (!groups.contains(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  for (const auto& k : order) {
    const auto& members = groups[k];
    ReportRow avg{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), 0.0, 0.0, 0.0, "avg"};
    bool have_acc = true;
    for (const ReportRow* r : members) {
      avg.auroc += r->auroc;
      avg.far95 += r->far95;
      if (r->accuracy) *avg.accuracy += *r->accuracy;
      else have_acc = false;
    }
    const double n = static_cast<double>(members.size());
    avg.auroc /= n;
    avg.far95 /= n;
    if (have_acc) *avg.accuracy /= n;
    else avg.accuracy.reset();
    out.push_back(avg);
  }
  return out;
}

std::string render_csv(std::span<const ReportRow> rows) {
  std::string out = "id_dataset,ood_dataset,loss_mode,scorer,auroc,far95,accuracy,seed\n";
  for (const auto& r : rows) {
    out += csv_field(r.id_dataset) + ',' + csv_field(r.ood_dataset) + ',' + csv_field(r.loss_mode) + ',' +
           csv_field(r.scorer) + ',' + fixed(r.auroc, 6) + ',' + fixed(r.far95, 6) + ',' +
           (r.accuracy ? fixed(*r.accuracy, 6) : std::string()) + ',' + csv_field(r.seed) + '\n';
  }
  return out;
}

std::string render_markdown_summary(std::span<const ReportRow> rows) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::pair<std::string, std::string>> methods;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, const ReportRow*> cells;
  for (const auto& r : rows) {
    if (r.seed != "avg") continue;
    const auto pair = std::make_pair(r.id_dataset, r.ood_dataset);
    const auto method = std::make_pair(r.loss_mode, r.scorer);
    if (std::find(pairs.begin(), pairs.end(), pair) == pairs.end()) pairs.push_back(pair);
    if (std::find(methods.begin(), methods.end(), method) == methods.end()) methods.push_back(method);
    cells[{r.loss_mode, r.scorer, r.id_dataset, r.ood_dataset}] = &r;
  }

  std::string out = "AUROC ↑ / FAR95 ↓ (%, mean over seeds)\n\n| loss | scorer |";
  for (const auto& p : pairs) out += ' ' + p.first + " → " + p.second + " |";
  out += "\n|---|---|";
  for (std::size_t i = 0; i < pairs.size(); ++i) out += "---|";
  out += '\n';
  for (const auto& m : methods) {
    out += "| " + m.first + " | " + m.second + " |";
    for (const auto& p : pairs) {
      const auto it = cells.find({m.first, m.second, p.first, p.second});
      if (it == cells.end()) {
        out += " – |";
      } else {
        out += ' ' + fixed(100.0 * it->second->auroc, 1) + " / " + fixed(100.0 * it->second->far95, 1) + " |";
      }
    }
    out += '\n';
  }
  return out;
}

void emit_reports(std::span<const ReportRow> rows, const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create '" + outdir.string() + "': " + ec.message());
  const auto all = with_average_rows(rows);
  write_file(outdir / "report.csv", render_csv(all));
  write_file(outdir / "summary.md", render_markdown_summary(all));
}

void emit_projection(std::span<const ProjectedPoint> points, const std::filesystem::path& path) {
  std::string out = "id,group,x,y\n";
  for (const auto& p : points) {
    out += csv_field(p.id) + ',' + csv_field(p.group) + ',' + fixed(p.xy[0], 9) + ',' + fixed(p.xy[1], 9) + '\n';
  }
  write_file(path, out);
}

}  // namespace ood
