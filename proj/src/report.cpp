#include "csvqa/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "csvqa/errors.hpp"
#include "csvqa/pipelines.hpp"

namespace csvqa {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

double parse_field(const std::string& s, const std::string& path) {
  if (s == "n/a") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  try {
    return std::stod(s);
  } catch (...) {
    throw_error(Error::Kind::io, "unparseable results field '" + s + "' in " + path);
  }
}

}  // namespace

std::string format_rate(double rate) { return fmt("%.6g", rate); }

std::string format_psnr(double psnr) {
  if (std::isnan(psnr)) return "n/a";
  if (std::isinf(psnr)) return "inf";
  return fmt("%.4f", psnr);
}

namespace {

std::string format_row(const ReportRow& row) {
  std::string out = row.pipeline;
  out += ',' + format_rate(row.rate);
  out += ',' + std::to_string(row.seed);
  out += ',' + fmt("%.6f", row.acc_overall);
  out += ',' + fmt("%.6f", row.acc_exist);
  out += ',' + fmt("%.6f", row.acc_count);
  out += ',' + fmt("%.6f", row.acc_rel);
  out += ',' + format_psnr(row.psnr_mean);
  out += ',' + fmt("%.3f", row.wall_time);
  return out;
}

}  // namespace

void append_result_row(const std::string& path, const ReportRow& row) {
  const bool exists = std::filesystem::exists(path);
  if (exists) {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    require(header == kResultsHeader, Error::Kind::io,
            "results file " + path + " carries an unexpected header; refusing to append");
  }
  std::ofstream out(path, std::ios::app);
  require(out.good(), Error::Kind::io, "cannot append to results file: " + path);
  if (!exists) out << kResultsHeader << '\n';
  out << format_row(row) << '\n';
  require(out.good(), Error::Kind::io, "write failed for results file: " + path);
}

std::vector<ReportRow> read_results(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Error::Kind::io, "cannot open results file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Error::Kind::io,
          "results file is empty: " + path);
  require(line == kResultsHeader, Error::Kind::io,
          "results file " + path + " carries an unexpected header");

  std::vector<ReportRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    require(fields.size() == 9, Error::Kind::io,
            "results file " + path + ": line " + std::to_string(line_no) +
                " has " + std::to_string(fields.size()) + " fields, expected 9");
    ReportRow row;
    row.pipeline = fields[0];
    row.rate = parse_field(fields[1], path);
    row.seed = static_cast<std::uint64_t>(std::stoull(fields[2]));
    row.acc_overall = parse_field(fields[3], path);
    row.acc_exist = parse_field(fields[4], path);
    row.acc_count = parse_field(fields[5], path);
    row.acc_rel = parse_field(fields[6], path);
    row.psnr_mean = parse_field(fields[7], path);
    row.wall_time = parse_field(fields[8], path);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ReportRow> deduplicate(const std::vector<ReportRow>& rows) {
  std::map<std::string, std::size_t> latest;
  for (std::size_t i = 0; i < rows.size(); ++i)
    latest[rows[i].pipeline + '|' + format_rate(rows[i].rate) + '|' +
           std::to_string(rows[i].seed)] = i;
  std::vector<std::size_t> keep;
  keep.reserve(latest.size());
  for (const auto& [key, idx] : latest) keep.push_back(idx);
  std::sort(keep.begin(), keep.end());
  std::vector<ReportRow> out;
  out.reserve(keep.size());
  for (std::size_t idx : keep) out.push_back(rows[idx]);
  return out;
}

namespace {

int pipeline_order(const std::string& name) {
  for (std::size_t i = 0; i < kAllPipelines.size(); ++i)
    if (to_string(kAllPipelines[i]) == name) return static_cast<int>(i);
  return static_cast<int>(kAllPipelines.size());  // unknown names sort last
}

}  // namespace

std::vector<SummaryCell> aggregate(const std::vector<ReportRow>& rows) {
  require(!rows.empty(), Error::Kind::invalid_argument, "aggregate: no result rows");
  std::map<std::pair<int, double>, std::pair<std::string, std::vector<const ReportRow*>>> groups;
  for (const auto& row : rows)
    groups[{pipeline_order(row.pipeline), row.rate}].first = row.pipeline,
        groups[{pipeline_order(row.pipeline), row.rate}].second.push_back(&row);

  std::vector<SummaryCell> cells;
  for (const auto& [key, group] : groups) {
    const auto& members = group.second;
    SummaryCell cell;
    cell.pipeline = group.first;
    cell.rate = key.second;
    cell.n_seeds = static_cast<int>(members.size());
    double sum = 0.0;
    for (const auto* r : members) sum += r->acc_overall;
    cell.acc_mean = sum / members.size();
    double var = 0.0;
    for (const auto* r : members) {
      const double d = r->acc_overall - cell.acc_mean;
      var += d * d;
    }
    cell.acc_std = std::sqrt(var / members.size());
    double psnr_sum = 0.0;
    int psnr_n = 0;
    for (const auto* r : members)
      if (!std::isnan(r->psnr_mean)) {
        psnr_sum += r->psnr_mean;
        ++psnr_n;
      }
    cell.psnr_mean = psnr_n ? psnr_sum / psnr_n : std::numeric_limits<double>::quiet_NaN();
    cells.push_back(std::move(cell));
  }
  return cells;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryCell>& cells) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Error::Kind::io, "cannot write summary: " + path);
  out << "pipeline,rate,n_seeds,acc_mean,acc_std,psnr_mean\n";
  for (const auto& c : cells)
    out << c.pipeline << ',' << format_rate(c.rate) << ',' << c.n_seeds << ','
        << fmt("%.6f", c.acc_mean) << ',' << fmt("%.6f", c.acc_std) << ','
        << format_psnr(c.psnr_mean) << '\n';
  require(out.good(), Error::Kind::io, "summary write failed: " + path);
}

void write_plot_data(const std::string& dir, const std::vector<SummaryCell>& cells) {
  std::map<std::string, std::vector<const SummaryCell*>> by_pipeline;
  for (const auto& c : cells) by_pipeline[c.pipeline].push_back(&c);
  for (const auto& [pipeline, group] : by_pipeline) {
    const std::string path = dir + "/plot_" + pipeline + ".dat";
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Error::Kind::io, "cannot write plot data: " + path);
    out << "# rate acc_mean acc_std\n";
    for (const auto* c : group)
      out << format_rate(c->rate) << ' ' << fmt("%.6f", c->acc_mean) << ' '
          << fmt("%.6f", c->acc_std) << '\n';
  }
}

std::string render_text_table(const std::vector<SummaryCell>& cells) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %8s %8s %10s %10s %10s\n", "pipeline", "rate", "seeds",
                "acc_mean", "acc_std", "psnr_mean");
  out += buf;
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "%-18s %8s %8d %10.4f %10.4f %10s\n", c.pipeline.c_str(),
                  format_rate(c.rate).c_str(), c.n_seeds, c.acc_mean, c.acc_std,
                  format_psnr(c.psnr_mean).c_str());
    out += buf;
  }
  return out;
}

}  // namespace csvqa
