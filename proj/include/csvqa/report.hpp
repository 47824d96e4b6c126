#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace csvqa {

inline constexpr const char* kResultsHeader =
    "pipeline,rate,seed,acc_overall,acc_exist,acc_count,acc_rel,psnr_mean,wall_time";

// One results row per (pipeline, rate, seed) cell. psnr_mean: NaN serializes
// as "n/a" (not applicable), +infinity as "inf".
struct ReportRow {
  std::string pipeline;
  double rate = 0.0;
  std::uint64_t seed = 0;
  double acc_overall = 0.0;
  double acc_exist = 0.0;
  double acc_count = 0.0;
  double acc_rel = 0.0;
  double psnr_mean = 0.0;
  double wall_time = 0.0;
};

std::string format_rate(double rate);
std::string format_psnr(double psnr);

// Append-only with a header guard: a fresh file gets the header, an existing
// file must carry the exact expected header.
void append_result_row(const std::string& path, const ReportRow& row);
std::vector<ReportRow> read_results(const std::string& path);

// Keeps the last row per (pipeline, rate, seed); re-run cells override.
std::vector<ReportRow> deduplicate(const std::vector<ReportRow>& rows);

struct SummaryCell {
  std::string pipeline;
  double rate = 0.0;
  int n_seeds = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // population standard deviation over seeds
  double psnr_mean = 0.0;
};

// Aggregates deduplicated rows by (pipeline, rate); cells ordered by the
// fixed pipeline order then ascending rate.
std::vector<SummaryCell> aggregate(const std::vector<ReportRow>& rows);

void write_summary_csv(const std::string& path, const std::vector<SummaryCell>& cells);
// One file per pipeline: "rate acc_mean acc_std" lines for external plotting.
void write_plot_data(const std::string& dir, const std::vector<SummaryCell>& cells);
std::string render_text_table(const std::vector<SummaryCell>& cells);

}  // namespace csvqa
