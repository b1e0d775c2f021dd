#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "minimax/metrics.hpp"
#include "minimax/tensor.hpp"

namespace minimax {

struct ReportRow {
  std::string category;
  MetricReport metrics;
};

// Column order of the CSV after the category column.
inline constexpr std::array<const char*, 8> kReportColumns{
    "I-AUROC", "I-AP", "I-F1max", "P-AUROC", "P-AP", "P-F1max", "AUPRO", "mAD"};

// JSON with full precision: {"categories": [...], "mean": {...}}.
std::string report_json(const std::vector<ReportRow>& rows);

// CSV scaled by 100 with one decimal, one row per category and a final Mean row.
std::string report_csv(const std::vector<ReportRow>& rows);

void write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows);

// A CSV row as printed: category plus the eight displayed values.
struct CsvRow {
  std::string category;
  std::array<double, 8> values{};
};

std::vector<CsvRow> read_report_csv(const std::filesystem::path& path);

// Concatenates category rows (dropping existing Mean rows) and appends a Mean
// row averaged over them, in the same CSV layout.
std::string merge_report_csvs(const std::vector<std::filesystem::path>& paths);

// Scores are clamped to [0, kMapScoreMax] and stored as round(s * 65535 / 6).
inline constexpr double kMapScoreMax = 6.0;

// 16-bit grayscale PNG of a (1, 1, H, W) map plus `<path>.json` recording the scale.
void write_anomaly_map(const std::filesystem::path& png, const Tensor<float>& map,
                       const std::string& source, double image_score);

// 8-bit grayscale PNG of a [0, 1] map (1, 1, H, W).
void write_unit_map(const std::filesystem::path& png, const Tensor<float>& map);

}  // namespace minimax
