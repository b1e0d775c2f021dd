#include "minimax/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "minimax/png_io.hpp"

namespace minimax {
namespace {

std::array<double, 8> values(const MetricReport& m) {
  const auto f = m.fields();
  return {f[0], f[1], f[2], f[3], f[4], f[5], f[6], mad(m)};
}

nlohmann::ordered_json to_json(const MetricReport& m) {
  nlohmann::ordered_json j;
  j["i_auroc"] = m.i_auroc;
  j["i_ap"] = m.i_ap;
  j["i_f1max"] = m.i_f1max;
  j["p_auroc"] = m.p_auroc;
  j["p_ap"] = m.p_ap;
  j["p_f1max"] = m.p_f1max;
  j["aupro"] = m.aupro;
  j["mad"] = mad(m);
  return j;
}

std::string csv_line(const std::string& category, const std::array<double, 8>& v) {
  std::string line = category;
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, ",%.1f", x);
    line += buf;
  }
  return line + "\n";
}

std::string csv_header() {
  std::string h = "category";
  for (const char* c : kReportColumns) h += std::string(",") + c;
  return h + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string report_json(const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw ContractError("report needs at least one row");
  nlohmann::ordered_json j;
  j["categories"] = nlohmann::ordered_json::array();
  std::array<double, 8> sum{};
  for (const auto& r : rows) {
    auto entry = to_json(r.metrics);
    entry["category"] = r.category;
    j["categories"].push_back(entry);
    const auto v = values(r.metrics);
    for (int k = 0; k < 8; ++k) sum[k] += v[k];
  }
  nlohmann::ordered_json mean;
  const char* keys[] = {"i_auroc", "i_ap", "i_f1max", "p_auroc", "p_ap", "p_f1max", "aupro", "mad"};
  for (int k = 0; k < 8; ++k) mean[keys[k]] = sum[k] / static_cast<double>(rows.size());
  j["mean"] = mean;
  return j.dump(2) + "\n";
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw ContractError("report needs at least one row");
  std::string out = csv_header();
  std::array<double, 8> sum{};
  for (const auto& r : rows) {
    auto v = values(r.metrics);
    for (int k = 0; k < 8; ++k) {
      sum[k] += v[k];
      v[k] *= 100;
    }
    out += csv_line(r.category, v);
  }
  for (double& s : sum) s = 100 * s / static_cast<double>(rows.size());
  return out + csv_line("Mean", sum);
}

void write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_text(dir / "report.json", report_json(rows));
  write_text(dir / "report.csv", report_csv(rows));
}

std::vector<CsvRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line) || line + "\n" != csv_header())
    throw InputError(path.string() + ": unexpected CSV header");
  std::vector<CsvRow> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    CsvRow row;
    std::getline(ss, row.category, ',');
    std::string cell;
    int k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= 8) throw InputError(path.string() + ":" + std::to_string(lineno) + ": too many columns");
      try {
        row.values[k++] = std::stod(cell);
      } catch (const std::exception&) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (k != 8) throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 8 values");
    rows.push_back(row);
  }
  return rows;
}

std::string merge_report_csvs(const std::vector<std::filesystem::path>& paths) {
  std::vector<CsvRow> rows;
  for (const auto& p : paths)
    for (auto& r : read_report_csv(p))
      if (r.category != "Mean") rows.push_back(std::move(r));
  if (rows.empty()) throw InputError("no category rows to merge");
  std::string out = csv_header();
  std::array<double, 8> sum{};
  for (const auto& r : rows) {
    out += csv_line(r.category, r.values);
    for (int k = 0; k < 8; ++k) sum[k] += r.values[k];
  }
  for (double& s : sum) s /= static_cast<double>(rows.size());
  return out + csv_line("Mean", sum);
}

void write_anomaly_map(const std::filesystem::path& png, const Tensor<float>& map,
                       const std::string& source, double image_score) {
  const Shape s = map.shape();
  if (s.n != 1 || s.c != 1) throw ContractError("write_anomaly_map expects a (1,1,H,W) map");
  const double scale = 65535.0 / kMapScoreMax;
  std::vector<std::uint16_t> px(static_cast<std::size_t>(s.plane()));
  for (Index i = 0; i < s.plane(); ++i)
    px[i] = static_cast<std::uint16_t>(std::lround(std::clamp<double>(map[i], 0.0, kMapScoreMax) * scale));
  write_png16(png, static_cast<int>(s.w), static_cast<int>(s.h), px);
  nlohmann::ordered_json j;
  j["source"] = source;
  j["width"] = s.w;
  j["height"] = s.h;
  j["encoding"] = "uint16 big-endian grayscale, value = round(clamp(score, 0, 6) * scale)";
  j["scale"] = scale;
  j["score_max"] = kMapScoreMax;
  j["image_score"] = image_score;
  write_text(png.string() + ".json", j.dump(2) + "\n");
}

void write_unit_map(const std::filesystem::path& png, const Tensor<float>& map) {
  const Shape s = map.shape();
  if (s.n != 1 || s.c != 1) throw ContractError("write_unit_map expects a (1,1,H,W) map");
  Image8 img{static_cast<int>(s.w), static_cast<int>(s.h), 1,
             std::vector<std::uint8_t>(static_cast<std::size_t>(s.plane()))};
  for (Index i = 0; i < s.plane(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp<double>(map[i], 0.0, 1.0) * 255));
  write_png(png, img);
}

}  // namespace minimax
