#include "evasim/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "json_util.hpp"

namespace evasim {
namespace {

using detail::ordered_json;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write report file: " + path.string());
  }
  return out;
}

std::string opt_str(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("");
}

ordered_json stat_to_json(const Stat& s) {
  return ordered_json{{"mean", s.mean}, {"stddev", s.stddev}, {"count", s.count}};
}

ordered_json row_to_json(const DetectorReportRow& row) {
  ordered_json j;
  j["detector"] = row.detector;
  j["attacked"] = row.attacked;
  j["detected"] = row.detected;
  j["evaded"] = row.evaded;
  j["evasion_rate"] = row.evasion_rate;
  j["queries"] = stat_to_json(row.queries);
  j["transformations"] = stat_to_json(row.transformations);
  j["size_increase_pct"] = stat_to_json(row.size_increase_pct);
  j["added_api_calls"] = stat_to_json(row.added_api_calls);
  j["added_binary_features"] = stat_to_json(row.added_binary_features);
  if (row.detection_rate) j["detection_rate"] = *row.detection_rate;
  if (row.false_alarm_rate) j["false_alarm_rate"] = *row.false_alarm_rate;
  return j;
}

}  // namespace

Stat compute_stat(const std::vector<double>& values) {
  Stat s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void emit_report(const Report& report, const std::filesystem::path& out_dir,
                 ReportFormat format) {
  std::filesystem::create_directories(out_dir);
  if (format == ReportFormat::Csv) {
    auto out = open_out(out_dir / "report.csv");
    out << "detector,attacked,detected,evaded,evasion_rate,"
           "avg_queries,std_queries,avg_transformations,std_transformations,"
           "avg_size_increase_pct,std_size_increase_pct,"
           "avg_added_api_calls,std_added_api_calls,"
           "avg_added_binary_features,std_added_binary_features,"
           "detection_rate,false_alarm_rate,seed,config_hash\n";
    for (const DetectorReportRow& row : report.rows) {
      out << row.detector << ',' << row.attacked << ',' << row.detected << ','
          << row.evaded << ',' << format_double(row.evasion_rate) << ','
          << format_double(row.queries.mean) << ','
          << format_double(row.queries.stddev) << ','
          << format_double(row.transformations.mean) << ','
          << format_double(row.transformations.stddev) << ','
          << format_double(row.size_increase_pct.mean) << ','
          << format_double(row.size_increase_pct.stddev) << ','
          << format_double(row.added_api_calls.mean) << ','
          << format_double(row.added_api_calls.stddev) << ','
          << format_double(row.added_binary_features.mean) << ','
          << format_double(row.added_binary_features.stddev) << ','
          << opt_str(row.detection_rate) << ',' << opt_str(row.false_alarm_rate)
          << ',' << report.seed << ',' << report.config_hash << '\n';
    }
    if (report.baselines) {
      const BaselineReport& b = *report.baselines;
      auto bout = open_out(out_dir / "baselines.csv");
      bout << "target_detector,detected,pk_evasion_rate,avg_pk_added_features,"
              "std_pk_added_features,random_evasion_rate,"
              "avg_random_added_features,std_random_added_features,"
              "avg_random_queries,std_random_queries\n";
      bout << b.target_detector << ',' << b.detected << ','
           << format_double(b.pk_evasion_rate) << ','
           << format_double(b.pk_added_features.mean) << ','
           << format_double(b.pk_added_features.stddev) << ','
           << format_double(b.random_evasion_rate) << ','
           << format_double(b.random_added_features.mean) << ','
           << format_double(b.random_added_features.stddev) << ','
           << format_double(b.random_queries.mean) << ','
           << format_double(b.random_queries.stddev) << '\n';
    }
    return;
  }

  ordered_json j;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  ordered_json rows = ordered_json::array();
  for (const DetectorReportRow& row : report.rows) rows.push_back(row_to_json(row));
  j["rows"] = std::move(rows);
  if (report.baselines) {
    const BaselineReport& b = *report.baselines;
    ordered_json jb;
    jb["target_detector"] = b.target_detector;
    jb["detected"] = b.detected;
    jb["pk_evasion_rate"] = b.pk_evasion_rate;
    jb["pk_added_features"] = stat_to_json(b.pk_added_features);
    jb["random_evasion_rate"] = b.random_evasion_rate;
    jb["random_added_features"] = stat_to_json(b.random_added_features);
    jb["random_queries"] = stat_to_json(b.random_queries);
    j["baselines"] = std::move(jb);
  }
  auto out = open_out(out_dir / "report.json");
  out << j.dump(2) << '\n';
}

void emit_report(const TransferMatrix& matrix,
                 const std::filesystem::path& out_dir, ReportFormat format) {
  std::filesystem::create_directories(out_dir);
  if (format == ReportFormat::Csv) {
    auto out = open_out(out_dir / "transfer.csv");
    out << "surrogate,target,evasion_rate,detected\n";
    for (std::size_t r = 0; r < matrix.detectors.size(); ++r) {
      for (std::size_t c = 0; c < matrix.detectors.size(); ++c) {
        out << matrix.detectors[r] << ',' << matrix.detectors[c] << ','
            << format_double(matrix.evasion_rate[r][c]) << ','
            << matrix.detected[r] << '\n';
      }
    }
    return;
  }
  ordered_json j;
  j["detectors"] = matrix.detectors;
  j["evasion_rate"] = matrix.evasion_rate;
  j["detected"] = matrix.detected;
  auto out = open_out(out_dir / "transfer.json");
  out << j.dump(2) << '\n';
}

void emit_sweep(const std::vector<SweepPoint>& points, std::string_view x_name,
                const std::filesystem::path& file) {
  auto out = open_out(file);
  out << x_name << ",evasion_rate,avg_added_binary_features\n";
  for (const SweepPoint& p : points) {
    out << format_double(p.x) << ',' << format_double(p.evasion_rate) << ','
        << format_double(p.added_binary_features.mean) << '\n';
  }
}

}  // namespace evasim
