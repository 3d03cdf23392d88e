#ifndef EVASIM_REPORT_HPP
#define EVASIM_REPORT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evasim {

// Mean and population standard deviation over `count` samples; zeros when
// the sample set is empty.
struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
  std::uint64_t count = 0;
};

Stat compute_stat(const std::vector<double>& values);

// Per-AE statistics are over successfully evaded samples only; the evasion
// rate is over the initially detected ones.
struct DetectorReportRow {
  std::string detector;
  std::uint64_t attacked = 0;
  std::uint64_t detected = 0;
  std::uint64_t evaded = 0;
  double evasion_rate = 0.0;
  Stat queries;
  Stat transformations;
  Stat size_increase_pct;
  Stat added_api_calls;
  Stat added_binary_features;
  std::optional<double> detection_rate;
  std::optional<double> false_alarm_rate;
};

struct BaselineReport {
  std::string target_detector;
  std::uint64_t detected = 0;
  double pk_evasion_rate = 0.0;
  Stat pk_added_features;  // over PK-evaded samples
  double random_evasion_rate = 0.0;
  Stat random_added_features;
  Stat random_queries;
};

struct Report {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<DetectorReportRow> rows;
  std::optional<BaselineReport> baselines;
};

// rows = surrogate detector, cols = target detector; each cell is the
// fraction of the surrogate's detected samples whose adversarial example the
// target classifies benign. The diagonal equals the direct evasion rate.
struct TransferMatrix {
  std::vector<std::string> detectors;
  std::vector<std::vector<double>> evasion_rate;
  std::vector<std::uint64_t> detected;  // per-surrogate denominator
};

struct SweepPoint {
  double x = 0.0;  // query budget or max cost
  double evasion_rate = 0.0;
  Stat added_binary_features;
};

enum class ReportFormat { Csv, Json };

// Shortest round-tripping decimal form; shared by the CSV and JSON writers
// so both render numerically identical values.
std::string format_double(double value);

// Writers are bit-stable for identical inputs. CSV columns are documented in
// the header row; JSON mirrors the same numbers.
void emit_report(const Report& report, const std::filesystem::path& out_dir,
                 ReportFormat format);
void emit_report(const TransferMatrix& matrix,
                 const std::filesystem::path& out_dir, ReportFormat format);
void emit_sweep(const std::vector<SweepPoint>& points, std::string_view x_name,
                const std::filesystem::path& file);

}  // namespace evasim

#endif  // EVASIM_REPORT_HPP
