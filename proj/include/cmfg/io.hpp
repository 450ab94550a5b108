#pragma once

#include <cmfg/cmfomo.hpp>
#include <cmfg/core.hpp>
#include <cmfg/metrics.hpp>
#include <cmfg/nplayer.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace cmfg {

// Version string baked into the core library at configure time.
std::string build_version();

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Threshold parsed once from CMFG_LOG; unset or unrecognized means error-only.
LogLevel log_level();
void log_line(LogLevel level, const std::string& msg);

// Shortest decimal form that round-trips the exact double (%.17g).
std::string format_double(double v);

// RFC 4180 assembly: header row first, CRLF line endings, fields quoted only
// when they contain a comma, quote, or line break.
class CsvBuilder {
 public:
  explicit CsvBuilder(const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);  // arity must match the header
  const std::string& str() const { return out_; }

 private:
  void emit(const std::vector<std::string>& cells);
  std::string out_;
  std::size_t arity_ = 0;
};

// One polyline per series, each on its own x grid; fixed 800 x 500 viewBox
// with axes, ticks, and a legend. Plain SVG 1.1 shapes only, so the file is
// fully self-contained. log_y plots log10 of the positive y values.
struct ChartSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series,
                           bool log_y = false);

// Write-to-temp-then-rename in the target directory, so a reader never
// observes a partially written file.
void write_file_atomic(const std::string& path, const std::string& data);
std::string read_file(const std::string& path);

std::string policy_to_json(const Policy& pi);
// Accepts either a bare policy object or a full solve result containing one.
Policy policy_from_json_text(const std::string& text);

// Serialized solve outcome: convergence flags, final objective, measured
// gaps, the policy, the flow, and the multipliers. Non-finite numbers are
// emitted as null.
std::string solve_result_json(const SolveResult& res, const GapReport& gaps);

std::string trace_csv(const std::vector<TraceRow>& trace);
// Per-step state and action marginals of a flow: t, mu_<s>..., act_<a>...
std::string flow_csv(const MeanFieldFlow& L);
std::string bound_set_json(const BoundSet& bs);
std::string nplayer_csv(const RateStudy& study);
// cert == nullptr marks a skipped certificate; the reason sits in warnings.
std::string certificate_json(const EpsNeCertificate* cert, const RateStudy* study,
                             const std::vector<std::string>& warnings);

struct RunManifest {
  std::string command;
  std::string config_json;  // effective flag values after defaulting
  std::string version;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> outputs;  // relative to the run directory
};

// Writes <dir>/manifest.json; callers emit it after every other file, so its
// presence marks the directory complete.
void write_manifest(const std::string& dir, const RunManifest& m);

}  // namespace cmfg
