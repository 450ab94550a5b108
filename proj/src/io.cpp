#include <cmfg/io.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace cmfg {

using json = nlohmann::json;

namespace {

LogLevel parse_log_level() {
  const char* raw = std::getenv("CMFG_LOG");
  if (!raw) return LogLevel::error;
  const std::string v(raw);
  if (v == "debug") return LogLevel::debug;
  if (v == "info") return LogLevel::info;
  return LogLevel::error;
}

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::info: return "info";
    default: return "debug";
  }
}

int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

json parse_or_throw(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(what) + ": parse error at line " +
                          std::to_string(line_of_byte(text, e.byte)) + ": " + e.what());
  }
}

// null for non-finite values; JSON has no encoding for them
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json dims_json(const GameDims& d) {
  return json{{"n_states", d.n_states},
              {"n_actions", d.n_actions},
              {"horizon_len", d.horizon_len},
              {"n_constraints", d.n_constraints}};
}

json policy_json_obj(const Policy& pi) {
  return json{{"dims", dims_json(pi.dims)}, {"values", pi.values}};
}

Policy policy_from_obj(const json& j) {
  if (!j.contains("dims") || !j.contains("values")) {
    throw ValidationError("policy json: need keys dims and values");
  }
  const json& jd = j.at("dims");
  Policy pi;
  pi.dims.n_states = jd.value("n_states", 0);
  pi.dims.n_actions = jd.value("n_actions", 0);
  pi.dims.horizon_len = jd.value("horizon_len", 0);
  pi.dims.n_constraints = jd.value("n_constraints", 0);
  if (!j.at("values").is_array()) throw ValidationError("policy json: values must be an array");
  pi.values = j.at("values").get<std::vector<double>>();
  validate_policy(pi);
  return pi;
}

}  // namespace

std::string build_version() {
#ifdef CMFG_VERSION
  return CMFG_VERSION;
#else
  return "unknown";
#endif
}

LogLevel log_level() {
  static const LogLevel level = parse_log_level();
  return level;
}

void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << "[" << level_tag(level) << "] " << msg << "\n";
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvBuilder::CsvBuilder(const std::vector<std::string>& header) : arity_(header.size()) {
  emit(header);
}

void CsvBuilder::row(const std::vector<std::string>& cells) {
  if (cells.size() != arity_) throw ValidationError("csv: row arity does not match header");
  emit(cells);
}

void CsvBuilder::emit(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ += ',';
    const std::string& f = cells[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out_ += f;
      continue;
    }
    out_ += '"';
    for (char c : f) {
      if (c == '"') out_ += '"';
      out_ += c;
    }
    out_ += '"';
  }
  out_ += "\r\n";
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series,
                           bool log_y) {
  const double W = 800, H = 500, ml = 70, mr = 160, mt = 45, mb = 55;
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool seen = false;
  for (const ChartSeries& s : series) {
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      double y = s.ys[i];
      if (!std::isfinite(s.xs[i]) || !std::isfinite(y)) continue;
      if (log_y) {
        if (y <= 0.0) continue;
        y = std::log10(y);
      }
      if (!seen) {
        x_lo = x_hi = s.xs[i];
        y_lo = y_hi = y;
        seen = true;
      } else {
        x_lo = std::min(x_lo, s.xs[i]);
        x_hi = std::max(x_hi, s.xs[i]);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
    }
  }
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (W - ml - mr); };
  const auto py = [&](double y) { return H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
         "viewBox=\"0 0 800 500\" width=\"800\" height=\"500\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  out << "<text x=\"" << fixed2((ml + W - mr) / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 5.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 5.0;
    out << "<line x1=\"" << fixed2(px(fx)) << "\" y1=\"" << fixed2(H - mb) << "\" x2=\""
        << fixed2(px(fx)) << "\" y2=\"" << fixed2(mt) << "\" stroke=\"#dddddd\"/>\n";
    out << "<line x1=\"" << fixed2(ml) << "\" y1=\"" << fixed2(py(fy)) << "\" x2=\""
        << fixed2(W - mr) << "\" y2=\"" << fixed2(py(fy)) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << fixed2(px(fx)) << "\" y=\"" << fixed2(H - mb + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(fx) << "</text>\n";
    out << "<text x=\"" << fixed2(ml - 6) << "\" y=\"" << fixed2(py(fy) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  out << "<rect x=\"" << fixed2(ml) << "\" y=\"" << fixed2(mt) << "\" width=\""
      << fixed2(W - ml - mr) << "\" height=\"" << fixed2(H - mt - mb)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << fixed2((ml + W - mr) / 2) << "\" y=\"" << fixed2(H - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << xml_escape(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << fixed2((mt + H - mb) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << fixed2((mt + H - mb) / 2) << ")\">" << xml_escape(y_label)
      << (log_y ? " (log scale)" : "") << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const ChartSeries& s = series[k];
    const char* color = kPalette[k % 6];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      double y = s.ys[i];
      if (!std::isfinite(s.xs[i]) || !std::isfinite(y)) continue;
      if (log_y) {
        if (y <= 0.0) continue;
        y = std::log10(y);
      }
      pts << fixed2(px(s.xs[i])) << ',' << fixed2(py(y)) << ' ';
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    const double ly = mt + 16 + 18 * static_cast<double>(k);
    out << "<line x1=\"" << fixed2(W - mr + 10) << "\" y1=\"" << fixed2(ly) << "\" x2=\""
        << fixed2(W - mr + 34) << "\" y2=\"" << fixed2(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << fixed2(W - mr + 40) << "\" y=\"" << fixed2(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.label)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw ValidationError("short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ValidationError("cannot finalize file: " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string policy_to_json(const Policy& pi) { return policy_json_obj(pi).dump(2) + "\n"; }

Policy policy_from_json_text(const std::string& text) {
  const json j = parse_or_throw(text, "policy json");
  if (j.contains("policy")) return policy_from_obj(j.at("policy"));
  return policy_from_obj(j);
}

std::string solve_result_json(const SolveResult& res, const GapReport& gaps) {
  json j;
  j["converged"] = res.converged;
  j["iterations"] = res.iterations;
  j["objective"] = num(res.state.objective);
  j["g_opt"] = gaps.v_star_defined ? num(gaps.g_opt) : json(nullptr);
  j["g_fea"] = num(gaps.g_fea);
  j["v_pi"] = num(gaps.v_pi);
  j["v_star"] = gaps.v_star_defined ? num(gaps.v_star) : json(nullptr);
  j["avg_cost"] = gaps.cost_vector;
  j["delta_measured"] = num(res.delta_measured);
  j["box"] = {{"beta_y", res.box.beta_y},
              {"beta_z", res.box.beta_z},
              {"beta_lambda", res.box.beta_lambda},
              {"delta", res.box.delta},
              {"gamma0", res.box.gamma0}};
  j["lambda"] = res.state.lambda;
  j["policy"] = policy_json_obj(res.policy);
  j["flow"] = res.state.L.values;
  return j.dump(2) + "\n";
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  CsvBuilder csv({"iter", "objective", "term1", "term2", "term3", "term4", "term5", "g_opt",
                  "g_fea"});
  for (const TraceRow& r : trace) {
    csv.row({std::to_string(r.iter), format_double(r.objective), format_double(r.term1),
             format_double(r.term2), format_double(r.term3), format_double(r.term4),
             format_double(r.term5), r.has_gaps ? format_double(r.g_opt) : "",
             r.has_gaps ? format_double(r.g_fea) : ""});
  }
  return csv.str();
}

std::string flow_csv(const MeanFieldFlow& L) {
  const GameDims& d = L.dims;
  std::vector<std::string> header = {"t"};
  for (int s = 0; s < d.n_states; ++s) header.push_back("mu_" + std::to_string(s));
  for (int a = 0; a < d.n_actions; ++a) header.push_back("act_" + std::to_string(a));
  CsvBuilder csv(header);
  for (int t = 0; t < d.horizon_len; ++t) {
    std::vector<std::string> cells = {std::to_string(t)};
    for (int s = 0; s < d.n_states; ++s) {
      double m = 0.0;
      for (int a = 0; a < d.n_actions; ++a) m += L.at(t, s, a);
      cells.push_back(format_double(m));
    }
    for (int a = 0; a < d.n_actions; ++a) {
      double m = 0.0;
      for (int s = 0; s < d.n_states; ++s) m += L.at(t, s, a);
      cells.push_back(format_double(m));
    }
    csv.row(cells);
  }
  return csv.str();
}

std::string bound_set_json(const BoundSet& bs) {
  json j;
  j["alpha"] = num(bs.alpha);
  j["zeta1"] = num(bs.zeta1);
  j["zeta2"] = num(bs.zeta2);
  j["zeta3"] = num(bs.zeta3);
  j["zeta4"] = num(bs.zeta4);
  j["zeta1_tilde"] = num(bs.zeta1_tilde);
  j["zeta2_tilde"] = num(bs.zeta2_tilde);
  j["zeta3_tilde"] = num(bs.zeta3_tilde);
  j["zeta4_tilde"] = num(bs.zeta4_tilde);
  j["c_tilde"] = num(bs.c_tilde);
  j["c_psa"] = num(bs.c_psa);
  j["eps1"] = num(bs.eps1);
  j["eps2"] = num(bs.eps2);
  return j.dump(2) + "\n";
}

std::string nplayer_csv(const RateStudy& study) {
  CsvBuilder csv({"n_players", "deviation_mean", "deviation_stderr", "gain_mean", "gain_stderr"});
  for (const RateRow& r : study.rows) {
    csv.row({std::to_string(r.n_players), format_double(r.deviation_mean),
             format_double(r.deviation_stderr), format_double(r.gain_mean),
             format_double(r.gain_stderr)});
  }
  return csv.str();
}

std::string certificate_json(const EpsNeCertificate* cert, const RateStudy* study,
                             const std::vector<std::string>& warnings) {
  json j;
  j["skipped"] = cert == nullptr;
  if (cert) {
    j["n_required"] = cert->n_required;
    j["eps_coupling"] = num(cert->eps_coupling);
    j["c_tilde"] = num(cert->c_tilde);
    j["eps1_theory"] = num(cert->eps1_theory);
    j["eps2_theory"] = num(cert->eps2_theory);
    j["measured"] = cert->measured;
    if (cert->measured) {
      j["eps1_measured"] = num(cert->eps1_measured);
      j["eps1_measured_stderr"] = num(cert->eps1_measured_stderr);
      j["eps2_measured"] = num(cert->eps2_measured);
      j["eps2_measured_stderr"] = num(cert->eps2_measured_stderr);
    }
  }
  if (study) j["slope"] = num(study->slope);
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["config"] = parse_or_throw(m.config_json, "manifest config");
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  j["outputs"] = m.outputs;
  write_file_atomic(dir + "/manifest.json", j.dump(2) + "\n");
}

}  // namespace cmfg
