#ifndef SENSPROBE_REPORT_HPP
#define SENSPROBE_REPORT_HPP

// Result tables: per-run search summaries (network size, iteration, sensitivity,
// SIP, runtime) and encoding-size scaling rows. Wall times are kept out of the
// logical rows so two runs with the same config produce identical rows.

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/profile.hpp"
#include "sensprobe/search.hpp"
#include "sensprobe/smt_encode.hpp"

namespace sensprobe {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Scaling rows

struct ScalingRow {
  std::string dims;
  std::size_t parameters = 0;
  std::size_t relu_nodes = 0;
  std::size_t script_lines = 0;
  std::size_t script_bytes = 0;
};

/// Query used only to size the encoding of `m`: X0 at the centre of the
/// input box, target opposite to its label, epsilon_Z from the default rule.
inline QuerySpec sizing_query(const Mlp& m) {
  QuerySpec q;
  q.base.assign(m.input_width(), 0.5);
  const double z0 = forward(m, q.base).logit;
  q.target = z0 < 0.0 ? 1 : 0;
  q.epsilon_z = auto_epsilon(z0, q.theta, q.target);
  return q;
}

/// Counts for one model; the script is the fully free query script.
inline ScalingRow scaling_row(const Mlp& m) {
  m.validate();
  const SmtScript s = encode_query(m, sizing_query(m), FixPlan::all(m, NodeStatus::Free));
  const std::string text = s.text();
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  return {m.dims_string(), m.parameter_count(), m.relu_count(), lines, text.size()};
}

inline std::vector<ScalingRow> scaling_report(const std::vector<Mlp>& models) {
  std::vector<ScalingRow> rows;
  rows.reserve(models.size());
  for (const auto& m : models) rows.push_back(scaling_row(m));
  return rows;
}

inline nlohmann::json to_json(const std::vector<ScalingRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"dims", r.dims},
                   {"parameters", r.parameters},
                   {"relu_nodes", r.relu_nodes},
                   {"script_lines", r.script_lines},
                   {"script_bytes", r.script_bytes}});
  return {{"schema_version", kReportSchemaVersion}, {"rows", out}};
}

/// 6751 -> "6,751".
inline std::string group_thousands(std::size_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

inline std::string scaling_markdown(const std::vector<ScalingRow>& rows) {
  std::ostringstream md;
  md << "| NN dimensions | # Parameters | # ReLU nodes | Script lines | Script bytes |\n"
     << "|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows)
    md << "| " << r.dims << " | " << group_thousands(r.parameters) << " | " << r.relu_nodes << " | "
       << group_thousands(r.script_lines) << " | " << group_thousands(r.script_bytes) << " |\n";
  return md.str();
}

// ---------------------------------------------------------------------------
// Run outcomes (outcome.json) and the summary report built from them

/// One tested suspect model.
struct VerdictRecord {
  std::string name;
  std::string model;
  double beta = 0;
  bool flagged = false;
};

/// Everything a finished search leaves in its run directory.
struct RunOutcome {
  std::string network;
  std::size_t parameters = 0;
  std::size_t relu_nodes = 0;
  std::string mode;
  std::optional<std::size_t> base_index;
  QuerySpec query;
  SearchOutcome search;
  std::optional<double> sip;
  std::vector<VerdictRecord> verdicts;
};

inline nlohmann::json log_to_json(const std::vector<IterationRecord>& log) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : log) {
    nlohmann::json row{{"pass", r.pass},
                       {"iteration", r.iteration},
                       {"timeout", r.timeout ? nlohmann::json(*r.timeout) : nlohmann::json()},
                       {"status", to_string(r.status)},
                       {"cached", r.cached},
                       {"plan", r.plan}};
    if (!r.note.empty()) row["note"] = r.note;
    out.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json verdicts_to_json(const std::vector<VerdictRecord>& v) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& r : v) out[r.name] = {{"model", r.model}, {"beta", r.beta}, {"flagged", r.flagged}};
  return out;
}

inline nlohmann::json to_json(const RunOutcome& o) {
  const SearchOutcome& s = o.search;
  nlohmann::json result{{"status", to_string(s.kind)}};
  if (s.kind == OutcomeKind::Found) {
    result["iteration"] = s.iteration;
    result["plan"] = s.plan ? s.plan->signature() : std::string();
    result["sample"] = s.sample->x;
    result["delta"] = s.sample->delta;
    nlohmann::json exact = nlohmann::json::array();
    for (const auto& v : s.sample->exact) exact.push_back(v.str());
    result["sample_exact"] = exact;
  } else if (!s.reason.empty()) {
    result["reason"] = s.reason;
  }
  std::vector<double> iteration_seconds;
  for (const auto& r : s.log) iteration_seconds.push_back(r.seconds);
  return {
      {"schema_version", kReportSchemaVersion},
      {"network", {{"dims", o.network}, {"parameters", o.parameters}, {"relu_nodes", o.relu_nodes}}},
      {"mode", o.mode},
      {"query",
       {{"base_index", o.base_index ? nlohmann::json(*o.base_index) : nlohmann::json()},
        {"base", o.query.base},
        {"gamma_radius", o.query.gamma_radius},
        {"target", o.query.target},
        {"epsilon_z", o.query.epsilon_z},
        {"theta", o.query.theta},
        {"delta_mode", o.query.delta_mode == DeltaMode::Existential ? "existential" : "pessimistic"}}},
      {"result", result},
      {"sip", o.sip ? nlohmann::json(*o.sip) : nlohmann::json()},
      {"verdicts", verdicts_to_json(o.verdicts)},
      {"iterations", log_to_json(s.log)},
      {"timings", {{"pass_seconds", s.pass_seconds}, {"iteration_seconds", iteration_seconds}}},
  };
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw InvalidInput("cannot read " + p.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw InvalidInput("cannot write " + p.string());
  f << text;
}

struct ReportRow {
  std::string run;
  std::string network;
  std::size_t parameters = 0;
  std::size_t relu_nodes = 0;
  std::string mode;
  std::string status;
  std::optional<std::size_t> iteration;
  nlohmann::json sensitivity = nlohmann::json::object();
  std::optional<double> sip;
  double theta = 0;
  std::vector<double> pass_seconds;
};

/// Summary row of an outcome.json document.
inline ReportRow report_row(const std::string& run, const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion)
      throw InvalidInput(run + ": unsupported outcome schema version");
    ReportRow r;
    r.run = run;
    r.network = j.at("network").at("dims").get<std::string>();
    r.parameters = j.at("network").at("parameters").get<std::size_t>();
    r.relu_nodes = j.at("network").at("relu_nodes").get<std::size_t>();
    r.mode = j.at("mode").get<std::string>();
    r.status = j.at("result").at("status").get<std::string>();
    if (j.at("result").contains("iteration")) r.iteration = j["result"]["iteration"].get<std::size_t>();
    for (const auto& [name, v] : j.at("verdicts").items())
      r.sensitivity[name] = {{"beta", v.at("beta")}, {"flagged", v.at("flagged")}};
    if (!j.at("sip").is_null()) r.sip = j["sip"].get<double>();
    r.theta = j.at("query").at("theta").get<double>();
    r.pass_seconds = j.at("timings").at("pass_seconds").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(run + ": malformed outcome: " + e.what());
  }
}

inline nlohmann::json report_json(const std::vector<ReportRow>& rows) {
  nlohmann::json out_rows = nlohmann::json::array(), timings = nlohmann::json::array();
  for (const auto& r : rows) {
    out_rows.push_back({{"run", r.run},
                        {"network_size", r.network},
                        {"parameters", r.parameters},
                        {"relu_nodes", r.relu_nodes},
                        {"mode", r.mode},
                        {"status", r.status},
                        {"iteration", r.iteration ? nlohmann::json(*r.iteration) : nlohmann::json()},
                        {"sensitivity", r.sensitivity},
                        {"sip", r.sip ? nlohmann::json(*r.sip) : nlohmann::json()},
                        {"theta", r.theta}});
    double total = 0;
    for (double s : r.pass_seconds) total += s;
    timings.push_back({{"run", r.run}, {"pass_seconds", r.pass_seconds}, {"total_seconds", total}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"columns", {"network size", "iter. #", "sensitivity", "SIP", "runtime"}},
          {"rows", out_rows},
          {"timings", timings}};
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

inline std::string report_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream md;
  md << "| Run | Network size | Iter. # | Sensitivity | SIP | Runtime (s) |\n"
     << "|---|---|---:|---|---:|---:|\n";
  for (const auto& r : rows) {
    std::string sens;
    for (const auto& [name, v] : r.sensitivity.items()) {
      if (!sens.empty()) sens += ", ";
      sens += name + " " + detail::fmt(v["beta"].get<double>()) + (v["flagged"].get<bool>() ? " (flagged)" : "");
    }
    if (sens.empty()) sens = "-";
    std::string runtime;
    for (double s : r.pass_seconds) runtime += (runtime.empty() ? "" : "/") + detail::fmt(s, "%.1f");
    md << "| " << r.run << " | " << r.network << " | " << (r.iteration ? std::to_string(*r.iteration) : r.status)
       << " | " << sens << " | " << (r.sip ? detail::fmt(*r.sip, "%.2e") : "-") << " | "
       << (runtime.empty() ? "-" : runtime) << " |\n";
  }
  if (!rows.empty()) md << "\nDetection threshold theta = " << detail::fmt(rows.front().theta, "%g") << ".\n";
  return md.str();
}

/// Writes report.json and report.md into `out_dir`.
inline void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "report.json", report_json(rows).dump(2) + "\n");
  write_text_file(out_dir / "report.md", "# Sensitive-sample search\n\n" + report_markdown(rows));
}

}  // namespace sensprobe

#endif  // SENSPROBE_REPORT_HPP
