#pragma once

// File formats: protocol documents (JSON text), CSV tables, Wigner grids and
// verification reports.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trapctl/errors.hpp"
#include "trapctl/ermakov.hpp"
#include "trapctl/phasespace.hpp"
#include "trapctl/protocol.hpp"
#include "trapctl/verify.hpp"

namespace trapctl::io {

inline constexpr int protocol_format_version = 1;

/// Decimal text with 17 significant digits (lossless for binary64).
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Protocol documents

inline nlohmann::ordered_json segment_to_json(const SegmentLaw& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["duration"] = s.duration;
  switch (s.kind) {
    case SegmentKind::constant: j["omega_sq"] = s.omega_sq; break;
    case SegmentKind::polynomial_sta:
      j["b_final"] = s.b_final;
      j["order"] = s.order;
      break;
    case SegmentKind::constant_mu: j["omega_end"] = s.omega_end; break;
  }
  return j;
}

inline std::string protocol_to_string(const ProtocolSpec& spec) {
  nlohmann::ordered_json j;
  j["format"] = "trapctl-protocol";
  j["version"] = protocol_format_version;
  j["units"] = {{"omega0", spec.schedule.omega0},
                {"convention", "hbar = m = 1; times in 1/omega0, frequencies in omega0"}};
  j["label"] = spec.label;
  j["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : spec.schedule.segments) j["segments"].push_back(segment_to_json(s));
  j["kicks"] = nlohmann::ordered_json::array();
  for (const auto& k : spec.schedule.kicks)
    j["kicks"].push_back({{"time", k.time}, {"kappa", k.kick.kappa}});
  j["final_trap"] = {{"omega_sq", spec.schedule.omega_final_sq}};
  j["predicted_final"] = {{"b", spec.predicted_final.b},
                          {"b_dot", spec.predicted_final.b_dot},
                          {"t", spec.predicted_final.t}};
  j["design_params"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : spec.design_params) j["design_params"][k] = v;
  j["provenance"] = spec.provenance;
  return j.dump(2) + "\n";
}

namespace detail {

using json = nlohmann::json;

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError("missing key '" + std::string(key) + "' in " + where);
  return j.at(key);
}

inline double number(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number()) throw ParseError("key '" + std::string(key) + "' in " + where + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ParseError("key '" + std::string(key) + "' in " + where + " is not finite");
  return x;
}

inline std::string text(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_string()) throw ParseError("key '" + std::string(key) + "' in " + where + " must be a string");
  return v.get<std::string>();
}

inline SegmentLaw segment_from_json(const json& j, const std::string& where) {
  const std::string kind = text(j, "kind", where);
  const double duration = number(j, "duration", where);
  if (kind == "constant") return SegmentLaw::constant(number(j, "omega_sq", where), duration);
  if (kind == "polynomial_sta") {
    const json& o = field(j, "order", where);
    if (!o.is_number_integer()) throw ParseError("key 'order' in " + where + " must be an integer");
    return SegmentLaw::polynomial_sta(number(j, "b_final", where), o.get<int>(), duration);
  }
  if (kind == "constant_mu") return SegmentLaw::constant_mu(number(j, "omega_end", where), duration);
  throw ParseError("unknown segment kind '" + kind + "' in " + where);
}

}  // namespace detail

inline ProtocolSpec protocol_from_string(const std::string& content) {
  using detail::json;
  json j;
  try {
    j = json::parse(content);
  } catch (const json::exception& e) {
    throw ParseError(std::string("protocol file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("protocol file must hold a JSON object");
  if (detail::text(j, "format", "protocol") != "trapctl-protocol")
    throw ParseError("protocol file has the wrong format tag");
  const json& ver = detail::field(j, "version", "protocol");
  if (!ver.is_number_integer() || ver.get<int>() != protocol_format_version)
    throw ParseError("unsupported protocol version");

  ProtocolSpec spec;
  spec.label = detail::text(j, "label", "protocol");
  spec.schedule.omega0 = detail::number(detail::field(j, "units", "protocol"), "omega0", "units");
  const json& segs = detail::field(j, "segments", "protocol");
  if (!segs.is_array()) throw ParseError("'segments' must be an array");
  for (std::size_t i = 0; i < segs.size(); ++i)
    spec.schedule.segments.push_back(detail::segment_from_json(segs[i], "segments[" + std::to_string(i) + "]"));
  const json& kicks = detail::field(j, "kicks", "protocol");
  if (!kicks.is_array()) throw ParseError("'kicks' must be an array");
  for (std::size_t i = 0; i < kicks.size(); ++i) {
    const std::string where = "kicks[" + std::to_string(i) + "]";
    spec.schedule.kicks.push_back(
        {detail::number(kicks[i], "time", where), {detail::number(kicks[i], "kappa", where)}});
  }
  spec.schedule.omega_final_sq =
      detail::number(detail::field(j, "final_trap", "protocol"), "omega_sq", "final_trap");
  const json& pf = detail::field(j, "predicted_final", "protocol");
  spec.predicted_final = {detail::number(pf, "b", "predicted_final"),
                          detail::number(pf, "b_dot", "predicted_final"),
                          detail::number(pf, "t", "predicted_final")};
  if (j.contains("design_params")) {
    const json& dp = j.at("design_params");
    if (!dp.is_object()) throw ParseError("'design_params' must be an object");
    for (auto it = dp.begin(); it != dp.end(); ++it) {
      if (!it.value().is_number()) throw ParseError("design parameter '" + it.key() + "' must be a number");
      spec.design_params[it.key()] = it.value().get<double>();
    }
  }
  if (j.contains("provenance")) {
    const json& pv = j.at("provenance");
    if (!pv.is_array()) throw ParseError("'provenance' must be an array");
    for (const auto& line : pv) {
      if (!line.is_string()) throw ParseError("provenance entries must be strings");
      spec.provenance.push_back(line.get<std::string>());
    }
  }
  try {
    spec.schedule.validate();
  } catch (const DomainError& e) {
    throw ParseError(std::string("invalid schedule: ") + e.what());
  }
  if (!(spec.predicted_final.b > 0.0)) throw ParseError("predicted final b must be > 0");
  return spec;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write to '" + path + "' failed");
}

inline ProtocolSpec read_protocol(const std::string& path) { return protocol_from_string(read_file(path)); }

inline void write_protocol(const std::string& path, const ProtocolSpec& spec) {
  write_file(path, protocol_to_string(spec));
}

// ---------------------------------------------------------------------------
// CSV

/// Column name plus unit, rendered as `name (unit)` in the header.
struct Column {
  std::string name;
  std::string unit;
};

struct CsvTable {
  std::vector<Column> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw Error("CSV row width does not match header");
    rows.push_back(std::move(row));
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ',';
      out += columns[i].name;
      if (!columns[i].unit.empty()) out += " (" + columns[i].unit + ")";
    }
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out += ',';
        out += r[i];
      }
      out += '\n';
    }
    return out;
  }
};

/// t, omega_sq, b, b_dot, alpha, event. Every kick or switch adds a
/// `<kind>-before` row (left limit of w^2) and a `<kind>-after` row (right
/// limit) next to the sample at that instant; plain samples are tagged `sample`.
inline CsvTable trajectory_table(const Trajectory& traj, const FrequencySchedule& schedule,
                                 double t0 = 0.0) {
  CsvTable t;
  t.columns = {{"t", "1/omega0"}, {"omega_sq", "omega0^2"}, {"b", "1"},
               {"b_dot", "omega0"}, {"alpha", "1"}, {"event", ""}};
  auto row = [&](const ScalingState& s, double wsq, const std::string& tag) {
    t.add_row({fmt17(s.t), fmt17(wsq), fmt17(s.b), fmt17(s.b_dot),
               fmt17(ermakov_invariant(s, wsq, traj.omega0)), tag});
  };
  std::size_t e = 0;
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& s = traj.samples[i];
    const bool repeat = i > 0 && traj.samples[i - 1].t == s.t;
    if (!repeat)
      t.add_row({fmt17(s.t), fmt17(s.omega_sq), fmt17(s.b), fmt17(s.b_dot), fmt17(s.alpha), "sample"});
    const bool last_at_t = i + 1 == traj.samples.size() || traj.samples[i + 1].t != s.t;
    if (!last_at_t) continue;
    while (e < traj.events.size() && traj.events[e].t <= s.t) {
      const auto& ev = traj.events[e];
      const std::string tag = ev.kind == EventKind::kick ? "kick" : "switch";
      row(ev.before, s.omega_sq, tag + "-before");
      row(ev.after, schedule.omega_sq_at(ev.t - t0), tag + "-after");
      ++e;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Wigner grids

struct GridFile {
  std::string label;
  double time = 0.0;
  double r_scale = 1.0;  // r values are r / r_scale
  double p_scale = 1.0;
  WignerGrid grid;
};

/// Header lines start with '#'; then one row per p value, r varying along the row.
inline std::string grid_to_string(const GridFile& g) {
  const WignerGrid& w = g.grid;
  std::string out;
  out += "# format: trapctl-wigner-grid\n# version: 1\n";
  out += "# label: " + g.label + "\n";
  out += "# time: " + fmt17(g.time) + "\n";
  out += "# r_scale: " + fmt17(g.r_scale) + "\n";
  out += "# p_scale: " + fmt17(g.p_scale) + "\n";
  out += "# r_range: " + fmt17(w.r_axis.front() / g.r_scale) + " " + fmt17(w.r_axis.back() / g.r_scale) + "\n";
  out += "# p_range: " + fmt17(w.p_axis.front() / g.p_scale) + " " + fmt17(w.p_axis.back() / g.p_scale) + "\n";
  out += "# resolution: " + std::to_string(w.r_axis.size()) + " " + std::to_string(w.p_axis.size()) + "\n";
  out += "# sigma: " + fmt17(w.state.sigma_rr) + " " + fmt17(w.state.sigma_rp) + " " +
         fmt17(w.state.sigma_pp) + "\n";
  out += "# det_sigma: " + fmt17(w.state.det()) + "\n";
  out += "# layout: row-major, rows = p_axis, columns = r_axis\n";
  out += "# r_axis:";
  for (double r : w.r_axis) out += " " + fmt17(r / g.r_scale);
  out += "\n# p_axis:";
  for (double p : w.p_axis) out += " " + fmt17(p / g.p_scale);
  out += "\n";
  const std::size_t nr = w.r_axis.size();
  for (std::size_t i = 0; i < w.p_axis.size(); ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      if (j) out += ' ';
      out += fmt17(w.values[i * nr + j]);
    }
    out += '\n';
  }
  return out;
}

/// Parsed grid text: header map plus the numeric block.
struct GridText {
  std::map<std::string, std::string> header;
  std::vector<std::vector<double>> rows;
};

inline GridText grid_from_string(const std::string& content) {
  GridText g;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw ParseError("malformed grid header line: " + line);
      std::string key = line.substr(1, colon - 1);
      key.erase(0, key.find_first_not_of(' '));
      std::string value = line.substr(colon + 1);
      value.erase(0, value.find_first_not_of(' '));
      g.header[key] = value;
      continue;
    }
    std::istringstream ls(line);
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof()) throw ParseError("malformed grid row");
    g.rows.push_back(std::move(row));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Reports

/// `key: value` pairs of a verification report; criterion lines are kept in order.
struct ReportText {
  std::map<std::string, std::string> fields;
  std::vector<std::string> criteria;
};

inline ReportText report_from_string(const std::string& content) {
  ReportText r;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw ParseError("malformed report line: " + line);
    const std::string key = line.substr(0, colon), value = line.substr(colon + 2);
    if (key == "criterion")
      r.criteria.push_back(value);
    else
      r.fields[key] = value;
  }
  return r;
}

}  // namespace trapctl::io
