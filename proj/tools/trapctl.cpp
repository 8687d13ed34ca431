// trapctl: design, simulate, tabulate, verify and sweep scale-invariant trap protocols.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "trapctl/trapctl.hpp"

namespace fs = std::filesystem;
using namespace trapctl;

namespace {

enum ExitCode { exit_ok = 0, exit_verification = 1, exit_input = 2, exit_numeric = 3 };

struct Globals {
  double omega0 = 1.0;
  double tol = 1e-10;
  std::uint64_t seed = EnsembleConfig{}.seed;
  std::string out_dir = ".";
  std::string preset_id;
};

// ---------------------------------------------------------------------------
// key=value parameters

double parse_number(const std::string& key, const std::string& text) {
  auto plain = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v))
      throw ParseError("parameter '" + key + "': cannot parse '" + text + "' as a number");
    return v;
  };
  if (text.rfind("sqrt(", 0) == 0 && text.size() > 6 && text.back() == ')') {
    const double x = plain(text.substr(5, text.size() - 6));
    if (x < 0.0) throw ParseError("parameter '" + key + "': sqrt of a negative number");
    return std::sqrt(x);
  }
  if (const auto slash = text.find('/'); slash != std::string::npos && slash > 0) {
    const double den = plain(text.substr(slash + 1));
    if (den == 0.0) throw ParseError("parameter '" + key + "': division by zero");
    return plain(text.substr(0, slash)) / den;
  }
  return plain(text);
}

class Params {
 public:
  Params() = default;

  void set(const std::string& key, const std::string& value) { raw_[key] = value; }

  void merge_missing(const std::map<std::string, std::string>& defaults) {
    for (const auto& [k, v] : defaults) raw_.emplace(k, v);
  }

  bool has(const std::string& key) const { return raw_.count(key) != 0; }

  double num(const std::string& key, const std::string& context) const {
    const auto it = raw_.find(key);
    if (it == raw_.end()) throw ParseError("missing required parameter '" + key + "' for " + context);
    return parse_number(key, it->second);
  }

  double num_or(const std::string& key, double fallback) const {
    const auto it = raw_.find(key);
    return it == raw_.end() ? fallback : parse_number(key, it->second);
  }

  std::optional<double> opt(const std::string& key) const {
    const auto it = raw_.find(key);
    if (it == raw_.end()) return std::nullopt;
    return parse_number(key, it->second);
  }

  int integer(const std::string& key, const std::string& context) const {
    const double v = num(key, context);
    if (v != std::floor(v) || std::abs(v) > 1e9)
      throw ParseError("parameter '" + key + "' must be an integer");
    return static_cast<int>(v);
  }

  std::string str(const std::string& key, const std::string& context) const {
    const auto it = raw_.find(key);
    if (it == raw_.end()) throw ParseError("missing required parameter '" + key + "' for " + context);
    return it->second;
  }

  void allow_only(const std::set<std::string>& allowed, const std::string& context) const {
    for (const auto& [k, v] : raw_) {
      if (allowed.count(k)) continue;
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ParseError("unknown parameter '" + k + "' for " + context + " (allowed: " + list + ")");
    }
  }

  const std::map<std::string, std::string>& raw() const { return raw_; }

 private:
  std::map<std::string, std::string> raw_;
};

/// Splits tokens into positional words and key=value parameters.
void split_tokens(const std::vector<std::string>& tokens, std::vector<std::string>& words,
                  Params& params) {
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      words.push_back(tok);
      continue;
    }
    const std::string key = tok.substr(0, eq);
    if (key.empty()) throw ParseError("malformed parameter '" + tok + "'");
    if (params.has(key)) throw ParseError("parameter '" + key + "' given twice");
    params.set(key, tok.substr(eq + 1));
  }
}

// ---------------------------------------------------------------------------
// Protocol families

struct Family {
  std::set<std::string> keys;
  std::function<ProtocolSpec(const Params&, double omega0)> build;
};

/// b_F from bF, omegaF or an expansion time tk (free flight or inversion).
double target_scaling(const Params& p, double omega0, const std::string& ctx,
                      std::optional<double> omegaI = std::nullopt) {
  const int given = p.has("bF") + p.has("omegaF") + p.has("tk");
  if (given == 0) throw ParseError("missing required parameter 'bF' (or 'omegaF', 'tk') for " + ctx);
  if (given > 1) throw ParseError("give only one of 'bF', 'omegaF', 'tk' for " + ctx);
  if (p.has("bF")) return p.num("bF", ctx);
  if (p.has("omegaF")) {
    const double wF = p.num("omegaF", ctx);
    if (!(wF > 0.0)) throw DomainError("omega_F must be > 0");
    return std::sqrt(omega0 / wF);
  }
  const double tk = p.num("tk", ctx);
  if (!(tk > 0.0)) throw DomainError("t_k must be > 0");
  if (omegaI) return b_const_freq(tk, 1.0, 0.0, -*omegaI * *omegaI, omega0).b;
  return b_tof(tk, omega0);
}

const std::map<std::string, Family>& families() {
  static const std::map<std::string, Family> table = {
      {"dkc-free",
       {{"bF", "omegaF", "tk"},
        [](const Params& p, double w0) {
          return design_dkc_free(target_scaling(p, w0, "family 'dkc-free'"), w0);
        }}},
      {"dkc-free-longtime",
       {{"bF", "omegaF", "tk"},
        [](const Params& p, double w0) {
          return design_dkc_free(target_scaling(p, w0, "family 'dkc-free-longtime'"), w0,
                                 KickRule::longtime);
        }}},
      {"dkc-inverted",
       {{"bF", "omegaF", "tk", "omegaI"},
        [](const Params& p, double w0) {
          const std::string ctx = "family 'dkc-inverted'";
          const double wI = p.num("omegaI", ctx);
          if (!(wI > 0.0)) throw DomainError("omega_I must be > 0");
          return design_dkc_inverted(target_scaling(p, w0, ctx, wI), wI, w0);
        }}},
      {"bangbang-positive",
       {{"omegaF"},
        [](const Params& p, double w0) {
          return design_bangbang_positive(w0, p.num("omegaF", "family 'bangbang-positive'"));
        }}},
      {"constant-mu",
       {{"omegaF", "tF", "cycles"},
        [](const Params& p, double w0) {
          const std::string ctx = "family 'constant-mu'";
          const double wF = p.num("omegaF", ctx);
          const int cycles = p.has("cycles") ? p.integer("cycles", ctx) : 1;
          const double tF = p.has("tF") ? p.num("tF", ctx) : constant_mu_stationary_time(w0, wF, cycles);
          return design_constant_mu(w0, wF, tF).spec;
        }}},
      {"delta-sta",
       {{"omegaF", "tk", "n"},
        [](const Params& p, double w0) {
          const std::string ctx = "family 'delta-sta'";
          const int n = p.integer("n", ctx);
          if (n < 1) throw ParseError("parameter 'n' must be >= 1 for " + ctx);
          return design_delta_sta(w0, p.num("omegaF", ctx), p.num("tk", ctx), n);
        }}},
      {"finite-dkc-free",
       {{"omegaF", "omegak"},
        [](const Params& p, double w0) {
          const std::string ctx = "family 'finite-dkc-free'";
          return design_finite_dkc_free(w0, p.num("omegaF", ctx), p.num("omegak", ctx));
        }}},
      {"finite-dkc-inverted",
       {{"omegaF", "omegaI", "omegak"},
        [](const Params& p, double w0) {
          const std::string ctx = "family 'finite-dkc-inverted'";
          return design_finite_dkc_inverted(w0, p.num("omegaF", ctx), p.num("omegaI", ctx),
                                            p.num("omegak", ctx));
        }}},
      {"equilibrium",
       {{"T"},
        [](const Params& p, double w0) {
          const double T = p.num_or("T", 10.0 / w0);
          if (!(T > 0.0)) throw DomainError("T must be > 0");
          ProtocolSpec s;
          s.label = "equilibrium";
          s.schedule.omega0 = w0;
          s.schedule.omega_final_sq = w0 * w0;
          s.schedule.segments.push_back(SegmentLaw::constant(w0 * w0, T));
          s.design_params = {{"T", T}};
          s.predicted_final = {1.0, 0.0, T};
          s.provenance = {"hold the initial trap omega0 for T"};
          return s;
        }}},
  };
  return table;
}

ProtocolSpec build_family(const std::string& name, const Params& p, double omega0) {
  const auto& fam = families();
  const auto it = fam.find(name);
  if (it == fam.end()) {
    std::string list;
    for (const auto& [k, v] : fam) list += (list.empty() ? "" : ", ") + k;
    throw ParseError("unknown family '" + name + "' (known: " + list + ")");
  }
  p.allow_only(it->second.keys, "family '" + name + "'");
  ProtocolSpec spec = it->second.build(p, omega0);
  check_finite(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Figure presets

struct Preset {
  std::string family;  // protocol presets
  std::map<std::string, std::string> design;
  std::string table;   // table presets
  std::map<std::string, std::string> table_params;
  std::map<std::string, std::string> run;  // simulate / wigner / verify extras
};

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table = {
      {"fig1", {"dkc-free", {{"tk", "1.5"}}, "", {}, {{"beta0", "1"}, {"hold_periods", "1"}}}},
      {"fig2", {"", {}, "kick-vs-tk", {{"tmin", "0.1"}, {"tmax", "10"}, {"points", "100"}}, {}}},
      {"fig3", {"dkc-free", {{"omegaF", "0.5"}}, "", {}, {{"hold_periods", "1"}}}},
      {"fig4",
       {"delta-sta", {{"omegaF", "0.25"}, {"tk", "2"}, {"n", "1"}}, "delta-sta-schedule",
        {{"omegaF", "0.25"}, {"tk", "2"}, {"points", "201"}}, {{"hold_periods", "1"}}}},
      {"fig5", {"", {}, "gain-ratio", {{"Nmin", "1.01"}, {"Nmax", "20"}, {"points", "200"}}, {}}},
      {"fig6",
       {"finite-dkc-inverted", {{"omegaF", "0.5"}, {"omegaI", "4"}, {"omegak", "sqrt(200)"}}, "",
        {}, {{"hold_periods", "1"}}}},
      {"fig7",
       {"dkc-inverted", {{"omegaI", "1"}, {"tk", "1.5"}}, "", {}, {{"beta0", "1"}, {"hold_periods", "1"}}}},
      {"fig8",
       {"", {}, "finite-pulse", {{"omegaF", "0.5"}, {"kmin", "1"}, {"kmax", "20"}, {"points", "96"}}, {}}},
      {"fig9",
       {"", {}, "finite-pulse-inverted",
        {{"omegaF", "0.5"}, {"omegaI", "2"}, {"kmin", "1"}, {"kmax", "20"}, {"points", "96"}}, {}}},
  };
  return table;
}

const Preset& preset(const std::string& id) {
  const auto it = presets().find(id);
  if (it == presets().end()) throw ParseError("unknown figure id '" + id + "' (known: fig1 .. fig9)");
  return it->second;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string output_path(const Globals& g, const std::string& explicit_path, const std::string& fallback) {
  fs::path p = explicit_path.empty() ? fs::path(fallback) : fs::path(explicit_path);
  if (p.is_relative()) p = fs::path(g.out_dir) / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p.string();
}

/// Protocol from a file path, or from --paper-defaults when no path is given.
/// Returns the protocol plus the preset run extras (empty for files).
std::pair<ProtocolSpec, std::map<std::string, std::string>> load_protocol(
    const Globals& g, const std::vector<std::string>& words, const std::string& cmd) {
  if (words.size() > 1) throw ParseError(cmd + ": expected at most one protocol file");
  if (!words.empty()) {
    if (!g.preset_id.empty()) throw ParseError(cmd + ": give either a protocol file or --paper-defaults");
    return {io::read_protocol(words[0]), {}};
  }
  if (g.preset_id.empty()) throw ParseError(cmd + ": missing protocol file (or --paper-defaults <figure>)");
  const Preset& pr = preset(g.preset_id);
  if (pr.family.empty())
    throw ParseError(g.preset_id + " has no protocol; try `trapctl table --paper-defaults " + g.preset_id + "`");
  Params p;
  p.merge_missing(pr.design);
  return {build_family(pr.family, p, g.omega0), pr.run};
}

void print_summary(const ProtocolSpec& s, std::ostream& os) {
  os << "protocol: " << s.label << "\n";
  os << "omega0: " << io::fmt17(s.schedule.omega0) << "\n";
  double t = 0.0;
  for (std::size_t i = 0; i < s.schedule.segments.size(); ++i) {
    const auto& seg = s.schedule.segments[i];
    os << "segment " << i << ": " << to_string(seg.kind) << " t=[" << io::fmt17(t) << ", "
       << io::fmt17(t + seg.duration) << "]";
    if (seg.is_constant()) os << " omega_sq=" << io::fmt17(seg.omega_sq);
    os << "\n";
    t += seg.duration;
  }
  for (const auto& k : s.schedule.kicks)
    os << "kick: t=" << io::fmt17(k.time) << " kappa=" << io::fmt17(k.kick.kappa) << "\n";
  os << "final omega_sq: " << io::fmt17(s.schedule.omega_final_sq) << "\n";
  for (const auto& [k, v] : s.design_params) os << "param " << k << ": " << io::fmt17(v) << "\n";
  os << "predicted final: b=" << io::fmt17(s.predicted_final.b)
     << " b_dot=" << io::fmt17(s.predicted_final.b_dot) << "\n";
}

// ---------------------------------------------------------------------------
// Commands

int cmd_design(const Globals& g, const std::vector<std::string>& tokens, const std::string& out) {
  std::vector<std::string> words;
  Params p;
  split_tokens(tokens, words, p);
  std::string family;
  if (!g.preset_id.empty()) {
    const Preset& pr = preset(g.preset_id);
    if (pr.family.empty())
      throw ParseError(g.preset_id + " has no protocol; try `trapctl table --paper-defaults " + g.preset_id + "`");
    family = pr.family;
    p.merge_missing(pr.design);
  }
  if (words.size() > 1) throw ParseError("design: expected a single family name");
  if (!words.empty()) {
    if (!family.empty() && words[0] != family)
      throw ParseError("design: family '" + words[0] + "' conflicts with " + g.preset_id + " (" + family + ")");
    family = words[0];
  }
  if (family.empty()) throw ParseError("design: missing family name");
  const ProtocolSpec spec = build_family(family, p, g.omega0);
  const std::string path = output_path(g, out, spec.label + ".protocol.json");
  io::write_protocol(path, spec);
  print_summary(spec, std::cout);
  std::cout << "written: " << path << "\n";
  return exit_ok;
}

int cmd_simulate(const Globals& g, const std::vector<std::string>& tokens, const std::string& out) {
  std::vector<std::string> words;
  Params p;
  split_tokens(tokens, words, p);
  auto [spec, extras] = load_protocol(g, words, "simulate");
  p.merge_missing(extras);
  p.allow_only({"points", "hold_periods", "beta0"}, "simulate");
  const int points = p.has("points") ? p.integer("points", "simulate") : 401;
  if (points < 2) throw ParseError("parameter 'points' must be >= 2");
  const double periods = p.num_or("hold_periods", 0.0);
  if (periods < 0.0) throw ParseError("parameter 'hold_periods' must be >= 0");

  FrequencySchedule sched = spec.schedule;
  if (periods > 0.0) {
    if (!(sched.omega_final_sq > 0.0)) throw DomainError("hold requires a confining final trap");
    sched = sched.with_hold(periods * 2.0 * std::numbers::pi / std::sqrt(sched.omega_final_sq));
  }
  IntegrateOptions opts;
  opts.rtol = g.tol;
  opts.record_steps = false;
  const double total = sched.total_duration();
  for (int i = 1; i < points - 1; ++i) opts.sample_times.push_back(total * i / (points - 1));
  const Trajectory traj = integrate(sched, ScalingState{}, opts);
  const std::string path = output_path(g, out, spec.label + ".trajectory.csv");
  io::write_file(path, io::trajectory_table(traj, sched).to_string());
  const ScalingState end = traj.final_state();
  std::cout << "protocol: " << spec.label << "\nsamples: " << traj.samples.size()
            << "\nfinal_b: " << io::fmt17(end.b) << "\nfinal_b_dot: " << io::fmt17(end.b_dot)
            << "\nwritten: " << path << "\n";
  return exit_ok;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 2) throw ParseError("parameter 'points' must be >= 2");
  if (!(hi > lo)) throw ParseError("range maximum must exceed its minimum");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = i + 1 == n ? hi : lo + (hi - lo) * i / (n - 1);
  return v;
}

io::CsvTable table_kick_vs_tk(const Params& p, double w0) {
  const std::string ctx = "table 'kick-vs-tk'";
  io::CsvTable t;
  t.columns = {{"t_k", "1/omega0"}, {"b", "1"}, {"kappa_exact", "omega0"},
               {"kappa_longtime", "omega0"}, {"ratio_exact_over_longtime", "1"}};
  for (double tk : linspace(p.num_or("tmin", 0.1 / w0), p.num_or("tmax", 10.0 / w0),
                            p.has("points") ? p.integer("points", ctx) : 100)) {
    const double ke = dkc_kick_exact_tof(tk, w0), kl = dkc_kick_longtime_tof(tk);
    t.add_row({io::fmt17(tk), io::fmt17(b_tof(tk, w0)), io::fmt17(ke), io::fmt17(kl), io::fmt17(ke / kl)});
  }
  return t;
}

io::CsvTable table_kick_vs_bf(const Params& p, double w0) {
  const std::string ctx = "table 'kick-vs-bf'";
  io::CsvTable t;
  t.columns = {{"b_F", "1"}, {"t_k", "1/omega0"}, {"kappa_exact", "omega0"},
               {"kappa_longtime", "omega0"}, {"ratio_exact_over_longtime", "1"}};
  for (double bF : linspace(p.num_or("bmin", 1.05), p.num_or("bmax", 5.0),
                            p.has("points") ? p.integer("points", ctx) : 100)) {
    const double tk = tof_expansion_time(bF, w0);
    const double ke = dkc_kick_exact_tof(tk, w0), kl = dkc_kick_longtime_tof(tk);
    t.add_row({io::fmt17(bF), io::fmt17(tk), io::fmt17(ke), io::fmt17(kl), io::fmt17(ke / kl)});
  }
  return t;
}

io::CsvTable table_inverted_kick_vs_bf(const Params& p, double w0) {
  const std::string ctx = "table 'inverted-kick-vs-bf'";
  const double wI = p.num_or("omegaI", w0);
  io::CsvTable t;
  t.columns = {{"b_F", "1"}, {"t_k", "1/omega0"}, {"t_k_approx", "1/omega0"},
               {"kappa_exact", "omega0"}, {"kappa_approx", "omega0"}, {"ratio_exact_over_approx", "1"}};
  for (double bF : linspace(p.num_or("bmin", 1.05), p.num_or("bmax", 5.0),
                            p.has("points") ? p.integer("points", ctx) : 100)) {
    const double tk = inverted_expansion_time(bF, wI, w0);
    const double ke = dkc_kick_exact_inverted(tk, wI, w0);
    t.add_row({io::fmt17(bF), io::fmt17(tk), io::fmt17(inverted_expansion_time_approx(bF, wI, w0)),
               io::fmt17(ke), io::fmt17(wI), io::fmt17(ke / wI)});
  }
  return t;
}

io::CsvTable table_gain_ratio(const Params& p, double w0) {
  const std::string ctx = "table 'gain-ratio'";
  io::CsvTable t;
  t.columns = {{"N", "1"}, {"ratio", "1"}, {"sqrt_N", "1"}, {"t_1", "1/omega0"}, {"t_dkc", "1/omega0"}};
  for (double N : linspace(p.num_or("Nmin", 1.01), p.num_or("Nmax", 20.0),
                           p.has("points") ? p.integer("points", ctx) : 200)) {
    const double r = adiabatic_gain_ratio(N);
    const double tdkc = std::sqrt(N - 1.0) / w0;
    t.add_row({io::fmt17(N), io::fmt17(r), io::fmt17(std::sqrt(N)), io::fmt17(r * tdkc), io::fmt17(tdkc)});
  }
  const ScalarMinimum m = minimize_gain_ratio();
  std::cout << "gain_ratio_minimum: N=" << io::fmt17(m.x) << " ratio=" << io::fmt17(m.value) << "\n";
  return t;
}

io::CsvTable table_finite_pulse(const Params& p, double w0, bool inverted) {
  const std::string ctx = inverted ? "table 'finite-pulse-inverted'" : "table 'finite-pulse'";
  const double wF = p.num_or("omegaF", 0.5 * w0);
  const double wI = inverted ? p.num_or("omegaI", 2.0 * w0) : 0.0;
  const double bF = std::sqrt(w0 / wF);
  // instantaneous-kick strengths at the corresponding delta-kick times
  double k_exact = 0.0, k_long = 0.0;
  if (inverted) {
    const double tk = inverted_expansion_time(bF, wI, w0);
    k_exact = dkc_kick_exact_inverted(tk, wI, w0);
    k_long = wI;
  } else {
    const double tk = tof_expansion_time(bF, w0);
    k_exact = dkc_kick_exact_tof(tk, w0);
    k_long = dkc_kick_longtime_tof(tk);
  }
  io::CsvTable t;
  t.columns = {{"omega_k", "omega0"},          {"t_k_finite", "1/omega0"},
               {"tau_k_finite", "1/omega0"},   {"pulse_area_finite", "omega0"},
               {"tau_k_delta_exact", "1/omega0"}, {"tau_k_delta_longtime", "1/omega0"},
               {"status", ""}};
  for (double wk : linspace(p.num_or("kmin", w0), p.num_or("kmax", 20.0 * w0),
                            p.has("points") ? p.integer("points", ctx) : 96)) {
    const double wk2 = wk * wk;
    std::string tk_s = "nan", tau_s = "nan", area_s = "nan", status = "ok";
    try {
      const PulseTiming pt = inverted ? finite_pulse_timing_inverted(w0, wF, wI, wk)
                                      : finite_pulse_timing_free(w0, wF, wk);
      tk_s = io::fmt17(pt.t_k);
      tau_s = io::fmt17(pt.tau_k);
      area_s = io::fmt17(pt.tau_k * wk2);
    } catch (const FeasibilityError& e) {
      status = std::string("infeasible: ") + e.bound();
    }
    t.add_row({io::fmt17(wk), tk_s, tau_s, area_s, io::fmt17(k_exact / wk2), io::fmt17(k_long / wk2), status});
  }
  return t;
}

io::CsvTable table_delta_sta(const Params& p, double w0) {
  const std::string ctx = "table 'delta-sta-schedule'";
  const double wF = p.num_or("omegaF", 0.25 * w0);
  const double tk = p.num_or("tk", 2.0 / w0);
  std::vector<ProtocolSpec> specs;
  for (int n = 1; n <= 3; ++n) specs.push_back(design_delta_sta(w0, wF, tk, n));
  io::CsvTable t;
  t.columns = {{"t", "1/omega0"},        {"omega_sq_n1", "omega0^2"}, {"omega_sq_n2", "omega0^2"},
               {"omega_sq_n3", "omega0^2"}, {"omega_sq_adiabatic_n1", "omega0^2"},
               {"b_n1", "1"},            {"b_n2", "1"},               {"b_n3", "1"}};
  const double bF = std::sqrt(w0 / wF);
  for (double s : linspace(0.0, tk, p.has("points") ? p.integer("points", ctx) : 201)) {
    std::vector<std::string> row{io::fmt17(s)};
    for (const auto& sp : specs) row.push_back(io::fmt17(sp.schedule.segments[0].omega_sq_at(s, w0)));
    const double b1 = 1.0 + (bF - 1.0) * (s / tk) * (s / tk);
    row.push_back(io::fmt17(w0 * w0 / (b1 * b1 * b1 * b1)));
    for (int n = 1; n <= 3; ++n) row.push_back(io::fmt17(1.0 + (bF - 1.0) * std::pow(s / tk, n + 1)));
    t.add_row(row);
  }
  return t;
}

int cmd_table(const Globals& g, const std::vector<std::string>& tokens, const std::string& out) {
  std::vector<std::string> words;
  Params p;
  split_tokens(tokens, words, p);
  std::string kind;
  if (!g.preset_id.empty()) {
    const Preset& pr = preset(g.preset_id);
    if (pr.table.empty())
      throw ParseError(g.preset_id + " has no table; try `trapctl simulate --paper-defaults " + g.preset_id + "`");
    kind = pr.table;
    p.merge_missing(pr.table_params);
  }
  if (words.size() > 1) throw ParseError("table: expected a single table kind");
  if (!words.empty()) {
    if (!kind.empty() && words[0] != kind)
      throw ParseError("table: kind '" + words[0] + "' conflicts with " + g.preset_id + " (" + kind + ")");
    kind = words[0];
  }
  static const std::map<std::string, std::set<std::string>> keys = {
      {"kick-vs-tk", {"tmin", "tmax", "points"}},
      {"kick-vs-bf", {"bmin", "bmax", "points"}},
      {"inverted-kick-vs-bf", {"bmin", "bmax", "points", "omegaI"}},
      {"gain-ratio", {"Nmin", "Nmax", "points"}},
      {"finite-pulse", {"omegaF", "kmin", "kmax", "points"}},
      {"finite-pulse-inverted", {"omegaF", "omegaI", "kmin", "kmax", "points"}},
      {"delta-sta-schedule", {"omegaF", "tk", "points"}},
  };
  if (kind.empty()) throw ParseError("table: missing table kind");
  const auto it = keys.find(kind);
  if (it == keys.end()) {
    std::string list;
    for (const auto& [k, v] : keys) list += (list.empty() ? "" : ", ") + k;
    throw ParseError("unknown table kind '" + kind + "' (known: " + list + ")");
  }
  p.allow_only(it->second, "table '" + kind + "'");
  const double w0 = g.omega0;
  io::CsvTable t;
  if (kind == "kick-vs-tk") t = table_kick_vs_tk(p, w0);
  else if (kind == "kick-vs-bf") t = table_kick_vs_bf(p, w0);
  else if (kind == "inverted-kick-vs-bf") t = table_inverted_kick_vs_bf(p, w0);
  else if (kind == "gain-ratio") t = table_gain_ratio(p, w0);
  else if (kind == "finite-pulse") t = table_finite_pulse(p, w0, false);
  else if (kind == "finite-pulse-inverted") t = table_finite_pulse(p, w0, true);
  else t = table_delta_sta(p, w0);
  const std::string path = output_path(g, out, kind + ".csv");
  io::write_file(path, t.to_string());
  std::cout << "table: " << kind << "\nrows: " << t.rows.size() << "\nwritten: " << path << "\n";
  return exit_ok;
}

int cmd_wigner(const Globals& g, const std::vector<std::string>& tokens, const std::string& out) {
  std::vector<std::string> words;
  Params p;
  split_tokens(tokens, words, p);
  auto [spec, extras] = load_protocol(g, words, "wigner");
  p.merge_missing(extras);
  p.allow_only({"beta0", "resolution", "ksigma", "hold_periods"}, "wigner");
  const double beta0 = p.num_or("beta0", 1.0 / spec.schedule.omega0);
  const int res = p.has("resolution") ? p.integer("resolution", "wigner") : 101;
  const double ksig = p.num_or("ksigma", 4.0);
  if (res < 2) throw ParseError("parameter 'resolution' must be >= 2");
  if (!(ksig > 0.0)) throw ParseError("parameter 'ksigma' must be > 0");

  const double w0 = spec.schedule.omega0;
  IntegrateOptions opts;
  opts.rtol = g.tol;
  opts.record_steps = false;
  const Trajectory traj = integrate(spec.schedule, ScalingState{}, opts);

  const GaussianState initial = thermal_state(beta0, w0);
  struct Snap {
    std::string name;
    double t;
    ScalingState s;
  };
  std::vector<Snap> snaps{{"initial", 0.0, ScalingState{}}};
  const auto kick = std::find_if(traj.events.begin(), traj.events.end(),
                                 [](const TrajectoryEvent& e) { return e.kind == EventKind::kick; });
  if (kick != traj.events.end()) {
    snaps.push_back({"pre-kick", kick->t, kick->before});
    snaps.push_back({"post-kick", kick->t, kick->after});
  } else {
    const ScalingState end = traj.final_state();
    snaps.push_back({"final", end.t, end});
  }

  std::vector<GaussianState> states;
  double rmax = 0.0, pmax = 0.0;
  for (const auto& sn : snaps) {
    states.push_back(evolve(initial, map_scale_invariant(sn.s.b, sn.s.b_dot)));
    rmax = std::max(rmax, ksig * std::sqrt(states.back().sigma_rr));
    pmax = std::max(pmax, ksig * std::sqrt(states.back().sigma_pp));
  }
  const double r0 = std::sqrt(1.0 / (2.0 * w0)), p0 = std::sqrt(w0 / 2.0);
  const std::string stem = out.empty() ? spec.label : out;
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    io::GridFile gf;
    gf.label = snaps[i].name;
    gf.time = snaps[i].t;
    gf.r_scale = r0;
    gf.p_scale = p0;
    gf.grid = wigner_grid(states[i], AxisSpec{-rmax, rmax, static_cast<std::size_t>(res)},
                          AxisSpec{-pmax, pmax, static_cast<std::size_t>(res)});
    const std::string path = output_path(g, "", stem + ".wigner-" + snaps[i].name + ".txt");
    io::write_file(path, io::grid_to_string(gf));
    std::cout << "snapshot " << snaps[i].name << ": t=" << io::fmt17(snaps[i].t)
              << " sigma_rr=" << io::fmt17(states[i].sigma_rr) << " sigma_rp=" << io::fmt17(states[i].sigma_rp)
              << " sigma_pp=" << io::fmt17(states[i].sigma_pp) << " written: " << path << "\n";
  }
  return exit_ok;
}

VerificationThresholds thresholds_from(const Params& p, const Globals& g) {
  VerificationThresholds th;
  th.tolerance = g.tol;
  th.b_error = p.num_or("b_error", th.b_error);
  th.b_dot_residual = p.num_or("bdot_error", th.b_dot_residual);
  th.invariant_drift = p.num_or("drift", th.invariant_drift);
  th.stationarity = p.num_or("stationarity", th.stationarity);
  th.ensemble_sigmas = p.num_or("sigmas", th.ensemble_sigmas);
  th.hold_periods = p.num_or("hold_periods", th.hold_periods);
  if (p.num_or("ensemble", 0.0) != 0.0) {
    th.ensemble_beta = p.num_or("beta0", 1.0);
    const double n = p.num_or("samples", 100000.0);
    if (!(n >= 2.0) || n != std::floor(n)) throw ParseError("parameter 'samples' must be an integer >= 2");
    th.ensemble.n_samples = static_cast<std::size_t>(n);
    th.ensemble.threads = static_cast<unsigned>(p.num_or("threads", 0.0));
    th.ensemble.seed = g.seed;
  }
  return th;
}

const std::set<std::string> verify_keys = {"b_error", "bdot_error", "drift", "stationarity", "sigmas",
                                           "hold_periods", "ensemble", "beta0", "samples", "threads"};

int cmd_verify(const Globals& g, const std::vector<std::string>& tokens, const std::string& out) {
  std::vector<std::string> words;
  Params p;
  split_tokens(tokens, words, p);
  auto [spec, extras] = load_protocol(g, words, "verify");
  p.allow_only(verify_keys, "verify");
  const VerificationReport rep = verify_protocol(spec, thresholds_from(p, g));
  std::string text = rep.to_text();
  if (p.num_or("ensemble", 0.0) != 0.0)
    text += "rng: " + std::string(EnsembleConfig::rng_algorithm) + "\nseed: " + std::to_string(g.seed) + "\n";
  const std::string path = output_path(g, out, spec.label + ".report.txt");
  io::write_file(path, text);
  std::cout << text << "written: " << path << "\n";
  return rep.passed() ? exit_ok : exit_verification;
}

int cmd_sweep(const Globals& g, const std::vector<std::string>& tokens, const std::string& out) {
  std::vector<std::string> words;
  Params p;
  split_tokens(tokens, words, p);
  if (words.size() != 1) throw ParseError("sweep: expected a single family name");
  const std::string family = words[0];
  const std::string vary = p.str("vary", "sweep");
  const std::vector<double> values =
      linspace(p.num("from", "sweep"), p.num("to", "sweep"), p.has("points") ? p.integer("points", "sweep") : 11);

  Params fixed, checks;
  for (const auto& [k, v] : p.raw()) {
    if (k == "vary" || k == "from" || k == "to" || k == "points") continue;
    (verify_keys.count(k) && k != "ensemble" ? checks : fixed).set(k, v);
  }
  if (p.has("ensemble")) throw ParseError("sweep: ensemble checks are not available in sweeps");
  if (fixed.has(vary)) throw ParseError("sweep: parameter '" + vary + "' is both fixed and varied");
  const VerificationThresholds th = thresholds_from(checks, g);
  {
    Params probe = fixed;
    probe.set(vary, "1");
    const auto fam = families().find(family);
    if (fam == families().end()) build_family(family, probe, g.omega0);
    probe.allow_only(fam->second.keys, "family '" + family + "'");
  }

  struct Row {
    std::optional<VerificationReport> rep;
    std::string status = "ok";
  };
  std::vector<Row> rows(values.size());
  auto work = [&](std::size_t i) {
    Params q = fixed;
    q.set(vary, io::fmt17(values[i]));
    try {
      rows[i].rep = verify_protocol(build_family(family, q, g.omega0), th);
    } catch (const FeasibilityError& e) {
      rows[i].status = std::string("infeasible: ") + e.bound();
    } catch (const DomainError& e) {
      rows[i].status = std::string("domain: ") + e.what();
    } catch (const Error& e) {
      rows[i].status = std::string("numeric: ") + e.what();
    }
  };
  const unsigned nthreads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                            static_cast<unsigned>(values.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < nthreads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < values.size(); i += nthreads) work(i);
    });
  for (auto& t : pool) t.join();

  io::CsvTable t;
  t.columns = {{vary, ""}, {"final_b_error", "1"}, {"final_bdot_residual", "1"},
               {"max_invariant_drift", "1"}, {"stationarity_error", "1"}, {"pass", ""}, {"status", ""}};
  std::size_t failures = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& r = rows[i];
    if (r.rep) {
      failures += !r.rep->passed();
      t.add_row({io::fmt17(values[i]), io::fmt17(r.rep->final_b_error), io::fmt17(r.rep->final_bdot_residual),
                 io::fmt17(r.rep->max_invariant_drift), io::fmt17(r.rep->stationarity_error),
                 r.rep->passed() ? "1" : "0", r.status});
    } else {
      t.add_row({io::fmt17(values[i]), "nan", "nan", "nan", "nan", "0", r.status});
    }
  }
  const std::string path = output_path(g, out, family + ".sweep-" + vary + ".csv");
  io::write_file(path, t.to_string());
  std::cout << "sweep: " << family << " over " << vary << "\npoints: " << values.size()
            << "\nfailures: " << failures << "\nwritten: " << path << "\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design, simulate and verify scale-invariant trap protocols"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--omega0", g.omega0, "Reference trap frequency (sets units)")->check(CLI::PositiveNumber);
  app.add_option("--tol", g.tol, "Integrator relative tolerance")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Monte Carlo seed");
  app.add_option("--out-dir", g.out_dir, "Output directory")->envname("TRAPCTL_OUT_DIR");
  app.add_option("--paper-defaults", g.preset_id, "Load a figure preset (fig1 .. fig9)");

  std::vector<std::string> args;
  std::string out;
  using Handler = int (*)(const Globals&, const std::vector<std::string>&, const std::string&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"design", "Construct a protocol: design <family> key=value ...", cmd_design},
      {"simulate", "Integrate a protocol file to a trajectory CSV", cmd_simulate},
      {"table", "Comparison tables: table <kind> key=value ...", cmd_table},
      {"wigner", "Wigner grids at the initial, pre-kick and post-kick instants", cmd_wigner},
      {"verify", "Verify a protocol file; exit 1 on failure", cmd_verify},
      {"sweep", "Design and verify a family over a parameter range", cmd_sweep},
  };
  std::map<CLI::App*, Handler> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("args", args, "Positional words and key=value parameters");
    sub->add_option("-o,--output", out, "Output file (relative to the output directory)");
    handlers[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_input;
  }

  try {
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(g, args, out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_input;
  } catch (const FeasibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_input;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_input;
  } catch (const UnsupportedScheduleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_input;
  } catch (const Error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return exit_numeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_input;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return exit_numeric;
  }
  return exit_input;
}
