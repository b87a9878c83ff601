// Command-line front end: analysis reports, construction dumps, eps-sweeps,
// exponent fits, and oracle cross-checks.
//
// Exit codes: 0 ok, 2 malformed config / usage, 3 degenerate data (a0 = a1),
// 4 oracle or invariant breach.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "twowell/compatibility.hpp"
#include "twowell/construction.hpp"
#include "twowell/energy_eval.hpp"
#include "twowell/linalg.hpp"
#include "twowell/operator_kernel.hpp"
#include "twowell/relaxation.hpp"

using nlohmann::json;
using namespace tw;

namespace {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct breach_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct Config {
  DiffOp op{OpKind::Curl, 2};
  int d = 2;
  Mat F{2}, a0{2}, a1{2};
  double tau = 0.42;
  double eps_start = 1e-7;
  double eps_end = 1e-3;
  int points = 17;
  uint64_t seed = 42;
  int grid_n = 512;
};

OpKind parse_op_kind(const std::string& s) {
  if (s == "curl") return OpKind::Curl;
  if (s == "div") return OpKind::Div;
  if (s == "curlcurl") return OpKind::CurlCurl;
  throw config_error("config: op must be one of \"curl\", \"div\", \"curlcurl\" (got \"" + s +
                     "\")");
}

Mat parse_mat(const json& j, int d, const char* name) {
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw config_error(std::string("config: ") + name + " must be a " + std::to_string(d) + "x" +
                       std::to_string(d) + " array of rows");
  Mat m(d);
  for (int i = 0; i < d; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<int>(row.size()) != d)
      throw config_error(std::string("config: ") + name + " row " + std::to_string(i) +
                         " must have " + std::to_string(d) + " numbers");
    for (int k = 0; k < d; ++k) {
      if (!row[k].is_number())
        throw config_error(std::string("config: ") + name + " entries must be numbers");
      m(i, k) = row[k].get<double>();
    }
  }
  return m;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw config_error(std::string("config: parse failure: ") + e.what());
  }
  Config c;
  try {
    c.op = DiffOp(parse_op_kind(j.at("op").get<std::string>()),
                  j.value("d", 2));
    c.d = c.op.d;
    if (c.d != 2 && c.d != 3) throw config_error("config: d must be 2 or 3");
    c.F = parse_mat(j.at("F"), c.d, "F");
    c.a0 = parse_mat(j.at("a0"), c.d, "a0");
    c.a1 = parse_mat(j.at("a1"), c.d, "a1");
    c.tau = j.value("tau", c.tau);
    c.eps_start = j.value("eps_start", c.eps_start);
    c.eps_end = j.value("eps_end", c.eps_end);
    c.points = j.value("points", c.points);
    c.seed = j.value("seed", c.seed);
    c.grid_n = j.value("grid_n", c.grid_n);
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  const double scale = std::max(1.0, std::max(fnorm(c.a0), fnorm(c.a1)));
  if (fnorm(c.a1 - c.a0) <= 1e-12 * scale)
    throw degenerate_error("degenerate data: a0 = a1 (the wells must differ)");
  return c;
}

ProblemData make_problem(const Config& c) {
  try {
    return ProblemData(c.op, c.F, c.a0, c.a1);
  } catch (const std::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

json mat_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.d; ++i) {
    json row = json::array();
    for (int k = 0; k < m.d; ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

json vec_json(const Vecd& v) {
  json out = json::array();
  for (double x : v) out.push_back(x);
  return out;
}

const char* lamination_kind_name(LaminationSet::Kind k) {
  switch (k) {
    case LaminationSet::Kind::SubsphereOfEigenspace: return "subsphere_of_eigenspace";
    case LaminationSet::Kind::FourPoints: return "four_points";
    case LaminationSet::Kind::FullSphere: return "full_sphere";
  }
  return "?";
}

int sym_rank(const Mat& a) {
  EigenSym es = sym_eigen(sym_part(a));
  double top = 0;
  for (double l : es.val) top = std::max(top, std::abs(l));
  int r = 0;
  for (double l : es.val)
    if (std::abs(l) > 1e-10 * std::max(1.0, top)) ++r;
  return r;
}

std::string predicted_exponent(const Config& c, const CompatQuantifiers& q,
                               const RelaxReport& rr) {
  if (rr.regime != Regime::Mixing) return "trivial";
  if (q.equicompatible) return "open";
  if (c.op.kind == OpKind::CurlCurl)
    return sym_rank(c.a1 - c.a0) == 1 ? "4/5" : "2/3";
  return "2/3";
}

Vecd pick_direction(const LaminationSet& W, int d) {
  if (!W.witnesses.empty()) return W.witnesses.front();
  Vecd e1(static_cast<size_t>(d), 0.0);
  e1[0] = 1.0;
  return e1;
}

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

int n_threads() {
  if (const char* env = std::getenv("TWOWELL_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(std::min(v, 256L));
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

template <class Body>
void parallel_for(int n, Body&& body) {
  const int k = std::min(n_threads(), n);
  if (k <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(k));
  for (int t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepRecord {
  double epsilon = 0;
  int N = 0;
  double E_total = 0, E_elastic = 0, E_surface = 0, E0 = 0, corrected = 0;
  std::string flags;
};

SweepRecord eval_point(const ProblemData& pd, const RelaxReport& rr, const Vecd& xi, double tau,
                       double eps) {
  SweepRecord r;
  r.epsilon = eps;
  if (rr.regime != Regime::Mixing) {
    // constant minimizer: no microstructure, no interfaces
    r.N = 0;
    r.E_total = r.E_elastic = r.E0 = rr.E0_density;
    r.E_surface = 0.0;
    r.corrected = 0.0;
    r.flags = "pure";
    return r;
  }
  CanonicalReduction red = reduce_to_canonical(pd, xi);
  r.flags = reduce_route_name(red.route);
  const double eps_hat = eps / red.back.eps_scale;
  const double s = red.back.energy_scale;
  if (red.route == ReduceRoute::CCRankOneFrame) {
    r.N = choose_N(eps_hat, ScalingRoute::FourFifths);
    BranchField f = cc_branching(pd, xi, r.N, tau);
    // cc_branching carries its back-transform scales: these are input-frame
    r.E_elastic = f.elastic_ledger();
    r.E_surface = f.surface_tv();
    r.E0 = f.E0_density();
  } else {
    r.N = choose_N(eps_hat, ScalingRoute::TwoThirds);
    const Vecd e1{1.0, 0.0};
    BranchField base = grad_branching(red.canonical, e1, r.N, tau);
    if (red.route == ReduceRoute::CCSemidef || red.route == ReduceRoute::CCIndefiniteLift) {
      SymmetrizedField sf = symmetrize_field(base, red);
      r.E_elastic = s * sf.elastic_ledger();
      r.E_surface = s * sf.surface_tv() / red.back.eps_scale;
      r.E0 = s * sf.E0_cc_density;
    } else {
      r.E_elastic = s * base.elastic_ledger();
      r.E_surface = s * base.surface_tv() / red.back.eps_scale;
      r.E0 = s * base.E0_density();
    }
  }
  r.E_total = r.E_elastic + eps * r.E_surface;
  r.corrected = r.E_total - r.E0;
  if (!(r.E_total >= r.E0 * (1.0 - 1e-9)))
    throw breach_error("excess floor violated: E_total < |Q| E0 at eps = " +
                       std::to_string(eps));
  return r;
}

std::vector<double> geometric_grid(double lo, double hi, int points) {
  if (!(lo > 0.0 && lo < 1.0 && hi > 0.0 && hi < 1.0))
    throw config_error("config: eps_start and eps_end must lie in (0,1)");
  if (points < 1) throw config_error("config: points must be >= 1");
  std::vector<double> eps(static_cast<size_t>(points));
  if (points == 1) {
    eps[0] = lo;
    return eps;
  }
  const double la = std::log(lo), lb = std::log(hi);
  for (int i = 0; i < points; ++i)
    eps[static_cast<size_t>(i)] = std::exp(la + (lb - la) * i / (points - 1));
  return eps;
}

std::string csv_text(const std::vector<SweepRecord>& recs) {
  std::string out = "epsilon,N,E_total,E_elastic,E_surface,E0,corrected,flags\n";
  char buf[512];
  for (const auto& r : recs) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n", r.epsilon, r.N,
                  r.E_total, r.E_elastic, r.E_surface, r.E0, r.corrected, r.flags.c_str());
    out += buf;
  }
  return out;
}

struct FitOut {
  LineFit lf;
  double lo = 0, hi = 0;
  int n = 0;
};

// Fit over records with N >= 4 (the ceiling quantizes N near eps = 1 and
// biases slopes) and corrected > 0 (logs must exist).
std::optional<FitOut> fit_records(const std::vector<SweepRecord>& recs, double eps_min,
                                  double eps_max) {
  std::vector<double> x, y;
  FitOut out;
  out.lo = std::numeric_limits<double>::infinity();
  out.hi = 0.0;
  for (const auto& r : recs) {
    if (r.epsilon < eps_min || r.epsilon > eps_max) continue;
    if (r.N < 4 || !(r.corrected > 0.0)) continue;
    x.push_back(std::log(r.epsilon));
    y.push_back(std::log(r.corrected));
    out.lo = std::min(out.lo, r.epsilon);
    out.hi = std::max(out.hi, r.epsilon);
  }
  if (x.size() < 5) return std::nullopt;
  out.lf = fit_line(x, y);
  out.n = static_cast<int>(x.size());
  return out;
}

json fit_json(const FitOut& f) {
  json j;
  j["slope"] = f.lf.slope;
  j["stderr"] = f.lf.stderr_slope;
  j["intercept"] = f.lf.intercept;
  j["r_squared"] = f.lf.r2;
  j["n"] = f.n;
  j["window"] = {f.lo, f.hi};
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open output file: " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_analyze(const Config& c) {
  ProblemData pd = make_problem(c);
  const Mat a = pd.a();
  CompatQuantifiers q = quantifiers(c.op, a);
  LaminationSet W = optimal_directions(c.op, a);
  RelaxReport rr = relax_report(pd);

  json out;
  out["op"] = op_name(c.op.kind);
  out["d"] = c.d;
  json compat;
  compat["h"] = q.h;
  compat["g"] = q.g;
  compat["equicompatible"] = q.equicompatible;
  if (q.vanishing_order) compat["vanishing_order"] = *q.vanishing_order;
  json lam;
  lam["kind"] = lamination_kind_name(W.kind);
  json wit = json::array();
  for (const auto& w : W.witnesses) wit.push_back(vec_json(w));
  lam["witnesses"] = wit;
  if (!W.basis.empty()) {
    json basis = json::array();
    for (const auto& b : W.basis) basis.push_back(vec_json(b));
    lam["basis"] = basis;
  }
  if (!W.points.empty()) {
    json pts = json::array();
    for (const auto& p : W.points) pts.push_back(vec_json(p));
    lam["points"] = pts;
  }
  compat["lamination_set"] = lam;
  out["compat"] = compat;
  json relax;
  relax["theta_tilde"] = rr.theta_tilde;
  relax["E0_density"] = rr.E0_density;
  relax["regime"] = regime_name(rr.regime);
  relax["slab_half_margin"] = rr.R_A;
  out["relax"] = relax;
  out["predicted_exponent"] = predicted_exponent(c, q, rr);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const Config& c, const std::string& out_path) {
  ProblemData pd = make_problem(c);
  RelaxReport rr = relax_report(pd);
  LaminationSet W = optimal_directions(c.op, pd.a());
  const Vecd xi = pick_direction(W, c.d);
  if (c.op.d != 2 && rr.regime == Regime::Mixing)
    throw config_error("sweep: constructions are planar (d = 2)");

  std::vector<double> eps = geometric_grid(c.eps_start, c.eps_end, c.points);
  std::vector<SweepRecord> recs(eps.size());
  parallel_for(static_cast<int>(eps.size()), [&](int i) {
    recs[static_cast<size_t>(i)] =
        eval_point(pd, rr, xi, c.tau, eps[static_cast<size_t>(i)]);
  });

  json meta;
  if (rr.regime != Regime::Mixing) {
    meta["note"] = "pure regime: corrected = 0 for all records, fit skipped";
  } else if (auto f = fit_records(recs, 0.0, 1.0)) {
    meta["fit"] = fit_json(*f);
  } else {
    meta["note"] = "fit skipped: fewer than 5 records with N >= 4";
  }

  const std::string csv = csv_text(recs);
  if (!out_path.empty()) {
    write_text(out_path, csv);
    std::cout << meta.dump(2) << "\n";
  } else {
    std::cout << csv;
    std::cerr << meta.dump(2) << "\n";
  }
  return 0;
}

int cmd_fit(const std::string& csv_path, double eps_min, double eps_max) {
  std::ifstream in(csv_path);
  if (!in) throw config_error("fit: cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw config_error("fit: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "epsilon,N,E_total,E_elastic,E_surface,E0,corrected,flags")
    throw config_error("fit: unexpected CSV header: " + line);
  std::vector<SweepRecord> recs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 8)
      throw config_error("fit: line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      SweepRecord r;
      r.epsilon = std::stod(f[0]);
      r.N = std::stoi(f[1]);
      r.E_total = std::stod(f[2]);
      r.E_elastic = std::stod(f[3]);
      r.E_surface = std::stod(f[4]);
      r.E0 = std::stod(f[5]);
      r.corrected = std::stod(f[6]);
      r.flags = f[7];
      recs.push_back(r);
    } catch (const std::exception&) {
      throw config_error("fit: line " + std::to_string(lineno) + ": parse failure");
    }
  }
  auto f = fit_records(recs, eps_min, eps_max);
  if (!f)
    throw config_error("fit: fewer than 5 usable records in window (need N >= 4, corrected > 0)");
  std::printf("slope = %.10g +- %.3g (r^2 = %.10g, n = %d, window = [%g, %g])\n", f->lf.slope,
              f->lf.stderr_slope, f->lf.r2, f->n, f->lo, f->hi);
  std::cout << fit_json(*f).dump(2) << "\n";
  return 0;
}

int cmd_construct(const Config& c, const std::string& out_path) {
  ProblemData pd = make_problem(c);
  RelaxReport rr = relax_report(pd);
  if (rr.regime != Regime::Mixing) {
    json out;
    out["note"] = "pure regime: constant minimizer, nothing to construct";
    out["regime"] = regime_name(rr.regime);
    out["E0_density"] = rr.E0_density;
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  if (c.op.d != 2) throw config_error("construct: constructions are planar (d = 2)");
  LaminationSet W = optimal_directions(c.op, pd.a());
  const Vecd xi = pick_direction(W, c.d);
  const double eps = c.eps_start;
  if (!(eps > 0.0 && eps < 1.0)) throw config_error("config: eps_start must lie in (0,1)");

  CanonicalReduction red = reduce_to_canonical(pd, xi);
  const double eps_hat = eps / red.back.eps_scale;

  json out;
  out["epsilon"] = eps;
  out["tau"] = c.tau;
  out["route"] = reduce_route_name(red.route);
  out["xi_star"] = vec_json(xi);
  out["frame"] = "canonical";
  out["rotation"] = mat_json(red.back.R);

  GridField g{};
  json ledger;
  if (red.route == ReduceRoute::CCRankOneFrame) {
    const int N = choose_N(eps_hat, ScalingRoute::FourFifths);
    BranchField f = cc_branching(pd, xi, N, c.tau);
    out["N"] = N;
    ledger["excess"] = f.excess_total;
    ledger["compat"] = f.compat_total;
    ledger["cross"] = f.cross_total;
    ledger["elastic"] = f.elastic_ledger();
    ledger["surface_tv"] = f.surface_tv();
    ledger["E0"] = f.E0_density();
    ledger["E_total"] = f.total_energy(eps);
    ledger["corrected"] = f.corrected_energy(eps);
    try {
      g = rasterize(f, c.grid_n);
    } catch (const std::exception& e) {
      throw config_error(std::string("construct: ") + e.what());
    }
    EnergyBreakdown eb = elastic_energy(g, f.data.F, f.data.ta0, f.data.ta1);
    json grid;
    grid["n"] = c.grid_n;
    grid["tilde_elastic"] = eb.elastic;
    grid["tilde_ledger"] = f.compat_total + f.cross_total;
    grid["resolution_warning"] = eb.resolution_warning;
    out["grid"] = grid;
  } else {
    const int N = choose_N(eps_hat, ScalingRoute::TwoThirds);
    const Vecd e1{1.0, 0.0};
    BranchField base = grad_branching(red.canonical, e1, N, c.tau);
    out["N"] = N;
    const bool sym_route =
        red.route == ReduceRoute::CCSemidef || red.route == ReduceRoute::CCIndefiniteLift;
    const double s = red.back.energy_scale;
    if (sym_route) {
      SymmetrizedField sf = symmetrize_field(base, red);
      out["rho1"] = red.rho1;
      out["rho2"] = red.rho2;
      ledger["excess"] = s * sf.excess_total;
      ledger["compat"] = s * sf.compat_total;
      ledger["cross"] = s * sf.cross_total;
      ledger["elastic"] = s * sf.elastic_ledger();
      ledger["surface_tv"] = s * sf.surface_tv() / red.back.eps_scale;
      ledger["E0"] = s * sf.E0_cc_density;
      ledger["E_total"] = s * sf.total_energy(eps_hat);
      ledger["corrected"] = s * sf.corrected_energy(eps_hat);
    } else {
      ledger["excess"] = s * base.excess_total;
      ledger["compat"] = s * base.compat_total;
      ledger["cross"] = s * base.cross_total;
      ledger["elastic"] = s * base.elastic_ledger();
      ledger["surface_tv"] = s * base.surface_tv() / red.back.eps_scale;
      ledger["E0"] = s * base.E0_density();
      ledger["E_total"] = s * base.total_energy(eps_hat);
      ledger["corrected"] = s * base.corrected_energy(eps_hat);
    }
    try {
      g = rasterize(base, c.grid_n);
    } catch (const std::exception& e) {
      throw config_error(std::string("construct: ") + e.what());
    }
    EnergyBreakdown eb = elastic_energy(g, base.data.F, base.data.ta0, base.data.ta1);
    json grid;
    grid["n"] = c.grid_n;
    grid["tilde_elastic"] = eb.elastic;
    grid["tilde_ledger"] = base.compat_total + base.cross_total;
    grid["resolution_warning"] = eb.resolution_warning;
    out["grid"] = grid;
  }
  out["ledger"] = ledger;

  std::ostringstream csv;
  dump_grid_csv(g, csv);
  if (!out_path.empty()) {
    write_text(out_path, csv.str());
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << csv.str();
    std::cerr << out.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

struct OracleCheck {
  std::string name;
  double max_diff = 0;
  double tol = 0;
  bool pass() const { return max_diff <= tol; }
};

void print_check(const OracleCheck& c) {
  std::printf("oracle %-28s max_diff=%.3e tol=%.1e %s\n", c.name.c_str(), c.max_diff, c.tol,
              c.pass() ? "PASS" : "FAIL");
}

Mat random_well(Rng& rng, const DiffOp& op) {
  return op.kind == OpKind::CurlCurl ? rng.sym_matrix(op.d) : rng.matrix(op.d);
}

int cmd_oracle(const std::optional<Config>& cfg, bool inject_h_error) {
  std::vector<DiffOp> ops;
  uint64_t seed = 42;
  if (cfg) {
    ops.push_back(cfg->op);
    seed = cfg->seed;
  } else {
    ops.emplace_back(OpKind::Curl, 2);
    ops.emplace_back(OpKind::Div, 2);
    ops.emplace_back(OpKind::CurlCurl, 2);
  }
  const int pairs = 200;
  std::vector<OracleCheck> checks;

  for (const DiffOp& op : ops) {
    if (op.kind == OpKind::CurlCurl && op.d != 2)
      throw config_error("oracle: closed-form curlcurl quantifiers require d = 2");
    Rng rng(seed);
    OracleCheck ch_h{std::string(op_name(op.kind)) + " h sphere", 0, 1e-6};
    OracleCheck ch_g{std::string(op_name(op.kind)) + " g sphere", 0, 1e-6};
    OracleCheck ch_t{std::string(op_name(op.kind)) + " theta grid", 0, 2e-6};
    OracleCheck ch_e{std::string(op_name(op.kind)) + " E0 grid", 0, 1e-6};
    OracleCheck ch_n{std::string(op_name(op.kind)) + " nullspace proj", 0, 1e-8};
    for (int i = 0; i < pairs; ++i) {
      Mat a0 = random_well(rng, op);
      Mat a1 = a0 + random_well(rng, op);
      while (fnorm(a1 - a0) < 0.3) a1 = a0 + random_well(rng, op);
      const double t = rng.uniform(0.05, 0.95);
      Mat F = a0 + t * (a1 - a0) + 0.3 * random_well(rng, op);
      ProblemData pd(op, F, a0, a1);
      const Mat a = pd.a();

      CompatQuantifiers q = quantifiers(op, a);
      if (inject_h_error) q.h += 1e-3;
      SphereScan scan = quantifiers_sphere_oracle(op, a, 4096);
      ch_h.max_diff = std::max(ch_h.max_diff, std::abs(q.h - scan.h) / std::max(1.0, q.h));
      ch_g.max_diff = std::max(ch_g.max_diff, std::abs(q.g - scan.g) / std::max(1.0, q.g));

      auto [tc, ec] = optimal_fraction(pd);
      auto [tg, eg] = optimal_fraction_grid_oracle(pd, q.h, 1000000);
      ch_t.max_diff = std::max(ch_t.max_diff, std::abs(tc - tg));
      ch_e.max_diff = std::max(ch_e.max_diff, std::abs(ec - eg) / std::max(1.0, std::abs(ec)));

      // nullspace projection: closed-form symbol projection vs SVD route
      Vecd xi(static_cast<size_t>(op.d), 0.0);
      for (auto& x : xi) x = rng.gaussian();
      Direction dir(xi);
      Mat p_closed = project_compatible(op, dir, a);
      Mat p_svd = project_compatible_oracle(op, dir, a);
      ch_n.max_diff =
          std::max(ch_n.max_diff, fnorm(p_closed - p_svd) / std::max(1.0, fnorm(a)));
    }
    checks.push_back(ch_h);
    checks.push_back(ch_g);
    checks.push_back(ch_t);
    checks.push_back(ch_e);
    checks.push_back(ch_n);

    // equicompatible multiplier: p vanishes identically on the sphere
    {
      Mat eye = identity(op.d);
      CompatQuantifiers qe = quantifiers(op, eye);
      if (qe.equicompatible) {
        OracleCheck ch_p{std::string(op_name(op.kind)) + " equicompat p", 0, 1e-10};
        Rng prng(seed + 1);
        for (int i = 0; i < 4096; ++i) {
          Vecd xi(static_cast<size_t>(op.d), 0.0);
          for (auto& x : xi) x = prng.gaussian();
          ch_p.max_diff = std::max(ch_p.max_diff, std::abs(multiplier_p(op, eye, Direction(xi))));
        }
        checks.push_back(ch_p);
      }
    }
  }

  // config-specific equicompatible confirmation
  if (cfg) {
    ProblemData pd = make_problem(*cfg);
    CompatQuantifiers q = quantifiers(cfg->op, pd.a());
    if (q.equicompatible) {
      OracleCheck ch{"config equicompat p", 0, 1e-10};
      Rng prng(seed + 2);
      for (int i = 0; i < 4096; ++i) {
        Vecd xi(static_cast<size_t>(cfg->d), 0.0);
        for (auto& x : xi) x = prng.gaussian();
        ch.max_diff = std::max(ch.max_diff, std::abs(multiplier_p(cfg->op, pd.a(), Direction(xi))));
      }
      checks.push_back(ch);
    }
  }

  // grid-quadrature oracle: Gauss-Legendre refinement consistency and a
  // rasterized unit cell against its analytic ledger
  {
    OracleCheck ch_gl{"cc compat GL32 vs GL64", 0, 1e-10};
    for (double theta : {0.2, 0.4, 0.5, 0.7}) {
      const double q32 = cc_interior_compat_quadrature(1.0, 0.8, theta, 32);
      const double q64 = cc_interior_compat_quadrature(1.0, 0.8, theta, 64);
      ch_gl.max_diff =
          std::max(ch_gl.max_diff, std::abs(q32 - q64) / std::max(1.0, std::abs(q64)));
    }
    checks.push_back(ch_gl);

    DiffOp curl2(OpKind::Curl, 2);
    Mat a0(2), a1(2, {1.0, 0.0, 0.0, 0.5});
    Mat F = 0.5 * a1;
    ProblemData pd(curl2, F, a0, a1);
    RelaxReport rr = relax_report(pd);
    CompatApprox ca = compatible_approximation(pd, Direction({1.0, 0.0}));
    CanonicalState cs;
    cs.op = curl2;
    cs.F = F;
    cs.a0 = a0;
    cs.a1 = a1;
    cs.ta0 = ca.a0t;
    cs.ta1 = ca.a1t;
    cs.b = ca.b;
    cs.theta = rr.theta_tilde;
    cs.E0_density = rr.E0_density;
    cs.jump_norm = fnorm(a1 - a0);
    UnitCell cell = grad_interior_cell(cs, 1.0, 1.0);
    GridField g = rasterize_cell(cell, 512);
    EnergyBreakdown eb = elastic_energy(g, cs.F, cs.a0, cs.a1);
    const double led = cell.ledger().elastic_total();
    OracleCheck ch_grid{"unit cell grid vs ledger", std::abs(eb.elastic - led) / led, 0.02};
    checks.push_back(ch_grid);
  }

  bool all_pass = true;
  for (const auto& c : checks) {
    print_check(c);
    all_pass = all_pass && c.pass();
  }
  std::printf("oracle: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 4;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"two-well relaxation and branching scaling toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, csv_path;
  uint64_t seed_flag = 0;
  int grid_flag = 0;
  double tau_flag = 0;
  double eps_min = 0.0, eps_max = 1.0;
  bool inject_h = false;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* copt = sub->add_option("--config", config_path, "JSON config path");
    if (need_config) copt->required();
    sub->add_option("--out", out_path, "output file (default: stdout)");
    sub->add_option("--seed", seed_flag, "override config seed");
    sub->add_option("--grid-n", grid_flag, "override config grid_n");
    sub->add_option("--tau", tau_flag, "override config tau");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "compatibility + relaxation report");
  add_common(analyze, true);
  CLI::App* construct = app.add_subcommand("construct", "build a branching field, dump the grid");
  add_common(construct, true);
  CLI::App* sweep = app.add_subcommand("sweep", "eps sweep: CSV records + exponent fit");
  add_common(sweep, true);
  CLI::App* fit = app.add_subcommand("fit", "least-squares exponent fit of a sweep CSV");
  fit->add_option("csv", csv_path, "sweep CSV path")->required();
  fit->add_option("--eps-min", eps_min, "window lower edge");
  fit->add_option("--eps-max", eps_max, "window upper edge");
  CLI::App* oracle = app.add_subcommand("oracle", "cross-check closed forms against oracles");
  add_common(oracle, false);
  oracle->add_flag("--inject-h-error", inject_h, "fault injection: offset closed-form h by 1e-3")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto load_with_overrides = [&](CLI::App* sub) {
      Config c = load_config(config_path);
      if (sub->count("--seed")) c.seed = seed_flag;
      if (sub->count("--grid-n")) c.grid_n = grid_flag;
      if (sub->count("--tau")) c.tau = tau_flag;
      return c;
    };
    if (analyze->parsed()) return cmd_analyze(load_with_overrides(analyze));
    if (construct->parsed()) return cmd_construct(load_with_overrides(construct), out_path);
    if (sweep->parsed()) return cmd_sweep(load_with_overrides(sweep), out_path);
    if (fit->parsed()) return cmd_fit(csv_path, eps_min, eps_max);
    if (oracle->parsed()) {
      std::optional<Config> c;
      if (oracle->count("--config")) c = load_with_overrides(oracle);
      return cmd_oracle(c, inject_h);
    }
  } catch (const degenerate_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const breach_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
