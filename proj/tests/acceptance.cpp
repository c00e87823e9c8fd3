// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "resil/cli.hpp"
#include "resil/hybrid_sim.hpp"
#include "resil/interconnect.hpp"
#include "resil/model_io.hpp"
#include "resil/resilience.hpp"

using namespace resil;
namespace fs = std::filesystem;

namespace {

const std::string kModels = RESIL_MODELS;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int n, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0.0 && secs >= limit_s) {
    o.pass = false;
    o.detail += "; over the " + std::to_string(static_cast<int>(limit_s)) + " s budget";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", n, title.c_str(), o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Random index draws shared by the inequality suites.
struct Draw {
  ResilienceIndex idx;
  double z, sup_h;
};

Draw draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Draw d;
  d.idx.d = 5.0 * u(rng);
  d.idx.tau = 0.01 + 3.0 * u(rng);
  d.idx.phi = 0.01 + 3.0 * u(rng);
  d.idx.eta = u(rng) < 0.2 ? 0.0 : 4.0 * u(rng);
  d.z = 0.05 + 3.0 * u(rng);
  d.sup_h = d.idx.d + (u(rng) < 0.1 ? 0.0 : 5.0 * u(rng));
  return d;
}

bool r1_holds(const ResilienceIndex& a, const ResilienceIndex& b, double delta, double z, double tol) {
  const double s = tol * (1.0 + std::abs(delta) + a.d / a.tau + a.d / a.phi + a.eta);
  return b.d >= 0.0 && b.d <= a.d && b.tau > 0.0 && b.phi > 0.0 && b.eta >= 0.0 &&
         -b.d / b.tau <= -a.d / a.tau + delta + s && (b.d == 0.0 || a.d + a.phi * delta > 0.0) &&
         b.phi >= a.phi * b.d / (a.d + a.phi * delta) - s &&
         b.eta <= delta + std::min(a.d / a.phi, a.eta + z * (a.d - b.d)) + s;
}

bool r2_holds(const ResilienceIndex& a, const ResilienceIndex& b, double delta, double z, double sup_h,
              double tol) {
  const double s = tol * (1.0 + std::abs(delta) + a.d / a.tau + a.d / a.phi + a.eta + z * sup_h);
  return b.d >= a.d && b.d <= sup_h && b.tau > 0.0 && b.phi > 0.0 && b.eta >= 0.0 &&
         -b.d / b.tau <= -a.d / a.tau + delta + s &&
         b.d / b.phi <= delta + std::min(a.d / a.phi, a.eta - z * (sup_h - a.d)) + s &&
         b.eta <= delta + a.eta - z * (b.d - a.d) + s;
}

SubsystemSource toy_source(const std::string& mu, const std::string& k) {
  SubsystemSource s;
  s.name = "s" + k;
  s.states = {"x" + k};
  s.inputs = {"u" + k};
  s.f = {"0"};
  s.g = {{"1"}};
  s.h = "1 - x" + k;
  s.mu = {mu};
  s.state_box = {{-1.0, 1.0}};
  s.input_box = {{-1.0, 1.0}};
  return s;
}

// w(x_from, x_to) = a x_from + b x_to + c x_from x_to + e
struct Bilinear {
  int from, to;
  double a, b, c, e;
  bool conservative;
  double operator()(double xf, double xt) const { return a * xf + b * xt + c * xf * xt + e; }
};

Outcome toy_index() {
  const fs::path dir = fs::temp_directory_path() / "resil_acc_1";
  fs::create_directories(dir);
  std::string printed;
  if (cli({"index", "compute", "--model", kModels + "/toy_linear.json", "--subsystem", "toy", "--out",
           (dir / "i.json").string()},
          &printed) != 0)
    return {false, "compute failed"};
  const auto idx = load_indices(dir / "i.json").at("toy");
  fs::remove_all(dir);
  const double err = std::max({std::abs(idx.d - 0.1), std::abs(idx.tau - 0.1), std::abs(idx.phi - 0.1),
                               std::abs(idx.eta - 1.0)});
  printed.erase(printed.find_last_not_of('\n') + 1);
  return {err <= 1e-6, "printed " + printed + fmt(", max component error %.3g", err)};
}

Outcome toy_margins() {
  const Subsystem toy(toy_source("-1", ""));
  OracleSettings s;
  s.grid_points_per_dim = 2001;
  const auto r = verify_index(toy, {0.5, 0.5, 0.5, 1.0}, 1.0, s);
  const double err = std::max({std::abs(r.raw_offline + 1.0), std::abs(r.raw_recovery - 1.0),
                               std::abs(r.raw_invariance - 1.0)});
  return {err <= 1e-6 && r.passed,
          fmt("raw minima %.9g, %.9g, %.9g; max error %.3g", r.raw_offline, r.raw_recovery,
              r.raw_invariance, err)};
}

struct Suite {
  int r1_ok = 0, r2_ok = 0, r2_guaranteed = 0, nesting_violations = 0;
};

Suite farkas_suite() {
  Suite s;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto nest = [&](const Draw& d, double delta) {
    if (feasibility_r2(d.idx, delta, d.z, d.sup_h).verdict == Verdict::GuaranteedFeasible) {
      ++s.r2_guaranteed;
      if (feasibility_r1(d.idx, delta, d.z).verdict != Verdict::GuaranteedFeasible) ++s.nesting_violations;
    }
  };
  for (int i = 0; i < 1000; ++i) {
    const Draw a = draw(rng);
    const double delta1 = feasibility_r1(a.idx, 0.0, a.z).threshold + 5.0 * (1.0 - u(rng));
    const auto x = solve_r1(a.idx, delta1, a.z, a.sup_h, 1e9);
    if (x.index && r1_holds(a.idx, *x.index, delta1, a.z, 1e-12)) ++s.r1_ok;
    nest(a, delta1);

    const Draw b = draw(rng);
    const double delta2 = feasibility_r2(b.idx, 0.0, b.z, b.sup_h).threshold + 1e-6 + 5.0 * u(rng);
    const auto y = solve_r2(b.idx, delta2, b.z, b.sup_h, 1e9);
    if (y.index && r2_holds(b.idx, *y.index, delta2, b.z, b.sup_h, 1e-12)) ++s.r2_ok;
    nest(b, delta2);

    // also probe deltas on both sides of the thresholds
    nest(a, -6.0 + 12.0 * u(rng));
  }
  return s;
}

Outcome farkas() {
  const auto s = farkas_suite();
  return {s.r1_ok == 1000 && s.r2_ok == 1000,
          fmt("solve_r1 %d/1000, solve_r2 %d/1000 (inequalities rechecked)", s.r1_ok, s.r2_ok)};
}

Outcome nesting() {
  const auto s = farkas_suite();
  return {s.nesting_violations == 0 && s.r2_guaranteed > 0,
          fmt("%d R2-guaranteed cases, %d without an R1 guarantee", s.r2_guaranteed, s.nesting_violations)};
}

Outcome canonical() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const Draw a = draw(rng);
    const double delta = u(rng) < 0.1 ? 0.0 : 5.0 * u(rng);
    const auto c = improve_by_interconnection(a.idx, delta, a.z);
    if (r1_holds(a.idx, c, delta, a.z, 1e-12) && c.phi <= a.idx.phi && c.tau == a.idx.tau) ++ok;
  }
  return {ok == 1000, fmt("%d/1000 satisfy all four inequalities with phi' <= phi, tau' = tau", ok)};
}

Outcome delta_underapprox() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  OracleSettings settings;
  settings.grid_points_per_dim = 41;
  constexpr int G = 201;
  std::vector<double> grid(G);
  for (int k = 0; k < G; ++k) grid[k] = k == G - 1 ? 1.0 : -1.0 + 2.0 * k / (G - 1);

  int ok = 0, targets = 0;
  double worst_exact = 0.0, worst_gap = -std::numeric_limits<double>::infinity();
  for (int net_i = 0; net_i < 50; ++net_i) {
    const int count = net_i % 2 == 0 ? 2 : 3;
    std::vector<Bilinear> ws;
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < count; ++j)
        if (i != j && (u(rng) > -0.2 || ws.empty()))
          ws.push_back({i, j, 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng), 0.1 * u(rng), u(rng) > 0.0});

    std::vector<Subsystem> subs;
    for (int i = 0; i < count; ++i) subs.emplace_back(toy_source("-1", std::to_string(i + 1)));
    std::vector<CouplingSource> cs;
    for (const auto& w : ws) {
      const std::string xf = "x" + std::to_string(w.from + 1), xt = "x" + std::to_string(w.to + 1);
      cs.push_back({"s" + std::to_string(w.from + 1), "s" + std::to_string(w.to + 1),
                    {fmt("%.17g*%s + %.17g*%s + %.17g*%s*%s + %.17g", w.a, xf.c_str(), w.b, xt.c_str(), w.c,
                         xf.c_str(), xt.c_str(), w.e)},
                    w.conservative});
    }
    const Network net(std::move(subs), cs);

    for (int j = 0; j < count; ++j) {
      // grad h_j = -1: inflow counts negatively, conservative outflow positively
      auto term = [&](const Bilinear& w, const double* x) {
        if (w.to == j) return -w(x[w.from], x[w.to]);
        if (w.from == j && w.conservative) return w(x[w.from], x[w.to]);
        return 0.0;
      };
      bool touched = false;
      for (const auto& w : ws) touched |= w.to == j || (w.from == j && w.conservative);
      if (!touched) continue;
      ++targets;

      double brute_exact = std::numeric_limits<double>::infinity();
      const int g3 = count == 3 ? G : 1;
#pragma omp parallel for reduction(min : brute_exact) collapse(2)
      for (int a = 0; a < G; ++a)
        for (int b = 0; b < G; ++b)
          for (int c = 0; c < g3; ++c) {
            const double x[3] = {grid[a], grid[b], grid[c]};
            double v = 0.0;
            for (const auto& w : ws) v += term(w, x);
            brute_exact = std::min(brute_exact, v);
          }

      double brute_pair = 0.0;
      for (int i = 0; i < count; ++i) {
        if (i == j) continue;
        double best = std::numeric_limits<double>::infinity();
        bool any = false;
        for (int a = 0; a < G; ++a)
          for (int b = 0; b < G; ++b) {
            double x[3] = {0, 0, 0};
            x[i] = grid[a];
            x[j] = grid[b];
            double v = 0.0;
            for (const auto& w : ws)
              if ((w.from == i && w.to == j) || (w.from == j && w.to == i)) {
                v += term(w, x);
                any = true;
              }
            best = std::min(best, v);
          }
        if (any) brute_pair += best;
      }

      const double pw = compute_delta_pairwise(net, j, settings).value;
      const double ex = compute_delta_exact(net, j, settings).value;
      worst_exact = std::max({worst_exact, std::abs(ex - brute_exact), std::abs(pw - brute_pair)});
      worst_gap = std::max(worst_gap, pw - ex);
      if (pw <= ex + 1e-6 && std::abs(ex - brute_exact) <= 1e-9 && std::abs(pw - brute_pair) <= 1e-9) ++ok;
    }
  }
  return {ok == targets && targets > 0,
          fmt("%d/%d targets: pairwise <= exact (max pairwise - exact %.3g), both match a %d-point joint "
              "brute force to %.2g",
              ok, targets, worst_gap, G * G * G, worst_exact)};
}

Outcome soundness_chain() {
  const auto m = load_model(kModels + "/toy_pair.json");
  IndexMap in;
  OracleSettings settings;
  IndexSearchOptions o;
  o.z = m.alpha_z;
  for (const auto& s : m.network.subsystems()) {
    const auto r = compute_index(s, o, settings);
    if (!r.index) return {false, "no index for " + s.name()};
    in[s.name()] = *r.index;
  }
  PropagationOptions po;
  po.z = m.alpha_z;
  IndexMap prop;
  for (const auto& [name, r] : propagate_indices(m.network, in, po, settings)) {
    if (!r.index) return {false, "propagation failed for " + name};
    prop[name] = *r.index;
  }
  double worst = std::numeric_limits<double>::infinity();
  std::string shown;
  for (const auto& [name, rep] : verify_network(m.network, prop, m.alpha_z, settings)) {
    worst = std::min({worst, rep.margin_offline, rep.margin_recovery, rep.margin_invariance});
    shown += " " + name + prop.at(name).str(6);
  }
  return {worst >= -1e-6, fmt("propagated%s; smallest interconnected margin %.3g", shown.c_str(), worst)};
}

Outcome end_to_end() {
  const fs::path dir = fs::temp_directory_path() / "resil_acc_8";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string model = kModels + "/cstr_series.json";
  const std::string idx = (dir / "indices.json").string(), prop = (dir / "propagated.json").string();
  for (const char* s : {"S1", "S2"})
    if (cli({"index", "compute", "--model", model, "--subsystem", s, "--eps", "50", "--maximize-tau", "--out",
             idx}) != 0)
      return {false, std::string("no index for ") + s};
  if (cli({"net", "propagate", "--model", model, "--indices", idx, "--out", prop}) != 0)
    return {false, "propagation failed"};
  const int code = cli({"sim", "run", "--model", model, "--indices", prop, "--horizon", "2", "--schedules", "200",
                        "--seed", "42", "--adversary", "bang-bang", "--no-csv", "--out", (dir / "sim").string()});
  std::ifstream in(dir / "sim" / "summary.json");
  const auto summary = nlohmann::json::parse(in);
  const int safe = summary["safe_count"];
  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
  for (const char* v : {"T1", "T2"}) {
    tmin = std::min(tmin, summary["state_range"][v][0].get<double>());
    tmax = std::max(tmax, summary["state_range"][v][1].get<double>());
  }
  const auto p = load_indices(prop);
  fs::remove_all(dir);
  return {code == 0 && safe == 200 && tmin >= 300.0 && tmax <= 400.0,
          fmt("S1 %s, S2 %s; safe %d/200, temperatures in [%.4f, %.4f] K", p.at("S1").str(6).c_str(),
              p.at("S2").str(6).c_str(), safe, tmin, tmax)};
}

Outcome rk4_order() {
  // x' = -x on the toy: exact x0 e^{-t}
  std::vector<Subsystem> subs{Subsystem(toy_source("-x", ""))};
  const Network net(std::move(subs), {});
  const std::vector<ResilienceIndex> idx{{0.0, 1.0, 1.0, 0.0}};
  FaultSchedule none;
  none.offline = {{}};
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto max_dev = [&](double x0, double dt) {
    const auto tr = simulate(net, idx, none, {}, dt, 2.0, {Point{x0}});
    double m = 0.0;
    for (std::size_t k = 0; k < tr.samples(); ++k)
      m = std::max(m, std::abs(tr.subsystems[0].states[k] - x0 * std::exp(-tr.t[k])));
    return m;
  };
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    const double x0 = u(rng);
    worst = std::min(worst, max_dev(x0, 0.1) / max_dev(x0, 0.05));
  }
  return {worst >= 12.0, fmt("smallest dt/(dt/2) error ratio over 10 initial states %.3f", worst)};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "resil_acc_10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string model = kModels + "/cstr_series.json";
  const std::string idx = (dir / "i.json").string();
  save_indices({{"S1", {2450, 0.002016833414, 0.0575606907, 41.40796019}},
                {"S2", {409.5595596, 0.001008462107, 0.01563502654, 0.3797180863}}},
               idx);
  auto run = [&](const std::string& out, const std::string& workers) {
    return cli({"sim", "run", "--model", model, "--indices", idx, "--horizon", "0.2", "--schedules", "8", "--seed",
                "42", "--workers", workers, "--out", (dir / out).string()});
  };
  if (run("a", "1") != 0 || run("b", "4") != 0) return {false, "sim run failed"};
  int files = 0, same = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    if (slurp(e.path()) == slurp(dir / "b" / e.path().filename())) ++same;
  }
  fs::remove_all(dir);
  return {files == 8 && same == files, fmt("%d/%d traces byte-identical across two runs (1 and 4 workers)", same, files)};
}

}  // namespace

int main() {
  criterion(1, "toy analytic index", 5.0, toy_index);
  criterion(2, "toy verification margins", 0.0, toy_margins);
  criterion(3, "inequality sufficiency suite", 10.0, farkas);
  criterion(4, "R2 guarantees imply R1 guarantees", 0.0, nesting);
  criterion(5, "canonical positive-coupling construction", 0.0, canonical);
  criterion(6, "pairwise coupling bound under-approximates", 60.0, delta_underapprox);
  criterion(7, "toy pair propagation verifies", 0.0, soundness_chain);
  criterion(8, "reactor pair end-to-end safety", 120.0, end_to_end);
  criterion(9, "RK4 order", 0.0, rk4_order);
  criterion(10, "simulation determinism", 0.0, determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
