#include "resil/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "resil/errors.hpp"
#include "resil/hybrid_sim.hpp"
#include "resil/interconnect.hpp"
#include "resil/model_io.hpp"
#include "resil/oracle.hpp"
#include "resil/resilience.hpp"

namespace resil {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct GridArgs {
  int grid = 200;
  int refine = 3;
  int workers = 0;

  void add_to(CLI::App* app, bool with_refine = true) {
    app->add_option("--grid", grid, "grid points per dimension")->check(CLI::Range(2, 100000));
    if (with_refine)
      app->add_option("--refine", refine, "refinement rounds")->check(CLI::Range(0, 50));
    app->add_option("--workers", workers, "worker threads (0 = all cores)")
        ->envname("RESIL_WORKERS")
        ->check(CLI::NonNegativeNumber);
  }

  OracleSettings settings() const {
    OracleSettings s;
    s.grid_points_per_dim = grid;
    s.refinement_rounds = refine;
    s.workers = workers;
    s.validate();
    return s;
  }
};

void print_report(std::ostream& out, const VerificationReport& r) {
  if (r.failure == VerificationFailure::EmptyRegion) {
    out << "  failed: " << r.failure_detail << "\n";
    return;
  }
  out << "  offline     raw " << fmt(r.raw_offline) << "  margin " << fmt(r.margin_offline) << "\n";
  out << "  recovery    raw " << fmt(r.raw_recovery) << "  margin " << fmt(r.margin_recovery)
      << "\n";
  out << "  invariance  raw " << fmt(r.raw_invariance) << "  margin "
      << fmt(r.margin_invariance) << "\n";
  out << "  " << (r.passed ? "PASS" : "FAIL") << "\n";
}

const Subsystem& find_subsystem(const Model& m, const std::string& name) {
  return m.network[m.network.index_of(name)];
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resilience indices for control-affine subsystems and their interconnections",
               "resil"};
  app.require_subcommand(1);

  std::string model_path;
  std::string subsystem;
  std::string index_path;
  std::string out_path;

  // index compute / verify
  auto* index = app.add_subcommand("index", "single-subsystem indices");
  index->require_subcommand(1);

  IndexSearchOptions search;
  GridArgs compute_grid;
  auto* compute = index->add_subcommand("compute", "search for a resilience index");
  compute->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  compute->add_option("--subsystem", subsystem, "subsystem name")->required();
  compute->add_option("--eps", search.eps, "buffer sweep step")->check(CLI::PositiveNumber);
  compute->add_option("--tau-max", search.tau_max, "cap on tau")->check(CLI::PositiveNumber);
  compute->add_option("--phi-min", search.phi_min, "floor on phi")->check(CLI::NonNegativeNumber);
  compute->add_flag("--maximize-tau", search.maximize_tau,
                    "sweep every buffer depth and keep the largest tau");
  compute->add_option("--out", out_path, "index file to create or update")->required();
  compute_grid.add_to(compute);

  std::string tuple;
  GridArgs verify_grid;
  auto* verify = index->add_subcommand("verify", "check an index against the three conditions");
  verify->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  verify->add_option("--subsystem", subsystem, "subsystem name")->required();
  verify->add_option("--index", tuple, "\"d,tau,phi,eta\"")->required();
  verify_grid.add_to(verify);

  // net delta / propagate / verify
  auto* net = app.add_subcommand("net", "interconnected networks");
  net->require_subcommand(1);

  bool exact = false;
  GridArgs delta_grid;
  auto* delta = net->add_subcommand("delta", "coupling drift bound per subsystem");
  delta->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  delta->add_flag("--exact", exact, "joint infimum instead of the pairwise sum");
  delta_grid.add_to(delta);

  std::string prefer = "r1";
  PropagationOptions prop;
  GridArgs prop_grid;
  auto* propagate = net->add_subcommand("propagate", "propagate indices through the couplings");
  propagate->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  propagate->add_option("--indices", index_path, "index file")->required()->check(CLI::ExistingFile);
  propagate->add_option("--prefer", prefer, "inequality system to try first")
      ->check(CLI::IsMember({"r1", "r2"}));
  propagate->add_option("--tau-max", prop.tau_max, "cap on tau'")->check(CLI::PositiveNumber);
  propagate->add_flag("--exact", exact, "use the joint coupling infimum");
  propagate->add_option("--out", out_path, "output index file")->required();
  prop_grid.add_to(propagate);

  GridArgs nv_grid;
  auto* nverify = net->add_subcommand("verify", "check indices on the interconnected dynamics");
  nverify->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  nverify->add_option("--indices", index_path, "index file")->required()->check(CLI::ExistingFile);
  nv_grid.add_to(nverify);

  // sim run
  auto* sim = app.add_subcommand("sim", "hybrid fault simulation");
  sim->require_subcommand(1);
  double horizon = 0.0;
  std::size_t schedules = 0;
  std::uint64_t seed = 0;
  std::string adversary = "bang-bang";
  double dt = 0.0;
  GridArgs sim_grid;
  bool no_csv = false;
  auto* run = sim->add_subcommand("run", "simulate random admissible fault schedules");
  run->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  run->add_option("--indices", index_path, "index file")->required()->check(CLI::ExistingFile);
  run->add_option("--horizon", horizon, "simulated time")->required()->check(CLI::PositiveNumber);
  run->add_option("--schedules", schedules, "number of schedules")->required();
  run->add_option("--seed", seed, "random seed")->required();
  run->add_option("--adversary", adversary, "offline input policy")
      ->check(CLI::IsMember({"bang-bang", "constant", "random"}));
  run->add_option("--dt", dt, "integration step (default horizon / 20000)")
      ->check(CLI::PositiveNumber);
  run->add_flag("--no-csv", no_csv, "write only the summary");
  run->add_option("--out", out_path, "output directory")->required();
  sim_grid.add_to(run);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "resil: " << e.what() << "\n";
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      auto subs = sub->get_subcommands();
      err << (subs.empty() ? sub->help() : subs.front()->help());
    } else {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    if (compute->parsed()) {
      const Model m = load_model(model_path);
      const Subsystem& s = find_subsystem(m, subsystem);
      search.z = m.alpha_z;
      const auto result = compute_index(s, search, compute_grid.settings());
      if (!result.index) {
        err << "no resilience index found for '" << subsystem << "' after "
            << result.candidates_tried << " candidates (d up to " << fmt(result.last_d)
            << ", sup h = " << fmt(result.sup_h) << ")\n";
        err << "  last candidate: " << result.last_reason << "\n";
        err << "  offline drift " << fmt(result.last_offline_drift);
        if (result.last_recovery_drift) err << ", recovery drift " << fmt(*result.last_recovery_drift);
        if (result.last_invariance) err << ", invariance margin " << fmt(*result.last_invariance);
        err << "\n";
        return kExitInfeasible;
      }
      IndexMap file;
      if (std::filesystem::exists(out_path)) file = load_indices(out_path);
      file[subsystem] = *result.index;
      save_indices(file, out_path);
      out << result.index->str(6) << "\n";
      return kExitOk;
    }

    if (verify->parsed()) {
      const Model m = load_model(model_path);
      const Subsystem& s = find_subsystem(m, subsystem);
      const ResilienceIndex idx = parse_index_tuple(tuple);
      const auto report = verify_index(s, idx, m.alpha_z, verify_grid.settings());
      out << subsystem << " " << idx.str() << "\n";
      print_report(out, report);
      return report.passed ? kExitOk : kExitInfeasible;
    }

    if (delta->parsed()) {
      const Model m = load_model(model_path);
      const auto settings = delta_grid.settings();
      out << (exact ? "subsystem  delta (joint)\n" : "subsystem  delta (pairwise sum)\n");
      for (std::size_t j = 0; j < m.network.size(); ++j) {
        const auto d = exact ? compute_delta_exact(m.network, j, settings)
                             : compute_delta_pairwise(m.network, j, settings);
        out << m.network[j].name() << "  " << fmt(d.value);
        for (const auto& t : d.terms)
          if (t.other) out << "  [" << m.network[*t.other].name() << ": " << fmt(t.value) << "]";
        out << "\n";
      }
      return kExitOk;
    }

    if (propagate->parsed()) {
      const Model m = load_model(model_path);
      const IndexMap in = load_indices(index_path);
      indices_in_order(m.network, in);
      prop.z = m.alpha_z;
      prop.prefer = prefer == "r2" ? InequalitySystem::R2 : InequalitySystem::R1;
      prop.delta_method = exact ? DeltaMethod::ExactJoint : DeltaMethod::PairwiseSum;
      const auto results = propagate_indices(m.network, in, prop, prop_grid.settings());
      IndexMap outmap;
      bool all = true;
      for (const auto& s : m.network.subsystems()) {
        const auto& r = results.at(s.name());
        out << s.name() << "  delta " << fmt(r.delta.value) << "\n";
        out << "  R1 threshold " << fmt(r.r1.threshold) << "  "
            << (r.r1.verdict == Verdict::GuaranteedFeasible ? "guaranteed" : "unknown") << "\n";
        out << "  R2 threshold " << fmt(r.r2.threshold) << "  "
            << (r.r2.verdict == Verdict::GuaranteedFeasible ? "guaranteed" : "unknown") << "\n";
        if (r.index) {
          out << "  " << (*r.used == InequalitySystem::R1 ? "R1" : "R2") << " -> "
              << r.index->str() << "\n";
          outmap[s.name()] = *r.index;
        } else {
          out << "  infeasible: " << r.note << "\n";
          all = false;
        }
      }
      if (!all) return kExitInfeasible;
      save_indices(outmap, out_path);
      return kExitOk;
    }

    if (nverify->parsed()) {
      const Model m = load_model(model_path);
      const IndexMap in = load_indices(index_path);
      indices_in_order(m.network, in);
      const auto reports = verify_network(m.network, in, m.alpha_z, nv_grid.settings());
      bool all = true;
      for (const auto& s : m.network.subsystems()) {
        const auto& r = reports.at(s.name());
        out << s.name() << " " << in.at(s.name()).str() << "\n";
        print_report(out, r);
        all = all && r.passed;
      }
      return all ? kExitOk : kExitInfeasible;
    }

    if (run->parsed()) {
      const Model m = load_model(model_path);
      const auto indices = indices_in_order(m.network, load_indices(index_path));
      if (dt == 0.0) dt = horizon / 20000.0;
      AdversaryPolicy policy;
      policy.seed = seed;
      policy.kind = adversary == "constant" ? AdversaryKind::ConstantExtreme
                    : adversary == "random" ? AdversaryKind::RandomVertex
                                            : AdversaryKind::BangBang;
      const auto settings = sim_grid.settings();
      const auto x0 = default_initial_state(m.network, settings);
      const auto scheds = generate_schedule(seed, horizon, indices, schedules);

      std::filesystem::create_directories(out_path);
      BatchOptions batch;
      batch.workers = sim_grid.workers;
      if (!no_csv) batch.csv_dir = std::filesystem::path(out_path);
      const auto result = simulate_batch(m.network, indices, scheds, policy, dt, horizon, x0, batch);

      std::size_t safe = 0;
      int missed = 0;
      std::vector<double> min_h(m.network.size(), std::numeric_limits<double>::infinity());
      long worst = -1;
      double worst_h = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < result.verdicts.size(); ++k) {
        const auto& v = result.verdicts[k];
        if (v.safe) ++safe;
        missed += v.missed_deadlines;
        for (std::size_t j = 0; j < min_h.size(); ++j) {
          min_h[j] = std::min(min_h[j], v.min_h[j]);
          if (v.min_h[j] < worst_h) {
            worst_h = v.min_h[j];
            worst = static_cast<long>(k);
          }
        }
      }
      json summary;
      summary["safe_count"] = safe;
      summary["schedules"] = schedules;
      summary["min_h"] = json::object();
      for (std::size_t j = 0; j < min_h.size(); ++j)
        summary["min_h"][m.network[j].name()] = min_h[j];
      summary["worst_schedule"] = worst;
      json range = json::object();
      for (std::size_t j = 0; j < m.network.size(); ++j) {
        const Subsystem& s = m.network[j];
        for (std::size_t i = 0; i < s.n(); ++i) {
          double lo = std::numeric_limits<double>::infinity();
          double hi = -lo;
          for (const auto& v : result.verdicts) {
            lo = std::min(lo, v.state_min[j][i]);
            hi = std::max(hi, v.state_max[j][i]);
          }
          range[s.state_vars()[i]] = {lo, hi};
        }
      }
      summary["state_range"] = range;
      summary["missed_recovery_deadlines"] = missed;
      json idx = json::object();
      for (std::size_t j = 0; j < indices.size(); ++j)
        idx[m.network[j].name()] = {{"d", indices[j].d},
                                    {"tau", indices[j].tau},
                                    {"phi", indices[j].phi},
                                    {"eta", indices[j].eta}};
      json x0j = json::object();
      for (std::size_t j = 0; j < x0.size(); ++j) x0j[m.network[j].name()] = x0[j];
      summary["settings"] = {{"model", model_path}, {"indices", idx},   {"horizon", horizon},
                             {"dt", dt},            {"seed", seed},     {"adversary", adversary},
                             {"initial_state", x0j}, {"grid", sim_grid.grid},
                             {"refine", sim_grid.refine}, {"csv", !no_csv}};
      std::ofstream sf(std::filesystem::path(out_path) / "summary.json");
      sf << summary.dump(2) << "\n";
      if (!sf) throw Error("cannot write summary.json in " + out_path);
      out << "safe " << safe << " / " << schedules << "\n";
      for (std::size_t j = 0; j < min_h.size(); ++j)
        out << "  min h " << m.network[j].name() << " = " << fmt(min_h[j]) << "\n";
      return safe == schedules ? kExitOk : kExitInfeasible;
    }
  } catch (const Error& e) {
    err << "resil: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "resil: " << e.what() << "\n";
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace resil
