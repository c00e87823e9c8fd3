#include "resil/interconnect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "resil/errors.hpp"

namespace resil {

// ---- Network ---------------------------------------------------------------

Network::Network(std::vector<Subsystem> subsystems, const std::vector<CouplingSource>& couplings)
    : subsystems_(std::move(subsystems)) {
  std::set<std::string> names;
  std::set<std::string> states;
  for (const auto& s : subsystems_) {
    if (!names.insert(s.name()).second)
      throw ModelError("duplicate subsystem name '" + s.name() + "'");
    for (const auto& v : s.state_vars())
      if (!states.insert(v).second)
        throw ModelError("state name '" + v + "' is used by more than one subsystem");
  }
  for (const auto& src : couplings) {
    Coupling c;
    c.from = index_of(src.from);
    c.to = index_of(src.to);
    c.conservative = src.conservative;
    const std::string who = "coupling " + src.from + " -> " + src.to;
    if (c.from == c.to) throw ModelError(who + ": a subsystem cannot couple to itself");
    const Subsystem& target = subsystems_[c.to];
    if (src.w.size() != target.n())
      throw DimensionMismatch(who + ": w has " + std::to_string(src.w.size()) +
                              " entries but " + target.name() + " has " +
                              std::to_string(target.n()) + " states");
    if (c.conservative && subsystems_[c.from].n() != target.n())
      throw DimensionMismatch(who + ": a conservative coupling needs equal state dimensions");
    std::vector<std::string> vars = joint_vars({std::min(c.from, c.to), std::max(c.from, c.to)});
    for (const auto& text : src.w) {
      try {
        c.w.push_back(Expression::parse(text, vars));
      } catch (const Error& e) {
        throw ModelError(who + ": '" + text + "': " + e.what());
      }
    }
    couplings_.push_back(std::move(c));
  }
}

std::size_t Network::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < subsystems_.size(); ++j)
    if (subsystems_[j].name() == name) return j;
  throw ModelError("unknown subsystem '" + std::string(name) + "'");
}

std::vector<std::size_t> Network::neighbors(std::size_t j) const {
  std::set<std::size_t> out;
  for (const auto& c : couplings_) {
    if (c.to == j) out.insert(c.from);
    if (c.from == j && c.conservative) out.insert(c.to);
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> Network::joint_vars(const std::vector<std::size_t>& members) const {
  std::vector<std::string> vars;
  for (std::size_t m : members)
    vars.insert(vars.end(), subsystems_[m].state_vars().begin(), subsystems_[m].state_vars().end());
  return vars;
}

std::vector<Interval> Network::joint_box(const std::vector<std::size_t>& members) const {
  std::vector<Interval> box;
  for (std::size_t m : members)
    box.insert(box.end(), subsystems_[m].state_box().begin(), subsystems_[m].state_box().end());
  return box;
}

std::vector<Expression> Network::coupling_field(std::size_t j,
                                                const std::vector<std::size_t>& others,
                                                std::span<const std::string> vars) const {
  const std::size_t nj = subsystems_[j].n();
  std::vector<Expression> field(nj, Expression::constant(0.0, vars));
  auto in_others = [&](std::size_t i) {
    return std::find(others.begin(), others.end(), i) != others.end();
  };
  for (const auto& c : couplings_) {
    if (c.to == j && in_others(c.from)) {
      for (std::size_t k = 0; k < nj; ++k) field[k] = field[k] + c.w[k].rebind(vars);
    } else if (c.from == j && c.conservative && in_others(c.to)) {
      for (std::size_t k = 0; k < nj; ++k) field[k] = field[k] - c.w[k].rebind(vars);
    }
  }
  return field;
}

Expression Network::coupling_drift(std::size_t j, const std::vector<std::size_t>& others,
                                   std::span<const std::string> vars) const {
  std::vector<Expression> grad;
  for (const auto& e : subsystems_[j].grad_h()) grad.push_back(e.rebind(vars));
  return dot(grad, coupling_field(j, others, vars)) + Expression::constant(0.0, vars);
}

// ---- delta ---------------------------------------------------------------

namespace {

std::vector<std::size_t> with(std::vector<std::size_t> members, std::size_t j) {
  members.push_back(j);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  return members;
}

// Joint search space over `members`; every member other than `j` ranges over
// its safety set, j over `region_j`.
SearchSpace joint_space(const Network& net, const std::vector<std::size_t>& members, std::size_t j,
                        const Region& region_j, const OracleSettings& settings) {
  SearchSpace space;
  space.vars = net.joint_vars(members);
  space.box = net.joint_box(members);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t m : members) {
    Expression h = net[m].h().rebind(space.vars);
    if (m != j) {
      space.constraints.push_back({h, 0.0, inf});
      continue;
    }
    switch (region_j.tag) {
      case RegionTag::SafeMinusBuffer:
        space.constraints.push_back({h, 0.0, region_j.d - settings.margin_tolerance});
        break;
      case RegionTag::Buffer:
        space.constraints.push_back({h, region_j.d, inf});
        break;
      case RegionTag::StateBox:
        break;
      default:
        space.constraints.push_back({h, 0.0, inf});
        break;
    }
  }
  space.label = net[j].name() + " joint region";
  return space;
}

}  // namespace

DeltaEstimate compute_delta_exact(const Network& net, std::size_t j,
                                  const OracleSettings& settings) {
  if (j >= net.size()) throw Error("subsystem index out of range");
  DeltaEstimate est;
  est.subsystem = j;
  est.method = DeltaMethod::ExactJoint;
  const std::vector<std::size_t> others = net.neighbors(j);
  if (others.empty()) return est;
  const std::vector<std::size_t> members = with(others, j);
  SearchSpace space = joint_space(net, members, j, Region::safe_set(), settings);
  Expression objective = net.coupling_drift(j, others, space.vars);
  Extremum e = grid_minimize(objective, space, settings);
  est.value = e.value;
  est.terms.push_back({std::nullopt, e.value, space.vars, e.arg});
  return est;
}

DeltaEstimate compute_delta_pairwise(const Network& net, std::size_t j,
                                     const OracleSettings& settings) {
  if (j >= net.size()) throw Error("subsystem index out of range");
  DeltaEstimate est;
  est.subsystem = j;
  est.method = DeltaMethod::PairwiseSum;
  for (std::size_t i : net.neighbors(j)) {
    const std::vector<std::size_t> members = with({i}, j);
    SearchSpace space = joint_space(net, members, j, Region::safe_set(), settings);
    Expression objective = net.coupling_drift(j, {i}, space.vars);
    Extremum e = grid_minimize(objective, space, settings);
    est.value += e.value;
    est.terms.push_back({i, e.value, space.vars, e.arg});
  }
  return est;
}

// ---- feasibility -----------------------------------------------------------

Feasibility feasibility_r1(const ResilienceIndex& idx, double delta, double z) {
  if (!(z > 0.0)) throw Error("feasibility_r1 needs z > 0");
  Feasibility f;
  f.which = InequalitySystem::R1;
  f.delta = delta;
  f.threshold = std::max(-idx.d / idx.phi, -idx.eta - z * idx.d);
  f.verdict = delta >= f.threshold ? Verdict::GuaranteedFeasible : Verdict::Unknown;
  return f;
}

Feasibility feasibility_r2(const ResilienceIndex& idx, double delta, double z, double sup_h) {
  if (!(z > 0.0)) throw Error("feasibility_r2 needs z > 0");
  if (sup_h < idx.d) throw Error("feasibility_r2 needs sup h >= d");
  Feasibility f;
  f.which = InequalitySystem::R2;
  f.delta = delta;
  f.threshold = std::max(-idx.d / idx.phi, -idx.eta + z * (sup_h - idx.d));
  f.verdict = delta >= f.threshold ? Verdict::GuaranteedFeasible : Verdict::Unknown;
  return f;
}

// ---- R1 / R2 ---------------------------------------------------------------

namespace {

void check_solve_args(const ResilienceIndex& idx, double delta, double z, double sup_h,
                      double tau_max) {
  idx.validate();
  if (!std::isfinite(delta)) throw Error("delta must be finite");
  if (!(z > 0.0)) throw Error("z must be > 0");
  if (!(tau_max > 0.0)) throw Error("tau_max must be > 0");
  if (!(sup_h >= idx.d)) throw Error("sup h must be >= d");
}

// Largest tau' with -d'/tau' <= -d/tau + delta, capped at tau_max.
std::optional<double> tau_bound(const ResilienceIndex& idx, double delta, double d_new,
                                double tau_max) {
  if (delta == 0.0 && d_new == idx.d) return std::min(idx.tau, tau_max);
  const double rate = idx.d / idx.tau - delta;
  if (rate <= 0.0) return tau_max;
  if (!(d_new > 0.0)) return std::nullopt;
  const double tau = std::min(tau_max, d_new / rate);
  if (!(tau > 0.0)) return std::nullopt;
  return tau;
}

std::optional<ResilienceIndex> r1_candidate(const ResilienceIndex& idx, double delta, double z,
                                            double tau_max, double d_new) {
  if (d_new < 0.0 || d_new > idx.d) return std::nullopt;
  auto tau = tau_bound(idx, delta, d_new, tau_max);
  if (!tau) return std::nullopt;
  const double denom = idx.d + idx.phi * delta;
  double phi = 0.0;
  if (delta == 0.0 && d_new == idx.d) {
    phi = idx.phi;
  } else if (d_new == 0.0) {
    if (denom < 0.0) return std::nullopt;
    phi = idx.phi;  // the recovery band is empty, any positive dwell works
  } else {
    if (!(denom > 0.0)) return std::nullopt;
    phi = idx.phi * d_new / denom;
  }
  if (!(phi > 0.0) || !std::isfinite(phi)) return std::nullopt;
  const double eta = delta + std::min(idx.d / idx.phi, idx.eta + z * (idx.d - d_new));
  if (!(eta >= 0.0)) return std::nullopt;
  return ResilienceIndex{d_new, *tau, phi, eta};
}

std::optional<ResilienceIndex> r2_candidate(const ResilienceIndex& idx, double delta, double z,
                                            double sup_h, double tau_max, double d_new) {
  if (d_new < idx.d || d_new > sup_h) return std::nullopt;
  auto tau = tau_bound(idx, delta, d_new, tau_max);
  if (!tau) return std::nullopt;
  const double rhs = delta + std::min(idx.d / idx.phi, idx.eta - z * (sup_h - idx.d));
  double phi = 0.0;
  if (d_new == 0.0) {
    if (rhs < 0.0) return std::nullopt;
    phi = idx.phi;
  } else {
    if (!(rhs > 0.0)) return std::nullopt;
    phi = d_new / rhs;
  }
  if (!(phi > 0.0) || !std::isfinite(phi)) return std::nullopt;
  const double eta = delta + idx.eta - z * (d_new - idx.d);
  if (!(eta >= 0.0)) return std::nullopt;
  return ResilienceIndex{d_new, *tau, phi, eta};
}

}  // namespace

SolveResult solve_r1(const ResilienceIndex& idx, double delta, double z, double sup_h,
                     double tau_max, const SolvePolicy& policy) {
  check_solve_args(idx, delta, z, sup_h, tau_max);
  if (policy.grid_points < 2) throw Error("solve policy needs at least 2 grid points");
  SolveResult out;
  const int last = policy.grid_points - 1;
  for (int k = last; k >= 0; --k) {
    const double d_new = k == last ? idx.d : idx.d * static_cast<double>(k) / last;
    if (auto c = r1_candidate(idx, delta, z, tau_max, d_new)) {
      out.index = c;
      return out;
    }
  }
  // The eta' bound caps d' at d + (delta + eta) / z; that cap can fall
  // between grid points.
  const double cap = std::min(idx.d, idx.d + (delta + idx.eta) / z);
  for (double shrink : {0.0, 1e-12, 1e-9}) {
    const double d_new = cap * (1.0 - shrink);
    if (!(d_new > 0.0)) break;
    if (auto c = r1_candidate(idx, delta, z, tau_max, d_new)) {
      out.index = c;
      return out;
    }
  }
  if (!(idx.d + idx.phi * delta > 0.0))
    out.reason = "d + phi * delta <= 0: no finite phi' exists";
  else if (!(idx.d / idx.phi + delta >= 0.0))
    out.reason = "delta < -d/phi: eta' would be negative";
  else
    out.reason = "no d' in [0, d] admits tau' > 0 and eta' >= 0";
  return out;
}

SolveResult solve_r2(const ResilienceIndex& idx, double delta, double z, double sup_h,
                     double tau_max, const SolvePolicy& policy) {
  check_solve_args(idx, delta, z, sup_h, tau_max);
  if (policy.grid_points < 2) throw Error("solve policy needs at least 2 grid points");
  SolveResult out;
  const int last = policy.grid_points - 1;
  for (int k = 0; k <= last; ++k) {
    const double d_new =
        k == 0 ? idx.d : (k == last ? sup_h : idx.d + (sup_h - idx.d) * static_cast<double>(k) / last);
    if (auto c = r2_candidate(idx, delta, z, sup_h, tau_max, d_new)) {
      out.index = c;
      return out;
    }
  }
  const double rhs = delta + std::min(idx.d / idx.phi, idx.eta - z * (sup_h - idx.d));
  if (!(rhs > 0.0))
    out.reason = "delta + min{d/phi, eta - z (sup h - d)} <= 0: no finite phi' exists";
  else
    out.reason = "no d' in [d, sup h] admits tau' > 0 and eta' >= 0";
  return out;
}

ResilienceIndex improve_by_interconnection(const ResilienceIndex& idx, double delta, double z) {
  idx.validate();
  if (!(delta >= 0.0)) throw Error("improve_by_interconnection needs delta >= 0");
  if (!(z > 0.0)) throw Error("improve_by_interconnection needs z > 0");
  ResilienceIndex out = idx;
  if (idx.d > 0.0 && delta > 0.0) out.phi = idx.phi * idx.d / (idx.d + idx.phi * delta);
  out.eta = delta + std::min(idx.d / idx.phi, idx.eta);
  return out;
}

// ---- propagation -------------------------------------------------------------

std::map<std::string, PropagationResult> propagate_indices(const Network& net,
                                                           const IndexMap& indices,
                                                           const PropagationOptions& options,
                                                           const OracleSettings& settings) {
  for (const auto& s : net.subsystems())
    if (!indices.count(s.name())) throw ModelError("no index given for subsystem '" + s.name() + "'");

  std::map<std::string, PropagationResult> results;
  for (std::size_t j = 0; j < net.size(); ++j) {
    const Subsystem& s = net[j];
    const ResilienceIndex& idx = indices.find(s.name())->second;
    PropagationResult r;
    r.delta = options.delta_method == DeltaMethod::ExactJoint
                  ? compute_delta_exact(net, j, settings)
                  : compute_delta_pairwise(net, j, settings);
    const double delta = r.delta.value;
    r.sup_h = std::max(sup_h(s, settings), idx.d);
    r.r1 = feasibility_r1(idx, delta, options.z);
    r.r2 = feasibility_r2(idx, delta, options.z, r.sup_h);
    const bool r1_ok = r.r1.verdict == Verdict::GuaranteedFeasible;
    const bool r2_ok = r.r2.verdict == Verdict::GuaranteedFeasible;

    bool tried_r1 = false;
    bool tried_r2 = false;
    auto attempt = [&](InequalitySystem which) {
      (which == InequalitySystem::R1 ? tried_r1 : tried_r2) = true;
      SolveResult sr = which == InequalitySystem::R1
                           ? solve_r1(idx, delta, options.z, r.sup_h, options.tau_max, options.policy)
                           : solve_r2(idx, delta, options.z, r.sup_h, options.tau_max, options.policy);
      if (sr.index) {
        r.index = sr.index;
        r.used = which;
        return true;
      }
      if (!r.note.empty()) r.note += "; ";
      r.note += (which == InequalitySystem::R1 ? "R1: " : "R2: ") + sr.reason;
      return false;
    };

    if (options.prefer == InequalitySystem::R2 && r2_ok && attempt(InequalitySystem::R2)) {
      r.guaranteed = true;
    } else if (r1_ok && attempt(InequalitySystem::R1)) {
      r.guaranteed = true;
    } else if (r2_ok && !tried_r2 && attempt(InequalitySystem::R2)) {
      r.guaranteed = true;
    } else if ((tried_r1 || !attempt(InequalitySystem::R1)) && !tried_r2) {
      attempt(InequalitySystem::R2);
    }
    results.emplace(s.name(), std::move(r));
  }
  return results;
}

// ---- verification ------------------------------------------------------------

std::map<std::string, VerificationReport> verify_network(const Network& net,
                                                         const IndexMap& propagated, double z,
                                                         const OracleSettings& settings) {
  if (!(z > 0.0)) throw Error("verify_network needs z > 0");
  std::map<std::string, VerificationReport> out;
  for (std::size_t j = 0; j < net.size(); ++j) {
    const Subsystem& s = net[j];
    auto it = propagated.find(s.name());
    if (it == propagated.end()) throw ModelError("no index given for subsystem '" + s.name() + "'");
    const ResilienceIndex& idx = it->second;
    idx.validate();
    const std::vector<std::size_t> others = net.neighbors(j);
    const std::vector<std::size_t> members = with(others, j);

    VerificationReport report;
    try {
      {
        SearchSpace space = joint_space(net, members, j, Region::safe_set(), settings);
        Expression fn = s.offline_worst().rebind(space.vars) + net.coupling_drift(j, others, space.vars);
        Extremum e = grid_minimize(fn, space, settings);
        // worst input depends on x_j only
        Point xj;
        for (const auto& v : s.state_vars())
          xj.push_back(e.arg[static_cast<std::size_t>(
              std::find(space.vars.begin(), space.vars.end(), v) - space.vars.begin())]);
        e.input = s.worst_input(xj);
        report.raw_offline = e.value;
        report.margin_offline = e.value + idx.d / idx.tau;
        report.worst_offline = std::move(e);
      }
      if (idx.d == 0.0) {
        report.raw_recovery = std::numeric_limits<double>::infinity();
        report.margin_recovery = std::numeric_limits<double>::infinity();
      } else {
        SearchSpace space = joint_space(net, members, j, Region::band(idx.d), settings);
        Expression fn = s.closed_loop().rebind(space.vars) + net.coupling_drift(j, others, space.vars);
        Extremum e = grid_minimize(fn, space, settings);
        report.raw_recovery = e.value;
        report.margin_recovery = e.value - idx.d / idx.phi;
        report.worst_recovery = std::move(e);
      }
      {
        SearchSpace space = joint_space(net, members, j, Region::buffer(idx.d), settings);
        Expression h = s.h().rebind(space.vars);
        Expression fn = s.closed_loop().rebind(space.vars) + net.coupling_drift(j, others, space.vars) +
                        Expression::constant(z, space.vars) * (h - Expression::constant(idx.d));
        Extremum e = grid_minimize(fn, space, settings);
        report.raw_invariance = e.value;
        report.margin_invariance = e.value - idx.eta;
        report.worst_invariance = std::move(e);
      }
      const double tol = -settings.margin_tolerance;
      report.passed = report.margin_offline >= tol && report.margin_recovery >= tol &&
                      report.margin_invariance >= tol;
    } catch (const EmptyRegion& e) {
      report.passed = false;
      report.failure = VerificationFailure::EmptyRegion;
      report.failure_detail = e.what();
    }
    out.emplace(s.name(), std::move(report));
  }
  return out;
}

}  // namespace resil
