#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resil/oracle.hpp"
#include "resil/resilience.hpp"
#include "resil/subsystem.hpp"

namespace resil {

struct CouplingSource {
  std::string from;
  std::string to;
  std::vector<std::string> w;  // one entry per state of `to`
  /// When true the term also leaves the source: x_from' -= W. This is the
  /// generic network model; one-way couplings only feed the target.
  bool conservative = true;
};

/// W_{from,to}(x_from, x_to), bound to the concatenated state variables of
/// `from` followed by `to`.
struct Coupling {
  std::size_t from = 0;
  std::size_t to = 0;
  std::vector<Expression> w;
  bool conservative = true;
};

/// Subsystems plus directed couplings. Subsystem j evolves as
///   x_j' = f_j + g_j u_j + sum_{i->j} W_ij - sum_{j->i, conservative} W_ji.
class Network {
 public:
  Network(std::vector<Subsystem> subsystems, const std::vector<CouplingSource>& couplings);

  const std::vector<Subsystem>& subsystems() const { return subsystems_; }
  const std::vector<Coupling>& couplings() const { return couplings_; }
  std::size_t size() const { return subsystems_.size(); }
  const Subsystem& operator[](std::size_t j) const { return subsystems_[j]; }

  /// Throws ModelError for unknown names.
  std::size_t index_of(std::string_view name) const;

  /// Subsystems whose state enters the coupling drift of j (j excluded),
  /// ascending.
  std::vector<std::size_t> neighbors(std::size_t j) const;

  /// Concatenated state variables and boxes of `members` (ascending order).
  std::vector<std::string> joint_vars(const std::vector<std::size_t>& members) const;
  std::vector<Interval> joint_box(const std::vector<std::size_t>& members) const;

  /// Net coupling term entering x_j', restricted to couplings with `others`,
  /// bound to `vars`. Returns n_j expressions.
  std::vector<Expression> coupling_field(std::size_t j, const std::vector<std::size_t>& others,
                                         std::span<const std::string> vars) const;

  /// grad h_j . coupling_field(j, others), bound to `vars`.
  Expression coupling_drift(std::size_t j, const std::vector<std::size_t>& others,
                            std::span<const std::string> vars) const;

 private:
  std::vector<Subsystem> subsystems_;
  std::vector<Coupling> couplings_;
};

enum class DeltaMethod { ExactJoint, PairwiseSum };

struct DeltaTerm {
  std::optional<std::size_t> other;  // empty for the joint estimate
  double value = 0.0;
  std::vector<std::string> vars;
  Point arg;
};

struct DeltaEstimate {
  std::size_t subsystem = 0;
  double value = 0.0;
  DeltaMethod method = DeltaMethod::PairwiseSum;
  std::vector<DeltaTerm> terms;
};

/// inf of grad h_j . (net coupling) over the product of all participating
/// safety sets, gridded jointly.
DeltaEstimate compute_delta_exact(const Network& net, std::size_t j,
                                  const OracleSettings& settings);
/// Sum over neighbours i of the pairwise infimum over C_i x C_j; never above
/// the joint value.
DeltaEstimate compute_delta_pairwise(const Network& net, std::size_t j,
                                     const OracleSettings& settings);

enum class Verdict { GuaranteedFeasible, Unknown };
enum class InequalitySystem { R1, R2 };

struct Feasibility {
  Verdict verdict = Verdict::Unknown;
  InequalitySystem which = InequalitySystem::R1;
  double threshold = 0.0;
  double delta = 0.0;
};

/// Sufficient condition for the buffer-shrinking system:
///   delta >= max{-d/phi, -eta - z d}.
Feasibility feasibility_r1(const ResilienceIndex& idx, double delta, double z);
/// Sufficient condition for the buffer-growing system:
///   delta >= max{-d/phi, -eta + z (sup h - d)}.
Feasibility feasibility_r2(const ResilienceIndex& idx, double delta, double z, double sup_h);

struct SolvePolicy {
  int grid_points = 1000;
};

struct SolveResult {
  std::optional<ResilienceIndex> index;
  std::string reason;  // why no tuple was found
};

/// Finds (d', tau', phi', eta') with d' <= d satisfying the buffer-shrinking
/// inequalities. d' is scanned descending over a uniform grid of [0, d]; if
/// no grid point works the largest analytically feasible d' is tried.
SolveResult solve_r1(const ResilienceIndex& idx, double delta, double z, double sup_h,
                     double tau_max, const SolvePolicy& policy = {});
/// Finds (d', tau', phi', eta') with d <= d' <= sup h, scanning ascending.
SolveResult solve_r2(const ResilienceIndex& idx, double delta, double z, double sup_h,
                     double tau_max, const SolvePolicy& policy = {});

/// Canonical buffer-shrinking tuple for delta >= 0: d' = d, tau' = tau,
/// phi' = phi d / (d + phi delta), eta' = delta + min{d/phi, eta}.
ResilienceIndex improve_by_interconnection(const ResilienceIndex& idx, double delta, double z);

struct PropagationOptions {
  double z = 1.0;
  double tau_max = 1e9;
  DeltaMethod delta_method = DeltaMethod::PairwiseSum;
  InequalitySystem prefer = InequalitySystem::R1;
  SolvePolicy policy;
};

struct PropagationResult {
  std::optional<ResilienceIndex> index;
  DeltaEstimate delta;
  double sup_h = 0.0;
  Feasibility r1;
  Feasibility r2;
  std::optional<InequalitySystem> used;
  /// True when the system used was certified feasible up front.
  bool guaranteed = false;
  std::string note;
};

using IndexMap = std::map<std::string, ResilienceIndex, std::less<>>;

/// Per-subsystem propagation; an infeasible subsystem does not stop the rest.
std::map<std::string, PropagationResult> propagate_indices(const Network& net,
                                                           const IndexMap& indices,
                                                           const PropagationOptions& options,
                                                           const OracleSettings& settings);

/// Re-checks the three conditions with the full interconnected drift of each
/// subsystem, neighbours ranging over their safety sets.
std::map<std::string, VerificationReport> verify_network(const Network& net,
                                                         const IndexMap& propagated, double z,
                                                         const OracleSettings& settings);

}  // namespace resil
