#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "resil/expr.hpp"
#include "resil/subsystem.hpp"

namespace resil {

struct OracleSettings {
  int grid_points_per_dim = 200;
  int refinement_rounds = 3;
  double margin_tolerance = 1e-9;
  /// OpenMP thread count; 0 uses the runtime default.
  int workers = 0;

  void validate() const;
};

enum class ExtremumKind { Min, Max };
enum class Rigor { Sampled };

struct Extremum {
  double value = std::numeric_limits<double>::quiet_NaN();
  Point arg;
  /// Worst-case input at `arg` for queries that minimize over inputs too.
  Point input;
  ExtremumKind kind = ExtremumKind::Min;
  Rigor rigor = Rigor::Sampled;
};

/// lo <= g(x) <= hi
struct Constraint {
  Expression g;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// A box over named variables, filtered by scalar constraints. The objective
/// and all constraint expressions must be bound to `vars`.
struct SearchSpace {
  std::vector<std::string> vars;
  std::vector<Interval> box;
  std::vector<Constraint> constraints;
  std::string label = "region";
};

// Grid minimization. Variables that neither the objective nor any constraint
// reads are pinned at their box midpoint; the remaining (active) ones are
// gridded with grid_points_per_dim points each, endpoints included. Every
// refinement round re-grids [arg - h, arg + h] (clipped to the box) with the
// same point count, h being the current spacing, and keeps the incumbent
// unless a strictly smaller value appears. Ties go to the lexicographically
// smallest grid point. NaN values are treated as rejected points.

/// Batched OpenMP kernel.
Extremum grid_minimize(const Expression& objective, const SearchSpace& space,
                       const OracleSettings& settings);
/// Serial, point-at-a-time reference. Bitwise identical to grid_minimize.
Extremum grid_minimize_reference(const Expression& objective, const SearchSpace& space,
                                 const OracleSettings& settings);
Extremum grid_maximize(const Expression& objective, const SearchSpace& space,
                       const OracleSettings& settings);

/// Search space of one subsystem's states restricted to `region`. Strict
/// upper bounds become closed bounds shrunk by margin_tolerance.
SearchSpace subsystem_space(const Subsystem& s, const Region& region,
                            const OracleSettings& settings);

Extremum minimize(const Expression& fn, const Region& region, const Subsystem& s,
                  const OracleSettings& settings);
Extremum maximize(const Expression& fn, const Region& region, const Subsystem& s,
                  const OracleSettings& settings);

/// sup of h over the safety set.
double sup_h(const Subsystem& s, const OracleSettings& settings);
/// Grid point maximizing h (the deepest interior state).
Point argmax_h(const Subsystem& s, const OracleSettings& settings);

/// min over x in C and u in U of grad h . (f + g u); the input minimum is
/// taken exactly at box vertices, so `input` of the result is the worst u.
Extremum min_offline_drift(const Subsystem& s, const OracleSettings& settings);
/// min of the closed-loop drift over 0 <= h <= d - tol.
Extremum min_recovery_drift(const Subsystem& s, double d, const OracleSettings& settings);
/// min over h >= d of closed-loop drift + z (h - d).
Extremum min_invariance_margin(const Subsystem& s, double d, double z,
                               const OracleSettings& settings);

}  // namespace resil
