#include "resil/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>

#include <omp.h>

#include "resil/errors.hpp"

namespace resil {

void OracleSettings::validate() const {
  if (grid_points_per_dim < 2) throw Error("grid_points_per_dim must be at least 2");
  if (refinement_rounds < 0) throw Error("refinement_rounds must be non-negative");
  if (!(margin_tolerance >= 0.0)) throw Error("margin_tolerance must be non-negative");
  if (workers < 0) throw Error("workers must be non-negative");
}

namespace {

struct Candidate {
  double value = 0.0;
  std::uint64_t index = 0;
  bool found = false;

  bool better_than(const Candidate& other) const {
    if (!found) return false;
    if (!other.found) return true;
    if (value != other.value) return value < other.value;
    return index < other.index;
  }
};

// One round of gridding: box of the active dims plus the fixed values of the
// inactive ones.
struct Layout {
  std::vector<std::size_t> active;  // indices into vars
  std::vector<double> fixed;        // full point with inactive dims at midpoints
  std::size_t points = 0;           // per active dim
};

double coord(const Interval& iv, std::size_t k, std::size_t g) {
  if (k + 1 == g) return iv.hi;
  return iv.lo + iv.width() * static_cast<double>(k) / static_cast<double>(g - 1);
}

Layout make_layout(const Expression& objective, const SearchSpace& space,
                   const OracleSettings& settings) {
  settings.validate();
  if (space.box.size() != space.vars.size())
    throw DimensionMismatch("search space box and variable list differ in length");
  if (objective.variables() != space.vars)
    throw DimensionMismatch("objective is not bound to the search-space variables");
  std::vector<bool> used = objective.uses();
  for (const auto& c : space.constraints) {
    if (c.g.variables() != space.vars)
      throw DimensionMismatch("constraint is not bound to the search-space variables");
    std::vector<bool> u = c.g.uses();
    for (std::size_t i = 0; i < u.size(); ++i) used[i] = used[i] || u[i];
  }
  Layout layout;
  layout.points = static_cast<std::size_t>(settings.grid_points_per_dim);
  layout.fixed.resize(space.vars.size());
  for (std::size_t i = 0; i < space.vars.size(); ++i) {
    layout.fixed[i] = space.box[i].mid();
    if (used[i]) layout.active.push_back(i);
  }
  double total = std::pow(static_cast<double>(layout.points),
                          static_cast<double>(layout.active.size()));
  if (total > 1e11)
    throw Error(space.label + ": grid of " + std::to_string(total) + " points is too large");
  return layout;
}

std::uint64_t row_count(const Layout& layout) {
  std::uint64_t rows = 1;
  for (std::size_t i = 1; i < layout.active.size(); ++i) rows *= layout.points;
  return rows;
}

// Writes the coordinates of row `row` (all active dims but the last) into x.
void decode_row(const Layout& layout, const std::vector<Interval>& cur, std::uint64_t row,
                std::vector<double>& x) {
  const std::size_t d = layout.active.size();
  if (d == 0) return;
  for (std::size_t a = d - 1; a-- > 0;) {
    std::size_t k = static_cast<std::size_t>(row % layout.points);
    row /= layout.points;
    x[layout.active[a]] = coord(cur[a], k, layout.points);
  }
}

Point decode_point(const Layout& layout, const std::vector<Interval>& cur, std::uint64_t index) {
  Point x = layout.fixed;
  const std::size_t d = layout.active.size();
  if (d == 0) return x;
  std::size_t last = static_cast<std::size_t>(index % layout.points);
  decode_row(layout, cur, index / layout.points, x);
  x[layout.active[d - 1]] = coord(cur[d - 1], last, layout.points);
  return x;
}

bool accepted(const Constraint& c, double g) { return g >= c.lo && g <= c.hi; }

Candidate round_reference(const Expression& objective, const SearchSpace& space,
                          const Layout& layout, const std::vector<Interval>& cur) {
  Candidate best;
  const std::size_t d = layout.active.size();
  const std::uint64_t rows = row_count(layout);
  const std::size_t per_row = d == 0 ? 1 : layout.points;
  std::vector<double> x = layout.fixed;
  for (std::uint64_t r = 0; r < rows; ++r) {
    decode_row(layout, cur, r, x);
    for (std::size_t k = 0; k < per_row; ++k) {
      if (d > 0) x[layout.active[d - 1]] = coord(cur[d - 1], k, layout.points);
      bool ok = true;
      for (const auto& c : space.constraints) {
        if (!accepted(c, c.g.eval(x))) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      const double v = objective.eval(x);
      if (std::isnan(v)) continue;
      Candidate cand{v, r * per_row + k, true};
      if (cand.better_than(best)) best = cand;
    }
  }
  return best;
}

Candidate round_parallel(const Expression& objective, const SearchSpace& space,
                         const Layout& layout, const std::vector<Interval>& cur, int workers) {
  const std::size_t d = layout.active.size();
  const std::int64_t rows = static_cast<std::int64_t>(row_count(layout));
  const std::size_t per_row = d == 0 ? 1 : layout.points;
  const std::size_t nvars = layout.fixed.size();
  const int threads = workers > 0 ? workers : omp_get_max_threads();

  Candidate best;
  std::optional<std::int64_t> error_row;
  std::string error_message;

#pragma omp parallel num_threads(threads)
  {
    Candidate local;
    std::optional<std::int64_t> local_error_row;
    std::string local_error;
    std::vector<std::vector<double>> columns(nvars, std::vector<double>(per_row));
    std::vector<const double*> column_ptrs(nvars);
    std::vector<double> x = layout.fixed;
    std::vector<double> values(per_row);
    std::vector<std::uint32_t> keep(per_row);

#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      if (local_error_row) continue;
      try {
        decode_row(layout, cur, static_cast<std::uint64_t>(r), x);
        for (std::size_t v = 0; v < nvars; ++v) std::fill(columns[v].begin(), columns[v].end(), x[v]);
        if (d > 0) {
          std::vector<double>& last = columns[layout.active[d - 1]];
          for (std::size_t k = 0; k < per_row; ++k) last[k] = coord(cur[d - 1], k, layout.points);
        }
        std::size_t n = per_row;
        for (std::size_t k = 0; k < n; ++k) keep[k] = static_cast<std::uint32_t>(k);
        for (const auto& c : space.constraints) {
          for (std::size_t v = 0; v < nvars; ++v) column_ptrs[v] = columns[v].data();
          c.g.eval_batch(column_ptrs, n, values.data());
          std::size_t m = 0;
          for (std::size_t k = 0; k < n; ++k) {
            if (!accepted(c, values[k])) continue;
            if (m != k) {
              for (std::size_t v = 0; v < nvars; ++v) columns[v][m] = columns[v][k];
              keep[m] = keep[k];
            }
            ++m;
          }
          n = m;
          if (n == 0) break;
        }
        if (n == 0) continue;
        for (std::size_t v = 0; v < nvars; ++v) column_ptrs[v] = columns[v].data();
        objective.eval_batch(column_ptrs, n, values.data());
        for (std::size_t k = 0; k < n; ++k) {
          if (std::isnan(values[k])) continue;
          Candidate cand{values[k], static_cast<std::uint64_t>(r) * per_row + keep[k], true};
          if (cand.better_than(local)) local = cand;
        }
      } catch (const std::exception& e) {
        local_error_row = r;
        local_error = e.what();
      }
    }
#pragma omp critical(resil_oracle_reduce)
    {
      if (local.better_than(best)) best = local;
      if (local_error_row && (!error_row || *local_error_row < *error_row)) {
        error_row = local_error_row;
        error_message = local_error;
      }
    }
  }
  if (error_row) throw EvalError(error_message);
  return best;
}

template <typename Round>
Extremum run(const Expression& objective, const SearchSpace& space,
             const OracleSettings& settings, Round round) {
  const Layout layout = make_layout(objective, space, settings);
  std::vector<Interval> cur;
  for (std::size_t a : layout.active) cur.push_back(space.box[a]);

  Candidate first = round(layout, cur);
  if (!first.found)
    throw EmptyRegion(space.label + ": no grid point satisfies the region predicate");
  double best_value = first.value;
  Point best_arg = decode_point(layout, cur, first.index);

  for (int r = 0; r < settings.refinement_rounds && !layout.active.empty(); ++r) {
    std::vector<Interval> next(cur.size());
    for (std::size_t a = 0; a < cur.size(); ++a) {
      const double h = cur[a].width() / static_cast<double>(layout.points - 1);
      const Interval& full = space.box[layout.active[a]];
      const double c = best_arg[layout.active[a]];
      next[a] = {std::max(full.lo, c - h), std::min(full.hi, c + h)};
    }
    cur = std::move(next);
    Candidate cand = round(layout, cur);
    if (cand.found && cand.value < best_value) {
      best_value = cand.value;
      best_arg = decode_point(layout, cur, cand.index);
    }
  }
  Extremum out;
  out.value = best_value;
  out.arg = std::move(best_arg);
  out.kind = ExtremumKind::Min;
  return out;
}

Constraint h_constraint(const Subsystem& s, std::span<const std::string> vars, double lo,
                        double hi) {
  return Constraint{s.h().rebind(vars), lo, hi};
}

}  // namespace

Extremum grid_minimize(const Expression& objective, const SearchSpace& space,
                       const OracleSettings& settings) {
  return run(objective, space, settings, [&](const Layout& layout, const std::vector<Interval>& cur) {
    return round_parallel(objective, space, layout, cur, settings.workers);
  });
}

Extremum grid_minimize_reference(const Expression& objective, const SearchSpace& space,
                                 const OracleSettings& settings) {
  return run(objective, space, settings, [&](const Layout& layout, const std::vector<Interval>& cur) {
    return round_reference(objective, space, layout, cur);
  });
}

Extremum grid_maximize(const Expression& objective, const SearchSpace& space,
                       const OracleSettings& settings) {
  Extremum e = grid_minimize(-objective, space, settings);
  e.value = -e.value;
  e.kind = ExtremumKind::Max;
  return e;
}

SearchSpace subsystem_space(const Subsystem& s, const Region& region,
                            const OracleSettings& settings) {
  SearchSpace space;
  space.vars = s.state_vars();
  space.box = s.state_box();
  const double inf = std::numeric_limits<double>::infinity();
  switch (region.tag) {
    case RegionTag::StateBox:
      space.label = s.name() + " state box";
      break;
    case RegionTag::SafeSet:
      space.label = s.name() + " safety set";
      space.constraints.push_back(h_constraint(s, space.vars, 0.0, inf));
      break;
    case RegionTag::SafeMinusBuffer:
      space.label = s.name() + " band 0 <= h < " + std::to_string(region.d);
      space.constraints.push_back(
          h_constraint(s, space.vars, 0.0, region.d - settings.margin_tolerance));
      break;
    case RegionTag::Buffer:
      space.label = s.name() + " buffer h >= " + std::to_string(region.d);
      space.constraints.push_back(h_constraint(s, space.vars, region.d, inf));
      break;
    case RegionTag::SafeSetTimesInputBox:
      space.label = s.name() + " safety set x input box";
      space.vars.insert(space.vars.end(), s.input_vars().begin(), s.input_vars().end());
      space.box.insert(space.box.end(), s.input_box().begin(), s.input_box().end());
      space.constraints.push_back(h_constraint(s, space.vars, 0.0, inf));
      break;
  }
  return space;
}

Extremum minimize(const Expression& fn, const Region& region, const Subsystem& s,
                  const OracleSettings& settings) {
  SearchSpace space = subsystem_space(s, region, settings);
  return grid_minimize(fn.rebind(space.vars), space, settings);
}

Extremum maximize(const Expression& fn, const Region& region, const Subsystem& s,
                  const OracleSettings& settings) {
  SearchSpace space = subsystem_space(s, region, settings);
  return grid_maximize(fn.rebind(space.vars), space, settings);
}

double sup_h(const Subsystem& s, const OracleSettings& settings) {
  return maximize(s.h(), Region::safe_set(), s, settings).value;
}

Point argmax_h(const Subsystem& s, const OracleSettings& settings) {
  return maximize(s.h(), Region::safe_set(), s, settings).arg;
}

Extremum min_offline_drift(const Subsystem& s, const OracleSettings& settings) {
  Extremum e = minimize(s.offline_worst(), Region::safe_set(), s, settings);
  e.input = s.worst_input(e.arg);
  return e;
}

Extremum min_recovery_drift(const Subsystem& s, double d, const OracleSettings& settings) {
  if (!(d > 0.0)) throw Error("min_recovery_drift needs d > 0");
  return minimize(s.closed_loop(), Region::band(d), s, settings);
}

Extremum min_invariance_margin(const Subsystem& s, double d, double z,
                               const OracleSettings& settings) {
  if (!(d >= 0.0)) throw Error("min_invariance_margin needs d >= 0");
  if (!(z > 0.0)) throw Error("min_invariance_margin needs z > 0");
  Expression fn = s.closed_loop() +
                  Expression::constant(z, s.state_vars()) * (s.h() - Expression::constant(d));
  return minimize(fn, Region::buffer(d), s, settings);
}

}  // namespace resil
