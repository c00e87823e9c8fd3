#include "resil/hybrid_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <omp.h>

#include "resil/errors.hpp"

namespace resil {

namespace {

constexpr double kRelTol = 1e-12;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

void check_sizes(const Network& net, const std::vector<ResilienceIndex>& indices) {
  if (indices.size() != net.size())
    throw DimensionMismatch("expected " + std::to_string(net.size()) + " indices, got " +
                            std::to_string(indices.size()));
}

// Everything the integrator needs, bound once per network.
struct Plant {
  const Network& net;
  std::vector<std::size_t> offset;  // start of x_j in the joint state
  std::vector<std::vector<Expression>> field;
  std::size_t dim = 0;

  explicit Plant(const Network& n) : net(n) {
    std::vector<std::size_t> all(n.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto vars = n.joint_vars(all);
    for (std::size_t j = 0; j < n.size(); ++j) {
      offset.push_back(dim);
      dim += n[j].n();
      field.push_back(n.coupling_field(j, n.neighbors(j), vars));
    }
  }

  std::span<const double> part(std::span<const double> x, std::size_t j) const {
    return x.subspan(offset[j], net[j].n());
  }

  // dx = F(x), offline subsystems use their held input.
  void rhs(std::span<const double> x, const std::vector<Location>& loc,
           const std::vector<Point>& held, std::vector<double>& dx) const {
    for (std::size_t j = 0; j < net.size(); ++j) {
      const Subsystem& s = net[j];
      const auto xj = part(x, j);
      const Point u = loc[j] == Location::Online ? s.control_at(xj) : held[j];
      const Point fj = s.dynamics(xj, u);
      for (std::size_t i = 0; i < s.n(); ++i) dx[offset[j] + i] = fj[i] + field[j][i].eval(x);
    }
  }

  void rk4(std::vector<double>& x, double h, const std::vector<Location>& loc,
           const std::vector<Point>& held) const {
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    rhs(x, loc, held, k1);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    rhs(tmp, loc, held, k2);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    rhs(tmp, loc, held, k3);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + h * k3[i];
    rhs(tmp, loc, held, k4);
    for (std::size_t i = 0; i < dim; ++i)
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
};

// Adversary state that persists across steps.
struct Adversary {
  AdversaryPolicy policy;
  std::vector<Point> held;
  std::vector<long> held_interval;  // ConstantExtreme: interval the held input belongs to
  std::vector<Point> step_random;   // RandomVertex: vertex drawn for the current step
};

long interval_at(const FaultSchedule& sched, std::size_t j, double t) {
  const auto& iv = sched.offline[j];
  for (std::size_t k = 0; k < iv.size(); ++k)
    if (iv[k].start <= t && t < iv[k].end) return static_cast<long>(k);
  return -1;
}

Point random_vertex(const Subsystem& s, std::mt19937_64& rng) {
  Point u(s.p());
  for (std::size_t k = 0; k < s.p(); ++k)
    u[k] = uniform01(rng) < 0.5 ? s.input_box()[k].lo : s.input_box()[k].hi;
  return u;
}

// Chooses locations and offline inputs at time t for state x.
void choose(const Plant& plant, const FaultSchedule& sched, double t, std::span<const double> x,
            Adversary& adv, std::vector<Location>& loc) {
  for (std::size_t j = 0; j < plant.net.size(); ++j) {
    const long k = interval_at(sched, j, t);
    loc[j] = k < 0 ? Location::Online : Location::Offline;
    if (k < 0) {
      adv.held_interval[j] = -1;
      continue;
    }
    const Subsystem& s = plant.net[j];
    switch (adv.policy.kind) {
      case AdversaryKind::BangBang:
        adv.held[j] = s.worst_input(plant.part(x, j));
        break;
      case AdversaryKind::ConstantExtreme:
        if (adv.held_interval[j] != k) {
          adv.held[j] = s.worst_input(plant.part(x, j));
          adv.held_interval[j] = k;
        }
        break;
      case AdversaryKind::RandomVertex:
        adv.held[j] = adv.step_random[j];
        break;
    }
  }
}

// Integrates [a, b], splitting at schedule boundaries.
void advance(const Plant& plant, const FaultSchedule& sched, double a, double b,
             std::vector<double>& x, Adversary& adv) {
  std::vector<double> cuts{a};
  for (const auto& iv : sched.offline)
    for (const auto& o : iv) {
      if (o.start > a && o.start < b) cuts.push_back(o.start);
      if (o.end > a && o.end < b) cuts.push_back(o.end);
    }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  cuts.push_back(b);
  std::vector<Location> loc(plant.net.size());
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    choose(plant, sched, cuts[c], x, adv, loc);
    plant.rk4(x, cuts[c + 1] - cuts[c], loc, adv.held);
  }
}

void check_state(const Plant& plant, std::span<const double> x, double t) {
  for (std::size_t j = 0; j < plant.net.size(); ++j) {
    const Subsystem& s = plant.net[j];
    const auto xj = plant.part(x, j);
    for (std::size_t i = 0; i < s.n(); ++i) {
      const Interval& b = s.state_box()[i];
      const double slack = 0.1 * b.width();
      if (!std::isfinite(xj[i]) || xj[i] < b.lo - slack || xj[i] > b.hi + slack) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "subsystem '%s' state %s = %g left its box at t = %g",
                      s.name().c_str(), s.state_vars()[i].c_str(), xj[i], t);
        throw NonFiniteState(buf);
      }
    }
  }
}

}  // namespace

bool FaultSchedule::offline_at(std::size_t j, double t) const {
  for (const auto& o : offline.at(j))
    if (o.start <= t && t < o.end) return true;
  return false;
}

void validate_schedule(const FaultSchedule& schedule, const Network& net,
                       const std::vector<ResilienceIndex>& indices, double horizon) {
  check_sizes(net, indices);
  if (schedule.offline.size() != net.size())
    throw ScheduleError("schedule covers " + std::to_string(schedule.offline.size()) +
                        " subsystems, network has " + std::to_string(net.size()));
  for (std::size_t j = 0; j < net.size(); ++j) {
    const auto& idx = indices[j];
    const auto& iv = schedule.offline[j];
    const std::string who = "subsystem '" + net[j].name() + "'";
    for (std::size_t k = 0; k < iv.size(); ++k) {
      const auto& o = iv[k];
      if (!(o.start >= 0.0 && o.start < o.end && o.end <= horizon * (1 + kRelTol)))
        throw ScheduleError(who + ": offline interval " + std::to_string(k) +
                            " is empty or outside [0, horizon]");
      if (o.end - o.start > idx.tau * (1 + kRelTol))
        throw ScheduleError(who + ": offline interval " + std::to_string(k) +
                            " is longer than tau");
      if (k > 0 && o.start - iv[k - 1].end < idx.phi * (1 - kRelTol))
        throw ScheduleError(who + ": online gap before interval " + std::to_string(k) +
                            " is shorter than phi");
    }
  }
}

std::vector<FaultSchedule> generate_schedule(std::uint64_t seed, double horizon,
                                             const std::vector<ResilienceIndex>& indices,
                                             std::size_t count) {
  if (!(horizon > 0.0)) throw ScheduleError("horizon must be positive");
  for (const auto& idx : indices) idx.validate();
  std::vector<FaultSchedule> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    auto rng = make_rng(seed, k);
    out[k].offline.resize(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
      const auto& idx = indices[j];
      double start = uniform01(rng) * idx.phi;
      while (start < horizon) {
        const double len = idx.tau * (1.0 - uniform01(rng));
        const double end = std::min(start + len, horizon);
        out[k].offline[j].push_back({start, end});
        if (end >= horizon) break;
        start = end + idx.phi * (1.0 + 2.0 * uniform01(rng));
      }
    }
  }
  return out;
}

HybridTrace simulate(const Network& net, const std::vector<ResilienceIndex>& indices,
                     const FaultSchedule& schedule, const AdversaryPolicy& adversary, double dt,
                     double horizon, const std::vector<Point>& x0) {
  check_sizes(net, indices);
  if (!(dt > 0.0) || !(horizon > 0.0)) throw Error("simulate needs dt > 0 and horizon > 0");
  validate_schedule(schedule, net, indices, horizon);
  if (x0.size() != net.size()) throw DimensionMismatch("one initial state per subsystem");

  const Plant plant(net);
  std::vector<double> x;
  for (std::size_t j = 0; j < net.size(); ++j) {
    if (x0[j].size() != net[j].n())
      throw DimensionMismatch("initial state of '" + net[j].name() + "' has wrong size");
    const double h0 = net[j].h().eval(x0[j]);
    if (!(h0 >= indices[j].d))
      throw Error("initial state of '" + net[j].name() + "' is outside its buffer (h = " +
                  std::to_string(h0) + " < d = " + std::to_string(indices[j].d) + ")");
    x.insert(x.end(), x0[j].begin(), x0[j].end());
  }

  HybridTrace trace;
  trace.subsystems.resize(net.size());
  for (std::size_t j = 0; j < net.size(); ++j) {
    trace.subsystems[j].n = net[j].n();
    trace.subsystems[j].p = net[j].p();
  }
  for (std::size_t j = 0; j < net.size(); ++j)
    for (const auto& o : schedule.offline[j]) {
      trace.events.push_back({o.start, j, Location::Online, Location::Offline});
      if (o.end < horizon) trace.events.push_back({o.end, j, Location::Offline, Location::Online});
    }
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const SwitchEvent& a, const SwitchEvent& b) { return a.t < b.t; });

  Adversary adv{adversary,
                std::vector<Point>(net.size()),
                std::vector<long>(net.size(), -1),
                std::vector<Point>(net.size())};
  for (std::size_t j = 0; j < net.size(); ++j) adv.held[j] = Point(net[j].p(), 0.0);
  std::mt19937_64 rng = make_rng(adversary.seed, 0);

  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  std::vector<Location> loc(net.size());

  auto record = [&](double t) {
    trace.t.push_back(t);
    // Inputs shown at a sample are the ones applied right after it.
    Adversary probe = adv;
    choose(plant, schedule, t, x, probe, loc);
    for (std::size_t j = 0; j < net.size(); ++j) {
      auto& st = trace.subsystems[j];
      const auto xj = plant.part(x, j);
      st.states.insert(st.states.end(), xj.begin(), xj.end());
      const Point u = loc[j] == Location::Online ? net[j].control_at(xj) : probe.held[j];
      st.inputs.insert(st.inputs.end(), u.begin(), u.end());
      const double h = net[j].h().eval(xj);
      st.h.push_back(h);
      st.location.push_back(loc[j]);
      st.in_buffer.push_back(h >= indices[j].d ? 1 : 0);
    }
  };

  if (adversary.kind == AdversaryKind::RandomVertex)
    for (std::size_t j = 0; j < net.size(); ++j) adv.step_random[j] = random_vertex(net[j], rng);
  record(0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double a = static_cast<double>(k) * dt;
    const double b = k + 1 == steps ? horizon : static_cast<double>(k + 1) * dt;
    const std::vector<double> x_prev = x;
    const Adversary adv_prev = adv;
    advance(plant, schedule, a, b, x, adv);
    check_state(plant, x, b);

    for (std::size_t j = 0; j < net.size(); ++j) {
      const double h_prev = trace.subsystems[j].h.back();
      const double h_now = net[j].h().eval(plant.part(x, j));
      if ((h_prev >= 0.0) != (h_now >= 0.0)) {
        std::vector<double> xm = x_prev;
        Adversary am = adv_prev;
        const double mid = 0.5 * (a + b);
        advance(plant, schedule, a, mid, xm, am);
        const double h_mid = net[j].h().eval(plant.part(xm, j));
        const bool first_half = (h_prev >= 0.0) != (h_mid >= 0.0);
        trace.crossings.push_back({j, first_half ? a : mid, first_half ? mid : b, h_mid});
      }
    }
    if (adversary.kind == AdversaryKind::RandomVertex)
      for (std::size_t j = 0; j < net.size(); ++j) adv.step_random[j] = random_vertex(net[j], rng);
    record(b);
  }
  return trace;
}

SafetyVerdict check_trace_safety(const HybridTrace& trace, const Network& net,
                                 const std::vector<ResilienceIndex>& indices) {
  check_sizes(net, indices);
  if (trace.subsystems.size() != net.size())
    throw DimensionMismatch("trace does not match the network");
  SafetyVerdict v;
  v.min_h.assign(net.size(), std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < net.size(); ++j) {
    const auto& h = trace.subsystems[j].h;
    for (std::size_t k = 0; k < h.size(); ++k) {
      v.min_h[j] = std::min(v.min_h[j], h[k]);
      if (h[k] < 0.0 && (!v.first_violation || trace.t[k] < v.first_violation->t))
        v.first_violation = Violation{trace.t[k], j, h[k]};
    }
  }
  for (std::size_t j = 0; j < net.size(); ++j) {
    const auto& st = trace.subsystems[j];
    v.state_min.emplace_back(st.n, std::numeric_limits<double>::infinity());
    v.state_max.emplace_back(st.n, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < st.h.size(); ++k)
      for (std::size_t i = 0; i < st.n; ++i) {
        v.state_min[j][i] = std::min(v.state_min[j][i], st.states[k * st.n + i]);
        v.state_max[j][i] = std::max(v.state_max[j][i], st.states[k * st.n + i]);
      }
  }
  for (const auto& c : trace.crossings) v.min_h[c.subsystem] = std::min(v.min_h[c.subsystem], c.h_mid);
  v.safe = std::all_of(v.min_h.begin(), v.min_h.end(), [](double m) { return m >= 0.0; });

  if (trace.t.size() >= 2) {
    const double dt = trace.t[1] - trace.t[0];
    const double t_end = trace.t.back();
    for (const auto& e : trace.events) {
      if (e.to != Location::Online) continue;
      const double deadline = e.t + indices[e.subsystem].phi + dt;
      if (deadline > t_end) continue;
      const auto& buf = trace.subsystems[e.subsystem].in_buffer;
      const auto first = std::lower_bound(trace.t.begin(), trace.t.end(), e.t);
      bool reached = false;
      for (auto it = first; it != trace.t.end() && *it <= deadline; ++it)
        if (buf[static_cast<std::size_t>(it - trace.t.begin())]) {
          reached = true;
          break;
        }
      if (!reached) ++v.missed_deadlines;
    }
    v.recovery_deadlines_met = v.missed_deadlines == 0;
  }
  return v;
}

void export_trace_csv(const HybridTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "t";
  for (std::size_t j = 0; j < trace.subsystems.size(); ++j) {
    const auto& s = trace.subsystems[j];
    const std::string id = std::to_string(j + 1);
    out << ",loc_" << id;
    for (std::size_t i = 0; i < s.n; ++i) out << ",x_" << id << '_' << i + 1;
    for (std::size_t i = 0; i < s.p; ++i) out << ",u_" << id << '_' << i + 1;
    out << ",h_" << id;
  }
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out << buf;
  };
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    put(trace.t[k]);
    for (const auto& s : trace.subsystems) {
      out << ',' << (s.location[k] == Location::Online ? 1 : 0);
      for (std::size_t i = 0; i < s.n; ++i) {
        out << ',';
        put(s.states[k * s.n + i]);
      }
      for (std::size_t i = 0; i < s.p; ++i) {
        out << ',';
        put(s.inputs[k * s.p + i]);
      }
      out << ',';
      put(s.h[k]);
    }
    out << '\n';
  }
  if (!out) throw Error("error while writing " + path.string());
}

std::vector<Point> default_initial_state(const Network& net, const OracleSettings& settings) {
  std::vector<Point> x0;
  for (const auto& s : net.subsystems()) x0.push_back(argmax_h(s, settings));
  return x0;
}

BatchResult simulate_batch(const Network& net, const std::vector<ResilienceIndex>& indices,
                           const std::vector<FaultSchedule>& schedules,
                           const AdversaryPolicy& adversary, double dt, double horizon,
                           const std::vector<Point>& x0, const BatchOptions& options) {
  for (const auto& s : schedules) validate_schedule(s, net, indices, horizon);
  BatchResult result;
  result.verdicts.resize(schedules.size());
  const long count = static_cast<long>(schedules.size());
  const int threads = options.workers > 0 ? options.workers : omp_get_max_threads();
  std::exception_ptr error;
  long error_at = count;

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long k = 0; k < count; ++k) {
    try {
      AdversaryPolicy policy = adversary;
      policy.seed = adversary.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(k + 1));
      const auto trace = simulate(net, indices, schedules[static_cast<std::size_t>(k)], policy,
                                  dt, horizon, x0);
      result.verdicts[static_cast<std::size_t>(k)] = check_trace_safety(trace, net, indices);
      if (options.csv_dir) {
        char name[32];
        std::snprintf(name, sizeof name, "trace_%04ld.csv", k);
        export_trace_csv(trace, *options.csv_dir / name);
      }
    } catch (...) {
#pragma omp critical(resil_batch_error)
      if (k < error_at) {
        error_at = k;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return result;
}

}  // namespace resil
