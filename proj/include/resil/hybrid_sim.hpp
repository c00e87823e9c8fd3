#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "resil/interconnect.hpp"
#include "resil/resilience.hpp"

namespace resil {

/// Half-open offline stretch [start, end).
struct OfflineInterval {
  double start = 0.0;
  double end = 0.0;
};

/// Offline intervals per subsystem (network order), sorted and disjoint.
struct FaultSchedule {
  std::vector<std::vector<OfflineInterval>> offline;

  bool offline_at(std::size_t j, double t) const;
};

enum class AdversaryKind {
  ConstantExtreme,  // worst vertex at onset, held for the whole interval
  BangBang,         // worst vertex re-chosen at every step
  RandomVertex,     // seeded random vertex at every step
};

struct AdversaryPolicy {
  AdversaryKind kind = AdversaryKind::BangBang;
  std::uint64_t seed = 0;
};

enum class Location : std::uint8_t { Offline = 0, Online = 1 };

struct SubsystemTrace {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> states;  // n per sample
  std::vector<double> inputs;  // p per sample
  std::vector<double> h;
  std::vector<Location> location;
  std::vector<std::uint8_t> in_buffer;  // h >= d at the sample
};

struct SwitchEvent {
  double t = 0.0;
  std::size_t subsystem = 0;
  Location from = Location::Online;
  Location to = Location::Offline;
};

/// A sign change of h between two samples, located by one bisection.
struct Crossing {
  std::size_t subsystem = 0;
  double t_lo = 0.0;  // crossing lies in [t_lo, t_hi]
  double t_hi = 0.0;
  double h_mid = 0.0;
};

struct HybridTrace {
  std::vector<double> t;
  std::vector<SubsystemTrace> subsystems;
  std::vector<SwitchEvent> events;
  std::vector<Crossing> crossings;

  std::size_t samples() const { return t.size(); }
};

struct Violation {
  double t = 0.0;
  std::size_t subsystem = 0;
  double h = 0.0;
};

struct SafetyVerdict {
  bool safe = true;
  std::optional<Violation> first_violation;
  std::vector<double> min_h;
  std::vector<Point> state_min;  // per subsystem, over all samples
  std::vector<Point> state_max;
  bool recovery_deadlines_met = true;
  int missed_deadlines = 0;
};

/// Throws ScheduleError unless every interval is ordered, inside
/// [0, horizon], at most tau_j long, and separated by at least phi_j.
void validate_schedule(const FaultSchedule& schedule, const Network& net,
                       const std::vector<ResilienceIndex>& indices, double horizon);

/// `count` admissible schedules. Offline lengths are uniform on (0, tau_j],
/// online gaps uniform on [phi_j, 3 phi_j); schedule k depends only on
/// (seed, k).
std::vector<FaultSchedule> generate_schedule(std::uint64_t seed, double horizon,
                                             const std::vector<ResilienceIndex>& indices,
                                             std::size_t count);

/// Fixed-step RK4 over the coupled network. Online subsystems apply their
/// saturated safe law at every stage; offline ones apply the adversary input,
/// held over each integration sub-step. Steps are split at schedule
/// boundaries so locations switch exactly on time.
HybridTrace simulate(const Network& net, const std::vector<ResilienceIndex>& indices,
                     const FaultSchedule& schedule, const AdversaryPolicy& adversary, double dt,
                     double horizon, const std::vector<Point>& x0);

SafetyVerdict check_trace_safety(const HybridTrace& trace, const Network& net,
                                 const std::vector<ResilienceIndex>& indices);

/// Columns: t, then per subsystem j (1-based) loc_j, x_j_1..x_j_n,
/// u_j_1..u_j_p, h_j; 9 significant digits.
void export_trace_csv(const HybridTrace& trace, const std::filesystem::path& path);

/// Deepest interior state of each subsystem (grid argmax of h).
std::vector<Point> default_initial_state(const Network& net, const OracleSettings& settings);

struct BatchOptions {
  int workers = 0;
  std::optional<std::filesystem::path> csv_dir;  // trace_0000.csv, ...
};

struct BatchResult {
  std::vector<SafetyVerdict> verdicts;
};

/// Runs every schedule; adversary randomness for schedule k is seeded from
/// (adversary.seed, k), so results do not depend on the worker count.
BatchResult simulate_batch(const Network& net, const std::vector<ResilienceIndex>& indices,
                           const std::vector<FaultSchedule>& schedules,
                           const AdversaryPolicy& adversary, double dt, double horizon,
                           const std::vector<Point>& x0, const BatchOptions& options);

}  // namespace resil
