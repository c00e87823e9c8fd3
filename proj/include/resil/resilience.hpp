#pragma once

#include <optional>
#include <string>

#include "resil/oracle.hpp"
#include "resil/subsystem.hpp"

namespace resil {

/// Resilience index (d, tau, phi, eta): buffer depth in units of h, longest
/// tolerable offline stretch, online dwell / recovery deadline, and the drift
/// margin guaranteed at the buffer boundary.
struct ResilienceIndex {
  double d = 0.0;
  double tau = 1.0;
  double phi = 1.0;
  double eta = 0.0;

  /// Throws Error unless d, eta >= 0 and tau, phi > 0 (all finite).
  void validate() const;
  std::string str(int digits = 10) const;
};

enum class VerificationFailure { None, EmptyRegion };

struct VerificationReport {
  bool passed = false;
  double margin_offline = 0.0;     // min offline drift + d / tau
  double margin_recovery = 0.0;    // min recovery drift - d / phi (+inf when d = 0)
  double margin_invariance = 0.0;  // min invariance margin - eta
  double raw_offline = 0.0;
  double raw_recovery = 0.0;
  double raw_invariance = 0.0;
  std::optional<Extremum> worst_offline;
  std::optional<Extremum> worst_recovery;
  std::optional<Extremum> worst_invariance;
  VerificationFailure failure = VerificationFailure::None;
  std::string failure_detail;
};

/// Checks the three sufficient conditions for (d, tau, phi, eta) with the
/// linear class-K function alpha(s) = z s.
VerificationReport verify_index(const Subsystem& s, const ResilienceIndex& idx, double z,
                                const OracleSettings& settings);

struct IndexSearchOptions {
  double tau_max = 1e9;
  double phi_min = 1e-9;
  double eps = 0.1;
  double z = 1.0;
  /// Keep sweeping and return the feasible index with the largest tau.
  bool maximize_tau = false;
};

struct IndexSearchResult {
  std::optional<ResilienceIndex> index;
  double sup_h = 0.0;
  int candidates_tried = 0;
  // Margins of the last rejected candidate, for diagnosis.
  double last_d = 0.0;
  double last_offline_drift = 0.0;
  std::optional<double> last_recovery_drift;
  std::optional<double> last_invariance;
  std::string last_reason;
};

/// Sweeps d = 0, eps, 2 eps, ... while d <= sup h and returns the first d
/// whose directly solved (tau, phi, eta) form a verified index.
IndexSearchResult compute_index(const Subsystem& s, const IndexSearchOptions& options,
                                const OracleSettings& settings);

}  // namespace resil
