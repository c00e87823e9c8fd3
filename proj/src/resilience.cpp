#include "resil/resilience.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "resil/errors.hpp"

namespace resil {

void ResilienceIndex::validate() const {
  if (!std::isfinite(d) || d < 0.0) throw Error("index: d must be finite and >= 0");
  if (!std::isfinite(eta) || eta < 0.0) throw Error("index: eta must be finite and >= 0");
  if (!std::isfinite(tau) || tau <= 0.0) throw Error("index: tau must be finite and > 0");
  if (!std::isfinite(phi) || phi <= 0.0) throw Error("index: phi must be finite and > 0");
}

std::string ResilienceIndex::str(int digits) const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "(%.*g, %.*g, %.*g, %.*g)", digits, d, digits, tau, digits, phi,
                digits, eta);
  return buf;
}

VerificationReport verify_index(const Subsystem& s, const ResilienceIndex& idx, double z,
                                const OracleSettings& settings) {
  idx.validate();
  if (!(z > 0.0)) throw Error("verify_index needs z > 0");
  VerificationReport report;
  try {
    Extremum off = min_offline_drift(s, settings);
    report.raw_offline = off.value;
    report.margin_offline = off.value + idx.d / idx.tau;
    report.worst_offline = std::move(off);

    if (idx.d == 0.0) {
      report.raw_recovery = std::numeric_limits<double>::infinity();
      report.margin_recovery = std::numeric_limits<double>::infinity();
    } else {
      Extremum rec = min_recovery_drift(s, idx.d, settings);
      report.raw_recovery = rec.value;
      report.margin_recovery = rec.value - idx.d / idx.phi;
      report.worst_recovery = std::move(rec);
    }

    Extremum inv = min_invariance_margin(s, idx.d, z, settings);
    report.raw_invariance = inv.value;
    report.margin_invariance = inv.value - idx.eta;
    report.worst_invariance = std::move(inv);
  } catch (const EmptyRegion& e) {
    report.failure = VerificationFailure::EmptyRegion;
    report.failure_detail = e.what();
    report.passed = false;
    return report;
  }
  const double tol = -settings.margin_tolerance;
  report.passed = report.margin_offline >= tol && report.margin_recovery >= tol &&
                  report.margin_invariance >= tol;
  return report;
}

IndexSearchResult compute_index(const Subsystem& s, const IndexSearchOptions& options,
                                const OracleSettings& settings) {
  if (!(options.tau_max > 0.0)) throw Error("compute_index needs tau_max > 0");
  if (!(options.phi_min >= 0.0)) throw Error("compute_index needs phi_min >= 0");
  if (!(options.eps > 0.0)) throw Error("compute_index needs eps > 0");
  if (!(options.z > 0.0)) throw Error("compute_index needs z > 0");

  IndexSearchResult result;
  result.sup_h = sup_h(s, settings);
  const double m_off = min_offline_drift(s, settings).value;

  for (long k = 0;; ++k) {
    const double d = static_cast<double>(k) * options.eps;
    if (d > result.sup_h) break;
    ++result.candidates_tried;
    result.last_d = d;
    result.last_offline_drift = m_off;
    result.last_recovery_drift.reset();
    result.last_invariance.reset();

    const double tau = m_off >= 0.0 ? options.tau_max : std::min(options.tau_max, d / -m_off);
    if (!(tau > 0.0)) {
      result.last_reason = "offline drift is negative, so tau would be 0";
      continue;
    }

    double phi = options.phi_min;
    if (d > 0.0) {
      double m_rec = 0.0;
      try {
        m_rec = min_recovery_drift(s, d, settings).value;
      } catch (const EmptyRegion&) {
        result.last_reason = "recovery band is empty on the grid";
        continue;
      }
      result.last_recovery_drift = m_rec;
      if (!(m_rec > 0.0)) {
        result.last_reason = "closed-loop drift is not positive on the recovery band";
        continue;
      }
      phi = std::max(options.phi_min, d / m_rec);
    }
    if (!(phi > 0.0)) {
      result.last_reason = "phi would be 0 (raise phi_min)";
      continue;
    }

    double eta = 0.0;
    try {
      eta = min_invariance_margin(s, d, options.z, settings).value;
    } catch (const EmptyRegion&) {
      result.last_reason = "buffer set is empty on the grid";
      continue;
    }
    result.last_invariance = eta;
    if (!(eta >= 0.0)) {
      result.last_reason = "invariance margin is negative";
      continue;
    }

    ResilienceIndex idx{d, tau, phi, eta};
    if (!verify_index(s, idx, options.z, settings).passed) {
      result.last_reason = "candidate failed verification";
      continue;
    }
    if (!options.maximize_tau) {
      result.index = idx;
      return result;
    }
    if (!result.index || idx.tau > result.index->tau) result.index = idx;
  }
  return result;
}

}  // namespace resil
