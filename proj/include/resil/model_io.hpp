#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "resil/interconnect.hpp"
#include "resil/resilience.hpp"

namespace resil {

struct Model {
  double alpha_z = 1.0;
  Network network;
  /// Optional free-form "reference_indices" block, kept verbatim as JSON text.
  std::string reference_indices;
};

/// Parses a model document. Every error is a ModelError naming the offending
/// field (e.g. "subsystems[1].state_box[0]").
Model parse_model(std::string_view text);
Model load_model(const std::filesystem::path& path);

/// Index files map subsystem names to {d, tau, phi, eta}.
IndexMap parse_indices(std::string_view text);
IndexMap load_indices(const std::filesystem::path& path);
std::string dump_indices(const IndexMap& indices);
void save_indices(const IndexMap& indices, const std::filesystem::path& path);

/// Indices in network order; throws ModelError if one is missing or unknown.
std::vector<ResilienceIndex> indices_in_order(const Network& net, const IndexMap& indices);

/// "d,tau,phi,eta"
ResilienceIndex parse_index_tuple(std::string_view text);

}  // namespace resil
