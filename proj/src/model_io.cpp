#include "resil/model_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "resil/errors.hpp"

namespace resil {

namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ModelError(where + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ModelError(where + " is missing \"" + key + "\"");
  return *it;
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ModelError(where + " must be a string");
  return v.get<std::string>();
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ModelError(where + " must be a number");
  return v.get<double>();
}

std::vector<std::string> as_strings(const json& v, const std::string& where) {
  if (!v.is_array()) throw ModelError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_string(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

Interval as_interval(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) throw ModelError(where + " must be [lo, hi]");
  return {as_number(v[0], where + "[0]"), as_number(v[1], where + "[1]")};
}

std::vector<Interval> as_intervals(const json& v, const std::string& where) {
  if (!v.is_array()) throw ModelError(where + " must be an array of [lo, hi] pairs");
  std::vector<Interval> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_interval(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

SubsystemSource read_subsystem(const json& s, const std::string& where) {
  SubsystemSource src;
  src.name = as_string(field(s, "name", where), where + ".name");
  src.states = as_strings(field(s, "states", where), where + ".states");
  src.inputs = as_strings(field(s, "inputs", where), where + ".inputs");
  src.f = as_strings(field(s, "f", where), where + ".f");
  const json& g = field(s, "g", where);
  if (!g.is_array()) throw ModelError(where + ".g must be an array of rows");
  for (std::size_t i = 0; i < g.size(); ++i)
    src.g.push_back(as_strings(g[i], where + ".g[" + std::to_string(i) + "]"));
  src.h = as_string(field(s, "h", where), where + ".h");
  src.mu = as_strings(field(s, "mu", where), where + ".mu");
  if (auto it = s.find("mu_saturation"); it != s.end()) {
    if (!it->is_array()) throw ModelError(where + ".mu_saturation must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& b = (*it)[i];
      if (b.is_null())
        src.mu_saturation.emplace_back();
      else
        src.mu_saturation.emplace_back(
            as_interval(b, where + ".mu_saturation[" + std::to_string(i) + "]"));
    }
  }
  src.state_box = as_intervals(field(s, "state_box", where), where + ".state_box");
  src.input_box = as_intervals(field(s, "input_box", where), where + ".input_box");
  return src;
}

}  // namespace

Model parse_model(std::string_view text) {
  const json doc = parse_json(text, "model file");
  if (!doc.is_object()) throw ModelError("model file must be a JSON object");
  const double z = doc.contains("alpha_z") ? as_number(doc["alpha_z"], "alpha_z") : 1.0;
  if (!(z > 0.0)) throw ModelError("alpha_z must be positive");

  const json& subs = field(doc, "subsystems", "model file");
  if (!subs.is_array() || subs.empty())
    throw ModelError("\"subsystems\" must be a non-empty array");
  std::vector<Subsystem> systems;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const std::string where = "subsystems[" + std::to_string(i) + "]";
    const SubsystemSource src = read_subsystem(subs[i], where);
    try {
      systems.emplace_back(src);
    } catch (const Error& e) {
      throw ModelError(where + " ('" + src.name + "'): " + e.what());
    }
  }

  std::vector<CouplingSource> couplings;
  if (auto it = doc.find("couplings"); it != doc.end()) {
    if (!it->is_array()) throw ModelError("\"couplings\" must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "couplings[" + std::to_string(i) + "]";
      const json& c = (*it)[i];
      CouplingSource src;
      src.from = as_string(field(c, "from", where), where + ".from");
      src.to = as_string(field(c, "to", where), where + ".to");
      src.w = as_strings(field(c, "w", where), where + ".w");
      if (auto cv = c.find("conservative"); cv != c.end()) {
        if (!cv->is_boolean()) throw ModelError(where + ".conservative must be true or false");
        src.conservative = cv->get<bool>();
      }
      couplings.push_back(std::move(src));
    }
  }

  std::string reference;
  if (auto it = doc.find("reference_indices"); it != doc.end()) reference = it->dump();

  try {
    return Model{z, Network(std::move(systems), couplings), std::move(reference)};
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(e.what());
  }
}

Model load_model(const std::filesystem::path& path) {
  try {
    return parse_model(read_file(path));
  } catch (const ModelError& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
}

IndexMap parse_indices(std::string_view text) {
  const json doc = parse_json(text, "index file");
  if (!doc.is_object()) throw ModelError("index file must map subsystem names to indices");
  IndexMap out;
  for (const auto& [name, v] : doc.items()) {
    const std::string where = "index \"" + name + "\"";
    ResilienceIndex idx;
    idx.d = as_number(field(v, "d", where), where + ".d");
    idx.tau = as_number(field(v, "tau", where), where + ".tau");
    idx.phi = as_number(field(v, "phi", where), where + ".phi");
    idx.eta = as_number(field(v, "eta", where), where + ".eta");
    try {
      idx.validate();
    } catch (const Error& e) {
      throw ModelError(where + ": " + e.what());
    }
    out.emplace(name, idx);
  }
  return out;
}

IndexMap load_indices(const std::filesystem::path& path) {
  try {
    return parse_indices(read_file(path));
  } catch (const ModelError& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
}

std::string dump_indices(const IndexMap& indices) {
  json doc = json::object();
  for (const auto& [name, idx] : indices)
    doc[name] = {{"d", idx.d}, {"tau", idx.tau}, {"phi", idx.phi}, {"eta", idx.eta}};
  return doc.dump(2) + "\n";
}

void save_indices(const IndexMap& indices, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_indices(indices);
  if (!out) throw Error("error while writing " + path.string());
}

std::vector<ResilienceIndex> indices_in_order(const Network& net, const IndexMap& indices) {
  for (const auto& [name, idx] : indices) net.index_of(name);
  std::vector<ResilienceIndex> out;
  for (const auto& s : net.subsystems()) {
    auto it = indices.find(s.name());
    if (it == indices.end()) throw ModelError("no index given for subsystem '" + s.name() + "'");
    out.push_back(it->second);
  }
  return out;
}

ResilienceIndex parse_index_tuple(std::string_view text) {
  double v[4];
  std::size_t pos = 0;
  for (int k = 0; k < 4; ++k) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '(')) ++pos;
    const char* first = text.data() + pos;
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v[k]);
    if (ec != std::errc()) throw ModelError("index must look like \"d,tau,phi,eta\"");
    pos = static_cast<std::size_t>(ptr - text.data());
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == ')')) ++pos;
    if (k < 3) {
      if (pos >= text.size() || text[pos] != ',')
        throw ModelError("index must look like \"d,tau,phi,eta\"");
      ++pos;
    }
  }
  if (pos != text.size()) throw ModelError("trailing text after index tuple");
  ResilienceIndex idx{v[0], v[1], v[2], v[3]};
  try {
    idx.validate();
  } catch (const Error& e) {
    throw ModelError(e.what());
  }
  return idx;
}

}  // namespace resil
