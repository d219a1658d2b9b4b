#pragma once

#include "dspack/common.hpp"

#include <fstream>
#include <string>

namespace dspack {

/// A hard multiplier primitive: two input ports and an accumulator.
///
/// Ports are modeled as plain bit fields. A port holding unsigned lanes
/// accepts any value below 2^width; a port holding signed lanes accepts the
/// width-bit two's complement range.
struct DspProfile {
  std::string name = "dsp48e2";
  int port_small = 18;
  int port_large = 27;
  int accumulator = 48;

  bool operator==(const DspProfile&) const = default;

  void check() const {
    if (port_small <= 0 || port_small > port_large)
      throw SchemaError("profile requires 0 < port_small <= port_large");
    if (accumulator < port_small + port_large)
      throw SchemaError("profile requires accumulator >= port_small + port_large");
    // Simulation emulates the accumulator in 64-bit integers.
    if (accumulator > 62) throw SchemaError("accumulator wider than 62 bits is not supported");
  }

  int port(bool large) const { return large ? port_large : port_small; }
};

inline DspProfile dsp48e2() { return DspProfile{}; }

inline json to_json(const DspProfile& p) {
  return json{{"name", p.name},
              {"port_small", p.port_small},
              {"port_large", p.port_large},
              {"accumulator", p.accumulator}};
}

inline DspProfile profile_from_json(const json& j) {
  DspProfile p;
  p.name = require_field<std::string>(j, "name");
  p.port_small = require_field<int>(j, "port_small");
  p.port_large = require_field<int>(j, "port_large");
  p.accumulator = require_field<int>(j, "accumulator");
  p.check();
  return p;
}

// "dsp48e2" or a path to a profile JSON document.
inline DspProfile load_profile(const std::string& name_or_path) {
  if (name_or_path.empty() || name_or_path == "dsp48e2") return dsp48e2();
  std::ifstream in(name_or_path);
  if (!in) throw SchemaError("unknown profile '" + name_or_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("profile " + name_or_path + ": " + e.what());
  }
  return profile_from_json(j);
}

/// Operand signedness of a packing problem.
struct Signedness {
  bool weights = false;
  bool activations = false;

  bool operator==(const Signedness&) const = default;
  bool product() const { return weights || activations; }
};

inline json to_json(const Signedness& s) {
  return json{{"weights", s.weights ? "signed" : "unsigned"},
              {"activations", s.activations ? "signed" : "unsigned"}};
}

inline Signedness signedness_from_json(const json& j) {
  auto parse = [](const std::string& v) {
    if (v == "signed") return true;
    if (v == "unsigned") return false;
    throw SchemaError("signedness must be 'signed' or 'unsigned'");
  };
  return Signedness{parse(require_field<std::string>(j, "weights")),
                    parse(require_field<std::string>(j, "activations"))};
}

}  // namespace dspack
