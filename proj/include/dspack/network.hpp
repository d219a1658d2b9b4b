#pragma once

#include "dspack/optimizer.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dspack {

enum class OpKind { conv, depthwise_conv, pointwise_conv, fully_connected };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::conv: return "conv";
    case OpKind::depthwise_conv: return "depthwise_conv";
    case OpKind::pointwise_conv: return "pointwise_conv";
    case OpKind::fully_connected: return "fully_connected";
  }
  return "?";
}

inline OpKind op_kind_from_string(const std::string& s) {
  if (s == "conv") return OpKind::conv;
  if (s == "depthwise_conv") return OpKind::depthwise_conv;
  if (s == "pointwise_conv") return OpKind::pointwise_conv;
  if (s == "fully_connected") return OpKind::fully_connected;
  throw SchemaError("unknown op_kind '" + s + "'");
}

struct BitPair {
  int w_b = 8;
  int a_b = 8;
  bool operator==(const BitPair&) const = default;
};

struct LayerSpec {
  std::string name;
  OpKind op_kind = OpKind::conv;
  std::int64_t c_in = 1;
  std::int64_t c_out = 1;
  int k_h = 1;
  int k_w = 1;
  std::int64_t h_out = 1;
  std::int64_t w_out = 1;
  std::int64_t groups = 1;
  std::optional<BitPair> frozen_bits;

  KernelShape kernel_shape() const {
    return op_kind == OpKind::fully_connected ? KernelShape{1, 1} : KernelShape{k_h, k_w};
  }

  void check() const {
    if (name.empty()) throw SchemaError("layer without a name");
    if (c_in < 1 || c_out < 1 || k_h < 1 || k_w < 1 || h_out < 1 || w_out < 1 || groups < 1)
      throw SchemaError("layer " + name + ": dimensions must be >= 1");
    if (c_in % groups || c_out % groups) throw SchemaError("layer " + name + ": groups must divide C_in and C_out");
    if (op_kind == OpKind::depthwise_conv && groups != c_in)
      throw SchemaError("layer " + name + ": depthwise conv needs groups == C_in");
    if (op_kind == OpKind::pointwise_conv && (k_h != 1 || k_w != 1))
      throw SchemaError("layer " + name + ": pointwise conv needs a 1x1 kernel");
  }
};

using NetworkSpec = std::vector<LayerSpec>;
using BitwidthAssignment = std::map<std::string, BitPair>;

/// Multiplications of one layer (convolution MACs only).
inline std::int64_t op_mul(const LayerSpec& l) {
  if (l.op_kind == OpKind::fully_connected) return l.c_in * l.c_out;
  return l.h_out * l.w_out * l.k_h * l.k_w * l.c_in * l.c_out / l.groups;
}

/// Tables keyed by kernel shape; each layer reads the table for its own shape.
class TableSet {
 public:
  void add(LookupTable t) {
    const auto shape = t.kernel_shape;
    if (!tables_.emplace(shape, std::move(t)).second)
      throw SchemaError("two lookup tables for kernel " + shape.str());
  }
  const LookupTable& for_shape(KernelShape s) const {
    auto it = tables_.find(s);
    if (it == tables_.end()) throw DomainError("no lookup table for kernel " + s.str());
    return it->second;
  }
  bool empty() const { return tables_.empty(); }

 private:
  std::map<KernelShape, LookupTable> tables_;
};

/// Bit pair used for a layer: its frozen widths, else the assignment's.
inline BitPair layer_bits(const LayerSpec& l, const BitwidthAssignment& bits) {
  auto it = bits.find(l.name);
  if (l.frozen_bits) {
    if (it != bits.end() && !(it->second == *l.frozen_bits))
      throw SchemaError("layer " + l.name + " is frozen at different bit-widths");
    return *l.frozen_bits;
  }
  if (it == bits.end()) throw SchemaError("no bit-widths assigned to layer " + l.name);
  return it->second;
}

inline void check_assignment(const NetworkSpec& net, const BitwidthAssignment& bits) {
  for (const auto& [name, pair] : bits) {
    bool found = false;
    for (const auto& l : net) found = found || l.name == name;
    if (!found) throw SchemaError("assignment names unknown layer '" + name + "'");
  }
}

struct LayerOps {
  std::string name;
  std::int64_t op_mul = 0;
  BitPair bits;
  Rational t_mul{1};
  Rational op_dsp{0};
};

/// Op_dsp^l = Op_mul^l / T_mul^l(w_b^l, a_b^l) for every layer.
inline std::vector<LayerOps> layer_op_dsp(const NetworkSpec& net, const BitwidthAssignment& bits,
                                          const TableSet& tables) {
  check_assignment(net, bits);
  std::vector<LayerOps> out;
  for (const auto& l : net) {
    LayerOps r;
    r.name = l.name;
    r.op_mul = op_mul(l);
    r.bits = layer_bits(l, bits);
    r.t_mul = tables.for_shape(l.kernel_shape()).t_mul(r.bits.w_b, r.bits.a_b);
    r.op_dsp = Rational(r.op_mul) / r.t_mul;
    out.push_back(std::move(r));
  }
  return out;
}

/// Total DSP operations of a network under a bit-width assignment.
inline Rational op_dsp(const NetworkSpec& net, const BitwidthAssignment& bits, const TableSet& tables) {
  Rational total{0};
  for (const auto& l : layer_op_dsp(net, bits, tables)) total += l.op_dsp;
  return total;
}

inline json to_json(const LayerSpec& l) {
  json j{{"name", l.name}, {"op_kind", to_string(l.op_kind)}, {"c_in", l.c_in},   {"c_out", l.c_out},
         {"k_h", l.k_h},   {"k_w", l.k_w},                     {"h_out", l.h_out}, {"w_out", l.w_out},
         {"groups", l.groups}};
  if (l.frozen_bits) j["frozen_bits"] = {{"w_b", l.frozen_bits->w_b}, {"a_b", l.frozen_bits->a_b}};
  return j;
}

inline BitPair bit_pair_from_json(const json& j) {
  return BitPair{require_field<int>(j, "w_b"), require_field<int>(j, "a_b")};
}

inline NetworkSpec network_from_json(const json& j) {
  if (require_field<int>(j, "version") != 1) throw SchemaError("unsupported network version");
  if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty())
    throw SchemaError("network has no layers");
  NetworkSpec net;
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.name = require_field<std::string>(lj, "name");
    l.op_kind = op_kind_from_string(require_field<std::string>(lj, "op_kind"));
    l.c_in = require_field<std::int64_t>(lj, "c_in");
    l.c_out = require_field<std::int64_t>(lj, "c_out");
    l.k_h = lj.value("k_h", 1);
    l.k_w = lj.value("k_w", 1);
    l.h_out = lj.value("h_out", std::int64_t{1});
    l.w_out = lj.value("w_out", std::int64_t{1});
    l.groups = lj.value("groups", l.op_kind == OpKind::depthwise_conv ? l.c_in : std::int64_t{1});
    if (lj.contains("frozen_bits")) l.frozen_bits = bit_pair_from_json(lj.at("frozen_bits"));
    l.check();
    for (const auto& other : net)
      if (other.name == l.name) throw SchemaError("duplicate layer name '" + l.name + "'");
    net.push_back(std::move(l));
  }
  return net;
}

inline json to_json(const NetworkSpec& net) {
  json layers = json::array();
  for (const auto& l : net) layers.push_back(to_json(l));
  return json{{"version", 1}, {"layers", layers}};
}

inline BitwidthAssignment assignment_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("assignment must map layer names to {w_b, a_b}");
  BitwidthAssignment a;
  for (const auto& [name, v] : j.items()) a[name] = bit_pair_from_json(v);
  return a;
}

inline json to_json(const BitwidthAssignment& a) {
  json j = json::object();
  for (const auto& [name, b] : a) j[name] = {{"w_b", b.w_b}, {"a_b", b.a_b}};
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

}  // namespace dspack
