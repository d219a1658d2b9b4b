#pragma once

// Constraint mathematics for packing several low-width multiplications into
// one wide multiplier.
//
// Kernel packing places N_d independent d-operands on one port and N_e
// e-operands on the other; the wide product holds all N_d*N_e pairwise
// products at stride p_b. Filter packing encodes a K_p-tap filter chunk and
// an N_p-element sequence chunk as polynomials evaluated at 2^p_b, so the
// wide product holds the K_p+N_p-1 convolution coefficients.

#include "dspack/common.hpp"
#include "dspack/profile.hpp"

#include <algorithm>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace dspack {

struct KernelPackingConfig {
  int d_b = 1;
  int e_b = 1;
  int g_b = 0;  // -1 only when overpacked
  int n_d = 1;
  int n_e = 1;
  bool overpacked = false;
  bool port_swap = false;     // false: d-operands on the small port
  bool weights_on_d = true;   // operand role of the d-port

  bool operator==(const KernelPackingConfig&) const = default;

  int p_b() const { return d_b + e_b + g_b; }
  int lanes() const { return n_d * n_e; }
  int lane_width() const { return d_b + e_b; }
};

struct FilterPackingConfig {
  int w_b = 1;  // full weight width, before any separation
  int a_b = 1;
  int g_b = 0;
  int k_p = 1;
  int n_p = 1;
  bool filter_on_large_port = true;
  bool separated = false;
  bool overpacked = false;

  bool operator==(const FilterPackingConfig&) const = default;

  // Width of the weight field actually placed on the port.
  int field_w_b() const { return separated ? (w_b + 1) / 2 : w_b; }
  int p_b() const { return a_b + field_w_b() + g_b; }
  int lanes() const { return k_p + n_p - 1; }
  int required_guard() const { return ceil_log2(std::min(k_p, n_p)); }
};

enum class Strategy { kernel, filter };

inline const char* to_string(Strategy s) { return s == Strategy::kernel ? "kernel" : "filter"; }

struct PackingChoice {
  Strategy strategy = Strategy::kernel;
  std::variant<KernelPackingConfig, FilterPackingConfig> config;
  Rational t_mul{1};
  int e_g = 0;
  int correction_gates = 0;

  const KernelPackingConfig& kernel() const { return std::get<KernelPackingConfig>(config); }
  const FilterPackingConfig& filter() const { return std::get<FilterPackingConfig>(config); }
  bool overpacked() const {
    return strategy == Strategy::kernel ? kernel().overpacked : filter().overpacked;
  }
  bool separated() const { return strategy == Strategy::filter && filter().separated; }
  int p_b() const { return strategy == Strategy::kernel ? kernel().p_b() : filter().p_b(); }
  int lanes() const { return strategy == Strategy::kernel ? kernel().lanes() : filter().lanes(); }
};

/// Sequence length used for filter-packing throughput. `generic` assumes the
/// sequence is a multiple of N_p.
struct SeqLen {
  std::optional<int> n;

  static SeqLen generic() { return {}; }
  static SeqLen exact(int n) { return SeqLen{n}; }
  bool is_generic() const { return !n.has_value(); }
};

namespace detail {

// Does a word of `lanes` fields, each `width` bits at `stride`, fit a port?
inline bool fits_port(int lanes, int width, std::int64_t stride, bool is_signed, int port_bits) {
  if (lanes < 1 || width < 1) return false;
  if (lanes > 1 && stride < width) return false;
  const std::int64_t span = (lanes - 1) * stride + width;
  if (span > port_bits + 1) return false;
  if (!is_signed) return span <= port_bits;
  // Signed lanes are sign-extended and summed, so the word range is the sum of
  // the per-lane extremes.
  std::int64_t lo = 0, hi = 0;
  for (int i = 0; i < lanes; ++i) {
    lo += -(std::int64_t{1} << (width - 1)) << (i * stride);
    hi += ((std::int64_t{1} << (width - 1)) - 1) << (i * stride);
  }
  return lo >= -(std::int64_t{1} << (port_bits - 1)) && hi <= (std::int64_t{1} << (port_bits - 1)) - 1;
}

inline bool fits_accumulator(int lanes, int p_b, bool overpacked, int accumulator) {
  return std::int64_t{lanes} * p_b + (overpacked ? 1 : 0) <= accumulator;
}

}  // namespace detail

inline bool validate_kernel(const KernelPackingConfig& c, const DspProfile& profile,
                            Signedness sign = {}) {
  if (c.d_b < 1 || c.e_b < 1 || c.n_d < 1 || c.n_e < 1) return false;
  if (c.overpacked) {
    if (c.g_b != -1 || c.lanes() < 2) return false;
  } else if (c.g_b < 0) {
    return false;
  }
  const int p = c.p_b();
  if (p < 1) return false;
  const bool d_signed = c.weights_on_d ? sign.weights : sign.activations;
  const bool e_signed = c.weights_on_d ? sign.activations : sign.weights;
  const int d_port = profile.port(c.port_swap);
  const int e_port = profile.port(!c.port_swap);
  return detail::fits_port(c.n_d, c.d_b, p, d_signed, d_port) &&
         detail::fits_port(c.n_e, c.e_b, std::int64_t{c.n_d} * p, e_signed, e_port) &&
         detail::fits_accumulator(c.lanes(), p, c.overpacked, profile.accumulator);
}

inline bool validate_filter(const FilterPackingConfig& c, const DspProfile& profile,
                            Signedness sign = {}) {
  if (c.w_b < 1 || c.a_b < 1 || c.k_p < 1 || c.n_p < 1) return false;
  if (c.separated && c.w_b < 2) return false;
  const int need = c.required_guard();
  if (c.overpacked) {
    if (c.g_b != need - 1 || c.lanes() < 2) return false;
  } else if (c.g_b < need) {
    return false;
  }
  const int p = c.p_b();
  if (p < 1) return false;
  const int w_port = profile.port(c.filter_on_large_port);
  const int a_port = profile.port(!c.filter_on_large_port);
  bool weights_fit;
  if (c.separated) {
    // Low half is unsigned; high half keeps the operand's signedness.
    const int lo = c.field_w_b();
    const int hi = c.w_b - lo;
    weights_fit = detail::fits_port(c.k_p, lo, p, false, w_port) &&
                  detail::fits_port(c.k_p, hi, p, sign.weights, w_port);
  } else {
    weights_fit = detail::fits_port(c.k_p, c.w_b, p, sign.weights, w_port);
  }
  return weights_fit && detail::fits_port(c.n_p, c.a_b, p, sign.activations, a_port) &&
         detail::fits_accumulator(c.lanes(), p, c.overpacked, profile.accumulator);
}

/// Effective multiplications per wide multiply. Filter packing pays for the
/// rounding-up of the sub-task division; separation halves the count.
inline Rational throughput(const KernelPackingConfig& c) { return Rational(c.lanes()); }

inline Rational throughput(const FilterPackingConfig& c, int k, SeqLen n) {
  if (k < 1 || (n.n && *n.n < 1)) throw std::invalid_argument("filter throughput needs K, N >= 1");
  Rational t;
  if (n.is_generic()) {
    t = Rational(std::int64_t{k} * c.n_p, ceil_div(k, c.k_p));
  } else {
    t = Rational(std::int64_t{k} * *n.n, ceil_div(k, c.k_p) * ceil_div(*n.n, c.n_p));
  }
  return c.separated ? t / 2 : t;
}

inline Rational throughput(const PackingChoice& choice, int k, SeqLen n) {
  return choice.strategy == Strategy::kernel ? throughput(choice.kernel())
                                             : throughput(choice.filter(), k, n);
}

// Overpacked words have no headroom left for accumulation.
inline int extra_guard_bits(const KernelPackingConfig& c) { return c.overpacked ? 0 : c.g_b; }
inline int extra_guard_bits(const FilterPackingConfig& c) {
  return c.overpacked ? 0 : c.g_b - c.required_guard();
}
inline int extra_guard_bits(const PackingChoice& choice) {
  return choice.strategy == Strategy::kernel ? extra_guard_bits(choice.kernel())
                                             : extra_guard_bits(choice.filter());
}

/// Gate count of the overpacking correction network. Per overlapped boundary
/// whose high lane sums m products: m ANDs and m-1 XORs rebuild the high
/// lane's LSB, one XOR fixes the low lane's MSB, one XOR forms the
/// compensation bit and one incrementer applies it.
inline int correction_gates(const KernelPackingConfig& c) {
  return c.overpacked ? 5 * (c.lanes() - 1) : 0;
}

inline int correction_gates(const FilterPackingConfig& c) {
  if (!c.overpacked) return 0;
  int gates = 0;
  for (int lane = 1; lane < c.lanes(); ++lane) {
    const int m = std::min({lane, c.k_p - 1, c.n_p - 1, c.lanes() - 1 - lane}) + 1;
    gates += 2 * m + 3;
  }
  return c.separated ? 2 * gates : gates;
}

inline PackingChoice make_choice(const KernelPackingConfig& c) {
  return PackingChoice{Strategy::kernel, c, throughput(c), extra_guard_bits(c), correction_gates(c)};
}

inline PackingChoice make_choice(const FilterPackingConfig& c, int k, SeqLen n) {
  return PackingChoice{Strategy::filter, c, throughput(c, k, n), extra_guard_bits(c),
                       correction_gates(c)};
}

/// Split a w_b-bit operand into (high, low) widths; the low half keeps the
/// larger share and is always unsigned.
inline std::pair<int, int> separate_operand(int w_b) {
  if (w_b < 2) throw std::invalid_argument("operand separation needs at least 2 bits");
  const int lo = (w_b + 1) / 2;
  return {w_b - lo, lo};
}

struct EnumerateOptions {
  bool allow_overpack = false;
  bool allow_separation = false;
  Signedness sign{};
};

/// Every valid kernel- and filter-packing configuration for one bit-width
/// pair. `k` is the 1-D filter length (kernel width), `n` the sequence length.
///
/// Counts are bounded by port_large and g_b by port_large, so the sequence is
/// finite. Validity is monotone in g_b and in each count, which lets the
/// loops stop at the first failure.
inline std::vector<PackingChoice> enumerate_configs(int w_b, int a_b, int k, SeqLen n,
                                                    const DspProfile& profile,
                                                    const EnumerateOptions& opt = {}) {
  std::vector<PackingChoice> out;
  const int bound = profile.port_large;
  if (w_b < 1 || a_b < 1 || w_b > bound || a_b > bound) return out;

  for (bool weights_on_d : {true, false}) {
    for (bool port_swap : {false, true}) {
      KernelPackingConfig c;
      c.d_b = weights_on_d ? w_b : a_b;
      c.e_b = weights_on_d ? a_b : w_b;
      c.weights_on_d = weights_on_d;
      c.port_swap = port_swap;
      auto emit_all_guards = [&](int n_d, int n_e) {
        bool any = false;
        c.n_d = n_d;
        c.n_e = n_e;
        if (opt.allow_overpack && n_d * n_e >= 2) {
          c.g_b = -1;
          c.overpacked = true;
          if (validate_kernel(c, profile, opt.sign)) {
            out.push_back(make_choice(c));
            any = true;
          }
        }
        c.overpacked = false;
        for (c.g_b = 0; c.g_b <= bound; ++c.g_b) {
          if (!validate_kernel(c, profile, opt.sign)) break;
          out.push_back(make_choice(c));
          any = true;
        }
        return any;
      };
      for (int n_d = 1; n_d <= bound; ++n_d) {
        if (!emit_all_guards(n_d, 1)) break;
        for (int n_e = 2; n_e <= bound; ++n_e)
          if (!emit_all_guards(n_d, n_e)) break;
      }
    }
  }

  for (bool on_large : {true, false}) {
    for (bool separated : {false, true}) {
      if (separated && (!opt.allow_separation || w_b < 2)) continue;
      FilterPackingConfig c;
      c.w_b = w_b;
      c.a_b = a_b;
      c.filter_on_large_port = on_large;
      c.separated = separated;
      auto emit_all_guards = [&](int k_p, int n_p) {
        bool any = false;
        c.k_p = k_p;
        c.n_p = n_p;
        const int need = c.required_guard();
        if (opt.allow_overpack && c.lanes() >= 2) {
          c.g_b = need - 1;
          c.overpacked = true;
          if (validate_filter(c, profile, opt.sign)) {
            out.push_back(make_choice(c, k, n));
            any = true;
          }
        }
        c.overpacked = false;
        for (c.g_b = need; c.g_b <= bound; ++c.g_b) {
          if (!validate_filter(c, profile, opt.sign)) break;
          out.push_back(make_choice(c, k, n));
          any = true;
        }
        return any;
      };
      for (int k_p = 1; k_p <= bound; ++k_p) {
        if (!emit_all_guards(k_p, 1)) break;
        for (int n_p = 2; n_p <= bound; ++n_p)
          if (!emit_all_guards(k_p, n_p)) break;
      }
    }
  }
  return out;
}

inline json to_json(const PackingChoice& choice) {
  json params;
  if (choice.strategy == Strategy::kernel) {
    const auto& c = choice.kernel();
    params = json{{"d_b", c.d_b},         {"e_b", c.e_b},         {"g_b", c.g_b},
                  {"n_d", c.n_d},         {"n_e", c.n_e},         {"port_swap", c.port_swap},
                  {"weights_on_d", c.weights_on_d}};
  } else {
    const auto& c = choice.filter();
    params = json{{"w_b", c.w_b}, {"a_b", c.a_b}, {"g_b", c.g_b}, {"k_p", c.k_p}, {"n_p", c.n_p},
                  {"filter_on_large_port", c.filter_on_large_port}};
  }
  json j{{"strategy", to_string(choice.strategy)},
         {"params", params},
         {"t_mul", to_json(choice.t_mul)},
         {"e_g", choice.e_g},
         {"overpacked", choice.overpacked()},
         {"separated", choice.separated()},
         {"correction_gates", choice.correction_gates}};
  // Separation stacked on overpacking is an untested-in-hardware combination;
  // it is flagged even though it passes bit-exact verification.
  if (choice.overpacked() && choice.separated()) j["experimental"] = "overpack+separation";
  return j;
}

/// Rebuild a choice from its document and re-derive every metric. Stored
/// metrics that disagree with the recomputation, or a config that fails its
/// validator, are rejected.
inline PackingChoice choice_from_json(const json& j, int k, SeqLen n, const DspProfile& profile,
                                      Signedness sign) {
  const auto strategy = require_field<std::string>(j, "strategy");
  const auto& params = j.contains("params") ? j.at("params") : throw SchemaError("missing field 'params'");
  PackingChoice choice;
  if (strategy == "kernel") {
    KernelPackingConfig c;
    c.d_b = require_field<int>(params, "d_b");
    c.e_b = require_field<int>(params, "e_b");
    c.g_b = require_field<int>(params, "g_b");
    c.n_d = require_field<int>(params, "n_d");
    c.n_e = require_field<int>(params, "n_e");
    c.port_swap = require_field<bool>(params, "port_swap");
    c.weights_on_d = require_field<bool>(params, "weights_on_d");
    c.overpacked = require_field<bool>(j, "overpacked");
    if (require_field<bool>(j, "separated")) throw SchemaError("kernel packing cannot be separated");
    if (!validate_kernel(c, profile, sign)) throw DomainError("kernel config fails validation");
    choice = make_choice(c);
  } else if (strategy == "filter") {
    FilterPackingConfig c;
    c.w_b = require_field<int>(params, "w_b");
    c.a_b = require_field<int>(params, "a_b");
    c.g_b = require_field<int>(params, "g_b");
    c.k_p = require_field<int>(params, "k_p");
    c.n_p = require_field<int>(params, "n_p");
    c.filter_on_large_port = require_field<bool>(params, "filter_on_large_port");
    c.overpacked = require_field<bool>(j, "overpacked");
    c.separated = require_field<bool>(j, "separated");
    if (!validate_filter(c, profile, sign)) throw DomainError("filter config fails validation");
    choice = make_choice(c, k, n);
  } else {
    throw SchemaError("unknown strategy '" + strategy + "'");
  }
  if (rational_from_json(j.at("t_mul")) != choice.t_mul)
    throw DomainError("stored t_mul " + to_string(rational_from_json(j.at("t_mul"))) + " does not match recomputed " +
                      to_string(choice.t_mul));
  if (require_field<int>(j, "e_g") != choice.e_g) throw DomainError("stored e_g does not match recomputed value");
  return choice;
}

}  // namespace dspack
