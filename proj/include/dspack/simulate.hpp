#pragma once

// Bit-exact emulation of packed multiplication: operands are shift-added onto
// the two ports, multiplied once, optionally accumulated in the accumulator
// register, and the result lanes are cut back out of the wide word.

#include "dspack/packing.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dspack {

namespace detail {

constexpr std::uint64_t low_mask(int bits) {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

constexpr std::int64_t sign_extend(std::uint64_t raw, int bits) {
  const std::uint64_t m = low_mask(bits);
  raw &= m;
  if (bits < 64 && (raw >> (bits - 1)) & 1) return static_cast<std::int64_t>(raw | ~m);
  return static_cast<std::int64_t>(raw);
}

inline bool representable(std::int64_t v, int bits, bool is_signed) {
  if (is_signed) return v >= -(std::int64_t{1} << (bits - 1)) && v < (std::int64_t{1} << (bits - 1));
  return v >= 0 && v < (std::int64_t{1} << bits);
}

}  // namespace detail

/// A port or accumulator word holding packed lanes.
struct PackedWord {
  std::uint64_t value = 0;  // raw bits, < 2^width
  int width = 0;
  std::vector<int> lane_offsets;
  int lane_width = 0;
  bool is_signed = false;

  std::int64_t as_integer() const {
    return is_signed ? detail::sign_extend(value, width) : static_cast<std::int64_t>(value);
  }
};

struct DecodedLanes {
  std::vector<std::int64_t> values;
  bool overlap_corrected = false;
};

/// Shift-add `values` into one word. Signed lanes are sign-extended before
/// the shift, so the word is the two's complement of sum v[i] * 2^(i*stride).
inline PackedWord encode(std::span<const std::int64_t> values, int element_bits, int stride_bits,
                         bool is_signed, int port_bits = 62) {
  if (values.empty() || element_bits < 1) throw std::invalid_argument("encode: no lanes");
  if (values.size() > 1 && stride_bits < element_bits)
    throw std::invalid_argument("encode: stride narrower than element");
  const std::int64_t span = (std::int64_t(values.size()) - 1) * stride_bits + element_bits;
  if (span > port_bits) throw std::out_of_range("encode: lanes overflow the port");
  PackedWord w;
  w.width = port_bits;
  w.lane_width = element_bits;
  w.is_signed = is_signed;
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!detail::representable(values[i], element_bits, is_signed))
      throw std::out_of_range("encode: element out of range");
    sum += values[i] * (std::int64_t{1} << (i * stride_bits));
    w.lane_offsets.push_back(static_cast<int>(i * stride_bits));
  }
  if (!detail::representable(sum, port_bits, is_signed))
    throw std::out_of_range("encode: packed word overflows the port");
  w.value = static_cast<std::uint64_t>(sum) & detail::low_mask(port_bits);
  return w;
}

/// The multiplier: exact product of the two port integers, truncated to the
/// accumulator width.
inline std::uint64_t wide_multiply(const PackedWord& a, const PackedWord& b, int accumulator) {
  const auto product = static_cast<std::uint64_t>(a.as_integer()) * static_cast<std::uint64_t>(b.as_integer());
  return product & detail::low_mask(accumulator);
}

struct LaneLayout {
  int lanes = 1;
  int stride = 1;
  bool is_signed = false;
  bool overpacked = false;
};

struct OverpackResult {
  std::int64_t low = 0;
  std::int64_t high = 0;
};

/// Undo a 1-bit overlap between a low lane and the lane above it.
///
/// `raw_low` is the (p_b+1)-bit field starting at the low lane, so its MSB is
/// the shared bit. `raw_high` is the word arithmetic-shifted right by p_b,
/// i.e. everything from the shared bit upward. `high_lsb` is the true LSB of
/// the high lane rebuilt from the operands.
///
/// The low lane's MSB was XORed with the high lane's LSB, so adding
/// high_lsb << p_b (mod 2^(p_b+1)) restores it. The high side received the
/// low lane's top bit: a signed low lane sign-extends into it (high is one
/// short), an unsigned one carries into it (high is one over). That bit is
/// the shared bit XOR high_lsb.
inline OverpackResult overpack_correct_bit(std::uint64_t raw_low, std::int64_t raw_high, int high_lsb,
                                           int p_b, bool low_signed) {
  const std::uint64_t field = (raw_low + (std::uint64_t(high_lsb & 1) << p_b)) & detail::low_mask(p_b + 1);
  const int shared = static_cast<int>(raw_high & 1);
  const int delta = shared ^ (high_lsb & 1);
  OverpackResult r;
  if (low_signed) {
    r.low = detail::sign_extend(field, p_b + 1);
    r.high = raw_high + delta;
  } else {
    r.low = static_cast<std::int64_t>(field);
    r.high = raw_high - delta;
  }
  return r;
}

struct LsbPair {
  int a = 0;
  int b = 0;
};

/// Same as overpack_correct_bit but rebuilds the high lane's LSB from the
/// operand LSBs of every product summed into it: LSB(x*y) = LSB(x) & LSB(y),
/// and the LSB of a sum is the XOR of the summands' LSBs.
inline OverpackResult overpack_correct(std::uint64_t raw_low, std::int64_t raw_high,
                                       std::span<const LsbPair> operand_lsbs, int products_in_high_lane,
                                       int p_b, bool low_signed) {
  if (std::int64_t(operand_lsbs.size()) != products_in_high_lane)
    throw std::invalid_argument("overpack_correct: one LSB pair per product in the high lane");
  int lsb = 0;
  for (const auto& pr : operand_lsbs) lsb ^= (pr.a & pr.b & 1);
  return overpack_correct_bit(raw_low, raw_high, lsb, p_b, low_signed);
}

/// Cut lanes out of an accumulator word, lowest first. Signed lanes borrow
/// from the lane above when negative. Overpacked layouts need the rebuilt LSB
/// of every lane above the first (`lane_lsbs[k]` for lane k, index 0 unused).
inline DecodedLanes decode(std::uint64_t word, int accumulator, const LaneLayout& layout,
                           std::span<const int> lane_lsbs = {}) {
  if (layout.overpacked && std::int64_t(lane_lsbs.size()) < layout.lanes)
    throw std::invalid_argument("decode: overpacked layout needs per-lane LSBs");
  DecodedLanes out;
  out.overlap_corrected = layout.overpacked;
  const int p = layout.stride;
  std::int64_t rest = layout.is_signed ? detail::sign_extend(word, accumulator)
                                       : static_cast<std::int64_t>(word & detail::low_mask(accumulator));
  for (int k = 0; k + 1 < layout.lanes; ++k) {
    if (layout.overpacked) {
      const auto raw_low = static_cast<std::uint64_t>(rest) & detail::low_mask(p + 1);
      const auto r = overpack_correct_bit(raw_low, rest >> p, lane_lsbs[k + 1], p, layout.is_signed);
      out.values.push_back(r.low);
      rest = r.high;
    } else {
      const auto raw = static_cast<std::uint64_t>(rest) & detail::low_mask(p);
      const std::int64_t lane = layout.is_signed ? detail::sign_extend(raw, p) : std::int64_t(raw);
      out.values.push_back(lane);
      rest = (rest - lane) >> p;
    }
  }
  out.values.push_back(rest);
  return out;
}

namespace detail {

inline void check_range(std::span<const std::int64_t> v, int bits, bool is_signed, const char* what) {
  for (auto x : v)
    if (!representable(x, bits, is_signed))
      throw std::out_of_range(std::string(what) + ": operand out of range");
}

// One kernel-packed multiply; returns the accumulator word and adds the
// per-lane LSB parity into `lsbs`.
inline std::uint64_t kernel_word(const KernelPackingConfig& c, std::span<const std::int64_t> d,
                                 std::span<const std::int64_t> e, const DspProfile& profile, Signedness sign,
                                 std::vector<int>& lsbs) {
  const bool d_signed = c.weights_on_d ? sign.weights : sign.activations;
  const bool e_signed = c.weights_on_d ? sign.activations : sign.weights;
  check_range(d, c.d_b, d_signed, "simulate_kernel");
  check_range(e, c.e_b, e_signed, "simulate_kernel");
  const int p = c.p_b();
  const auto wd = encode(d, c.d_b, p, d_signed, profile.port(c.port_swap));
  const auto we = encode(e, c.e_b, c.n_d * p, e_signed, profile.port(!c.port_swap));
  for (int j = 0; j < c.n_e; ++j)
    for (int i = 0; i < c.n_d; ++i) lsbs[i + j * c.n_d] ^= int(d[i] & e[j] & 1);
  return wide_multiply(wd, we, profile.accumulator);
}

// One filter-packed multiply of a weight chunk (<= K_p taps, already split if
// separated) against an activation chunk (<= N_p elements).
inline std::uint64_t filter_word(const FilterPackingConfig& c, std::span<const std::int64_t> f, int f_bits,
                                 bool f_signed, std::span<const std::int64_t> s, const DspProfile& profile,
                                 Signedness sign, std::vector<int>& lsbs) {
  const int p = c.p_b();
  const auto wf = encode(f, f_bits, p, f_signed, profile.port(c.filter_on_large_port));
  const auto ws = encode(s, c.a_b, p, sign.activations, profile.port(!c.filter_on_large_port));
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) lsbs[i + j] ^= int(f[i] & s[j] & 1);
  return wide_multiply(wf, ws, profile.accumulator);
}

inline void split_weights(std::span<const std::int64_t> f, int lo_bits, std::vector<std::int64_t>& high,
                          std::vector<std::int64_t>& low) {
  high.clear();
  low.clear();
  for (auto x : f) {
    low.push_back(x & ((std::int64_t{1} << lo_bits) - 1));
    high.push_back(x >> lo_bits);
  }
}

}  // namespace detail

struct KernelOperands {
  std::vector<std::int64_t> d;
  std::vector<std::int64_t> e;
};

struct FilterOperands {
  std::vector<std::int64_t> f;  // <= K_p taps
  std::vector<std::int64_t> s;  // <= N_p elements
};

/// Largest number of packed products that may be summed in the accumulator
/// before decoding: 2^E_g.
inline std::int64_t accumulation_budget(int e_g) { return std::int64_t{1} << std::min(e_g, 62); }

/// Sum several kernel-packed products in the accumulator, then decode once.
/// Lane k = i + j*N_d holds sum of d[i]*e[j].
inline DecodedLanes simulate_kernel_accumulated(const KernelPackingConfig& c, std::span<const KernelOperands> terms,
                                                const DspProfile& profile, Signedness sign = {},
                                                bool enforce_budget = true) {
  if (!validate_kernel(c, profile, sign)) throw DomainError("simulate_kernel: config invalid for profile");
  if (terms.empty()) throw std::invalid_argument("simulate_kernel: nothing to multiply");
  if (enforce_budget && std::int64_t(terms.size()) > accumulation_budget(extra_guard_bits(c)))
    throw DomainError("simulate_kernel: accumulation budget exceeded");
  std::vector<int> lsbs(c.lanes(), 0);
  std::uint64_t acc = 0;
  for (const auto& t : terms) {
    if (std::int64_t(t.d.size()) != c.n_d || std::int64_t(t.e.size()) != c.n_e)
      throw std::invalid_argument("simulate_kernel: operand count mismatch");
    acc += detail::kernel_word(c, t.d, t.e, profile, sign, lsbs);
  }
  acc &= detail::low_mask(profile.accumulator);
  return decode(acc, profile.accumulator, LaneLayout{c.lanes(), c.p_b(), sign.product(), c.overpacked}, lsbs);
}

inline DecodedLanes simulate_kernel(const KernelPackingConfig& c, std::span<const std::int64_t> d,
                                    std::span<const std::int64_t> e, const DspProfile& profile,
                                    Signedness sign = {}) {
  const KernelOperands t{{d.begin(), d.end()}, {e.begin(), e.end()}};
  return simulate_kernel_accumulated(c, std::span(&t, 1), profile, sign);
}

/// Sum several filter-packed sub-products in the accumulator, then decode the
/// K_p+N_p-1 coefficient lanes once. With separation the high and low weight
/// halves run on separate multipliers and are recombined after decoding.
inline DecodedLanes simulate_filter_accumulated(const FilterPackingConfig& c, std::span<const FilterOperands> terms,
                                                const DspProfile& profile, Signedness sign = {},
                                                bool enforce_budget = true) {
  if (!validate_filter(c, profile, sign)) throw DomainError("simulate_filter: config invalid for profile");
  if (terms.empty()) throw std::invalid_argument("simulate_filter: nothing to multiply");
  if (enforce_budget && std::int64_t(terms.size()) > accumulation_budget(extra_guard_bits(c)))
    throw DomainError("simulate_filter: accumulation budget exceeded");
  const int lanes = c.lanes();
  for (const auto& t : terms) {
    if (t.f.empty() || t.s.empty() || std::int64_t(t.f.size()) > c.k_p || std::int64_t(t.s.size()) > c.n_p)
      throw std::invalid_argument("simulate_filter: chunk larger than K_p/N_p");
    detail::check_range(t.f, c.w_b, sign.weights, "simulate_filter");
    detail::check_range(t.s, c.a_b, sign.activations, "simulate_filter");
  }
  const std::uint64_t mask = detail::low_mask(profile.accumulator);
  if (!c.separated) {
    std::vector<int> lsbs(lanes, 0);
    std::uint64_t acc = 0;
    for (const auto& t : terms) acc += detail::filter_word(c, t.f, c.w_b, sign.weights, t.s, profile, sign, lsbs);
    return decode(acc & mask, profile.accumulator, LaneLayout{lanes, c.p_b(), sign.product(), c.overpacked}, lsbs);
  }
  const auto [hi_bits, lo_bits] = separate_operand(c.w_b);
  std::vector<int> lsb_hi(lanes, 0), lsb_lo(lanes, 0);
  std::uint64_t acc_hi = 0, acc_lo = 0;
  std::vector<std::int64_t> f_hi, f_lo;
  for (const auto& t : terms) {
    detail::split_weights(t.f, lo_bits, f_hi, f_lo);
    acc_hi += detail::filter_word(c, f_hi, hi_bits, sign.weights, t.s, profile, sign, lsb_hi);
    acc_lo += detail::filter_word(c, f_lo, lo_bits, false, t.s, profile, sign, lsb_lo);
  }
  const auto hi = decode(acc_hi & mask, profile.accumulator,
                         LaneLayout{lanes, c.p_b(), sign.product(), c.overpacked}, lsb_hi);
  const auto lo = decode(acc_lo & mask, profile.accumulator,
                         LaneLayout{lanes, c.p_b(), sign.activations, c.overpacked}, lsb_lo);
  DecodedLanes out;
  out.overlap_corrected = c.overpacked;
  for (int k = 0; k < lanes; ++k) out.values.push_back(hi.values[k] * (std::int64_t{1} << lo_bits) + lo.values[k]);
  return out;
}

/// Full 1-D convolution f * s (length K+N-1) through the ceil(K/K_p) x
/// ceil(N/N_p) sub-task schedule. Sub-tasks run filter-chunk outer,
/// sequence-chunk inner; each is decoded and its coefficients added at their
/// offset.
inline DecodedLanes simulate_filter(const FilterPackingConfig& c, std::span<const std::int64_t> f,
                                    std::span<const std::int64_t> s, const DspProfile& profile,
                                    Signedness sign = {}) {
  if (f.empty() || s.empty()) throw std::invalid_argument("simulate_filter: empty operand");
  DecodedLanes out;
  out.values.assign(f.size() + s.size() - 1, 0);
  out.overlap_corrected = c.overpacked;
  for (std::size_t fo = 0; fo < f.size(); fo += c.k_p) {
    for (std::size_t so = 0; so < s.size(); so += c.n_p) {
      FilterOperands t;
      t.f.assign(f.begin() + fo, f.begin() + std::min(f.size(), fo + c.k_p));
      t.s.assign(s.begin() + so, s.begin() + std::min(s.size(), so + c.n_p));
      const auto part = simulate_filter_accumulated(c, std::span(&t, 1), profile, sign);
      for (std::size_t k = 0; k < t.f.size() + t.s.size() - 1; ++k) out.values[fo + so + k] += part.values[k];
    }
  }
  return out;
}

/// Reference results computed without any packing.
namespace oracle {

inline std::vector<std::int64_t> kernel_products(std::span<const std::int64_t> d, std::span<const std::int64_t> e) {
  std::vector<std::int64_t> out;
  for (auto y : e)
    for (auto x : d) out.push_back(x * y);
  return out;
}

inline std::vector<std::int64_t> convolve(std::span<const std::int64_t> f, std::span<const std::int64_t> s) {
  std::vector<std::int64_t> out(f.size() + s.size() - 1, 0);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) out[i + j] += f[i] * s[j];
  return out;
}

}  // namespace oracle

}  // namespace dspack
