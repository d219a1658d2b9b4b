#pragma once

#include "dspack/simulate.hpp"

#include <optional>
#include <random>
#include <string>

namespace dspack {

struct VerifyPolicy {
  int exhaustive_bits = 20;        // exhaustive when total operand bits <= this
  std::int64_t samples = 100000;   // random trials otherwise
  std::uint64_t seed = 0x5eed;
};

struct VerificationReport {
  bool exhaustive = false;
  std::int64_t trials = 0;
  std::int64_t mismatches = 0;
  std::int64_t accumulation_budget = 1;  // products summed in the budget check
  std::optional<json> counterexample;

  bool passed() const { return mismatches == 0; }
};

// Bit widths and signedness of one packed multiply's operands.
struct OperandShape {
  std::vector<int> bits;
  std::vector<bool> is_signed;

  int total_bits() const {
    int t = 0;
    for (int b : bits) t += b;
    return t;
  }
  std::int64_t lo(std::size_t i) const { return is_signed[i] ? -(std::int64_t{1} << (bits[i] - 1)) : 0; }
  std::int64_t hi(std::size_t i) const {
    return is_signed[i] ? (std::int64_t{1} << (bits[i] - 1)) - 1 : (std::int64_t{1} << bits[i]) - 1;
  }
};

namespace detail {

inline OperandShape operand_shape(const PackingChoice& choice, Signedness sign) {
  OperandShape s;
  auto add = [&](int n, int bits, bool sgn) {
    for (int i = 0; i < n; ++i) {
      s.bits.push_back(bits);
      s.is_signed.push_back(sgn);
    }
  };
  if (choice.strategy == Strategy::kernel) {
    const auto& c = choice.kernel();
    add(c.n_d, c.d_b, c.weights_on_d ? sign.weights : sign.activations);
    add(c.n_e, c.e_b, c.weights_on_d ? sign.activations : sign.weights);
  } else {
    const auto& c = choice.filter();
    add(c.k_p, c.w_b, sign.weights);
    add(c.n_p, c.a_b, sign.activations);
  }
  return s;
}

// Splits a flat operand vector into the two ports and returns packed vs oracle.
struct CheckResult {
  std::vector<std::int64_t> got;
  std::vector<std::int64_t> want;
};

inline std::vector<std::int64_t> scaled(const std::vector<std::int64_t>& v, std::int64_t a) {
  auto out = v;
  for (auto& x : out) x *= a;
  return out;
}

// Runs `times` identical copies of one operand set through the accumulator.
// The packed side multiplies the wide word rather than looping, which is
// exactly what repeated addition modulo 2^accumulator produces.
inline CheckResult run_once(const PackingChoice& choice, const std::vector<std::int64_t>& ops,
                            const DspProfile& profile, Signedness sign, std::int64_t times = 1) {
  CheckResult r;
  if (choice.strategy == Strategy::kernel) {
    const auto& c = choice.kernel();
    KernelOperands t{{ops.begin(), ops.begin() + c.n_d}, {ops.begin() + c.n_d, ops.end()}};
    r.want = scaled(oracle::kernel_products(t.d, t.e), times);
    if (times == 1) {
      r.got = simulate_kernel_accumulated(c, std::span(&t, 1), profile, sign).values;
    } else {
      std::vector<int> lsbs(c.lanes(), 0);
      const auto word = kernel_word(c, t.d, t.e, profile, sign, lsbs);
      if (!(times & 1)) std::fill(lsbs.begin(), lsbs.end(), 0);
      const auto acc = (word * static_cast<std::uint64_t>(times)) & low_mask(profile.accumulator);
      r.got = decode(acc, profile.accumulator, LaneLayout{c.lanes(), c.p_b(), sign.product(), c.overpacked}, lsbs)
                  .values;
    }
    return r;
  }
  const auto& c = choice.filter();
  FilterOperands t{{ops.begin(), ops.begin() + c.k_p}, {ops.begin() + c.k_p, ops.end()}};
  r.want = scaled(oracle::convolve(t.f, t.s), times);
  if (times == 1) {
    r.got = simulate_filter_accumulated(c, std::span(&t, 1), profile, sign).values;
    return r;
  }
  // Accumulating identical terms: decode each half's scaled word.
  auto scaled_decode = [&](std::span<const std::int64_t> f, int f_bits, bool f_signed, bool lanes_signed) {
    std::vector<int> lsbs(c.lanes(), 0);
    const auto word = filter_word(c, f, f_bits, f_signed, t.s, profile, sign, lsbs);
    if (!(times & 1)) std::fill(lsbs.begin(), lsbs.end(), 0);
    const auto acc = (word * static_cast<std::uint64_t>(times)) & low_mask(profile.accumulator);
    return decode(acc, profile.accumulator, LaneLayout{c.lanes(), c.p_b(), lanes_signed, c.overpacked}, lsbs).values;
  };
  if (!c.separated) {
    r.got = scaled_decode(t.f, c.w_b, sign.weights, sign.product());
  } else {
    const auto [hi_bits, lo_bits] = separate_operand(c.w_b);
    std::vector<std::int64_t> f_hi, f_lo;
    split_weights(t.f, lo_bits, f_hi, f_lo);
    const auto hi = scaled_decode(f_hi, hi_bits, sign.weights, sign.product());
    const auto lo = scaled_decode(f_lo, lo_bits, false, sign.activations);
    for (std::size_t k = 0; k < hi.size(); ++k) r.got.push_back(hi[k] * (std::int64_t{1} << lo_bits) + lo[k]);
  }
  return r;
}

}  // namespace detail

/// Prove a packing bit-exact against direct multiplication.
///
/// Every operand combination is tried when the operands of one packed
/// multiply total at most `exhaustive_bits`; otherwise `samples` seeded
/// uniform draws plus all corner patterns. A second pass sums 2^E_g copies of
/// each corner pattern (and of random draws) in the accumulator, the largest
/// accumulation the guard bits promise to absorb.
inline VerificationReport verify_choice(const PackingChoice& choice, const DspProfile& profile,
                                        Signedness sign = {}, const VerifyPolicy& policy = {}) {
  VerificationReport rep;
  const auto shape = detail::operand_shape(choice, sign);
  const std::size_t n = shape.bits.size();
  std::vector<std::int64_t> ops(n);

  auto check = [&](std::int64_t times) {
    ++rep.trials;
    const auto r = detail::run_once(choice, ops, profile, sign, times);
    if (r.got != r.want) {
      if (rep.mismatches++ == 0) {
        rep.counterexample = json{{"operands", ops}, {"accumulated", times}, {"got", r.got}, {"want", r.want}};
      }
    }
  };

  rep.exhaustive = shape.total_bits() <= policy.exhaustive_bits;
  if (rep.exhaustive) {
    for (std::size_t i = 0; i < n; ++i) ops[i] = shape.lo(i);
    while (true) {
      check(1);
      std::size_t i = 0;
      for (; i < n; ++i) {
        if (ops[i] < shape.hi(i)) {
          ++ops[i];
          break;
        }
        ops[i] = shape.lo(i);
      }
      if (i == n) break;
    }
  } else {
    std::mt19937_64 rng(policy.seed);
    for (std::int64_t t = 0; t < policy.samples; ++t) {
      for (std::size_t i = 0; i < n; ++i)
        ops[i] = std::uniform_int_distribution<std::int64_t>(shape.lo(i), shape.hi(i))(rng);
      check(1);
    }
  }

  // Corner patterns: every operand at its minimum, its maximum, and the
  // alternating mixes, accumulated up to the guard-bit budget.
  rep.accumulation_budget = accumulation_budget(choice.e_g);
  const std::int64_t budget = rep.accumulation_budget;
  for (int pattern = 0; pattern < 4; ++pattern) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool high = pattern == 0 || (pattern == 2 && i % 2 == 0) || (pattern == 3 && i % 2 == 1);
      ops[i] = pattern == 1 ? shape.lo(i) : (high ? shape.hi(i) : shape.lo(i));
    }
    check(1);
    if (budget > 1) check(budget);
  }
  if (budget > 1) {
    // Distinct random terms summed in the accumulator.
    std::mt19937_64 rng(policy.seed ^ 0xacc);
    const std::int64_t terms = std::min<std::int64_t>(budget, 16);
    for (int trial = 0; trial < 64; ++trial) {
      ++rep.trials;
      std::vector<std::int64_t> want;
      std::vector<std::int64_t> got;
      std::vector<json> all_ops;
      if (choice.strategy == Strategy::kernel) {
        const auto& c = choice.kernel();
        std::vector<KernelOperands> ts;
        for (std::int64_t a = 0; a < terms; ++a) {
          for (std::size_t i = 0; i < n; ++i)
            ops[i] = std::uniform_int_distribution<std::int64_t>(shape.lo(i), shape.hi(i))(rng);
          all_ops.emplace_back(ops);
          ts.push_back({{ops.begin(), ops.begin() + c.n_d}, {ops.begin() + c.n_d, ops.end()}});
          const auto p = oracle::kernel_products(ts.back().d, ts.back().e);
          if (want.empty()) want.assign(p.size(), 0);
          for (std::size_t k = 0; k < p.size(); ++k) want[k] += p[k];
        }
        got = simulate_kernel_accumulated(c, ts, profile, sign).values;
      } else {
        const auto& c = choice.filter();
        std::vector<FilterOperands> ts;
        for (std::int64_t a = 0; a < terms; ++a) {
          for (std::size_t i = 0; i < n; ++i)
            ops[i] = std::uniform_int_distribution<std::int64_t>(shape.lo(i), shape.hi(i))(rng);
          all_ops.emplace_back(ops);
          ts.push_back({{ops.begin(), ops.begin() + c.k_p}, {ops.begin() + c.k_p, ops.end()}});
          const auto p = oracle::convolve(ts.back().f, ts.back().s);
          if (want.empty()) want.assign(p.size(), 0);
          for (std::size_t k = 0; k < p.size(); ++k) want[k] += p[k];
        }
        got = simulate_filter_accumulated(c, ts, profile, sign).values;
      }
      if (got != want && rep.mismatches++ == 0)
        rep.counterexample = json{{"terms", all_ops}, {"got", got}, {"want", want}};
    }
  }
  return rep;
}

}  // namespace dspack
