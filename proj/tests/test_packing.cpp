#include "dspack/packing.hpp"

#include <gtest/gtest.h>

using namespace dspack;

namespace {

const DspProfile kDsp = dsp48e2();

KernelPackingConfig kernel(int d_b, int e_b, int g_b, int n_d, int n_e) {
  KernelPackingConfig c;
  c.d_b = d_b;
  c.e_b = e_b;
  c.g_b = g_b;
  c.n_d = n_d;
  c.n_e = n_e;
  return c;
}

FilterPackingConfig filter(int w_b, int a_b, int g_b, int k_p, int n_p) {
  FilterPackingConfig c;
  c.w_b = w_b;
  c.a_b = a_b;
  c.g_b = g_b;
  c.k_p = k_p;
  c.n_p = n_p;
  return c;
}

}  // namespace

TEST(ValidateKernel, TwoFiveBitProductsOnTheSmallPort) {
  // 5 + 13 = 18 fits the 18-bit port; 8 fits the 27-bit one.
  EXPECT_TRUE(validate_kernel(kernel(5, 8, 0, 2, 1), kDsp));
  EXPECT_FALSE(validate_kernel(kernel(5, 8, 1, 2, 1), kDsp));
}

TEST(ValidateKernel, IdentityPacking) {
  for (int d = 1; d <= 18; ++d)
    for (int e = 1; e <= 27; ++e) {
      auto c = kernel(d, e, 0, 1, 1);
      c.port_swap = false;
      EXPECT_TRUE(validate_kernel(c, kDsp)) << d << "x" << e;
    }
  EXPECT_FALSE(validate_kernel(kernel(19, 27, 0, 1, 1), kDsp));
}

TEST(ValidateKernel, FourFourBitProducts) {
  // 4 + 8 = 12 <= 18 and 4 + 16 = 20 <= 27.
  EXPECT_TRUE(validate_kernel(kernel(4, 4, 0, 2, 2), kDsp));
  EXPECT_TRUE(validate_kernel(kernel(4, 4, 1, 2, 2), kDsp));
  EXPECT_FALSE(validate_kernel(kernel(4, 4, 0, 3, 2), kDsp));
}

TEST(ValidateKernel, OverpackNeedsExactlyOneBitOverlap) {
  auto c = kernel(4, 4, -1, 2, 2);
  EXPECT_FALSE(validate_kernel(c, kDsp));
  c.overpacked = true;
  EXPECT_TRUE(validate_kernel(c, kDsp));
  c.g_b = -2;
  EXPECT_FALSE(validate_kernel(c, kDsp));
  auto single = kernel(4, 4, -1, 1, 1);
  single.overpacked = true;
  EXPECT_FALSE(validate_kernel(single, kDsp));
}

TEST(ValidateFilter, SixProductConfig) {
  // p_b = 9: 4 + 2*9 = 22 <= 27 for the filter, 4 + 9 = 13 <= 18.
  EXPECT_TRUE(validate_filter(filter(4, 4, 1, 3, 2), kDsp));
  EXPECT_FALSE(validate_filter(filter(4, 4, 0, 3, 2), kDsp));  // guard below log2 min(3, 2)
}

TEST(ValidateFilter, Degenerate) {
  EXPECT_TRUE(validate_filter(filter(27, 18, 0, 1, 1), kDsp));
  EXPECT_FALSE(validate_filter(filter(28, 18, 0, 1, 1), kDsp));
  auto c = filter(18, 27, 0, 1, 1);
  c.filter_on_large_port = false;
  EXPECT_TRUE(validate_filter(c, kDsp));
}

TEST(ValidateFilter, TwelveProductConfig) {
  // p_b = 6: 2 + 2*6 = 14 <= 18 and 2 + 3*6 = 20 <= 27.
  auto c = filter(2, 2, 2, 3, 4);
  c.filter_on_large_port = false;
  EXPECT_TRUE(validate_filter(c, kDsp));
  c.filter_on_large_port = true;
  EXPECT_FALSE(validate_filter(c, kDsp));  // 4 activations need 20 bits on the 18-bit port
}

TEST(ValidateFilter, SignedLanesNeedTheirWordRange) {
  // Two 9-bit lanes at stride 9 span 18 bits. Unsigned they fit an 18-bit
  // port; signed, both lanes at -256 sum to -256 * 513, one bit too wide.
  EXPECT_TRUE(detail::fits_port(2, 9, 9, false, 18));
  EXPECT_FALSE(detail::fits_port(2, 9, 9, true, 18));
  EXPECT_TRUE(detail::fits_port(2, 9, 9, true, 19));
  EXPECT_TRUE(detail::fits_port(1, 18, 0, true, 18));
}

TEST(Throughput, Kernel) { EXPECT_EQ(throughput(kernel(4, 4, 0, 2, 2)), Rational(4)); }

TEST(Throughput, Filter) {
  EXPECT_EQ(throughput(filter(4, 4, 1, 3, 2), 3, SeqLen::exact(6)), Rational(6));
  EXPECT_EQ(throughput(filter(2, 2, 2, 3, 4), 3, SeqLen::exact(4)), Rational(12));
  // ceil(3/2) * ceil(5/2) = 6 sub-tasks for 15 products.
  EXPECT_EQ(throughput(filter(4, 4, 1, 2, 2), 3, SeqLen::exact(5)), Rational(15, 6));
  EXPECT_EQ(throughput(filter(4, 4, 1, 2, 2), 3, SeqLen::generic()), Rational(6, 2));
}

TEST(Throughput, SeparationHalvesTheSplitConfig) {
  auto c = filter(8, 4, 1, 3, 2);
  c.separated = true;
  auto plain = filter(4, 4, 1, 3, 2);
  EXPECT_EQ(throughput(c, 3, SeqLen::exact(6)) * 2, throughput(plain, 3, SeqLen::exact(6)));
}

TEST(ExtraGuardBits, Examples) {
  EXPECT_EQ(extra_guard_bits(kernel(4, 4, 0, 2, 2)), 0);
  EXPECT_EQ(extra_guard_bits(filter(2, 2, 2, 3, 4)), 0);
  EXPECT_EQ(extra_guard_bits(kernel(5, 8, 0, 2, 1)), 0);
  EXPECT_EQ(kernel(5, 8, 0, 2, 1).p_b(), 13);
  EXPECT_EQ(extra_guard_bits(filter(2, 2, 5, 3, 4)), 3);
}

TEST(SeparateOperand, Splits) {
  EXPECT_EQ(separate_operand(7), std::make_pair(3, 4));
  EXPECT_EQ(separate_operand(2), std::make_pair(1, 1));
  EXPECT_EQ(separate_operand(8), std::make_pair(4, 4));
  EXPECT_THROW(separate_operand(1), std::invalid_argument);
}

TEST(CorrectionGates, PerBoundary) {
  auto k = kernel(4, 4, -1, 2, 2);
  k.overpacked = true;
  EXPECT_EQ(correction_gates(k), 15);
  EXPECT_EQ(correction_gates(kernel(4, 4, 0, 2, 2)), 0);
  // Lanes of a K_p=2, N_p=2 convolution hold 1, 2, 1 products: boundaries
  // into lanes 1 and 2 carry 2 and 1 products.
  auto f = filter(4, 4, 0, 2, 2);
  f.overpacked = true;
  EXPECT_EQ(correction_gates(f), (2 * 2 + 3) + (2 * 1 + 3));
  f.separated = true;
  EXPECT_EQ(correction_gates(f), 2 * ((2 * 2 + 3) + (2 * 1 + 3)));
}

TEST(Enumerate, ContainsAnchorConfigs) {
  const auto k1 = enumerate_configs(4, 4, 1, SeqLen::generic(), kDsp, {});
  bool four = false;
  for (const auto& c : k1) four = four || (c.strategy == Strategy::kernel && c.t_mul >= 4);
  EXPECT_TRUE(four);

  const auto k3 = enumerate_configs(4, 4, 3, SeqLen::exact(6), kDsp, {});
  bool six = false;
  for (const auto& c : k3) six = six || (c.strategy == Strategy::filter && c.t_mul == 6);
  EXPECT_TRUE(six);
}

TEST(Enumerate, IdentityAtPortWidths) {
  const auto all = enumerate_configs(27, 18, 1, SeqLen::generic(), kDsp, {});
  bool identity = false;
  for (const auto& c : all)
    identity = identity || (c.strategy == Strategy::kernel && c.kernel().lanes() == 1 && c.t_mul == 1);
  EXPECT_TRUE(identity);
}

class EnumerateGrid : public ::testing::TestWithParam<std::tuple<int, bool, bool, bool>> {};

// Every enumerated choice re-validates, reports consistent metrics and, for
// kernel packing, places its products in disjoint bit segments.
TEST_P(EnumerateGrid, ChoicesAreValidAndConsistent) {
  const auto [k, overpack, separation, sgn] = GetParam();
  const Signedness sign{sgn, sgn};
  for (int w = 2; w <= 8; ++w)
    for (int a = 2; a <= 8; ++a) {
      const auto all =
          enumerate_configs(w, a, k, SeqLen::generic(), kDsp, EnumerateOptions{overpack, separation, sign});
      ASSERT_FALSE(all.empty());
      for (const auto& c : all) {
        EXPECT_EQ(c.t_mul, throughput(c, k, SeqLen::generic()));
        if (!c.overpacked()) { EXPECT_GE(c.e_g, 0); }
        if (c.strategy == Strategy::kernel) {
          const auto& kc = c.kernel();
          ASSERT_TRUE(validate_kernel(kc, kDsp, sign));
          EXPECT_EQ(kc.weights_on_d ? kc.d_b : kc.e_b, w);
          if (kc.g_b >= 0) {
            std::vector<std::pair<int, int>> seg;
            for (int j = 0; j < kc.n_e; ++j)
              for (int i = 0; i < kc.n_d; ++i) {
                const int lo = i * kc.p_b() + j * kc.n_d * kc.p_b();
                seg.emplace_back(lo, lo + kc.d_b + kc.e_b);
              }
            std::sort(seg.begin(), seg.end());
            for (std::size_t s = 1; s < seg.size(); ++s) EXPECT_LE(seg[s - 1].second, seg[s].first);
          }
        } else {
          ASSERT_TRUE(validate_filter(c.filter(), kDsp, sign));
          EXPECT_EQ(c.filter().w_b, w);
          EXPECT_EQ(c.filter().a_b, a);
          if (!overpack) { EXPECT_FALSE(c.overpacked()); }
          if (!separation) { EXPECT_FALSE(c.separated()); }
        }
      }
    }
}

INSTANTIATE_TEST_SUITE_P(AllModes, EnumerateGrid,
                         ::testing::Combine(::testing::Values(1, 3), ::testing::Bool(), ::testing::Bool(),
                                            ::testing::Bool()));

TEST(ChoiceJson, RoundTripAndTamper) {
  const auto all = enumerate_configs(4, 4, 3, SeqLen::generic(), kDsp, EnumerateOptions{true, true, {}});
  for (const auto& c : all) {
    const auto j = to_json(c);
    const auto back = choice_from_json(j, 3, SeqLen::generic(), kDsp, {});
    EXPECT_EQ(to_json(back), j);
  }
  auto j = to_json(all.front());
  j["t_mul"] = to_json(all.front().t_mul + 1);
  EXPECT_THROW(choice_from_json(j, 3, SeqLen::generic(), kDsp, {}), DomainError);
  j = to_json(all.front());
  j["params"]["g_b"] = 40;
  EXPECT_THROW(choice_from_json(j, 3, SeqLen::generic(), kDsp, {}), DomainError);
  j = to_json(all.front());
  j.erase("e_g");
  EXPECT_THROW(choice_from_json(j, 3, SeqLen::generic(), kDsp, {}), SchemaError);
}
