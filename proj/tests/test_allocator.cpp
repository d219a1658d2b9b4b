#include "dspack/allocator.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace dspack;

namespace {

LayerSpec conv(std::string name, std::int64_t c_in, std::int64_t c_out, int k, std::int64_t hw) {
  LayerSpec l;
  l.name = std::move(name);
  l.c_in = c_in;
  l.c_out = c_out;
  l.k_h = l.k_w = k;
  l.h_out = l.w_out = hw;
  return l;
}

std::vector<LayerOps> ops_for(const NetworkSpec& net, const std::vector<std::int64_t>& t_mul) {
  std::vector<LayerOps> out;
  for (std::size_t l = 0; l < net.size(); ++l) {
    LayerOps o;
    o.name = net[l].name;
    o.op_mul = op_mul(net[l]);
    o.bits = {4, 4};
    o.t_mul = Rational(t_mul[l]);
    o.op_dsp = Rational(o.op_mul) / o.t_mul;
    out.push_back(o);
  }
  return out;
}

// DSPs grow with parallelism plus a fixed overhead; slack shrinks and
// crosses zero at Pf = 120.
StageEstimate linear_cost(const StageConfig& c) {
  return StageEstimate{c.pf_dsp + 2, 150 + 60 * std::int64_t(c.pf_dsp) + 400 * std::int64_t(c.pf_lut),
                       1.2 - 0.01 * (c.pf_dsp + c.pf_lut)};
}

// Random small instance: up to 4 stages, a handful of candidates each, some
// with negative slack.
AllocProblem random_problem(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  AllocProblem p;
  p.lut_quantum = 100;
  const int stages = uni(1, 4);
  for (int l = 0; l < stages; ++l) {
    p.names.push_back("s" + std::to_string(l));
    const Rational op(uni(50, 5000), uni(1, 6));
    p.op_dsp.push_back(op);
    std::vector<StageCandidate> cands;
    const int n = uni(1, 7);
    for (int k = 0; k < n; ++k) {
      StageConfig c;
      c.layer = l;
      c.pf_dsp = uni(0, 16);
      c.pf_lut = c.pf_dsp == 0 ? uni(1, 4) : uni(0, 2);
      StageEstimate e{c.pf_dsp + uni(0, 3), uni(0, 900), uni(-2, 9) / 10.0};
      cands.push_back(make_candidate(c, e, op, p.lut_quantum));
    }
    p.candidates.push_back(std::move(cands));
  }
  p.dsp_budget = uni(0, 40);
  p.lut_budget = uni(0, 2500);
  return p;
}

std::tuple<Rational, std::int64_t, std::int64_t> key(const AllocationPlan& p) {
  return {p.latency, p.total_dsp, p.total_lut_units};
}

}  // namespace

TEST(PfDomain, PowersAndChannelTilings) {
  const auto d = pf_domain(conv("c", 3, 16, 3, 8), 512);
  for (int v : {1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 128, 256, 512})
    EXPECT_TRUE(std::binary_search(d.begin(), d.end(), v)) << v;
  EXPECT_FALSE(std::binary_search(d.begin(), d.end(), 96));
  EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
  EXPECT_EQ(pf_domain(conv("c", 3, 16, 3, 8), 10).back(), 8);
}

TEST(Allocate, SingleStageTakesTheLargestAffordablePf) {
  const NetworkSpec net{conv("only", 16, 16, 3, 8)};
  AllocOptions opt;
  opt.dsp_budget = 40;
  opt.lut_budget = 100000;
  const auto p = make_problem(net, ops_for(net, {1}), linear_cost, opt);
  const auto plan = dp_allocate(p);
  ASSERT_TRUE(plan.feasible);
  // Pf + 2 <= 40: the largest tiling is 32.
  EXPECT_EQ(plan.stages[0].choice.config.pf_dsp, 32);
  EXPECT_EQ(plan.latency, Rational(op_mul(net[0]), 32));
  EXPECT_EQ(key(plan), key(brute_force_allocate(p)));
  EXPECT_TRUE(check_plan(plan).empty());
}

TEST(Allocate, TimingLimitRejectsFastStages) {
  // Ample DSPs, but slack is negative beyond Pf = 120.
  const NetworkSpec net{conv("c", 64, 64, 3, 8)};
  AllocOptions opt;
  opt.dsp_budget = 5000;
  opt.lut_budget = 1000000;
  const auto plan = dp_allocate(make_problem(net, ops_for(net, {1}), linear_cost, opt));
  ASSERT_TRUE(plan.feasible);
  EXPECT_EQ(plan.stages[0].choice.config.pf_dsp, 64);
  EXPECT_GT(plan.min_wns, 0);
}

TEST(Allocate, ZeroDspBudgetIsInfeasible) {
  const NetworkSpec net{conv("a", 8, 8, 3, 8), conv("b", 8, 8, 1, 8)};
  AllocOptions opt;
  opt.dsp_budget = 0;
  opt.lut_budget = 100000;
  const auto p = make_problem(net, ops_for(net, {2, 4}), linear_cost, opt);
  const auto dp = dp_allocate(p);
  const auto bf = brute_force_allocate(p);
  EXPECT_FALSE(dp.feasible);
  EXPECT_FALSE(bf.feasible);
  EXPECT_FALSE(dp.reason.empty());
  EXPECT_EQ(to_json(dp)["feasible"], false);
}

TEST(Allocate, LutLanesRescueAZeroDspBudget) {
  const NetworkSpec net{conv("a", 8, 8, 3, 8)};
  AllocOptions opt;
  opt.dsp_budget = 2;  // the fixed overhead only
  opt.lut_budget = 10000;
  opt.lut_replacement = true;
  const auto p = make_problem(net, ops_for(net, {1}), linear_cost, opt);
  const auto plan = dp_allocate(p);
  ASSERT_TRUE(plan.feasible);
  EXPECT_EQ(plan.stages[0].choice.config.pf_dsp, 0);
  EXPECT_GT(plan.stages[0].choice.config.pf_lut, 0);
  EXPECT_EQ(key(plan), key(brute_force_allocate(p)));
}

TEST(Allocate, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = random_problem(rng);
    const auto dp = dp_allocate(p);
    const auto bf = brute_force_allocate(p);
    ASSERT_EQ(dp.feasible, bf.feasible) << "instance " << i;
    if (!dp.feasible) continue;
    ++feasible;
    EXPECT_EQ(key(dp), key(bf)) << "instance " << i;
    EXPECT_TRUE(check_plan(dp).empty()) << "instance " << i;
  }
  EXPECT_GT(feasible, 50);
}

TEST(Allocate, LatencyNeverRisesWithBudget) {
  const NetworkSpec net{conv("a", 3, 16, 3, 32), conv("b", 16, 32, 3, 16), conv("c", 32, 32, 1, 16),
                        conv("d", 32, 64, 3, 8)};
  const auto ops = ops_for(net, {6, 4, 4, 2});
  std::optional<Rational> prev;
  for (int step = 1; step <= 10; ++step) {
    AllocOptions opt;
    opt.dsp_budget = 12 * step;
    opt.lut_budget = 4000 + 1500 * step;
    const auto plan = dp_allocate(make_problem(net, ops, linear_cost, opt));
    if (!plan.feasible) {
      EXPECT_FALSE(prev.has_value());
      continue;
    }
    if (prev) { EXPECT_LE(plan.latency, *prev) << "step " << step; }
    prev = plan.latency;
  }
  EXPECT_TRUE(prev.has_value());
}

TEST(Allocate, EqualLatencyPrefersFewerResources) {
  // Three candidates with identical latency; the cheapest must win.
  AllocProblem p;
  p.names = {"s"};
  p.op_dsp = {Rational(100)};
  p.dsp_budget = 50;
  p.lut_budget = 5000;
  p.lut_quantum = 500;
  StageConfig c{0, 4, 0, {4, 4}, 100, 1, Rational(1)};
  p.candidates = {{make_candidate(c, {20, 900, 0.5}, Rational(100), 500),
                   make_candidate(c, {10, 2000, 0.5}, Rational(100), 500),
                   make_candidate(c, {10, 400, 0.5}, Rational(100), 500)}};
  const auto plan = dp_allocate(p);
  EXPECT_EQ(plan.total_dsp, 10);
  EXPECT_EQ(plan.total_lut, 400);
}

TEST(Allocate, BruteForceRefusesLargeSpaces) {
  const NetworkSpec net{conv("a", 64, 64, 3, 8), conv("b", 64, 64, 3, 8), conv("c", 64, 64, 3, 8),
                        conv("d", 64, 64, 3, 8), conv("e", 64, 64, 3, 8)};
  AllocOptions opt;
  opt.dsp_budget = 100;
  opt.lut_budget = 1000;
  opt.lut_replacement = true;
  const auto p = make_problem(net, ops_for(net, {1, 1, 1, 1, 1}), linear_cost, opt);
  EXPECT_THROW(brute_force_allocate(p), DomainError);
}

TEST(CheckPlan, CatchesViolations) {
  const NetworkSpec net{conv("a", 8, 8, 3, 8), conv("b", 8, 16, 1, 8)};
  AllocOptions opt;
  opt.dsp_budget = 30;
  opt.lut_budget = 5000;
  const auto plan = dp_allocate(make_problem(net, ops_for(net, {2, 2}), linear_cost, opt));
  ASSERT_TRUE(plan.feasible);
  ASSERT_TRUE(check_plan(plan).empty());
  auto over = plan;
  over.dsp_budget = plan.total_dsp - 1;
  EXPECT_FALSE(check_plan(over).empty());
  auto late = plan;
  late.latency += 1;
  EXPECT_FALSE(check_plan(late).empty());
  auto slow = plan;
  slow.stages[0].choice.estimate.t_wns = -0.1;
  EXPECT_FALSE(check_plan(slow).empty());
}

TEST(Allocate, PlanJson) {
  const NetworkSpec net{conv("a", 8, 8, 3, 8)};
  AllocOptions opt;
  opt.dsp_budget = 20;
  opt.lut_budget = 5000;
  const auto j = to_json(dp_allocate(make_problem(net, ops_for(net, {3}), linear_cost, opt)));
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["stages"].size(), 1u);
  EXPECT_EQ(j["stages"][0]["name"], "a");
  EXPECT_TRUE(j["latency"].contains("num"));
}

TEST(Allocate, RuntimeGrowsLinearly) {
  auto instance = [](int layers, std::int64_t dsp) {
    NetworkSpec net;
    for (int l = 0; l < layers; ++l) net.push_back(conv("l" + std::to_string(l), 32, 64, 3, 16));
    AllocOptions opt;
    opt.dsp_budget = dsp;
    opt.lut_budget = 200000;
    opt.pf_cap = 64;
    return make_problem(net, ops_for(net, std::vector<std::int64_t>(layers, 2)), linear_cost, opt);
  };
  auto seconds = [](const AllocProblem& p) {
    std::vector<double> t;
    for (int r = 0; r < 3; ++r) {
      const auto start = std::chrono::steady_clock::now();
      dp_allocate(p);
      t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    std::sort(t.begin(), t.end());
    return t[1];
  };
  const double base = seconds(instance(8, 400));
  EXPECT_LT(seconds(instance(16, 400)) / base, 2.5);
  EXPECT_LT(seconds(instance(8, 800)) / base, 2.5);
}
