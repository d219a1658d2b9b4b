#pragma once

// Resource allocation for a fully pipelined accelerator: pick each stage's
// parallel factor so the slowest stage is as fast as possible while the
// summed DSP and LUT estimates fit the device and every stage meets timing.

#include "dspack/regression.hpp"

#include <functional>
#include <limits>
#include <set>

namespace dspack {

using StageEstimator = std::function<StageEstimate(const StageConfig&)>;

inline StageEstimator model_estimator(RegressionModel m) {
  return [m = std::move(m)](const StageConfig& c) { return predict(m, c); };
}

struct AllocOptions {
  std::int64_t dsp_budget = 0;
  std::int64_t lut_budget = 0;
  std::int64_t lut_quantum = 500;  // LUTs per DP table column
  bool lut_replacement = false;    // allow LUT lanes (Pf_lut > 0)
  int pf_cap = 512;
};

/// Parallel factors tried for a layer: powers of two, plus every product of a
/// divisor of the per-group input channels (SIMD) and a divisor of the output
/// channels (PE), all capped.
inline std::vector<int> pf_domain(const LayerSpec& l, int cap) {
  std::set<int> out;
  for (int p = 1; p <= cap; p *= 2) out.insert(p);
  auto divisors = [cap](std::int64_t n) {
    std::vector<int> d;
    for (std::int64_t i = 1; i <= std::min<std::int64_t>(n, cap); ++i)
      if (n % i == 0) d.push_back(int(i));
    return d;
  };
  const auto simd = divisors(l.c_in / l.groups);
  const auto pe = divisors(l.c_out);
  for (int s : simd)
    for (int p : pe)
      if (std::int64_t{s} * p <= cap) out.insert(s * p);
  return {out.begin(), out.end()};
}

/// A stage configuration with its estimate, quantized LUT cost and latency.
struct StageCandidate {
  StageConfig config;
  StageEstimate estimate;
  std::int64_t lut_units = 0;
  Rational latency{0};  // cycles: Op_dsp / (Pf_dsp + Pf_lut)
};

struct AllocProblem {
  std::vector<std::string> names;
  std::vector<Rational> op_dsp;
  std::vector<std::vector<StageCandidate>> candidates;  // per stage
  std::int64_t dsp_budget = 0;
  std::int64_t lut_budget = 0;
  std::int64_t lut_quantum = 500;

  std::size_t stages() const { return candidates.size(); }
  std::int64_t lut_units_budget() const { return lut_budget / lut_quantum; }
};

inline std::int64_t lut_units(std::int64_t luts, std::int64_t quantum) { return ceil_div(luts, quantum); }

inline StageCandidate make_candidate(const StageConfig& c, const StageEstimate& e, const Rational& op_dsp,
                                     std::int64_t quantum) {
  if (c.pf_dsp + c.pf_lut < 1) throw SchemaError("stage needs Pf_dsp + Pf_lut >= 1");
  if (e.r_dsp < 0 || e.r_lut < 0) throw DomainError("negative resource estimate");
  return StageCandidate{c, e, lut_units(e.r_lut, quantum), op_dsp / Rational(c.pf_dsp + c.pf_lut)};
}

/// Enumerate every stage's candidates from the network, its per-layer DSP
/// operation counts and a cost estimator.
inline AllocProblem make_problem(const NetworkSpec& net, const std::vector<LayerOps>& ops,
                                 const StageEstimator& estimate, const AllocOptions& opt) {
  if (opt.dsp_budget < 0 || opt.lut_budget < 0) throw SchemaError("budgets must be >= 0");
  if (opt.lut_quantum < 1) throw SchemaError("LUT quantum must be >= 1");
  if (opt.pf_cap < 1) throw SchemaError("Pf cap must be >= 1");
  if (net.size() != ops.size()) throw SchemaError("one Op_dsp per layer expected");
  AllocProblem p;
  p.dsp_budget = opt.dsp_budget;
  p.lut_budget = opt.lut_budget;
  p.lut_quantum = opt.lut_quantum;
  for (std::size_t l = 0; l < net.size(); ++l) {
    p.names.push_back(net[l].name);
    p.op_dsp.push_back(ops[l].op_dsp);
    const auto dom = pf_domain(net[l], opt.pf_cap);
    std::vector<int> dsp_side = dom, lut_side{0};
    if (opt.lut_replacement) {
      dsp_side.insert(dsp_side.begin(), 0);
      lut_side.insert(lut_side.end(), dom.begin(), dom.end());
    }
    std::vector<StageCandidate> cands;
    for (int pd : dsp_side)
      for (int pl : lut_side) {
        if (pd + pl < 1) continue;
        StageConfig c{int(l), pd, pl, ops[l].bits, ops[l].op_mul, net[l].k_h * net[l].k_w, ops[l].t_mul};
        cands.push_back(make_candidate(c, estimate(c), ops[l].op_dsp, opt.lut_quantum));
      }
    p.candidates.push_back(std::move(cands));
  }
  return p;
}

struct StagePlan {
  std::string name;
  Rational op_dsp{0};
  StageCandidate choice;
};

struct AllocationPlan {
  bool feasible = false;
  std::string reason;
  std::vector<StagePlan> stages;
  Rational latency{0};
  std::int64_t total_dsp = 0;
  std::int64_t total_lut = 0;
  std::int64_t total_lut_units = 0;
  double min_wns = 0.0;
  std::int64_t dsp_budget = 0;
  std::int64_t lut_budget = 0;
  std::int64_t lut_quantum = 500;
};

namespace detail {

// Exact a < b for non-negative rationals whose cross products fit 128 bits.
inline bool lat_less(const Rational& a, const Rational& b) {
  return static_cast<__int128>(a.numerator()) * b.denominator() <
         static_cast<__int128>(b.numerator()) * a.denominator();
}

inline AllocationPlan assemble(const AllocProblem& p, const std::vector<int>& pick) {
  AllocationPlan plan;
  plan.dsp_budget = p.dsp_budget;
  plan.lut_budget = p.lut_budget;
  plan.lut_quantum = p.lut_quantum;
  plan.feasible = true;
  plan.min_wns = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < p.stages(); ++l) {
    const auto& c = p.candidates[l][pick[l]];
    plan.stages.push_back(StagePlan{p.names[l], p.op_dsp[l], c});
    if (l == 0 || lat_less(plan.latency, c.latency)) plan.latency = c.latency;
    plan.total_dsp += c.estimate.r_dsp;
    plan.total_lut += c.estimate.r_lut;
    plan.total_lut_units += c.lut_units;
    plan.min_wns = std::min(plan.min_wns, c.estimate.t_wns);
  }
  return plan;
}

inline AllocationPlan infeasible(const AllocProblem& p, std::string why) {
  AllocationPlan plan;
  plan.reason = std::move(why);
  plan.dsp_budget = p.dsp_budget;
  plan.lut_budget = p.lut_budget;
  plan.lut_quantum = p.lut_quantum;
  return plan;
}

// Among assignments whose every stage latency is <= lat, the one with the
// fewest DSPs, then the fewest LUT units. g[u] = fewest DSPs using exactly u
// LUT units over the stages so far.
inline std::vector<int> cheapest_at(const AllocProblem& p, const Rational& lat) {
  constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max();
  const auto U = p.lut_units_budget();
  const auto L = p.stages();
  std::vector<std::int64_t> g(U + 1, inf), next(U + 1);
  g[0] = 0;
  std::vector<std::vector<int>> choice(L, std::vector<int>(U + 1, -1));
  for (std::size_t l = 0; l < L; ++l) {
    std::fill(next.begin(), next.end(), inf);
    for (std::int64_t u = 0; u <= U; ++u) {
      if (g[u] == inf) continue;
      for (std::size_t k = 0; k < p.candidates[l].size(); ++k) {
        const auto& c = p.candidates[l][k];
        if (!(c.estimate.t_wns > 0) || lat_less(lat, c.latency) || c.estimate.r_dsp > p.dsp_budget) continue;
        const auto v = u + c.lut_units;
        if (v > U) continue;
        const auto d = g[u] + c.estimate.r_dsp;
        if (d < next[v]) {
          next[v] = d;
          choice[l][v] = int(k);
        }
      }
    }
    std::swap(g, next);
  }
  std::int64_t best_u = -1;
  for (std::int64_t u = 0; u <= U; ++u)
    if (g[u] <= p.dsp_budget && (best_u < 0 || g[u] < g[best_u])) best_u = u;
  if (best_u < 0) return {};
  std::vector<int> pick(L);
  for (std::size_t l = L; l-- > 0;) {
    pick[l] = choice[l][best_u];
    best_u -= p.candidates[l][pick[l]].lut_units;
  }
  return pick;
}

}  // namespace detail

/// Minimum pipeline latency by dynamic programming over (stage, DSPs left,
/// LUT units left). Lat[l][d][u] is the best latency of stages 1..l given d
/// DSPs and u LUT units; a stage candidate is taken only if it strictly
/// improves the cell, fits the resources left and has positive slack.
/// Equal-latency plans are then resolved to fewer DSPs, then fewer LUTs.
inline AllocationPlan dp_allocate(const AllocProblem& p) {
  const auto L = p.stages();
  if (L == 0) throw SchemaError("network has no stages");
  const auto D = p.dsp_budget;
  const auto U = p.lut_units_budget();
  const auto width = U + 1;
  const auto cells = static_cast<std::size_t>((D + 1) * width);

  // Previous row of Lat; nullopt is the unset (infinite) sentinel.
  std::vector<std::optional<Rational>> prev(cells, Rational{0}), cur(cells);
  std::vector<std::vector<int>> choice(L, std::vector<int>(cells, -1));
  for (std::size_t l = 0; l < L; ++l) {
    std::fill(cur.begin(), cur.end(), std::nullopt);
    const auto& cands = p.candidates[l];
    for (std::int64_t d = 0; d <= D; ++d)
      for (std::int64_t u = 0; u <= U; ++u) {
        auto& cell = cur[d * width + u];
        for (std::size_t k = 0; k < cands.size(); ++k) {
          const auto& c = cands[k];
          if (c.estimate.r_dsp > d || c.lut_units > u) continue;  // C2
          if (!(c.estimate.t_wns > 0)) continue;                    // C3
          const auto& rest = prev[(d - c.estimate.r_dsp) * width + (u - c.lut_units)];
          if (!rest) continue;
          const Rational lat = detail::lat_less(*rest, c.latency) ? c.latency : *rest;
          if (!cell || detail::lat_less(lat, *cell)) {  // C1
            cell = lat;
            choice[l][d * width + u] = int(k);
          }
        }
      }
    std::swap(prev, cur);
  }
  const auto& best = prev[D * width + U];
  if (!best) return detail::infeasible(p, "no allocation satisfies the DSP, LUT and timing constraints");
  auto pick = detail::cheapest_at(p, *best);
  if (pick.empty()) throw std::logic_error("tie-break pass lost the optimal latency");
  return detail::assemble(p, pick);
}

/// Exhaustive search over every combination of stage candidates, for small
/// instances. Objective: latency, then DSPs, then LUT units.
inline AllocationPlan brute_force_allocate(const AllocProblem& p, double max_space = 1e7) {
  const auto L = p.stages();
  if (L == 0) throw SchemaError("network has no stages");
  double space = 1;
  for (const auto& c : p.candidates) space *= double(c.size());
  if (space > max_space) throw DomainError("allocation space too large for exhaustive search");
  for (const auto& c : p.candidates)
    if (c.empty()) return detail::infeasible(p, "a stage has no candidates");

  const auto U = p.lut_units_budget();
  std::vector<int> idx(L, 0), best;
  Rational best_lat{0};
  std::int64_t best_dsp = 0, best_units = 0;
  while (true) {
    Rational lat{0};
    std::int64_t dsp = 0, units = 0;
    bool ok = true;
    for (std::size_t l = 0; l < L && ok; ++l) {
      const auto& c = p.candidates[l][idx[l]];
      ok = c.estimate.t_wns > 0;
      dsp += c.estimate.r_dsp;
      units += c.lut_units;
      if (detail::lat_less(lat, c.latency)) lat = c.latency;
    }
    if (ok && dsp <= p.dsp_budget && units <= U) {
      const bool better = best.empty() || detail::lat_less(lat, best_lat) ||
                          (lat == best_lat && (dsp < best_dsp || (dsp == best_dsp && units < best_units)));
      if (better) {
        best = idx;
        best_lat = lat;
        best_dsp = dsp;
        best_units = units;
      }
    }
    std::size_t l = 0;
    for (; l < L; ++l) {
      if (++idx[l] < int(p.candidates[l].size())) break;
      idx[l] = 0;
    }
    if (l == L) break;
  }
  if (best.empty()) return detail::infeasible(p, "no allocation satisfies the DSP, LUT and timing constraints");
  return detail::assemble(p, best);
}

/// Re-check a plan against the budgets, the timing constraint and its own
/// latency claim, without the DP table. Returns the violations found.
inline std::vector<std::string> check_plan(const AllocationPlan& plan) {
  std::vector<std::string> bad;
  if (!plan.feasible) return bad;
  std::int64_t dsp = 0, lut = 0;
  Rational lat{0};
  for (const auto& s : plan.stages) {
    const auto& c = s.choice;
    dsp += c.estimate.r_dsp;
    lut += c.estimate.r_lut;
    if (c.config.pf_dsp + c.config.pf_lut < 1) bad.push_back(s.name + ": no parallelism");
    if (!(c.estimate.t_wns > 0)) bad.push_back(s.name + ": negative slack");
    const Rational stage = s.op_dsp / Rational(c.config.pf_dsp + c.config.pf_lut);
    if (stage != c.latency) bad.push_back(s.name + ": stage latency mismatch");
    lat = std::max(lat, stage);
  }
  if (dsp > plan.dsp_budget) bad.push_back("DSP budget exceeded");
  if (lut > plan.lut_budget) bad.push_back("LUT budget exceeded");
  if (dsp != plan.total_dsp || lut != plan.total_lut) bad.push_back("totals mismatch");
  if (lat != plan.latency) bad.push_back("latency mismatch");
  return bad;
}

inline json to_json(const AllocationPlan& plan) {
  json j{{"version", 1},
         {"feasible", plan.feasible},
         {"budgets", {{"dsp", plan.dsp_budget}, {"lut", plan.lut_budget}, {"lut_quantum", plan.lut_quantum}}}};
  if (!plan.feasible) {
    j["reason"] = plan.reason;
    return j;
  }
  json stages = json::array();
  for (const auto& s : plan.stages) {
    const auto& c = s.choice;
    stages.push_back({{"layer", c.config.layer},
                      {"name", s.name},
                      {"pf_dsp", c.config.pf_dsp},
                      {"pf_lut", c.config.pf_lut},
                      {"w_b", c.config.bits.w_b},
                      {"a_b", c.config.bits.a_b},
                      {"t_mul", to_json(c.config.t_mul)},
                      {"op_dsp", to_json(s.op_dsp)},
                      {"latency", to_json(c.latency)},
                      {"r_dsp", c.estimate.r_dsp},
                      {"r_lut", c.estimate.r_lut},
                      {"t_wns", c.estimate.t_wns}});
  }
  j["latency"] = to_json(plan.latency);
  j["latency_cycles"] = to_double(plan.latency);
  j["totals"] = {{"r_dsp", plan.total_dsp},
                 {"r_lut", plan.total_lut},
                 {"lut_units", plan.total_lut_units},
                 {"min_wns", plan.min_wns}};
  j["stages"] = stages;
  return j;
}

}  // namespace dspack
