#pragma once

// Command implementations behind the dspack CLI. Each returns its exit code,
// the machine-readable document and a one-line human summary; the binary only
// parses flags and does the writing.

#include "dspack/allocator.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dspack {

struct CommandResult {
  int exit_code = 0;
  json doc;
  std::string summary;
  std::optional<std::string> text;  // replaces the JSON document when set (CSV outputs)

  std::string output() const { return text ? *text : doc.dump(2) + "\n"; }
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// --profile wins, then $DSPACK_PROFILE, then the built-in dsp48e2.
inline DspProfile resolve_profile(const std::string& flag) {
  if (!flag.empty()) return load_profile(flag);
  if (const char* env = std::getenv("DSPACK_PROFILE"); env && *env) return load_profile(env);
  return dsp48e2();
}

inline SeqLen parse_seq_len(const std::string& s) {
  if (s.empty() || s == "generic") return SeqLen::generic();
  try {
    std::size_t used = 0;
    const int n = std::stoi(s, &used);
    if (used == s.size() && n >= 1) return SeqLen::exact(n);
  } catch (const std::exception&) {
  }
  throw SchemaError("--seq-len must be a positive integer or 'generic'");
}

inline std::pair<int, int> parse_bit_range(const std::string& s) {
  int lo = 0, hi = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> lo >> c1 >> c2 >> hi) || c1 != '.' || c2 != '.' || !in.eof() || lo < 1 || lo > hi || hi > 16)
    throw SchemaError("--bits must look like 2..8");
  return {lo, hi};
}

/// Converts library exceptions into the exit-code convention.
template <class F>
CommandResult run_guarded(F&& f) {
  try {
    return f();
  } catch (const SchemaError& e) {
    return CommandResult{2, json{{"error", "schema"}, {"message", e.what()}}, std::string("error: ") + e.what(), {}};
  } catch (const DomainError& e) {
    return CommandResult{1, json{{"error", "domain"}, {"message", e.what()}}, std::string("error: ") + e.what(), {}};
  } catch (const json::exception& e) {
    return CommandResult{2, json{{"error", "schema"}, {"message", e.what()}}, std::string("error: ") + e.what(), {}};
  }
}

// ---------------------------------------------------------------------------
// pack

struct PackArgs {
  std::string kernel = "3x3";
  std::string seq_len = "generic";
  std::string profile;
  bool allow_overpack = false;
  bool allow_separation = false;
  bool signed_weights = false;
  bool signed_activations = false;

  SearchOptions search(int lo = 2, int hi = 8) const {
    return SearchOptions{allow_overpack, allow_separation, Signedness{signed_weights, signed_activations}, lo, hi};
  }
};

struct PackSearchArgs : PackArgs {
  int w_b = 8;
  int a_b = 8;
};

inline CommandResult cmd_pack_search(const PackSearchArgs& args) {
  return run_guarded([&] {
    const auto profile = resolve_profile(args.profile);
    profile.check();
    const auto shape = parse_kernel_shape(args.kernel);
    const auto n = parse_seq_len(args.seq_len);
    const auto choice = search_optimal(args.w_b, args.a_b, shape, n, profile, args.search());
    // Round-trip through the schema before reporting success.
    const json cj = to_json(choice);
    choice_from_json(cj, shape.filter_len(), n, profile, args.search().sign);
    json doc{{"w_b", args.w_b},
             {"a_b", args.a_b},
             {"kernel_shape", {shape.k_h, shape.k_w}},
             {"seq_len_policy", n.is_generic() ? json("generic") : json{{"n", *n.n}}},
             {"profile", to_json(profile)},
             {"choice", cj}};
    std::string summary = "T_mul=" + to_string(choice.t_mul) + " E_g=" + std::to_string(choice.e_g) + " (" +
                          to_string(choice.strategy) + (choice.overpacked() ? ", overpacked" : "") +
                          (choice.separated() ? ", separated" : "") + ")";
    return CommandResult{0, doc, summary, {}};
  });
}

struct PackTableArgs : PackArgs {
  std::string bits = "2..8";
  bool csv = false;
  VerifyPolicy verify{};
  unsigned threads = 0;
};

inline CommandResult cmd_pack_table(const PackTableArgs& args) {
  return run_guarded([&] {
    const auto profile = resolve_profile(args.profile);
    const auto [lo, hi] = parse_bit_range(args.bits);
    const auto shape = parse_kernel_shape(args.kernel);
    const auto table =
        build_table(shape, parse_seq_len(args.seq_len), profile, args.search(lo, hi), {args.verify, args.threads});
    const auto text = export_table(table);
    import_table(text);
    CommandResult r{0, to_json(table), "", {}};
    r.summary = std::to_string(table.entries.size()) + " entries for kernel " + shape.str() + ", all verified";
    if (args.csv) r.text = export_csv(table);
    return r;
  });
}

struct PackVerifyArgs {
  std::string table_path;
  VerifyPolicy verify{};
  unsigned threads = 0;
};

/// Verify every entry of a table; cell reports come back in grid order.
inline std::vector<VerificationReport> verify_table(const LookupTable& t, const VerifyPolicy& policy,
                                                    unsigned threads = 0) {
  std::vector<const PackingChoice*> cells;
  for (const auto& [key, choice] : t.entries) cells.push_back(&choice);
  std::vector<VerificationReport> out(cells.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < cells.size(); i += stride)
      out[i] = verify_choice(*cells[i], t.profile, t.options.sign, policy);
  };
  threads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max<std::size_t>(cells.size(), 1));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(work, i, threads);
  work(0, threads);
  for (auto& th : pool) th.join();
  return out;
}

inline json to_json(const VerificationReport& r) {
  json j{{"mode", r.exhaustive ? "exhaustive" : "sampled"},
         {"trials", r.trials},
         {"mismatches", r.mismatches},
         {"accumulation_budget", r.accumulation_budget}};
  if (r.counterexample) j["counterexample"] = *r.counterexample;
  return j;
}

inline CommandResult cmd_pack_verify(const PackVerifyArgs& args) {
  return run_guarded([&] {
    const auto table = import_table(read_text_file(args.table_path));
    const auto reports = verify_table(table, args.verify, args.threads);
    json cells = json::array();
    std::int64_t mismatches = 0, trials = 0, exhaustive = 0;
    std::size_t i = 0;
    for (const auto& [key, choice] : table.entries) {
      const auto& r = reports[i++];
      json c = to_json(r);
      c["w_b"] = key.first;
      c["a_b"] = key.second;
      c["t_mul"] = to_json(choice.t_mul);
      c["overpacked"] = choice.overpacked();
      cells.push_back(std::move(c));
      mismatches += r.mismatches;
      trials += r.trials;
      exhaustive += r.exhaustive;
    }
    json doc{{"kernel_shape", {table.kernel_shape.k_h, table.kernel_shape.k_w}},
             {"policy", {{"exhaustive_bits", args.verify.exhaustive_bits},
                         {"samples", args.verify.samples},
                         {"seed", args.verify.seed}}},
             {"cells", cells},
             {"trials", trials},
             {"mismatches", mismatches},
             {"passed", mismatches == 0}};
    std::string summary = std::to_string(table.entries.size()) + " cells (" + std::to_string(exhaustive) +
                          " exhaustive), " + std::to_string(trials) + " trials, " + std::to_string(mismatches) +
                          " mismatches";
    return CommandResult{mismatches == 0 ? 0 : 1, doc, summary, {}};
  });
}

// ---------------------------------------------------------------------------
// model

inline TableSet load_tables(const std::vector<std::string>& paths) {
  if (paths.empty()) throw SchemaError("at least one --lut table is required");
  TableSet set;
  for (const auto& p : paths) set.add(import_table(read_text_file(p)));
  return set;
}

struct ModelOpsArgs {
  std::string net_path;
  std::string bits_path;
  std::vector<std::string> lut_paths;
};

inline CommandResult cmd_model_ops(const ModelOpsArgs& args) {
  return run_guarded([&] {
    const auto net = network_from_json(read_json_file(args.net_path));
    const auto bits = assignment_from_json(read_json_file(args.bits_path));
    const auto tables = load_tables(args.lut_paths);
    const auto ops = layer_op_dsp(net, bits, tables);
    json layers = json::array();
    Rational total{0};
    std::int64_t total_mul = 0;
    for (const auto& l : ops) {
      layers.push_back({{"name", l.name},
                        {"op_mul", l.op_mul},
                        {"w_b", l.bits.w_b},
                        {"a_b", l.bits.a_b},
                        {"t_mul", to_json(l.t_mul)},
                        {"op_dsp", to_json(l.op_dsp)}});
      total += l.op_dsp;
      total_mul += l.op_mul;
    }
    json doc{{"layers", layers}, {"total_op_mul", total_mul}, {"total_op_dsp", to_json(total)}};
    return CommandResult{0, doc, "Op_dsp=" + to_string(total) + " over " + std::to_string(ops.size()) + " layers", {}};
  });
}

// ---------------------------------------------------------------------------
// cost

struct CostTrainArgs {
  std::string samples_path;
  std::optional<double> fixed_alpha;
  std::optional<double> fixed_lambda;
};

inline CommandResult cmd_cost_train(const CostTrainArgs& args) {
  return run_guarded([&] {
    if (args.fixed_alpha.has_value() != args.fixed_lambda.has_value())
      throw SchemaError("--alpha and --lambda must be given together");
    FitOptions opt;
    opt.fixed_alpha = args.fixed_alpha;
    opt.fixed_lambda = args.fixed_lambda;
    const auto samples = samples_from_csv(read_text_file(args.samples_path));
    const auto model = fit(samples, opt);
    const json doc = to_json(model);
    model_from_json(doc);
    return CommandResult{0, doc, "fitted 3 targets on " + std::to_string(samples.size()) + " samples", {}};
  });
}

struct CostSynthArgs {
  std::string spec_path;
  std::uint64_t seed = 1;
};

inline CommandResult cmd_cost_synth(const CostSynthArgs& args) {
  return run_guarded([&] {
    const auto spec = generator_from_json(read_json_file(args.spec_path));
    const auto samples = synth_samples(spec, args.seed);
    CommandResult r{0, json::object(), std::to_string(samples.size()) + " samples", samples_to_csv(samples)};
    samples_from_csv(*r.text);
    return r;
  });
}

// ---------------------------------------------------------------------------
// alloc

struct AllocArgs {
  std::string net_path;
  std::string bits_path;
  std::vector<std::string> lut_paths;
  std::string cost_path;
  AllocOptions options;
  bool brute = false;
};

inline CommandResult cmd_alloc(const AllocArgs& args) {
  return run_guarded([&] {
    const auto net = network_from_json(read_json_file(args.net_path));
    const auto bits = assignment_from_json(read_json_file(args.bits_path));
    const auto ops = layer_op_dsp(net, bits, load_tables(args.lut_paths));
    const auto model = model_from_json(read_json_file(args.cost_path));
    const auto problem = make_problem(net, ops, model_estimator(model), args.options);
    const auto plan = args.brute ? brute_force_allocate(problem) : dp_allocate(problem);
    if (!plan.feasible) return CommandResult{1, to_json(plan), "infeasible: " + plan.reason, {}};
    const auto bad = check_plan(plan);
    if (!bad.empty()) throw DomainError("plan re-check failed: " + bad.front());
    std::string summary = "Lat=" + to_string(plan.latency) + " cycles, DSP " + std::to_string(plan.total_dsp) + "/" +
                          std::to_string(plan.dsp_budget) + ", LUT " + std::to_string(plan.total_lut) + "/" +
                          std::to_string(plan.lut_budget);
    return CommandResult{0, to_json(plan), summary, {}};
  });
}

}  // namespace dspack
