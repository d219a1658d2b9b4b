// dspack: packing search and verification, network scoring, cost-model
// training and accelerator allocation.

#include "dspack/dspack.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace dspack;

namespace {

void add_pack_flags(CLI::App* c, PackArgs& a) {
  c->add_option("--kernel", a.kernel, "Kernel shape HxW")->capture_default_str();
  c->add_option("--seq-len", a.seq_len, "Activation row length N, or 'generic'")->capture_default_str();
  c->add_option("--profile", a.profile, "Profile name or JSON path (default: $DSPACK_PROFILE, else dsp48e2)");
  c->add_flag("--allow-overpack", a.allow_overpack, "Admit overpacked configurations");
  c->add_flag("--allow-separation", a.allow_separation, "Admit operand separation");
  c->add_flag("--signed-weights", a.signed_weights, "Weights are two's complement");
  c->add_flag("--signed-activations", a.signed_activations, "Activations are two's complement");
}

void add_verify_flags(CLI::App* c, VerifyPolicy& v, unsigned& threads) {
  c->add_option("--exhaustive-bits", v.exhaustive_bits, "Exhaustive when operand bits <= this")
      ->capture_default_str();
  c->add_option("--samples", v.samples, "Random trials for larger cells")->capture_default_str()->check(
      CLI::PositiveNumber);
  c->add_option("--seed", v.seed, "Sampling seed")->capture_default_str();
  c->add_option("--threads", threads, "Worker threads, 0 = all cores")->capture_default_str();
}

int emit(const CommandResult& r, const std::string& out_path) {
  const bool failed_early = r.doc.is_object() && r.doc.contains("error");
  if (!failed_early) {
    if (out_path.empty()) {
      std::cout << r.output();
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) {
        std::cerr << "error: cannot write " << out_path << "\n";
        return 2;
      }
      f << r.output();
    }
  }
  std::cerr << r.summary << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSP packing, verification and accelerator allocation"};
  app.require_subcommand(1);
  std::string out;

  auto* pack = app.add_subcommand("pack", "Packing search, tables and verification")->require_subcommand(1);

  PackSearchArgs search;
  auto* search_cmd = pack->add_subcommand("search", "Best packing for one bit-width pair");
  search_cmd->add_option("--wb", search.w_b, "Weight bit-width")->required();
  search_cmd->add_option("--ab", search.a_b, "Activation bit-width")->required();
  add_pack_flags(search_cmd, search);
  search_cmd->add_option("-o,--output", out, "Output file (default stdout)");

  PackTableArgs table;
  auto* table_cmd = pack->add_subcommand("table", "Build and verify a lookup table");
  table_cmd->add_option("--bits", table.bits, "Bit-width range lo..hi")->capture_default_str();
  add_pack_flags(table_cmd, table);
  add_verify_flags(table_cmd, table.verify, table.threads);
  table_cmd->add_flag("--csv", table.csv, "Emit the T_mul grid as CSV instead of JSON");
  table_cmd->add_option("-o,--output", out, "Output file (default stdout)");

  PackVerifyArgs verify;
  auto* verify_cmd = pack->add_subcommand("verify", "Re-verify every entry of a lookup table");
  verify_cmd->add_option("table", verify.table_path, "lut.json")->required();
  add_verify_flags(verify_cmd, verify.verify, verify.threads);
  verify_cmd->add_option("-o,--output", out, "Report file (default stdout)");

  auto* model = app.add_subcommand("model", "Network scoring")->require_subcommand(1);
  ModelOpsArgs ops;
  auto* ops_cmd = model->add_subcommand("ops", "Per-layer Op_mul, T_mul and total Op_dsp");
  ops_cmd->add_option("net", ops.net_path, "net.json")->required();
  ops_cmd->add_option("--bits", ops.bits_path, "assign.json")->required();
  ops_cmd->add_option("--lut", ops.lut_paths, "Lookup table(s), one per kernel shape")->required();
  ops_cmd->add_option("-o,--output", out, "Output file (default stdout)");

  auto* cost = app.add_subcommand("cost", "Stage cost model")->require_subcommand(1);
  CostTrainArgs train;
  auto* train_cmd = cost->add_subcommand("train", "Fit the cost model to a sample CSV");
  train_cmd->add_option("samples", train.samples_path, "samples.csv")->required();
  train_cmd->add_option("--alpha", train.fixed_alpha, "Fixed noise precision (with --lambda)");
  train_cmd->add_option("--lambda", train.fixed_lambda, "Fixed weight precision (with --alpha)");
  train_cmd->add_option("-o,--output", out, "Model file (default stdout)");

  CostSynthArgs synth;
  auto* synth_cmd = cost->add_subcommand("synth", "Draw synthetic samples from a linear generator");
  synth_cmd->add_option("--spec", synth.spec_path, "gen.json")->required();
  synth_cmd->add_option("--seed", synth.seed, "Sampling seed")->capture_default_str();
  synth_cmd->add_option("-o,--output", out, "Sample CSV (default stdout)");

  auto* alloc = app.add_subcommand("alloc", "Accelerator resource allocation")->require_subcommand(1);
  AllocArgs alloc_args;
  auto add_alloc = [&](const char* name, const char* help) {
    auto* c = alloc->add_subcommand(name, help);
    c->add_option("net", alloc_args.net_path, "net.json")->required();
    c->add_option("--bits", alloc_args.bits_path, "assign.json")->required();
    c->add_option("--lut", alloc_args.lut_paths, "Lookup table(s)")->required();
    c->add_option("--cost", alloc_args.cost_path, "Cost model JSON")->required();
    c->add_option("--dsp-budget", alloc_args.options.dsp_budget, "Available DSPs")->required()->check(
        CLI::NonNegativeNumber);
    c->add_option("--lut-budget", alloc_args.options.lut_budget, "Available LUTs")->required()->check(
        CLI::NonNegativeNumber);
    c->add_option("--lut-quantum", alloc_args.options.lut_quantum, "LUTs per DP column")->capture_default_str()->check(
        CLI::PositiveNumber);
    c->add_option("--pf-cap", alloc_args.options.pf_cap, "Largest parallel factor")->capture_default_str()->check(
        CLI::PositiveNumber);
    c->add_flag("--lut-replacement", alloc_args.options.lut_replacement, "Allow LUT multiplier lanes");
    c->add_option("-o,--output", out, "Plan file (default stdout)");
    return c;
  };
  auto* run_cmd = add_alloc("run", "Dynamic-programming allocation");
  auto* brute_cmd = add_alloc("brute", "Exhaustive allocation (small instances)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (search_cmd->parsed()) return emit(cmd_pack_search(search), out);
  if (table_cmd->parsed()) return emit(cmd_pack_table(table), out);
  if (verify_cmd->parsed()) return emit(cmd_pack_verify(verify), out);
  if (ops_cmd->parsed()) return emit(cmd_model_ops(ops), out);
  if (train_cmd->parsed()) return emit(cmd_cost_train(train), out);
  if (synth_cmd->parsed()) return emit(cmd_cost_synth(synth), out);
  alloc_args.brute = brute_cmd->parsed();
  if (run_cmd->parsed() || brute_cmd->parsed()) return emit(cmd_alloc(alloc_args), out);
  return 2;
}
