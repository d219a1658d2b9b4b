#pragma once

#include "dspack/verify.hpp"

#include <map>
#include <sstream>
#include <thread>

namespace dspack {

struct KernelShape {
  int k_h = 1;
  int k_w = 1;

  bool operator==(const KernelShape&) const = default;
  auto operator<=>(const KernelShape&) const = default;

  // Row-wise factorization: a K_h x K_w kernel is K_h 1-D filters of K_w taps.
  int filter_len() const { return k_w; }
  std::string str() const { return std::to_string(k_h) + "x" + std::to_string(k_w); }
};

inline KernelShape parse_kernel_shape(const std::string& s) {
  KernelShape k;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> k.k_h >> x >> k.k_w) || x != 'x' || k.k_h < 1 || k.k_w < 1 || !in.eof())
    throw SchemaError("kernel shape must look like 3x3, got '" + s + "'");
  return k;
}

struct SearchOptions {
  bool allow_overpack = false;
  bool allow_separation = false;
  Signedness sign{};
  int min_bits = 2;
  int max_bits = 8;
};

/// Strict preference between two choices: higher T_mul, then more extra guard
/// bits, then fewer correction gates, then kernel before filter.
inline bool better_choice(const PackingChoice& a, const PackingChoice& b) {
  if (a.t_mul != b.t_mul) return a.t_mul > b.t_mul;
  if (a.e_g != b.e_g) return a.e_g > b.e_g;
  if (a.correction_gates != b.correction_gates) return a.correction_gates < b.correction_gates;
  return a.strategy == Strategy::kernel && b.strategy == Strategy::filter;
}

/// Best enumerated configuration for one bit-width pair. Among fully tied
/// candidates the first in enumeration order wins.
inline PackingChoice search_optimal(int w_b, int a_b, KernelShape shape, SeqLen n, const DspProfile& profile,
                                    const SearchOptions& opt = {}) {
  if (w_b < opt.min_bits || w_b > opt.max_bits || a_b < opt.min_bits || a_b > opt.max_bits)
    throw SchemaError("bit-widths must lie in [" + std::to_string(opt.min_bits) + ", " +
                      std::to_string(opt.max_bits) + "]");
  const auto all = enumerate_configs(w_b, a_b, shape.filter_len(), n, profile,
                                     EnumerateOptions{opt.allow_overpack, opt.allow_separation, opt.sign});
  if (all.empty())
    throw DomainError("no valid packing for w_b=" + std::to_string(w_b) + ", a_b=" + std::to_string(a_b));
  const PackingChoice* best = &all.front();
  for (const auto& c : all)
    if (better_choice(c, *best)) best = &c;
  return *best;
}

struct LookupTable {
  static constexpr int kVersion = 1;

  DspProfile profile;
  KernelShape kernel_shape;
  SeqLen seq_len;
  SearchOptions options;
  std::map<std::pair<int, int>, PackingChoice> entries;  // (w_b, a_b)

  const PackingChoice& at(int w_b, int a_b) const {
    auto it = entries.find({w_b, a_b});
    if (it == entries.end())
      throw DomainError("lookup table " + kernel_shape.str() + " has no entry for (" + std::to_string(w_b) + ", " +
                        std::to_string(a_b) + ")");
    return it->second;
  }
  Rational t_mul(int w_b, int a_b) const { return at(w_b, a_b).t_mul; }
};

struct BuildOptions {
  VerifyPolicy verify{};
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Search and verify every cell of the bit-width grid. Cells are independent;
/// results land in a cell-indexed slot so the outcome does not depend on
/// scheduling. Any cell failing bit-exact verification aborts the build.
inline LookupTable build_table(KernelShape shape, SeqLen n, const DspProfile& profile, const SearchOptions& opt = {},
                               const BuildOptions& build = {}) {
  profile.check();
  LookupTable table{profile, shape, n, opt, {}};
  std::vector<std::pair<int, int>> cells;
  for (int w = opt.min_bits; w <= opt.max_bits; ++w)
    for (int a = opt.min_bits; a <= opt.max_bits; ++a) cells.emplace_back(w, a);

  std::vector<std::optional<PackingChoice>> slots(cells.size());
  std::vector<std::string> errors(cells.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < cells.size(); i += stride) {
      try {
        auto choice = search_optimal(cells[i].first, cells[i].second, shape, n, profile, opt);
        const auto rep = verify_choice(choice, profile, opt.sign, build.verify);
        if (!rep.passed()) {
          errors[i] = "cell (" + std::to_string(cells[i].first) + ", " + std::to_string(cells[i].second) +
                      ") failed verification: " + rep.counterexample->dump();
          continue;
        }
        slots[i] = std::move(choice);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned threads = build.threads ? build.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, cells.size());
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work, t, threads);
  work(0, threads);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) throw DomainError(errors[i]);
    table.entries.emplace(cells[i], std::move(*slots[i]));
  }
  return table;
}

inline json to_json(const LookupTable& t) {
  json entries = json::array();
  for (const auto& [key, choice] : t.entries) {
    json e = to_json(choice);
    e["w_b"] = key.first;
    e["a_b"] = key.second;
    entries.push_back(std::move(e));
  }
  json seq = t.seq_len.is_generic() ? json("generic") : json{{"n", *t.seq_len.n}};
  return json{{"version", LookupTable::kVersion},
              {"profile", to_json(t.profile)},
              {"kernel_shape", {t.kernel_shape.k_h, t.kernel_shape.k_w}},
              {"seq_len_policy", seq},
              {"signedness", to_json(t.options.sign)},
              {"search", {{"allow_overpack", t.options.allow_overpack},
                          {"allow_separation", t.options.allow_separation},
                          {"bits", {t.options.min_bits, t.options.max_bits}}}},
              {"entries", entries}};
}

inline std::string export_table(const LookupTable& t) { return to_json(t).dump(2) + "\n"; }

/// Parse and re-check a table document: every entry is re-validated and its
/// metrics recomputed, and the grid must be complete.
inline LookupTable table_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("lookup table must be a JSON object");
  if (require_field<int>(j, "version") != LookupTable::kVersion)
    throw SchemaError("unsupported lookup table version");
  LookupTable t;
  t.profile = profile_from_json(j.at("profile"));
  const auto ks = require_field<std::vector<int>>(j, "kernel_shape");
  if (ks.size() != 2 || ks[0] < 1 || ks[1] < 1) throw SchemaError("kernel_shape must be [K_h, K_w]");
  t.kernel_shape = {ks[0], ks[1]};
  const auto& seq = j.at("seq_len_policy");
  if (seq.is_string() && seq.get<std::string>() == "generic") {
    t.seq_len = SeqLen::generic();
  } else {
    const int n = require_field<int>(seq, "n");
    if (n < 1) throw SchemaError("seq_len_policy.n must be positive");
    t.seq_len = SeqLen::exact(n);
  }
  t.options.sign = j.contains("signedness") ? signedness_from_json(j.at("signedness")) : Signedness{};
  if (j.contains("search")) {
    const auto& s = j.at("search");
    t.options.allow_overpack = require_field<bool>(s, "allow_overpack");
    t.options.allow_separation = require_field<bool>(s, "allow_separation");
    const auto bits = require_field<std::vector<int>>(s, "bits");
    if (bits.size() != 2 || bits[0] < 1 || bits[0] > bits[1]) throw SchemaError("search.bits must be [lo, hi]");
    t.options.min_bits = bits[0];
    t.options.max_bits = bits[1];
  }
  if (!j.contains("entries") || !j.at("entries").is_array() || j.at("entries").empty())
    throw SchemaError("lookup table has no entries");
  for (const auto& e : j.at("entries")) {
    const int w = require_field<int>(e, "w_b");
    const int a = require_field<int>(e, "a_b");
    if (w < t.options.min_bits || w > t.options.max_bits || a < t.options.min_bits || a > t.options.max_bits)
      throw SchemaError("entry (" + std::to_string(w) + ", " + std::to_string(a) + ") outside the bit grid");
    auto choice = choice_from_json(e, t.kernel_shape.filter_len(), t.seq_len, t.profile, t.options.sign);
    const bool widths_match = choice.strategy == Strategy::kernel
                                  ? (choice.kernel().weights_on_d ? choice.kernel().d_b == w && choice.kernel().e_b == a
                                                                  : choice.kernel().d_b == a && choice.kernel().e_b == w)
                                  : choice.filter().w_b == w && choice.filter().a_b == a;
    if (!widths_match) throw DomainError("entry operand widths do not match its (w_b, a_b) key");
    if (!t.entries.emplace(std::pair{w, a}, std::move(choice)).second)
      throw SchemaError("duplicate entry (" + std::to_string(w) + ", " + std::to_string(a) + ")");
  }
  const auto side = t.options.max_bits - t.options.min_bits + 1;
  if (std::int64_t(t.entries.size()) != std::int64_t{side} * side) throw SchemaError("lookup table grid is incomplete");
  return t;
}

inline LookupTable import_table(const std::string& document) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("lookup table is not valid JSON: ") + e.what());
  }
  return table_from_json(j);
}

/// T_mul grid, rows w_b and columns a_b.
inline std::string export_csv(const LookupTable& t) {
  std::ostringstream out;
  out << "w_b\\a_b";
  for (int a = t.options.min_bits; a <= t.options.max_bits; ++a) out << ',' << a;
  out << '\n';
  for (int w = t.options.min_bits; w <= t.options.max_bits; ++w) {
    out << w;
    for (int a = t.options.min_bits; a <= t.options.max_bits; ++a) out << ',' << to_string(t.t_mul(w, a));
    out << '\n';
  }
  return out.str();
}

}  // namespace dspack
