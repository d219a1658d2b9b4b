#pragma once

// Stage cost model: Bayesian ridge regression with hyperparameters chosen by
// evidence maximization (MacKay's fixed-point updates), one independent model
// per target (DSPs, LUTs, worst negative slack).

#include "dspack/network.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace dspack {

/// One pipeline stage's hardware configuration, as seen by the cost model.
struct StageConfig {
  int layer = 0;
  int pf_dsp = 1;
  int pf_lut = 0;
  BitPair bits;
  std::int64_t op_mul = 0;
  int kernel_area = 1;
  Rational t_mul{1};  // throughput of the layer's packing choice
};

struct StageEstimate {
  std::int64_t r_dsp = 0;
  std::int64_t r_lut = 0;
  double t_wns = 0.0;  // ns
};

// Versioned so sample files stay interpretable. The constant term of the map
// is the fitted intercept.
inline constexpr const char* kFeatureMapId = "stage-v1";
inline constexpr std::size_t kNumFeatures = 7;
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "pf_dsp", "pf_lut", "w_b", "a_b", "w_b_x_a_b", "op_mul", "k_area"};
inline constexpr std::array<const char*, 3> kTargetNames = {"r_dsp", "r_lut", "t_wns"};

using FeatureVector = std::array<double, kNumFeatures>;

inline FeatureVector features(const StageConfig& c) {
  return {double(c.pf_dsp), double(c.pf_lut), double(c.bits.w_b),        double(c.bits.a_b),
          double(c.bits.w_b) * c.bits.a_b, double(c.op_mul), double(c.kernel_area)};
}

struct Sample {
  FeatureVector x{};
  std::array<double, 3> y{};  // r_dsp, r_lut, t_wns
};

/// A fitted single-target model over z-scored features.
struct RidgeTarget {
  std::vector<double> coef;  // per normalized feature
  double intercept = 0.0;
  double alpha = 1.0;   // noise precision
  double lambda = 1.0;  // weight precision
  int iterations = 0;
};

struct RegressionModel {
  FeatureVector mean{};
  FeatureVector scale{};
  std::array<RidgeTarget, 3> targets;

  std::array<double, kNumFeatures> normalize(const FeatureVector& x) const {
    std::array<double, kNumFeatures> z{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) z[i] = (x[i] - mean[i]) / scale[i];
    return z;
  }
  double predict_normalized(std::size_t target, const std::array<double, kNumFeatures>& z) const {
    const auto& t = targets[target];
    double v = t.intercept;
    for (std::size_t i = 0; i < kNumFeatures; ++i) v += t.coef[i] * z[i];
    return v;
  }
  double predict_raw(std::size_t target, const FeatureVector& x) const {
    return predict_normalized(target, normalize(x));
  }
  // Coefficients and intercept mapped back to raw feature units.
  std::pair<std::vector<double>, double> raw_coefficients(std::size_t target) const {
    const auto& t = targets[target];
    std::vector<double> c(kNumFeatures);
    double b = t.intercept;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      c[i] = t.coef[i] / scale[i];
      b -= c[i] * mean[i];
    }
    return {c, b};
  }
};

struct FitOptions {
  // Set both to skip evidence maximization and use these precisions as-is.
  std::optional<double> fixed_alpha;
  std::optional<double> fixed_lambda;
  double tol = 1e-6;
  int max_iter = 300;
  // Gamma hyperpriors on alpha and lambda.
  double alpha_1 = 1e-6, alpha_2 = 1e-6, lambda_1 = 1e-6, lambda_2 = 1e-6;
};

namespace detail {

inline RidgeTarget fit_target(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const FitOptions& opt) {
  const auto n = static_cast<double>(z.rows());
  RidgeTarget t;
  t.intercept = y.mean();
  const Eigen::VectorXd yc = y.array() - t.intercept;
  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::VectorXd zty = z.transpose() * yc;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd s = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::VectorXd vty = v.transpose() * zty;

  auto solve = [&](double alpha, double lambda) {
    const double ratio = lambda / alpha;
    Eigen::VectorXd w = vty.array() / (s.array() + ratio);
    return Eigen::VectorXd(v * w);
  };

  Eigen::VectorXd coef;
  if (opt.fixed_alpha && opt.fixed_lambda) {
    t.alpha = *opt.fixed_alpha;
    t.lambda = *opt.fixed_lambda;
    coef = solve(t.alpha, t.lambda);
  } else {
    const double var = yc.squaredNorm() / n;
    t.alpha = var > 0 ? 1.0 / var : 1.0;
    t.lambda = 1.0;
    coef = solve(t.alpha, t.lambda);
    for (t.iterations = 1; t.iterations <= opt.max_iter; ++t.iterations) {
      const double gamma = (t.alpha * s.array() / (t.lambda + t.alpha * s.array())).sum();
      const double rss = (yc - z * coef).squaredNorm();
      t.lambda = (gamma + 2 * opt.lambda_1) / (coef.squaredNorm() + 2 * opt.lambda_2);
      t.alpha = (n - gamma + 2 * opt.alpha_1) / (rss + 2 * opt.alpha_2);
      Eigen::VectorXd next = solve(t.alpha, t.lambda);
      const double change = (next - coef).norm() / std::max(next.norm(), 1e-300);
      coef = std::move(next);
      if (change < opt.tol) break;
    }
    t.iterations = std::min(t.iterations, opt.max_iter);
  }
  t.coef.assign(coef.data(), coef.data() + coef.size());
  return t;
}

}  // namespace detail

/// Fit the three stage-cost targets. Feature columns are z-scored; a constant
/// column keeps scale 1 and ends up with a zero coefficient.
inline RegressionModel fit(const std::vector<Sample>& samples, const FitOptions& opt = {}) {
  if (samples.size() < 2) throw DomainError("regression needs at least 2 samples");
  const auto n = static_cast<Eigen::Index>(samples.size());
  RegressionModel m;
  bool any_varying = false;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    double mu = 0;
    for (const auto& s : samples) {
      if (!std::isfinite(s.x[i])) throw SchemaError("non-finite feature value");
      mu += s.x[i];
    }
    mu /= double(n);
    double var = 0;
    for (const auto& s : samples) var += (s.x[i] - mu) * (s.x[i] - mu);
    var /= double(n);
    m.mean[i] = mu;
    m.scale[i] = var > 0 ? std::sqrt(var) : 1.0;
    any_varying = any_varying || var > 0;
  }
  if (!any_varying) throw DomainError("regression features are identical across all samples");

  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(kNumFeatures));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto zr = m.normalize(samples[r].x);
    for (std::size_t i = 0; i < kNumFeatures; ++i) z(r, Eigen::Index(i)) = zr[i];
  }
  for (std::size_t t = 0; t < 3; ++t) {
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!std::isfinite(samples[r].y[t])) throw SchemaError("non-finite target value");
      y(r) = samples[r].y[t];
    }
    m.targets[t] = detail::fit_target(z, y, opt);
  }
  return m;
}

/// Resource predictions are clamped at zero and rounded up; a residual within
/// 1e-6 of an integer counts as that integer.
inline StageEstimate predict(const RegressionModel& m, const StageConfig& c) {
  const auto x = features(c);
  auto resource = [&](std::size_t t) {
    const double v = m.predict_raw(t, x);
    return static_cast<std::int64_t>(std::max(0.0, std::ceil(v - 1e-6)));
  };
  return StageEstimate{resource(0), resource(1), m.predict_raw(2, x)};
}

inline json to_json(const RegressionModel& m) {
  json targets = json::object();
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& r = m.targets[t];
    targets[kTargetNames[t]] = {{"coefficients", r.coef},
                                {"intercept", r.intercept},
                                {"precisions", {{"noise", r.alpha}, {"weights", r.lambda}}},
                                {"iterations", r.iterations}};
  }
  return json{{"version", 1},
              {"feature_map_id", kFeatureMapId},
              {"features", kFeatureNames},
              {"normalization", {{"mean", m.mean}, {"scale", m.scale}}},
              {"targets", targets}};
}

inline RegressionModel model_from_json(const json& j) {
  if (require_field<int>(j, "version") != 1) throw SchemaError("unsupported model version");
  if (require_field<std::string>(j, "feature_map_id") != kFeatureMapId)
    throw SchemaError("model uses a different feature map");
  RegressionModel m;
  const auto& norm = j.at("normalization");
  const auto mean = require_field<std::vector<double>>(norm, "mean");
  const auto scale = require_field<std::vector<double>>(norm, "scale");
  if (mean.size() != kNumFeatures || scale.size() != kNumFeatures) throw SchemaError("normalization size mismatch");
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!(scale[i] > 0)) throw SchemaError("normalization scale must be positive");
    m.mean[i] = mean[i];
    m.scale[i] = scale[i];
  }
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& tj = j.at("targets").at(kTargetNames[t]);
    auto& r = m.targets[t];
    r.coef = require_field<std::vector<double>>(tj, "coefficients");
    if (r.coef.size() != kNumFeatures) throw SchemaError("coefficient count mismatch");
    r.intercept = require_field<double>(tj, "intercept");
    r.alpha = require_field<double>(tj.at("precisions"), "noise");
    r.lambda = require_field<double>(tj.at("precisions"), "weights");
    if (!(r.alpha > 0) || !(r.lambda > 0)) throw SchemaError("precisions must be positive");
    r.iterations = tj.value("iterations", 0);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Sample files

inline std::string format_double(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

inline std::string samples_to_csv(const std::vector<Sample>& samples) {
  std::ostringstream out;
  for (auto f : kFeatureNames) out << f << ',';
  out << "r_dsp,r_lut,t_wns\n";
  for (const auto& s : samples) {
    for (auto v : s.x) out << format_double(v) << ',';
    out << format_double(s.y[0]) << ',' << format_double(s.y[1]) << ',' << format_double(s.y[2]) << '\n';
  }
  return out.str();
}

inline std::vector<Sample> samples_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("sample file is empty");
  std::string expected;
  for (auto f : kFeatureNames) expected += std::string(f) + ",";
  expected += "r_dsp,r_lut,t_wns";
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) throw SchemaError("sample header must be: " + expected);
  std::vector<Sample> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw SchemaError("row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    if (vals.size() != kNumFeatures + 3) throw SchemaError("row " + std::to_string(row) + ": wrong column count");
    Sample s;
    for (std::size_t i = 0; i < kNumFeatures; ++i) s.x[i] = vals[i];
    for (std::size_t t = 0; t < 3; ++t) s.y[t] = vals[kNumFeatures + t];
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic sampling: a desk-scale stand-in for synthesizing random stage
// configurations. Each target is linear in the raw features plus Gaussian
// noise.

struct LinearGenerator {
  double intercept = 0.0;
  FeatureVector coef{};
  double noise = 0.0;  // standard deviation
};

struct GeneratorSpec {
  int samples = 200;
  std::vector<int> pf_dsp{1, 2, 4, 8, 16, 32, 64};
  std::vector<int> pf_lut{0};
  int min_bits = 2;
  int max_bits = 8;
  std::int64_t op_mul_lo = 10000;
  std::int64_t op_mul_hi = 5000000;
  std::vector<int> k_area{1, 9};
  std::array<LinearGenerator, 3> targets;
};

inline GeneratorSpec generator_from_json(const json& j) {
  if (require_field<int>(j, "version") != 1) throw SchemaError("unsupported generator version");
  GeneratorSpec g;
  g.samples = j.value("samples", g.samples);
  g.pf_dsp = j.value("pf_dsp", g.pf_dsp);
  g.pf_lut = j.value("pf_lut", g.pf_lut);
  if (j.contains("bits")) {
    const auto b = j.at("bits").get<std::vector<int>>();
    if (b.size() != 2) throw SchemaError("bits must be [lo, hi]");
    g.min_bits = b[0];
    g.max_bits = b[1];
  }
  if (j.contains("op_mul")) {
    const auto o = j.at("op_mul").get<std::vector<std::int64_t>>();
    if (o.size() != 2) throw SchemaError("op_mul must be [lo, hi]");
    g.op_mul_lo = o[0];
    g.op_mul_hi = o[1];
  }
  g.k_area = j.value("k_area", g.k_area);
  if (g.samples < 1 || g.pf_dsp.empty() || g.pf_lut.empty() || g.k_area.empty() || g.min_bits > g.max_bits ||
      g.op_mul_lo > g.op_mul_hi)
    throw SchemaError("generator ranges are empty");
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& tj = j.at("targets").at(kTargetNames[t]);
    auto& lg = g.targets[t];
    lg.intercept = tj.value("intercept", 0.0);
    lg.noise = tj.value("noise", 0.0);
    if (tj.contains("coef")) {
      for (const auto& [name, v] : tj.at("coef").items()) {
        std::size_t i = 0;
        while (i < kNumFeatures && name != kFeatureNames[i]) ++i;
        if (i == kNumFeatures) throw SchemaError("unknown feature '" + name + "'");
        lg.coef[i] = v.get<double>();
      }
    }
  }
  return g;
}

inline std::vector<Sample> synth_samples(const GeneratorSpec& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::vector<Sample> out;
  for (int i = 0; i < g.samples; ++i) {
    StageConfig c;
    c.pf_dsp = pick(g.pf_dsp);
    c.pf_lut = pick(g.pf_lut);
    c.bits.w_b = std::uniform_int_distribution<int>(g.min_bits, g.max_bits)(rng);
    c.bits.a_b = std::uniform_int_distribution<int>(g.min_bits, g.max_bits)(rng);
    c.op_mul = std::uniform_int_distribution<std::int64_t>(g.op_mul_lo, g.op_mul_hi)(rng);
    c.kernel_area = pick(g.k_area);
    Sample s;
    s.x = features(c);
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& lg = g.targets[t];
      double y = lg.intercept;
      for (std::size_t f = 0; f < kNumFeatures; ++f) y += lg.coef[f] * s.x[f];
      if (lg.noise > 0) y += std::normal_distribution<double>(0.0, lg.noise)(rng);
      s.y[t] = y;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace dspack
