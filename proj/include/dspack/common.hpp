#pragma once

#include <boost/rational.hpp>
#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

// Under C++20 rewritten comparisons, boost 1.74 resolves rational<int64_t> == int
// to its own reversed mixed-type operator, which calls itself forever. Exact
// non-template overloads win overload resolution and break the cycle.
namespace boost {
inline bool operator==(const rational<std::int64_t>& a, int b) { return a == rational<std::int64_t>(b); }
inline bool operator==(int b, const rational<std::int64_t>& a) { return a == rational<std::int64_t>(b); }
}  // namespace boost

namespace dspack {

using json = nlohmann::json;
using Rational = boost::rational<std::int64_t>;

// Malformed input: bad flags, schema mismatch, unparsable files. CLI exit 2.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Well-formed input with no valid answer: infeasible budgets, verification
// failures, missing table entries. CLI exit 1.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline json to_json(const Rational& r) {
  return json{{"num", r.numerator()}, {"den", r.denominator()}};
}

inline Rational rational_from_json(const json& j) {
  if (!j.is_object() || !j.contains("num") || !j.contains("den"))
    throw SchemaError("rational must be {num, den}");
  auto den = j.at("den").get<std::int64_t>();
  if (den <= 0) throw SchemaError("rational denominator must be positive");
  return Rational(j.at("num").get<std::int64_t>(), den);
}

inline std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline double to_double(const Rational& r) {
  return boost::rational_cast<double>(r);
}

// Smallest c with 2^c >= n, for n >= 1.
constexpr int ceil_log2(std::int64_t n) {
  int c = 0;
  while ((std::int64_t{1} << c) < n) ++c;
  return c;
}

constexpr std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return (a + b - 1) / b;
}

template <typename T>
T require_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace dspack
