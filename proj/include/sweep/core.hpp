#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sweep {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Default tolerances shared by all modules.
struct Tolerances {
  double feas = 1e-9;       ///< membership in Theta
  double rank_rel = 1e-8;   ///< rank cutoff relative to sigma_max
  double residual = 1e-6;   ///< certificate residual pass threshold
  double pos = 1e-8;        ///< strict positivity of multipliers
};

enum class ErrorKind {
  configuration,
  projection_failure,
  numerical_failure,
  surjectivity,
  not_in_cone,
  domain,
  precondition,
  simulation,
  schema,
  unknown_instance,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::projection_failure: return "projection_failure";
    case ErrorKind::numerical_failure: return "numerical_failure";
    case ErrorKind::surjectivity: return "surjectivity";
    case ErrorKind::not_in_cone: return "not_in_cone";
    case ErrorKind::domain: return "domain";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::simulation: return "simulation";
    case ErrorKind::schema: return "schema";
    case ErrorKind::unknown_instance: return "unknown_instance";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}
  ErrorKind kind() const { return kind_; }
  /// Message without the kind prefix.
  const std::string& message() const { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

inline Vec vec1(double a) { return Vec::Constant(1, a); }

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace sweep
