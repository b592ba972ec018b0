#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace netsheaf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  UnknownVariable,
  DuplicateVariable,
  LagNotDeclared,
  CausalityViolated,
  CyclicAtLagZero,
  FreeCoefficientPresent,
  SingularLink,
  NotPositiveDefinite,
  MissingData,
  NonConvergence,
  BadDimension,
  ParseError,
  NonPositiveForLog,
  TooLarge,
  InvalidArgument,
  UnknownCell,
  NotSeriesStalk,
  InvalidNetlist,
  OrderTooLarge,
  NotGlobal,
  DimensionMismatch,
  NotSurjective,
  NotInvariant,
};

const char* error_code_name(ErrorCode c);

struct Error : std::runtime_error {
  ErrorCode code;
  Error(ErrorCode c, const std::string& what)
      : std::runtime_error(std::string(error_code_name(c)) + ": " + what), code(c) {}
};

// Deterministic scalar normal draws. std::normal_distribution is
// implementation-defined, so draws are produced directly from the engine bits.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  double uniform();        // in (0,1)
  double gauss();          // standard normal, Box-Muller
  std::uint64_t raw();

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace netsheaf
