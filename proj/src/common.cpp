#include "netsheaf/common.hpp"

#include <cmath>

namespace netsheaf {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::DuplicateVariable: return "DuplicateVariable";
    case ErrorCode::LagNotDeclared: return "LagNotDeclared";
    case ErrorCode::CausalityViolated: return "CausalityViolated";
    case ErrorCode::CyclicAtLagZero: return "CyclicAtLagZero";
    case ErrorCode::FreeCoefficientPresent: return "FreeCoefficientPresent";
    case ErrorCode::SingularLink: return "SingularLink";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonPositiveForLog: return "NonPositiveForLog";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownCell: return "UnknownCell";
    case ErrorCode::NotSeriesStalk: return "NotSeriesStalk";
    case ErrorCode::InvalidNetlist: return "InvalidNetlist";
    case ErrorCode::OrderTooLarge: return "OrderTooLarge";
    case ErrorCode::NotGlobal: return "NotGlobal";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSurjective: return "NotSurjective";
    case ErrorCode::NotInvariant: return "NotInvariant";
  }
  return "Error";
}

std::uint64_t NormalSampler::raw() {
  // splitmix64: small, portable, well mixed.
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double NormalSampler::uniform() {
  // 53-bit mantissa, strictly inside (0,1).
  return (static_cast<double>(raw() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double NormalSampler::gauss() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u = uniform();
  double v = uniform();
  double r = std::sqrt(-2.0 * std::log(u));
  double a = 2.0 * M_PI * v;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

}  // namespace netsheaf
