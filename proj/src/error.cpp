#include "oodkit/error.hpp"

namespace ood {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidShape: return "InvalidShape";
    case Errc::MissingClassMean: return "MissingClassMean";
    case Errc::MissingClass: return "MissingClass";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DegenerateRepresentation: return "DegenerateRepresentation";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::NotADistribution: return "NotADistribution";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ParseError: return "ParseError";
    case Errc::FormatError: return "FormatError";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::TooFewClasses: return "TooFewClasses";
    case Errc::UnknownClass: return "UnknownClass";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::NoPositivePairs: return "NoPositivePairs";
    case Errc::StepsExhausted: return "StepsExhausted";
    case Errc::DivergenceError: return "DivergenceError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string decorate(Errc code, const std::string& what, std::optional<std::size_t> line) {
  std::string msg(errc_name(code));
  if (line) msg += " (line " + std::to_string(*line) + ")";
  msg += ": ";
  msg += what;
  return msg;
}

}  // namespace

Error::Error(Errc code, const std::string& what, std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, what, line)), code_(code), line_(line) {}

}  // namespace ood
