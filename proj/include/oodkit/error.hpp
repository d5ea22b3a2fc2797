#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ood {

enum class Errc {
  EmptyInput,
  DimensionMismatch,
  LengthMismatch,
  ShapeMismatch,
  InvalidShape,
  MissingClassMean,
  MissingClass,
  NotSymmetric,
  NoConvergence,
  ZeroVector,
  DegenerateRepresentation,
  NotNormalized,
  NotADistribution,
  InvalidConfig,
  ParseError,
  FormatError,
  LabelOutOfRange,
  TooFewClasses,
  UnknownClass,
  BatchTooSmall,
  NoPositivePairs,
  StepsExhausted,
  DivergenceError,
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

/// Library-wide exception. Carries a machine-checkable code and, for
/// file parsing, the 1-based line number that failed.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::optional<std::size_t> line = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  Errc code_;
  std::optional<std::size_t> line_;
};

}  // namespace ood
