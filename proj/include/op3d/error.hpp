#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace op3d {

enum class Errc {
  InvalidArgument,
  ParseError,
  Io,
  AllPointsCoincident,
  NonUnitQuaternion,
  NotCentered,
  EmptyDataset,
  UnreadableSample,
  UnknownDataset,
  EmptyProjection,
  StyleUnsupportedForInput,
  TimestepOutOfRange,
  NoTrials,
  EmptyClassSet,
  MatcherUnavailable,
  ProtocolError,
  EmptyTemplateBank,
  EmptyPredictions,
  ClassWithNoSamples,
  StyleSetMismatch,
};

std::string_view to_string(Errc code);

// All library failures are reported through this type; `code()` identifies the
// failure class, `what()` carries "<Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace op3d
