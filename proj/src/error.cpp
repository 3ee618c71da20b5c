#include "op3d/error.hpp"

namespace op3d {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ParseError: return "ParseError";
    case Errc::Io: return "IoError";
    case Errc::AllPointsCoincident: return "AllPointsCoincident";
    case Errc::NonUnitQuaternion: return "NonUnitQuaternion";
    case Errc::NotCentered: return "NotCentered";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::UnreadableSample: return "UnreadableSample";
    case Errc::UnknownDataset: return "UnknownDataset";
    case Errc::EmptyProjection: return "EmptyProjection";
    case Errc::StyleUnsupportedForInput: return "StyleUnsupportedForInput";
    case Errc::TimestepOutOfRange: return "TimestepOutOfRange";
    case Errc::NoTrials: return "NoTrials";
    case Errc::EmptyClassSet: return "EmptyClassSet";
    case Errc::MatcherUnavailable: return "MatcherUnavailable";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::EmptyTemplateBank: return "EmptyTemplateBank";
    case Errc::EmptyPredictions: return "EmptyPredictions";
    case Errc::ClassWithNoSamples: return "ClassWithNoSamples";
    case Errc::StyleSetMismatch: return "StyleSetMismatch";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

}  // namespace op3d
