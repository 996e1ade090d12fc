#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace probesense {

enum class Errc {
  NonPositiveDepth,
  DegenerateInput,
  PointAtInfinity,
  DimensionMismatch,
  ImageTooSmall,
  OutOfWrapRange,
  NotEnoughFeatures,
  AmbiguousWithoutStripe,
  CollinearPairs,
  Degenerate,
  CheiralityFailure,
  NoSolution,
  InsufficientExcitation,
  NotNormalized,
  NotEnoughValidPixels,
  DegenerateCloud,
  NoCandidate,
  NonConvergingRays,
  NotElongated,
  EmptyMask,
  ShapeMismatch,
  EmptyOverlap,
  NonPositiveValue,
  EmptyInput,
  LengthMismatch,
  ProbeOutOfView,
  Parse,
  Io,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::NonPositiveDepth: return "NonPositiveDepth";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::PointAtInfinity: return "PointAtInfinity";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::OutOfWrapRange: return "OutOfWrapRange";
    case Errc::NotEnoughFeatures: return "NotEnoughFeatures";
    case Errc::AmbiguousWithoutStripe: return "AmbiguousWithoutStripe";
    case Errc::CollinearPairs: return "CollinearPairs";
    case Errc::Degenerate: return "Degenerate";
    case Errc::CheiralityFailure: return "CheiralityFailure";
    case Errc::NoSolution: return "NoSolution";
    case Errc::InsufficientExcitation: return "InsufficientExcitation";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::NotEnoughValidPixels: return "NotEnoughValidPixels";
    case Errc::DegenerateCloud: return "DegenerateCloud";
    case Errc::NoCandidate: return "NoCandidate";
    case Errc::NonConvergingRays: return "NonConvergingRays";
    case Errc::NotElongated: return "NotElongated";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyOverlap: return "EmptyOverlap";
    case Errc::NonPositiveValue: return "NonPositiveValue";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ProbeOutOfView: return "ProbeOutOfView";
    case Errc::Parse: return "Parse";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error category.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace probesense
