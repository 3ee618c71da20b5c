#pragma once

// Iterative angle refinement: per class, sign-gradient ascent of the matching
// score over the projection angles, started from a PCA-aligned frame.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "op3d/match.hpp"
#include "op3d/project.hpp"

namespace op3d {

enum class RefineMode { AzimuthOnly, Full2D };

std::string_view to_string(RefineMode m);
RefineMode parse_refine_mode(std::string_view name);

// [2(R-1)+2, ..., 4, 2]; R=10 gives [20, 18, ..., 2].
std::vector<double> default_etas(int R);

struct RefineConfig {
  int R = 10;
  std::vector<double> etas = default_etas(10);  // degrees
  double fd_step = 5.0;                         // degrees
  RefineMode mode = RefineMode::AzimuthOnly;
  // Camera on the aligned frame's third (least-variance) axis.
  ViewAngles initial{90.0, 0.0};
  bool keep_best = true;

  void validate() const;
};

using AngleObjective = std::function<MatchScore(const ViewAngles&, std::uint64_t seed)>;

// Per-dimension sign of f(phi + d e_i) - f(phi - d e_i), sign(0) = 0. Both
// probes share `seed`. Dimension 0 is the azimuth; dimension 1 (Full2D only)
// is the elevation, whose probes are clamped to [-90, 90].
std::vector<int> grad_sign(const AngleObjective& f, const ViewAngles& phi, RefineMode mode,
                           double fd_step, std::uint64_t seed);

struct TraceStep {
  int r = 0;
  ViewAngles phi;
  MatchScore score;
};

struct RefineResult {
  ViewAngles phi;    // refined angle
  MatchScore score;  // score at `phi`
  std::vector<TraceStep> trace;  // R + 1 entries, r = 0..R
};

// phi(r+1) = phi(r) + eta_r * sign(grad). Trace scores use `seed`; the probes
// of iteration r use derive_seed(seed, r + 1).
RefineResult refine_angles(const AngleObjective& f, const RefineConfig& cfg, std::uint64_t seed);

struct Prediction {
  std::vector<std::string> classes;
  std::size_t predicted = 0;
  std::vector<ViewAngles> angles;
  std::vector<MatchScore> scores;
  std::vector<double> probabilities;
  std::vector<std::vector<TraceStep>> traces;
  bool pca_degenerate = false;

  const std::string& predicted_class() const { return classes.at(predicted); }
};

// Argmax of the normalized scores; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

// Aligns x, refines every class independently (on up to `jobs` threads),
// scores each class at its refined angle and normalizes.
Prediction classify_openpose(const Sample& x, std::span<const std::string> classes,
                             const ScoringContext& ctx, const RefineConfig& cfg,
                             std::uint64_t seed, int jobs = 1);

}  // namespace op3d
