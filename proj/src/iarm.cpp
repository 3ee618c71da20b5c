#include "op3d/iarm.hpp"

#include <algorithm>
#include <cmath>

#include "op3d/error.hpp"
#include "op3d/parallel.hpp"
#include "op3d/seed.hpp"

namespace op3d {

std::string_view to_string(RefineMode m) {
  return m == RefineMode::AzimuthOnly ? "azimuth" : "full2d";
}

RefineMode parse_refine_mode(std::string_view name) {
  if (name == "azimuth") return RefineMode::AzimuthOnly;
  if (name == "full2d") return RefineMode::Full2D;
  throw Error(Errc::InvalidArgument, "unknown refine mode '" + std::string(name) + "'");
}

std::vector<double> default_etas(int R) {
  if (R < 1) throw Error(Errc::InvalidArgument, "R must be >= 1");
  std::vector<double> e(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) e[static_cast<std::size_t>(r)] = 2.0 * (R - r);
  return e;
}

void RefineConfig::validate() const {
  if (R < 1) throw Error(Errc::InvalidArgument, "R must be >= 1");
  if (etas.size() != static_cast<std::size_t>(R)) {
    throw Error(Errc::InvalidArgument, "need exactly R step sizes, got " + std::to_string(etas.size()));
  }
  for (double e : etas) {
    if (!(e > 0.0) || !std::isfinite(e)) throw Error(Errc::InvalidArgument, "step sizes must be > 0");
  }
  if (!(fd_step > 0.0) || !std::isfinite(fd_step)) {
    throw Error(Errc::InvalidArgument, "finite-difference step must be > 0");
  }
}

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Larger score = smaller exponent; compare exponents to avoid underflow.
int score_diff_sign(const MatchScore& plus, const MatchScore& minus) {
  return sign_of(minus.exponent() - plus.exponent());
}

}  // namespace

std::vector<int> grad_sign(const AngleObjective& f, const ViewAngles& phi, RefineMode mode,
                           double fd_step, std::uint64_t seed) {
  if (!(fd_step > 0.0)) throw Error(Errc::InvalidArgument, "finite-difference step must be > 0");
  std::vector<int> g;
  g.push_back(score_diff_sign(f(ViewAngles(phi.phi1(), phi.phi2() + fd_step), seed),
                              f(ViewAngles(phi.phi1(), phi.phi2() - fd_step), seed)));
  if (mode == RefineMode::Full2D) {
    const double hi = std::min(90.0, phi.phi1() + fd_step);
    const double lo = std::max(-90.0, phi.phi1() - fd_step);
    g.push_back(score_diff_sign(f(ViewAngles(hi, phi.phi2()), seed),
                                f(ViewAngles(lo, phi.phi2()), seed)));
  }
  return g;
}

RefineResult refine_angles(const AngleObjective& f, const RefineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RefineResult res;
  ViewAngles phi = cfg.initial;
  res.trace.reserve(static_cast<std::size_t>(cfg.R) + 1);
  res.trace.push_back({0, phi, f(phi, seed)});
  for (int r = 0; r < cfg.R; ++r) {
    const double eta = cfg.etas[static_cast<std::size_t>(r)];
    const auto g = grad_sign(f, phi, cfg.mode, cfg.fd_step, derive_seed(seed, static_cast<std::uint64_t>(r) + 1));
    double phi2 = phi.phi2() + eta * g[0];
    double phi1 = phi.phi1();
    if (cfg.mode == RefineMode::Full2D) phi1 = std::clamp(phi1 + eta * g[1], -90.0, 90.0);
    phi = ViewAngles(phi1, phi2);
    res.trace.push_back({r + 1, phi, f(phi, seed)});
  }
  auto chosen = res.trace.end() - 1;
  if (cfg.keep_best) {
    // First maximal entry, so ties keep the earlier angle.
    chosen = std::max_element(res.trace.begin(), res.trace.end(),
                              [](const TraceStep& a, const TraceStep& b) {
                                return a.score.exponent() > b.score.exponent();
                              });
  }
  res.phi = chosen->phi;
  res.score = chosen->score;
  return res;
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::EmptyClassSet, "no values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction classify_openpose(const Sample& x, std::span<const std::string> classes,
                             const ScoringContext& ctx, const RefineConfig& cfg,
                             std::uint64_t seed, int jobs) {
  if (classes.empty()) throw Error(Errc::EmptyClassSet, "no candidate classes");
  cfg.validate();
  const AlignedSample aligned = pca_align_with_frame(x);

  Prediction p;
  p.classes.assign(classes.begin(), classes.end());
  p.pca_degenerate = aligned.frame.degenerate;
  p.angles.resize(classes.size());
  p.scores.resize(classes.size());
  p.traces.resize(classes.size());
  parallel_for(classes.size(), jobs, [&](std::size_t c) {
    const AngleObjective f = [&](const ViewAngles& phi, std::uint64_t s) {
      return score_class(aligned.sample, phi, p.classes[c], ctx, s);
    };
    auto r = refine_angles(f, cfg, seed);
    p.angles[c] = r.phi;
    p.scores[c] = r.score;
    p.traces[c] = std::move(r.trace);
  });
  p.probabilities = class_probabilities(p.scores);
  p.predicted = argmax_lowest(p.probabilities);
  return p;
}

}  // namespace op3d
