#include <cmath>
#include <numbers>

#include "doctest.h"
#include "op3d/error.hpp"
#include "op3d/iarm.hpp"
#include "op3d/toyshapes.hpp"
#include "support.hpp"

using namespace op3d;

namespace {

constexpr double kRad = std::numbers::pi / 180.0;

AngleObjective unimodal(double target) {
  return [target](const ViewAngles& phi, std::uint64_t) {
    return MatchScore::from_exponent(1.0 - std::cos((phi.phi2() - target) * kRad));
  };
}

class ConstantMatcher final : public Matcher {
 public:
  MatcherFamily family() const override { return MatcherFamily::Diffusion; }
  std::vector<Evidence> evaluate(const GrayImage&, ProjectionStyle, std::span<const std::string> prompts,
                                 std::uint64_t) const override {
    return std::vector<Evidence>(prompts.size(), Evidence{MatcherFamily::Diffusion, {0.25}, 0.0});
  }
  std::string describe() const override { return "constant"; }
};

}  // namespace

TEST_CASE("default schedule") {
  CHECK(default_etas(10) == std::vector<double>{20, 18, 16, 14, 12, 10, 8, 6, 4, 2});
  CHECK(default_etas(1) == std::vector<double>{2});
  RefineConfig cfg;
  CHECK(cfg.R == 10);
  CHECK(cfg.fd_step == 5.0);
  CHECK(cfg.initial == ViewAngles(90, 0));
  cfg.validate();
  cfg.etas.pop_back();
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(parse_refine_mode("full2d") == RefineMode::Full2D);
  CHECK_THROWS_AS(parse_refine_mode("3d"), Error);
}

TEST_CASE("gradient sign") {
  const auto f = unimodal(40);
  CHECK(grad_sign(f, ViewAngles(0, 0), RefineMode::AzimuthOnly, 5, 0) == std::vector<int>{1});
  CHECK(grad_sign(f, ViewAngles(0, 80), RefineMode::AzimuthOnly, 5, 0) == std::vector<int>{-1});
  const AngleObjective flat = [](const ViewAngles&, std::uint64_t) { return MatchScore::from_exponent(0.5); };
  CHECK(grad_sign(flat, ViewAngles(10, 10), RefineMode::Full2D, 5, 0) == std::vector<int>{0, 0});
  // Elevation probes stay inside [-90, 90].
  const AngleObjective elev = [](const ViewAngles& phi, std::uint64_t) {
    return MatchScore::from_exponent((90.0 - phi.phi1()) / 180.0);
  };
  CHECK(grad_sign(elev, ViewAngles(88, 0), RefineMode::Full2D, 5, 0) == std::vector<int>{0, 1});
}

TEST_CASE("probes share one seed and iterations use distinct seeds") {
  std::vector<std::uint64_t> seen;
  const AngleObjective f = [&](const ViewAngles&, std::uint64_t s) {
    seen.push_back(s);
    return MatchScore::from_exponent(0.0);
  };
  RefineConfig cfg;
  cfg.R = 2;
  cfg.etas = default_etas(2);
  refine_angles(f, cfg, 99);
  // trace(0), probe+, probe-, trace(1), probe+, probe-, trace(2)
  REQUIRE(seen.size() == 7);
  CHECK(seen[0] == 99);
  CHECK(seen[1] == seen[2]);
  CHECK(seen[4] == seen[5]);
  CHECK(seen[1] != seen[4]);
  CHECK(seen[3] == 99);
}

TEST_CASE("one Full2D step moves both angles by eta") {
  const AngleObjective f = [](const ViewAngles& phi, std::uint64_t) {
    return MatchScore::from_exponent(1.0 - std::cos((phi.phi2() - 90.0) * kRad) +
                                     (90.0 - phi.phi1()) / 180.0);
  };
  RefineConfig cfg;
  cfg.R = 1;
  cfg.etas = {20};
  cfg.mode = RefineMode::Full2D;
  cfg.initial = ViewAngles(0, 0);
  cfg.keep_best = false;
  const auto r = refine_angles(f, cfg, 0);
  CHECK(r.phi == ViewAngles(20, 20));
  REQUIRE(r.trace.size() == 2);
  CHECK(r.trace[1].score == r.score);
}

TEST_CASE("a constant objective leaves the angle fixed") {
  const AngleObjective flat = [](const ViewAngles&, std::uint64_t) { return MatchScore::from_exponent(0.5); };
  RefineConfig cfg;
  const auto r = refine_angles(flat, cfg, 1);
  CHECK(r.phi == cfg.initial);
  CHECK(r.trace.size() == 11);
  for (const auto& t : r.trace) CHECK(t.phi == cfg.initial);
}

TEST_CASE("the default schedule converges on a unimodal objective") {
  // From azimuth 90 the iterates are 110, 128, 144, 130, 142, 132, 140, 134, 138, 136.
  RefineConfig cfg;
  cfg.initial = ViewAngles(90, 90);
  const auto r = refine_angles(unimodal(137), cfg, 0);
  CHECK(std::abs(r.phi.phi2() - 137.0) <= 2.0);
  const double expect[] = {90, 110, 128, 144, 130, 142, 132, 140, 134, 138, 136};
  for (int i = 0; i <= 10; ++i) CHECK(r.trace[i].phi.phi2() == doctest::Approx(expect[i]));
  // keep_best reports the best traced score.
  MatchScore best = r.trace.front().score;
  for (const auto& t : r.trace) best = std::max(best, t.score);
  CHECK(r.score == best);
  CHECK(r.phi.phi2() == 138.0);  // first of the two equally good angles
}

TEST_CASE("argmax ties go to the lowest index") {
  const double v[] = {0.2, 0.4, 0.4};
  CHECK(argmax_lowest(v) == 1);
  CHECK_THROWS_AS(argmax_lowest({}), Error);
}

TEST_CASE("classification with a constant matcher") {
  const ConstantMatcher cm;
  ScoringContext ctx;
  ctx.matcher = &cm;
  ctx.camera.image_px = 64;
  const Sample x = toy_cube();
  RefineConfig cfg;
  cfg.R = 2;
  cfg.etas = default_etas(2);
  const std::vector<std::string> three{"a", "b", "c"};
  const auto p = classify_openpose(x, three, ctx, cfg, 5);
  CHECK(p.predicted == 0);
  CHECK(p.predicted_class() == "a");
  for (double q : p.probabilities) CHECK(q == doctest::Approx(1.0 / 3.0));
  CHECK(p.traces.size() == 3);
  CHECK(p.scores[1].exponent() == doctest::Approx(0.25));
  const std::vector<std::string> one{"solo"};
  CHECK(classify_openpose(x, one, ctx, cfg, 5).probabilities == std::vector<double>{1.0});
  CHECK_THROWS_AS(classify_openpose(x, {}, ctx, cfg, 5), Error);
}

TEST_CASE("toy classification is deterministic across jobs and recovers the class") {
  CameraConfig cam;
  cam.image_px = 64;
  const auto canon = toy_canonical();
  const ProjectionStyle styles[] = {ProjectionStyle::Depth};
  const ReferenceMatcher rm(std::make_shared<const TemplateBank>(TemplateBank::build(canon, styles, cam)));
  ScoringContext ctx;
  ctx.matcher = &rm;
  ctx.camera = cam;
  const std::vector<std::string> classes{"cube", "pyramid", "rod"};
  const Sample rod = rotate(Sample(toy_rod()), RotationQ::from_axis_angle(Vec3(1, 2, 3), 70));
  RefineConfig cfg;
  const auto a = classify_openpose(rod, classes, ctx, cfg, 3, 1);
  const auto b = classify_openpose(rod, classes, ctx, cfg, 3, 3);
  CHECK(a.predicted_class() == "rod");
  CHECK(a.probabilities == b.probabilities);
  CHECK(a.angles == b.angles);

  // Refinement does at least as well as its starting view.
  for (std::size_t c = 0; c < 3; ++c) CHECK(a.scores[c] >= a.traces[c].front().score);
}
