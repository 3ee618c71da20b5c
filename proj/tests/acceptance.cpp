// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "op3d/core3d.hpp"
#include "op3d/evalkit.hpp"
#include "op3d/iarm.hpp"
#include "op3d/match.hpp"
#include "op3d/posegen.hpp"
#include "op3d/project.hpp"
#include "op3d/toyshapes.hpp"
#include "support.hpp"

using namespace op3d;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    o.ok = false;
    o.detail += " [over the " + std::to_string(static_cast<int>(limit_s)) + " s limit]";
  }
  if (!o.ok) ++failures;
  std::printf("%s  %-28s %7.2fs  %s\n", o.ok ? "PASS" : "FAIL", name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ------------------------------------------------------------ metrics --

Outcome metrics_fidelity() {
  struct Row {
    const char* name;
    double pct[14];
    double macc;
  };
  const Row rows[] = {
      {"IARM", {0, 71.4, 10.0, 0, 100.0, 12.5, 71.4, 37.5, 71.4, 27.3, 77.8, 0, 45.5, 28.6}, 39.5},
      {"Circular", {0, 57.1, 0, 0, 75.0, 12.5, 57.1, 37.5, 100.0, 9.1, 55.6, 0, 9.1, 0}, 29.5},
      {"Cube", {0, 57.1, 0, 0, 100.0, 0, 14.3, 25.0, 85.7, 0, 66.7, 0, 18.2, 0}, 26.2},
  };
  const auto split = load_split("mcgill");
  Outcome o{true, ""};
  for (const auto& row : rows) {
    std::vector<LabeledPrediction> preds;
    std::size_t i = 0;
    for (const auto& [cls, n] : split.unseen_test_counts) {
      const auto correct = static_cast<std::size_t>(std::lround(row.pct[i++] * n / 100.0));
      for (std::size_t k = 0; k < n; ++k) {
        preds.push_back({cls + "/" + std::to_string(k), cls, k < correct ? cls : std::string("other")});
      }
    }
    const auto m = compute_metrics(preds);
    const bool ok = std::abs(m.macc - row.macc) <= 0.05;
    o.ok = o.ok && ok;
    o.detail += std::string(row.name) + fmt(" %.3f (want %.1f)  ", m.macc, row.macc);
  }
  return o;
}

// ----------------------------------------------------------- benchmark --

Outcome benchmark_counts() {
  op3d::testing::TempDir dir("accept_bench");
  Outcome o{true, ""};
  for (const auto* name : {"modelnet10", "mcgill"}) {
    const auto split = load_split(name);
    const auto src = dir / (std::string(name) + "_src");
    op3d::testing::write_standin_tree(src, split);
    const auto a = generate_openpose_dataset(src, name, 42, dir / (std::string(name) + "_a"));
    generate_openpose_dataset(src, name, 42, dir / (std::string(name) + "_b"));
    const bool same = op3d::testing::slurp(dir / (std::string(name) + "_a") / kManifestFileName) ==
                      op3d::testing::slurp(dir / (std::string(name) + "_b") / kManifestFileName);
    const std::size_t want = std::string(name) == "modelnet10" ? 908 : 115;
    o.ok = o.ok && same && a.entries.size() == want;
    o.detail += std::string(name) + "=" + std::to_string(a.entries.size()) + (same ? " identical  " : " DIFFER  ");
  }
  return o;
}

// ---------------------------------------------------------------- pca --

Outcome pca_invariance() {
  double worst_pt = 0.0, worst_eig = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = op3d::testing::anisotropic_cloud(1000 + seed);
    const auto q = sample_rotation(77, seed);
    const auto xr = rotate(x, q);
    const auto a = pca_align(x);
    const auto b = pca_align(xr);
    Vec3 sgn;
    for (int k = 0; k < 3; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < a.points.size(); ++i) dot += a.points[i][k] * b.points[i][k];
      sgn[k] = dot >= 0.0 ? 1.0 : -1.0;
    }
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      worst_pt = std::max(worst_pt, (a.points[i] - b.points[i].cwiseProduct(sgn)).norm());
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> ea(covariance(normalize_to_unit(x)));
    const Eigen::SelfAdjointEigenSolver<Mat3> eb(covariance(normalize_to_unit(xr)));
    worst_eig = std::max(worst_eig, (ea.eigenvalues() - eb.eigenvalues()).cwiseAbs().maxCoeff());
  }
  return {worst_pt < 1e-5 && worst_eig < 1e-8,
          fmt("max point dist %.2e, max eigenvalue diff %.2e over 100 clouds", worst_pt, worst_eig)};
}

// --------------------------------------------------------- projection --

struct Bounds {
  double u0 = 1e9, u1 = -1e9, v0 = 1e9, v1 = -1e9;
};

// Pinhole projection of the cube corners, computed from first principles.
Bounds analytic_corner_bounds(double h, double e_deg, double a_deg, double r, double fov, int px) {
  const double e = e_deg * std::numbers::pi / 180, a = a_deg * std::numbers::pi / 180;
  const Vec3 c(r * std::cos(e) * std::cos(a), r * std::cos(e) * std::sin(a), r * std::sin(e));
  const Vec3 fwd = -c / r;
  const Vec3 right = fwd.cross(Vec3(0, 0, 1)).normalized();
  const Vec3 up = right.cross(fwd);
  const double f = 0.5 * px / std::tan(0.5 * fov * std::numbers::pi / 180);
  Bounds b;
  for (int i = 0; i < 8; ++i) {
    const Vec3 p((i & 1) ? h : -h, (i & 2) ? h : -h, (i & 4) ? h : -h);
    const Vec3 d = p - c;
    const double u = 0.5 * px + f * d.dot(right) / d.dot(fwd);
    const double v = 0.5 * px - f * d.dot(up) / d.dot(fwd);
    b.u0 = std::min(b.u0, u);
    b.u1 = std::max(b.u1, u);
    b.v0 = std::min(b.v0, v);
    b.v1 = std::max(b.v1, v);
  }
  return b;
}

double bbox_error(const GrayImage& img, const Bounds& want) {
  int x0 = img.width, x1 = -1, y0 = img.height, y1 = -1;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(x, y) > 0.0f) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return 1e9;
  return std::max({std::abs(x0 - want.u0), std::abs(x1 + 1 - want.u1), std::abs(y0 - want.v0),
                   std::abs(y1 + 1 - want.v1)});
}

Outcome projection_correctness() {
  const CameraConfig cam;  // r_p 2.2, fov 60, 224 px
  const Sample cube = toy_cube();
  PointCloud surface;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 60000; ++i) {
    Vec3 p(u(rng), u(rng), u(rng));
    p[i % 3] = (i / 3) % 2 ? 0.5 : -0.5;
    surface.points.push_back(p);
  }
  const Sample cloud = surface;

  double worst_px = 0.0;
  for (const auto& [e, a] : {std::pair{0.0, 0.0}, {20.0, 30.0}, {-35.0, 200.0}, {60.0, 300.0}}) {
    const auto want = analytic_corner_bounds(0.5, e, a, cam.r_p, cam.fov_deg, cam.image_px);
    const ViewAngles v(e, a);
    worst_px = std::max(worst_px, bbox_error(project(cube, v, ProjectionStyle::Render, cam), want));
    worst_px = std::max(worst_px, bbox_error(project(cloud, v, ProjectionStyle::Depth, cam), want));
  }

  const auto mask_iou = [](const GrayImage& a, const GrayImage& b) { return iou(binarize(a), binarize(b)); };
  double worst_iou = 1.0;
  const Sample pyr = normalize_to_unit(Sample(toy_pyramid()));
  for (const Sample* x : {&pyr, &cloud}) {
    const auto style = is_mesh(*x) ? ProjectionStyle::Render : ProjectionStyle::Depth;
    for (double a : {15.0, 100.0, 250.0}) {
      worst_iou = std::min(worst_iou, mask_iou(project(*x, ViewAngles(25, a), style, cam),
                                               project(*x, ViewAngles(25, a + 360), style, cam)));
      for (double theta : {40.0, 125.0}) {
        const auto rz = RotationQ::from_axis_angle(Vec3(0, 0, 1), theta);
        worst_iou = std::min(worst_iou, mask_iou(project(*x, ViewAngles(25, a), style, cam),
                                                 project(rotate(*x, rz), ViewAngles(25, a + theta), style, cam)));
      }
    }
  }
  return {worst_px <= 2.0 && worst_iou >= 0.98,
          fmt("max bbox error %.2f px, min IoU %.4f", worst_px, worst_iou)};
}

// ---------------------------------------------------------- diffusion --

Outcome diffusion_arithmetic() {
  const double zeros[] = {0, 0, 0, 0};
  const double ms_perfect = matching_score_from_errors(zeros).value();
  const double errs[] = {1.0, 3.0};
  const double ms13 = matching_score_from_errors(errs).value();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> m(0.0, 50.0);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MatchScore> s;
    for (int c = 0; c < 1 + trial % 40; ++c) s.push_back(MatchScore::from_exponent(m(rng)));
    const auto p = class_probabilities(s);
    double sum = 0.0;
    for (double v : p) sum += v;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  const std::vector<double> f0{0.5, -1.5, 2.25, 0.0};
  const std::vector<double> eps{-0.3, 0.7, 1.1, -2.0};
  const bool ends = noised_feature(f0, 1.0, eps) == f0 && noised_feature(f0, 0.0, eps) == eps;
  const bool ok = ms_perfect == 1.0 && std::abs(ms13 - std::exp(-2.0)) <= 1e-12 && worst_sum <= 1e-12 && ends;
  return {ok, fmt("MS(perfect)=%.17g, |MS{1,3}-e^-2|=%.1e, max |sum p - 1|=%.1e", ms_perfect,
                  std::abs(ms13 - std::exp(-2.0)), worst_sum) +
                  (ends ? ", endpoints exact" : ", endpoints WRONG")};
}

// --------------------------------------------------------------- iarm --

Outcome iarm_optimization() {
  constexpr double kRad = std::numbers::pi / 180.0;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> target(-90.0, 90.0);
  const RefineConfig cfg;  // R 10, etas 20..2, fd 5, keep_best
  int hits = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double star = target(rng);
    const auto f = [star, kRad](const ViewAngles& phi, std::uint64_t) {
      return MatchScore::from_exponent(1.0 - std::cos((phi.phi2() - star) * kRad));
    };
    // Optimum on a 1-degree grid.
    double grid_best = 0.0, grid_m = 1e9;
    for (int d = 0; d < 360; ++d) {
      const double mm = f(ViewAngles(90, d), 0).exponent();
      if (mm < grid_m) {
        grid_m = mm;
        grid_best = d;
      }
    }
    const auto r = refine_angles(f, cfg, static_cast<std::uint64_t>(trial));
    double dist = std::fmod(std::abs(r.phi.phi2() - grid_best), 360.0);
    dist = std::min(dist, 360.0 - dist);
    worst = std::max(worst, dist);
    if (dist <= 4.0) ++hits;
  }
  return {hits >= 18, std::to_string(hits) + "/20 within 4 deg" + fmt(", worst %.1f deg", worst)};
}

// ---------------------------------------------------------------- toy --

Outcome toy_end_to_end() {
  op3d::testing::TempDir dir("accept_toy");
  const auto toy = make_toy_benchmark(dir / "toy", 42, 10);
  const auto canon = toy_canonical();
  const ProjectionStyle styles[] = {ProjectionStyle::Depth};
  BaselineConfig cfg;
  const ReferenceMatcher rm(std::make_shared<const TemplateBank>(TemplateBank::build(canon, styles, cfg.scoring.camera)));
  cfg.scoring.matcher = &rm;

  std::map<ViewKind, double> acc;
  for (const auto v : {ViewKind::Single, ViewKind::Cube, ViewKind::Circular, ViewKind::Iarm}) {
    cfg.views = v;
    acc[v] = run_baseline(toy.dataset_dir, toy.manifest, cfg).metrics.acc;
  }
  cfg.views = ViewKind::Iarm;
  const auto one = run_baseline(toy.dataset_dir, toy.manifest, cfg);
  cfg.jobs = 3;
  const auto three = run_baseline(toy.dataset_dir, toy.manifest, cfg);
  std::ostringstream la, lb;
  write_run_log(la, config_json(cfg), one.records);
  write_run_log(lb, config_json(cfg), three.records);
  const bool det = la.str() == lb.str();

  const double iarm = acc[ViewKind::Iarm];
  const bool ok = iarm - acc[ViewKind::Single] >= 20.0 && iarm >= acc[ViewKind::Cube] &&
                  iarm >= acc[ViewKind::Circular] && det;
  return {ok, "Acc single " + format_percent(acc[ViewKind::Single]) + ", cube " +
                  format_percent(acc[ViewKind::Cube]) + ", circular " +
                  format_percent(acc[ViewKind::Circular]) + ", iarm " + format_percent(iarm) +
                  (det ? "; logs identical for jobs 1 and 3" : "; logs DIFFER across jobs")};
}

// ------------------------------------------------------------- prompts --

Outcome prompt_bank() {
  const bool r = build_prompt(ProjectionStyle::Render, "chair") == "one model of chair in linear composition";
  const bool d = build_prompt(ProjectionStyle::Depth, "chair") == "one line-drawn chair";
  const bool e = build_prompt(ProjectionStyle::Edge, "chair") == "one edge map of one standalone chair";
  return {r && d && e, std::string("render ") + (r ? "ok" : "WRONG") + ", depth " + (d ? "ok" : "WRONG") +
                           ", edge " + (e ? "ok" : "WRONG")};
}

}  // namespace

int main() {
  criterion("Metrics fidelity", 1, metrics_fidelity);
  criterion("Benchmark counts", 10, benchmark_counts);
  criterion("PCA invariance", 30, pca_invariance);
  criterion("Projection correctness", 60, projection_correctness);
  criterion("Diffusion-score arithmetic", 1, diffusion_arithmetic);
  criterion("IARM optimization", 10, iarm_optimization);
  criterion("End-to-end toy benchmark", 300, toy_end_to_end);
  criterion("Prompt bank", 1, prompt_bank);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
