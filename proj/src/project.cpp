#include "op3d/project.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include "op3d/error.hpp"

namespace op3d {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kPoleThresholdDeg = 89.9;
// Visible pixels never encode to the background value, even at the far plane.
constexpr float kMinVisibleIntensity = 1.0f / 255.0f;

}  // namespace

ViewAngles::ViewAngles(double phi1, double phi2) {
  if (!std::isfinite(phi1) || !std::isfinite(phi2)) {
    throw Error(Errc::InvalidArgument, "view angles must be finite");
  }
  if (phi1 < -90.0 || phi1 > 90.0) {
    throw Error(Errc::InvalidArgument, "elevation out of [-90, 90]: " + std::to_string(phi1));
  }
  double a = std::fmod(phi2, 360.0);
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a = 0.0;
  phi1_ = phi1;
  phi2_ = a;
}

void CameraConfig::validate() const {
  if (!(r_p > 1.0)) throw Error(Errc::InvalidArgument, "camera distance must exceed 1");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    throw Error(Errc::InvalidArgument, "fov must lie in (0, 180)");
  }
  if (image_px < 32) throw Error(Errc::InvalidArgument, "image size must be >= 32");
}

std::string_view to_string(ProjectionStyle s) {
  switch (s) {
    case ProjectionStyle::Render: return "render";
    case ProjectionStyle::Depth: return "depth";
    case ProjectionStyle::Edge: return "edge";
  }
  return "?";
}

ProjectionStyle parse_style(std::string_view name) {
  if (name == "render") return ProjectionStyle::Render;
  if (name == "depth") return ProjectionStyle::Depth;
  if (name == "edge") return ProjectionStyle::Edge;
  throw Error(Errc::InvalidArgument, "unknown projection style '" + std::string(name) + "'");
}

std::vector<ProjectionStyle> parse_styles(std::string_view csv) {
  std::vector<ProjectionStyle> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const auto tok = csv.substr(start, comma == std::string_view::npos ? csv.npos : comma - start);
    if (!tok.empty()) {
      const auto s = parse_style(tok);
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, "empty style list");
  return out;
}

CameraPose camera_from_angles(const ViewAngles& phi, const CameraConfig& cfg) {
  cfg.validate();
  const double e = phi.phi1() * kDegToRad;
  const double a = phi.phi2() * kDegToRad;
  CameraPose pose;
  pose.position = cfg.r_p * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
  pose.forward = (-pose.position).normalized();
  Vec3 up_ref(0.0, 0.0, 1.0);
  if (std::abs(phi.phi1()) > kPoleThresholdDeg) {
    // Limit of the projected +z axis when approaching the pole.
    const double s = phi.phi1() > 0.0 ? -1.0 : 1.0;
    up_ref = Vec3(s * std::cos(a), s * std::sin(a), 0.0);
  }
  pose.right = pose.forward.cross(up_ref).normalized();
  pose.up = pose.right.cross(pose.forward).normalized();
  return pose;
}

PinholeCamera::PinholeCamera(const ViewAngles& phi, const CameraConfig& cfg)
    : pose_(camera_from_angles(phi, cfg)),
      focal_px_(0.5 * cfg.image_px / std::tan(0.5 * cfg.fov_deg * kDegToRad)),
      size_(cfg.image_px) {}

PinholeCamera::Projected PinholeCamera::project(const Vec3& p) const {
  const Vec3 d = p - pose_.position;
  const double xc = d.dot(pose_.right);
  const double yc = d.dot(pose_.up);
  const double zc = d.dot(pose_.forward);
  const double half = 0.5 * size_;
  return {half + focal_px_ * xc / zc, half - focal_px_ * yc / zc, zc};
}

// ---------------------------------------------------------------- voxels --

VoxelGrid::VoxelGrid(int resolution) : g_(resolution) {
  if (resolution < 16) throw Error(Errc::InvalidArgument, "voxel resolution must be >= 16");
  cells_.assign(static_cast<std::size_t>(g_) * g_ * g_, 0);
}

std::size_t VoxelGrid::occupied() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

namespace {

// 3-tap max/min along one axis; out-of-range neighbours are ignored.
template <typename Op>
void filter_axis(std::vector<std::uint8_t>& cells, int g, std::size_t stride, Op op) {
  std::vector<std::uint8_t> line(static_cast<std::size_t>(g));
  const std::size_t total = cells.size();
  const std::size_t span = stride * static_cast<std::size_t>(g);
  for (std::size_t block = 0; block < total; block += span) {
    for (std::size_t off = 0; off < stride; ++off) {
      const std::size_t base = block + off;
      for (int t = 0; t < g; ++t) line[static_cast<std::size_t>(t)] = cells[base + t * stride];
      for (int t = 0; t < g; ++t) {
        std::uint8_t v = line[static_cast<std::size_t>(t)];
        if (t > 0) v = op(v, line[static_cast<std::size_t>(t - 1)]);
        if (t + 1 < g) v = op(v, line[static_cast<std::size_t>(t + 1)]);
        cells[base + t * stride] = v;
      }
    }
  }
}

}  // namespace

void VoxelGrid::dilate() {
  const auto mx = [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); };
  const auto g = static_cast<std::size_t>(g_);
  filter_axis(cells_, g_, 1, mx);
  filter_axis(cells_, g_, g, mx);
  filter_axis(cells_, g_, g * g, mx);
}

void VoxelGrid::erode() {
  const auto mn = [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); };
  const auto g = static_cast<std::size_t>(g_);
  filter_axis(cells_, g_, 1, mn);
  filter_axis(cells_, g_, g, mn);
  filter_axis(cells_, g_, g * g, mn);
}

namespace {

constexpr double kNoDepth = std::numeric_limits<double>::infinity();

// Nearer = brighter, per-image normalization, background 0.
GrayImage encode_depth(const std::vector<double>& depth, int w, int h) {
  double dmin = kNoDepth, dmax = -kNoDepth;
  for (double d : depth) {
    if (d == kNoDepth) continue;
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  GrayImage img(w, h);
  if (dmin == kNoDepth) return img;
  const double range = dmax - dmin;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth[i] == kNoDepth) continue;
    const double v = range > 0.0 ? 1.0 - (depth[i] - dmin) / range : 1.0;
    img.pixels[i] = std::max(static_cast<float>(v), kMinVisibleIntensity);
  }
  return img;
}

// 5x5 binomial blur whose support is restricted to the foreground, so the
// silhouette is preserved while depth steps are softened.
GrayImage masked_binomial_blur(const GrayImage& img) {
  static constexpr double kTaps[5] = {1, 4, 6, 4, 1};
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.at(x, y) <= 0.0f) continue;
      double acc = 0.0, wsum = 0.0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (!img.contains(xx, yy) || img.at(xx, yy) <= 0.0f) continue;
          const double w = kTaps[dx + 2] * kTaps[dy + 2];
          acc += w * img.at(xx, yy);
          wsum += w;
        }
      }
      out.at(x, y) = std::max(static_cast<float>(acc / wsum), kMinVisibleIntensity);
    }
  }
  return out;
}

}  // namespace

GrayImage project_pointcloud_depth(const PointCloud& x, const ViewAngles& phi,
                                   const CameraConfig& cfg, const VoxelParams& vp) {
  const PinholeCamera cam(phi, cfg);
  const int g = vp.resolution;
  VoxelGrid grid(g);
  const double cell_px = static_cast<double>(cfg.image_px) / g;
  const double near = cfg.r_p - 1.0;

  // (1) voxelize in the perspective frustum.
  std::size_t inside = 0;
  for (const auto& p : x.points) {
    const auto pr = cam.project(p);
    if (!(pr.depth > 1e-9)) continue;
    const double fi = std::floor(pr.u / cell_px);
    const double fj = std::floor(pr.v / cell_px);
    if (fi < 0 || fj < 0 || fi >= g || fj >= g) continue;
    const int k = std::clamp(static_cast<int>(std::floor((pr.depth - near) * 0.5 * g)), 0, g - 1);
    grid.at(static_cast<int>(fi), static_cast<int>(fj), k) = 1;
    ++inside;
  }
  if (inside == 0) throw Error(Errc::EmptyProjection, "no point inside the view frustum");

  // (2) densify: morphological closing fills gaps between samples without
  // growing the outer silhouette.
  for (int i = 0; i < vp.densify_passes; ++i) grid.dilate();
  for (int i = 0; i < vp.densify_passes; ++i) grid.erode();

  // (3) squeeze: nearest occupied depth bin per image-plane cell.
  std::vector<double> cell_depth(static_cast<std::size_t>(g) * g, kNoDepth);
  for (int j = 0; j < g; ++j) {
    for (int i = 0; i < g; ++i) {
      for (int k = 0; k < g; ++k) {
        if (grid.at(i, j, k)) {
          cell_depth[static_cast<std::size_t>(j) * g + i] = near + (k + 0.5) * 2.0 / g;
          break;
        }
      }
    }
  }
  // (4) smooth the depth map within the silhouette.
  const GrayImage coarse = masked_binomial_blur(encode_depth(cell_depth, g, g));

  GrayImage img(cfg.image_px, cfg.image_px);
  for (int py = 0; py < cfg.image_px; ++py) {
    const int j = std::min(g - 1, static_cast<int>((py + 0.5) / cell_px));
    for (int px = 0; px < cfg.image_px; ++px) {
      const int i = std::min(g - 1, static_cast<int>((px + 0.5) / cell_px));
      img.at(px, py) = coarse.at(i, j);
    }
  }
  return img;
}

// ------------------------------------------------------------ raster ----

namespace {

struct RasterResult {
  std::vector<double> depth;  // kNoDepth where empty
  std::vector<float> shade;
  std::size_t covered = 0;
};

RasterResult rasterize(const TriMesh& m, const ViewAngles& phi, const CameraConfig& cfg) {
  validate(m);
  const PinholeCamera cam(phi, cfg);
  const int n = cfg.image_px;
  RasterResult r;
  r.depth.assign(static_cast<std::size_t>(n) * n, kNoDepth);
  r.shade.assign(r.depth.size(), 0.0f);
  const Vec3 light = cam.pose().position.normalized();

  std::vector<PinholeCamera::Projected> proj;
  proj.reserve(m.vertices.size());
  for (const auto& v : m.vertices) proj.push_back(cam.project(v));

  for (const auto& f : m.faces) {
    const auto& a = proj[f[0]];
    const auto& b = proj[f[1]];
    const auto& c = proj[f[2]];
    if (!(a.depth > 1e-6 && b.depth > 1e-6 && c.depth > 1e-6)) continue;

    const Vec3& wa = m.vertices[f[0]];
    Vec3 normal = (m.vertices[f[1]] - wa).cross(m.vertices[f[2]] - wa);
    const double nlen = normal.norm();
    if (!(nlen > 0.0)) continue;
    normal /= nlen;
    if (normal.dot(cam.pose().position - wa) < 0.0) normal = -normal;
    const float lambert = static_cast<float>(std::max(0.0, normal.dot(light)));

    const double area = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.u, b.u, c.u}))));
    const int x1 = std::min(n - 1, static_cast<int>(std::floor(std::max({a.u, b.u, c.u}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.v, b.v, c.v}))));
    const int y1 = std::min(n - 1, static_cast<int>(std::floor(std::max({a.v, b.v, c.v}))));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = ((b.u - px) * (c.v - py) - (b.v - py) * (c.u - px)) / area;
        const double w1 = ((c.u - px) * (a.v - py) - (c.v - py) * (a.u - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // 1/z is affine in screen space.
        const double z = 1.0 / (w0 / a.depth + w1 / b.depth + w2 / c.depth);
        const std::size_t idx = static_cast<std::size_t>(y) * n + x;
        if (z < r.depth[idx]) {
          if (r.depth[idx] == kNoDepth) ++r.covered;
          r.depth[idx] = z;
          r.shade[idx] = lambert;
        }
      }
    }
  }
  if (r.covered == 0) throw Error(Errc::EmptyProjection, "mesh covers no pixel");
  return r;
}

}  // namespace

GrayImage render_mesh(const TriMesh& m, const ViewAngles& phi, const CameraConfig& cfg) {
  const auto r = rasterize(m, phi, cfg);
  GrayImage img(cfg.image_px, cfg.image_px);
  img.pixels = r.shade;
  return img;
}

GrayImage mesh_depth(const TriMesh& m, const ViewAngles& phi, const CameraConfig& cfg) {
  const auto r = rasterize(m, phi, cfg);
  return encode_depth(r.depth, cfg.image_px, cfg.image_px);
}

// ------------------------------------------------------------- canny ----

namespace {

std::vector<double> gaussian5(const GrayImage& img) {
  static constexpr double kSigma = 1.0;
  double k[5];
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) sum += k[i + 2] = std::exp(-0.5 * i * i / (kSigma * kSigma));
  for (double& v : k) v /= sum;

  const int w = img.width, h = img.height;
  auto clampx = [w](int x) { return std::clamp(x, 0, w - 1); };
  auto clampy = [h](int y) { return std::clamp(y, 0, h - 1); };
  std::vector<double> tmp(img.pixels.size()), out(img.pixels.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * img.at(clampx(x + i), y);
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * tmp[static_cast<std::size_t>(clampy(y + i)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

GrayImage canny_edges(const GrayImage& img, double low, double high) {
  if (!(low >= 0.0 && low < high && high <= 1.0)) {
    throw Error(Errc::InvalidArgument, "canny thresholds need 0 <= low < high <= 1");
  }
  const int w = img.width, h = img.height;
  GrayImage out(w, h);
  if (w < 3 || h < 3) return out;

  const auto s = gaussian5(img);
  auto at = [&](int x, int y) {
    return s[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };
  std::vector<double> mag(s.size(), 0.0);
  std::vector<std::uint8_t> dir(s.size(), 0);
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      const double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      mag[i] = std::hypot(gx, gy);
      max_mag = std::max(max_mag, mag[i]);
      // Quantize the gradient direction to 0, 45, 90, 135 degrees.
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      dir[i] = static_cast<std::uint8_t>(static_cast<int>(std::floor((angle + 22.5) / 45.0)) % 4);
    }
  }
  // Flat images (up to float noise) carry no edges.
  if (max_mag < 1e-6) return out;
  for (auto& m : mag) m /= max_mag;

  static constexpr int kStep[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  std::vector<double> thin(mag.size(), 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int dx = kStep[dir[i]][0], dy = kStep[dir[i]][1];
      const double fwd = mag[static_cast<std::size_t>(y + dy) * w + (x + dx)];
      const double back = mag[static_cast<std::size_t>(y - dy) * w + (x - dx)];
      // Asymmetric comparison keeps exactly one pixel of a two-pixel plateau.
      if (mag[i] > back && mag[i] >= fwd) thin[i] = mag[i];
    }
  }

  std::deque<std::size_t> frontier;
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] > high) {
      out.pixels[i] = 1.0f;
      frontier.push_back(i);
    }
  }
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop_front();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx, yy = y + dy;
        if ((dx == 0 && dy == 0) || xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
        if (out.pixels[j] == 0.0f && thin[j] > low) {
          out.pixels[j] = 1.0f;
          frontier.push_back(j);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------- dispatch ----

GrayImage project(const Sample& x, const ViewAngles& phi, ProjectionStyle style,
                  const CameraConfig& cfg) {
  cfg.validate();
  if (const auto* mesh = std::get_if<TriMesh>(&x)) {
    switch (style) {
      case ProjectionStyle::Render: return render_mesh(*mesh, phi, cfg);
      case ProjectionStyle::Depth: return mesh_depth(*mesh, phi, cfg);
      case ProjectionStyle::Edge:
        return canny_edges(render_mesh(*mesh, phi, cfg), kMeshCanny.low, kMeshCanny.high);
    }
  }
  const auto& pc = std::get<PointCloud>(x);
  switch (style) {
    case ProjectionStyle::Render:
      throw Error(Errc::StyleUnsupportedForInput, "render style requires a mesh");
    case ProjectionStyle::Depth: return project_pointcloud_depth(pc, phi, cfg);
    case ProjectionStyle::Edge:
      return canny_edges(project_pointcloud_depth(pc, phi, cfg), kPointCloudCanny.low,
                         kPointCloudCanny.high);
  }
  throw Error(Errc::InvalidArgument, "unknown style");
}

FixedViewKind parse_fixed_view_kind(std::string_view name) {
  if (name == "single") return FixedViewKind::Single;
  if (name == "cube") return FixedViewKind::Cube;
  if (name == "circular") return FixedViewKind::Circular;
  throw Error(Errc::InvalidArgument, "unknown view set '" + std::string(name) + "'");
}

std::vector<ViewAngles> fixed_view_sets(FixedViewKind kind, int n_views, double phi1) {
  switch (kind) {
    case FixedViewKind::Single: return {ViewAngles(90.0, 0.0)};
    case FixedViewKind::Cube:
      return {ViewAngles(90.0, 0.0),  ViewAngles(-90.0, 0.0),  ViewAngles(0.0, 0.0),
              ViewAngles(0.0, 90.0),  ViewAngles(0.0, 180.0), ViewAngles(0.0, 270.0)};
    case FixedViewKind::Circular: {
      if (n_views < 1) throw Error(Errc::InvalidArgument, "circular views need n_views >= 1");
      std::vector<ViewAngles> v;
      v.reserve(static_cast<std::size_t>(n_views));
      for (int i = 0; i < n_views; ++i) v.emplace_back(phi1, 360.0 * i / n_views);
      return v;
    }
  }
  return {};
}

}  // namespace op3d
