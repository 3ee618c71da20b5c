#pragma once

// The projection function: a perspective camera on a sphere around the
// unit-normalized object, point-cloud voxel projection, mesh rasterization,
// and Canny edge maps.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "op3d/core3d.hpp"
#include "op3d/image.hpp"

namespace op3d {

// Elevation phi1 in [-90, 90] degrees; azimuth phi2 kept in [0, 360).
class ViewAngles {
 public:
  ViewAngles() = default;
  ViewAngles(double phi1, double phi2);

  double phi1() const { return phi1_; }
  double phi2() const { return phi2_; }

  bool operator==(const ViewAngles&) const = default;

 private:
  double phi1_ = 0.0;
  double phi2_ = 0.0;
};

struct CameraConfig {
  double r_p = 2.2;
  double fov_deg = 60.0;
  int image_px = 224;

  void validate() const;
};

enum class ProjectionStyle { Render, Depth, Edge };

std::string_view to_string(ProjectionStyle s);
ProjectionStyle parse_style(std::string_view name);
// "depth,edge" -> {Depth, Edge}; duplicates removed, order kept.
std::vector<ProjectionStyle> parse_styles(std::string_view csv);

struct CameraPose {
  Vec3 position;
  Vec3 forward;  // unit, toward the origin
  Vec3 up;       // unit, orthogonal to forward
  Vec3 right;    // unit, forward x up
};

// Up is +z except within 0.1 degree of a pole, where it becomes
// (-cos phi2, -sin phi2, 0).
CameraPose camera_from_angles(const ViewAngles& phi, const CameraConfig& cfg);

// Pinhole mapping from world points to continuous pixel coordinates
// (pixel (i, j) covers [i, i+1) x [j, j+1); row 0 at the top).
class PinholeCamera {
 public:
  PinholeCamera(const ViewAngles& phi, const CameraConfig& cfg);

  struct Projected {
    double u, v;   // pixel coordinates
    double depth;  // distance along the view axis
  };
  Projected project(const Vec3& p) const;

  const CameraPose& pose() const { return pose_; }
  double focal_px() const { return focal_px_; }
  int size() const { return size_; }

 private:
  CameraPose pose_;
  double focal_px_;
  int size_;
};

// Dense occupancy grid over the view frustum: G x G image-plane cells by G
// depth bins spanning [r_p - 1, r_p + 1].
class VoxelGrid {
 public:
  explicit VoxelGrid(int resolution);

  int resolution() const { return g_; }
  std::uint8_t& at(int i, int j, int k) { return cells_[index(i, j, k)]; }
  std::uint8_t at(int i, int j, int k) const { return cells_[index(i, j, k)]; }
  std::size_t occupied() const;

  // One pass of 3x3x3 max (dilate) or min (erode) filtering.
  void dilate();
  void erode();

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * g_ + j) * g_ + i;
  }
  int g_;
  std::vector<std::uint8_t> cells_;
};

struct VoxelParams {
  int resolution = 128;
  int densify_passes = 2;
};

GrayImage project_pointcloud_depth(const PointCloud& x, const ViewAngles& phi,
                                   const CameraConfig& cfg, const VoxelParams& vp = {});

// Flat-shaded z-buffered rasterization lit by a distant light along the
// camera direction.
GrayImage render_mesh(const TriMesh& m, const ViewAngles& phi, const CameraConfig& cfg);

// Z-buffered mesh depth with the same encoding as the point-cloud path.
GrayImage mesh_depth(const TriMesh& m, const ViewAngles& phi, const CameraConfig& cfg);

struct CannyThresholds {
  double low;
  double high;
};
inline constexpr CannyThresholds kPointCloudCanny{0.10, 0.20};
inline constexpr CannyThresholds kMeshCanny{0.20, 0.40};

// Gaussian smoothing, Sobel gradients, non-maximum suppression, double
// threshold and hysteresis. Thresholds are fractions of the image's largest
// gradient magnitude. Output is binary {0, 1}.
GrayImage canny_edges(const GrayImage& img, double low = kPointCloudCanny.low,
                      double high = kPointCloudCanny.high);

// Render requires a mesh. Edge runs canny on Render (mesh) or Depth (cloud).
GrayImage project(const Sample& x, const ViewAngles& phi, ProjectionStyle style,
                  const CameraConfig& cfg);

enum class FixedViewKind { Single, Cube, Circular };

FixedViewKind parse_fixed_view_kind(std::string_view name);

std::vector<ViewAngles> fixed_view_sets(FixedViewKind kind, int n_views = 12,
                                        double phi1 = 30.0);

}  // namespace op3d
