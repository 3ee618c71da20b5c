#pragma once

// Geometry containers, rigid rotation, and the covariance/eigen-frame machinery
// used for pose normalization.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace op3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
};

// A classification input: either a bare point cloud or a triangle mesh.
using Sample = std::variant<PointCloud, TriMesh>;

std::span<const Vec3> positions(const Sample& s);
bool is_mesh(const Sample& s);

// Throws InvalidArgument when N < 3, a coordinate is non-finite, or (meshes)
// a face index is out of range / the face list is empty.
void validate(const PointCloud& pc);
void validate(const TriMesh& mesh);

// Unit quaternion (w, x, y, z). Construction rejects non-unit input.
class RotationQ {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  RotationQ() = default;
  RotationQ(double w, double x, double y, double z);

  static RotationQ identity() { return {}; }
  static RotationQ from_axis_angle(const Vec3& axis, double degrees);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Mat3 matrix() const;
  Vec3 apply(const Vec3& v) const { return matrix() * v; }

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

struct CovarianceFrame {
  Mat3 sigma = Mat3::Zero();
  Vec3 eigvals = Vec3::Zero();     // descending
  Mat3 eigvecs = Mat3::Identity();  // columns e1, e2, e3; det = +1
  bool degenerate = false;          // some eigenvalue gap below kDegenerateGap

  static constexpr double kDegenerateGap = 1e-9;
};

Vec3 centroid(std::span<const Vec3> pts);

// Translate the centroid (vertex mean) to the origin and scale so that the
// farthest vertex has norm 1.
PointCloud normalize_to_unit(const PointCloud& pc);
TriMesh normalize_to_unit(const TriMesh& mesh);
Sample normalize_to_unit(const Sample& s);

PointCloud rotate(const PointCloud& pc, const RotationQ& q);
TriMesh rotate(const TriMesh& mesh, const RotationQ& q);
Sample rotate(const Sample& s, const RotationQ& q);

// sigma = (x^T x) / N for a centered cloud. Throws NotCentered when the
// centroid norm exceeds 1e-4.
Mat3 covariance(std::span<const Vec3> pts);
inline Mat3 covariance(const PointCloud& pc) { return covariance(pc.points); }

// Symmetric 3x3 eigen-decomposition by cyclic Jacobi rotations.
// Each eigenvector is flipped so its largest-magnitude component is positive,
// then e3 is negated if the frame is left-handed.
CovarianceFrame eigen_frame(const Mat3& sigma);

struct AlignedSample {
  Sample sample;
  CovarianceFrame frame;
};

// normalize_to_unit, covariance, eigen_frame, then x' = x [e1 e2 e3].
AlignedSample pca_align_with_frame(const Sample& s);
PointCloud pca_align(const PointCloud& pc);
TriMesh pca_align(const TriMesh& mesh);
Sample pca_align(const Sample& s);

}  // namespace op3d
