#include "op3d/core3d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "op3d/error.hpp"

namespace op3d {

std::span<const Vec3> positions(const Sample& s) {
  return std::visit(
      [](const auto& g) -> std::span<const Vec3> {
        if constexpr (std::is_same_v<std::decay_t<decltype(g)>, PointCloud>) {
          return g.points;
        } else {
          return g.vertices;
        }
      },
      s);
}

bool is_mesh(const Sample& s) { return std::holds_alternative<TriMesh>(s); }

namespace {

void validate_points(std::span<const Vec3> pts) {
  if (pts.size() < 3) {
    throw Error(Errc::InvalidArgument,
                "need at least 3 points, got " + std::to_string(pts.size()));
  }
  for (const auto& p : pts) {
    if (!p.allFinite()) throw Error(Errc::InvalidArgument, "non-finite coordinate");
  }
}

std::vector<Vec3> normalized_points(std::span<const Vec3> pts) {
  validate_points(pts);
  const Vec3 c = centroid(pts);
  double max_norm = 0.0;
  for (const auto& p : pts) max_norm = std::max(max_norm, (p - c).norm());
  if (!(max_norm > 1e-12)) {
    throw Error(Errc::AllPointsCoincident, "point set has zero extent");
  }
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back((p - c) / max_norm);
  return out;
}

std::vector<Vec3> rotated_points(std::span<const Vec3> pts, const RotationQ& q) {
  const Mat3 r = q.matrix();
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(r * p);
  return out;
}

std::vector<Vec3> frame_points(std::span<const Vec3> pts, const Mat3& basis) {
  // Row vector x times [e1 e2 e3] == basis^T x for column vectors.
  const Mat3 bt = basis.transpose();
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(bt * p);
  return out;
}

}  // namespace

void validate(const PointCloud& pc) { validate_points(pc.points); }

void validate(const TriMesh& mesh) {
  validate_points(mesh.vertices);
  if (mesh.faces.empty()) throw Error(Errc::InvalidArgument, "mesh has no faces");
  const auto n = mesh.vertices.size();
  for (const auto& f : mesh.faces) {
    for (auto idx : f) {
      if (idx >= n) {
        throw Error(Errc::InvalidArgument, "face index " + std::to_string(idx) +
                                               " out of range for " + std::to_string(n) +
                                               " vertices");
      }
    }
  }
}

RotationQ::RotationQ(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTolerance) {
    throw Error(Errc::NonUnitQuaternion, "quaternion norm " + std::to_string(n));
  }
}

RotationQ RotationQ::from_axis_angle(const Vec3& axis, double degrees) {
  const double len = axis.norm();
  if (!(len > 0.0)) throw Error(Errc::InvalidArgument, "zero rotation axis");
  const double half = degrees * std::numbers::pi / 360.0;
  const Vec3 a = axis / len * std::sin(half);
  return RotationQ(std::cos(half), a.x(), a.y(), a.z());
}

Mat3 RotationQ::matrix() const {
  const double w = w_, x = x_, y = y_, z = z_;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Vec3(c / static_cast<double>(pts.size()));
}

PointCloud normalize_to_unit(const PointCloud& pc) { return {normalized_points(pc.points)}; }

TriMesh normalize_to_unit(const TriMesh& mesh) {
  validate(mesh);
  return {normalized_points(mesh.vertices), mesh.faces};
}

Sample normalize_to_unit(const Sample& s) {
  return std::visit([](const auto& g) -> Sample { return normalize_to_unit(g); }, s);
}

PointCloud rotate(const PointCloud& pc, const RotationQ& q) {
  return {rotated_points(pc.points, q)};
}

TriMesh rotate(const TriMesh& mesh, const RotationQ& q) {
  return {rotated_points(mesh.vertices, q), mesh.faces};
}

Sample rotate(const Sample& s, const RotationQ& q) {
  return std::visit([&](const auto& g) -> Sample { return rotate(g, q); }, s);
}

Mat3 covariance(std::span<const Vec3> pts) {
  validate_points(pts);
  const Vec3 c = centroid(pts);
  if (c.norm() > 1e-4) {
    throw Error(Errc::NotCentered, "centroid norm " + std::to_string(c.norm()));
  }
  Mat3 s = Mat3::Zero();
  for (const auto& p : pts) s.noalias() += p * p.transpose();
  s /= static_cast<double>(pts.size());
  // Exact symmetry regardless of accumulation order.
  return 0.5 * (s + s.transpose());
}

CovarianceFrame eigen_frame(const Mat3& sigma) {
  constexpr double kTolerance = 1e-10;
  constexpr int kMaxSweeps = 64;

  Mat3 a = 0.5 * (sigma + sigma.transpose());
  Mat3 v = Mat3::Identity();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
    if (off <= kTolerance * 1e-6 * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Mat3 j = Mat3::Identity();
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = s;
        j(q, p) = -s;
        a = j.transpose() * a * j;
        a(p, q) = a(q, p) = 0.0;
        v = v * j;
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i) > a(j, j); });

  CovarianceFrame frame;
  frame.sigma = sigma;
  for (int k = 0; k < 3; ++k) {
    frame.eigvals[k] = a(order[k], order[k]);
    Vec3 e = v.col(order[k]).normalized();
    int dominant = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(e[i]) > std::abs(e[dominant])) dominant = i;
    }
    if (e[dominant] < 0.0) e = -e;
    frame.eigvecs.col(k) = e;
  }
  if (frame.eigvecs.determinant() < 0.0) frame.eigvecs.col(2) *= -1.0;
  frame.degenerate = (frame.eigvals[0] - frame.eigvals[1] < CovarianceFrame::kDegenerateGap) ||
                     (frame.eigvals[1] - frame.eigvals[2] < CovarianceFrame::kDegenerateGap);
  return frame;
}

AlignedSample pca_align_with_frame(const Sample& s) {
  const Sample normalized = normalize_to_unit(s);
  const auto pts = positions(normalized);
  CovarianceFrame frame = eigen_frame(covariance(pts));
  auto moved = frame_points(pts, frame.eigvecs);
  Sample out = std::visit(
      [&](const auto& g) -> Sample {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, PointCloud>) {
          return PointCloud{std::move(moved)};
        } else {
          return TriMesh{std::move(moved), g.faces};
        }
      },
      normalized);
  return {std::move(out), frame};
}

PointCloud pca_align(const PointCloud& pc) {
  return std::get<PointCloud>(pca_align_with_frame(Sample{pc}).sample);
}

TriMesh pca_align(const TriMesh& mesh) {
  return std::get<TriMesh>(pca_align_with_frame(Sample{mesh}).sample);
}

Sample pca_align(const Sample& s) { return pca_align_with_frame(s).sample; }

}  // namespace op3d
