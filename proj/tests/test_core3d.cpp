#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "op3d/core3d.hpp"
#include "op3d/error.hpp"
#include "op3d/posegen.hpp"
#include "support.hpp"

using namespace op3d;
using op3d::testing::anisotropic_cloud;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected op3d::Error");
  return Errc::InvalidArgument;
}

Mat3 brute_covariance(const std::vector<Vec3>& pts) {
  Mat3 s = Mat3::Zero();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double acc = 0.0;
      for (const auto& p : pts) acc += p[a] * p[b];
      s(a, b) = acc / static_cast<double>(pts.size());
    }
  return s;
}

}  // namespace

TEST_CASE("validate rejects tiny, non-finite and malformed inputs") {
  PointCloud two{{Vec3(0, 0, 0), Vec3(1, 0, 0)}};
  CHECK(code_of([&] { validate(two); }) == Errc::InvalidArgument);
  PointCloud nan{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, std::nan(""), 0)}};
  CHECK(code_of([&] { validate(nan); }) == Errc::InvalidArgument);
  TriMesh bad{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {{0, 1, 3}}};
  CHECK(code_of([&] { validate(bad); }) == Errc::InvalidArgument);
  TriMesh nofaces{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {}};
  CHECK(code_of([&] { validate(nofaces); }) == Errc::InvalidArgument);
}

TEST_CASE("quaternions") {
  CHECK(code_of([] { RotationQ(1.0, 0.1, 0.0, 0.0); }) == Errc::NonUnitQuaternion);
  const auto q = RotationQ::from_axis_angle(Vec3(0, 0, 2), 90.0);
  const Vec3 y = q.apply(Vec3(1, 0, 0));
  CHECK(y.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.y() == doctest::Approx(1.0));
  const Mat3 r = sample_rotation(7, 3).matrix();
  CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0));
}

TEST_CASE("normalize_to_unit centers and scales to the unit sphere") {
  PointCloud pc = anisotropic_cloud(1);
  for (auto& p : pc.points) p = 5.0 * p + Vec3(10, -3, 2);
  const auto n = normalize_to_unit(pc);
  CHECK(centroid(n.points).norm() < 1e-12);
  double r = 0.0;
  for (const auto& p : n.points) r = std::max(r, p.norm());
  CHECK(r == doctest::Approx(1.0));

  PointCloud same{{Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)}};
  CHECK(code_of([&] { normalize_to_unit(same); }) == Errc::AllPointsCoincident);
}

TEST_CASE("covariance matches the brute-force sum and requires centering") {
  const auto pc = normalize_to_unit(anisotropic_cloud(2));
  const Mat3 s = covariance(pc);
  CHECK((s - brute_covariance(pc.points)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((s - s.transpose()).norm() == 0.0);

  PointCloud shifted = pc;
  for (auto& p : shifted.points) p += Vec3(0.1, 0, 0);
  CHECK(code_of([&] { covariance(shifted); }) == Errc::NotCentered);
}

TEST_CASE("eigen_frame agrees with a reference symmetric solver") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mat3 s = covariance(normalize_to_unit(anisotropic_cloud(seed)));
    const auto f = eigen_frame(s);
    Eigen::SelfAdjointEigenSolver<Mat3> ref(s);
    for (int i = 0; i < 3; ++i) {
      // Reference values are ascending.
      CHECK(f.eigvals[i] == doctest::Approx(ref.eigenvalues()[2 - i]).epsilon(1e-12));
      const double align = std::abs(f.eigvecs.col(i).dot(ref.eigenvectors().col(2 - i)));
      CHECK(align == doctest::Approx(1.0).epsilon(1e-10));
      CHECK((s * f.eigvecs.col(i) - f.eigvals[i] * f.eigvecs.col(i)).norm() < 1e-12);
    }
    CHECK(f.eigvals[0] >= f.eigvals[1]);
    CHECK(f.eigvals[1] >= f.eigvals[2]);
    CHECK(f.eigvecs.determinant() == doctest::Approx(1.0));
    CHECK_FALSE(f.degenerate);
    // Sign rule on the first two axes: largest-magnitude component positive.
    for (int i = 0; i < 2; ++i) {
      Eigen::Index k;
      f.eigvecs.col(i).cwiseAbs().maxCoeff(&k);
      CHECK(f.eigvecs(k, i) > 0.0);
    }
  }
}

TEST_CASE("isotropic spectra are flagged degenerate") {
  const auto f = eigen_frame(Mat3::Identity() * 0.3);
  CHECK(f.degenerate);
  CHECK(f.eigvecs.determinant() == doctest::Approx(1.0));
  Mat3 two = Mat3::Zero();
  two.diagonal() << 2.0, 1.0, 1.0;
  CHECK(eigen_frame(two).degenerate);
}

TEST_CASE("pca_align puts the largest variance on x and the smallest on z") {
  const auto q = sample_rotation(11, 0);
  const auto aligned = pca_align(rotate(anisotropic_cloud(3, 2000), q));
  const Mat3 s = covariance(aligned);
  CHECK(s(0, 0) > s(1, 1));
  CHECK(s(1, 1) > s(2, 2));
  CHECK(std::abs(s(0, 1)) < 1e-12);
  CHECK(std::abs(s(1, 2)) < 1e-12);
}

TEST_CASE("pca_align is rotation invariant up to axis signs") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto x = anisotropic_cloud(100 + seed);
    const auto a = pca_align(x);
    const auto b = pca_align(rotate(x, sample_rotation(seed, 5)));
    Vec3 sgn;
    for (int k = 0; k < 3; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < a.points.size(); ++i) dot += a.points[i][k] * b.points[i][k];
      sgn[k] = dot >= 0.0 ? 1.0 : -1.0;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      worst = std::max(worst, (a.points[i] - b.points[i].cwiseProduct(sgn)).norm());
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("mesh alignment moves vertices and keeps faces") {
  TriMesh m{{Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, 1), Vec3(4, 2, 1)},
            {{0, 1, 2}, {0, 2, 3}, {1, 2, 4}}};
  const auto r = pca_align_with_frame(Sample(m));
  REQUIRE(is_mesh(r.sample));
  CHECK(std::get<TriMesh>(r.sample).faces == m.faces);
  CHECK(positions(r.sample).size() == m.vertices.size());
}
