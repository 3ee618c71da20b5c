#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "op3d/core3d.hpp"

namespace op3d::testing {

// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("op3d_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Anisotropic Gaussian cloud with axis scales (3, 2, 1) (distinct variances).
inline PointCloud anisotropic_cloud(std::uint64_t seed, int n = 500) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud pc;
  for (int i = 0; i < n; ++i) pc.points.emplace_back(3.0 * g(rng), 2.0 * g(rng), 1.0 * g(rng));
  return pc;
}

}  // namespace op3d::testing

#include <fstream>

#include "op3d/posegen.hpp"

namespace op3d::testing {

// One tiny XYZ file per unseen test sample, laid out class/NNNN.xyz.
inline std::size_t write_standin_tree(const std::filesystem::path& root, const DatasetSplit& split) {
  std::size_t n = 0;
  for (const auto& [cls, count] : split.unseen_test_counts) {
    std::filesystem::create_directories(root / cls);
    for (std::size_t i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.xyz", i);
      std::ofstream(root / cls / name) << "0 0 0\n1 0 0\n0 " << (i + 1) << " 0\n0 0 0.5\n";
      ++n;
    }
  }
  return n;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace op3d::testing
