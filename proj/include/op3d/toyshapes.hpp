#pragma once

// Three synthetic shape classes for desk-scale end-to-end runs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "op3d/core3d.hpp"
#include "op3d/posegen.hpp"

namespace op3d {

TriMesh make_box(double sx, double sy, double sz);
TriMesh toy_cube();     // unit cube
TriMesh toy_pyramid();  // square base, height 1.6
TriMesh toy_rod();      // 0.2 x 0.2 x 2 box

// {"cube", "pyramid", "rod"} in canonical pose.
std::vector<std::pair<std::string, Sample>> toy_canonical();

struct ToyBenchmark {
  std::filesystem::path source_dir;   // canonical copies, one directory per class
  std::filesystem::path dataset_dir;  // rotated copies plus manifest
  PoseManifest manifest;
};

// Writes `per_class` canonical copies per class under out/source and their
// seeded open-pose versions under out/openpose.
ToyBenchmark make_toy_benchmark(const std::filesystem::path& out_dir, std::uint64_t seed,
                                int per_class = 10);

}  // namespace op3d
