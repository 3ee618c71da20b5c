#include "op3d/toyshapes.hpp"

#include <cstdio>

#include "op3d/error.hpp"
#include "op3d/meshio.hpp"

namespace op3d {

namespace fs = std::filesystem;

TriMesh make_box(double sx, double sy, double sz) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1 ? 0.5 : -0.5) * sx, (i & 2 ? 0.5 : -0.5) * sy,
                            (i & 4 ? 0.5 : -0.5) * sz);
  }
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriMesh toy_cube() { return make_box(1.0, 1.0, 1.0); }

TriMesh toy_pyramid() {
  TriMesh m;
  m.vertices = {{-0.5, -0.5, 0.0}, {0.5, -0.5, 0.0}, {0.5, 0.5, 0.0}, {-0.5, 0.5, 0.0}, {0.0, 0.0, 1.6}};
  m.faces = {{0, 2, 1}, {0, 3, 2}, {0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  return m;
}

TriMesh toy_rod() { return make_box(0.2, 0.2, 2.0); }

std::vector<std::pair<std::string, Sample>> toy_canonical() {
  return {{"cube", toy_cube()}, {"pyramid", toy_pyramid()}, {"rod", toy_rod()}};
}

ToyBenchmark make_toy_benchmark(const fs::path& out_dir, std::uint64_t seed, int per_class) {
  if (per_class < 1) throw Error(Errc::InvalidArgument, "per_class must be >= 1");
  ToyBenchmark b;
  b.source_dir = out_dir / "source";
  b.dataset_dir = out_dir / "openpose";
  for (const auto& [name, shape] : toy_canonical()) {
    for (int i = 0; i < per_class; ++i) {
      char file[64];
      std::snprintf(file, sizeof file, "%s_%02d.off", name.c_str(), i);
      save_sample(b.source_dir / name / file, shape);
    }
  }
  b.manifest = generate_openpose_dataset(b.source_dir, "toy", seed, b.dataset_dir);
  return b;
}

}  // namespace op3d
