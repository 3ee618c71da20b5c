#pragma once

// Open-pose benchmark construction: every sample of a source dataset receives
// an index-addressable uniform random rotation, recorded in a manifest.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "op3d/core3d.hpp"

namespace op3d {

struct ManifestEntry {
  std::string sample_id;  // path relative to the dataset root, '/'-separated
  std::string class_name;
  RotationQ rotation;
};

struct PoseManifest {
  static constexpr int kFormatVersion = 1;

  std::string dataset_name;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;  // ordered by sample_id

  std::map<std::string, std::size_t> class_histogram() const;
};

struct DatasetSplit {
  std::string name;
  std::vector<std::string> classes;  // every class of the source dataset
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  // Per-class test counts for the unseen classes (sums to `test`).
  std::vector<std::pair<std::string, std::size_t>> unseen_test_counts;
};

// Uniform on SO(3): three keyed variates through Shoemake's construction.
// A pure function of (seed, index).
RotationQ sample_rotation(std::uint64_t seed, std::uint64_t index);

// modelnet40 | modelnet10 | mcgill; anything else throws UnknownDataset.
DatasetSplit load_split(const std::string& dataset_name);

// Walks `source_dir` (class = first path component), writes rotated copies to
// `out_dir` mirroring the tree, and writes `out_dir/manifest.jsonl`.
PoseManifest generate_openpose_dataset(const std::filesystem::path& source_dir,
                                       const std::string& dataset_name, std::uint64_t seed,
                                       const std::filesystem::path& out_dir, int jobs = 1);

// Re-derives one rotated sample from its source file and manifest entry.
Sample regenerate_sample(const std::filesystem::path& source_dir, const ManifestEntry& entry);

void write_manifest(std::ostream& out, const PoseManifest& manifest);
void write_manifest(const std::filesystem::path& path, const PoseManifest& manifest);
PoseManifest read_manifest(std::istream& in);
PoseManifest read_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestFileName = "manifest.jsonl";

}  // namespace op3d
