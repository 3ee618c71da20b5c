#include "op3d/posegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "op3d/error.hpp"
#include "op3d/meshio.hpp"
#include "op3d/parallel.hpp"
#include "op3d/seed.hpp"

namespace op3d {

namespace fs = std::filesystem;
using nlohmann::json;

RotationQ sample_rotation(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t key = derive_seed(seed, index);
  const double u1 = to_unit_double(mix64(key ^ 0x1ULL));
  const double u2 = to_unit_double(mix64(key ^ 0x2ULL));
  const double u3 = to_unit_double(mix64(key ^ 0x3ULL));
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  double w = b * std::cos(kTwoPi * u3);
  double x = a * std::sin(kTwoPi * u2);
  double y = a * std::cos(kTwoPi * u2);
  double z = b * std::sin(kTwoPi * u3);
  // Renormalize away the last ulp so the stored quaternion is unit to ~1e-16.
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  return RotationQ(w / n, x / n, y / n, z / n);
}

std::map<std::string, std::size_t> PoseManifest::class_histogram() const {
  std::map<std::string, std::size_t> h;
  for (const auto& e : entries) ++h[e.class_name];
  return h;
}

namespace {

const std::vector<std::string> kModelNet40 = {
    "airplane", "bathtub",  "bed",         "bench",      "bookshelf", "bottle",   "bowl",
    "car",      "chair",    "cone",        "cup",        "curtain",   "desk",     "door",
    "dresser",  "flower_pot", "glass_box", "guitar",     "keyboard",  "lamp",     "laptop",
    "mantel",   "monitor",  "night_stand", "person",     "piano",     "plant",    "radio",
    "range_hood", "sink",   "sofa",        "stairs",     "stool",     "table",    "tent",
    "toilet",   "tv_stand", "vase",        "wardrobe",   "xbox"};

// ModelNet10 test-set sizes per class.
const std::vector<std::pair<std::string, std::size_t>> kModelNet10Test = {
    {"bathtub", 50}, {"bed", 100},  {"chair", 100},       {"desk", 86},   {"dresser", 86},
    {"monitor", 100}, {"night_stand", 86}, {"sofa", 100}, {"table", 100}, {"toilet", 100}};

// McGill unseen classes with test counts recovered from the per-class accuracy
// fractions (e.g. 71.4 = 5/7); ant and dinosaur are only constrained to sum to 17.
const std::vector<std::pair<std::string, std::size_t>> kMcGillTest = {
    {"ant", 9},      {"bird", 7},   {"crab", 10},     {"dinosaur", 8},   {"dolphin", 4},
    {"fish", 8},     {"hand", 7},   {"octopus", 8},   {"plier", 7},      {"quadruple", 11},
    {"snake", 9},    {"spectacle", 9}, {"spider", 11}, {"teddy", 7}};

const std::vector<std::string> kMcGillSeenOverlap = {"airplane", "chair", "cup", "human",
                                                     "table"};

std::vector<std::string> names_of(const std::vector<std::pair<std::string, std::size_t>>& v) {
  std::vector<std::string> out;
  for (const auto& [n, c] : v) out.push_back(n);
  return out;
}

std::size_t total_of(const std::vector<std::pair<std::string, std::size_t>>& v) {
  std::size_t t = 0;
  for (const auto& [n, c] : v) t += c;
  return t;
}

}  // namespace

DatasetSplit load_split(const std::string& dataset_name) {
  DatasetSplit s;
  s.name = dataset_name;
  if (dataset_name == "modelnet40") {
    s.classes = kModelNet40;
    const auto unseen10 = names_of(kModelNet10Test);
    for (const auto& c : kModelNet40) {
      if (std::find(unseen10.begin(), unseen10.end(), c) == unseen10.end()) s.seen.push_back(c);
    }
    s.train = 5852;
    s.valid = 1560;
  } else if (dataset_name == "modelnet10") {
    s.classes = names_of(kModelNet10Test);
    s.unseen = s.classes;
    s.unseen_test_counts = kModelNet10Test;
    s.test = total_of(kModelNet10Test);
  } else if (dataset_name == "mcgill") {
    s.unseen = names_of(kMcGillTest);
    s.classes = s.unseen;
    s.classes.insert(s.classes.end(), kMcGillSeenOverlap.begin(), kMcGillSeenOverlap.end());
    std::sort(s.classes.begin(), s.classes.end());
    s.unseen_test_counts = kMcGillTest;
    s.test = total_of(kMcGillTest);
  } else {
    throw Error(Errc::UnknownDataset, dataset_name);
  }
  return s;
}

namespace {

json entry_to_json(const ManifestEntry& e) {
  const auto& q = e.rotation;
  return {{"sample_id", e.sample_id},
          {"class", e.class_name},
          {"q", {q.w(), q.x(), q.y(), q.z()}}};
}

}  // namespace

void write_manifest(std::ostream& out, const PoseManifest& m) {
  json header = {{"format", "op3d-pose-manifest"},
                 {"version", PoseManifest::kFormatVersion},
                 {"dataset", m.dataset_name},
                 {"seed", m.seed},
                 {"entries", m.entries.size()}};
  out << header.dump() << '\n';
  for (const auto& e : m.entries) out << entry_to_json(e).dump() << '\n';
}

void write_manifest(const fs::path& path, const PoseManifest& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  write_manifest(out, m);
}

PoseManifest read_manifest(std::istream& in) {
  PoseManifest m;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (j.value("format", "") != "op3d-pose-manifest") {
          throw Error(Errc::ParseError, "not a pose manifest");
        }
        if (j.at("version").get<int>() != PoseManifest::kFormatVersion) {
          throw Error(Errc::ParseError, "unsupported manifest version");
        }
        m.dataset_name = j.at("dataset").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      const auto& q = j.at("q");
      ManifestEntry e{j.at("sample_id").get<std::string>(), j.at("class").get<std::string>(),
                      RotationQ(q.at(0).get<double>(), q.at(1).get<double>(),
                                q.at(2).get<double>(), q.at(3).get<double>())};
      if (!ids.insert(e.sample_id).second) {
        throw Error(Errc::ParseError, "duplicate sample_id " + e.sample_id);
      }
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(Errc::ParseError, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(Errc::ParseError, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (!have_header) throw Error(Errc::ParseError, "manifest has no header record");
  return m;
}

PoseManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return read_manifest(in);
}

Sample regenerate_sample(const fs::path& source_dir, const ManifestEntry& entry) {
  return rotate(load_sample(source_dir / fs::path(entry.sample_id)), entry.rotation);
}

PoseManifest generate_openpose_dataset(const fs::path& source_dir, const std::string& dataset_name,
                                       std::uint64_t seed, const fs::path& out_dir, int jobs) {
  if (!fs::is_directory(source_dir)) {
    throw Error(Errc::EmptyDataset, "source directory not found: " + source_dir.string());
  }
  const fs::path out_abs = fs::weakly_canonical(out_dir);
  std::vector<std::string> ids;
  for (const auto& de : fs::recursive_directory_iterator(source_dir)) {
    if (!de.is_regular_file() || !is_supported_sample(de.path())) continue;
    const auto canon = fs::weakly_canonical(de.path());
    // Skip our own output if it lives under the source tree.
    const auto rel_out = canon.lexically_relative(out_abs);
    if (!rel_out.empty() && *rel_out.begin() != "..") continue;
    ids.push_back(de.path().lexically_relative(source_dir).generic_string());
  }
  if (ids.empty()) throw Error(Errc::EmptyDataset, "no samples under " + source_dir.string());
  std::sort(ids.begin(), ids.end());

  PoseManifest m;
  m.dataset_name = dataset_name;
  m.seed = seed;
  m.entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const fs::path rel(ids[i]);
    if (std::distance(rel.begin(), rel.end()) < 2) {
      throw Error(Errc::UnreadableSample,
                  ids[i] + ": samples must live under a class directory");
    }
    m.entries.push_back({ids[i], rel.begin()->string(), sample_rotation(seed, i)});
  }

  parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
    const auto& e = m.entries[i];
    Sample rotated;
    try {
      rotated = regenerate_sample(source_dir, e);
    } catch (const Error& ex) {
      throw Error(Errc::UnreadableSample, (source_dir / e.sample_id).string() + ": " + ex.what());
    }
    save_sample(out_dir / fs::path(e.sample_id), rotated);
  });

  write_manifest(out_dir / kManifestFileName, m);
  return m;
}

}  // namespace op3d
