#include "op3d/meshio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "op3d/error.hpp"

namespace op3d {
namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// Reads non-blank, comment-stripped lines and splits them into tokens while
// remembering the source line number.
class LineReader {
 public:
  LineReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      tokens.clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::ParseError, origin_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  template <typename T>
  T number(const std::string& tok) const {
    T value{};
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      fail(std::string(std::is_floating_point_v<T> ? "expected a number" : "expected an integer") +
           ", got '" + tok + "'");
    }
    return value;
  }

  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::string origin_;
  int line_no_ = 0;
};

Vec3 read_vertex(const LineReader& reader, const std::vector<std::string>& tok) {
  if (tok.size() < 3) reader.fail("vertex needs 3 coordinates");
  Vec3 v(reader.number<double>(tok[0]), reader.number<double>(tok[1]),
         reader.number<double>(tok[2]));
  if (!v.allFinite()) reader.fail("non-finite vertex coordinate");
  return v;
}

}  // namespace

TriMesh parse_off(std::istream& in, const std::string& origin) {
  LineReader reader(in, origin);
  std::vector<std::string> tok;
  if (!reader.next(tok)) reader.fail("empty file");

  // Some ModelNet files glue the counts onto the header ("OFF490 518 0").
  if (tok[0].rfind("OFF", 0) != 0) reader.fail("missing OFF header");
  std::vector<std::string> counts;
  if (tok[0].size() > 3) counts.push_back(tok[0].substr(3));
  counts.insert(counts.end(), tok.begin() + 1, tok.end());
  if (counts.empty()) {
    if (!reader.next(tok)) reader.fail("missing vertex/face counts");
    counts = tok;
  }
  if (counts.size() < 2) reader.fail("expected vertex and face counts");
  const auto nv = reader.number<long long>(counts[0]);
  const auto nf = reader.number<long long>(counts[1]);
  if (nv < 0 || nf < 0) reader.fail("negative element count");

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    if (!reader.next(tok)) reader.fail("unexpected end of file in vertex list");
    mesh.vertices.push_back(read_vertex(reader, tok));
  }
  for (long long f = 0; f < nf; ++f) {
    if (!reader.next(tok)) reader.fail("unexpected end of file in face list");
    const auto k = reader.number<long long>(tok[0]);
    if (k < 3) reader.fail("face needs at least 3 vertices");
    if (static_cast<long long>(tok.size()) < k + 1) reader.fail("face index list too short");
    std::vector<std::uint32_t> idx;
    idx.reserve(static_cast<std::size_t>(k));
    for (long long j = 1; j <= k; ++j) {
      const auto v = reader.number<long long>(tok[static_cast<std::size_t>(j)]);
      if (v < 0 || v >= nv) reader.fail("face index " + std::to_string(v) + " out of range");
      idx.push_back(static_cast<std::uint32_t>(v));
    }
    for (std::size_t j = 1; j + 1 < idx.size(); ++j) {
      mesh.faces.push_back({idx[0], idx[j], idx[j + 1]});
    }
  }
  return mesh;
}

PointCloud parse_xyz(std::istream& in, const std::string& origin) {
  LineReader reader(in, origin);
  std::vector<std::string> tok;
  PointCloud pc;
  while (reader.next(tok)) {
    if (tok.size() < 3) reader.fail("expected 'x y z'");
    pc.points.push_back(read_vertex(reader, tok));
  }
  return pc;
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return in;
}

}  // namespace

TriMesh read_off(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_off(in, path.string());
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_xyz(in, path.string());
}

Sample load_sample(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  if (ext == ".off") {
    TriMesh mesh = read_off(path);
    if (mesh.faces.empty()) return PointCloud{std::move(mesh.vertices)};
    return mesh;
  }
  if (ext == ".xyz") return read_xyz(path);
  throw Error(Errc::InvalidArgument, "unsupported sample format: " + path.string());
}

bool is_supported_sample(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  return ext == ".off" || ext == ".xyz";
}

namespace {

void put_vec(std::ostream& out, const Vec3& v) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
  out << buf;
}

}  // namespace

void write_off(std::ostream& out, const TriMesh& mesh) {
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  for (const auto& v : mesh.vertices) put_vec(out, v);
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

void write_xyz(std::ostream& out, const PointCloud& pc) {
  for (const auto& p : pc.points) put_vec(out, p);
}

void save_sample(const std::filesystem::path& path, const Sample& s) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  const auto ext = lower_ext(path);
  if (const auto* mesh = std::get_if<TriMesh>(&s)) {
    if (ext != ".off") throw Error(Errc::InvalidArgument, "meshes are written as .off");
    write_off(out, *mesh);
  } else {
    const auto& pc = std::get<PointCloud>(s);
    if (ext == ".off") {
      write_off(out, TriMesh{pc.points, {}});
    } else {
      write_xyz(out, pc);
    }
  }
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

}  // namespace op3d
