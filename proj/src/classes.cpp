#include "op3d/classes.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "op3d/error.hpp"

namespace op3d {

std::vector<ClassSpec> parse_class_list(std::istream& in, const std::filesystem::path& base_dir,
                                        const std::string& origin) {
  std::vector<ClassSpec> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    ClassSpec spec;
    if (!(fields >> spec.name)) continue;
    std::string path, extra;
    if (fields >> path) {
      const std::filesystem::path p(path);
      spec.canonical = p.is_absolute() ? p : base_dir / p;
    }
    if (fields >> extra) {
      throw Error(Errc::ParseError, origin + ":" + std::to_string(lineno) +
                                        ": expected 'name [canonical_path]'");
    }
    if (!seen.insert(spec.name).second) {
      throw Error(Errc::ParseError, origin + ":" + std::to_string(lineno) +
                                        ": duplicate class '" + spec.name + "'");
    }
    out.push_back(std::move(spec));
  }
  if (out.empty()) throw Error(Errc::EmptyClassSet, origin + ": no classes listed");
  return out;
}

std::vector<ClassSpec> read_class_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open class list " + path.string());
  return parse_class_list(in, path.parent_path(), path.string());
}

std::vector<std::string> class_names(const std::vector<ClassSpec>& specs) {
  std::vector<std::string> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(s.name);
  return out;
}

}  // namespace op3d
