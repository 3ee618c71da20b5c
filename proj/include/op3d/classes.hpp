#pragma once

// Candidate class lists: one class per line, optionally followed by the path
// of a canonical sample used to build reference templates.
//
//   # comment
//   chair  canon/chair.off
//   table

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace op3d {

struct ClassSpec {
  std::string name;
  std::optional<std::filesystem::path> canonical;  // resolved against the list's directory
};

std::vector<ClassSpec> parse_class_list(std::istream& in, const std::filesystem::path& base_dir,
                                        const std::string& origin = "<stream>");
std::vector<ClassSpec> read_class_list(const std::filesystem::path& path);

std::vector<std::string> class_names(const std::vector<ClassSpec>& specs);

}  // namespace op3d
