#pragma once

// ASCII OFF meshes and whitespace-separated XYZ point clouds.

#include <filesystem>
#include <iosfwd>

#include "op3d/core3d.hpp"

namespace op3d {

// OFF files with zero faces are returned as point clouds by load_sample().
// Polygonal faces are fan-triangulated. Errors raise ParseError naming the
// 1-based line number.
TriMesh parse_off(std::istream& in, const std::string& origin = "<stream>");
PointCloud parse_xyz(std::istream& in, const std::string& origin = "<stream>");

TriMesh read_off(const std::filesystem::path& path);
PointCloud read_xyz(const std::filesystem::path& path);

// Dispatches on extension (.off / .xyz).
Sample load_sample(const std::filesystem::path& path);

void write_off(std::ostream& out, const TriMesh& mesh);
void write_xyz(std::ostream& out, const PointCloud& pc);
void save_sample(const std::filesystem::path& path, const Sample& s);

bool is_supported_sample(const std::filesystem::path& path);

}  // namespace op3d
