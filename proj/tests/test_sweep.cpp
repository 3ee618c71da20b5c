#include <sstream>

#include "doctest.h"
#include "op3d/classes.hpp"
#include "op3d/error.hpp"
#include "op3d/sweep.hpp"

using namespace op3d;
using nlohmann::json;

TEST_CASE("class lists") {
  std::istringstream in("# header\nchair canon/chair.off\n\n table   # no template\n");
  const auto specs = parse_class_list(in, "/data");
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].name == "chair");
  CHECK(specs[0].canonical == std::filesystem::path("/data/canon/chair.off"));
  CHECK_FALSE(specs[1].canonical);
  CHECK(class_names(specs) == std::vector<std::string>{"chair", "table"});

  std::istringstream dup("a\na\n");
  CHECK_THROWS_AS(parse_class_list(dup, "."), Error);
  std::istringstream extra("a b c\n");
  CHECK_THROWS_AS(parse_class_list(extra, "."), Error);
  std::istringstream empty("# nothing\n");
  CHECK_THROWS_AS(parse_class_list(empty, "."), Error);
}

TEST_CASE("grid expansion is a cross product") {
  BaselineConfig base;
  const auto g = expand_grid(json::parse(R"({"styles": ["render", "depth", "edge"]})"), base);
  CHECK(g.cells.size() == 3);
  CHECK(g.warnings.empty());

  const auto g2 = expand_grid(
      json::parse(R"({"views": ["iarm", "cube"], "R": [4, 10], "fd": [2, 5]})"), base);
  // iarm: 2 R x 2 fd; cube ignores refinement fields, so its 4 cells collapse.
  CHECK(g2.cells.size() == 5);
  CHECK(g2.warnings.size() == 3);
  CHECK(g2.cells[0].etas == default_etas(4));
}

TEST_CASE("duplicate cells are dropped with a warning") {
  BaselineConfig base;
  const auto g = expand_grid(json::parse(R"({"styles": ["render,edge", "edge,render", "depth"]})"), base);
  CHECK(g.cells.size() == 2);
  REQUIRE(g.warnings.size() == 1);
  CHECK(g.warnings[0].find("render+edge") != std::string::npos);
  CHECK(g.cells[0].styles == std::vector<ProjectionStyle>{ProjectionStyle::Render, ProjectionStyle::Edge});
}

TEST_CASE("grid validation") {
  BaselineConfig base;
  CHECK_THROWS_AS(expand_grid(json::parse(R"({"bogus": [1]})"), base), Error);
  CHECK_THROWS_AS(expand_grid(json::parse(R"({"R": [3], "etas": [[1,2,3]]})"), base), Error);
  CHECK_THROWS_AS(expand_grid(json::parse(R"({"styles": []})"), base), Error);
  CHECK_THROWS_AS(expand_grid(json::parse(R"({"prompts": ["no slot"]})"), base), Error);
  CHECK_THROWS_AS(expand_grid(json::parse(R"({"etas": [[1, -2]]})"), base), Error);
  const auto g = expand_grid(json::parse(R"({"etas": [[3, 2, 1]], "prompts": [null, "a [n_c]"]})"), base);
  REQUIRE(g.cells.size() == 2);
  CHECK(g.cells[0].R == 3);
  CHECK(g.cells[1].prompt == std::optional<std::string>("a [n_c]"));
}
