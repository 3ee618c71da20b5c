#pragma once

// Parameter sweeps: the cross-product of a grid spec, one metrics row per cell.
//
//   {"views": ["iarm", "single"], "styles": ["depth", "render,edge"],
//    "prompts": [null, "one photo of one [n_c]"], "R": [10], "etas": [[...]],
//    "fd": [5]}
//
// Every key is optional and falls back to the base configuration. "etas" and
// "R" are mutually exclusive; with only "R", step sizes follow default_etas.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "op3d/evalkit.hpp"

namespace op3d {

struct SweepCell {
  ViewKind views = ViewKind::Iarm;
  std::vector<ProjectionStyle> styles;  // sorted; several = style ensemble
  std::optional<std::string> prompt;
  int R = 10;
  std::vector<double> etas;
  double fd = 5.0;

  // Identity used for deduplication; refinement fields only count for iarm.
  std::string key() const;
  nlohmann::json to_json() const;
  BaselineConfig apply(const BaselineConfig& base) const;
};

struct SweepGrid {
  std::vector<SweepCell> cells;       // in first-occurrence order
  std::vector<std::string> warnings;  // one per dropped duplicate
};

SweepGrid expand_grid(const nlohmann::json& spec, const BaselineConfig& base);
SweepGrid read_grid(const std::filesystem::path& path, const BaselineConfig& base);

struct SweepRow {
  SweepCell cell;
  MetricsReport metrics;
};

nlohmann::json row_json(const SweepRow& row);

// Runs the cells in order, calling `on_row` after each one completes.
std::vector<SweepRow> run_sweep(const std::filesystem::path& dataset_dir, const PoseManifest& manifest,
                                const BaselineConfig& base, const SweepGrid& grid,
                                const std::function<void(const SweepRow&)>& on_row = {});

std::string markdown_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace op3d
