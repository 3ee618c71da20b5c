#pragma once

// Accuracy metrics, fixed-view and refined baselines over an open-pose
// dataset, per-sample run logs, and markdown reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "op3d/iarm.hpp"
#include "op3d/match.hpp"
#include "op3d/posegen.hpp"

namespace op3d {

struct LabeledPrediction {
  std::string sample_id;
  std::string true_class;
  std::string predicted_class;
};

struct MetricsReport {
  double acc = 0.0;   // percent, micro top-1
  double macc = 0.0;  // percent, unweighted mean of per_class
  std::vector<std::string> classes;  // report order
  std::map<std::string, double> per_class;
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  std::size_t correct = 0;
};

// `classes` fixes the reported class set and order; when empty, the true
// classes of `preds` in sorted order. Throws EmptyPredictions, or
// ClassWithNoSamples for a listed class absent from `preds`.
MetricsReport compute_metrics(std::span<const LabeledPrediction> preds,
                              std::span<const std::string> classes = {});

// Combine per-style evidence for each class. Every class must carry the same
// style set (StyleSetMismatch otherwise).
std::vector<MatchScore> ensemble_styles(
    const std::vector<std::map<ProjectionStyle, Evidence>>& per_class);

// Mean of exp(-m) over `scores`, computed in the log domain.
MatchScore mean_score(std::span<const MatchScore> scores);

enum class ViewKind { Single, Cube, Circular, Iarm };

std::string_view to_string(ViewKind k);
ViewKind parse_view_kind(std::string_view name);

struct BaselineConfig {
  ViewKind views = ViewKind::Iarm;
  std::vector<std::string> classes;  // candidate set; empty: manifest classes, sorted
  ScoringContext scoring;
  RefineConfig refine;
  int circular_views = 12;
  double circular_phi1 = 30.0;
  std::uint64_t seed = 42;
  int jobs = 1;
};

struct SampleRecord {
  std::string sample_id;
  std::string true_class;
  std::string predicted_class;
  std::vector<std::string> classes;
  std::vector<double> score_exponents;  // m with MS = exp(-m)
  std::vector<double> probabilities;
  std::vector<ViewAngles> angles;       // refined angle per class (iarm only)
  bool pca_degenerate = false;
};

struct RunResult {
  MetricsReport metrics;
  std::vector<SampleRecord> records;  // ordered by sample_id
};

// Seed of one sample; independent of job count and processing order.
std::uint64_t sample_seed(std::uint64_t seed, std::string_view sample_id);

// Scores one sample under a fixed view set: per class, the mean MS over views.
SampleRecord score_fixed_views(const Sample& x, std::span<const ViewAngles> views,
                               std::span<const std::string> classes, const ScoringContext& ctx,
                               std::uint64_t seed);

RunResult run_baseline(const std::filesystem::path& dataset_dir, const PoseManifest& manifest,
                       const BaselineConfig& cfg);

// Effective configuration, as echoed into log headers.
nlohmann::json config_json(const BaselineConfig& cfg);

// Line-delimited JSON: a header record, then one record per sample.
void write_run_log(std::ostream& out, const nlohmann::json& header,
                   std::span<const SampleRecord> records);
void write_run_log(const std::filesystem::path& path, const nlohmann::json& header,
                   std::span<const SampleRecord> records);

struct RunLog {
  nlohmann::json header;
  std::vector<SampleRecord> records;
};
RunLog read_run_log(std::istream& in);
RunLog read_run_log(const std::filesystem::path& path);

std::vector<LabeledPrediction> to_predictions(std::span<const SampleRecord> records);

// Percent with one decimal.
std::string format_percent(double v);

// Per-class accuracy table (classes as columns) with an Acc/mAcc footer.
std::string markdown_report(const MetricsReport& m, const std::string& label);

}  // namespace op3d
