#pragma once

// Text-image matching scores. A matcher turns (image, prompts) into evidence:
// per-trial denoising errors (diffusion family) or a similarity (similarity
// family). Evidence is folded into MatchScore = exp(-m), m >= 0, and
// normalized across classes into probabilities.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "op3d/core3d.hpp"
#include "op3d/image.hpp"
#include "op3d/project.hpp"

namespace op3d {

// ------------------------------------------------------------ prompts ----

inline constexpr std::string_view kClassSlot = "[n_c]";

// Prompt variants evaluated for the three projection styles.
inline constexpr std::string_view kPromptVariants[] = {
    "one model of [n_c]",
    "one line-drawn [n_c]",
    "one photo of one [n_c]",
    "one photo of one standalone [n_c]",
    "one depth map of one standalone [n_c]",
    "one edge map of one standalone [n_c]",
    "one render image of one standalone white [n_c]",
    "one sketch photo of one standalone white [n_c]",
    "one model of [n_c] in linear composition",
    "one photo of one [n_c] in linear composition",
};

struct PromptTemplate {
  ProjectionStyle style;
  std::string text;  // contains kClassSlot exactly once

  PromptTemplate(ProjectionStyle style, std::string text);
  std::string fill(std::string_view class_name) const;

  // Best-performing variant per style.
  static PromptTemplate best_for(ProjectionStyle style);
};

std::string build_prompt(ProjectionStyle style, std::string_view class_name);

// ----------------------------------------------------- noise schedule ----

class NoiseSchedule {
 public:
  // Steps are 1-based: beta(1) .. beta(T).
  static NoiseSchedule from_betas(std::vector<double> betas);
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  // sqrt-space linear interpolation (latent-diffusion default).
  static NoiseSchedule scaled_linear(int steps, double beta_start = 0.00085,
                                     double beta_end = 0.012);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(index(t)); }

 private:
  std::size_t index(int t) const;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// sqrt(abar) * f0 + sqrt(1 - abar) * eps, abar in [0, 1].
std::vector<double> noised_feature(std::span<const double> f0, double alpha_bar,
                                   std::span<const double> eps);
// Throws TimestepOutOfRange unless 1 <= t <= T.
std::vector<double> noised_feature(std::span<const double> f0, int t,
                                   std::span<const double> eps, const NoiseSchedule& schedule);

struct DenoiseTrial {
  int t = 0;
  std::vector<double> eps;
  std::vector<double> eps_hat;
  double sq_err = 0.0;  // mean squared difference

  static DenoiseTrial measure(int t, std::vector<double> eps, std::vector<double> eps_hat);
};

// One (t, eps) draw; reproducible for a given (seed, trial index).
struct TrialDraw {
  int t;
  std::vector<double> eps;
};
TrialDraw draw_trial(std::uint64_t seed, std::uint32_t trial, const NoiseSchedule& schedule,
                     std::size_t dim);

// ------------------------------------------------------------- scores ----

class MatchScore {
 public:
  MatchScore() = default;
  // m >= 0; the score is exp(-m).
  static MatchScore from_exponent(double m);
  // value in (0, 1].
  static MatchScore from_value(double value);

  double exponent() const { return m_; }
  double value() const;

  auto operator<=>(const MatchScore& o) const { return o.m_ <=> m_; }
  bool operator==(const MatchScore& o) const = default;

 private:
  double m_ = 0.0;
};

// exp(-mean sq_err) over all trials, pooled across styles.
MatchScore matching_score(std::span<const DenoiseTrial> trials);
MatchScore matching_score_from_errors(std::span<const double> sq_errs);

inline constexpr double kSimilarityTemperature = 0.01;
// exp((s - 1) / tau): cosine similarity shifted by its maximum so the score
// lies in (0, 1]; normalization across classes is unaffected by the shift.
MatchScore similarity_score(double similarity, double tau = kSimilarityTemperature);

// p_c = MS_c / sum_j MS_j (computed in the log domain).
std::vector<double> class_probabilities(std::span<const MatchScore> scores);
std::vector<double> class_probabilities(std::span<const double> positive_scores);
std::map<std::string, double> class_probabilities(const std::map<std::string, MatchScore>& scores);

// ------------------------------------------------------------ matcher ----

enum class MatcherFamily { Diffusion, Similarity };

std::string_view to_string(MatcherFamily f);

struct Evidence {
  MatcherFamily family = MatcherFamily::Diffusion;
  std::vector<double> errors;  // diffusion: one entry per trial
  double similarity = 0.0;     // similarity family
};

MatchScore evidence_score(const Evidence& e);

// Style ensemble for one class: diffusion pools errors inside the exponent,
// similarity averages the per-style scores. Mixed families are rejected.
MatchScore combine_styles(std::span<const Evidence> per_style);

// Implementations must be safe to call concurrently.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual MatcherFamily family() const = 0;
  // One Evidence per prompt, in prompt order.
  virtual std::vector<Evidence> evaluate(const GrayImage& image, ProjectionStyle style,
                                         std::span<const std::string> prompts,
                                         std::uint64_t seed) const = 0;
  virtual std::string describe() const = 0;
};

// ------------------------------------------------------ template bank ----

class TemplateBank {
 public:
  struct Entry {
    std::string class_name;
    std::map<ProjectionStyle, std::vector<Mask>> views;
  };

  static constexpr int kDefaultViews = 12;
  static constexpr double kDefaultElevation = 30.0;

  // Binarized projections of each (normalized) canonical sample on a ring of
  // `n_views` azimuths at elevation `phi1`.
  static TemplateBank build(std::span<const std::pair<std::string, Sample>> canonical,
                            std::span<const ProjectionStyle> styles, const CameraConfig& camera,
                            int n_views = kDefaultViews, double phi1 = kDefaultElevation);

  // Directory layout: index.json plus one PNG per stored view.
  static TemplateBank load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  const Entry* find(std::string_view class_name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  const CameraConfig& camera() const { return camera_; }
  const std::vector<ViewAngles>& view_angles() const { return views_; }

 private:
  CameraConfig camera_;
  std::vector<ViewAngles> views_;
  std::vector<Entry> entries_;
};

// exp(-(1 - IoU)) against the best stored view of `style`.
MatchScore reference_similarity(const GrayImage& image, ProjectionStyle style,
                                const TemplateBank::Entry& entry);
double best_template_iou(const GrayImage& image, ProjectionStyle style,
                         const TemplateBank::Entry& entry);

// Deterministic stand-in matcher. Each prompt is resolved to the bank class
// whose name appears in it (longest whole-word match); the evidence error is
// sharpness * (1 - IoU), so a single style yields reference_similarity^sharpness.
class ReferenceMatcher final : public Matcher {
 public:
  static constexpr double kDefaultSharpness = 3.0;

  explicit ReferenceMatcher(std::shared_ptr<const TemplateBank> bank,
                            double sharpness = kDefaultSharpness);

  MatcherFamily family() const override { return MatcherFamily::Diffusion; }
  std::vector<Evidence> evaluate(const GrayImage& image, ProjectionStyle style,
                                 std::span<const std::string> prompts,
                                 std::uint64_t seed) const override;
  std::string describe() const override;

  const TemplateBank& bank() const { return *bank_; }
  const TemplateBank::Entry& resolve(std::string_view prompt) const;

 private:
  std::shared_ptr<const TemplateBank> bank_;
  double sharpness_;
};

// --------------------------------------------------------- handle/score --

enum class MatcherKind { Reference, External };

struct MatcherHandle {
  MatcherKind kind = MatcherKind::Reference;
  std::string config;  // bank directory or worker command / endpoint
  std::uint32_t trials = 30;
  NoiseSchedule schedule = NoiseSchedule::scaled_linear(600);
  std::shared_ptr<const Matcher> impl;
};

MatchScore score(const MatcherHandle& h, const GrayImage& image, ProjectionStyle style,
                 const std::string& prompt, std::uint64_t rng_seed);

// How projections and prompts are produced for class-level scoring.
struct ScoringContext {
  const Matcher* matcher = nullptr;
  std::vector<ProjectionStyle> styles{ProjectionStyle::Depth};
  CameraConfig camera;
  // Overrides the per-style best prompt for every style when set.
  std::optional<std::string> prompt_template;

  std::string prompt(ProjectionStyle style, std::string_view class_name) const;
};

// MS over the style set for every class at one view (one matcher call per style).
std::vector<MatchScore> score_classes(const Sample& x, const ViewAngles& phi,
                                      std::span<const std::string> classes,
                                      const ScoringContext& ctx, std::uint64_t seed);
MatchScore score_class(const Sample& x, const ViewAngles& phi, const std::string& class_name,
                       const ScoringContext& ctx, std::uint64_t seed);

}  // namespace op3d
