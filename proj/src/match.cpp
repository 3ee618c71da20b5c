#include "op3d/match.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "op3d/error.hpp"
#include "op3d/seed.hpp"

namespace op3d {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------ prompts ----

PromptTemplate::PromptTemplate(ProjectionStyle s, std::string t) : style(s), text(std::move(t)) {
  const auto first = text.find(kClassSlot);
  if (first == std::string::npos || text.find(kClassSlot, first + 1) != std::string::npos) {
    throw Error(Errc::InvalidArgument, "prompt template needs exactly one [n_c] slot: '" + text + "'");
  }
}

std::string PromptTemplate::fill(std::string_view class_name) const {
  if (class_name.empty()) throw Error(Errc::InvalidArgument, "class name must be nonempty");
  std::string out = text;
  out.replace(out.find(kClassSlot), kClassSlot.size(), class_name);
  return out;
}

PromptTemplate PromptTemplate::best_for(ProjectionStyle style) {
  switch (style) {
    case ProjectionStyle::Render: return {style, std::string(kPromptVariants[8])};
    case ProjectionStyle::Depth: return {style, std::string(kPromptVariants[1])};
    case ProjectionStyle::Edge: return {style, std::string(kPromptVariants[5])};
  }
  throw Error(Errc::InvalidArgument, "unknown style");
}

std::string build_prompt(ProjectionStyle style, std::string_view class_name) {
  return PromptTemplate::best_for(style).fill(class_name);
}

// ----------------------------------------------------- noise schedule ----

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw Error(Errc::InvalidArgument, "noise schedule needs at least one step");
  NoiseSchedule s;
  s.alpha_bars_.reserve(betas.size());
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) {
      throw Error(Errc::InvalidArgument, "beta must lie in (0, 1), got " + std::to_string(b));
    }
    const double next = prod * (1.0 - b);
    if (!(next < prod) || !(next > 0.0)) {
      throw Error(Errc::InvalidArgument, "cumulative alpha must stay positive and decrease");
    }
    prod = next;
    s.alpha_bars_.push_back(prod);
  }
  s.betas_ = std::move(betas);
  return s;
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error(Errc::InvalidArgument, "schedule needs >= 1 step");
  std::vector<double> b(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    b[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * f;
  }
  return from_betas(std::move(b));
}

NoiseSchedule NoiseSchedule::scaled_linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error(Errc::InvalidArgument, "schedule needs >= 1 step");
  if (!(beta_start > 0.0 && beta_end > 0.0)) {
    throw Error(Errc::InvalidArgument, "scaled-linear endpoints must be positive");
  }
  const double a = std::sqrt(beta_start), z = std::sqrt(beta_end);
  std::vector<double> b(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    const double r = a + (z - a) * f;
    b[static_cast<std::size_t>(i)] = r * r;
  }
  return from_betas(std::move(b));
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw Error(Errc::TimestepOutOfRange,
                "t=" + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

std::vector<double> noised_feature(std::span<const double> f0, double alpha_bar,
                                   std::span<const double> eps) {
  if (f0.size() != eps.size()) throw Error(Errc::InvalidArgument, "feature/noise size mismatch");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) {
    throw Error(Errc::InvalidArgument, "alpha_bar must lie in [0, 1]");
  }
  const double a = std::sqrt(alpha_bar), s = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(f0.size());
  for (std::size_t i = 0; i < f0.size(); ++i) out[i] = a * f0[i] + s * eps[i];
  return out;
}

std::vector<double> noised_feature(std::span<const double> f0, int t, std::span<const double> eps,
                                   const NoiseSchedule& schedule) {
  return noised_feature(f0, schedule.alpha_bar(t), eps);
}

DenoiseTrial DenoiseTrial::measure(int t, std::vector<double> eps, std::vector<double> eps_hat) {
  if (eps.size() != eps_hat.size() || eps.empty()) {
    throw Error(Errc::InvalidArgument, "eps and eps_hat must be nonempty and equally sized");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double d = eps[i] - eps_hat[i];
    acc += d * d;
  }
  DenoiseTrial tr;
  tr.t = t;
  tr.sq_err = acc / static_cast<double>(eps.size());
  tr.eps = std::move(eps);
  tr.eps_hat = std::move(eps_hat);
  return tr;
}

TrialDraw draw_trial(std::uint64_t seed, std::uint32_t trial, const NoiseSchedule& schedule,
                     std::size_t dim) {
  std::mt19937_64 rng(derive_seed(seed, trial));
  std::uniform_int_distribution<int> pick_t(1, schedule.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  TrialDraw d{pick_t(rng), std::vector<double>(dim)};
  for (auto& e : d.eps) e = normal(rng);
  return d;
}

// ------------------------------------------------------------- scores ----

MatchScore MatchScore::from_exponent(double m) {
  if (!std::isfinite(m) || m < 0.0) {
    throw Error(Errc::InvalidArgument, "score exponent must be finite and >= 0");
  }
  MatchScore s;
  s.m_ = m;
  return s;
}

MatchScore MatchScore::from_value(double value) {
  if (!(value > 0.0 && value <= 1.0)) {
    throw Error(Errc::InvalidArgument, "score value must lie in (0, 1]");
  }
  return from_exponent(-std::log(value));
}

double MatchScore::value() const { return std::exp(-m_); }

MatchScore matching_score_from_errors(std::span<const double> sq_errs) {
  if (sq_errs.empty()) throw Error(Errc::NoTrials, "no denoising trials");
  double sum = 0.0;
  for (double e : sq_errs) {
    if (!std::isfinite(e) || e < 0.0) throw Error(Errc::InvalidArgument, "sq_err must be >= 0");
    sum += e;
  }
  return MatchScore::from_exponent(sum / static_cast<double>(sq_errs.size()));
}

MatchScore matching_score(std::span<const DenoiseTrial> trials) {
  std::vector<double> errs;
  errs.reserve(trials.size());
  for (const auto& t : trials) errs.push_back(t.sq_err);
  return matching_score_from_errors(errs);
}

MatchScore similarity_score(double similarity, double tau) {
  if (!(tau > 0.0)) throw Error(Errc::InvalidArgument, "temperature must be positive");
  if (!std::isfinite(similarity)) throw Error(Errc::InvalidArgument, "similarity must be finite");
  return MatchScore::from_exponent((1.0 - std::min(similarity, 1.0)) / tau);
}

std::vector<double> class_probabilities(std::span<const MatchScore> scores) {
  if (scores.empty()) throw Error(Errc::EmptyClassSet, "no classes to normalize");
  double m_min = std::numeric_limits<double>::infinity();
  for (const auto& s : scores) m_min = std::min(m_min, s.exponent());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) sum += p[i] = std::exp(m_min - scores[i].exponent());
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<double> class_probabilities(std::span<const double> positive_scores) {
  if (positive_scores.empty()) throw Error(Errc::EmptyClassSet, "no classes to normalize");
  double sum = 0.0;
  for (double v : positive_scores) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::InvalidArgument, "scores must be > 0");
    sum += v;
  }
  std::vector<double> p(positive_scores.begin(), positive_scores.end());
  for (auto& v : p) v /= sum;
  return p;
}

std::map<std::string, double> class_probabilities(const std::map<std::string, MatchScore>& scores) {
  std::vector<MatchScore> flat;
  flat.reserve(scores.size());
  for (const auto& [_, s] : scores) flat.push_back(s);
  const auto p = class_probabilities(flat);
  std::map<std::string, double> out;
  std::size_t i = 0;
  for (const auto& [name, _] : scores) out[name] = p[i++];
  return out;
}

// ------------------------------------------------------------ matcher ----

std::string_view to_string(MatcherFamily f) {
  return f == MatcherFamily::Diffusion ? "diffusion" : "similarity";
}

MatchScore evidence_score(const Evidence& e) {
  if (e.family == MatcherFamily::Diffusion) return matching_score_from_errors(e.errors);
  return similarity_score(e.similarity);
}

MatchScore combine_styles(std::span<const Evidence> per_style) {
  if (per_style.empty()) throw Error(Errc::InvalidArgument, "no style evidence to combine");
  const auto family = per_style.front().family;
  for (const auto& e : per_style) {
    if (e.family != family) throw Error(Errc::InvalidArgument, "mixed matcher families");
  }
  if (family == MatcherFamily::Diffusion) {
    std::vector<double> pooled;
    for (const auto& e : per_style) pooled.insert(pooled.end(), e.errors.begin(), e.errors.end());
    return matching_score_from_errors(pooled);
  }
  double sum = 0.0;
  for (const auto& e : per_style) sum += similarity_score(e.similarity).value();
  const double mean = sum / static_cast<double>(per_style.size());
  // Deep underflow of every style still has to stay a valid score.
  if (!(mean > 0.0)) {
    double m = 0.0;
    for (const auto& e : per_style) m = std::max(m, similarity_score(e.similarity).exponent());
    return MatchScore::from_exponent(m);
  }
  return MatchScore::from_value(mean);
}

// ------------------------------------------------------ template bank ----

TemplateBank TemplateBank::build(std::span<const std::pair<std::string, Sample>> canonical,
                                 std::span<const ProjectionStyle> styles,
                                 const CameraConfig& camera, int n_views, double phi1) {
  if (canonical.empty()) throw Error(Errc::EmptyTemplateBank, "no canonical samples");
  if (styles.empty()) throw Error(Errc::InvalidArgument, "template bank needs >= 1 style");
  camera.validate();
  TemplateBank bank;
  bank.camera_ = camera;
  bank.views_ = fixed_view_sets(FixedViewKind::Circular, n_views, phi1);
  for (const auto& [name, sample] : canonical) {
    if (name.empty()) throw Error(Errc::InvalidArgument, "empty class name");
    if (bank.find(name)) throw Error(Errc::InvalidArgument, "duplicate class '" + name + "'");
    const Sample norm = normalize_to_unit(sample);
    Entry e{name, {}};
    for (const auto style : styles) {
      auto& masks = e.views[style];
      for (const auto& v : bank.views_) masks.push_back(binarize(project(norm, v, style, camera)));
    }
    bank.entries_.push_back(std::move(e));
  }
  return bank;
}

const TemplateBank::Entry* TemplateBank::find(std::string_view class_name) const {
  for (const auto& e : entries_) {
    if (e.class_name == class_name) return &e;
  }
  return nullptr;
}

void TemplateBank::save(const fs::path& dir) const {
  fs::create_directories(dir);
  json index;
  index["format"] = "op3d-template-bank";
  index["version"] = 1;
  index["camera"] = {{"r_p", camera_.r_p}, {"fov_deg", camera_.fov_deg}, {"image_px", camera_.image_px}};
  index["views"] = json::array();
  for (const auto& v : views_) index["views"].push_back({v.phi1(), v.phi2()});
  index["classes"] = json::array();
  const int n = camera_.image_px;
  for (std::size_t ci = 0; ci < entries_.size(); ++ci) {
    const auto& e = entries_[ci];
    json styles = json::object();
    for (const auto& [style, masks] : e.views) {
      json files = json::array();
      for (std::size_t vi = 0; vi < masks.size(); ++vi) {
        std::ostringstream name;
        name << "c" << ci << "/" << to_string(style) << "_" << vi << ".png";
        GrayImage img(n, n);
        for (std::size_t i = 0; i < masks[vi].size(); ++i) img.pixels[i] = masks[vi][i];
        write_png(dir / name.str(), img);
        files.push_back(name.str());
      }
      styles[std::string(to_string(style))] = files;
    }
    index["classes"].push_back({{"name", e.class_name}, {"styles", styles}});
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw Error(Errc::Io, "cannot write " + (dir / "index.json").string());
  out << index.dump(2) << "\n";
}

TemplateBank TemplateBank::load(const fs::path& dir) {
  const auto index_path = dir / "index.json";
  std::ifstream in(index_path);
  if (!in) throw Error(Errc::Io, "cannot open template bank index " + index_path.string());
  TemplateBank bank;
  try {
    const json index = json::parse(in);
    if (index.at("format") != "op3d-template-bank") {
      throw Error(Errc::ParseError, "not a template bank index: " + index_path.string());
    }
    const auto& cam = index.at("camera");
    bank.camera_.r_p = cam.at("r_p").get<double>();
    bank.camera_.fov_deg = cam.at("fov_deg").get<double>();
    bank.camera_.image_px = cam.at("image_px").get<int>();
    bank.camera_.validate();
    for (const auto& v : index.at("views")) bank.views_.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    const auto px = static_cast<std::size_t>(bank.camera_.image_px) * bank.camera_.image_px;
    for (const auto& c : index.at("classes")) {
      Entry e{c.at("name").get<std::string>(), {}};
      for (const auto& [style_name, files] : c.at("styles").items()) {
        auto& masks = e.views[parse_style(style_name)];
        for (const auto& f : files) {
          const GrayImage img = read_png(dir / f.get<std::string>());
          Mask m = binarize(img, 0.5f);
          if (m.size() != px) throw Error(Errc::ParseError, "template size differs from camera size");
          masks.push_back(std::move(m));
        }
      }
      bank.entries_.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(Errc::ParseError, index_path.string() + ": " + ex.what());
  }
  if (bank.entries_.empty()) throw Error(Errc::EmptyTemplateBank, "bank has no classes");
  return bank;
}

double best_template_iou(const GrayImage& image, ProjectionStyle style,
                         const TemplateBank::Entry& entry) {
  const auto it = entry.views.find(style);
  if (it == entry.views.end() || it->second.empty()) {
    throw Error(Errc::EmptyTemplateBank, "no " + std::string(to_string(style)) +
                                             " templates for class '" + entry.class_name + "'");
  }
  const Mask m = binarize(image);
  double best = 0.0;
  for (const auto& t : it->second) {
    if (t.size() != m.size()) throw Error(Errc::InvalidArgument, "image and template sizes differ");
    best = std::max(best, iou(m, t));
  }
  return best;
}

MatchScore reference_similarity(const GrayImage& image, ProjectionStyle style,
                                const TemplateBank::Entry& entry) {
  return MatchScore::from_exponent(1.0 - best_template_iou(image, style, entry));
}

ReferenceMatcher::ReferenceMatcher(std::shared_ptr<const TemplateBank> bank, double sharpness)
    : bank_(std::move(bank)), sharpness_(sharpness) {
  if (!bank_ || bank_->entries().empty()) throw Error(Errc::EmptyTemplateBank, "empty template bank");
  if (!(sharpness_ > 0.0)) throw Error(Errc::InvalidArgument, "sharpness must be positive");
}

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool contains_word(std::string_view text, std::string_view word) {
  for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !is_word_char(text[pos - 1]);
    const auto end = pos + word.size();
    const bool right = end == text.size() || !is_word_char(text[end]);
    if (left && right) return true;
  }
  return false;
}

}  // namespace

const TemplateBank::Entry& ReferenceMatcher::resolve(std::string_view prompt) const {
  const TemplateBank::Entry* best = nullptr;
  for (const auto& e : bank_->entries()) {
    if (contains_word(prompt, e.class_name) &&
        (!best || e.class_name.size() > best->class_name.size())) {
      best = &e;
    }
  }
  if (!best) {
    throw Error(Errc::EmptyTemplateBank, "no template class named in prompt '" + std::string(prompt) + "'");
  }
  return *best;
}

std::vector<Evidence> ReferenceMatcher::evaluate(const GrayImage& image, ProjectionStyle style,
                                                 std::span<const std::string> prompts,
                                                 std::uint64_t) const {
  std::vector<Evidence> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    const double best = best_template_iou(image, style, resolve(p));
    out.push_back({MatcherFamily::Diffusion, {sharpness_ * (1.0 - best)}, 0.0});
  }
  return out;
}

std::string ReferenceMatcher::describe() const {
  std::ostringstream s;
  s << "reference(classes=" << bank_->entries().size() << ", sharpness=" << sharpness_ << ")";
  return s.str();
}

// --------------------------------------------------------- handle/score --

MatchScore score(const MatcherHandle& h, const GrayImage& image, ProjectionStyle style,
                 const std::string& prompt, std::uint64_t rng_seed) {
  if (h.trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (!h.impl) throw Error(Errc::MatcherUnavailable, "matcher handle is not connected");
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw Error(Errc::InvalidArgument, "invalid image");
  }
  const std::string prompts[] = {prompt};
  const auto ev = h.impl->evaluate(image, style, prompts, rng_seed);
  if (ev.size() != 1) throw Error(Errc::ProtocolError, "matcher returned wrong evidence count");
  return evidence_score(ev.front());
}

std::string ScoringContext::prompt(ProjectionStyle style, std::string_view class_name) const {
  if (prompt_template) return PromptTemplate(style, *prompt_template).fill(class_name);
  return build_prompt(style, class_name);
}

std::vector<MatchScore> score_classes(const Sample& x, const ViewAngles& phi,
                                      std::span<const std::string> classes,
                                      const ScoringContext& ctx, std::uint64_t seed) {
  if (classes.empty()) throw Error(Errc::EmptyClassSet, "no classes to score");
  if (!ctx.matcher) throw Error(Errc::MatcherUnavailable, "no matcher configured");
  if (ctx.styles.empty()) throw Error(Errc::InvalidArgument, "no projection styles");
  std::vector<std::vector<Evidence>> per_class(classes.size());
  for (const auto style : ctx.styles) {
    const GrayImage img = project(x, phi, style, ctx.camera);
    std::vector<std::string> prompts;
    prompts.reserve(classes.size());
    for (const auto& c : classes) prompts.push_back(ctx.prompt(style, c));
    // Every class sees the same seed, so stochastic matchers compare classes
    // on identical noise draws.
    const auto ev = ctx.matcher->evaluate(img, style, prompts,
                                          derive_seed(seed, static_cast<std::uint64_t>(style)));
    if (ev.size() != prompts.size()) {
      throw Error(Errc::ProtocolError, "matcher returned " + std::to_string(ev.size()) +
                                           " results for " + std::to_string(prompts.size()) + " prompts");
    }
    for (std::size_t i = 0; i < ev.size(); ++i) per_class[i].push_back(ev[i]);
  }
  std::vector<MatchScore> out;
  out.reserve(classes.size());
  for (const auto& ev : per_class) out.push_back(combine_styles(ev));
  return out;
}

MatchScore score_class(const Sample& x, const ViewAngles& phi, const std::string& class_name,
                       const ScoringContext& ctx, std::uint64_t seed) {
  const std::string one[] = {class_name};
  return score_classes(x, phi, one, ctx, seed).front();
}

}  // namespace op3d
