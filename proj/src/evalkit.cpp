#include "op3d/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "op3d/error.hpp"
#include "op3d/meshio.hpp"
#include "op3d/parallel.hpp"
#include "op3d/seed.hpp"

namespace op3d {

using nlohmann::json;
namespace fs = std::filesystem;

MetricsReport compute_metrics(std::span<const LabeledPrediction> preds,
                              std::span<const std::string> classes) {
  if (preds.empty()) throw Error(Errc::EmptyPredictions, "no predictions to score");
  MetricsReport m;
  if (classes.empty()) {
    std::set<std::string> seen;
    for (const auto& p : preds) seen.insert(p.true_class);
    m.classes.assign(seen.begin(), seen.end());
  } else {
    m.classes.assign(classes.begin(), classes.end());
  }
  std::map<std::string, std::size_t> hits;
  for (const auto& c : m.classes) {
    m.counts[c] = 0;
    hits[c] = 0;
  }
  for (const auto& p : preds) {
    const auto it = m.counts.find(p.true_class);
    if (it == m.counts.end()) {
      throw Error(Errc::InvalidArgument, "sample '" + p.sample_id + "' has class '" + p.true_class +
                                             "' outside the evaluated class set");
    }
    ++it->second;
    if (p.predicted_class == p.true_class) {
      ++hits[p.true_class];
      ++m.correct;
    }
    ++m.total;
  }
  double sum = 0.0;
  for (const auto& c : m.classes) {
    const auto n = m.counts[c];
    if (n == 0) throw Error(Errc::ClassWithNoSamples, "class '" + c + "' has no samples");
    const double a = 100.0 * static_cast<double>(hits[c]) / static_cast<double>(n);
    m.per_class[c] = a;
    sum += a;
  }
  m.acc = 100.0 * static_cast<double>(m.correct) / static_cast<double>(m.total);
  m.macc = sum / static_cast<double>(m.classes.size());
  return m;
}

std::vector<MatchScore> ensemble_styles(
    const std::vector<std::map<ProjectionStyle, Evidence>>& per_class) {
  if (per_class.empty()) throw Error(Errc::EmptyClassSet, "no classes to ensemble");
  std::vector<MatchScore> out;
  out.reserve(per_class.size());
  for (const auto& styles : per_class) {
    if (styles.empty()) throw Error(Errc::StyleSetMismatch, "class without any style evidence");
    const bool same = styles.size() == per_class.front().size() &&
                      std::equal(styles.begin(), styles.end(), per_class.front().begin(),
                                 [](const auto& a, const auto& b) { return a.first == b.first; });
    if (!same) throw Error(Errc::StyleSetMismatch, "classes were scored under different style sets");
    std::vector<Evidence> ev;
    for (const auto& [_, e] : styles) ev.push_back(e);
    out.push_back(combine_styles(ev));
  }
  return out;
}

MatchScore mean_score(std::span<const MatchScore> scores) {
  if (scores.empty()) throw Error(Errc::InvalidArgument, "no scores to average");
  double m_min = std::numeric_limits<double>::infinity();
  for (const auto& s : scores) m_min = std::min(m_min, s.exponent());
  double acc = 0.0;
  for (const auto& s : scores) acc += std::exp(m_min - s.exponent());
  const double m = m_min - std::log(acc / static_cast<double>(scores.size()));
  return MatchScore::from_exponent(std::max(0.0, m));
}

std::string_view to_string(ViewKind k) {
  switch (k) {
    case ViewKind::Single: return "single";
    case ViewKind::Cube: return "cube";
    case ViewKind::Circular: return "circular";
    case ViewKind::Iarm: return "iarm";
  }
  return "?";
}

ViewKind parse_view_kind(std::string_view name) {
  if (name == "iarm") return ViewKind::Iarm;
  switch (parse_fixed_view_kind(name)) {
    case FixedViewKind::Single: return ViewKind::Single;
    case FixedViewKind::Cube: return ViewKind::Cube;
    case FixedViewKind::Circular: return ViewKind::Circular;
  }
  throw Error(Errc::InvalidArgument, "unknown view kind");
}

std::uint64_t sample_seed(std::uint64_t seed, std::string_view sample_id) {
  return derive_seed(seed, fnv1a(sample_id));
}

namespace {

void finish_record(SampleRecord& r, std::span<const std::string> classes,
                   std::span<const MatchScore> scores) {
  r.classes.assign(classes.begin(), classes.end());
  r.score_exponents.clear();
  for (const auto& s : scores) r.score_exponents.push_back(s.exponent());
  r.probabilities = class_probabilities(scores);
  r.predicted_class = r.classes[argmax_lowest(r.probabilities)];
}

}  // namespace

SampleRecord score_fixed_views(const Sample& x, std::span<const ViewAngles> views,
                               std::span<const std::string> classes, const ScoringContext& ctx,
                               std::uint64_t seed) {
  if (views.empty()) throw Error(Errc::InvalidArgument, "empty view set");
  if (classes.empty()) throw Error(Errc::EmptyClassSet, "no candidate classes");
  const Sample norm = normalize_to_unit(x);
  std::vector<std::vector<MatchScore>> per_class(classes.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto s = score_classes(norm, views[v], classes, ctx, derive_seed(seed, v));
    for (std::size_t c = 0; c < classes.size(); ++c) per_class[c].push_back(s[c]);
  }
  std::vector<MatchScore> scores;
  for (const auto& s : per_class) scores.push_back(mean_score(s));
  SampleRecord r;
  finish_record(r, classes, scores);
  return r;
}

RunResult run_baseline(const fs::path& dataset_dir, const PoseManifest& manifest,
                       const BaselineConfig& cfg) {
  if (manifest.entries.empty()) throw Error(Errc::EmptyPredictions, "manifest has no samples");
  std::vector<std::string> classes = cfg.classes;
  if (classes.empty()) {
    for (const auto& [name, _] : manifest.class_histogram()) classes.push_back(name);
  }
  std::vector<ViewAngles> views;
  if (cfg.views == ViewKind::Single) views = fixed_view_sets(FixedViewKind::Single);
  if (cfg.views == ViewKind::Cube) views = fixed_view_sets(FixedViewKind::Cube);
  if (cfg.views == ViewKind::Circular) {
    views = fixed_view_sets(FixedViewKind::Circular, cfg.circular_views, cfg.circular_phi1);
  }
  if (cfg.views == ViewKind::Iarm) cfg.refine.validate();

  std::vector<ManifestEntry> entries = manifest.entries;
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  RunResult res;
  res.records.resize(entries.size());
  parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    Sample x;
    try {
      x = load_sample(dataset_dir / fs::path(e.sample_id));
    } catch (const Error& ex) {
      throw Error(Errc::UnreadableSample, ex.what());
    }
    const auto seed = sample_seed(cfg.seed, e.sample_id);
    SampleRecord r;
    if (cfg.views == ViewKind::Iarm) {
      const auto p = classify_openpose(x, classes, cfg.scoring, cfg.refine, seed);
      finish_record(r, classes, p.scores);
      r.angles = p.angles;
      r.pca_degenerate = p.pca_degenerate;
    } else {
      r = score_fixed_views(x, views, classes, cfg.scoring, seed);
    }
    r.sample_id = e.sample_id;
    r.true_class = e.class_name;
    res.records[i] = std::move(r);
  });
  res.metrics = compute_metrics(to_predictions(res.records));
  return res;
}

json config_json(const BaselineConfig& cfg) {
  json j;
  j["views"] = std::string(to_string(cfg.views));
  j["classes"] = cfg.classes;
  json styles = json::array();
  for (const auto s : cfg.scoring.styles) styles.push_back(std::string(to_string(s)));
  j["styles"] = styles;
  j["camera"] = {{"r_p", cfg.scoring.camera.r_p},
                 {"fov_deg", cfg.scoring.camera.fov_deg},
                 {"image_px", cfg.scoring.camera.image_px}};
  j["prompt_template"] = cfg.scoring.prompt_template ? json(*cfg.scoring.prompt_template) : json(nullptr);
  j["matcher"] = cfg.scoring.matcher ? cfg.scoring.matcher->describe() : std::string("none");
  if (cfg.views == ViewKind::Iarm) {
    j["refine"] = {{"R", cfg.refine.R},
                   {"etas", cfg.refine.etas},
                   {"fd", cfg.refine.fd_step},
                   {"mode", std::string(to_string(cfg.refine.mode))},
                   {"initial", {cfg.refine.initial.phi1(), cfg.refine.initial.phi2()}},
                   {"keep_best", cfg.refine.keep_best}};
  }
  if (cfg.views == ViewKind::Circular) {
    j["circular"] = {{"n_views", cfg.circular_views}, {"phi1", cfg.circular_phi1}};
  }
  j["seed"] = cfg.seed;
  return j;
}

namespace {

constexpr const char* kLogFormat = "op3d-run-log";

json record_json(const SampleRecord& r) {
  json j = {{"sample_id", r.sample_id},
            {"true_class", r.true_class},
            {"predicted_class", r.predicted_class},
            {"classes", r.classes},
            {"m", r.score_exponents},
            {"probabilities", r.probabilities},
            {"pca_degenerate", r.pca_degenerate}};
  if (!r.angles.empty()) {
    json a = json::array();
    for (const auto& v : r.angles) a.push_back({v.phi1(), v.phi2()});
    j["angles"] = a;
  }
  return j;
}

SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.true_class = j.at("true_class").get<std::string>();
  r.predicted_class = j.at("predicted_class").get<std::string>();
  r.classes = j.at("classes").get<std::vector<std::string>>();
  r.score_exponents = j.at("m").get<std::vector<double>>();
  r.probabilities = j.at("probabilities").get<std::vector<double>>();
  r.pca_degenerate = j.value("pca_degenerate", false);
  if (const auto it = j.find("angles"); it != j.end()) {
    for (const auto& a : *it) r.angles.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
  }
  return r;
}

}  // namespace

void write_run_log(std::ostream& out, const json& header, std::span<const SampleRecord> records) {
  out << json{{"format", kLogFormat}, {"version", 1}, {"config", header}}.dump() << "\n";
  for (const auto& r : records) out << record_json(r).dump() << "\n";
}

void write_run_log(const fs::path& path, const json& header, std::span<const SampleRecord> records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  write_run_log(out, header, records);
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

RunLog read_run_log(std::istream& in) {
  RunLog log;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (j.value("format", "") != kLogFormat) {
          throw Error(Errc::ParseError, "line 1: not an op3d run log");
        }
        log.header = j.at("config");
        have_header = true;
      } else {
        log.records.push_back(record_from_json(j));
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error& ex) {
      if (ex.code() == Errc::ParseError) throw;
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!have_header) throw Error(Errc::ParseError, "empty run log");
  return log;
}

RunLog read_run_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return read_run_log(in);
}

std::vector<LabeledPrediction> to_predictions(std::span<const SampleRecord> records) {
  std::vector<LabeledPrediction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.sample_id, r.true_class, r.predicted_class});
  return out;
}

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string markdown_report(const MetricsReport& m, const std::string& label) {
  std::ostringstream s;
  s << "| Method |";
  for (const auto& c : m.classes) s << " " << c << " |";
  s << "\n|---|";
  for (std::size_t i = 0; i < m.classes.size(); ++i) s << "---:|";
  s << "\n| " << label << " |";
  for (const auto& c : m.classes) s << " " << format_percent(m.per_class.at(c)) << " |";
  s << "\n| Samples |";
  for (const auto& c : m.classes) s << " " << m.counts.at(c) << " |";
  s << "\n\n";
  s << "Acc: " << format_percent(m.acc) << " (" << m.correct << "/" << m.total << ")  \n";
  s << "mAcc: " << format_percent(m.macc) << "\n";
  return s.str();
}

}  // namespace op3d
