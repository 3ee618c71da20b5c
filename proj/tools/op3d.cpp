// op3d: open-pose 3D zero-shot classification toolkit.
//
//   op3d gen-bench --source DIR --dataset NAME --seed 42 --out DIR
//   op3d project   --input FILE --style depth --phi1 90 --phi2 0 --out view.png
//   op3d classify  --input FILE --classes classes.txt --matcher ref --views iarm
//   op3d eval      --log run.jsonl --report report.md
//   op3d sweep     --grid grid.json --dataset DIR --classes classes.txt
//   op3d make-toy  --out DIR
//
// Exit status: 0 success, 1 usage error, 2 runtime error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "op3d/classes.hpp"
#include "op3d/error.hpp"
#include "op3d/evalkit.hpp"
#include "op3d/external.hpp"
#include "op3d/iarm.hpp"
#include "op3d/match.hpp"
#include "op3d/meshio.hpp"
#include "op3d/posegen.hpp"
#include "op3d/project.hpp"
#include "op3d/sweep.hpp"
#include "op3d/toyshapes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace op3d;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Converts library validation failures of flag values into usage errors.
template <typename Fn>
auto validated(const std::string& flag, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

std::vector<double> parse_csv_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw UsageError("not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ------------------------------------------------------------- options ----

struct CameraOpts {
  CameraConfig cam;

  void add(CLI::App* sub) {
    sub->add_option("--rp", cam.r_p, "Camera distance from the object centre")->capture_default_str();
    sub->add_option("--fov", cam.fov_deg, "Vertical field of view, degrees")->capture_default_str();
    sub->add_option("--size", cam.image_px, "Image width and height, pixels")->capture_default_str();
  }
  CameraConfig get() const {
    validated("camera", [&] {
      cam.validate();
      return 0;
    });
    return cam;
  }
};

struct MatcherOpts {
  std::string kind = "ref";
  std::string bank;
  std::string command;
  std::string endpoint;
  std::string mode;
  std::uint32_t trials = 30;
  int timeout_ms = 30000;

  void add(CLI::App* sub) {
    sub->add_option("--matcher", kind, "Matcher: ref (template bank) or extern (worker process)")
        ->check(CLI::IsMember({"ref", "extern"}))
        ->capture_default_str();
    sub->add_option("--bank", bank, "Template bank directory (ref); built from the class list when absent");
    sub->add_option("--matcher-cmd", command, "Worker launch command (extern); defaults to $OP3D_MATCHER");
    sub->add_option("--matcher-endpoint", endpoint, "Worker host:port (extern)");
    sub->add_option("--matcher-mode", mode, "Worker mode: diffusion or similarity");
    sub->add_option("--trials", trials, "Monte-Carlo trials per request (extern)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--timeout-ms", timeout_ms, "Worker handshake deadline")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  std::shared_ptr<const Matcher> build(const std::vector<ClassSpec>& classes,
                                       const std::vector<ProjectionStyle>& styles,
                                       const CameraConfig& cam) const {
    if (kind == "ref") {
      if (!bank.empty()) return std::make_shared<ReferenceMatcher>(std::make_shared<TemplateBank>(TemplateBank::load(bank)));
      std::vector<std::pair<std::string, Sample>> canonical;
      for (const auto& c : classes) {
        if (!c.canonical) {
          throw Error(Errc::EmptyTemplateBank,
                      "class '" + c.name + "' has no canonical sample; pass --bank or list a path");
        }
        canonical.emplace_back(c.name, load_sample(*c.canonical));
      }
      return std::make_shared<ReferenceMatcher>(
          std::make_shared<TemplateBank>(TemplateBank::build(canonical, styles, cam)));
    }
    ExternalOptions o;
    o.command = command;
    if (o.command.empty() && endpoint.empty()) {
      if (const char* env = std::getenv("OP3D_MATCHER")) o.command = env;
    }
    o.endpoint = endpoint;
    o.mode = mode;
    o.trials = trials;
    o.handshake_timeout = std::chrono::milliseconds(timeout_ms);
    return std::make_shared<ExternalMatcher>(o);
  }
};

struct ScoringOpts {
  std::string styles = "depth";
  std::string prompt;
  std::uint64_t seed = 42;
  int jobs = 1;

  void add(CLI::App* sub) {
    sub->add_option("--styles", styles, "Projection styles, comma-separated (render,depth,edge)")
        ->capture_default_str();
    sub->add_option("--prompt", prompt, "Prompt template containing [n_c]; default: best per style");
    sub->add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  }
  std::vector<ProjectionStyle> style_list() const {
    return validated("--styles", [&] { return parse_styles(styles); });
  }
  std::optional<std::string> prompt_template() const {
    if (prompt.empty()) return std::nullopt;
    validated("--prompt", [&] { return PromptTemplate(ProjectionStyle::Depth, prompt); });
    return prompt;
  }
};

struct ViewOpts {
  std::string views = "iarm";
  int R = 10;
  std::string etas;
  double fd = 5.0;
  std::string refine_mode = "azimuth";
  double init_phi1 = 90.0;
  double init_phi2 = 0.0;
  bool no_keep_best = false;
  int n_views = 12;
  double ring_phi1 = 30.0;
  CLI::Option* r_opt = nullptr;

  void add(CLI::App* sub) {
    sub->add_option("--views", views, "View strategy: iarm, single, cube, circular")
        ->check(CLI::IsMember({"iarm", "single", "cube", "circular"}))
        ->capture_default_str();
    r_opt = sub->add_option("--R", R, "Refinement iterations")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--etas", etas, "Step sizes in degrees, comma-separated (default 2R, ..., 4, 2)");
    sub->add_option("--fd", fd, "Finite-difference probe, degrees")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--refine-mode", refine_mode, "azimuth or full2d")
        ->check(CLI::IsMember({"azimuth", "full2d"}))
        ->capture_default_str();
    sub->add_option("--init-phi1", init_phi1, "Initial elevation, degrees")->capture_default_str();
    sub->add_option("--init-phi2", init_phi2, "Initial azimuth, degrees")->capture_default_str();
    sub->add_flag("--no-keep-best", no_keep_best, "Report the last iterate instead of the best one");
    sub->add_option("--n-views", n_views, "Circular view count")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--ring-phi1", ring_phi1, "Circular view elevation")->capture_default_str();
  }

  RefineConfig refine() const {
    RefineConfig c;
    c.R = R;
    if (!etas.empty()) {
      c.etas = parse_csv_doubles(etas);
      if (r_opt->count() == 0) c.R = static_cast<int>(c.etas.size());
    } else {
      c.etas = default_etas(R);
    }
    c.fd_step = fd;
    c.mode = parse_refine_mode(refine_mode);
    c.initial = validated("--init-phi1", [&] { return ViewAngles(init_phi1, init_phi2); });
    c.keep_best = !no_keep_best;
    validated("--etas", [&] {
      c.validate();
      return 0;
    });
    return c;
  }

  BaselineConfig baseline() const {
    BaselineConfig b;
    b.views = parse_view_kind(views);
    b.refine = refine();
    b.circular_views = n_views;
    b.circular_phi1 = validated("--ring-phi1", [&] { return ViewAngles(ring_phi1, 0.0).phi1(); });
    return b;
  }
};

// ------------------------------------------------------------ commands ----

struct GenBench {
  std::string source, dataset, out;
  std::uint64_t seed = 42;
  int jobs = 1;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("gen-bench", "Build an open-pose benchmark from a class-per-directory tree");
    sub->add_option("--source", source, "Source dataset root")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--dataset", dataset, "Dataset name recorded in the manifest")->required();
    sub->add_option("--seed", seed, "Rotation seed")->capture_default_str();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->callback([this] { run(); });
  }
  void run() {
    const auto m = generate_openpose_dataset(source, dataset, seed, out, jobs);
    print_json({{"dataset", m.dataset_name},
                {"seed", m.seed},
                {"entries", m.entries.size()},
                {"classes", m.class_histogram()},
                {"manifest", (fs::path(out) / kManifestFileName).string()}});
  }
};

struct ProjectCmd {
  std::string input, style = "depth", out;
  double phi1 = 90.0, phi2 = 0.0;
  bool align = false;
  CameraOpts camera;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("project", "Project one sample to an 8-bit grayscale PNG");
    sub->add_option("--input", input, "OFF or XYZ sample")->required()->check(CLI::ExistingFile);
    sub->add_option("--style", style, "render, depth or edge")
        ->check(CLI::IsMember({"render", "depth", "edge"}))
        ->capture_default_str();
    sub->add_option("--phi1", phi1, "Elevation, degrees in [-90, 90]")->capture_default_str();
    sub->add_option("--phi2", phi2, "Azimuth, degrees")->capture_default_str();
    sub->add_flag("--align", align, "PCA-align the sample before projecting");
    sub->add_option("--out", out, "Output PNG")->required();
    camera.add(sub);
    sub->callback([this] { run(); });
  }
  void run() {
    const auto cam = camera.get();
    const ViewAngles phi = validated("--phi1", [&] { return ViewAngles(phi1, phi2); });
    const Sample x = load_sample(input);
    const Sample prepared = align ? pca_align(x) : normalize_to_unit(x);
    write_png(out, project(prepared, phi, parse_style(style), cam));
  }
};

json prediction_json(const SampleRecord& r) {
  json scores = json::array();
  for (double m : r.score_exponents) scores.push_back(std::exp(-m));
  json j = {{"predicted_class", r.predicted_class},
            {"classes", r.classes},
            {"scores", scores},
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

struct Classify {
  std::string input, dataset, classes, trace, log;
  CameraOpts camera;
  MatcherOpts matcher;
  ScoringOpts scoring;
  ViewOpts views;
  CLI::App* sub = nullptr;

  void add(CLI::App& app) {
    sub = app.add_subcommand("classify", "Classify one sample or a whole open-pose dataset");
    auto* in = sub->add_option("--input", input, "Single OFF or XYZ sample")->check(CLI::ExistingFile);
    auto* ds = sub->add_option("--dataset", dataset, "Open-pose dataset directory with manifest.jsonl")
                   ->check(CLI::ExistingDirectory);
    in->excludes(ds);
    sub->add_option("--classes", classes, "Class list: 'name [canonical_path]' per line")
        ->check(CLI::ExistingFile);
    sub->add_option("--trace", trace, "Refinement trace output (JSONL, --input only)");
    sub->add_option("--log", log, "Per-sample log output (JSONL, --dataset only)");
    camera.add(sub);
    matcher.add(sub);
    scoring.add(sub);
    views.add(sub);
    sub->callback([this] { run(); });
  }

  void run() {
    if (input.empty() == dataset.empty()) throw UsageError("classify needs exactly one of --input or --dataset");
    if (input.size() && classes.empty()) throw UsageError("--classes is required with --input");
    if (!trace.empty() && input.empty()) throw UsageError("--trace applies to --input runs");
    if (!log.empty() && dataset.empty()) throw UsageError("--log applies to --dataset runs");
    BaselineConfig cfg = views.baseline();
    cfg.scoring.styles = scoring.style_list();
    cfg.scoring.prompt_template = scoring.prompt_template();
    cfg.scoring.camera = camera.get();
    cfg.seed = scoring.seed;
    cfg.jobs = scoring.jobs;

    std::vector<ClassSpec> specs;
    if (!classes.empty()) specs = read_class_list(classes);
    PoseManifest manifest;
    if (!dataset.empty()) {
      manifest = read_manifest(fs::path(dataset) / kManifestFileName);
      if (specs.empty()) {
        for (const auto& [name, _] : manifest.class_histogram()) specs.push_back({name, std::nullopt});
      }
    }
    cfg.classes = class_names(specs);
    const auto m = matcher.build(specs, cfg.scoring.styles, cfg.scoring.camera);
    cfg.scoring.matcher = m.get();

    json header = config_json(cfg);
    header["command"] = "classify";
    if (!dataset.empty()) {
      const auto res = run_baseline(dataset, manifest, cfg);
      if (!log.empty()) write_run_log(log, header, res.records);
      print_json({{"dataset", dataset},
                  {"samples", res.metrics.total},
                  {"acc", res.metrics.acc},
                  {"macc", res.metrics.macc},
                  {"per_class", res.metrics.per_class}});
      return;
    }

    const Sample x = load_sample(input);
    SampleRecord r;
    if (cfg.views == ViewKind::Iarm) {
      const auto p = classify_openpose(x, cfg.classes, cfg.scoring, cfg.refine, cfg.seed, cfg.jobs);
      r.classes = p.classes;
      for (const auto& s : p.scores) r.score_exponents.push_back(s.exponent());
      r.probabilities = p.probabilities;
      r.predicted_class = p.predicted_class();
      r.angles = p.angles;
      r.pca_degenerate = p.pca_degenerate;
      if (!trace.empty()) write_trace(p);
    } else {
      FixedViewKind k = cfg.views == ViewKind::Single ? FixedViewKind::Single
                        : cfg.views == ViewKind::Cube ? FixedViewKind::Cube
                                                      : FixedViewKind::Circular;
      const auto vs = fixed_view_sets(k, cfg.circular_views, cfg.circular_phi1);
      r = score_fixed_views(x, vs, cfg.classes, cfg.scoring, cfg.seed);
    }
    json out = prediction_json(r);
    out["input"] = input;
    out["config"] = header;
    print_json(out);
  }

  void write_trace(const Prediction& p) const {
    if (fs::path(trace).has_parent_path()) fs::create_directories(fs::path(trace).parent_path());
    std::ofstream out(trace);
    if (!out) throw Error(Errc::Io, "cannot write " + trace);
    for (std::size_t c = 0; c < p.classes.size(); ++c) {
      for (const auto& s : p.traces[c]) {
        out << json{{"class", p.classes[c]},
                    {"r", s.r},
                    {"phi1", s.phi.phi1()},
                    {"phi2", s.phi.phi2()},
                    {"score", s.score.value()},
                    {"m", s.score.exponent()}}
                   .dump()
            << "\n";
      }
    }
  }
};

struct Eval {
  std::string log, split, report, label;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("eval", "Aggregate a per-sample log into Acc/mAcc and a report");
    sub->add_option("--log", log, "Per-sample log from classify --dataset")->required()->check(CLI::ExistingFile);
    sub->add_option("--split", split, "Dataset split fixing class order (modelnet40, modelnet10, mcgill)");
    sub->add_option("--report", report, "Markdown report output");
    sub->add_option("--label", label, "Row label; defaults to the logged view strategy");
    sub->callback([this] { run(); });
  }
  void run() {
    const auto rl = read_run_log(log);
    std::vector<std::string> classes;
    if (!split.empty()) classes = validated("--split", [&] { return load_split(split).unseen; });
    const auto preds = to_predictions(rl.records);
    const auto m = compute_metrics(preds, classes);
    const std::string row = label.empty() ? rl.header.value("views", std::string("run")) : label;
    if (!report.empty()) {
      if (fs::path(report).has_parent_path()) fs::create_directories(fs::path(report).parent_path());
      std::ofstream out(report);
      if (!out) throw Error(Errc::Io, "cannot write " + report);
      out << markdown_report(m, row);
    }
    print_json({{"samples", m.total},
                {"correct", m.correct},
                {"acc", std::stod(format_percent(m.acc))},
                {"macc", std::stod(format_percent(m.macc))},
                {"per_class", m.per_class}});
  }
};

struct SweepCmd {
  std::string grid, dataset, classes, out, report;
  CameraOpts camera;
  MatcherOpts matcher;
  ScoringOpts scoring;
  ViewOpts views;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("sweep", "Run a parameter grid over a dataset, one row per cell");
    sub->add_option("--grid", grid, "Grid spec (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--dataset", dataset, "Open-pose dataset directory")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--classes", classes, "Class list: 'name [canonical_path]' per line")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Rows output (JSONL, flushed per completed cell)");
    sub->add_option("--report", report, "Markdown table output");
    camera.add(sub);
    matcher.add(sub);
    scoring.add(sub);
    views.add(sub);
    sub->callback([this] { run(); });
  }
  void run() {
    BaselineConfig base = views.baseline();
    base.scoring.styles = scoring.style_list();
    base.scoring.prompt_template = scoring.prompt_template();
    base.scoring.camera = camera.get();
    base.seed = scoring.seed;
    base.jobs = scoring.jobs;
    const SweepGrid g = validated("--grid", [&] { return read_grid(grid, base); });
    for (const auto& w : g.warnings) std::cerr << "warning: " << w << "\n";

    const auto manifest = read_manifest(fs::path(dataset) / kManifestFileName);
    std::vector<ClassSpec> specs;
    if (!classes.empty()) {
      specs = read_class_list(classes);
    } else {
      for (const auto& [name, _] : manifest.class_histogram()) specs.push_back({name, std::nullopt});
    }
    base.classes = class_names(specs);
    std::vector<ProjectionStyle> all_styles;
    for (const auto& c : g.cells) {
      for (const auto s : c.styles) {
        if (std::find(all_styles.begin(), all_styles.end(), s) == all_styles.end()) all_styles.push_back(s);
      }
    }
    const auto m = matcher.build(specs, all_styles, base.scoring.camera);
    base.scoring.matcher = m.get();

    std::ofstream rows;
    if (!out.empty()) {
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      rows.open(out);
      if (!rows) throw Error(Errc::Io, "cannot write " + out);
      json header = config_json(base);
      header["command"] = "sweep";
      rows << json{{"format", "op3d-sweep"}, {"version", 1}, {"config", header}}.dump() << "\n" << std::flush;
    }
    const auto results = run_sweep(dataset, manifest, base, g, [&](const SweepRow& r) {
      if (rows.is_open()) rows << row_json(r).dump() << "\n" << std::flush;
    });
    const auto table = markdown_sweep_table(results);
    if (!report.empty()) {
      std::ofstream rep(report);
      if (!rep) throw Error(Errc::Io, "cannot write " + report);
      rep << table;
    }
    std::cout << table;
  }
};

struct MakeToy {
  std::string out;
  std::uint64_t seed = 42;
  int per_class = 10;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("make-toy", "Write the three-shape toy benchmark and its class list");
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--seed", seed, "Rotation seed")->capture_default_str();
    sub->add_option("--per-class", per_class, "Samples per class")->check(CLI::PositiveNumber)->capture_default_str();
    sub->callback([this] { run(); });
  }
  void run() {
    const fs::path root(out);
    std::ofstream list;
    fs::create_directories(root / "canonical");
    list.open(root / "classes.txt");
    if (!list) throw Error(Errc::Io, "cannot write " + (root / "classes.txt").string());
    for (const auto& [name, shape] : toy_canonical()) {
      save_sample(root / "canonical" / (name + ".off"), shape);
      list << name << " canonical/" << name << ".off\n";
    }
    const auto b = make_toy_benchmark(root, seed, per_class);
    print_json({{"dataset", b.dataset_dir.string()},
                {"classes", (root / "classes.txt").string()},
                {"entries", b.manifest.entries.size()}});
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"op3d: zero-shot classification of 3D objects in arbitrary poses"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file ([subcommand] sections); flags take precedence");

  GenBench gen;
  ProjectCmd proj;
  Classify cls;
  Eval ev;
  SweepCmd sw;
  MakeToy toy;
  gen.add(app);
  proj.add(app);
  cls.add(app);
  ev.add(app);
  sw.add(app);
  toy.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    const auto subs = app.get_subcommands();
    std::cerr << "\n" << (subs.empty() ? app.help() : subs.back()->help());
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    std::cerr << "\n" << (subs.empty() ? app.help() : subs.back()->help());
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
