#include "op3d/sweep.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "op3d/error.hpp"

namespace op3d {

using nlohmann::json;

namespace {

std::string styles_label(const std::vector<ProjectionStyle>& styles) {
  std::string s;
  for (const auto st : styles) {
    if (!s.empty()) s += "+";
    s += to_string(st);
  }
  return s;
}

template <typename T>
std::vector<T> axis(const json& spec, const char* key, std::vector<T> fallback) {
  const auto it = spec.find(key);
  if (it == spec.end()) return fallback;
  if (!it->is_array() || it->empty()) {
    throw Error(Errc::InvalidArgument, std::string("grid key '") + key + "' must be a nonempty list");
  }
  try {
    return it->get<std::vector<T>>();
  } catch (const json::exception& ex) {
    throw Error(Errc::InvalidArgument, std::string("grid key '") + key + "': " + ex.what());
  }
}

}  // namespace

std::string SweepCell::key() const {
  std::ostringstream s;
  s.precision(17);
  s << to_string(views) << "|" << styles_label(styles) << "|" << (prompt ? "p:" + *prompt : "default");
  if (views == ViewKind::Iarm) {
    s << "|R=" << R << "|fd=" << fd << "|etas=";
    for (double e : etas) s << e << ",";
  }
  return s.str();
}

json SweepCell::to_json() const {
  json j = {{"views", std::string(to_string(views))},
            {"styles", styles_label(styles)},
            {"prompt", prompt ? json(*prompt) : json(nullptr)}};
  if (views == ViewKind::Iarm) {
    j["R"] = R;
    j["etas"] = etas;
    j["fd"] = fd;
  }
  return j;
}

BaselineConfig SweepCell::apply(const BaselineConfig& base) const {
  BaselineConfig c = base;
  c.views = views;
  c.scoring.styles = styles;
  c.scoring.prompt_template = prompt;
  c.refine.R = R;
  c.refine.etas = etas;
  c.refine.fd_step = fd;
  return c;
}

SweepGrid expand_grid(const json& spec, const BaselineConfig& base) {
  if (!spec.is_object()) throw Error(Errc::InvalidArgument, "grid spec must be a JSON object");
  static const std::set<std::string> known{"views", "styles", "prompts", "R", "etas", "fd"};
  for (const auto& [k, _] : spec.items()) {
    if (!known.count(k)) throw Error(Errc::InvalidArgument, "unknown grid key '" + k + "'");
  }
  if (spec.contains("R") && spec.contains("etas")) {
    throw Error(Errc::InvalidArgument, "grid keys 'R' and 'etas' are mutually exclusive");
  }

  std::string base_styles;
  for (const auto s : base.scoring.styles) {
    if (!base_styles.empty()) base_styles += ",";
    base_styles += to_string(s);
  }
  const auto views = axis<std::string>(spec, "views", {std::string(to_string(base.views))});
  const auto styles = axis<std::string>(spec, "styles", {base_styles});
  std::vector<std::optional<std::string>> prompts{base.scoring.prompt_template};
  if (const auto it = spec.find("prompts"); it != spec.end()) {
    if (!it->is_array() || it->empty()) throw Error(Errc::InvalidArgument, "grid key 'prompts' must be a nonempty list");
    prompts.clear();
    for (const auto& p : *it) {
      if (p.is_null()) prompts.emplace_back();
      else if (p.is_string()) prompts.emplace_back(p.get<std::string>());
      else throw Error(Errc::InvalidArgument, "prompts must be strings or null");
    }
  }
  std::vector<std::vector<double>> etas_axis;
  if (spec.contains("etas")) {
    etas_axis = axis<std::vector<double>>(spec, "etas", {});
  } else {
    for (int R : axis<int>(spec, "R", {base.refine.R})) {
      etas_axis.push_back(spec.contains("R") ? default_etas(R) : base.refine.etas);
    }
  }
  const auto fds = axis<double>(spec, "fd", {base.refine.fd_step});

  SweepGrid g;
  std::set<std::string> keys;
  for (const auto& v : views) {
    for (const auto& st : styles) {
      for (const auto& p : prompts) {
        for (const auto& e : etas_axis) {
          for (double fd : fds) {
            SweepCell c;
            c.views = parse_view_kind(v);
            c.styles = parse_styles(st);
            std::sort(c.styles.begin(), c.styles.end());
            if (p) (void)PromptTemplate(c.styles.front(), *p);
            c.prompt = p;
            c.R = static_cast<int>(e.size());
            c.etas = e;
            c.fd = fd;
            c.apply(base).refine.validate();
            if (!keys.insert(c.key()).second) {
              g.warnings.push_back("duplicate sweep cell skipped: " + c.to_json().dump());
              continue;
            }
            g.cells.push_back(std::move(c));
          }
        }
      }
    }
  }
  return g;
}

SweepGrid read_grid(const std::filesystem::path& path, const BaselineConfig& base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open grid spec " + path.string());
  json spec;
  try {
    spec = json::parse(in);
  } catch (const json::exception& ex) {
    throw Error(Errc::ParseError, path.string() + ": " + ex.what());
  }
  return expand_grid(spec, base);
}

json row_json(const SweepRow& row) {
  json j = {{"cell", row.cell.to_json()},
            {"acc", row.metrics.acc},
            {"macc", row.metrics.macc},
            {"per_class", row.metrics.per_class},
            {"counts", row.metrics.counts}};
  return j;
}

std::vector<SweepRow> run_sweep(const std::filesystem::path& dataset_dir, const PoseManifest& manifest,
                                const BaselineConfig& base, const SweepGrid& grid,
                                const std::function<void(const SweepRow&)>& on_row) {
  std::vector<SweepRow> rows;
  for (const auto& cell : grid.cells) {
    auto res = run_baseline(dataset_dir, manifest, cell.apply(base));
    rows.push_back({cell, std::move(res.metrics)});
    if (on_row) on_row(rows.back());
  }
  return rows;
}

std::string markdown_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream s;
  s << "| Views | Styles | Prompt | R | fd | Acc | mAcc |\n";
  s << "|---|---|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    const bool iarm = r.cell.views == ViewKind::Iarm;
    s << "| " << to_string(r.cell.views) << " | " << styles_label(r.cell.styles) << " | "
      << (r.cell.prompt ? *r.cell.prompt : std::string("default")) << " | "
      << (iarm ? std::to_string(r.cell.R) : std::string("-")) << " | "
      << (iarm ? format_percent(r.cell.fd) : std::string("-")) << " | "
      << format_percent(r.metrics.acc) << " | " << format_percent(r.metrics.macc) << " |\n";
  }
  return s.str();
}

}  // namespace op3d
