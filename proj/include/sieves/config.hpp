#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sieves/confidence.hpp"
#include "sieves/error.hpp"
#include "sieves/geometry.hpp"
#include "sieves/judge.hpp"
#include "sieves/jsonl.hpp"
#include "sieves/metrics.hpp"
#include "sieves/simulate.hpp"

namespace sieves {

struct BenchmarkInputs {
  std::string name = "default";
  std::optional<std::filesystem::path> traces;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> confidences;
};

struct EndpointSettings {
  EndpointConfig endpoint;
  std::filesystem::path cache_dir;
  ImageMode image_mode = ImageMode::uri;
};

struct RunConfig {
  std::vector<BenchmarkInputs> benchmarks;
  WeightConfig weights;
  double label_smoothing = kDefaultLabelSmoothing;
  double miogt_threshold = kDefaultMiogtThreshold;
  std::vector<double> risk_grid = kDefaultRiskGrid;
  AggregationMode aggregation = AggregationMode::pooled;
  // Held-out set used to pick operating thresholds instead of the evaluated set.
  std::optional<BenchmarkInputs> holdout;
  std::optional<EndpointSettings> judge;
  std::optional<EndpointSettings> annotator;
  std::filesystem::path report_dir = "reports";
  std::uint64_t seed = 0;
  int workers = 4;
  bool emit_curve = true;
  SimSpec simulate;
};

// Every problem found while decoding a configuration.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<ValidationError> problems)
      : ValidationError(problems.empty() ? "config" : problems.front().field(),
                        problems.empty() ? "invalid" : summarize(problems)),
        problems_(std::move(problems)) {}

  const std::vector<ValidationError>& problems() const noexcept { return problems_; }

 private:
  static std::string summarize(const std::vector<ValidationError>& p) {
    std::string s = std::string(p.front().what()).substr(p.front().field().size() + 2);
    if (p.size() > 1) s += " (and " + std::to_string(p.size() - 1) + " more)";
    return s;
  }
  std::vector<ValidationError> problems_;
};

// Applies `a.b.c=value`. The value is read as JSON when it parses, otherwise
// as a plain string.
inline void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValidationError("--override", "expected key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("--override", "empty key segment in '" + key + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::filesystem::path base) : base_(std::move(base)) {}

  std::vector<ValidationError> problems;

  template <typename T, typename Check>
  void number(const json& obj, const char* key, const std::string& path, T& out, Check&& check,
              const char* requirement) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    if (!it->is_number()) {
      problems.emplace_back(path, "expected a number");
      return;
    }
    const T v = it->get<T>();
    if (!check(v)) {
      problems.emplace_back(path, requirement);
      return;
    }
    out = v;
  }

  void string(const json& obj, const char* key, const std::string& path, std::string& out) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    if (!it->is_string()) {
      problems.emplace_back(path, "expected a string");
      return;
    }
    out = it->get<std::string>();
  }

  void boolean(const json& obj, const char* key, const std::string& path, bool& out) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    if (!it->is_boolean()) {
      problems.emplace_back(path, "expected a boolean");
      return;
    }
    out = it->get<bool>();
  }

  void path(const json& obj, const char* key, const std::string& where, std::optional<std::filesystem::path>& out) {
    std::string s;
    string(obj, key, where, s);
    if (!s.empty()) out = resolve(s);
  }

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_ / p;
  }

  const json* object(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return nullptr;
    if (!it->is_object()) {
      problems.emplace_back(where, "expected an object");
      return nullptr;
    }
    return &*it;
  }

 private:
  std::filesystem::path base_;
};

inline bool is_probability(double v) { return v >= 0.0 && v <= 1.0; }

inline BenchmarkInputs read_inputs(ConfigReader& r, const json& obj, const std::string& where) {
  BenchmarkInputs b;
  r.string(obj, "name", where + ".name", b.name);
  r.path(obj, "traces", where + ".traces", b.traces);
  r.path(obj, "labels", where + ".labels", b.labels);
  r.path(obj, "confidences", where + ".confidences", b.confidences);
  return b;
}

inline void read_head(ConfigReader& r, const json& sim, const char* key, HeadModel& h) {
  const std::string where = std::string("simulate.") + key;
  if (const json* o = r.object(sim, key, where)) {
    auto finite = [](double v) { return std::isfinite(v); };
    r.number(*o, "mean_pos", where + ".mean_pos", h.mean_pos, finite, "must be finite");
    r.number(*o, "mean_neg", where + ".mean_neg", h.mean_neg, finite, "must be finite");
    r.number(*o, "noise", where + ".noise", h.noise, finite, "must be finite");
  }
}

inline EndpointSettings read_endpoint(ConfigReader& r, const json& obj, const std::string& where) {
  EndpointSettings s;
  r.string(obj, "base_url", where + ".base_url", s.endpoint.base_url);
  r.string(obj, "path", where + ".path", s.endpoint.path);
  r.string(obj, "model", where + ".model", s.endpoint.model);
  r.string(obj, "auth_env", where + ".auth_env", s.endpoint.auth_env);
  r.number(obj, "max_in_flight", where + ".max_in_flight", s.endpoint.max_in_flight,
           [](int v) { return v >= 1; }, "must be >= 1");
  r.number(obj, "timeout_s", where + ".timeout_s", s.endpoint.timeout_s,
           [](double v) { return v > 0.0; }, "must be positive");
  r.number(obj, "attempts", where + ".attempts", s.endpoint.attempts, [](int v) { return v >= 1; },
           "must be >= 1");
  r.number(obj, "backoff_ms", where + ".backoff_ms", s.endpoint.backoff_ms, [](int v) { return v >= 0; },
           "must be >= 0");
  if (s.endpoint.base_url.empty()) r.problems.emplace_back(where + ".base_url", "required");
  std::string cache;
  r.string(obj, "cache_dir", where + ".cache_dir", cache);
  s.cache_dir = r.resolve(cache.empty() ? std::string("cache/") + where : cache);
  std::string mode = "uri";
  r.string(obj, "image_mode", where + ".image_mode", mode);
  if (mode == "base64") s.image_mode = ImageMode::base64;
  else if (mode != "uri") r.problems.emplace_back(where + ".image_mode", "expected uri or base64");
  return s;
}

}  // namespace detail

// Decodes a configuration document. Relative paths resolve against
// `base_dir` (the directory of the config file). All problems are collected
// and thrown together.
inline RunConfig decode_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError({ValidationError("config", "expected a JSON object")});
  detail::ConfigReader r(base_dir);
  RunConfig cfg;

  if (const json* w = r.object(doc, "weights", "weights")) {
    auto any = [](double) { return true; };
    r.number(*w, "lambda_corr", "weights.lambda_corr", cfg.weights.lambda_corr, any, "");
    r.number(*w, "lambda_loc", "weights.lambda_loc", cfg.weights.lambda_loc, any, "");
    r.number(*w, "lambda_coh", "weights.lambda_coh", cfg.weights.lambda_coh, any, "");
    if (auto bad = weight_violation(cfg.weights)) r.problems.push_back(*bad);
  }
  r.number(doc, "label_smoothing", "label_smoothing", cfg.label_smoothing,
           [](double v) { return v >= 0.0 && v < 1.0; }, "must be in [0,1)");
  r.number(doc, "miogt_threshold", "miogt_threshold", cfg.miogt_threshold, detail::is_probability,
           "must be in [0,1]");

  if (auto it = doc.find("risk_grid"); it != doc.end() && !it->is_null()) {
    std::vector<double> grid;
    bool ok = it->is_array() && !it->empty();
    if (ok) {
      for (const auto& v : *it) {
        if (!v.is_number() || !detail::is_probability(v.get<double>())) {
          ok = false;
          break;
        }
        grid.push_back(v.get<double>());
      }
    }
    if (ok && !std::is_sorted(grid.begin(), grid.end())) ok = false;
    if (ok) cfg.risk_grid = grid;
    else r.problems.emplace_back("risk_grid", "expected a non-empty ascending list of fractions in [0,1]");
  }

  std::string mode = "pooled";
  r.string(doc, "aggregation", "aggregation", mode);
  if (auto m = parse_aggregation_mode(mode)) cfg.aggregation = *m;
  else r.problems.emplace_back("aggregation", "expected pooled or per_repetition");

  if (auto it = doc.find("benchmarks"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) {
      r.problems.emplace_back("benchmarks", "expected an array");
    } else {
      for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string where = "benchmarks[" + std::to_string(i) + "]";
        if (!(*it)[i].is_object()) {
          r.problems.emplace_back(where, "expected an object");
          continue;
        }
        cfg.benchmarks.push_back(detail::read_inputs(r, (*it)[i], where));
      }
    }
  }
  if (const json* in = r.object(doc, "inputs", "inputs")) {
    auto b = detail::read_inputs(r, *in, "inputs");
    r.string(doc, "benchmark", "benchmark", b.name);
    cfg.benchmarks.insert(cfg.benchmarks.begin(), b);
  }
  if (const json* h = r.object(doc, "holdout", "holdout")) {
    cfg.holdout = detail::read_inputs(r, *h, "holdout");
    if (!cfg.holdout->labels) r.problems.emplace_back("holdout.labels", "required");
  }

  if (const json* j = r.object(doc, "judge", "judge")) cfg.judge = detail::read_endpoint(r, *j, "judge");
  if (const json* a = r.object(doc, "annotator", "annotator")) {
    cfg.annotator = detail::read_endpoint(r, *a, "annotator");
  }

  std::string report_dir;
  r.string(doc, "report_dir", "report_dir", report_dir);
  cfg.report_dir = r.resolve(report_dir.empty() ? std::string("reports") : report_dir);
  r.number(doc, "seed", "seed", cfg.seed, [](std::uint64_t) { return true; }, "");
  cfg.workers = cfg.judge ? cfg.judge->endpoint.max_in_flight : cfg.workers;
  r.number(doc, "workers", "workers", cfg.workers, [](int v) { return v >= 1; }, "must be >= 1");
  r.boolean(doc, "emit_curve", "emit_curve", cfg.emit_curve);

  cfg.simulate.seed = cfg.seed;
  if (const json* s = r.object(doc, "simulate", "simulate")) {
    auto any = [](double) { return true; };
    r.number(*s, "n_questions", "simulate.n_questions", cfg.simulate.n_questions, [](int) { return true; }, "");
    r.number(*s, "n_repetitions", "simulate.n_repetitions", cfg.simulate.n_repetitions, [](int) { return true; }, "");
    r.number(*s, "accuracy", "simulate.accuracy", cfg.simulate.accuracy, any, "");
    r.number(*s, "p_loc", "simulate.p_loc", cfg.simulate.p_loc, any, "");
    r.number(*s, "loc_accuracy_lift", "simulate.loc_accuracy_lift", cfg.simulate.loc_accuracy_lift, any, "");
    r.number(*s, "p_coh_given_loc", "simulate.p_coh_given_loc", cfg.simulate.p_coh_given_loc, any, "");
    r.number(*s, "p_no_crop", "simulate.p_no_crop", cfg.simulate.p_no_crop, any, "");
    r.number(*s, "p_two_gt", "simulate.p_two_gt", cfg.simulate.p_two_gt, any, "");
    r.number(*s, "p_unanswerable", "simulate.p_unanswerable", cfg.simulate.p_unanswerable, any, "");
    r.number(*s, "seed", "simulate.seed", cfg.simulate.seed, [](std::uint64_t) { return true; }, "");
    detail::read_head(r, *s, "corr", cfg.simulate.corr);
    detail::read_head(r, *s, "loc", cfg.simulate.loc);
    detail::read_head(r, *s, "coh", cfg.simulate.coh);
    for (auto& p : sim_spec_violations(cfg.simulate)) r.problems.push_back(std::move(p));
  }

  if (cfg.benchmarks.empty()) cfg.benchmarks.push_back({});
  if (!r.problems.empty()) throw ConfigError(std::move(r.problems));
  return cfg;
}

inline json load_config_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open config file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), std::string("malformed JSON: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  json doc = load_config_document(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return decode_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

// Effective configuration, echoed into every report. Secrets never appear:
// only the name of the auth variable is recorded.
inline json effective_config(const RunConfig& c) {
  auto opt_path = [](const std::optional<std::filesystem::path>& p) -> json {
    return p ? json(p->string()) : json(nullptr);
  };
  auto inputs = [&](const BenchmarkInputs& b) {
    return json{{"name", b.name}, {"traces", opt_path(b.traces)}, {"labels", opt_path(b.labels)},
                {"confidences", opt_path(b.confidences)}};
  };
  auto endpoint = [](const std::optional<EndpointSettings>& e) -> json {
    if (!e) return nullptr;
    return {{"base_url", e->endpoint.base_url},   {"path", e->endpoint.path},
            {"model", e->endpoint.model},         {"auth_env", e->endpoint.auth_env},
            {"max_in_flight", e->endpoint.max_in_flight}, {"timeout_s", e->endpoint.timeout_s},
            {"attempts", e->endpoint.attempts},   {"backoff_ms", e->endpoint.backoff_ms},
            {"cache_dir", e->cache_dir.string()},
            {"image_mode", e->image_mode == ImageMode::base64 ? "base64" : "uri"}};
  };
  auto head = [](const HeadModel& h) {
    return json{{"mean_pos", h.mean_pos}, {"mean_neg", h.mean_neg}, {"noise", h.noise}};
  };
  json benchmarks = json::array();
  for (const auto& b : c.benchmarks) benchmarks.push_back(inputs(b));
  const auto& s = c.simulate;
  return {{"benchmarks", benchmarks},
          {"weights", {{"lambda_corr", c.weights.lambda_corr}, {"lambda_loc", c.weights.lambda_loc},
                       {"lambda_coh", c.weights.lambda_coh}}},
          {"label_smoothing", c.label_smoothing},
          {"miogt_threshold", c.miogt_threshold},
          {"risk_grid", c.risk_grid},
          {"aggregation", to_string(c.aggregation)},
          {"holdout", c.holdout ? inputs(*c.holdout) : json(nullptr)},
          {"judge", endpoint(c.judge)},
          {"annotator", endpoint(c.annotator)},
          {"report_dir", c.report_dir.string()},
          {"seed", c.seed},
          {"workers", c.workers},
          {"emit_curve", c.emit_curve},
          {"simulate", {{"n_questions", s.n_questions}, {"n_repetitions", s.n_repetitions},
                        {"accuracy", s.accuracy}, {"p_loc", s.p_loc},
                        {"loc_accuracy_lift", s.loc_accuracy_lift}, {"p_coh_given_loc", s.p_coh_given_loc},
                        {"p_no_crop", s.p_no_crop}, {"p_two_gt", s.p_two_gt},
                        {"p_unanswerable", s.p_unanswerable}, {"corr", head(s.corr)},
                        {"loc", head(s.loc)}, {"coh", head(s.coh)}, {"seed", s.seed}}}};
}

}  // namespace sieves
