#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sieves/config.hpp"
#include "sieves/confidence.hpp"
#include "sieves/geometry.hpp"
#include "sieves/judge.hpp"
#include "sieves/labeling.hpp"
#include "sieves/metrics.hpp"
#include "sieves/report.hpp"
#include "sieves/simulate.hpp"
#include "sieves/trace.hpp"

namespace sieves::cli {

namespace fs = std::filesystem;

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

using ClientFactory = std::function<std::unique_ptr<JudgeClient>(const EndpointConfig&)>;

struct Context {
  std::ostream& out;
  std::ostream& err;
  ClientFactory make_client;
};

inline std::unique_ptr<JudgeClient> make_http_client(const EndpointConfig& cfg) {
  return std::make_unique<HttpJudgeClient>(cfg);
}

inline report::Header provenance(const RunConfig& cfg, const std::string& benchmark) {
  std::string grid;
  for (double r : cfg.risk_grid) grid += (grid.empty() ? "" : ",") + report::percent_label(r);
  return {{"benchmark", benchmark},
          {"weights", report::number(cfg.weights.lambda_corr) + "," + report::number(cfg.weights.lambda_loc) + "," +
                          report::number(cfg.weights.lambda_coh)},
          {"miogt_threshold", report::number(cfg.miogt_threshold)},
          {"label_smoothing", report::number(cfg.label_smoothing)},
          {"risk_grid", grid},
          {"aggregation", to_string(cfg.aggregation)},
          {"threshold_source", cfg.holdout ? "holdout" : "self"},
          {"seed", std::to_string(cfg.seed)}};
}

inline fs::path output_path(const RunConfig& cfg, const std::optional<fs::path>& declared,
                            const std::string& benchmark, const std::string& suffix) {
  return declared ? *declared : cfg.report_dir / (benchmark + "_" + suffix);
}

inline const fs::path& require_existing(const std::optional<fs::path>& p, const std::string& field) {
  if (!p) throw ValidationError(field, "path required");
  if (!fs::exists(*p)) throw ValidationError(p->string(), "file not found (" + field + ")");
  return *p;
}

// Judge plus its client and cache, owned together.
struct JudgeHandle {
  std::unique_ptr<JudgeClient> client;
  std::unique_ptr<ResponseCache> cache;
  Judge judge;
};

inline std::unique_ptr<JudgeHandle> open_judge(const std::optional<EndpointSettings>& settings, const Context& ctx) {
  if (!settings) return nullptr;
  auto h = std::make_unique<JudgeHandle>();
  h->client = (ctx.make_client ? ctx.make_client : ClientFactory(make_http_client))(settings->endpoint);
  h->cache = std::make_unique<ResponseCache>(settings->cache_dir);
  h->judge = {h->client.get(), h->cache.get(), settings->endpoint.model};
  return h;
}

// ---------------------------------------------------------------------------

inline int cmd_validate(const RunConfig& cfg, const Context& ctx) {
  std::vector<std::string> problems;
  auto check = [&](const std::optional<fs::path>& p, const std::string& field, bool must_exist, auto&& parse) {
    if (!p) return;
    if (!fs::exists(*p)) {
      if (must_exist) problems.push_back(p->string() + ": file not found (" + field + ")");
      return;
    }
    try {
      parse(*p);
    } catch (const ValidationError& e) {
      problems.push_back(p->string() + ": " + e.what());
    }
  };
  for (std::size_t i = 0; i < cfg.benchmarks.size(); ++i) {
    const auto& b = cfg.benchmarks[i];
    const std::string where = "benchmarks[" + std::to_string(i) + "]";
    check(b.traces, where + ".traces", true, [](const fs::path& p) { load_traces(p); });
    check(b.labels, where + ".labels", false, [](const fs::path& p) { load_labels(p); });
    check(b.confidences, where + ".confidences", false, [](const fs::path& p) { load_confidences(p); });
  }
  if (cfg.holdout) {
    check(cfg.holdout->labels, "holdout.labels", true, [](const fs::path& p) { load_labels(p); });
    check(cfg.holdout->confidences, "holdout.confidences", true, [](const fs::path& p) { load_confidences(p); });
  }
  if (!problems.empty()) {
    for (const auto& p : problems) ctx.err << p << '\n';
    return kExitValidation;
  }
  ctx.out << "ok\n";
  return kExitOk;
}

inline int cmd_label(const RunConfig& cfg, const Context& ctx) {
  auto judge = open_judge(cfg.judge, ctx);
  auto annotator = open_judge(cfg.annotator, ctx);
  LabelOptions opts;
  opts.miogt_threshold = cfg.miogt_threshold;
  opts.image_mode = cfg.judge ? cfg.judge->image_mode : ImageMode::uri;
  opts.workers = cfg.workers;

  for (const auto& b : cfg.benchmarks) {
    const auto traces = load_traces(require_existing(b.traces, b.name + ".traces"));
    if (!judge) {
      const bool needs_coherence = std::any_of(traces.begin(), traces.end(), [](const Trace& t) {
        return t.has_gt_boxes() && !t.crops.empty();
      });
      if (needs_coherence) {
        throw ValidationError("judge", "an endpoint is required to label coherence for traces with boxes");
      }
    }
    const auto run = label_traces(traces, opts, judge ? &judge->judge : nullptr, annotator ? &annotator->judge : nullptr);

    const auto labels_path = output_path(cfg, b.labels, b.name, "labels.jsonl");
    write_file_atomic(labels_path, format_labels(run.labels));

    std::string excluded;
    for (const auto& e : run.exclusions) {
      excluded += json{{"question_id", e.key.question_id}, {"repetition", e.key.repetition}, {"reason", e.reason}}
                      .dump() + "\n";
    }
    write_file_atomic(cfg.report_dir / (b.name + "_label_exclusions.jsonl"), excluded);
    const json summary{{"benchmark", b.name},
                       {"traces", traces.size()},
                       {"labeled", run.labels.size()},
                       {"excluded", run.exclusions.size()},
                       {"exclusions_by_reason", run.exclusion_counts()},
                       {"warnings", run.warnings},
                       {"coherence_judge_calls", run.coherence_calls}};
    write_file_atomic(cfg.report_dir / (b.name + "_label_summary.json"), summary.dump(2) + "\n");

    ctx.out << b.name << ": labeled " << run.labels.size() << " of " << traces.size() << " traces, excluded "
            << run.exclusions.size();
    for (const auto& [reason, n] : run.exclusion_counts()) ctx.out << " [" << reason << ": " << n << "]";
    ctx.out << "\n";
    for (const auto& [w, n] : run.warnings) ctx.out << "  warning " << w << ": " << n << "\n";
    ctx.out << "  wrote " << labels_path.string() << "\n";
  }
  return kExitOk;
}

struct JoinedSamples {
  std::vector<ScoredSample> samples;
  std::vector<SampleKey> missing_confidences;
};

// Joins correctness labels to head confidences and combines them into c_sel.
inline JoinedSamples join_samples(const BenchmarkInputs& b, const WeightConfig& w, const std::string& field) {
  const auto labels = load_labels(require_existing(b.labels, field + ".labels"));
  ConfidenceTable table;
  if (b.confidences) {
    table = load_confidences(require_existing(b.confidences, field + ".confidences"));
  } else if (b.traces) {
    for (const auto& t : load_traces(require_existing(b.traces, field + ".traces"))) {
      if (t.confidences) table.emplace(t.key(), *t.confidences);
    }
  } else {
    throw ValidationError(field + ".confidences", "path required (or traces with inline confidences)");
  }
  JoinedSamples out;
  for (const auto& l : labels) {
    auto it = table.find(l.key);
    if (it == table.end()) {
      out.missing_confidences.push_back(l.key);
      continue;
    }
    out.samples.push_back({l.key.question_id, l.key.repetition, combine_confidence(it->second, w), l.y});
  }
  return out;
}

inline int cmd_evaluate(const RunConfig& cfg, const Context& ctx) {
  std::vector<ScoredSample> calibration;
  if (cfg.holdout) calibration = join_samples(*cfg.holdout, cfg.weights, "holdout").samples;
  if (cfg.holdout && calibration.empty()) throw ValidationError("holdout", "no scored samples");
  const json effective = effective_config(cfg);

  for (const auto& b : cfg.benchmarks) {
    const auto joined = join_samples(b, cfg.weights, b.name);
    if (!joined.missing_confidences.empty()) {
      ctx.err << b.name << ": " << joined.missing_confidences.size()
              << " labeled traces have no confidences and are excluded\n";
    }
    if (joined.samples.empty()) throw ValidationError(b.name, "no scored samples");
    const auto r = evaluate(cfg.aggregation, joined.samples, cfg.risk_grid, calibration);
    const auto header = provenance(cfg, b.name);

    json missing = json::array();
    for (const auto& k : joined.missing_confidences) {
      missing.push_back({{"question_id", k.question_id}, {"repetition", k.repetition}});
    }
    const auto csv_path = cfg.report_dir / (b.name + "_report.csv");
    const auto json_path = cfg.report_dir / (b.name + "_report.json");
    write_file_atomic(csv_path, report::risk_coverage_csv(b.name, r, header));
    write_file_atomic(json_path, report::risk_coverage_json(b.name, r, effective,
                                                            {{"missing_confidences", missing},
                                                             {"missing_confidences_count", missing.size()}})
                                         .dump(2) + "\n");
    if (cfg.emit_curve) {
      write_file_atomic(cfg.report_dir / (b.name + "_curve.csv"),
                        report::curve_csv(risk_coverage_curve(joined.samples), header));
    }

    ctx.out << b.name << " (" << to_string(r.mode) << ", n=" << r.n_samples << "): acc "
            << report::percent(r.accuracy.mean);
    for (std::size_t k = 0; k < r.risk_grid.size(); ++k) {
      ctx.out << "  C@" << report::percent_label(r.risk_grid[k]) << " " << report::percent(r.c_at_r[k].mean);
    }
    ctx.out << "  mean " << report::percent(r.mean_c_at_r.mean) << "  AURC " << report::percent(r.aurc.mean) << "\n";
    ctx.out << "  wrote " << csv_path.string() << "\n";
  }
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& cfg, const Context& ctx) {
  for (std::size_t i = 0; i < cfg.benchmarks.size(); ++i) {
    const auto& b = cfg.benchmarks[i];
    SimSpec spec = cfg.simulate;
    spec.seed += i;
    const auto corpus = simulate(spec, cfg.miogt_threshold);

    std::ostringstream traces;
    write_traces(traces, corpus.traces);
    std::string confidences;
    for (const auto& t : corpus.traces) confidences += encode_confidence(t.key(), corpus.confidences.at(t.key())).dump() + "\n";

    const auto traces_path = output_path(cfg, b.traces, b.name, "traces.jsonl");
    const auto labels_path = output_path(cfg, b.labels, b.name, "labels.jsonl");
    const auto conf_path = output_path(cfg, b.confidences, b.name, "confidences.jsonl");
    write_file_atomic(traces_path, traces.str());
    write_file_atomic(labels_path, format_labels(corpus.labels));
    write_file_atomic(conf_path, confidences);

    std::size_t correct = 0;
    for (const auto& l : corpus.labels) correct += static_cast<std::size_t>(l.y);
    ctx.out << b.name << ": simulated " << corpus.traces.size() << " traces (" << spec.n_questions << " questions x "
            << spec.n_repetitions << " repetitions), accuracy "
            << report::percent(static_cast<double>(correct) / static_cast<double>(corpus.labels.size())) << "%\n"
            << "  wrote " << traces_path.string() << ", " << labels_path.string() << ", " << conf_path.string()
            << "\n";
  }
  return kExitOk;
}

inline int cmd_crop_stats(const RunConfig& cfg, const Context& ctx) {
  for (const auto& b : cfg.benchmarks) {
    const auto traces = load_traces(require_existing(b.traces, b.name + ".traces"));
    const auto summary = summarize_crop_stats(traces);
    const auto header = provenance(cfg, b.name);

    auto cell = [](const std::optional<double>& v) { return v ? report::number(*v) : std::string(); };
    std::string per_trace = report::header_block(header);
    per_trace += "question_id,repetition,crops,crop_to_image_ratio,object_to_crop_ratio,gt_recall,oversized,best_iou\n";
    for (const auto& t : traces) {
      const auto s = crop_stats(t);
      const CropStats* last = s.final_crop();
      per_trace += t.question_id + "," + std::to_string(t.repetition) + "," + std::to_string(t.crops.size()) + ",";
      if (last != nullptr) {
        per_trace += report::number(last->crop_to_image_ratio) + "," + cell(last->object_to_crop_ratio) + "," +
                     cell(last->gt_recall) + "," + (last->oversized ? "1" : "0");
      } else {
        per_trace += ",,,";
      }
      per_trace += "," + cell(s.best_iou) + "\n";
    }
    const auto path = cfg.report_dir / (b.name + "_crop_stats.csv");
    write_file_atomic(path, report::crop_stats_csv(b.name, summary, header));
    write_file_atomic(cfg.report_dir / (b.name + "_crop_stats_traces.csv"), per_trace);

    auto pct = [](const std::optional<double>& v) { return v ? report::percent(*v) + "%" : std::string("n/a"); };
    ctx.out << b.name << ": " << summary.traces_with_crops << " of " << summary.traces
            << " traces with crops; median crop-to-image " << pct(summary.ratio_median) << ", object-to-crop "
            << pct(summary.object_to_crop_median) << ", GT recall " << pct(summary.gt_recall_median)
            << ", >25% crops " << pct(summary.oversized_fraction) << "\n"
            << "  wrote " << path.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, const Context& ctx) {
  CLI::App app{"sieves: visual-evidence labeling and selective-prediction evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;

  using Command = int (*)(const RunConfig&, const Context&);
  std::vector<std::pair<CLI::App*, Command>> commands;
  auto add = [&](const char* name, const char* help, Command fn) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--override", overrides, "key=value, dotted keys, value parsed as JSON when possible");
    commands.emplace_back(sub, fn);
  };
  add("validate", "check the configuration and every referenced input file", cmd_validate);
  add("label", "compute correctness, localization and coherence labels", cmd_label);
  add("evaluate", "coverage-at-risk and AURC reports", cmd_evaluate);
  add("simulate", "generate a synthetic corpus with traces, labels and confidences", cmd_simulate);
  add("crop-stats", "zoom-in crop quality statistics", cmd_crop_stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, ctx.out, ctx.err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    const auto cfg = load_config(config_path, overrides);
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn(cfg, ctx);
    }
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) ctx.err << "config: " << p.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace sieves::cli
