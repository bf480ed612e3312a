#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sieves/confidence.hpp"
#include "sieves/geometry.hpp"
#include "sieves/judge.hpp"
#include "sieves/prompts.hpp"
#include "sieves/trace.hpp"

namespace sieves {

// ---------------------------------------------------------------------------
// Answer matching
// ---------------------------------------------------------------------------

// Lowercase, trim, collapse whitespace, strip surrounding quotes and trailing
// [.?!,;:]. In multiple-choice mode a leading "B)", "B." or "(B)" is reduced
// to the choice letter.
inline std::string normalize_answer(std::string_view text, bool multiple_choice = false) {
  std::string s;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !s.empty();
      continue;
    }
    if (pending_space) s.push_back(' ');
    pending_space = false;
    s.push_back(static_cast<char>(std::tolower(c)));
  }
  auto is_quote = [](char c) { return c == '"' || c == '\'' || c == '`'; };
  auto is_terminal = [](char c) { return std::string_view(".?!,;:").find(c) != std::string_view::npos; };
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    while (!s.empty() && is_terminal(s.back())) {
      s.pop_back();
      changed = true;
    }
    if (s.size() >= 2 && is_quote(s.front()) && s.back() == s.front()) {
      s = s.substr(1, s.size() - 2);
      changed = true;
    }
    const auto t = trim(s);
    if (t.size() != s.size()) {
      s = std::string(t);
      changed = true;
    }
  }
  if (multiple_choice) {
    const std::string_view v(s);
    const std::size_t off = v.starts_with("(") ? 1 : 0;
    if (v.size() >= off + 2 && std::isalpha(static_cast<unsigned char>(v[off])) &&
        (v[off + 1] == ')' || v[off + 1] == '.') && (v.size() == off + 2 || v[off + 2] == ' ')) {
      return std::string(1, v[off]);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Label types
// ---------------------------------------------------------------------------

enum class CorrectnessSource { exact_match, judge, unanswerable_rule, no_judge_default };
enum class CoherenceSource { judge, forced_zero_by_loc, unavailable };

inline const char* to_string(CorrectnessSource s) {
  switch (s) {
    case CorrectnessSource::exact_match: return "exact_match";
    case CorrectnessSource::judge: return "judge";
    case CorrectnessSource::unanswerable_rule: return "unanswerable_rule";
    case CorrectnessSource::no_judge_default: return "no_judge_default";
  }
  return "exact_match";
}

inline const char* to_string(CoherenceSource s) {
  switch (s) {
    case CoherenceSource::judge: return "judge";
    case CoherenceSource::forced_zero_by_loc: return "forced_zero_by_loc";
    case CoherenceSource::unavailable: return "unavailable";
  }
  return "unavailable";
}

// Targets for one trace. Localization fields are empty when the trace has no
// ground-truth boxes.
struct LabelSet {
  SampleKey key;
  int y = 0;
  std::optional<int> g_loc;
  std::optional<int> g_coh;
  std::optional<double> miogt_value;
  CorrectnessSource correctness_source = CorrectnessSource::exact_match;
  CoherenceSource coherence_source = CoherenceSource::unavailable;

  bool localization_available() const noexcept { return g_loc.has_value(); }

  // Complete head targets; throws when localization is unavailable.
  HeadTargets targets() const {
    if (!g_loc || !g_coh) throw ValidationError(to_string(key), "localization labels unavailable");
    return {y, *g_loc, *g_coh};
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

struct CorrectnessLabel {
  int y = 0;
  CorrectnessSource source = CorrectnessSource::exact_match;
  bool unparseable = false;  // judge reply could not be read; trace must be excluded
};

inline bool exact_match(const Trace& t) {
  const auto pred = normalize_answer(t.final_answer, t.multiple_choice);
  return std::any_of(t.gt_answers.begin(), t.gt_answers.end(), [&](const std::string& gt) {
    return normalize_answer(gt, t.multiple_choice) == pred;
  });
}

// Unanswerable items are always wrong. Otherwise normalized exact match, then
// the judge over the ground-truth answers in order, stopping at the first yes.
// Without a judge, a non-matching answer counts as incorrect.
inline CorrectnessLabel label_correctness(const Trace& t, const Judge* judge) {
  if (!t.answerable) return {0, CorrectnessSource::unanswerable_rule};
  if (exact_match(t)) return {1, CorrectnessSource::exact_match};
  if (judge == nullptr) return {0, CorrectnessSource::no_judge_default};
  for (const auto& gt : t.gt_answers) {
    const auto reply = judge->ask(prompts::correctness_request(t, gt), [](const std::string& r) {
      return parse_correctness_verdict(r) != Verdict::unparseable;
    });
    switch (parse_correctness_verdict(reply.text)) {
      case Verdict::yes: return {1, CorrectnessSource::judge};
      case Verdict::no: break;
      case Verdict::unparseable: return {0, CorrectnessSource::judge, true};
    }
  }
  return {0, CorrectnessSource::judge};
}

struct LocalizationLabel {
  int g_loc = 0;
  double miogt_value = 0.0;
};

inline LocalizationLabel label_localization(const Trace& t, double threshold = kDefaultMiogtThreshold) {
  const auto crops = crop_boxes(t);
  const double m = miogt(t.gt_boxes, crops);
  return {spatial_recall(m, threshold), m};
}

struct CoherenceLabel {
  int g_coh = 0;
  CoherenceSource source = CoherenceSource::unavailable;
  std::size_t judge_calls = 0;
};

// Gated by localization: no judge call at all when g_loc is 0. Otherwise one
// call per crop and g_coh is the maximum verdict. If every reply is
// unparseable the label is unavailable.
inline CoherenceLabel label_coherence(const Trace& t, int g_loc, const Judge& judge,
                                      ImageMode mode = ImageMode::uri) {
  if (g_loc == 0) return {0, CoherenceSource::forced_zero_by_loc, 0};
  CoherenceLabel out{0, CoherenceSource::unavailable, 0};
  bool any_parsed = false;
  for (const auto& crop : t.crops) {
    const auto reply = judge.ask(prompts::coherence_request(t, crop, mode), [](const std::string& r) {
      return parse_coherence_verdict(r) != Verdict::unparseable;
    });
    ++out.judge_calls;
    const auto v = parse_coherence_verdict(reply.text);
    if (v == Verdict::unparseable) continue;
    any_parsed = true;
    if (v == Verdict::yes) out.g_coh = 1;
  }
  if (any_parsed) out.source = CoherenceSource::judge;
  return out;
}

class AnnotationMissing : public Error {
 public:
  using Error::Error;
};

// Pulls the first JSON array out of an annotator reply (which may wrap it in
// prose or code fences) and converts every box_2d entry.
inline std::vector<BoundingBox> parse_annotator_boxes(std::string_view reply) {
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw AnnotationMissing("annotator reply has no JSON list");
  }
  json list;
  try {
    list = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::parse_error&) {
    throw AnnotationMissing("annotator reply is not valid JSON");
  }
  if (!list.is_array()) throw AnnotationMissing("annotator reply is not a JSON list");
  std::vector<BoundingBox> boxes;
  for (const auto& item : list) {
    if (!item.is_object() || !item.contains("box_2d")) throw AnnotationMissing("entry without box_2d");
    const auto& b = item.at("box_2d");
    if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); })) {
      throw AnnotationMissing("box_2d must hold four numbers");
    }
    const auto box = from_box_2d({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    if (!box.degenerate()) boxes.push_back(box);
  }
  if (boxes.empty()) throw AnnotationMissing("annotator returned no boxes");
  return boxes;
}

// Two calls: extract the target phrase from the question, then ground it in
// the full image.
inline std::vector<BoundingBox> annotate_gt_boxes(const Trace& t, const Judge& annotator,
                                                  ImageMode mode = ImageMode::uri) {
  const auto phrase_reply = annotator.ask(prompts::target_extraction_request(t), [](const std::string& r) {
    return !trim(r).empty();
  });
  std::string phrase(trim(phrase_reply.text));
  if (phrase.size() >= 2 && phrase.front() == '"' && phrase.back() == '"') phrase = phrase.substr(1, phrase.size() - 2);
  if (phrase.empty()) throw AnnotationMissing("empty target phrase");
  const auto boxes_reply = annotator.ask(prompts::grounding_request(t, phrase, mode), [](const std::string& r) {
    try {
      parse_annotator_boxes(r);
      return true;
    } catch (const AnnotationMissing&) {
      return false;
    }
  });
  return parse_annotator_boxes(boxes_reply.text);
}

// ---------------------------------------------------------------------------
// Corpus labeling
// ---------------------------------------------------------------------------

struct LabelOptions {
  double miogt_threshold = kDefaultMiogtThreshold;
  ImageMode image_mode = ImageMode::uri;
  int workers = 1;
};

struct Exclusion {
  SampleKey key;
  std::string reason;
};

struct TraceLabelResult {
  std::optional<LabelSet> label;
  std::optional<Exclusion> exclusion;
  std::vector<std::string> warnings;
  std::size_t coherence_calls = 0;
};

inline TraceLabelResult label_trace(const Trace& trace, const LabelOptions& opts, const Judge* judge,
                                    const Judge* annotator) {
  TraceLabelResult out;
  const auto key = trace.key();
  if (trace.answerable && trim(trace.final_answer).empty()) {
    out.exclusion = Exclusion{key, "empty_final_answer"};
    return out;
  }
  const auto corr = label_correctness(trace, judge);
  if (corr.unparseable) {
    out.exclusion = Exclusion{key, "correctness_unparseable"};
    return out;
  }
  LabelSet label;
  label.key = key;
  label.y = corr.y;
  label.correctness_source = corr.source;
  if (corr.source == CorrectnessSource::no_judge_default) out.warnings.push_back("no_judge_default_incorrect");

  Trace t = trace;
  if (!t.has_gt_boxes() && annotator != nullptr) {
    try {
      t.gt_boxes = annotate_gt_boxes(t, *annotator, opts.image_mode);
    } catch (const AnnotationMissing&) {
      out.warnings.push_back("annotation_missing");
    }
  }
  if (!t.has_gt_boxes()) {
    out.warnings.push_back("localization_unavailable");
    out.label = label;
    return out;
  }
  LocalizationLabel loc;
  try {
    loc = label_localization(t, opts.miogt_threshold);
  } catch (const DegenerateBoxError&) {
    out.exclusion = Exclusion{key, "degenerate_gt_box"};
    return out;
  }
  label.g_loc = loc.g_loc;
  label.miogt_value = loc.miogt_value;
  if (loc.g_loc == 0) {
    label.g_coh = 0;
    label.coherence_source = CoherenceSource::forced_zero_by_loc;
  } else {
    if (judge == nullptr) throw TransportError("coherence labeling requires a judge endpoint");
    const auto coh = label_coherence(t, loc.g_loc, *judge, opts.image_mode);
    out.coherence_calls = coh.judge_calls;
    if (coh.source == CoherenceSource::unavailable) {
      out.exclusion = Exclusion{key, "coherence_unparseable"};
      return out;
    }
    label.g_coh = coh.g_coh;
    label.coherence_source = coh.source;
  }
  out.label = label;
  return out;
}

struct LabelRun {
  std::vector<LabelSet> labels;  // trace order, excluded traces omitted
  std::vector<Exclusion> exclusions;
  std::map<std::string, std::size_t> warnings;
  std::size_t coherence_calls = 0;

  std::map<std::string, std::size_t> exclusion_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& e : exclusions) ++out[e.reason];
    return out;
  }
};

// Labels every trace, `opts.workers` at a time. Output order follows input
// order. A transport failure stops the run and is rethrown after all workers
// finish; replies cached so far are kept, so a rerun resumes from there.
inline LabelRun label_traces(std::span<const Trace> traces, const LabelOptions& opts, const Judge* judge,
                             const Judge* annotator = nullptr) {
  std::vector<TraceLabelResult> results(traces.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= traces.size()) return;
      try {
        results[i] = label_trace(traces[i], opts, judge, annotator);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(traces.size())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);

  LabelRun run;
  for (auto& r : results) {
    if (r.label) run.labels.push_back(std::move(*r.label));
    if (r.exclusion) run.exclusions.push_back(std::move(*r.exclusion));
    for (const auto& w : r.warnings) ++run.warnings[w];
    run.coherence_calls += r.coherence_calls;
  }
  return run;
}

// ---------------------------------------------------------------------------
// Label file
// ---------------------------------------------------------------------------

inline json encode_label(const LabelSet& l) {
  auto opt = [](const auto& v) -> json { return v ? json(*v) : json(nullptr); };
  return {{"question_id", l.key.question_id},
          {"repetition", l.key.repetition},
          {"y", l.y},
          {"g_loc", opt(l.g_loc)},
          {"g_coh", opt(l.g_coh)},
          {"miogt", opt(l.miogt_value)},
          {"correctness_source", to_string(l.correctness_source)},
          {"coherence_source", to_string(l.coherence_source)},
          {"localization", l.localization_available() ? "available" : "unavailable"}};
}

inline LabelSet decode_label(const json& r, std::size_t line) {
  LabelSet l;
  l.key.question_id = field::string(field::require(r, "question_id", line), "question_id", line);
  l.key.repetition = static_cast<int>(field::integer(field::require(r, "repetition", line), "repetition", line));
  auto binary = [&](const json& v, const char* name) {
    const auto x = field::integer(v, name, line);
    if (x != 0 && x != 1) throw ParseError(line, name, "must be 0 or 1");
    return static_cast<int>(x);
  };
  l.y = binary(field::require(r, "y", line), "y");
  if (auto it = r.find("g_loc"); it != r.end() && !it->is_null()) l.g_loc = binary(*it, "g_loc");
  if (auto it = r.find("g_coh"); it != r.end() && !it->is_null()) l.g_coh = binary(*it, "g_coh");
  if (auto it = r.find("miogt"); it != r.end() && !it->is_null()) l.miogt_value = field::number(*it, "miogt", line);
  if (l.g_coh && (!l.g_loc || *l.g_coh > *l.g_loc)) throw ParseError(line, "g_coh", "must not exceed g_loc");
  const auto cs = r.value("correctness_source", std::string("exact_match"));
  if (cs == "judge") l.correctness_source = CorrectnessSource::judge;
  else if (cs == "unanswerable_rule") l.correctness_source = CorrectnessSource::unanswerable_rule;
  else if (cs == "no_judge_default") l.correctness_source = CorrectnessSource::no_judge_default;
  const auto hs = r.value("coherence_source", std::string(l.g_loc ? "judge" : "unavailable"));
  if (hs == "forced_zero_by_loc") l.coherence_source = CoherenceSource::forced_zero_by_loc;
  else if (hs == "judge") l.coherence_source = CoherenceSource::judge;
  return l;
}

inline std::vector<LabelSet> parse_labels(std::istream& in) {
  std::vector<LabelSet> out;
  std::set<SampleKey> seen;
  for_each_jsonl(in, [&](const json& r, std::size_t line) {
    auto l = decode_label(r, line);
    if (!seen.insert(l.key).second) {
      throw ParseError(line, "question_id", "duplicate (question_id, repetition) " + to_string(l.key));
    }
    out.push_back(std::move(l));
  });
  return out;
}

inline std::vector<LabelSet> load_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_labels(in);
}

inline std::string format_labels(std::span<const LabelSet> labels) {
  std::string out;
  for (const auto& l : labels) out += encode_label(l).dump() + '\n';
  return out;
}

}  // namespace sieves
