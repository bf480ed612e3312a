#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sieves/box.hpp"
#include "sieves/error.hpp"
#include "sieves/jsonl.hpp"

namespace sieves {

inline constexpr int kTraceSchemaVersion = 1;

enum class CropSource { tool_call, annotation };

struct CropEvent {
  int turn_index = 0;
  BoundingBox box;
  CropSource source = CropSource::tool_call;
  // Rendered crop image, when the reasoner log kept one. Optional.
  std::string image_ref;

  friend bool operator==(const CropEvent&, const CropEvent&) = default;
};

// Per-head selector outputs, each a probability.
struct ConfidenceTriple {
  double c_corr = 0.0;
  double c_loc = 0.0;
  double c_coh = 0.0;

  friend bool operator==(const ConfidenceTriple&, const ConfidenceTriple&) = default;
};

inline std::optional<std::string> confidence_violation(const ConfidenceTriple& c) {
  const std::pair<const char*, double> parts[] = {
      {"c_corr", c.c_corr}, {"c_loc", c.c_loc}, {"c_coh", c.c_coh}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return std::string(name) + " outside [0,1]";
  }
  return std::nullopt;
}

struct ImageRef {
  std::string ref;
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

// Identifies one answer: a question and the repetition that produced it.
struct SampleKey {
  std::string question_id;
  int repetition = 0;

  friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
};

inline std::string to_string(const SampleKey& k) {
  return k.question_id + "#" + std::to_string(k.repetition);
}

// One question/answer conversation with its localization evidence.
struct Trace {
  std::string question_id;
  int repetition = 0;
  std::string question;
  ImageRef image;
  std::vector<CropEvent> crops;
  std::string last_message;
  std::string final_answer;
  std::vector<std::string> gt_answers;
  std::vector<BoundingBox> gt_boxes;
  bool answerable = true;
  bool multiple_choice = false;
  std::optional<ConfidenceTriple> confidences;

  SampleKey key() const { return {question_id, repetition}; }
  bool has_gt_boxes() const noexcept { return !gt_boxes.empty(); }

  friend bool operator==(const Trace&, const Trace&) = default;
};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

// Content of the last balanced `\boxed{...}` span, if any.
inline std::optional<std::string> last_boxed(std::string_view text) {
  constexpr std::string_view tag = "\\boxed{";
  std::optional<std::string> found;
  std::size_t pos = 0;
  while ((pos = text.find(tag, pos)) != std::string_view::npos) {
    const std::size_t begin = pos + tag.size();
    int depth = 1;
    std::size_t i = begin;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      else if (text[i] == '}') --depth;
    }
    if (depth == 0) found = std::string(text.substr(begin, i - 1 - begin));
    pos = begin;
  }
  return found;
}

// Final answer convention: last boxed span, else the whole trimmed message.
inline std::string extract_final_answer(std::string_view last_message) {
  if (auto boxed = last_boxed(last_message)) return std::string(trim(*boxed));
  return std::string(trim(last_message));
}

namespace detail {

inline const char* to_string(CropSource s) {
  return s == CropSource::annotation ? "annotation" : "tool_call";
}

inline BoundingBox decode_box(const json& v, const std::string& what, std::size_t line,
                              CoordinateSpace space, const ImageRef& image) {
  if (!v.is_array() || v.size() != 4) {
    throw ParseError(line, what, "expected [x_min, y_min, x_max, y_max]");
  }
  double c[4];
  for (std::size_t i = 0; i < 4; ++i) c[i] = field::number(v[i], what, line);
  if (space == CoordinateSpace::normalized) {
    BoundingBox b{c[0], c[1], c[2], c[3]};
    if (auto bad = box_violation(b)) throw ParseError(line, what, *bad);
    return b;
  }
  try {
    return normalize_box({c[0], c[1], c[2], c[3]}, image.width, image.height, space);
  } catch (const ValidationError& e) {
    throw ParseError(line, what, e.what());
  }
}

inline json encode_box(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

}  // namespace detail

// Decodes and validates one trace record. Boxes in pixel or 0-1000 space are
// converted to normalized coordinates on the way in.
inline Trace decode_trace(const json& r, std::size_t line) {
  const auto& version = field::require(r, "schema_version", line);
  if (!version.is_number_integer() || version.get<int>() != kTraceSchemaVersion) {
    throw ParseError(line, "schema_version", "unsupported version (expected 1)");
  }
  Trace t;
  t.question_id = field::string(field::require(r, "question_id", line), "question_id", line);
  if (t.question_id.empty()) throw ParseError(line, "question_id", "must be non-empty");
  const auto rep = field::integer(field::require(r, "repetition", line), "repetition", line);
  if (rep < 0) throw ParseError(line, "repetition", "must be >= 0");
  t.repetition = static_cast<int>(rep);
  t.question = field::string(field::require(r, "question", line), "question", line);

  const auto& img = field::require(r, "image", line);
  if (!img.is_object()) throw ParseError(line, "image", "expected an object");
  t.image.ref = field::string(field::require(img, "ref", line), "image.ref", line);
  t.image.width = static_cast<int>(field::integer(field::require(img, "width", line), "image.width", line));
  t.image.height = static_cast<int>(field::integer(field::require(img, "height", line), "image.height", line));
  if (t.image.width <= 0) throw ParseError(line, "image.width", "must be positive");
  if (t.image.height <= 0) throw ParseError(line, "image.height", "must be positive");

  CoordinateSpace space = CoordinateSpace::normalized;
  if (auto it = r.find("coordinate_space"); it != r.end()) {
    auto parsed = parse_coordinate_space(field::string(*it, "coordinate_space", line));
    if (!parsed) throw ParseError(line, "coordinate_space", "expected normalized, pixel or permille");
    space = *parsed;
  }

  if (auto it = r.find("crops"); it != r.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(line, "crops", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& c = (*it)[i];
      const std::string base = "crops[" + std::to_string(i) + "]";
      if (!c.is_object()) throw ParseError(line, base, "expected an object");
      CropEvent ev;
      ev.turn_index = static_cast<int>(
          field::integer(field::require(c, "turn_index", line), base + ".turn_index", line));
      ev.box = detail::decode_box(field::require(c, "box", line), base + ".box", line, space, t.image);
      if (auto s = c.find("source"); s != c.end()) {
        const auto src = field::string(*s, base + ".source", line);
        if (src == "tool_call") ev.source = CropSource::tool_call;
        else if (src == "annotation") ev.source = CropSource::annotation;
        else throw ParseError(line, base + ".source", "expected tool_call or annotation");
      }
      if (auto s = c.find("image_ref"); s != c.end() && !s->is_null()) {
        ev.image_ref = field::string(*s, base + ".image_ref", line);
      }
      if (!t.crops.empty() && ev.turn_index <= t.crops.back().turn_index) {
        throw ParseError(line, base + ".turn_index", "must be strictly increasing");
      }
      t.crops.push_back(std::move(ev));
    }
  }

  t.last_message = field::string(field::require(r, "last_message", line), "last_message", line);
  if (auto it = r.find("final_answer"); it != r.end() && !it->is_null()) {
    t.final_answer = field::string(*it, "final_answer", line);
  } else {
    t.final_answer = extract_final_answer(t.last_message);
  }

  const auto& answers = field::require(r, "gt_answers", line);
  if (!answers.is_array() || answers.empty()) {
    throw ParseError(line, "gt_answers", "expected a non-empty array of strings");
  }
  for (std::size_t i = 0; i < answers.size(); ++i) {
    t.gt_answers.push_back(field::string(answers[i], "gt_answers[" + std::to_string(i) + "]", line));
  }

  if (auto it = r.find("gt_boxes"); it != r.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(line, "gt_boxes", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      t.gt_boxes.push_back(detail::decode_box((*it)[i], "gt_boxes[" + std::to_string(i) + "]", line,
                                              space, t.image));
    }
  }
  if (auto it = r.find("answerable"); it != r.end() && !it->is_null()) {
    t.answerable = field::boolean(*it, "answerable", line);
  }
  if (auto it = r.find("multiple_choice"); it != r.end() && !it->is_null()) {
    t.multiple_choice = field::boolean(*it, "multiple_choice", line);
  }
  if (auto it = r.find("confidences"); it != r.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError(line, "confidences", "expected an object");
    ConfidenceTriple c;
    c.c_corr = field::number(field::require(*it, "c_corr", line), "confidences.c_corr", line);
    c.c_loc = field::number(field::require(*it, "c_loc", line), "confidences.c_loc", line);
    c.c_coh = field::number(field::require(*it, "c_coh", line), "confidences.c_coh", line);
    if (auto bad = confidence_violation(c)) throw ParseError(line, "confidences", *bad);
    t.confidences = c;
  }
  return t;
}

// Canonical record: normalized coordinates, every field explicit.
inline json encode_trace(const Trace& t) {
  json crops = json::array();
  for (const auto& c : t.crops) {
    json e{{"turn_index", c.turn_index}, {"box", detail::encode_box(c.box)},
           {"source", detail::to_string(c.source)}};
    if (!c.image_ref.empty()) e["image_ref"] = c.image_ref;
    crops.push_back(std::move(e));
  }
  json boxes = json::array();
  for (const auto& b : t.gt_boxes) boxes.push_back(detail::encode_box(b));
  json r{{"schema_version", kTraceSchemaVersion},
         {"question_id", t.question_id},
         {"repetition", t.repetition},
         {"question", t.question},
         {"image", {{"ref", t.image.ref}, {"width", t.image.width}, {"height", t.image.height}}},
         {"crops", std::move(crops)},
         {"last_message", t.last_message},
         {"final_answer", t.final_answer},
         {"gt_answers", t.gt_answers},
         {"gt_boxes", std::move(boxes)},
         {"answerable", t.answerable},
         {"multiple_choice", t.multiple_choice}};
  if (t.confidences) {
    r["confidences"] = {{"c_corr", t.confidences->c_corr},
                        {"c_loc", t.confidences->c_loc},
                        {"c_coh", t.confidences->c_coh}};
  }
  return r;
}

// Reads a trace stream, preserving record order. Fails on the first malformed
// record, invariant violation or duplicate (question_id, repetition).
inline std::vector<Trace> parse_traces(std::istream& in) {
  std::vector<Trace> out;
  std::set<SampleKey> seen;
  for_each_jsonl(in, [&](const json& record, std::size_t line) {
    Trace t = decode_trace(record, line);
    if (!seen.insert(t.key()).second) {
      throw ParseError(line, "question_id", "duplicate (question_id, repetition) " + to_string(t.key()));
    }
    out.push_back(std::move(t));
  });
  return out;
}

inline std::vector<Trace> load_traces(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_traces(in);
}

inline void write_traces(std::ostream& out, const std::vector<Trace>& traces) {
  for (const auto& t : traces) out << encode_trace(t).dump() << '\n';
}

}  // namespace sieves
