#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "sieves/judge.hpp"
#include "sieves/prompt_text.hpp"
#include "sieves/trace.hpp"

namespace sieves::prompts {

// Substitutes `{name}` placeholders found in `values` in a single pass.
// Unknown braces (e.g. the JSON example in the grounding prompt) and braces
// inside substituted values are left untouched.
inline std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        if (auto it = values.find(tmpl.substr(i + 1, close - i - 1)); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

// Splits a "System:\n...\nUser:\n..." template into its two messages.
inline std::pair<std::string_view, std::string_view> split_system_user(std::string_view tmpl) {
  constexpr std::string_view sys = "System:\n";
  constexpr std::string_view user = "\nUser:\n";
  const auto u = tmpl.find(user);
  if (!tmpl.starts_with(sys) || u == std::string_view::npos) return {{}, tmpl};
  return {tmpl.substr(sys.size(), u - sys.size()), tmpl.substr(u + user.size())};
}

// Single user message at temperature 0.
inline ChatRequest correctness_request(const Trace& t, const std::string& gt_answer) {
  ChatRequest r;
  r.messages.push_back({"user", {ContentPart::text(render(
      kCorrectnessJudge,
      {{"question", t.question}, {"pred_answer", t.final_answer}, {"gt_answer", gt_answer}}))}});
  return r;
}

// One crop per request; the crop image follows the instruction text.
inline ChatRequest coherence_request(const Trace& t, const CropEvent& crop, ImageMode mode) {
  ChatRequest r;
  r.messages.push_back(
      {"user",
       {ContentPart::text(render(kGroundingCoherence,
                                 {{"question", t.question}, {"last_message_with_boxed_answer", t.last_message}})),
        ContentPart::image(crop_image_url(t, crop, mode))}});
  return r;
}

inline ChatRequest target_extraction_request(const Trace& t) {
  const auto [sys, user] = split_system_user(kLocalizationExtract);
  ChatRequest r;
  r.messages.push_back({"system", {ContentPart::text(std::string(sys))}});
  r.messages.push_back({"user", {ContentPart::text(render(user, {{"question", t.question}}))}});
  return r;
}

inline ChatRequest grounding_request(const Trace& t, const std::string& target_object, ImageMode mode) {
  const auto [sys, user] = split_system_user(kLocalizationGround);
  ChatRequest r;
  r.messages.push_back({"system", {ContentPart::text(std::string(sys))}});
  r.messages.push_back({"user",
                        {ContentPart::text(render(user, {{"target_object", target_object}})),
                         ContentPart::image(image_url(t.image.ref, mode))}});
  return r;
}

}  // namespace sieves::prompts
