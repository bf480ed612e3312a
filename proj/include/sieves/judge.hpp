#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <openssl/evp.h>

#include "sieves/error.hpp"
#include "sieves/jsonl.hpp"
#include "sieves/trace.hpp"

namespace sieves {

// ---------------------------------------------------------------------------
// Chat-completion request model
// ---------------------------------------------------------------------------

struct ContentPart {
  enum class Kind { text, image_url };
  Kind kind = Kind::text;
  std::string value;  // text, or image URL / data URI

  static ContentPart text(std::string s) { return {Kind::text, std::move(s)}; }
  static ContentPart image(std::string url) { return {Kind::image_url, std::move(url)}; }
};

struct ChatMessage {
  std::string role;
  std::vector<ContentPart> content;
};

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  std::vector<ChatMessage> messages;

  json to_json() const {
    json msgs = json::array();
    for (const auto& m : messages) {
      json parts = json::array();
      for (const auto& p : m.content) {
        if (p.kind == ContentPart::Kind::text) {
          parts.push_back({{"type", "text"}, {"text", p.value}});
        } else {
          parts.push_back({{"type", "image_url"}, {"image_url", {{"url", p.value}}}});
        }
      }
      msgs.push_back({{"role", m.role}, {"content", std::move(parts)}});
    }
    return {{"model", model}, {"temperature", temperature}, {"messages", std::move(msgs)}};
  }

  // All text parts joined, for mocks and diagnostics.
  std::string text() const {
    std::string out;
    for (const auto& m : messages) {
      for (const auto& p : m.content) {
        if (p.kind == ContentPart::Kind::text) out += p.value;
      }
    }
    return out;
  }
};

// Anything that turns a chat request into the assistant's reply text.
// Implementations throw TransportError when the service cannot be reached.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

struct EndpointConfig {
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string auth_env;  // name of the env var holding the bearer token
  int max_in_flight = 4;
  double timeout_s = 120.0;
  int attempts = 3;
  int backoff_ms = 500;
};

inline std::string extract_reply_text(const json& body) {
  const auto& content = body.at("choices").at(0).at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  for (const auto& part : content) {
    if (part.value("type", "") == "text") out += part.value("text", "");
  }
  return out;
}

class HttpJudgeClient final : public JudgeClient {
 public:
  explicit HttpJudgeClient(EndpointConfig cfg)
      : cfg_(std::move(cfg)), in_flight_(std::clamp(cfg_.max_in_flight, 1, 1024)) {}

  std::string complete(const ChatRequest& request) override {
    ChatRequest req = request;
    if (req.model.empty()) req.model = cfg_.model;
    const std::string body = req.to_json().dump();

    httplib::Headers headers;
    if (!cfg_.auth_env.empty()) {
      if (const char* token = std::getenv(cfg_.auth_env.c_str()); token != nullptr && *token != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
    }

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < std::max(1, cfg_.attempts); ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms) * (1 << (attempt - 1)));
      }
      httplib::Result res;
      {
        in_flight_.acquire();
        httplib::Client cli(cfg_.base_url);
        const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
        cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        res = cli.Post(cfg_.path, headers, body, "application/json");
        in_flight_.release();
      }
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw TransportError(cfg_.base_url + ": HTTP " + std::to_string(res->status) + ": " + res->body);
      }
      try {
        return extract_reply_text(json::parse(res->body));
      } catch (const json::exception& e) {
        last_error = std::string("malformed response body: ") + e.what();
      }
    }
    throw TransportError(cfg_.base_url + ": " + last_error);
  }

 private:
  EndpointConfig cfg_;
  std::counting_semaphore<1024> in_flight_;
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// Judge replies on disk, one file per request payload hash. Writes go through
// a unique temporary file and a rename, so concurrent readers only ever see
// complete entries.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  static std::string key_for(const ChatRequest& request) { return sha256_hex(request.to_json().dump()); }

  std::optional<std::string> get(const std::string& key) const {
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    try {
      const auto entry = json::parse(in);
      return entry.at("response").get<std::string>();
    } catch (const json::exception&) {
      return std::nullopt;
    }
  }

  void put(const std::string& key, const ChatRequest& request, const std::string& response) {
    const json entry{{"request", request.to_json()}, {"response", response}};
    const auto final_path = path_for(key);
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "_" +
           std::to_string(counter_.fetch_add(1));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write cache entry " + tmp.string());
      out << entry.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, final_path);
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }

  std::filesystem::path dir_;
  std::atomic<std::uint64_t> counter_{0};
};

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class Verdict { yes, no, unparseable };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    case Verdict::unparseable: return "unparseable";
  }
  return "unparseable";
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

namespace detail {

inline Verdict yes_no_word(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i]))) {
    if (s[i] != ' ' && s[i] != '*' && s[i] != '\t' && s[i] != '"' && s[i] != '\'') return Verdict::unparseable;
    ++i;
  }
  std::size_t j = i;
  while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
  const auto word = lowercase(s.substr(i, j - i));
  if (word == "yes") return Verdict::yes;
  if (word == "no") return Verdict::no;
  return Verdict::unparseable;
}

}  // namespace detail

// Correctness judge: the word after the last "ANSWER:" marker.
inline Verdict parse_correctness_verdict(std::string_view reply) {
  const auto lower = lowercase(reply);
  const auto pos = lower.rfind("answer:");
  if (pos == std::string::npos) return Verdict::unparseable;
  return detail::yes_no_word(std::string_view(lower).substr(pos + 7));
}

// Coherence judge: the content of the last \boxed{...} span.
inline Verdict parse_coherence_verdict(std::string_view reply) {
  const auto boxed = last_boxed(reply);
  if (!boxed) return Verdict::unparseable;
  auto word = lowercase(trim(*boxed));
  while (!word.empty() && (word.back() == '.' || word.back() == '!')) word.pop_back();
  if (word == "yes") return Verdict::yes;
  if (word == "no") return Verdict::no;
  return Verdict::unparseable;
}

struct JudgedReply {
  std::string text;
  bool from_cache = false;
};

// A judge endpoint plus its cache and model name. The cache is optional.
struct Judge {
  JudgeClient* client = nullptr;
  ResponseCache* cache = nullptr;
  std::string model;

  // Sends `request` (model filled in) and validates the reply with `accept`.
  // A cached reply is returned as-is. A fresh reply that `accept` rejects is
  // requested once more with the identical payload; the final reply is cached
  // either way so reruns are deterministic and offline.
  template <typename Accept>
  JudgedReply ask(ChatRequest request, Accept&& accept) const {
    request.model = model;
    std::string key;
    if (cache != nullptr) {
      key = ResponseCache::key_for(request);
      if (auto hit = cache->get(key)) return {*hit, true};
    }
    if (client == nullptr) throw TransportError("no judge endpoint configured and no cached reply");
    std::string reply = client->complete(request);
    if (!accept(reply)) reply = client->complete(request);
    if (cache != nullptr) cache->put(key, request, reply);
    return {reply, false};
  }
};

// ---------------------------------------------------------------------------
// Image references
// ---------------------------------------------------------------------------

enum class ImageMode { uri, base64 };

inline std::string base64_encode(std::string_view bytes) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out += {table[(n >> 18) & 63], table[(n >> 12) & 63], table[(n >> 6) & 63], table[n & 63]};
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
    out += {table[(n >> 18) & 63], table[(n >> 12) & 63], '=', '='};
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += {table[(n >> 18) & 63], table[(n >> 12) & 63], table[(n >> 6) & 63], '='};
  }
  return out;
}

inline bool is_uri(std::string_view ref) {
  return ref.starts_with("http://") || ref.starts_with("https://") || ref.starts_with("data:") ||
         ref.starts_with("file://");
}

inline std::string image_url(const std::string& ref, ImageMode mode) {
  if (mode == ImageMode::uri || is_uri(ref)) return ref;
  std::ifstream in(ref, std::ios::binary);
  if (!in) throw ValidationError(ref, "cannot read image for base64 upload");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto ext = lowercase(std::filesystem::path(ref).extension().string());
  std::string mime = "image/png";
  if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
  else if (ext == ".webp") mime = "image/webp";
  else if (ext == ".gif") mime = "image/gif";
  return "data:" + mime + ";base64," + base64_encode(bytes);
}

// A crop is sent as its own rendered image when the trace kept one, otherwise
// as the full image with a media-fragment region (#xywh=percent:x,y,w,h).
inline std::string crop_image_url(const Trace& t, const CropEvent& crop, ImageMode mode) {
  if (!crop.image_ref.empty()) return image_url(crop.image_ref, mode);
  std::ostringstream frag;
  frag.precision(6);
  frag << std::fixed << "#xywh=percent:" << crop.box.x_min * 100.0 << ',' << crop.box.y_min * 100.0 << ','
       << crop.box.width() * 100.0 << ',' << crop.box.height() * 100.0;
  return image_url(t.image.ref, mode) + frag.str();
}

}  // namespace sieves
