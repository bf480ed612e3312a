#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mock_judge.hpp"
#include "sieves/judge.hpp"
#include "sieves/prompts.hpp"

namespace sieves {
namespace {

using testing::MockJudgeServer;
using testing::PromptKind;

ChatRequest hello(const std::string& text = "hello") {
  ChatRequest r;
  r.messages.push_back({"user", {ContentPart::text(text)}});
  return r;
}

EndpointConfig config_for(const MockJudgeServer& server) {
  EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.model = "judge-model";
  cfg.backoff_ms = 1;
  cfg.timeout_s = 10;
  return cfg;
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(ImageUrl, Modes) {
  const auto dir = std::filesystem::temp_directory_path() / "sieves_image_url";
  std::filesystem::create_directories(dir);
  const auto img = dir / "pixel.png";
  std::ofstream(img, std::ios::binary) << "foo";
  EXPECT_EQ(image_url(img.string(), ImageMode::uri), img.string());
  EXPECT_EQ(image_url(img.string(), ImageMode::base64), "data:image/png;base64,Zm9v");
  EXPECT_EQ(image_url("https://x/y.jpg", ImageMode::base64), "https://x/y.jpg");
  EXPECT_THROW(image_url((dir / "missing.png").string(), ImageMode::base64), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST(ChatRequest, WireFormat) {
  auto r = hello();
  r.model = "m";
  r.messages[0].content.push_back(ContentPart::image("http://img"));
  const auto j = r.to_json();
  EXPECT_EQ(j.at("temperature"), 0.0);
  EXPECT_EQ(j.at("messages")[0].at("content")[0].at("type"), "text");
  EXPECT_EQ(j.at("messages")[0].at("content")[1].at("image_url").at("url"), "http://img");
}

TEST(ReplyText, StringAndPartContent) {
  EXPECT_EQ(extract_reply_text(json::parse(R"({"choices":[{"message":{"content":"hi"}}]})")), "hi");
  EXPECT_EQ(extract_reply_text(json::parse(
                R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})")),
            "ab");
}

TEST(HttpClient, RoundTrip) {
  MockJudgeServer server([](const json& body, const std::string& text, PromptKind) {
    return "model=" + body.at("model").get<std::string>() + " text=" + text;
  });
  HttpJudgeClient client(config_for(server));
  EXPECT_EQ(client.complete(hello("ping")), "model=judge-model text=ping");
  EXPECT_EQ(server.total(), 1u);
}

TEST(HttpClient, RetriesTransientFailures) {
  MockJudgeServer server([](const json&, const std::string&, PromptKind) { return "ok"; });
  server.fail_next(2);
  HttpJudgeClient client(config_for(server));
  EXPECT_EQ(client.complete(hello()), "ok");
  EXPECT_EQ(server.failures(), 2);
}

TEST(HttpClient, GivesUpAfterAttempts) {
  MockJudgeServer server([](const json&, const std::string&, PromptKind) { return "ok"; });
  server.fail_next(3);
  HttpJudgeClient client(config_for(server));
  EXPECT_THROW(client.complete(hello()), TransportError);
  EXPECT_EQ(server.failures(), 3);
}

TEST(HttpClient, UnreachableEndpoint) {
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.backoff_ms = 1;
  cfg.timeout_s = 1;
  HttpJudgeClient client(cfg);
  EXPECT_THROW(client.complete(hello()), TransportError);
}

TEST(HttpClient, BearerTokenFromEnvironment) {
  std::string seen;
  std::mutex m;
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(m);
    seen = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  ::setenv("SIEVES_TEST_TOKEN", "s3cret", 1);
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.auth_env = "SIEVES_TEST_TOKEN";
  HttpJudgeClient(cfg).complete(hello());
  server.stop();
  t.join();
  EXPECT_EQ(seen, "Bearer s3cret");
}

TEST(HttpClient, InFlightCapRespected) {
  MockJudgeServer server([](const json&, const std::string&, PromptKind) { return "ok"; });
  server.set_delay_ms(30);
  auto cfg = config_for(server);
  cfg.max_in_flight = 2;
  HttpJudgeClient client(cfg);
  std::vector<std::jthread> threads;
  for (int i = 0; i < 6; ++i) threads.emplace_back([&] { client.complete(hello()); });
  threads.clear();
  EXPECT_EQ(server.total(), 6u);
  EXPECT_LE(server.peak_concurrency(), 2);
}

TEST(Judge, CacheHitSkipsClientAndRetryOnReject) {
  const auto dir = std::filesystem::temp_directory_path() / "sieves_judge_cache";
  std::filesystem::remove_all(dir);
  MockJudgeServer server([](const json&, const std::string&, PromptKind) { return "garbled"; });
  HttpJudgeClient client(config_for(server));
  ResponseCache cache(dir);
  const Judge judge{&client, &cache, "judge-model"};
  auto accept = [](const std::string& r) { return r == "fine"; };
  const auto first = judge.ask(hello(), accept);
  EXPECT_FALSE(first.from_cache);
  EXPECT_EQ(first.text, "garbled");
  EXPECT_EQ(server.total(), 2u);  // one retry for the rejected reply
  const auto second = judge.ask(hello(), accept);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(server.total(), 2u);
  std::size_t entries = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    EXPECT_EQ(e.path().extension(), ".json");
    ++entries;
  }
  EXPECT_EQ(entries, 1u);
  std::filesystem::remove_all(dir);
}

TEST(Judge, NoClientNoCacheIsTransportError) {
  const Judge judge{nullptr, nullptr, "m"};
  EXPECT_THROW(judge.ask(hello(), [](const std::string&) { return true; }), TransportError);
}

TEST(CropImage, MediaFragment) {
  Trace t;
  t.image = {"http://host/img.jpg", 100, 100};
  const CropEvent c{1, {0.25, 0.5, 0.75, 1.0}, CropSource::tool_call, {}};
  EXPECT_EQ(crop_image_url(t, c, ImageMode::uri),
            "http://host/img.jpg#xywh=percent:25.000000,50.000000,50.000000,50.000000");
}

}  // namespace
}  // namespace sieves
