#include <gtest/gtest.h>

#include <httplib.h>

#include "gkt/orchestrator.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace gkt;
using namespace std::chrono_literals;
using gkt::testing::mock_model;
using gkt::testing::settings_with;

namespace {

Json post(int port, const Json &body, int &status) {
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);
  auto res = cli.Post("/v1/guidance", body.dump(), "application/json");
  if (!res) {
    status = -1;
    return nullptr;
  }
  status = res->status;
  return Json::parse(res->body);
}

std::vector<std::string> questions(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("What is " + std::to_string(i) + " times 7?");
  return out;
}

}  // namespace

TEST(GuidanceServerHttp, ReturnsBudgetedGuidance) {
  GuidanceServer server(mock_model(5, 0.01, 0.1), "", 24, 20ms, settings_with(512));
  int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  int status = 0;
  auto j = post(port, {{"questions", questions(3)}, {"mode", "cutoff"}, {"budget", 30}}, status);
  ASSERT_EQ(status, 200) << j.dump();
  ASSERT_EQ(j["guidance"].size(), 3u);
  ASSERT_EQ(j["token_counts"].size(), 3u);
  for (const auto &c : j["token_counts"]) EXPECT_EQ(c.get<int>(), 30);
  EXPECT_NEAR(j["batch_latency_s"].get<double>(), 0.1 + 0.3, 1e-9);
  EXPECT_EQ(j["batch_indices"], Json::array({0}));

  auto direct = mock_model(5)->generate("Q: " + questions(3)[1] + "\nA:", settings_with(30));
  EXPECT_EQ(j["guidance"][1], direct.text);
  server.stop();
  EXPECT_FALSE(server.running());
}

TEST(GuidanceServerHttp, MalformedBodyNamesField) {
  GuidanceServer server(mock_model(5), "", 4, 10ms, settings_with(64));
  int port = server.start("127.0.0.1", 0);
  int status = 0;
  auto j = post(port, {{"questions", questions(2)}, {"mode", "sideways"}, {"budget", 10}}, status);
  EXPECT_EQ(status, 400);
  EXPECT_EQ(j["error"]["path"], "mode");
  j = post(port, {{"questions", questions(2)}, {"mode", "hint"}, {"budget", 0}}, status);
  EXPECT_EQ(status, 400);
  EXPECT_EQ(j["error"]["path"], "budget");
  j = post(port, {{"questions", Json::array({"ok", 3})}, {"mode", "hint"}, {"budget", 5}}, status);
  EXPECT_EQ(status, 400);
  EXPECT_EQ(j["error"]["path"], "questions[1]");
}

TEST(GuidanceServerHttp, FullBatchInOneDispatch) {
  GuidanceServer server(mock_model(6, 0.01, 0.2), "", 24, 60000ms, settings_with(64));
  int port = server.start("127.0.0.1", 0);
  int status = 0;
  auto j = post(port, {{"questions", questions(24)}, {"mode", "concise"}, {"budget", 20}}, status);
  ASSERT_EQ(status, 200);
  EXPECT_EQ(j["guidance"].size(), 24u);
  for (const auto &b : j["batch_indices"]) EXPECT_EQ(b.get<int>(), 0);
  EXPECT_EQ(server.service().batches_dispatched(), 1u);
  EXPECT_NEAR(j["batch_latency_s"].get<double>(), 0.4, 1e-9);
}

TEST(GuidanceServerHttp, BackendLossIsBadGatewayAndServiceSurvives) {
  auto stub = std::make_unique<gkt::testing::StubCompletionsServer>(
      [](const Json &, int) { return gkt::testing::StubCompletionsServer::Reply{200, Json::object()}; });
  BackendConfig cfg;
  cfg.name = "remote";
  cfg.kind = BackendKind::Remote;
  cfg.family = "llama";
  cfg.endpoint = stub->endpoint();
  cfg.model_id = "m";
  cfg.auth_token = "t";
  cfg.max_attempts = 2;
  cfg.backoff_initial_s = 0.01;
  cfg.timeout_s = 1;
  auto teacher = make_backend(cfg);
  stub->stop();
  stub.reset();

  GuidanceServer server(teacher, "", 4, 5ms, settings_with(64));
  int port = server.start("127.0.0.1", 0);
  int status = 0;
  auto j = post(port, {{"questions", questions(2)}, {"mode", "cutoff"}, {"budget", 10}}, status);
  EXPECT_EQ(status, 502);
  EXPECT_EQ(j["error"]["kind"], "RemoteUnavailable");
  EXPECT_EQ(j["error"]["batch_index"], 0);

  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_TRUE(server.running());
}

TEST(ParseGuidanceBody, Cases) {
  GuidanceRequestBody out;
  EXPECT_FALSE(parse_guidance_body(R"({"questions":["a"],"mode":"hint","budget":7})", out));
  EXPECT_EQ(out.mode, ProjectionMode::Hint);
  EXPECT_EQ(out.budget, 7);
  EXPECT_EQ(out.questions, std::vector<std::string>{"a"});

  EXPECT_EQ(parse_guidance_body("not json", out)->path, "$");
  EXPECT_EQ(parse_guidance_body("[]", out)->path, "$");
  EXPECT_EQ(parse_guidance_body(R"({"mode":"hint","budget":7})", out)->path, "questions");
  EXPECT_EQ(parse_guidance_body(R"({"questions":[],"mode":"hint","budget":7})", out)->path, "questions");
  EXPECT_EQ(parse_guidance_body(R"({"questions":["  "],"mode":"hint","budget":7})", out)->path, "questions[0]");
  EXPECT_EQ(parse_guidance_body(R"({"questions":["a"],"budget":7})", out)->path, "mode");
  EXPECT_EQ(parse_guidance_body(R"({"questions":["a"],"mode":"hint"})", out)->path, "budget");
  EXPECT_EQ(parse_guidance_body(R"({"questions":["a"],"mode":"hint","budget":2.5})", out)->path, "budget");
  EXPECT_EQ(parse_guidance_body(R"({"questions":["a"],"mode":"hint","budget":-1})", out)->path, "budget");
}
