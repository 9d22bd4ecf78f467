#include <httplib.h>

#include "gkt/orchestrator.hpp"

namespace gkt {

std::optional<Violation> parse_guidance_body(const std::string &body, GuidanceRequestBody &out) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error &) {
    return Violation{"$", "body is not valid JSON"};
  }
  if (!j.is_object()) return Violation{"$", "body must be an object"};
  if (!j.contains("questions")) return Violation{"questions", "missing"};
  const auto &qs = j.at("questions");
  if (!qs.is_array()) return Violation{"questions", "must be an array of strings"};
  if (qs.empty()) return Violation{"questions", "must contain at least one question"};
  out.questions.clear();
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto path = "questions[" + std::to_string(i) + "]";
    if (!qs[i].is_string()) return Violation{path, "must be a string"};
    auto q = qs[i].get<std::string>();
    if (q.find_first_not_of(" \t\r\n") == std::string::npos) return Violation{path, "must be non-empty"};
    out.questions.push_back(std::move(q));
  }
  if (!j.contains("mode")) return Violation{"mode", "missing"};
  if (!j.at("mode").is_string()) return Violation{"mode", "must be one of cutoff, concise, hint"};
  try {
    out.mode = parse_projection_mode(j.at("mode").get<std::string>());
  } catch (const ConfigError &) {
    return Violation{"mode", "must be one of cutoff, concise, hint"};
  }
  if (!j.contains("budget")) return Violation{"budget", "missing"};
  if (!j.at("budget").is_number_integer()) return Violation{"budget", "must be an integer"};
  const auto budget = j.at("budget").get<long long>();
  if (budget < 1 || budget > 1'000'000) return Violation{"budget", "must be between 1 and 1000000"};
  out.budget = static_cast<int>(budget);
  return std::nullopt;
}

namespace {

std::map<ProjectionMode, std::string> prefixes_from(const ProjectionSpec &p) {
  std::map<ProjectionMode, std::string> out;
  if (p.mode != ProjectionMode::Cutoff) out[p.mode] = p.instruction_prefix;
  return out;
}

}  // namespace

GuidanceServer::GuidanceServer(const ExperimentConfig &config)
    : GuidanceServer(make_backend(config.teacher_backend), few_shot_text(config), config.teacher_batch_size,
                     std::chrono::milliseconds(static_cast<long long>(config.linger_ms)),
                     config.teacher_settings.value_or(GenerationSettings{0.8, 0.9, 1024, std::nullopt}),
                     prefixes_from(config.projection)) {}

GuidanceServer::GuidanceServer(BackendHandle teacher, std::string few_shot_prompt, int capacity,
                               std::chrono::milliseconds linger, GenerationSettings teacher_settings,
                               std::map<ProjectionMode, std::string> prefixes)
    : service_(std::make_unique<GuidanceService>(std::move(teacher), std::move(few_shot_prompt), capacity, linger,
                                                 teacher_settings, std::move(prefixes))),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

GuidanceServer::~GuidanceServer() { stop(); }

void GuidanceServer::install_routes() {
  server_->Get("/healthz", [](const httplib::Request &, httplib::Response &res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server_->Post("/v1/guidance", [this](const httplib::Request &req, httplib::Response &res) {
    GuidanceRequestBody body;
    if (auto v = parse_guidance_body(req.body, body)) {
      res.status = 400;
      res.set_content(Json{{"error", {{"path", v->path}, {"message", v->message}}}}.dump(), "application/json");
      return;
    }
    try {
      auto result = service_->submit(std::move(body.questions), body.mode, body.budget).get();
      Json out = {{"guidance", result.guidance},
                  {"token_counts", result.token_counts},
                  {"batch_latency_s", result.batch_latency_s},
                  {"batch_indices", result.batch_indices}};
      res.set_content(out.dump(), "application/json");
    } catch (const BackendError &e) {
      res.status = 502;
      Json err = {{"message", e.what()}, {"kind", to_string(e.kind())}};
      err["batch_index"] = e.batch_index ? Json(*e.batch_index) : Json(nullptr);
      res.set_content(Json{{"error", err}}.dump(), "application/json");
    } catch (const std::exception &e) {
      res.status = 503;
      res.set_content(Json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
    }
  });
}

int GuidanceServer::start(const std::string &host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("BindFailure: cannot bind " + host);
  } else if (!server_->bind_to_port(host, port)) {
    throw IoError("BindFailure: cannot bind " + host + ":" + std::to_string(port));
  }
  running_ = true;
  thread_ = std::thread([this] {
    server_->listen_after_bind();
    running_ = false;
  });
  server_->wait_until_ready();
  return bound;
}

void GuidanceServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
  if (service_) service_->shutdown();
  running_ = false;
}

bool GuidanceServer::running() const { return running_; }

}  // namespace gkt
