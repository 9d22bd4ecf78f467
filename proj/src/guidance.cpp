#include "gkt/guidance.hpp"

#include <algorithm>
#include <exception>
#include <stdexcept>

#include "gkt/eval.hpp"

namespace gkt {

std::size_t BatchPlan::request_count() const {
  std::size_t n = 0;
  for (const auto &b : batches) n += b.size();
  return n;
}

BatchPlan plan_batches(std::span<const UserRequest> requests, int capacity) {
  if (capacity < 1) throw std::invalid_argument("batch capacity must be >= 1");
  BatchPlan plan;
  plan.batch_capacity = capacity;
  const auto cap = static_cast<std::size_t>(capacity);
  plan.batches.reserve((requests.size() + cap - 1) / cap);
  for (std::size_t i = 0; i < requests.size(); i += cap) {
    auto &batch = plan.batches.emplace_back();
    for (std::size_t k = i; k < std::min(i + cap, requests.size()); ++k) batch.push_back(requests[k].request_id);
  }
  return plan;
}

std::string question_stem(const std::string &question) { return "Q: " + question + "\nA:"; }

std::string build_teacher_prompt(const std::string &question, const std::string &few_shot_prompt,
                                 const ProjectionSpec &projection) {
  if (projection.mode == ProjectionMode::Cutoff || projection.instruction_prefix.empty())
    return few_shot_prompt + question_stem(question);
  if (projection.placement == InstructionPlacement::BeforeExemplars)
    return projection.instruction_prefix + few_shot_prompt + question_stem(question);
  return few_shot_prompt + projection.instruction_prefix + question_stem(question);
}

GuidanceRun generate_guidance(std::span<const UserRequest> requests, const LanguageModel &teacher,
                              const ProjectionSpec &projection, const std::string &few_shot_prompt, int capacity,
                              const GenerationSettings &teacher_settings, int max_concurrent_batches) {
  if (projection.guidance_token_budget < 1) throw std::invalid_argument("guidance_token_budget must be >= 1");
  GuidanceRun run;
  run.plan = plan_batches(requests, capacity);
  const auto n_batches = run.plan.batches.size();
  run.guidance.resize(requests.size());
  run.batch_latency_s.assign(n_batches, 0.0);

  GenerationSettings settings = teacher_settings;
  settings.max_new_tokens = projection.guidance_token_budget;

  std::vector<std::exception_ptr> errors(n_batches);
  const auto cap = static_cast<std::size_t>(capacity);
  const int threads = std::max(1, max_concurrent_batches);
  const auto nb = static_cast<std::ptrdiff_t>(n_batches);

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t first = static_cast<std::size_t>(b) * cap;
    const std::size_t last = std::min(first + cap, requests.size());
    std::vector<std::string> prompts;
    prompts.reserve(last - first);
    for (std::size_t i = first; i < last; ++i)
      prompts.push_back(build_teacher_prompt(requests[i].question, few_shot_prompt, projection));
    try {
      auto outs = teacher.generate_batch(prompts, settings);
      const double latency = outs.empty() ? 0.0 : outs.front().latency;
      const double share = latency / static_cast<double>(outs.size());
      run.batch_latency_s[static_cast<std::size_t>(b)] = latency;
      for (std::size_t i = first; i < last; ++i) {
        auto &out = outs[i - first];
        run.guidance[i] = GuidancePrompt{requests[i].request_id, std::move(out.text),
                                         std::min(out.token_count, projection.guidance_token_budget), share,
                                         static_cast<int>(b)};
      }
    } catch (BackendError &e) {
      e.batch_index = static_cast<int>(b);
      if (e.item_index) e.request_id = requests[first + static_cast<std::size_t>(*e.item_index)].request_id;
      errors[static_cast<std::size_t>(b)] = std::current_exception();
    } catch (...) {
      errors[static_cast<std::size_t>(b)] = std::current_exception();
    }
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
  return run;
}

std::optional<std::string> teacher_only_answer(const GuidancePrompt &guidance, TaskKind task) {
  return extract_terminal_answer(guidance.text, task);
}

// ---------------------------------------------------------------------------

struct GuidanceService::Call {
  std::mutex mu;
  std::vector<std::string> guidance;
  std::vector<int> token_counts;
  std::vector<int> batch_indices;
  double max_latency = 0.0;
  std::size_t remaining = 0;
  bool settled = false;
  std::promise<GuidanceCallResult> promise;
};

GuidanceService::GuidanceService(BackendHandle teacher, std::string few_shot_prompt, int capacity,
                                 std::chrono::milliseconds linger, GenerationSettings teacher_settings,
                                 std::map<ProjectionMode, std::string> prefixes)
    : teacher_(std::move(teacher)),
      few_shot_prompt_(std::move(few_shot_prompt)),
      capacity_(capacity),
      linger_(linger),
      teacher_settings_(teacher_settings),
      prefixes_(std::move(prefixes)) {
  if (!teacher_) throw std::invalid_argument("guidance service needs a teacher backend");
  if (capacity_ < 1) throw std::invalid_argument("batch capacity must be >= 1");
  dispatcher_ = std::thread([this] { dispatcher_loop(); });
}

GuidanceService::~GuidanceService() { shutdown(); }

std::uint64_t GuidanceService::batches_dispatched() const {
  std::lock_guard lock(mu_);
  return next_batch_;
}

std::future<GuidanceCallResult> GuidanceService::submit(std::vector<std::string> questions, ProjectionMode mode,
                                                        int budget) {
  if (questions.empty()) throw std::invalid_argument("questions must be non-empty");
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  auto call = std::make_shared<Call>();
  call->guidance.resize(questions.size());
  call->token_counts.resize(questions.size());
  call->remaining = questions.size();
  auto future = call->promise.get_future();
  {
    std::lock_guard lock(mu_);
    if (stopping_) throw std::runtime_error("guidance service is shutting down");
    auto &queue = queues_[Key{mode, budget}];
    const auto now = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < questions.size(); ++i) queue.push_back(Item{call, i, std::move(questions[i]), now});
  }
  cv_.notify_all();
  return future;
}

void GuidanceService::reap_finished_locked() {
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (it->done->load()) {
      it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void GuidanceService::dispatch_locked(const Key &key, std::size_t count) {
  auto &queue = queues_[key];
  std::vector<Item> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    items.push_back(std::move(queue.front()));
    queue.pop_front();
  }
  const int index = static_cast<int>(next_batch_++);
  auto done = std::make_shared<std::atomic<bool>>(false);
  workers_.push_back(Worker{std::thread([this, key, items = std::move(items), index, done]() mutable {
                              run_batch(key, std::move(items), index);
                              done->store(true);
                              cv_.notify_all();
                            }),
                            done});
}

void GuidanceService::dispatcher_loop() {
  std::unique_lock lock(mu_);
  const auto cap = static_cast<std::size_t>(capacity_);
  for (;;) {
    reap_finished_locked();
    auto now = std::chrono::steady_clock::now();
    auto next_deadline = std::chrono::steady_clock::time_point::max();
    for (auto &[key, queue] : queues_) {
      while (queue.size() >= cap) dispatch_locked(key, cap);
      if (queue.empty()) continue;
      auto deadline = queue.front().enqueued + linger_;
      if (stopping_ || deadline <= now)
        dispatch_locked(key, queue.size());
      else
        next_deadline = std::min(next_deadline, deadline);
    }
    if (stopping_) break;
    if (next_deadline == std::chrono::steady_clock::time_point::max())
      cv_.wait(lock);
    else
      cv_.wait_until(lock, next_deadline);
  }
  // Let in-flight batches finish before the service goes away.
  while (!workers_.empty()) {
    auto worker = std::move(workers_.front());
    workers_.pop_front();
    lock.unlock();
    worker.thread.join();
    lock.lock();
  }
}

void GuidanceService::run_batch(Key key, std::vector<Item> items, int batch_index) {
  ProjectionSpec projection = ProjectionSpec::make(key.first, key.second);
  if (auto it = prefixes_.find(key.first); it != prefixes_.end()) projection.instruction_prefix = it->second;
  GenerationSettings settings = teacher_settings_;
  settings.max_new_tokens = key.second;
  std::vector<std::string> prompts;
  prompts.reserve(items.size());
  for (const auto &item : items) prompts.push_back(build_teacher_prompt(item.question, few_shot_prompt_, projection));

  std::vector<GenerationOutput> outs;
  std::exception_ptr failure;
  try {
    outs = teacher_->generate_batch(prompts, settings);
  } catch (BackendError &e) {
    e.batch_index = batch_index;
    failure = std::current_exception();
  } catch (...) {
    failure = std::current_exception();
  }

  for (std::size_t i = 0; i < items.size(); ++i) {
    auto &call = *items[i].call;
    std::lock_guard lock(call.mu);
    if (call.settled) continue;
    if (failure) {
      call.settled = true;
      call.promise.set_exception(failure);
      continue;
    }
    call.guidance[items[i].slot] = outs[i].text;
    call.token_counts[items[i].slot] = std::min(outs[i].token_count, key.second);
    call.max_latency = std::max(call.max_latency, outs[i].latency);
    if (std::find(call.batch_indices.begin(), call.batch_indices.end(), batch_index) == call.batch_indices.end())
      call.batch_indices.push_back(batch_index);
    if (--call.remaining == 0) {
      call.settled = true;
      std::sort(call.batch_indices.begin(), call.batch_indices.end());
      call.promise.set_value(GuidanceCallResult{std::move(call.guidance), std::move(call.token_counts),
                                                call.max_latency, std::move(call.batch_indices)});
    }
  }
}

void GuidanceService::shutdown() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !dispatcher_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (dispatcher_.joinable()) dispatcher_.join();
}

}  // namespace gkt
