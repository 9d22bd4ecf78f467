#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gkt/backend.hpp"
#include "gkt/domain.hpp"

namespace gkt {

struct BatchPlan {
  std::vector<std::vector<RequestId>> batches;
  int batch_capacity = 1;

  std::size_t request_count() const;
};

/// Arrival-order partition into ceil(n / capacity) batches; only the last may
/// be short. Throws std::invalid_argument for capacity < 1.
BatchPlan plan_batches(std::span<const UserRequest> requests, int capacity);

/// "Q: <question>\nA:", shared by teacher and student prompts.
std::string question_stem(const std::string &question);

/// Cutoff: exemplars + stem. Concise/Hint: the instruction goes right before
/// the stem (or before the exemplars with InstructionPlacement::BeforeExemplars).
std::string build_teacher_prompt(const std::string &question, const std::string &few_shot_prompt,
                                 const ProjectionSpec &projection);

struct GuidanceRun {
  std::vector<GuidancePrompt> guidance;  // order-aligned with the requests
  BatchPlan plan;
  std::vector<double> batch_latency_s;  // one per batch
};

/// Runs the teacher over every batch with max_new_tokens capped at the
/// guidance budget. Batches may run concurrently (up to `max_concurrent_batches`);
/// any backend failure aborts the run with the batch index attached.
GuidanceRun generate_guidance(std::span<const UserRequest> requests, const LanguageModel &teacher,
                              const ProjectionSpec &projection, const std::string &few_shot_prompt, int capacity,
                              const GenerationSettings &teacher_settings = {}, int max_concurrent_batches = 1);

/// Answer statement present in the truncated guidance alone, if any.
std::optional<std::string> teacher_only_answer(const GuidancePrompt &guidance, TaskKind task);

// ---------------------------------------------------------------------------
// Service mode

struct GuidanceCallResult {
  std::vector<std::string> guidance;
  std::vector<int> token_counts;
  double batch_latency_s = 0.0;  // max over the batches this call spanned
  std::vector<int> batch_indices;
};

/// Shared request queue for the cloud-side service. Questions are grouped by
/// (mode, budget); a group is dispatched when it fills a batch or its oldest
/// entry has waited `linger`. Batch dispatch is serialized; batches then run
/// on their own threads.
class GuidanceService {
 public:
  GuidanceService(BackendHandle teacher, std::string few_shot_prompt, int capacity, std::chrono::milliseconds linger,
                  GenerationSettings teacher_settings, std::map<ProjectionMode, std::string> prefixes = {});
  ~GuidanceService();

  GuidanceService(const GuidanceService &) = delete;
  GuidanceService &operator=(const GuidanceService &) = delete;

  /// The future throws BackendError (with batch_index) if a batch fails.
  std::future<GuidanceCallResult> submit(std::vector<std::string> questions, ProjectionMode mode, int budget);

  /// Dispatches everything still queued and waits for in-flight batches.
  void shutdown();

  int capacity() const { return capacity_; }
  std::uint64_t batches_dispatched() const;

 private:
  struct Call;
  struct Item {
    std::shared_ptr<Call> call;
    std::size_t slot;
    std::string question;
    std::chrono::steady_clock::time_point enqueued;
  };
  using Key = std::pair<ProjectionMode, int>;

  void dispatcher_loop();
  void dispatch_locked(const Key &key, std::size_t count);
  void run_batch(Key key, std::vector<Item> items, int batch_index);

  BackendHandle teacher_;
  std::string few_shot_prompt_;
  int capacity_;
  std::chrono::milliseconds linger_;
  GenerationSettings teacher_settings_;
  std::map<ProjectionMode, std::string> prefixes_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, std::deque<Item>> queues_;
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  void reap_finished_locked();

  std::list<Worker> workers_;
  std::uint64_t next_batch_ = 0;
  bool stopping_ = false;
  std::thread dispatcher_;
};

}  // namespace gkt
