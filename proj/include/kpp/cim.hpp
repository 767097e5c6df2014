#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "kpp/ising.hpp"
#include "kpp/sampling.hpp"

// Mock cloud Ising machine: an asynchronous HTTP job service backed by the
// local annealer, and the client used by the remote sampling backend.
//
//   POST /v1/ising/jobs       submit, 202 {"id", "state"}
//   GET  /v1/ising/jobs/{id}  poll,   200 {"id", "state", "result"?, "error"?}
namespace kpp::cim {

struct JobRequest {
  IsingProblem problem;
  SamplerConfig params;
  std::string label;
};

enum class JobState { queued, running, done, failed };

std::string to_string(JobState s);
JobState job_state_from_string(const std::string& s);

/// Wire encoding. Problems travel as coordinate lists; absent params take
/// SamplerConfig defaults and an explicit null top_k disables filtering.
nlohmann::json to_json(const JobRequest& r);
JobRequest job_request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SampleSet& s);
SampleSet sample_set_from_json(const nlohmann::json& j);

struct ServiceConfig {
  std::size_t workers = 1;
  /// Finished and pending jobs kept in memory; the oldest is evicted first.
  std::size_t capacity = 1024;
  /// Artificial delay before a job starts running.
  std::chrono::milliseconds queue_latency{0};
  /// Test hook: jobs for which this returns true fail instead of running.
  std::function<bool(const JobRequest&)> inject_failure;
};

class Service {
 public:
  explicit Service(ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves on a background thread until stop() or destruction.
  void start();
  /// Serves on the calling thread until stop() is called from elsewhere.
  void run();
  void stop();

  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ClientConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string auth_token;
  double timeout_seconds = 30.0;
  double poll_interval_seconds = 0.02;
  std::size_t max_polls = 5000;
  std::size_t max_retries = 3;

  /// Reads KPP_BASE_URL and KPP_API_TOKEN when set.
  static ClientConfig from_env();
  void validate() const;
};

/// Submits a job. Retries on transport failure reuse the same request key,
/// so the server never creates a duplicate job. An empty key is replaced by a
/// random one.
std::string submit_job(const ClientConfig& c, const JobRequest& r, std::string request_key = {});

/// Polls until the job is done. Throws RemoteJobError on a failed job and
/// TimeoutError when max_polls is exhausted.
SampleSet await_result(const ClientConfig& c, const std::string& id);

/// Raw single poll, returning the decoded status document.
nlohmann::json fetch_job(const ClientConfig& c, const std::string& id);

}  // namespace kpp::cim
