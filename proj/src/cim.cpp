#include "kpp/cim.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>

#include "kpp/errors.hpp"

namespace kpp::cim {

using nlohmann::json;

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

JobState job_state_from_string(const std::string& s) {
  if (s == "queued") return JobState::queued;
  if (s == "running") return JobState::running;
  if (s == "done") return JobState::done;
  if (s == "failed") return JobState::failed;
  throw DomainError("unknown job state '" + s + "'");
}

json to_json(const JobRequest& r) {
  json coupling = json::array();
  for (const auto& [ij, c] : r.problem.quadratic) coupling.push_back({ij.first, ij.second, c});
  const SamplerConfig& p = r.params;
  json params = {{"reads", p.reads},
                 {"seed", p.seed},
                 {"t_final", p.schedule.t_final},
                 {"decay", p.schedule.decay},
                 {"sweeps_per_stage", p.schedule.sweeps_per_stage}};
  params["top_k"] = p.top_k ? json(*p.top_k) : json(nullptr);
  if (p.beta) params["beta"] = *p.beta;
  if (p.schedule.t_initial) params["t_initial"] = *p.schedule.t_initial;
  json j = {{"n", r.problem.n},
            {"field", r.problem.linear},
            {"coupling", std::move(coupling)},
            {"offset", r.problem.offset},
            {"params", std::move(params)}};
  if (!r.label.empty()) j["label"] = r.label;
  return j;
}

JobRequest job_request_from_json(const json& j) {
  if (!j.is_object()) throw DomainError("request body must be a JSON object");
  JobRequest r;
  const auto n = j.at("n").get<std::size_t>();
  if (n == 0) throw EmptyProblemError("problem must have at least one variable");
  r.problem = IsingProblem(n);
  if (j.contains("field")) {
    auto field = j.at("field").get<std::vector<double>>();
    if (field.size() != n) throw DimensionError("field length does not match n");
    r.problem.linear = std::move(field);
  }
  if (j.contains("coupling")) {
    for (const auto& t : j.at("coupling")) {
      if (!t.is_array() || t.size() != 3) throw DomainError("coupling entries must be [i, j, c]");
      r.problem.add_quadratic(t[0].get<std::size_t>(), t[1].get<std::size_t>(), t[2].get<double>());
    }
  }
  r.problem.offset = j.value("offset", 0.0);
  r.problem.validate();

  SamplerConfig& p = r.params;
  if (j.contains("params")) {
    const json& pj = j.at("params");
    p.reads = pj.value("reads", p.reads);
    p.seed = pj.value("seed", p.seed);
    if (pj.contains("top_k")) {
      p.top_k = pj.at("top_k").is_null() ? std::nullopt : std::optional<std::size_t>(pj.at("top_k").get<std::size_t>());
    }
    if (pj.contains("beta") && !pj.at("beta").is_null()) p.beta = pj.at("beta").get<double>();
    if (pj.contains("t_initial") && !pj.at("t_initial").is_null()) p.schedule.t_initial = pj.at("t_initial").get<double>();
    p.schedule.t_final = pj.value("t_final", p.schedule.t_final);
    p.schedule.decay = pj.value("decay", p.schedule.decay);
    p.schedule.sweeps_per_stage = pj.value("sweeps_per_stage", p.schedule.sweeps_per_stage);
  }
  p.validate();
  r.label = j.value("label", std::string{});
  return r;
}

json to_json(const SampleSet& s) {
  json entries = json::array();
  for (const auto& e : s.entries) entries.push_back({e.energy, e.multiplicity, spins_to_string(e.spins)});
  return {{"n", s.n}, {"entries", std::move(entries)}};
}

SampleSet sample_set_from_json(const json& j) {
  SampleSet s;
  s.n = j.at("n").get<std::size_t>();
  for (const auto& t : j.at("entries")) {
    SampleEntry e{spins_from_string(t.at(2).get<std::string>()), t.at(0).get<double>(), t.at(1).get<std::uint64_t>()};
    if (e.spins.size() != s.n) throw DimensionError("result entry length does not match n");
    s.entries.push_back(std::move(e));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Service

namespace {

using Clock = std::chrono::system_clock;

std::string epoch_millis(Clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  return std::to_string(ms);
}

struct JobRecord {
  std::string id;
  JobState state = JobState::queued;
  JobRequest request;
  Clock::time_point submitted_at;
  std::optional<Clock::time_point> finished_at;
  std::optional<SampleSet> result;
  std::string error;
};

json error_body(const std::string& msg) { return {{"error", msg}}; }

bool authorized(const httplib::Request& req) {
  const std::string h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  return h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  httplib::Server server;
  int bound_port = -1;
  std::thread listener;

  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;
  std::uint64_t next_id = 1;
  std::unordered_map<std::string, JobRecord> jobs;
  std::deque<std::string> arrival;  // eviction order
  std::unordered_map<std::string, std::string> by_key;
  std::deque<std::string> pending;
  std::vector<std::thread> workers;

  explicit Impl(ServiceConfig c) : config(std::move(c)) {
    if (config.workers == 0) throw ConfigError("service needs at least one worker");
    if (config.capacity == 0) throw ConfigError("service capacity must be positive");
    routes();
    for (std::size_t w = 0; w < config.workers; ++w) workers.emplace_back([this] { work(); });
  }

  ~Impl() {
    shutdown();
    {
      std::lock_guard lock(mu);
      stopping = true;
    }
    cv.notify_all();
    for (auto& t : workers) t.join();
  }

  void shutdown() {
    server.stop();
    if (listener.joinable()) listener.join();
  }

  json status(const JobRecord& r) const {
    json j = {{"id", r.id}, {"state", to_string(r.state)}, {"submitted_at", epoch_millis(r.submitted_at)}};
    if (!r.request.label.empty()) j["label"] = r.request.label;
    if (r.finished_at) j["finished_at"] = epoch_millis(*r.finished_at);
    if (r.result) j["result"] = to_json(*r.result);
    if (r.state == JobState::failed) j["error"] = r.error;
    return j;
  }

  void evict_locked() {
    while (jobs.size() > config.capacity && !arrival.empty()) {
      const std::string victim = arrival.front();
      arrival.pop_front();
      jobs.erase(victim);
      std::erase_if(by_key, [&](const auto& kv) { return kv.second == victim; });
    }
  }

  void routes() {
    server.Post("/v1/ising/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) {
        res.status = 401;
        res.set_content(error_body("missing or invalid bearer token").dump(), "application/json");
        return;
      }
      JobRequest request;
      try {
        request = job_request_from_json(json::parse(req.body));
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(error_body(e.what()).dump(), "application/json");
        return;
      }
      const std::string key = req.get_header_value("Idempotency-Key");
      std::unique_lock lock(mu);
      if (!key.empty()) {
        if (auto it = by_key.find(key); it != by_key.end()) {
          res.status = 202;
          res.set_content(json{{"id", it->second}, {"state", to_string(jobs.at(it->second).state)}}.dump(),
                          "application/json");
          return;
        }
      }
      std::ostringstream id;
      id << "job-" << std::hex << next_id++;
      JobRecord rec{id.str(), JobState::queued, std::move(request), Clock::now(), {}, {}, {}};
      jobs.emplace(rec.id, std::move(rec));
      arrival.push_back(id.str());
      if (!key.empty()) by_key[key] = id.str();
      pending.push_back(id.str());
      evict_locked();
      lock.unlock();
      cv.notify_one();
      res.status = 202;
      res.set_content(json{{"id", id.str()}, {"state", "queued"}}.dump(), "application/json");
    });

    server.Get(R"(/v1/ising/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) {
        res.status = 401;
        res.set_content(error_body("missing or invalid bearer token").dump(), "application/json");
        return;
      }
      std::lock_guard lock(mu);
      auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) {
        res.status = 404;
        res.set_content(error_body("job not found").dump(), "application/json");
        return;
      }
      res.status = 200;
      res.set_content(status(it->second).dump(), "application/json");
    });
  }

  void work() {
    for (;;) {
      std::string id;
      JobRequest request;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [this] { return stopping || !pending.empty(); });
        if (stopping) return;
        id = pending.front();
        pending.pop_front();
        auto it = jobs.find(id);
        if (it == jobs.end()) continue;  // evicted before it ran
        request = it->second.request;
      }
      if (config.queue_latency.count() > 0) std::this_thread::sleep_for(config.queue_latency);
      {
        std::lock_guard lock(mu);
        auto it = jobs.find(id);
        if (it == jobs.end()) continue;
        it->second.state = JobState::running;
      }

      std::optional<SampleSet> result;
      std::string error;
      try {
        if (config.inject_failure && config.inject_failure(request)) throw Error("injected failure");
        result = simulated_anneal(request.problem, request.params);
      } catch (const std::exception& e) {
        error = e.what();
      }

      std::lock_guard lock(mu);
      auto it = jobs.find(id);
      if (it == jobs.end()) continue;
      it->second.finished_at = Clock::now();
      if (result) {
        it->second.result = std::move(result);
        it->second.state = JobState::done;
      } else {
        it->second.error = error;
        it->second.state = JobState::failed;
      }
    }
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->bound_port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->bound_port < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return impl_->bound_port;
}

void Service::start() {
  if (impl_->bound_port < 0) throw Error("service is not bound");
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::run() {
  if (impl_->bound_port < 0) throw Error("service is not bound");
  impl_->server.listen_after_bind();
}

void Service::stop() { impl_->shutdown(); }

int Service::port() const { return impl_->bound_port; }

// ---------------------------------------------------------------------------
// Client

ClientConfig ClientConfig::from_env() {
  ClientConfig c;
  if (const char* url = std::getenv("KPP_BASE_URL"); url && *url) c.base_url = url;
  if (const char* tok = std::getenv("KPP_API_TOKEN")) c.auth_token = tok;
  return c;
}

void ClientConfig::validate() const {
  if (base_url.empty()) throw ConfigError("base_url is empty");
  if (!(poll_interval_seconds > 0.0)) throw ConfigError("poll_interval must be positive");
  if (max_polls == 0) throw ConfigError("max_polls must be at least 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be positive");
}

namespace {

httplib::Client make_client(const ClientConfig& c) {
  httplib::Client cli(c.base_url);
  const auto usec = static_cast<long>(c.timeout_seconds * 1e6);
  cli.set_connection_timeout(usec / 1000000, usec % 1000000);
  cli.set_read_timeout(usec / 1000000, usec % 1000000);
  cli.set_write_timeout(usec / 1000000, usec % 1000000);
  return cli;
}

httplib::Headers auth_headers(const ClientConfig& c) {
  httplib::Headers h;
  if (!c.auth_token.empty()) h.emplace("Authorization", "Bearer " + c.auth_token);
  return h;
}

std::string random_key() {
  std::random_device rd;
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 4; ++i) os << rd();
  return os.str();
}

std::string server_message(const httplib::Result& res) {
  try {
    return json::parse(res->body).value("error", res->body);
  } catch (const std::exception&) {
    return res->body;
  }
}

}  // namespace

std::string submit_job(const ClientConfig& c, const JobRequest& r, std::string request_key) {
  c.validate();
  if (request_key.empty()) request_key = random_key();
  auto cli = make_client(c);
  auto headers = auth_headers(c);
  headers.emplace("Idempotency-Key", request_key);
  const std::string body = to_json(r).dump();

  for (std::size_t attempt = 0;; ++attempt) {
    auto res = cli.Post("/v1/ising/jobs", headers, body, "application/json");
    if (!res) {
      if (attempt < c.max_retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
        continue;
      }
      throw NetworkError("submit failed: " + httplib::to_string(res.error()));
    }
    if (res->status == 401) throw AuthError(server_message(res));
    if (res->status != 202) {
      throw RemoteJobError("submit rejected (" + std::to_string(res->status) + "): " + server_message(res));
    }
    return json::parse(res->body).at("id").get<std::string>();
  }
}

json fetch_job(const ClientConfig& c, const std::string& id) {
  c.validate();
  auto cli = make_client(c);
  for (std::size_t attempt = 0;; ++attempt) {
    auto res = cli.Get("/v1/ising/jobs/" + id, auth_headers(c));
    if (!res) {
      if (attempt < c.max_retries) continue;
      throw NetworkError("poll failed: " + httplib::to_string(res.error()));
    }
    if (res->status == 401) throw AuthError(server_message(res));
    if (res->status == 404) throw RemoteJobError("job " + id + ": " + server_message(res));
    if (res->status != 200) throw RemoteJobError("poll failed (" + std::to_string(res->status) + ")");
    return json::parse(res->body);
  }
}

SampleSet await_result(const ClientConfig& c, const std::string& id) {
  c.validate();
  const auto interval = std::chrono::duration<double>(c.poll_interval_seconds);
  for (std::size_t poll = 0; poll < c.max_polls; ++poll) {
    const json status = fetch_job(c, id);
    switch (job_state_from_string(status.at("state").get<std::string>())) {
      case JobState::done: return sample_set_from_json(status.at("result"));
      case JobState::failed: throw RemoteJobError(status.value("error", std::string("job failed")));
      default: break;
    }
    std::this_thread::sleep_for(interval);
  }
  throw TimeoutError("job " + id + " not finished after " + std::to_string(c.max_polls) + " polls");
}

}  // namespace kpp::cim
