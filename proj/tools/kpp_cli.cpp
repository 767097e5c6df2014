#include "kpp_cli.hpp"

#include <signal.h>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "kpp/active_select.hpp"
#include "kpp/backend.hpp"
#include "kpp/cim.hpp"
#include "kpp/ebm.hpp"
#include "kpp/errors.hpp"
#include "kpp/problem_io.hpp"
#include "kpp/random.hpp"
#include "kpp/rerank.hpp"
#include "kpp/sampling.hpp"

namespace kpp::cli {
namespace {

using nlohmann::json;

// Raised for flag combinations CLI11 cannot express; maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

void emit(const std::string& path, std::ostream& out, const std::string& text) {
  if (path.empty()) {
    out << text;
    out.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << text;
}

// State shared by every subcommand: where results go and what ends up in
// the run manifest.
struct Run {
  std::string out_path;
  std::string manifest_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  json extra = json::object();
};

void require_seed(const CLI::App* sub, const char* why) {
  if (sub->get_option("--seed")->count() == 0) throw UsageError(std::string("--seed is required ") + why);
}

std::optional<std::size_t> top_k_flag(std::size_t k) {
  if (k == 0) return std::nullopt;
  return k;
}

IsingProblem as_ising(const AnyProblem& p) {
  if (const auto* q = std::get_if<QuboProblem>(&p)) return qubo_to_ising(*q);
  return std::get<IsingProblem>(p);
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) throw UsageError("invalid index '" + tok + "' in --candidates");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

json resolved_config(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      cfg[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else if (!opt->get_default_str().empty()) {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

void write_manifest(const std::string& subcommand, const CLI::App* sub, const Run& run, double seconds) {
  json m;
  m["subcommand"] = subcommand;
  m["tool_version"] = kToolVersion;
  m["config"] = resolved_config(sub);
  m["seed"] = run.seed ? json(*run.seed) : json(nullptr);
  json digests = json::object();
  for (const auto& path : run.inputs) digests[path] = "sha256:" + sha256_hex(slurp(path));
  m["input_digests"] = digests;
  m["wall_clock_seconds"] = seconds;
  if (!run.extra.empty()) m["summary"] = run.extra;

  std::string path = run.manifest_path;
  if (path.empty()) path = run.out_path.empty() ? "kpp-" + subcommand + ".manifest.json" : run.out_path + ".manifest.json";
  std::ofstream f(path);
  if (!f) throw Error("cannot write manifest '" + path + "'");
  f << m.dump(2) << '\n';
}

rerank::SpinEncoderConfig encoder_from(const std::string& mode, std::size_t bits, std::size_t n_spins, std::size_t vocab,
                                       std::uint64_t projection_seed) {
  rerank::SpinEncoderConfig e;
  e.mode = mode == "random_projection" ? rerank::EncodingMode::random_projection : rerank::EncodingMode::token_bits;
  e.bits_per_token = bits;
  e.n_spins = n_spins;
  e.vocab_size = vocab;
  e.projection_seed = projection_seed;
  return e;
}

struct EncoderFlags {
  std::string mode = "token_bits";
  std::size_t bits = 8;
  std::size_t n_spins = 16;
  std::size_t vocab = 256;
  std::uint64_t projection_seed = 0;

  void attach(CLI::App* sub) {
    sub->add_option("--encoding", mode, "Sequence encoding")->check(CLI::IsMember({"token_bits", "random_projection"}));
    sub->add_option("--bits-per-token", bits, "Bits per token id (token_bits)");
    sub->add_option("--n-spins", n_spins, "Output width (random_projection)");
    sub->add_option("--vocab-size", vocab, "Vocabulary bound (random_projection)");
    sub->add_option("--projection-seed", projection_seed, "Projection matrix seed");
  }
  rerank::SpinEncoderConfig config() const { return encoder_from(mode, bits, n_spins, vocab, projection_seed); }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ising sampling, Boltzmann machine training and energy-based selection toolkit", "kpp"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();

  Run r;
  auto common = [&r](CLI::App* sub) {
    sub->set_help_flag("--help", "Print this help message and exit");
    sub->add_option("--manifest", r.manifest_path, "Manifest path (default: <out>.manifest.json)");
  };

  // solve
  std::string in_path;
  std::string backend_name = "sa";
  std::uint64_t seed = 0;
  std::size_t reads = 2000;
  auto* solve = app.add_subcommand("solve", "Minimize a QUBO or Ising problem");
  common(solve);
  solve->add_option("--in", in_path, "Problem file")->required()->check(CLI::ExistingFile);
  solve->add_option("--backend", backend_name, "Solver")->check(CLI::IsMember({"exact", "sa"}));
  solve->add_option("--seed", seed, "RNG seed (required for sa)");
  solve->add_option("--reads", reads, "Annealing reads");
  solve->add_option("--out", r.out_path, "Output file (default: stdout)");

  // sample
  std::size_t top_k = 100;
  double beta = 1.0;
  std::string url;
  double t_initial = 0.0;
  AnnealSchedule schedule;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  auto* sample_cmd = app.add_subcommand("sample", "Draw samples from a problem with a chosen backend");
  common(sample_cmd);
  sample_cmd->add_option("--in", in_path, "Problem file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--backend", backend_name, "sa, fixed, exact or cim")
      ->check(CLI::IsMember({"sa", "fixed", "fixed_temp", "exact", "cim", "cim_remote"}));
  sample_cmd->add_option("--reads", reads, "Number of reads");
  sample_cmd->add_option("--seed", seed, "RNG seed")->required();
  sample_cmd->add_option("--top-k", top_k, "Keep the k lowest distinct states (0 keeps all)");
  sample_cmd->add_option("--beta", beta, "Inverse temperature; for sa and cim switches to sampling mode");
  sample_cmd->add_option("--t-initial", t_initial, "Initial anneal temperature (default: auto)");
  sample_cmd->add_option("--t-final", schedule.t_final, "Final anneal temperature");
  sample_cmd->add_option("--decay", schedule.decay, "Geometric cooling factor");
  sample_cmd->add_option("--sweeps-per-stage", schedule.sweeps_per_stage, "Sweeps per temperature");
  sample_cmd->add_option("--burn-in", burn_in, "Burn-in sweeps (fixed)");
  sample_cmd->add_option("--thin", thin, "Sweeps between kept states (fixed)");
  sample_cmd->add_option("--url", url, "Service base URL (cim; default from KPP_BASE_URL)");
  sample_cmd->add_option("--out", r.out_path, "Output file (default: stdout)");

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  cim::ServiceConfig service_cfg;
  long latency_ms = 0;
  std::string port_file;
  auto* serve = app.add_subcommand("serve", "Run the mock Ising machine job service until interrupted");
  common(serve);
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free port)");
  serve->add_option("--workers", service_cfg.workers, "Worker threads");
  serve->add_option("--capacity", service_cfg.capacity, "Jobs kept in memory");
  serve->add_option("--latency-ms", latency_ms, "Artificial queue delay per job");
  serve->add_option("--port-file", port_file, "Write the bound port to this file");

  // train-rbm
  std::string data_path;
  std::size_t bas_side = 0;
  std::size_t hidden = 6;
  ebm::TrainConfig train_cfg;
  std::string metrics_path;
  auto* train_rbm = app.add_subcommand("train-rbm", "Train an RBM by maximum likelihood");
  common(train_rbm);
  auto* data_opt = train_rbm->add_option("--data", data_path, "Binary dataset, one 0/1 string per line")
                       ->check(CLI::ExistingFile);
  train_rbm->add_option("--bas", bas_side, "Use the bars-and-stripes set of this side instead")->excludes(data_opt);
  train_rbm->add_option("--hidden", hidden, "Hidden units");
  train_rbm->add_option("--epochs", train_cfg.epochs, "Training epochs");
  train_rbm->add_option("--lr", train_cfg.learning_rate, "Learning rate");
  train_rbm->add_option("--batch-size", train_cfg.batch_size, "Minibatch size (0 = full batch)");
  train_rbm->add_option("--backend", backend_name, "Negative-phase backend")
      ->check(CLI::IsMember({"sa", "fixed", "fixed_temp", "exact", "cim", "cim_remote"}));
  train_rbm->add_option("--reads", reads, "Reads per negative phase");
  train_rbm->add_option("--seed", seed, "RNG seed")->required();
  train_rbm->add_option("--init-scale", train_cfg.weight_init_scale, "Std-dev of initial weights");
  train_rbm->add_option("--url", url, "Service base URL (cim)");
  train_rbm->add_option("--out", r.out_path, "Trained parameters as JSON (default: stdout)");
  train_rbm->add_option("--metrics", metrics_path, "Per-epoch metrics, JSON lines (default: stderr)");

  // select-batch
  std::string embeddings_path;
  select::SelectionConfig sel_cfg;
  double lambda = 0.0;
  std::string solver_name = "auto";
  std::string candidates_text;
  auto* select_cmd = app.add_subcommand("select-batch", "Pick an uncertain and diverse batch from an embedding store");
  common(select_cmd);
  select_cmd->add_option("--embeddings", embeddings_path, "Embedding store file")->required()->check(CLI::ExistingFile);
  select_cmd->add_option("--k", sel_cfg.k, "Batch size");
  select_cmd->add_option("--gamma", sel_cfg.gamma, "Redundancy weight");
  select_cmd->add_option("--lambda", lambda, "Cardinality penalty (default: safe bound)");
  select_cmd->add_option("--solver", solver_name, "auto, exact or anneal")->check(CLI::IsMember({"auto", "exact", "anneal"}));
  select_cmd->add_option("--reads", reads, "Annealing reads");
  select_cmd->add_option("--seed", seed, "RNG seed (required when annealing)");
  select_cmd->add_option("--candidates", candidates_text, "Comma-separated store indices (default: all)");
  select_cmd->add_option("--out", r.out_path, "Output file (default: stdout)");

  // rerank
  std::string pool_path;
  std::string qbm_path;
  EncoderFlags enc;
  auto* rerank_cmd = app.add_subcommand("rerank", "Reweight candidate sequences by a Boltzmann machine energy");
  common(rerank_cmd);
  rerank_cmd->add_option("--pool", pool_path, "Candidate sequences, one per line")->required()->check(CLI::ExistingFile);
  rerank_cmd->add_option("--qbm", qbm_path, "Boltzmann machine parameters (JSON)")->required()->check(CLI::ExistingFile);
  enc.attach(rerank_cmd);
  rerank_cmd->add_option("--seed", seed, "RNG seed for the resampling draw")->required();
  rerank_cmd->add_option("--out", r.out_path, "Output file (default: stdout)");

  // train-nce
  rerank::NceConfig nce_cfg;
  std::string init_path;
  auto* nce_cmd = app.add_subcommand("train-nce", "Train a Boltzmann machine energy by noise-contrastive estimation");
  common(nce_cmd);
  nce_cmd->add_option("--data", data_path, "Data sequences")->required()->check(CLI::ExistingFile);
  nce_cmd->add_option("--pool", pool_path, "Proposal pool sequences (sampled uniformly)")->required()->check(CLI::ExistingFile);
  nce_cmd->add_option("--init", init_path, "Initial parameters (JSON; default: zeros)")->check(CLI::ExistingFile);
  nce_cmd->add_option("--steps", nce_cfg.steps, "Gradient steps");
  nce_cmd->add_option("--lr", nce_cfg.learning_rate, "Learning rate");
  nce_cmd->add_option("--positives", nce_cfg.positives_per_step, "Data samples per step");
  nce_cmd->add_option("--negatives", nce_cfg.negatives_per_step, "Proposal samples per step");
  nce_cmd->add_option("--seed", seed, "RNG seed")->required();
  enc.attach(nce_cmd);
  nce_cmd->add_option("--out", r.out_path, "Trained parameters as JSON (default: stdout)");
  nce_cmd->add_option("--metrics", metrics_path, "Objective per step, JSON lines (default: none)");

  // gen-data
  std::string kind = "ising";
  std::size_t size = 16;
  double scale = 1.0;
  std::size_t clusters = 4;
  std::size_t dim = 8;
  double spread = 0.1;
  std::size_t seq_length = 4;
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic inputs for the other subcommands");
  common(gen);
  gen->add_option("--kind", kind, "ising, qubo, bas, clusters or pool")
      ->check(CLI::IsMember({"ising", "qubo", "bas", "clusters", "pool"}));
  gen->add_option("--size", size, "Variables, side length, points or sequences depending on --kind");
  gen->add_option("--scale", scale, "Coefficient range (ising, qubo)");
  gen->add_option("--clusters", clusters, "Cluster count (clusters)");
  gen->add_option("--dim", dim, "Embedding dimension (clusters)");
  gen->add_option("--spread", spread, "Cluster jitter (clusters)");
  gen->add_option("--length", seq_length, "Tokens per sequence (pool)");
  gen->add_option("--vocab-size", enc.vocab, "Token ids drawn below this (pool)");
  gen->add_option("--seed", seed, "RNG seed")->required();
  gen->add_option("--out", r.out_path, "Output file (default: stdout)");

  // bench
  std::vector<std::size_t> sizes{12};
  std::size_t instances = 10;
  std::vector<std::string> backends{"sa", "fixed", "exact"};
  auto* bench = app.add_subcommand("bench", "Compare backends on random instances against brute-force minima");
  common(bench);
  bench->add_option("--sizes", sizes, "Problem sizes")->delimiter(',');
  bench->add_option("--instances", instances, "Random instances per size");
  bench->add_option("--backends", backends, "Backends to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"sa", "fixed", "fixed_temp", "exact"}));
  bench->add_option("--reads", reads, "Reads per run");
  bench->add_option("--seed", seed, "RNG seed")->required();
  bench->add_option("--out", r.out_path, "Report file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  if (const auto* opt = sub->get_option_no_throw("--seed"); opt && opt->count() > 0) r.seed = seed;

  try {
    if (sub == solve) {
      r.inputs.push_back(in_path);
      AnyProblem prob = read_problem_file(in_path);
      IsingProblem ising = as_ising(prob);
      double energy = 0.0;
      SpinConfig best;
      if (backend_name == "exact") {
        ExactDistribution d = exact_enumerate(ising, 1.0);
        energy = d.min_energy;
        best = d.config(d.argmin);
      } else {
        require_seed(sub, "for --backend sa");
        SamplerConfig sc;
        sc.reads = reads;
        sc.seed = seed;
        sc.top_k = 1;
        SampleSet s = simulated_anneal(ising, sc);
        energy = s.lowest().energy;
        best = s.lowest().spins;
      }
      std::string assignment;
      if (std::holds_alternative<QuboProblem>(prob)) {
        for (auto b : to_bits(best)) assignment += b ? '1' : '0';
      } else {
        assignment = spins_to_string(best);
      }
      r.extra["energy"] = energy;
      emit(r.out_path, out, "energy " + format_double(energy) + "\nargmin " + assignment + "\n");
    } else if (sub == sample_cmd) {
      r.inputs.push_back(in_path);
      IsingProblem ising = as_ising(read_problem_file(in_path));
      Backend b = parse_backend(backend_name);
      BackendConfig bc;
      bc.sampler.reads = reads;
      bc.sampler.seed = seed;
      bc.sampler.top_k = top_k_flag(top_k);
      if (sub->get_option("--beta")->count() > 0 || b == Backend::fixed_temp || b == Backend::exact) {
        bc.sampler.beta = beta;
      }
      bc.sampler.schedule = schedule;
      if (sub->get_option("--t-initial")->count() > 0) bc.sampler.schedule.t_initial = t_initial;
      bc.burn_in = burn_in;
      bc.thin = thin;
      if (b == Backend::cim_remote) {
        cim::ClientConfig cc = cim::ClientConfig::from_env();
        if (!url.empty()) cc.base_url = url;
        bc.remote = cc;
      }
      SampleSet s = sample(b, ising, bc);
      r.extra["distinct"] = s.entries.size();
      if (!s.empty()) r.extra["lowest_energy"] = s.lowest().energy;
      emit(r.out_path, out, format_sample_set(s, reads, seed));
    } else if (sub == serve) {
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      service_cfg.queue_latency = std::chrono::milliseconds(latency_ms);
      cim::Service svc(service_cfg);
      int bound = svc.bind(host, port);
      if (!port_file.empty()) emit(port_file, out, std::to_string(bound) + "\n");
      out << "listening on " << host << ':' << bound << std::endl;
      svc.start();
      int sig = 0;
      sigwait(&set, &sig);
      svc.stop();
      r.extra["port"] = bound;
      r.extra["signal"] = sig;
    } else if (sub == train_rbm) {
      std::vector<BinaryConfig> data;
      if (!data_path.empty()) {
        r.inputs.push_back(data_path);
        data = ebm::read_dataset(data_path);
      } else if (bas_side > 0) {
        data = ebm::bars_and_stripes(bas_side, seed);
      } else {
        throw UsageError("one of --data or --bas is required");
      }
      if (data.empty()) throw EmptyBatchError("dataset is empty");
      train_cfg.backend = parse_backend(backend_name);
      train_cfg.sampling.sampler.reads = reads;
      train_cfg.seed = seed;
      if (train_cfg.backend == Backend::cim_remote) {
        cim::ClientConfig cc = cim::ClientConfig::from_env();
        if (!url.empty()) cc.base_url = url;
        train_cfg.sampling.remote = cc;
      }
      ebm::RbmParams p0 = ebm::init_rbm(data.front().size(), hidden, train_cfg.weight_init_scale, seed);
      ebm::TrainResult res = ebm::train(p0, data, train_cfg);
      std::string lines;
      for (const auto& m : res.metrics) lines += ebm::metrics_line(m) + "\n";
      if (metrics_path.empty()) {
        err << lines;
      } else {
        emit(metrics_path, out, lines);
      }
      if (!res.metrics.empty() && res.metrics.back().nll) r.extra["final_nll"] = *res.metrics.back().nll;
      emit(r.out_path, out, ebm::to_json(res.params).dump(2) + "\n");
    } else if (sub == select_cmd) {
      r.inputs.push_back(embeddings_path);
      auto store = select::EmbeddingStore::load(embeddings_path);
      std::vector<std::size_t> cand;
      if (candidates_text.empty()) {
        for (std::size_t i = 0; i < store.size(); ++i) cand.push_back(i);
      } else {
        cand = parse_index_list(candidates_text);
      }
      sel_cfg.solver = select::parse_solver(solver_name);
      bool anneals = sel_cfg.solver == select::Solver::anneal ||
                     (sel_cfg.solver == select::Solver::automatic && cand.size() > select::kMaxExhaustiveCandidates);
      if (anneals) require_seed(sub, "when the annealing solver is used");
      if (sub->get_option("--lambda")->count() > 0) sel_cfg.lambda = lambda;
      sel_cfg.sampler.reads = reads;
      sel_cfg.sampler.seed = seed;
      auto res = select::select_batch(store, cand, sel_cfg);
      json j;
      j["chosen"] = res.chosen;
      j["ids"] = res.ids;
      j["objective"] = res.objective;
      j["diversity"] = res.diversity ? json(*res.diversity) : json(nullptr);
      r.extra = j;
      emit(r.out_path, out, j.dump() + "\n");
    } else if (sub == rerank_cmd) {
      r.inputs = {pool_path, qbm_path};
      auto pool = rerank::read_sequences(pool_path);
      auto qbm = ebm::bm_from_json(json::parse(slurp(qbm_path)));
      auto cands = rerank::make_candidates(pool, enc.config());
      auto w = rerank::residual_weights(cands, qbm);
      std::size_t chosen = rerank::resample_candidate(w, seed);
      std::string text;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        text += json{{"index", i}, {"energy", cands.items[i].energy}, {"weight", w[i]}}.dump() + "\n";
      }
      text += json{{"chosen", chosen}, {"tokens", cands.items[chosen].tokens}}.dump() + "\n";
      r.extra["chosen"] = chosen;
      emit(r.out_path, out, text);
    } else if (sub == nce_cmd) {
      r.inputs = {data_path, pool_path};
      auto data = rerank::read_sequences(data_path);
      auto pool = rerank::read_sequences(pool_path);
      if (data.empty()) throw EmptyBatchError("no data sequences");
      nce_cfg.seed = seed;
      nce_cfg.encoder = enc.config();
      std::size_t n = rerank::encode_binary(data.front(), nce_cfg.encoder).size();
      ebm::BmParams q0(n);
      if (!init_path.empty()) {
        r.inputs.push_back(init_path);
        q0 = ebm::bm_from_json(json::parse(slurp(init_path)));
      }
      auto res = rerank::train_nce(q0, data, rerank::uniform_pool_proposal(pool), nce_cfg);
      if (!metrics_path.empty()) {
        std::string lines;
        for (std::size_t i = 0; i < res.objective.size(); ++i) {
          lines += json{{"step", i}, {"objective", res.objective[i]}}.dump() + "\n";
        }
        emit(metrics_path, out, lines);
      }
      if (!res.objective.empty()) r.extra["final_objective"] = res.objective.back();
      emit(r.out_path, out, ebm::to_json(res.params).dump(2) + "\n");
    } else if (sub == gen) {
      std::string text;
      if (kind == "ising") {
        text = serialize_problem(random_ising(size, seed, scale));
      } else if (kind == "qubo") {
        text = serialize_problem(random_qubo(size, seed, scale));
      } else if (kind == "bas") {
        text = ebm::format_dataset(ebm::bars_and_stripes(size, seed));
      } else if (kind == "clusters") {
        text = select::clustered_store(size, clusters, dim, spread, seed).store.serialize();
      } else {
        Rng rng(seed);
        std::vector<rerank::TokenSequence> seqs(size, rerank::TokenSequence(seq_length));
        for (auto& s : seqs) {
          for (auto& t : s) t = static_cast<std::uint32_t>(rng.below(enc.vocab));
        }
        text = rerank::format_sequences(seqs);
      }
      emit(r.out_path, out, text);
    } else if (sub == bench) {
      std::string report;
      for (std::size_t n : sizes) {
        std::vector<IsingProblem> probs;
        std::vector<double> minima;
        for (std::size_t i = 0; i < instances; ++i) {
          probs.push_back(random_ising(n, Rng(seed, n * 1000003 + i).next()));
          minima.push_back(exact_enumerate(probs.back(), 1.0).min_energy);
        }
        for (const auto& bname : backends) {
          Backend b = parse_backend(bname);
          BackendConfig bc;
          bc.sampler.reads = reads;
          bc.sampler.top_k = 1;
          if (b != Backend::sa) bc.sampler.beta = 1.0;
          std::size_t hits = 0;
          double total = 0.0;
          for (std::size_t i = 0; i < instances; ++i) {
            bc.sampler.seed = Rng(seed, i).next();
            auto s0 = std::chrono::steady_clock::now();
            SampleSet s = sample(b, probs[i], bc);
            total += std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
            if (!s.empty() && s.lowest().energy <= minima[i] + 1e-9) ++hits;
          }
          json line{{"backend", to_string(b)},
                    {"n", n},
                    {"instances", instances},
                    {"reads", reads},
                    {"hit_rate", instances ? static_cast<double>(hits) / static_cast<double>(instances) : 0.0},
                    {"mean_runtime_s", instances ? total / static_cast<double>(instances) : 0.0}};
          report += line.dump() + "\n";
        }
      }
      emit(r.out_path, out, report);
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(name, sub, r, secs);
  } catch (const UsageError& e) {
    err << name << ": " << e.what() << "\nRun with --help for more information.\n";
    return 1;
  } catch (const std::exception& e) {
    err << "kpp " << name << ": error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace kpp::cli
