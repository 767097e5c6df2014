#include "kpp/backend.hpp"

#include "kpp/errors.hpp"

namespace kpp {

Backend parse_backend(std::string_view name) {
  if (name == "sa") return Backend::sa;
  if (name == "fixed_temp" || name == "fixed") return Backend::fixed_temp;
  if (name == "exact") return Backend::exact;
  if (name == "cim_remote" || name == "cim") return Backend::cim_remote;
  throw ConfigError("unknown backend '" + std::string(name) + "'");
}

std::string to_string(Backend b) {
  switch (b) {
    case Backend::sa: return "sa";
    case Backend::fixed_temp: return "fixed_temp";
    case Backend::exact: return "exact";
    case Backend::cim_remote: return "cim_remote";
  }
  return "unknown";
}

SampleSet sample(Backend backend, const IsingProblem& p, const BackendConfig& cfg) {
  cfg.sampler.validate();
  const double beta = cfg.sampler.beta.value_or(1.0);
  SampleSet out;
  switch (backend) {
    case Backend::sa:
      return simulated_anneal(p, cfg.sampler);
    case Backend::fixed_temp: {
      MetropolisConfig m;
      m.beta = beta;
      m.thin = cfg.thin;
      m.burn_in = cfg.burn_in;
      m.sweeps = cfg.sampler.reads * cfg.thin;
      m.seed = cfg.sampler.seed;
      out = metropolis_fixed_temperature(p, m);
      break;
    }
    case Backend::exact:
      if (p.n == 0) throw EmptyProblemError("problem has no variables");
      out = exact_sample_set(p, exact_enumerate(p, beta), cfg.sampler.reads);
      break;
    case Backend::cim_remote: {
      if (!cfg.remote) throw ConfigError("cim_remote backend needs a client configuration");
      if (p.n == 0) throw EmptyProblemError("problem has no variables");
      const std::string id = cim::submit_job(*cfg.remote, cim::JobRequest{p, cfg.sampler, {}});
      return cim::await_result(*cfg.remote, id);
    }
  }
  if (cfg.sampler.top_k) out = postprocess_topk(std::move(out), *cfg.sampler.top_k);
  return out;
}

}  // namespace kpp
