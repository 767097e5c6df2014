#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "kpp/cim.hpp"
#include "kpp/ising.hpp"
#include "kpp/sampling.hpp"

namespace kpp {

enum class Backend { sa, fixed_temp, exact, cim_remote };

/// Accepts "sa", "fixed_temp" (or "fixed"), "exact", "cim_remote" (or "cim").
Backend parse_backend(std::string_view name);
std::string to_string(Backend b);

/// Everything any backend may need. `sampler.reads` is the read budget for
/// every backend; `sampler.beta` (default 1) is the inverse temperature for
/// the fixed-temperature and exact backends.
struct BackendConfig {
  SamplerConfig sampler;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::optional<cim::ClientConfig> remote;
};

/// Uniform dispatch over the sampling backends. Top-K filtering, when
/// configured, is applied to every backend's output.
SampleSet sample(Backend backend, const IsingProblem& p, const BackendConfig& cfg);

}  // namespace kpp
