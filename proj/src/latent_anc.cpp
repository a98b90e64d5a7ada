#include "anc/latent_anc.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "anc/errors.hpp"

namespace anc {

NormScheme scheme_from_name(const std::string& name) {
  if (name == "data" || name == "data_normalized") return NormScheme::data_normalized;
  if (name == "latent" || name == "latent_normalized") return NormScheme::latent_normalized;
  throw ConfigError("unknown normalization scheme: " + name);
}

std::string scheme_name(NormScheme s) {
  return s == NormScheme::data_normalized ? "data" : "latent";
}

std::vector<double> init_latent(const AutoencoderModel& model) {
  const std::vector<double> zero(model.filter_len, 0.0);
  return encode_mean(model, zero);
}

LatentController::LatentController(std::shared_ptr<const AutoencoderModel> model,
                                   double dataset_scale, const LatentConfig& cfg)
    : model_(std::move(model)), scale_(dataset_scale), cfg_(cfg) {
  if (!(cfg_.mu_z > 0.0)) throw ConfigError("mu_z must be > 0");
  if (!(cfg_.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  z_ = init_latent(*model_);
  refresh_weights();
}

void LatentController::set_latent(std::vector<double> z) {
  z_ = std::move(z);
  refresh_weights();
}

void LatentController::refresh_weights() {
  w_phys_ = decode(*model_, z_, &dec_trace_);
  for (auto& v : w_phys_) v /= scale_;
}

void LatentController::block_update(std::span<const double> e_block, const XhatBlock& xhat) {
  const std::size_t b = e_block.size();
  const std::size_t len = model_->filter_len;
  if (xhat.filter_len != len || xhat.rows() != b) {
    throw std::invalid_argument("latent block update: shape mismatch");
  }
  const std::size_t k = model_->latent_dim;
  std::vector<double> step(k, 0.0);

  // x^ and e are physical quantities; 1/scale maps the weight gradient into
  // the model's (normalized) filter units before the VJP.
  const double to_model = 1.0 / scale_;

  if (cfg_.scheme == NormScheme::data_normalized) {
    std::vector<double> gbar(len, 0.0);
    for (std::size_t n = 0; n < b; ++n) {
      const auto row = xhat.row(n);
      double norm2 = 0.0;
      for (double v : row) norm2 += v * v;
      const double coef = e_block[n] / (cfg_.epsilon + norm2);
      for (std::size_t i = 0; i < len; ++i) gbar[i] += coef * row[i];
    }
    for (auto& v : gbar) v *= to_model / static_cast<double>(b);
    const auto u = decode_backward(*model_, dec_trace_, gbar, nullptr);
    for (std::size_t i = 0; i < k; ++i) step[i] = cfg_.mu_z * u[i];
  } else if (cfg_.denominator == DenominatorMode::blockend) {
    std::vector<double> gbar(len, 0.0);
    for (std::size_t n = 0; n < b; ++n) {
      const auto row = xhat.row(n);
      for (std::size_t i = 0; i < len; ++i) gbar[i] += e_block[n] * row[i];
    }
    for (auto& v : gbar) v *= to_model / static_cast<double>(b);
    const auto u = decode_backward(*model_, dec_trace_, gbar, nullptr);

    const auto last = xhat.row(b - 1);
    std::vector<double> xc(last.begin(), last.end());
    for (auto& v : xc) v *= to_model;
    const auto jx = decode_backward(*model_, dec_trace_, xc, nullptr);
    double denom = cfg_.epsilon;
    for (double v : jx) denom += v * v;
    for (std::size_t i = 0; i < k; ++i) step[i] = cfg_.mu_z * u[i] / denom;
  } else {
    // per-sample denominators, averaged (exact Eq.-style update in the B=1 limit)
    std::vector<double> gn(len);
    for (std::size_t n = 0; n < b; ++n) {
      const auto row = xhat.row(n);
      for (std::size_t i = 0; i < len; ++i) gn[i] = e_block[n] * row[i] * to_model;
      const auto u = decode_backward(*model_, dec_trace_, gn, nullptr);
      for (std::size_t i = 0; i < len; ++i) gn[i] = row[i] * to_model;
      const auto jx = decode_backward(*model_, dec_trace_, gn, nullptr);
      double denom = cfg_.epsilon;
      for (double v : jx) denom += v * v;
      for (std::size_t i = 0; i < k; ++i) step[i] += cfg_.mu_z * u[i] / (denom * static_cast<double>(b));
    }
  }

  for (std::size_t i = 0; i < k; ++i) {
    z_[i] -= step[i];
    if (!std::isfinite(z_[i])) throw NumericError("non-finite latent state", 0);
  }
  refresh_weights();
}

double tune_step_size(const ControllerFactory& factory, const TuneScenario& scenario,
                      std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    const double mu = *it;
    if (mu <= 0.0) continue;  // zero/negative candidates are degenerate, never selected
    bool stable = true;
    for (const auto seed : scenario.probe_seeds) {
      NoiseSource noise = scenario.noise;
      noise.seed = seed;
      auto ctrl = factory(mu);
      ErrorTrace off;
      try {
        const auto trace = run_anc_trial(scenario.p_schedule, scenario.g, scenario.g_hat, noise,
                                         *ctrl, scenario.n_blocks, scenario.block_size, &off);
        for (std::size_t bidx = 0; bidx < trace.block_mse.size(); ++bidx) {
          if (trace.block_mse[bidx] > 10.0 * off.block_mse[bidx] + 1e-12) {
            stable = false;
            break;
          }
        }
      } catch (const NumericError&) {
        stable = false;
      }
      if (!stable) break;
    }
    if (stable) return mu;
  }
  throw TuningError("no stable step size in the candidate grid");
}

LatentConfig parse_controller_config(const std::string& json_text, std::string* model_path) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  LatentConfig cfg;
  cfg.scheme = scheme_from_name(j.at("scheme").get<std::string>());
  cfg.mu_z = j.at("mu_z").get<double>();
  cfg.epsilon = j.value("epsilon", 1e-8);
  const std::string dm = j.value("denominator_mode", "blockend");
  if (dm == "blockend") {
    cfg.denominator = DenominatorMode::blockend;
  } else if (dm == "persample") {
    cfg.denominator = DenominatorMode::persample;
  } else {
    throw ConfigError("unknown denominator_mode: " + dm);
  }
  if (model_path) *model_path = j.value("model", "");
  return cfg;
}

}  // namespace anc
