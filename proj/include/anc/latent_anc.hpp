#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "anc/anc_core.hpp"
#include "anc/neural.hpp"

namespace anc {

enum class NormScheme { data_normalized, latent_normalized };
enum class DenominatorMode { blockend, persample };

NormScheme scheme_from_name(const std::string& name);
std::string scheme_name(NormScheme s);

struct LatentConfig {
  NormScheme scheme = NormScheme::latent_normalized;
  double mu_z = 0.1;
  double epsilon = 1e-8;
  DenominatorMode denominator = DenominatorMode::blockend;
};

// FxLMS constrained to the decoder manifold: active weights are always
// decode(z) (rescaled into physical units); the block gradient is pulled
// into latent space through the decoder VJP.
class LatentController : public Controller {
 public:
  // z0 = encode(0-filter) via the mean head; dataset_scale is the dataset
  // normalization scalar (stored row = physical row * scale).
  LatentController(std::shared_ptr<const AutoencoderModel> model, double dataset_scale,
                   const LatentConfig& cfg);

  std::span<const double> weights() const override { return w_phys_; }
  void block_update(std::span<const double> e_block, const XhatBlock& xhat) override;

  const std::vector<double>& latent() const { return z_; }
  void set_latent(std::vector<double> z);

 private:
  void refresh_weights();

  std::shared_ptr<const AutoencoderModel> model_;
  double scale_;
  LatentConfig cfg_;
  std::vector<double> z_;
  std::vector<double> w_phys_;
  HalfTrace dec_trace_;
};

std::vector<double> init_latent(const AutoencoderModel& model);

// Largest grid value whose probe trials never push block MSE above 10x the
// ANC-OFF level; zero candidates are excluded as degenerate.
struct TuneScenario {
  PathSchedule p_schedule;
  ImpulseResponse g, g_hat;
  NoiseSource noise;
  std::size_t n_blocks = 150;
  std::size_t block_size = 100;
  std::vector<std::uint64_t> probe_seeds{1, 2};
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(double step_size)>;

double tune_step_size(const ControllerFactory& factory, const TuneScenario& scenario,
                      std::vector<double> grid);

// Controller config document:
// {"scheme":"data|latent","mu_z":...,"epsilon":...,"model":"path",
//  "denominator_mode":"blockend|persample"}
LatentConfig parse_controller_config(const std::string& json_text, std::string* model_path);

}  // namespace anc
