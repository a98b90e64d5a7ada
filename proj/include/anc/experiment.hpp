#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "anc/acoustics.hpp"
#include "anc/anc_core.hpp"
#include "anc/latent_anc.hpp"
#include "anc/metrics.hpp"
#include "anc/neural.hpp"
#include "anc/training.hpp"

namespace anc {

// JSON <-> config helpers shared by the CLI subcommands.
RoomSpec room_from_json(const nlohmann::json& j);
nlohmann::json room_to_json(const RoomSpec& r);
NoiseSource noise_from_json(const nlohmann::json& j);
Vec3 vec3_from_json(const nlohmann::json& j);

struct ModelSpec {
  std::string name;
  Variant variant = Variant::plain;
  bool mixup = false;
  std::size_t hidden_dim = 256;
  std::size_t latent_dim = 32;
  std::size_t epochs = 500;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t mixup_count = 256;
  double kernel_variance = 0.01;
  double info_alpha = 1.0;
  double info_lambda = 1000.0;
  std::uint64_t seed = 0;
};

struct ControllerSpec {
  std::string name;
  enum class Type { fxlms, off, latent } type = Type::fxlms;
  // latent only
  std::string model;  // pipeline model name or file path
  NormScheme scheme = NormScheme::latent_normalized;
  DenominatorMode denominator = DenominatorMode::blockend;
  // step size; nullopt = tune from the grid
  std::optional<double> step_size;
};

struct ExperimentConfig {
  RoomSpec room;
  Vec3 mic{4.5, 3.0, 1.5};
  Vec3 secondary{3.0, 2.5, 1.5};
  Vec3 segment_a{1.5, 1.0, 1.0};
  Vec3 segment_b{3.0, 2.0, 2.0};
  std::size_t onset_trim = 0;
  NoiseSource noise;
  std::size_t n_trials = 50;
  std::size_t n_blocks = 300;
  std::size_t switch_block = 100;
  std::size_t block_size = 100;
  std::size_t steady_window = 40;
  double rho = 0.4;
  double epsilon = 1e-8;
  std::uint64_t master_seed = 0;
  int threads = 0;
  std::string out_dir = "out";

  std::vector<double> fxlms_grid{0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0};
  std::vector<double> latent_grid{0.05, 0.075, 0.1, 0.15, 0.2, 0.25, 0.3};
  std::vector<double> data_grid{5, 10, 20, 35, 50, 70, 100};

  // pipeline: dataset + models built (or loaded from out_dir) before trials
  std::optional<DatasetGenConfig> dataset_gen;
  std::string dataset_path;  // load instead of generating when set
  std::vector<ModelSpec> models;

  std::vector<ControllerSpec> controllers;
  bool acceptance = false;

  nlohmann::json echo;  // verbatim input document, echoed into the report
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct TrialMetrics {
  bool failed = false;
  std::optional<std::size_t> conv_initial;  // blocks from trial start
  std::optional<std::size_t> conv_post;     // blocks from the switch
  double gain_db = 0.0;
};

struct ControllerReport {
  std::string name;
  Variant variant = Variant::plain;
  bool is_latent = false;
  bool mixup = false;
  NormScheme scheme = NormScheme::latent_normalized;
  double step_size = 0.0;
  std::vector<TrialMetrics> trials;
  ErrorTrace mean_trace;
  // non-converged trials enter the means at the segment length
  double mean_conv_initial = 0.0;
  double mean_conv_post = 0.0;
  double mean_gain_db = 0.0;
  std::size_t non_converged = 0;
  std::size_t failures = 0;
};

struct AcceptanceResult {
  std::string name;
  bool passed = false;
  bool gating = true;
  std::string detail;
};

struct MetricsReport {
  std::vector<ControllerReport> controllers;
  std::vector<std::uint64_t> noise_hashes;  // one per trial, shared across controllers
  std::vector<AcceptanceResult> acceptance;
  bool acceptance_passed = true;
};

MetricsReport run_experiment(const ExperimentConfig& config);

nlohmann::json report_to_json(const ExperimentConfig& cfg, const MetricsReport& report);
std::string report_table(const MetricsReport& report);

}  // namespace anc
