#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anc/acoustics.hpp"
#include "anc/anc_core.hpp"
#include "anc/neural.hpp"

namespace anc {

struct FilterDataset {
  std::size_t filter_len = 0;
  std::vector<double> filters;  // n x L row-major, stored pre-scaled
  std::vector<Vec3> positions;  // n x 3, meters
  double scale = 1.0;           // stored row = physical row * scale
  double sample_rate = 16000.0;

  std::size_t rows() const { return filter_len ? filters.size() / filter_len : 0; }
  std::span<const double> row(std::size_t i) const {
    return {filters.data() + i * filter_len, filter_len};
  }
};

struct DatasetGenConfig {
  RoomSpec room;
  Vec3 segment_a{1.5, 1.0, 1.0};
  Vec3 segment_b{3.0, 2.0, 2.0};
  std::size_t n_positions = 2048;
  Vec3 mic{4.5, 3.0, 1.5};
  Vec3 secondary{3.0, 2.5, 1.5};
  std::size_t onset_trim = 0;  // bulk-delay taps dropped from every path
  NoiseSource noise;
  double mu = 0.5;
  std::size_t block_size = 100;
  StopConfig stop;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  double g_hat_perturb = 0.0;  // multiplicative tap noise on the estimate
  std::optional<ImpulseResponse> g_override;      // synthetic secondary path
  std::optional<ImpulseResponse> g_hat_override;
};

// Positions on the segment are a uniform grid a + i/(n-1) * (b - a).
std::vector<Vec3> sample_segment(const Vec3& a, const Vec3& b, std::size_t n);

// Simulates p per position, converges FxLMS, stacks rows; scales by the
// inverse max row norm. Diverged trials retry with halved mu (3 attempts).
FilterDataset generate_dataset(const DatasetGenConfig& cfg);

void save_dataset(const std::string& path, const FilterDataset& ds,
                  const std::string& metadata_json = "");
FilterDataset load_dataset(const std::string& path);

struct LossWeights {
  double recon = 1.0;
  double kl = 0.0;
  double mmd = 0.0;
  double mixup_c = 0.0;
  double mixup_z = 0.0;
};

// InfoVAE objective: recon + (1-alpha) KL + (alpha+lambda-1) MMD.
LossWeights default_weights(Variant variant, bool mixup, double info_alpha = 1.0,
                            double info_lambda = 1000.0);

struct TrainingConfig {
  std::size_t batch_size = 64;
  std::size_t mixup_count = 256;  // convex combinations per batch
  std::size_t epochs = 500;
  double learning_rate = 1e-3;
  LossWeights weights;
  double kernel_variance = 0.01;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;  // held out by position-index stride
};

double reconstruction_loss(const AutoencoderModel& m, const std::vector<std::span<const double>>& batch);
double kl_loss(std::span<const double> mean, std::span<const double> logvar);
double mmd_loss(const std::vector<std::vector<double>>& z_samples,
                const std::vector<std::vector<double>>& prior_samples, double kernel_variance);
// (L_C, L_z); gamma ~ U[0,1] draws seeded. The mean head is used for L_z.
std::pair<double, double> mixup_losses(const AutoencoderModel& m,
                                       const std::vector<std::span<const double>>& batch,
                                       std::size_t mixup_count, std::uint64_t seed);

// All stochastic draws a batch evaluation needs, frozen so the total loss is
// a deterministic function of the parameters (finite-difference checkable).
struct BatchDraws {
  std::vector<std::vector<double>> eta;    // reparameterization noise, per item
  std::vector<std::vector<double>> prior;  // N(0, I_k) samples for MMD
  struct Mix {
    std::size_t i = 0, j = 0;
    double gamma = 0.5;
  };
  std::vector<Mix> mixup;
};

BatchDraws draw_batch_noise(const AutoencoderModel& m, const TrainingConfig& cfg,
                            std::size_t batch_items, std::uint64_t seed);

struct LossParts {
  double recon = 0.0, kl = 0.0, mmd = 0.0, mixup_c = 0.0, mixup_z = 0.0;
  double total = 0.0;
};

// Weighted total loss over one batch; accumulates parameter gradients when
// grads is non-null.
double batch_loss(const AutoencoderModel& m, const std::vector<std::span<const double>>& batch,
                  const TrainingConfig& cfg, const BatchDraws& draws, ModelGrads* grads,
                  LossParts* parts = nullptr);

struct EpochRecord {
  LossParts train;
  double validation_recon = 0.0;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};
AdamState init_adam(const AutoencoderModel& model);
void adam_step(AutoencoderModel& model, ModelGrads& grads, AdamState& state, double lr);

std::vector<EpochRecord> train(AutoencoderModel& model, const FilterDataset& dataset,
                               const TrainingConfig& cfg);

}  // namespace anc
