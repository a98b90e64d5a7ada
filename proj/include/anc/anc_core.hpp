#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anc/acoustics.hpp"

namespace anc {

struct NoiseSource {
  enum class Kind { white_gaussian, file };
  Kind kind = Kind::white_gaussian;
  double variance = 1.0;
  std::uint64_t seed = 0;
  std::string path;  // file kind
};

std::vector<double> generate_noise(const NoiseSource& src, std::size_t n_samples);

struct ErrorTrace {
  std::vector<double> block_mse;
  std::size_t block_size = 100;
  double sample_rate = 16000.0;
};

// One block's worth of filtered-reference vectors x^_n, newest-first rows.
struct XhatBlock {
  std::size_t filter_len = 0;
  std::vector<double> data;  // B x L row-major

  std::size_t rows() const { return filter_len ? data.size() / filter_len : 0; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * filter_len, filter_len};
  }
};

// e_n = (p*x)_n + (g*y)_n with histories newest-first. y is the control
// signal as physically emitted (produced by the weights active at each
// past sample), so g convolves real history, not a re-filtered one.
double mic_sample(const ImpulseResponse& p, const ImpulseResponse& g,
                  std::span<const double> x_history, std::span<const double> y_history);

// x^_n = g_hat . [x_n, x_{n-1}, ...]
double filtered_reference(const ImpulseResponse& g_hat, std::span<const double> x_history);

// Normalized block FxLMS: w -= mu/B * sum_n e_n x^_n / (eps + ||x^_n||^2).
void fxlms_block_update(std::vector<double>& w, double mu, double epsilon,
                        std::span<const double> e_block, const XhatBlock& xhat);

// Weight provider + per-block adapter driven by the trial simulator.
// Weights are frozen within a block and updated at the boundary.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::span<const double> weights() const = 0;
  virtual void block_update(std::span<const double> e_block, const XhatBlock& xhat) = 0;
};

class FxlmsController : public Controller {
 public:
  FxlmsController(std::size_t filter_len, double mu, double epsilon = 1e-8)
      : w_(filter_len, 0.0), mu_(mu), epsilon_(epsilon) {}

  std::span<const double> weights() const override { return w_; }
  void block_update(std::span<const double> e_block, const XhatBlock& xhat) override {
    if (mu_ != 0.0) fxlms_block_update(w_, mu_, epsilon_, e_block, xhat);
  }
  double mu() const { return mu_; }

 private:
  std::vector<double> w_;
  double mu_;
  double epsilon_;
};

using PathSchedule = std::vector<std::pair<std::size_t, ImpulseResponse>>;

// Simulates n_blocks * block_size samples, swapping the primary path at
// scheduled block indices. Returns per-block MSE of the error mic signal.
// When primary_only is given it receives the ANC-OFF trace (energy of p*x
// per block) from the same realization.
ErrorTrace run_anc_trial(const PathSchedule& p_schedule, const ImpulseResponse& g,
                         const ImpulseResponse& g_hat, std::span<const double> noise,
                         Controller& controller, std::size_t n_blocks, std::size_t block_size,
                         ErrorTrace* primary_only = nullptr);

ErrorTrace run_anc_trial(const PathSchedule& p_schedule, const ImpulseResponse& g,
                         const ImpulseResponse& g_hat, const NoiseSource& noise,
                         Controller& controller, std::size_t n_blocks, std::size_t block_size,
                         ErrorTrace* primary_only = nullptr);

struct StopConfig {
  std::size_t max_blocks = 1000;
  double tol = 1e-3;
  std::size_t window = 40;
};

// Runs FxLMS until the trailing-window block-MSE change stabilizes or
// max_blocks is hit; throws NumericError on divergence (MSE 10x above the
// ANC-OFF level).
std::vector<double> converge_filter(const ImpulseResponse& p, const ImpulseResponse& g,
                                    const ImpulseResponse& g_hat, const NoiseSource& noise,
                                    double mu, std::size_t block_size, const StopConfig& stop);

}  // namespace anc
