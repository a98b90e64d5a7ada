#include "anc/anc_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "anc/errors.hpp"
#include "anc/rng.hpp"

namespace anc {

namespace {

double dot_history(std::span<const double> taps, const std::vector<double>& signal,
                   std::size_t n) {
  // sum_i taps[i] * signal[n - i], zeros before the start
  const std::size_t kmax = std::min(taps.size(), n + 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < kmax; ++i) acc += taps[i] * signal[n - i];
  return acc;
}

// Sequential per-sample ANC simulation. Weights come from the controller and
// are frozen within each block.
class TrialSim {
 public:
  TrialSim(const ImpulseResponse& g, const ImpulseResponse& g_hat, std::size_t filter_len,
           std::size_t block_size)
      : g_(&g), g_hat_(&g_hat), filter_len_(filter_len), block_size_(block_size) {
    xhat_block_.filter_len = filter_len;
    xhat_block_.data.assign(block_size * filter_len, 0.0);
  }

  // Runs one block; returns (block MSE, primary-only block MSE).
  std::pair<double, double> run_block(const ImpulseResponse& p, std::span<const double> weights,
                                      std::span<const double> x_block, std::size_t block_index) {
    double mse = 0.0, mse_off = 0.0;
    for (std::size_t s = 0; s < block_size_; ++s) {
      const std::size_t n = x_.size();
      x_.push_back(x_block[s]);
      y_.push_back(dot_history(weights, x_, n));
      const double d = dot_history(p.taps, x_, n);
      const double e = d + dot_history(g_->taps, y_, n);
      const double xh = dot_history(g_hat_->taps, x_, n);
      xh_.push_back(xh);
      double* row = xhat_block_.data.data() + s * filter_len_;
      for (std::size_t i = 0; i < filter_len_; ++i) {
        row[i] = (i <= n) ? xh_[n - i] : 0.0;
      }
      if (!std::isfinite(e) || !std::isfinite(xh)) {
        throw NumericError("non-finite error signal", block_index);
      }
      e_block_[s] = e;
      mse += e * e;
      mse_off += d * d;
    }
    return {mse / static_cast<double>(block_size_), mse_off / static_cast<double>(block_size_)};
  }

  std::span<const double> e_block() const { return {e_block_.data(), block_size_}; }
  const XhatBlock& xhat_block() const { return xhat_block_; }

  void reserve(std::size_t samples) {
    x_.reserve(samples);
    y_.reserve(samples);
    xh_.reserve(samples);
    e_block_.assign(block_size_, 0.0);
  }

 private:
  const ImpulseResponse* g_;
  const ImpulseResponse* g_hat_;
  std::size_t filter_len_;
  std::size_t block_size_;
  std::vector<double> x_, y_, xh_;
  std::vector<double> e_block_;
  XhatBlock xhat_block_;
};

}  // namespace

std::vector<double> generate_noise(const NoiseSource& src, std::size_t n_samples) {
  std::vector<double> out;
  out.reserve(n_samples);
  if (src.kind == NoiseSource::Kind::white_gaussian) {
    if (!(src.variance > 0.0)) throw std::domain_error("noise variance must be > 0");
    Rng rng(src.seed);
    const double sigma = std::sqrt(src.variance);
    for (std::size_t i = 0; i < n_samples; ++i) out.push_back(sigma * rng.normal());
  } else {
    std::ifstream f(src.path);
    if (!f) throw std::runtime_error("noise file not found: " + src.path);
    double v;
    while (out.size() < n_samples && f >> v) out.push_back(v);
    if (out.size() < n_samples) {
      throw std::runtime_error("noise file too short: " + src.path);
    }
  }
  return out;
}

double mic_sample(const ImpulseResponse& p, const ImpulseResponse& g,
                  std::span<const double> x_history, std::span<const double> y_history) {
  double e = 0.0;
  const std::size_t np = std::min(p.taps.size(), x_history.size());
  for (std::size_t i = 0; i < np; ++i) e += p.taps[i] * x_history[i];
  const std::size_t ng = std::min(g.taps.size(), y_history.size());
  for (std::size_t i = 0; i < ng; ++i) e += g.taps[i] * y_history[i];
  return e;
}

double filtered_reference(const ImpulseResponse& g_hat, std::span<const double> x_history) {
  double acc = 0.0;
  const std::size_t n = std::min(g_hat.taps.size(), x_history.size());
  for (std::size_t i = 0; i < n; ++i) acc += g_hat.taps[i] * x_history[i];
  return acc;
}

void fxlms_block_update(std::vector<double>& w, double mu, double epsilon,
                        std::span<const double> e_block, const XhatBlock& xhat) {
  const std::size_t b = e_block.size();
  if (b == 0 || xhat.rows() != b || xhat.filter_len != w.size()) {
    throw std::invalid_argument("fxlms_block_update: shape mismatch");
  }
  std::vector<double> acc(w.size(), 0.0);
  for (std::size_t n = 0; n < b; ++n) {
    const auto row = xhat.row(n);
    double norm2 = 0.0;
    for (double v : row) norm2 += v * v;
    if (!std::isfinite(norm2) || !std::isfinite(e_block[n])) {
      throw NumericError("non-finite block data in FxLMS update", 0);
    }
    const double coef = e_block[n] / (epsilon + norm2);
    for (std::size_t i = 0; i < w.size(); ++i) acc[i] += coef * row[i];
  }
  const double scale = mu / static_cast<double>(b);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * acc[i];
}

ErrorTrace run_anc_trial(const PathSchedule& p_schedule, const ImpulseResponse& g,
                         const ImpulseResponse& g_hat, std::span<const double> noise,
                         Controller& controller, std::size_t n_blocks, std::size_t block_size,
                         ErrorTrace* primary_only) {
  if (p_schedule.empty() || p_schedule.front().first != 0) {
    throw ConfigError("path schedule must start at block 0");
  }
  if (noise.size() < n_blocks * block_size) {
    throw ConfigError("noise signal shorter than the trial");
  }
  const std::size_t filter_len = controller.weights().size();
  TrialSim sim(g, g_hat, filter_len, block_size);
  sim.reserve(n_blocks * block_size);

  ErrorTrace trace;
  trace.block_size = block_size;
  trace.sample_rate = g.sample_rate;
  trace.block_mse.reserve(n_blocks);
  if (primary_only) {
    primary_only->block_size = block_size;
    primary_only->sample_rate = g.sample_rate;
    primary_only->block_mse.clear();
    primary_only->block_mse.reserve(n_blocks);
  }

  std::size_t sched_idx = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    while (sched_idx + 1 < p_schedule.size() && p_schedule[sched_idx + 1].first <= b) ++sched_idx;
    const ImpulseResponse& p = p_schedule[sched_idx].second;
    const auto [mse, mse_off] =
        sim.run_block(p, controller.weights(), noise.subspan(b * block_size, block_size), b);
    trace.block_mse.push_back(mse);
    if (primary_only) primary_only->block_mse.push_back(mse_off);
    try {
      controller.block_update(sim.e_block(), sim.xhat_block());
    } catch (const NumericError& err) {
      throw NumericError(err.what(), b);
    }
  }
  return trace;
}

ErrorTrace run_anc_trial(const PathSchedule& p_schedule, const ImpulseResponse& g,
                         const ImpulseResponse& g_hat, const NoiseSource& noise,
                         Controller& controller, std::size_t n_blocks, std::size_t block_size,
                         ErrorTrace* primary_only) {
  const auto x = generate_noise(noise, n_blocks * block_size);
  return run_anc_trial(p_schedule, g, g_hat, std::span<const double>(x), controller, n_blocks,
                       block_size, primary_only);
}

std::vector<double> converge_filter(const ImpulseResponse& p, const ImpulseResponse& g,
                                    const ImpulseResponse& g_hat, const NoiseSource& noise,
                                    double mu, std::size_t block_size, const StopConfig& stop) {
  const std::size_t filter_len = p.taps.size();
  FxlmsController ctrl(filter_len, mu);
  TrialSim sim(g, g_hat, filter_len, block_size);
  sim.reserve(stop.max_blocks * block_size);

  Rng rng(noise.seed);
  const double sigma = std::sqrt(noise.variance);
  std::vector<double> x_block(block_size);

  std::vector<double> mse_hist;
  mse_hist.reserve(stop.max_blocks);
  double off_sum = 0.0;

  for (std::size_t b = 0; b < stop.max_blocks; ++b) {
    for (auto& v : x_block) v = sigma * rng.normal();
    const auto [mse, mse_off] = sim.run_block(p, ctrl.weights(), x_block, b);
    mse_hist.push_back(mse);
    off_sum += mse_off;
    const double off_mean = off_sum / static_cast<double>(b + 1);
    if (b > 0 && mse > 10.0 * off_mean && off_mean > 0.0) {
      throw NumericError("FxLMS diverged (MSE above 10x ANC-OFF level)", b);
    }
    ctrl.block_update(sim.e_block(), sim.xhat_block());

    const std::size_t w = stop.window;
    if (mse_hist.size() >= 2 * w) {
      double recent = 0.0, prev = 0.0;
      for (std::size_t i = 0; i < w; ++i) {
        recent += mse_hist[mse_hist.size() - 1 - i];
        prev += mse_hist[mse_hist.size() - 1 - w - i];
      }
      recent /= static_cast<double>(w);
      prev /= static_cast<double>(w);
      if (std::abs(recent - prev) < stop.tol * std::max(prev, 1e-300)) break;
    }
  }
  return std::vector<double>(ctrl.weights().begin(), ctrl.weights().end());
}

}  // namespace anc
