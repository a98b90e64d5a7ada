#include "anc/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "anc/errors.hpp"
#include "anc/rng.hpp"

namespace anc {

namespace {

double sq_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

double gauss_kernel(std::span<const double> a, std::span<const double> b, double variance) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * variance));
}

unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

}  // namespace

std::vector<Vec3> sample_segment(const Vec3& a, const Vec3& b, std::size_t n) {
  std::vector<Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    for (int d = 0; d < 3; ++d) out[i][d] = a[d] + t * (b[d] - a[d]);
  }
  return out;
}

FilterDataset generate_dataset(const DatasetGenConfig& cfg) {
  if (cfg.n_positions < 2) throw ConfigError("dataset needs at least 2 positions");
  const auto positions = sample_segment(cfg.segment_a, cfg.segment_b, cfg.n_positions);

  // every primary position must be farther from the error mic than the
  // secondary source
  auto d2 = [](const Vec3& a, const Vec3& b) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
  };
  const double secondary_d2 = d2(cfg.secondary, cfg.mic);
  std::string offending;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (d2(positions[i], cfg.mic) <= secondary_d2) {
      offending += (offending.empty() ? "" : ",") + std::to_string(i);
    }
  }
  if (!offending.empty()) {
    throw ConfigError("primary positions closer to mic than the secondary source: indices " +
                      offending);
  }

  RoomSpec sim_room = cfg.room;
  sim_room.rir_length = cfg.room.rir_length + cfg.onset_trim;

  ImpulseResponse g = cfg.g_override ? *cfg.g_override
                                     : trim_onset(simulate_rir(sim_room, cfg.secondary, cfg.mic),
                                                  cfg.onset_trim);
  g.taps.resize(cfg.room.rir_length);
  ImpulseResponse g_hat = cfg.g_hat_override ? *cfg.g_hat_override : g;
  if (!cfg.g_hat_override && cfg.g_hat_perturb != 0.0) {
    Rng rng(Rng::derive(cfg.seed, 0xabcdef));
    for (auto& t : g_hat.taps) t *= 1.0 + cfg.g_hat_perturb * rng.normal();
  }

  const std::size_t len = cfg.room.rir_length;
  FilterDataset ds;
  ds.filter_len = len;
  ds.positions = positions;
  ds.sample_rate = cfg.room.sample_rate;
  ds.filters.assign(cfg.n_positions * len, 0.0);

  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(cfg.n_positions);
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.n_positions) return;
      try {
        const auto p = trim_onset(simulate_rir(sim_room, positions[i], cfg.mic), cfg.onset_trim);
        ImpulseResponse p_cut{std::vector<double>(p.taps.begin(),
                                                  p.taps.begin() + static_cast<std::ptrdiff_t>(len)),
                              p.sample_rate};
        // seed from the position value, not the row index: coincident
        // positions must produce bit-identical rows
        std::uint64_t key = cfg.seed;
        for (int d = 0; d < 3; ++d) {
          std::uint64_t bits;
          std::memcpy(&bits, &positions[i][d], sizeof bits);
          key = Rng::derive(key, bits);
        }
        NoiseSource noise = cfg.noise;
        noise.seed = key;
        double mu = cfg.mu;
        std::vector<double> w;
        for (int attempt = 0;; ++attempt) {
          try {
            w = converge_filter(p_cut, g, g_hat, noise, mu, cfg.block_size, cfg.stop);
            break;
          } catch (const NumericError&) {
            if (attempt >= 3) throw;
            mu *= 0.5;  // diverged; retry gentler
          }
        }
        std::copy(w.begin(), w.end(), ds.filters.begin() + static_cast<std::ptrdiff_t>(i * len));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned n_threads = std::min<unsigned>(resolve_threads(cfg.threads),
                                                static_cast<unsigned>(cfg.n_positions));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < cfg.n_positions; ++i) {
    if (!errors[i].empty()) {
      throw NumericError("dataset position " + std::to_string(i) + ": " + errors[i], 0);
    }
  }

  double max_norm = 0.0;
  for (std::size_t i = 0; i < ds.rows(); ++i) max_norm = std::max(max_norm, std::sqrt(sq_norm(ds.row(i))));
  ds.scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;
  for (auto& v : ds.filters) v *= ds.scale;
  return ds;
}

void save_dataset(const std::string& path, const FilterDataset& ds,
                  const std::string& metadata_json) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  f << "ANCDS1 " << ds.filter_len << " " << ds.sample_rate << " " << ds.rows() << "\n";
  f.write(reinterpret_cast<const char*>(ds.filters.data()),
          static_cast<std::streamsize>(ds.filters.size() * sizeof(double)));

  nlohmann::json j;
  j["scale"] = ds.scale;
  j["filter_len"] = ds.filter_len;
  j["sample_rate"] = ds.sample_rate;
  auto pos = nlohmann::json::array();
  for (const auto& p : ds.positions) pos.push_back({p[0], p[1], p[2]});
  j["positions"] = pos;
  if (!metadata_json.empty()) j["metadata"] = nlohmann::json::parse(metadata_json);
  std::ofstream side(path + ".json");
  side << j.dump(2) << "\n";
}

FilterDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string magic;
  FilterDataset ds;
  std::size_t count = 0;
  hs >> magic >> ds.filter_len >> ds.sample_rate >> count;
  if (magic != "ANCDS1" || ds.filter_len == 0 || count == 0) {
    throw std::runtime_error("load_dataset: bad header in " + path);
  }
  ds.filters.resize(count * ds.filter_len);
  f.read(reinterpret_cast<char*>(ds.filters.data()),
         static_cast<std::streamsize>(ds.filters.size() * sizeof(double)));
  if (!f) throw std::runtime_error("load_dataset: truncated file " + path);

  std::ifstream side(path + ".json");
  if (side) {
    nlohmann::json j;
    side >> j;
    ds.scale = j.value("scale", 1.0);
    if (j.contains("positions")) {
      for (const auto& p : j["positions"]) {
        ds.positions.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
    }
  }
  return ds;
}

LossWeights default_weights(Variant variant, bool mixup, double info_alpha, double info_lambda) {
  LossWeights w;
  w.recon = 1.0;
  switch (variant) {
    case Variant::plain:
      break;
    case Variant::vae:
      w.kl = 1.0;
      break;
    case Variant::infovae:
      w.kl = 1.0 - info_alpha;
      w.mmd = info_alpha + info_lambda - 1.0;
      break;
  }
  if (mixup) {
    w.mixup_c = 1.0;
    w.mixup_z = 1.0;
  }
  return w;
}

double reconstruction_loss(const AutoencoderModel& m,
                           const std::vector<std::span<const double>>& batch) {
  double acc = 0.0;
  for (const auto& w : batch) {
    const auto z = encode_mean(m, w);
    const auto rec = decode(m, z);
    double e = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) e += (rec[i] - w[i]) * (rec[i] - w[i]);
    acc += e / static_cast<double>(w.size());
  }
  return acc / static_cast<double>(batch.size());
}

double kl_loss(std::span<const double> mean, std::span<const double> logvar) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    acc += std::exp(logvar[i]) + mean[i] * mean[i] - 1.0 - logvar[i];
  }
  return 0.5 * acc;
}

double mmd_loss(const std::vector<std::vector<double>>& z_samples,
                const std::vector<std::vector<double>>& prior_samples, double kernel_variance) {
  const std::size_t m = z_samples.size(), n = prior_samples.size();
  if (m < 2 || n < 2) throw std::domain_error("mmd_loss: needs >= 2 samples per set");
  // V-statistic (full sums): nonnegative, permutation invariant, and exactly
  // zero on identical sets, unlike the U-statistic whose value on identical
  // sets is -2/m with a narrow kernel.
  double szz = 0.0, spp = 0.0, szp = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      szz += gauss_kernel(z_samples[i], z_samples[j], kernel_variance);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      spp += gauss_kernel(prior_samples[i], prior_samples[j], kernel_variance);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      szp += gauss_kernel(z_samples[i], prior_samples[j], kernel_variance);
  return szz / static_cast<double>(m * m) + spp / static_cast<double>(n * n) -
         2.0 * szp / static_cast<double>(m * n);
}

std::pair<double, double> mixup_losses(const AutoencoderModel& m,
                                       const std::vector<std::span<const double>>& batch,
                                       std::size_t mixup_count, std::uint64_t seed) {
  if (batch.size() < 2) throw std::domain_error("mixup_losses: batch must have >= 2 rows");
  Rng rng(seed);
  const std::size_t len = m.filter_len;
  double lc = 0.0, lz = 0.0;
  std::vector<double> mix(len);
  for (std::size_t t = 0; t < mixup_count; ++t) {
    const auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(batch.size()));
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(batch.size()));
    const double gamma = rng.uniform();
    for (std::size_t s = 0; s < len; ++s) mix[s] = gamma * batch[i][s] + (1.0 - gamma) * batch[j][s];
    const auto zi = encode_mean(m, batch[i]);
    const auto zj = encode_mean(m, batch[j]);
    const auto zm = encode_mean(m, mix);
    const auto rec = decode(m, zm);
    double e = 0.0;
    for (std::size_t s = 0; s < len; ++s) e += (rec[s] - mix[s]) * (rec[s] - mix[s]);
    lc += e / static_cast<double>(len);
    double dz = 0.0;
    for (std::size_t s = 0; s < zm.size(); ++s) {
      const double d = gamma * zi[s] + (1.0 - gamma) * zj[s] - zm[s];
      dz += d * d;
    }
    lz += dz / static_cast<double>(zm.size());
  }
  const double inv = 1.0 / static_cast<double>(mixup_count);
  return {lc * inv, lz * inv};
}

BatchDraws draw_batch_noise(const AutoencoderModel& m, const TrainingConfig& cfg,
                            std::size_t batch_items, std::uint64_t seed) {
  BatchDraws d;
  Rng rng(seed);
  if (m.variant != Variant::plain) {
    d.eta.resize(batch_items);
    for (auto& e : d.eta) {
      e.resize(m.latent_dim);
      for (auto& v : e) v = rng.normal();
    }
  }
  if (cfg.weights.mmd != 0.0) {
    d.prior.resize(batch_items);
    for (auto& p : d.prior) {
      p.resize(m.latent_dim);
      for (auto& v : p) v = rng.normal();
    }
  }
  if (cfg.weights.mixup_c != 0.0 || cfg.weights.mixup_z != 0.0) {
    d.mixup.resize(cfg.mixup_count);
    for (auto& mx : d.mixup) {
      mx.i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(batch_items));
      mx.j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(batch_items));
      mx.gamma = rng.uniform();
    }
  }
  return d;
}

double batch_loss(const AutoencoderModel& m, const std::vector<std::span<const double>>& batch,
                  const TrainingConfig& cfg, const BatchDraws& draws, ModelGrads* grads,
                  LossParts* parts) {
  const std::size_t n = batch.size();
  const std::size_t len = m.filter_len;
  const std::size_t k = m.latent_dim;
  const bool sampled = m.variant != Variant::plain;
  const LossWeights& lw = cfg.weights;
  LossParts lp;

  std::vector<HalfTrace> enc_traces(n);
  std::vector<std::vector<double>> heads(n), z(n);
  std::vector<HalfTrace> dec_traces(n);
  std::vector<std::vector<double>> recs(n);
  std::vector<std::vector<double>> d_head(n);

  for (std::size_t i = 0; i < n; ++i) {
    heads[i] = encode_raw(m, batch[i], &enc_traces[i]);
    d_head[i].assign(heads[i].size(), 0.0);
    if (sampled) {
      z[i].resize(k);
      for (std::size_t s = 0; s < k; ++s) {
        z[i][s] = heads[i][s] + std::exp(0.5 * heads[i][k + s]) * draws.eta[i][s];
      }
    } else {
      z[i] = heads[i];
    }
    recs[i] = decode(m, z[i], &dec_traces[i]);
    double e = 0.0;
    for (std::size_t s = 0; s < len; ++s) e += (recs[i][s] - batch[i][s]) * (recs[i][s] - batch[i][s]);
    lp.recon += e / static_cast<double>(len * n);
    if (sampled && lw.kl != 0.0) {
      lp.kl += kl_loss(std::span<const double>(heads[i]).subspan(0, k),
                       std::span<const double>(heads[i]).subspan(k, k)) /
               static_cast<double>(n);
    }
  }

  // MMD over the batch's latent samples vs seeded prior draws
  std::vector<std::vector<double>> d_z_mmd;
  if (lw.mmd != 0.0) {
    lp.mmd = mmd_loss(z, draws.prior, cfg.kernel_variance);
    if (grads) {
      // V-statistic gradient; prior sample count equals the batch size here
      d_z_mmd.assign(n, std::vector<double>(k, 0.0));
      const double inv_var = 1.0 / cfg.kernel_variance;
      const auto mm = static_cast<double>(n * n);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          const double kz = gauss_kernel(z[a], z[b], cfg.kernel_variance);
          const double kp = gauss_kernel(z[a], draws.prior[b], cfg.kernel_variance);
          for (std::size_t s = 0; s < k; ++s) {
            d_z_mmd[a][s] += (2.0 / mm) * (kz * (-(z[a][s] - z[b][s]) * inv_var) -
                                           kp * (-(z[a][s] - draws.prior[b][s]) * inv_var));
          }
        }
      }
    }
  }

  // mixup terms use the deterministic (mean-head) manifold
  const std::size_t n_mix = draws.mixup.size();
  std::vector<HalfTrace> mix_enc(n_mix), mix_dec(n_mix);
  std::vector<std::vector<double>> mix_w(n_mix), mix_head(n_mix), mix_rec(n_mix), mix_dev(n_mix);
  if (n_mix > 0 && (lw.mixup_c != 0.0 || lw.mixup_z != 0.0)) {
    if (n < 2) throw std::domain_error("mixup needs a batch of >= 2");
    for (std::size_t t = 0; t < n_mix; ++t) {
      const auto& mx = draws.mixup[t];
      mix_w[t].resize(len);
      for (std::size_t s = 0; s < len; ++s) {
        mix_w[t][s] = mx.gamma * batch[mx.i][s] + (1.0 - mx.gamma) * batch[mx.j][s];
      }
      mix_head[t] = encode_raw(m, mix_w[t], &mix_enc[t]);
      std::vector<double> zm(mix_head[t].begin(), mix_head[t].begin() + static_cast<std::ptrdiff_t>(k));
      mix_rec[t] = decode(m, zm, &mix_dec[t]);
      double e = 0.0;
      for (std::size_t s = 0; s < len; ++s) {
        e += (mix_rec[t][s] - mix_w[t][s]) * (mix_rec[t][s] - mix_w[t][s]);
      }
      lp.mixup_c += e / static_cast<double>(len * n_mix);
      mix_dev[t].resize(k);
      double dz = 0.0;
      for (std::size_t s = 0; s < k; ++s) {
        mix_dev[t][s] = mx.gamma * heads[mx.i][s] + (1.0 - mx.gamma) * heads[mx.j][s] - mix_head[t][s];
        dz += mix_dev[t][s] * mix_dev[t][s];
      }
      lp.mixup_z += dz / static_cast<double>(k * n_mix);
    }
  }

  lp.total = lw.recon * lp.recon + lw.kl * lp.kl + lw.mmd * lp.mmd + lw.mixup_c * lp.mixup_c +
             lw.mixup_z * lp.mixup_z;
  if (parts) *parts = lp;
  if (!grads) return lp.total;

  // reverse pass
  std::vector<double> d_w(len), d_z;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < len; ++s) {
      d_w[s] = lw.recon * 2.0 * (recs[i][s] - batch[i][s]) / static_cast<double>(len * n);
    }
    d_z = decode_backward(m, dec_traces[i], d_w, grads);
    if (lw.mmd != 0.0) {
      for (std::size_t s = 0; s < k; ++s) d_z[s] += lw.mmd * d_z_mmd[i][s];
    }
    if (sampled) {
      for (std::size_t s = 0; s < k; ++s) {
        d_head[i][s] += d_z[s];
        d_head[i][k + s] += d_z[s] * draws.eta[i][s] * 0.5 * std::exp(0.5 * heads[i][k + s]);
      }
      if (lw.kl != 0.0) {
        for (std::size_t s = 0; s < k; ++s) {
          d_head[i][s] += lw.kl * heads[i][s] / static_cast<double>(n);
          d_head[i][k + s] += lw.kl * 0.5 * (std::exp(heads[i][k + s]) - 1.0) / static_cast<double>(n);
        }
      }
    } else {
      for (std::size_t s = 0; s < k; ++s) d_head[i][s] += d_z[s];
    }
  }

  if (n_mix > 0 && (lw.mixup_c != 0.0 || lw.mixup_z != 0.0)) {
    for (std::size_t t = 0; t < n_mix; ++t) {
      const auto& mx = draws.mixup[t];
      std::vector<double> d_mix_head(mix_head[t].size(), 0.0);
      if (lw.mixup_c != 0.0) {
        for (std::size_t s = 0; s < len; ++s) {
          d_w[s] = lw.mixup_c * 2.0 * (mix_rec[t][s] - mix_w[t][s]) / static_cast<double>(len * n_mix);
        }
        d_z = decode_backward(m, mix_dec[t], d_w, grads);
        for (std::size_t s = 0; s < k; ++s) d_mix_head[s] += d_z[s];
      }
      if (lw.mixup_z != 0.0) {
        for (std::size_t s = 0; s < k; ++s) {
          const double dd = lw.mixup_z * 2.0 * mix_dev[t][s] / static_cast<double>(k * n_mix);
          d_head[mx.i][s] += mx.gamma * dd;
          d_head[mx.j][s] += (1.0 - mx.gamma) * dd;
          d_mix_head[s] -= dd;
        }
      }
      encode_backward(m, mix_enc[t], d_mix_head, grads);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    encode_backward(m, enc_traces[i], d_head[i], grads);
  }
  return lp.total;
}

AdamState init_adam(const AutoencoderModel& model) {
  AdamState s;
  auto& mm = const_cast<AutoencoderModel&>(model);
  for (auto* a : param_arrays(mm)) {
    s.m.emplace_back(a->size(), 0.0);
    s.v.emplace_back(a->size(), 0.0);
  }
  return s;
}

void adam_step(AutoencoderModel& model, ModelGrads& grads, AdamState& state, double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto params = param_arrays(model);
  auto gs = grad_arrays(grads);
  for (std::size_t a = 0; a < params.size(); ++a) {
    auto& p = *params[a];
    auto& g = *gs[a];
    auto& mv = state.m[a];
    auto& vv = state.v[a];
    for (std::size_t i = 0; i < p.size(); ++i) {
      mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * g[i];
      vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= lr * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + state.eps);
    }
  }
}

std::vector<EpochRecord> train(AutoencoderModel& model, const FilterDataset& dataset,
                               const TrainingConfig& cfg) {
  if (dataset.filter_len != model.filter_len) {
    throw ConfigError("dataset/model filter length mismatch");
  }
  const std::size_t n = dataset.rows();
  std::vector<std::size_t> train_idx, val_idx;
  const std::size_t stride = cfg.validation_fraction > 0.0
                                 ? std::max<std::size_t>(2, static_cast<std::size_t>(
                                                                std::lround(1.0 / cfg.validation_fraction)))
                                 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (stride && i % stride == stride - 1 && n > 4) {
      val_idx.push_back(i);
    } else {
      train_idx.push_back(i);
    }
  }

  std::vector<std::span<const double>> val_rows;
  for (auto i : val_idx) val_rows.push_back(dataset.row(i));

  std::vector<EpochRecord> history;
  AdamState adam = init_adam(model);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, epoch));
    auto order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[j]);
    }

    LossParts epoch_parts;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      if (count < 2) continue;  // MMD and mixup need pairs
      std::vector<std::span<const double>> batch;
      batch.reserve(count);
      for (std::size_t i = 0; i < count; ++i) batch.push_back(dataset.row(order[start + i]));

      const auto draws =
          draw_batch_noise(model, cfg, count, Rng::derive(cfg.seed, (epoch << 20) + start + 1));
      ModelGrads grads = zero_grads(model);
      LossParts parts;
      const double loss = batch_loss(model, batch, cfg, draws, &grads, &parts);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch), start);
      }
      adam_step(model, grads, adam, cfg.learning_rate);
      epoch_parts.recon += parts.recon;
      epoch_parts.kl += parts.kl;
      epoch_parts.mmd += parts.mmd;
      epoch_parts.mixup_c += parts.mixup_c;
      epoch_parts.mixup_z += parts.mixup_z;
      epoch_parts.total += parts.total;
      ++n_batches;
    }
    if (n_batches > 0) {
      const double inv = 1.0 / static_cast<double>(n_batches);
      epoch_parts.recon *= inv;
      epoch_parts.kl *= inv;
      epoch_parts.mmd *= inv;
      epoch_parts.mixup_c *= inv;
      epoch_parts.mixup_z *= inv;
      epoch_parts.total *= inv;
    }
    EpochRecord rec;
    rec.train = epoch_parts;
    rec.validation_recon = val_rows.empty() ? 0.0 : reconstruction_loss(model, val_rows);
    history.push_back(rec);
  }
  return history;
}

}  // namespace anc
