#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "anc/errors.hpp"
#include "anc/rng.hpp"
#include "anc/training.hpp"

using namespace anc;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

FilterDataset toy_dataset(std::size_t rows, std::size_t len, std::uint64_t seed) {
  FilterDataset ds;
  ds.filter_len = len;
  ds.scale = 1.0;
  Rng rng(seed);
  ds.filters = random_vec(rng, rows * len, 0.3);
  for (std::size_t i = 0; i < rows; ++i) ds.positions.push_back({0.0, 0.0, 0.0});
  return ds;
}

DatasetGenConfig small_gen_config() {
  DatasetGenConfig cfg;
  cfg.room.dimensions = {6.0, 6.2, 3.0};
  cfg.room.rt60 = 0.0;  // anechoic: fast and analytically clean
  cfg.room.rir_length = 48;
  // at 2 kHz the 1.9-3.6 m primary paths land at taps 11-21, inside L=48
  cfg.room.sample_rate = 2000.0;
  cfg.segment_a = {1.5, 1.0, 1.0};
  cfg.segment_b = {3.0, 2.0, 2.0};
  cfg.mic = {4.5, 3.0, 1.5};
  cfg.secondary = {3.0, 2.5, 1.5};
  cfg.n_positions = 4;
  cfg.seed = 7;
  cfg.mu = 0.5;
  cfg.stop.max_blocks = 400;
  // unit-impulse secondary path makes the optimum exactly -p
  ImpulseResponse g;
  g.taps.assign(48, 0.0);
  g.taps[0] = 1.0;
  cfg.g_override = g;
  cfg.g_hat_override = g;
  return cfg;
}

}  // namespace

TEST_CASE("sample_segment: uniform grid endpoints and spacing") {
  const auto pts = sample_segment({1.5, 1.0, 1.0}, {3.0, 2.0, 2.0}, 2048);
  REQUIRE(pts.size() == 2048);
  CHECK(pts.front()[0] == doctest::Approx(1.5));
  CHECK(pts.back()[2] == doctest::Approx(2.0));
  double d = 0.0;
  for (int i = 0; i < 3; ++i) d += (pts[1][i] - pts[0][i]) * (pts[1][i] - pts[0][i]);
  d = std::sqrt(d);
  // segment length sqrt(4.25) m ~ 2.06 m over 2047 gaps: ~1 mm, i.e. the
  // published "roughly 2 mm" order of magnitude
  CHECK(d > 0.0005);
  CHECK(d < 0.0025);
}

TEST_CASE("generate_dataset: degenerate segment gives identical rows") {
  auto cfg = small_gen_config();
  cfg.segment_a = cfg.segment_b = {1.5, 1.0, 1.0};
  cfg.n_positions = 2;
  const auto ds = generate_dataset(cfg);
  REQUIRE(ds.rows() == 2);
  for (std::size_t i = 0; i < ds.filter_len; ++i) CHECK(ds.row(0)[i] == ds.row(1)[i]);
}

TEST_CASE("generate_dataset: rows approach -p when g is a unit impulse") {
  auto cfg = small_gen_config();
  const auto ds = generate_dataset(cfg);
  const auto positions = sample_segment(cfg.segment_a, cfg.segment_b, cfg.n_positions);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto p = simulate_rir(cfg.room, positions[i], cfg.mic);
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < ds.filter_len; ++s) {
      const double w_phys = ds.row(i)[s] / ds.scale;
      num += (w_phys + p.taps[s]) * (w_phys + p.taps[s]);
      den += p.taps[s] * p.taps[s];
    }
    CHECK(std::sqrt(num / den) < 0.05);
  }
}

TEST_CASE("generate_dataset: rows are genuine FxLMS fixed points") {
  auto cfg = small_gen_config();
  cfg.n_positions = 2;
  const auto ds = generate_dataset(cfg);
  const auto positions = sample_segment(cfg.segment_a, cfg.segment_b, cfg.n_positions);
  const ImpulseResponse g = *cfg.g_override;

  // re-present each row's primary path with the stored weights frozen; block
  // MSE must stay within 1.05x the converged steady state
  class Frozen : public Controller {
   public:
    explicit Frozen(std::vector<double> w) : w_(std::move(w)) {}
    std::span<const double> weights() const override { return w_; }
    void block_update(std::span<const double>, const XhatBlock&) override {}
   private:
    std::vector<double> w_;
  };

  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto p = simulate_rir(cfg.room, positions[i], cfg.mic);
    std::vector<double> w(ds.filter_len);
    for (std::size_t s = 0; s < ds.filter_len; ++s) w[s] = ds.row(i)[s] / ds.scale;

    NoiseSource noise = cfg.noise;
    noise.seed = 999 + i;
    Frozen frozen(w);
    const auto trace = run_anc_trial({{0, p}}, g, g, noise, frozen, 80, cfg.block_size);
    double steady = 0.0, early = 0.0;
    for (std::size_t b = 40; b < 80; ++b) steady += trace.block_mse[b];
    steady /= 40.0;
    // skip block 0/1: the y-history warms up from empty. The weights are
    // frozen, so both windows sample the same stationary residual; the 1.1
    // factor covers the block-MSE sampling noise.
    for (std::size_t b = 2; b < 40; ++b) early += trace.block_mse[b];
    early /= 38.0;
    CHECK(early <= 1.1 * steady);
  }
}

TEST_CASE("generate_dataset: distance precondition lists offenders") {
  auto cfg = small_gen_config();
  cfg.mic = {1.5, 1.0, 1.0};  // mic sits on the segment start
  try {
    (void)generate_dataset(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("indices") != std::string::npos);
  }
}

TEST_CASE("dataset file round trip") {
  const auto ds = toy_dataset(6, 8, 42);
  const auto path = (std::filesystem::temp_directory_path() / "ds_test.bin").string();
  save_dataset(path, ds, "{\"origin\":\"test\"}");
  const auto loaded = load_dataset(path);
  CHECK(loaded.filter_len == 8);
  CHECK(loaded.rows() == 6);
  CHECK(loaded.filters == ds.filters);
  CHECK(loaded.scale == ds.scale);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

TEST_CASE("reconstruction loss: zero-output decoder and hand oracle") {
  auto m = init_model(4, 3, 2, Variant::plain, 50);
  m.dec1.w.assign(m.dec1.w.size(), 0.0);
  m.dec1.b.assign(m.dec1.b.size(), 0.0);
  m.dec2.w.assign(m.dec2.w.size(), 0.0);
  m.dec2.b.assign(m.dec2.b.size(), 0.0);
  Rng rng(51);
  const auto w1 = random_vec(rng, 4);
  const auto w2 = random_vec(rng, 4);
  const double loss = reconstruction_loss(m, {w1, w2});
  double expect = 0.0;
  for (double v : w1) expect += v * v;
  for (double v : w2) expect += v * v;
  expect /= 4.0 * 2.0;
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("reconstruction loss: contrived identity autoencoder is zero") {
  // encoder = decoder = identity over L = k = 2 (linear mode)
  AutoencoderModel m;
  m.filter_len = 2;
  m.hidden_dim = 2;
  m.latent_dim = 2;
  m.spectral_boundaries = false;
  m.identity_activation = true;
  auto ident = [](std::size_t n) {
    DenseLayer l;
    l.out = l.in = n;
    l.w.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) l.w[i * n + i] = 1.0;
    l.b.assign(n, 0.0);
    return l;
  };
  m.enc1 = m.enc2 = m.dec1 = m.dec2 = ident(2);
  const std::vector<double> w{0.3, -0.8};
  CHECK(reconstruction_loss(m, {w}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kl loss closed forms") {
  const std::vector<double> zero{0.0};
  CHECK(kl_loss(zero, zero) == 0.0);
  const std::vector<double> one{1.0};
  CHECK(kl_loss(one, zero) == doctest::Approx(0.5).epsilon(1e-15));
  Rng rng(52);
  for (int rep = 0; rep < 50; ++rep) {
    const auto mean = random_vec(rng, 3);
    const auto logvar = random_vec(rng, 3);
    CHECK(kl_loss(mean, logvar) >= -1e-12);
  }
}

TEST_CASE("mmd loss: identical sets score (near) zero") {
  Rng rng(53);
  std::vector<std::vector<double>> s;
  for (int i = 0; i < 512; ++i) s.push_back(random_vec(rng, 4));
  const double est = mmd_loss(s, s, 0.01);
  CHECK(est >= -1e-6);
  CHECK(est <= 3.0 / std::sqrt(512.0));
  CHECK(std::abs(est) < 1e-12);  // the full-sum estimator cancels exactly
}

TEST_CASE("mmd loss: two point masses hand case") {
  // sets {a, a}, {b, b} with ||a-b||^2 = d2:
  // szz/m^2 = spp/n^2 = 1; cross mean = k(d2)
  // estimate = 1 + 1 - 2 k(d2) = 2 (1 - exp(-d2 / (2 var)))
  const std::vector<double> a{0.0, 0.0}, b{0.3, -0.4};  // d2 = 0.25
  const double var = 0.01;
  const double est = mmd_loss({a, a}, {b, b}, var);
  const double expect = 2.0 * (1.0 - std::exp(-0.25 / (2.0 * var)));
  CHECK(est == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mmd loss: symmetric and permutation invariant") {
  Rng rng(54);
  std::vector<std::vector<double>> s, p;
  for (int i = 0; i < 16; ++i) {
    s.push_back(random_vec(rng, 3));
    p.push_back(random_vec(rng, 3));
  }
  const double a = mmd_loss(s, p, 0.5);
  CHECK(mmd_loss(p, s, 0.5) == doctest::Approx(a).epsilon(1e-13));
  auto shuffled = s;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(mmd_loss(shuffled, p, 0.5) == doctest::Approx(a).epsilon(1e-13));
}

TEST_CASE("mmd loss: rejects singleton sets") {
  CHECK_THROWS_AS(mmd_loss({{0.0}}, {{1.0}}, 0.1), std::domain_error);
}

TEST_CASE("mixup endpoints reduce to plain reconstruction") {
  const auto m = init_model(4, 3, 2, Variant::plain, 55);
  Rng rng(56);
  const auto w0 = random_vec(rng, 4);
  const auto w1 = random_vec(rng, 4);
  std::vector<std::span<const double>> batch{w0, w1};

  TrainingConfig cfg;
  cfg.weights = LossWeights{0.0, 0.0, 0.0, 1.0, 1.0};
  BatchDraws draws;
  draws.mixup = {{0, 1, 1.0}};  // gamma = 1: the combination is w0 itself
  LossParts parts;
  (void)batch_loss(m, batch, cfg, draws, nullptr, &parts);
  CHECK(parts.mixup_c == doctest::Approx(reconstruction_loss(m, {w0})).epsilon(1e-12));
  CHECK(parts.mixup_z == doctest::Approx(0.0).epsilon(1e-15));

  draws.mixup = {{0, 1, 0.0}};  // gamma = 0: the combination is w1
  (void)batch_loss(m, batch, cfg, draws, nullptr, &parts);
  CHECK(parts.mixup_c == doctest::Approx(reconstruction_loss(m, {w1})).epsilon(1e-12));
  CHECK(parts.mixup_z == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("mixup latent-linearity loss vanishes for a linear encoder") {
  AutoencoderModel m;
  m.filter_len = 4;
  m.hidden_dim = 3;
  m.latent_dim = 2;
  m.spectral_boundaries = false;
  m.identity_activation = true;
  Rng rng(57);
  auto fill = [&](DenseLayer& l, std::size_t out, std::size_t in) {
    l.out = out;
    l.in = in;
    l.w = random_vec(rng, out * in);
    l.b.assign(out, 0.0);  // affine offset would break exact linearity
  };
  fill(m.enc1, 3, 4);
  fill(m.enc2, 2, 3);
  fill(m.dec1, 3, 2);
  fill(m.dec2, 4, 3);
  const auto w0 = random_vec(rng, 4);
  const auto w1 = random_vec(rng, 4);
  const auto [lc, lz] = mixup_losses(m, {w0, w1}, 32, 99);
  (void)lc;
  CHECK(lz <= 1e-24);
}

TEST_CASE("mixup rejects a batch of one") {
  const auto m = init_model(4, 3, 2, Variant::plain, 58);
  Rng rng(59);
  const auto w0 = random_vec(rng, 4);
  CHECK_THROWS_AS(mixup_losses(m, {w0}, 8, 1), std::domain_error);
}

TEST_CASE("mixup_losses deterministic per seed") {
  const auto m = init_model(4, 3, 2, Variant::plain, 60);
  Rng rng(61);
  const auto w0 = random_vec(rng, 4);
  const auto w1 = random_vec(rng, 4);
  const auto a = mixup_losses(m, {w0, w1}, 16, 5);
  const auto b = mixup_losses(m, {w0, w1}, 16, 5);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("total-loss parameter gradients match finite differences per variant") {
  Rng rng(62);
  const std::size_t len = 4, rows = 4;
  std::vector<std::vector<double>> data(rows);
  for (auto& r : data) r = random_vec(rng, len, 0.5);
  std::vector<std::span<const double>> batch(data.begin(), data.end());

  struct Case {
    Variant variant;
    bool mixup;
  };
  for (const Case c : {Case{Variant::plain, false}, Case{Variant::plain, true},
                       Case{Variant::vae, false}, Case{Variant::infovae, true}}) {
    CAPTURE(static_cast<int>(c.variant));
    CAPTURE(c.mixup);
    auto m = init_model(len, 3, 2, c.variant, 63);
    TrainingConfig cfg;
    cfg.weights = default_weights(c.variant, c.mixup);
    cfg.weights.mmd = c.variant == Variant::infovae ? 2.0 : cfg.weights.mmd;  // keep FD well-scaled
    cfg.mixup_count = 6;
    cfg.kernel_variance = 0.5;
    const auto draws = draw_batch_noise(m, cfg, rows, 777);

    ModelGrads grads = zero_grads(m);
    (void)batch_loss(m, batch, cfg, draws, &grads, nullptr);

    auto params = param_arrays(m);
    auto gs = grad_arrays(grads);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t a = 0; a < params.size(); ++a) {
      for (std::size_t i = 0; i < params[a]->size(); i += 3) {  // sample every 3rd parameter
        const double orig = (*params[a])[i];
        (*params[a])[i] = orig + h;
        const double lp = batch_loss(m, batch, cfg, draws, nullptr, nullptr);
        (*params[a])[i] = orig - h;
        const double lm = batch_loss(m, batch, cfg, draws, nullptr, nullptr);
        (*params[a])[i] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double err = std::abs((*gs[a])[i] - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
      }
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("train: zero epochs leave the model untouched") {
  auto m = init_model(4, 3, 2, Variant::plain, 64);
  const auto before = m;
  const auto ds = toy_dataset(8, 4, 65);
  TrainingConfig cfg;
  cfg.epochs = 0;
  const auto history = train(m, ds, cfg);
  CHECK(history.empty());
  auto pa = param_arrays(m);
  auto pb = param_arrays(const_cast<AutoencoderModel&>(before));
  for (std::size_t a = 0; a < pa.size(); ++a) CHECK(*pa[a] == *pb[a]);
}

TEST_CASE("train: memorizes a single repeated row") {
  FilterDataset ds;
  ds.filter_len = 4;
  ds.scale = 1.0;
  Rng rng(66);
  const auto row = random_vec(rng, 4, 0.4);
  for (int i = 0; i < 4; ++i) {
    ds.filters.insert(ds.filters.end(), row.begin(), row.end());
    ds.positions.push_back({0.0, 0.0, 0.0});
  }
  auto m = init_model(4, 8, 2, Variant::plain, 67);
  TrainingConfig cfg;
  cfg.epochs = 800;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 4;
  cfg.validation_fraction = 0.0;
  cfg.weights = default_weights(Variant::plain, false);
  const auto history = train(m, ds, cfg);
  REQUIRE(history.size() == 800);
  for (const auto& rec : history) CHECK(std::isfinite(rec.train.total));
  std::vector<std::span<const double>> batch{row};
  CHECK(reconstruction_loss(m, batch) < 1e-6);
}

TEST_CASE("train: deterministic given the seed") {
  const auto ds = toy_dataset(10, 4, 68);
  TrainingConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.seed = 99;
  auto m1 = init_model(4, 3, 2, Variant::plain, 70);
  auto m2 = init_model(4, 3, 2, Variant::plain, 70);
  (void)train(m1, ds, cfg);
  (void)train(m2, ds, cfg);
  auto p1 = param_arrays(m1), p2 = param_arrays(m2);
  for (std::size_t a = 0; a < p1.size(); ++a) CHECK(*p1[a] == *p2[a]);
}
