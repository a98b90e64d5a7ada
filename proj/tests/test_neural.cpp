#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "anc/fft.hpp"
#include "anc/neural.hpp"
#include "anc/rng.hpp"

using namespace anc;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// straight-line re-implementation of the forward pass, used as the oracle
std::vector<double> oracle_dense(const DenseLayer& l, const std::vector<double>& x) {
  std::vector<double> y(l.out);
  for (std::size_t i = 0; i < l.out; ++i) {
    double acc = l.b[i];
    for (std::size_t j = 0; j < l.in; ++j) acc += l.w[i * l.in + j] * x[j];
    y[i] = acc;
  }
  return y;
}

std::vector<double> oracle_decode(const AutoencoderModel& m, const std::vector<double>& z) {
  auto h = oracle_dense(m.dec1, z);
  if (!m.identity_activation) {
    h = layernorm(h);
    for (auto& v : h) v = silu(v);
  }
  auto s = oracle_dense(m.dec2, h);
  if (m.spectral_boundaries) return irfft_concat(s);
  return s;
}

std::vector<double> oracle_encode_raw(const AutoencoderModel& m, const std::vector<double>& w) {
  std::vector<double> in = m.spectral_boundaries ? rfft_concat(w) : w;
  auto h = oracle_dense(m.enc1, in);
  if (!m.identity_activation) {
    h = layernorm(h);
    for (auto& v : h) v = silu(v);
  }
  return oracle_dense(m.enc2, h);
}

// directional derivative of decode along u, Richardson-extrapolated central
// differences: (4 D(h/2) - D(h)) / 3, error O(h^4)
std::vector<double> fd_jvp(const AutoencoderModel& m, const std::vector<double>& z,
                           const std::vector<double>& u, double h = 1e-4) {
  auto eval = [&](double step) {
    std::vector<double> zp = z, zm = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
      zp[i] += step * u[i];
      zm[i] -= step * u[i];
    }
    const auto wp = decode(m, zp);
    const auto wm = decode(m, zm);
    std::vector<double> d(wp.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (wp[i] - wm[i]) / (2.0 * step);
    return d;
  };
  const auto d1 = eval(h);
  const auto d2 = eval(h / 2.0);
  std::vector<double> out(d1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (4.0 * d2[i] - d1[i]) / 3.0;
  return out;
}

AutoencoderModel linear_decoder_model(const std::vector<double>& a_matrix, std::size_t len,
                                      std::size_t k) {
  // w = A z: dec1 = identity (h = k), dec2 = A, no norm/activation/spectral map
  AutoencoderModel m;
  m.variant = Variant::plain;
  m.filter_len = len;
  m.hidden_dim = k;
  m.latent_dim = k;
  m.spectral_boundaries = false;
  m.identity_activation = true;
  m.dec1.out = k;
  m.dec1.in = k;
  m.dec1.w.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) m.dec1.w[i * k + i] = 1.0;
  m.dec1.b.assign(k, 0.0);
  m.dec2.out = len;
  m.dec2.in = k;
  m.dec2.w = a_matrix;  // len x k row-major
  m.dec2.b.assign(len, 0.0);
  m.enc1.out = k;
  m.enc1.in = len;
  m.enc1.w.assign(k * len, 0.0);
  m.enc1.b.assign(k, 0.0);
  m.enc2.out = k;
  m.enc2.in = k;
  m.enc2.w.assign(k * k, 0.0);
  m.enc2.b.assign(k, 0.0);
  return m;
}

}  // namespace

TEST_CASE("silu values") {
  CHECK(silu(0.0) == 0.0);
  CHECK(silu(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(silu(-1.0) == doctest::Approx(-1.0 + 0.7310585786300049).epsilon(1e-10));
}

TEST_CASE("layernorm statistics") {
  Rng rng(3);
  const auto v = random_vec(rng, 37, 4.0);
  const auto y = layernorm(v);
  double mu = 0.0;
  for (double x : y) mu += x;
  mu /= static_cast<double>(y.size());
  CHECK(std::abs(mu) < 1e-9);
  double var = 0.0;
  for (double x : y) var += (x - mu) * (x - mu);
  var /= static_cast<double>(y.size());
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // 1e-5 variance floor
}

TEST_CASE("encode/decode match a straight-line oracle on a tiny model") {
  const auto m = init_model(4, 3, 2, Variant::plain, 77);
  Rng rng(5);
  const auto w = random_vec(rng, 4);
  const auto z = encode_raw(m, w);
  const auto z_ref = oracle_encode_raw(m, w);
  REQUIRE(z.size() == 2);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == doctest::Approx(z_ref[i]).epsilon(1e-14));

  const auto out = decode(m, z);
  const auto out_ref = oracle_decode(m, z);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] == doctest::Approx(out_ref[i]).epsilon(1e-14));
  }
}

TEST_CASE("vae head carries mean and log-variance") {
  const auto m = init_model(4, 3, 2, Variant::vae, 78);
  Rng rng(6);
  const auto w = random_vec(rng, 4);
  const auto head = encode_raw(m, w);
  CHECK(head.size() == 4);  // 2k
  const auto mean = encode_mean(m, w);
  REQUIRE(mean.size() == 2);
  CHECK(mean[0] == head[0]);
  CHECK(mean[1] == head[1]);
}

TEST_CASE("zero parameters propagate biases only") {
  auto m = init_model(4, 3, 2, Variant::plain, 79);
  for (auto* a : param_arrays(m)) a->assign(a->size(), 0.0);
  m.enc2.b = {0.5, -0.25};
  const std::vector<double> w(4, 0.0);
  const auto z = encode_raw(m, w);
  // enc1 output all zeros -> layernorm of a constant vector is 0 -> silu 0
  CHECK(z[0] == doctest::Approx(0.5));
  CHECK(z[1] == doctest::Approx(-0.25));
}

TEST_CASE("zero decoder parameters produce the zero filter") {
  auto m = init_model(8, 4, 2, Variant::plain, 80);
  m.dec1.w.assign(m.dec1.w.size(), 0.0);
  m.dec1.b.assign(m.dec1.b.size(), 0.0);
  m.dec2.w.assign(m.dec2.w.size(), 0.0);
  m.dec2.b.assign(m.dec2.b.size(), 0.0);
  const auto w = decode(m, std::vector<double>{1.0, -2.0});
  for (double v : w) CHECK(v == 0.0);
}

TEST_CASE("finite inputs give finite outputs") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = init_model(8, 5, 3, rep % 2 ? Variant::vae : Variant::plain, 100 + rep);
    const auto w = random_vec(rng, 8, 10.0);
    for (double v : encode_raw(m, w)) CHECK(std::isfinite(v));
    const auto z = random_vec(rng, 3, 10.0);
    for (double v : decode(m, z)) CHECK(std::isfinite(v));
  }
}

TEST_CASE("decode is continuous in z") {
  const auto m = init_model(8, 5, 3, Variant::plain, 81);
  Rng rng(8);
  const auto z = random_vec(rng, 3);
  const auto w0 = decode(m, z);
  for (double h : {1e-2, 1e-4, 1e-6}) {
    auto zp = z;
    zp[0] += h;
    const auto w1 = decode(m, zp);
    double d = 0.0;
    for (std::size_t i = 0; i < w0.size(); ++i) d += (w1[i] - w0[i]) * (w1[i] - w0[i]);
    CHECK(std::sqrt(d) < 100.0 * h);
  }
}

TEST_CASE("decoder VJP: zero tangent maps to zero") {
  const auto m = init_model(8, 5, 3, Variant::plain, 82);
  const std::vector<double> z{0.3, -0.2, 0.9};
  const auto u = decoder_vjp(m, z, std::vector<double>(8, 0.0));
  for (double v : u) CHECK(v == 0.0);
}

TEST_CASE("decoder VJP: linear decoder reduces to A^T v") {
  Rng rng(9);
  const std::size_t len = 6, k = 2;
  const auto a_matrix = random_vec(rng, len * k);
  const auto m = linear_decoder_model(a_matrix, len, k);
  const auto z = random_vec(rng, k);
  const auto v = random_vec(rng, len);
  const auto u = decoder_vjp(m, z, v);
  for (std::size_t i = 0; i < k; ++i) {
    double expect = 0.0;
    for (std::size_t j = 0; j < len; ++j) expect += a_matrix[j * k + i] * v[j];
    CHECK(u[i] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("decoder VJP matches finite differences over 100 random instances") {
  Rng rng(10);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto m = init_model(8, 5, 3, Variant::plain, 1000 + rep);
    const auto z = random_vec(rng, 3);
    const auto v = random_vec(rng, 8);
    const auto u = decoder_vjp(m, z, v);
    // u_i = sum_j v_j dw_j/dz_i = <v, fd_jvp along e_i>
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> e(3, 0.0);
      e[i] = 1.0;
      const auto col = fd_jvp(m, z, e);
      const double fd = dot(col, v);
      num += (u[i] - fd) * (u[i] - fd);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("VJP/JVP duality to 1e-10") {
  Rng rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const auto m = init_model(8, 5, 3, Variant::plain, 2000 + rep);
    const auto z = random_vec(rng, 3);
    const auto u_dir = random_vec(rng, 3);
    const auto v = random_vec(rng, 8);
    const auto jvp = fd_jvp(m, z, u_dir);
    const auto vjp = decoder_vjp(m, z, v);
    const double lhs = dot(v, jvp);
    const double rhs = dot(vjp, u_dir);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("VJP linearity in the tangent") {
  Rng rng(12);
  const auto m = init_model(8, 5, 3, Variant::plain, 83);
  const auto z = random_vec(rng, 3);
  const auto v1 = random_vec(rng, 8);
  const auto v2 = random_vec(rng, 8);
  std::vector<double> combo(8);
  for (std::size_t i = 0; i < 8; ++i) combo[i] = 1.7 * v1[i] - 0.4 * v2[i];
  const auto a = decoder_vjp(m, z, v1);
  const auto b = decoder_vjp(m, z, v2);
  const auto c = decoder_vjp(m, z, combo);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(c[i] - (1.7 * a[i] - 0.4 * b[i])) <= 1e-10 * std::max(1.0, std::abs(c[i])));
  }
}

TEST_CASE("parameter gradients match finite differences (decoder quadratic loss)") {
  // loss(theta) = 0.5 ||decode(z)||^2; adjoint d_w = decode(z)
  Rng rng(13);
  auto m = init_model(4, 3, 2, Variant::plain, 84);
  const auto z = random_vec(rng, 2);

  auto loss = [&](const AutoencoderModel& model) {
    const auto w = decode(model, z);
    return 0.5 * dot(w, w);
  };

  HalfTrace trace;
  const auto w = decode(m, z, &trace);
  ModelGrads grads = zero_grads(m);
  (void)decode_backward(m, trace, w, &grads);

  auto params = param_arrays(m);
  auto gptrs = grad_arrays(grads);
  const double h = 1e-6;
  for (std::size_t a = 4; a < 8; ++a) {  // decoder arrays only
    for (std::size_t i = 0; i < params[a]->size(); ++i) {
      const double orig = (*params[a])[i];
      (*params[a])[i] = orig + h;
      const double lp = loss(m);
      (*params[a])[i] = orig - h;
      const double lm = loss(m);
      (*params[a])[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double g = (*gptrs[a])[i];
      CHECK(std::abs(g - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("zero adjoint yields zero parameter gradients") {
  auto m = init_model(4, 3, 2, Variant::plain, 85);
  HalfTrace trace;
  (void)decode(m, std::vector<double>{0.1, 0.2}, &trace);
  ModelGrads grads = zero_grads(m);
  (void)decode_backward(m, trace, std::vector<double>(4, 0.0), &grads);
  for (auto* a : grad_arrays(grads)) {
    for (double v : *a) CHECK(v == 0.0);
  }
}

TEST_CASE("model file round trip is bit-exact") {
  const auto m = init_model(8, 5, 3, Variant::infovae, 86);
  const auto path = (std::filesystem::temp_directory_path() / "model_test.json").string();
  save_model(path, m, "{\"note\":1}");
  auto loaded = load_model(path);
  CHECK(loaded.variant == Variant::infovae);
  CHECK(loaded.filter_len == 8);
  auto& lm = loaded;
  auto& om = const_cast<AutoencoderModel&>(m);
  auto lp = param_arrays(lm), op = param_arrays(om);
  for (std::size_t a = 0; a < lp.size(); ++a) CHECK(*lp[a] == *op[a]);
  std::filesystem::remove(path);
}
