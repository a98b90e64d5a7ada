#include "anc/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "anc/errors.hpp"
#include "anc/fft.hpp"
#include "anc/rng.hpp"

namespace anc {

namespace {

constexpr double kLayerNormEps = 1e-5;

void dense_forward(const DenseLayer& l, std::span<const double> x, std::vector<double>& out) {
  if (x.size() != l.in) throw std::invalid_argument("dense layer input shape mismatch");
  out.assign(l.out, 0.0);
  for (std::size_t i = 0; i < l.out; ++i) {
    const double* row = l.w.data() + i * l.in;
    double acc = l.b[i];
    for (std::size_t j = 0; j < l.in; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

// Accumulates parameter grads (if lg) and input grads (if d_in).
void dense_backward(const DenseLayer& l, std::span<const double> x, std::span<const double> d_out,
                    LayerGrads* lg, std::vector<double>* d_in) {
  if (d_in) d_in->assign(l.in, 0.0);
  for (std::size_t i = 0; i < l.out; ++i) {
    const double g = d_out[i];
    const double* row = l.w.data() + i * l.in;
    if (lg) {
      lg->b[i] += g;
      double* grow = lg->w.data() + i * l.in;
      for (std::size_t j = 0; j < l.in; ++j) grow[j] += g * x[j];
    }
    if (d_in) {
      for (std::size_t j = 0; j < l.in; ++j) (*d_in)[j] += g * row[j];
    }
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double silu_deriv(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// y and inv_sigma from the forward pass; dx = inv*(dy - mean(dy) - y*mean(dy.y))
std::vector<double> layernorm_backward(std::span<const double> y, double inv_sigma,
                                       std::span<const double> dy) {
  const std::size_t n = y.size();
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m1 += dy[i];
    m2 += dy[i] * y[i];
  }
  m1 /= static_cast<double>(n);
  m2 /= static_cast<double>(n);
  std::vector<double> dx(n);
  for (std::size_t i = 0; i < n; ++i) dx[i] = inv_sigma * (dy[i] - m1 - y[i] * m2);
  return dx;
}

DenseLayer init_layer(std::size_t out, std::size_t in, Rng& rng) {
  DenseLayer l;
  l.out = out;
  l.in = in;
  l.w.resize(out * in);
  l.b.resize(out);
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  for (auto& v : l.w) v = rng.uniform(-bound, bound);
  for (auto& v : l.b) v = rng.uniform(-bound, bound);
  return l;
}

// Shared stack: affine -> layernorm -> SiLU -> affine (norm+act skipped in
// identity mode).
void half_forward(const AutoencoderModel& m, const DenseLayer& l1, const DenseLayer& l2,
                  std::span<const double> input, HalfTrace& t) {
  t.input.assign(input.begin(), input.end());
  dense_forward(l1, input, t.pre_norm);
  if (m.identity_activation) {
    t.normed = t.pre_norm;
    t.activated = t.normed;
    t.inv_sigma = 1.0;
  } else {
    double mu = 0.0;
    for (double v : t.pre_norm) mu += v;
    mu /= static_cast<double>(t.pre_norm.size());
    double var = 0.0;
    for (double v : t.pre_norm) var += (v - mu) * (v - mu);
    var /= static_cast<double>(t.pre_norm.size());
    t.inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
    t.normed.resize(t.pre_norm.size());
    for (std::size_t i = 0; i < t.pre_norm.size(); ++i) {
      t.normed[i] = (t.pre_norm[i] - mu) * t.inv_sigma;
    }
    t.activated = silu(t.normed);
  }
  dense_forward(l2, t.activated, t.output);
}

// Adjoint of half_forward; returns d_input.
std::vector<double> half_backward(const AutoencoderModel& m, const DenseLayer& l1,
                                  const DenseLayer& l2, const HalfTrace& t,
                                  std::span<const double> d_out, LayerGrads* g1, LayerGrads* g2,
                                  bool want_input_grad) {
  std::vector<double> d_act;
  dense_backward(l2, t.activated, d_out, g2, &d_act);
  std::vector<double> d_pre;
  if (m.identity_activation) {
    d_pre = std::move(d_act);
  } else {
    for (std::size_t i = 0; i < d_act.size(); ++i) d_act[i] *= silu_deriv(t.normed[i]);
    d_pre = layernorm_backward(t.normed, t.inv_sigma, d_act);
  }
  std::vector<double> d_in;
  dense_backward(l1, t.input, d_pre, g1, want_input_grad ? &d_in : nullptr);
  return d_in;
}

std::string hex_encode(const std::vector<double>& vals) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(vals.size() * 16);
  for (double v : vals) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int byte = 0; byte < 8; ++byte) {  // little-endian byte order
      const auto b = static_cast<unsigned>((bits >> (8 * byte)) & 0xff);
      out.push_back(digits[b >> 4]);
      out.push_back(digits[b & 0xf]);
    }
  }
  return out;
}

std::vector<double> hex_decode(const std::string& hex) {
  if (hex.size() % 16 != 0) throw std::runtime_error("model blob: bad hex length");
  auto nib = [](char c) -> std::uint64_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint64_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint64_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint64_t>(c - 'A' + 10);
    throw std::runtime_error("model blob: bad hex digit");
  };
  std::vector<double> vals(hex.size() / 16);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    std::uint64_t bits = 0;
    for (int byte = 0; byte < 8; ++byte) {
      const std::uint64_t hi = nib(hex[i * 16 + 2 * byte]);
      const std::uint64_t lo = nib(hex[i * 16 + 2 * byte + 1]);
      bits |= ((hi << 4) | lo) << (8 * byte);
    }
    double v;
    std::memcpy(&v, &bits, 8);
    vals[i] = v;
  }
  return vals;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::vae: return "vae";
    case Variant::infovae: return "infovae";
  }
  return "plain";
}

Variant variant_from_name(const std::string& name) {
  if (name == "plain") return Variant::plain;
  if (name == "vae") return Variant::vae;
  if (name == "infovae") return Variant::infovae;
  throw ConfigError("unknown model variant: " + name);
}

double silu(double x) { return x * sigmoid(x); }

std::vector<double> silu(std::span<const double> x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = silu(x[i]);
  return y;
}

std::vector<double> layernorm(std::span<const double> v) {
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  var /= static_cast<double>(v.size());
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mu) * inv;
  return out;
}

AutoencoderModel init_model(std::size_t filter_len, std::size_t hidden_dim,
                            std::size_t latent_dim, Variant variant, std::uint64_t seed) {
  if (filter_len == 0 || filter_len % 2 != 0) {
    throw ConfigError("filter_len must be even and nonzero");
  }
  AutoencoderModel m;
  m.variant = variant;
  m.filter_len = filter_len;
  m.hidden_dim = hidden_dim;
  m.latent_dim = latent_dim;
  Rng rng(seed);
  const std::size_t spec = spectral_size(filter_len);
  m.enc1 = init_layer(hidden_dim, spec, rng);
  m.enc2 = init_layer(m.head_dim(), hidden_dim, rng);
  m.dec1 = init_layer(hidden_dim, latent_dim, rng);
  m.dec2 = init_layer(spec, hidden_dim, rng);
  return m;
}

std::vector<double> encode_raw(const AutoencoderModel& m, std::span<const double> w,
                               HalfTrace* trace) {
  if (w.size() != m.filter_len) throw std::invalid_argument("encode: filter length mismatch");
  HalfTrace local;
  HalfTrace& t = trace ? *trace : local;
  if (m.spectral_boundaries) {
    const auto wbar = rfft_concat(w);
    half_forward(m, m.enc1, m.enc2, wbar, t);
  } else {
    half_forward(m, m.enc1, m.enc2, w, t);
  }
  return t.output;
}

std::vector<double> encode_mean(const AutoencoderModel& m, std::span<const double> w) {
  auto head = encode_raw(m, w);
  head.resize(m.latent_dim);
  return head;
}

std::vector<double> decode(const AutoencoderModel& m, std::span<const double> z,
                           HalfTrace* trace) {
  if (z.size() != m.latent_dim) throw std::invalid_argument("decode: latent length mismatch");
  HalfTrace local;
  HalfTrace& t = trace ? *trace : local;
  half_forward(m, m.dec1, m.dec2, z, t);
  if (m.spectral_boundaries) return irfft_concat(t.output);
  return t.output;
}

ModelGrads zero_grads(const AutoencoderModel& m) {
  auto zl = [](const DenseLayer& l) {
    return LayerGrads{std::vector<double>(l.w.size(), 0.0), std::vector<double>(l.b.size(), 0.0)};
  };
  return ModelGrads{zl(m.enc1), zl(m.enc2), zl(m.dec1), zl(m.dec2)};
}

std::vector<std::vector<double>*> param_arrays(AutoencoderModel& m) {
  return {&m.enc1.w, &m.enc1.b, &m.enc2.w, &m.enc2.b, &m.dec1.w, &m.dec1.b, &m.dec2.w, &m.dec2.b};
}

std::vector<std::vector<double>*> grad_arrays(ModelGrads& g) {
  return {&g.enc1.w, &g.enc1.b, &g.enc2.w, &g.enc2.b, &g.dec1.w, &g.dec1.b, &g.dec2.w, &g.dec2.b};
}

std::size_t param_count(const AutoencoderModel& m) {
  auto& mm = const_cast<AutoencoderModel&>(m);
  std::size_t n = 0;
  for (auto* a : param_arrays(mm)) n += a->size();
  return n;
}

std::vector<double> decode_backward(const AutoencoderModel& m, const HalfTrace& trace,
                                    std::span<const double> d_w, ModelGrads* grads) {
  std::vector<double> d_spec;
  if (m.spectral_boundaries) {
    d_spec = irfft_concat_adjoint(d_w);
  } else {
    d_spec.assign(d_w.begin(), d_w.end());
  }
  return half_backward(m, m.dec1, m.dec2, trace, d_spec, grads ? &grads->dec1 : nullptr,
                       grads ? &grads->dec2 : nullptr, true);
}

void encode_backward(const AutoencoderModel& m, const HalfTrace& trace,
                     std::span<const double> d_head, ModelGrads* grads) {
  half_backward(m, m.enc1, m.enc2, trace, d_head, grads ? &grads->enc1 : nullptr,
                grads ? &grads->enc2 : nullptr, false);
}

std::vector<double> decoder_vjp(const AutoencoderModel& m, std::span<const double> z,
                                std::span<const double> v) {
  if (v.size() != m.filter_len) throw std::invalid_argument("decoder_vjp: tangent length mismatch");
  HalfTrace trace;
  (void)decode(m, z, &trace);
  auto d_z = decode_backward(m, trace, v, nullptr);
  for (double x : d_z) {
    if (!std::isfinite(x)) throw NumericError("non-finite decoder VJP", 0);
  }
  return d_z;
}

void save_model(const std::string& path, const AutoencoderModel& m,
                const std::string& training_metadata_json) {
  nlohmann::json j;
  j["format"] = "ANCAE1";
  j["variant"] = variant_name(m.variant);
  j["filter_len"] = m.filter_len;
  j["hidden_dim"] = m.hidden_dim;
  j["latent_dim"] = m.latent_dim;
  j["spectral_boundaries"] = m.spectral_boundaries;
  j["identity_activation"] = m.identity_activation;
  std::vector<double> blob;
  auto& mm = const_cast<AutoencoderModel&>(m);
  for (auto* a : param_arrays(mm)) blob.insert(blob.end(), a->begin(), a->end());
  j["params_hex"] = hex_encode(blob);
  if (!training_metadata_json.empty()) {
    j["training"] = nlohmann::json::parse(training_metadata_json);
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_model: cannot open " + path);
  f << j.dump(2) << "\n";
}

AutoencoderModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  f >> j;
  if (j.value("format", "") != "ANCAE1") throw std::runtime_error("load_model: bad format tag");
  AutoencoderModel m =
      init_model(j.at("filter_len").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>(),
                 j.at("latent_dim").get<std::size_t>(),
                 variant_from_name(j.at("variant").get<std::string>()), 0);
  m.spectral_boundaries = j.value("spectral_boundaries", true);
  m.identity_activation = j.value("identity_activation", false);
  const auto blob = hex_decode(j.at("params_hex").get<std::string>());
  std::size_t off = 0;
  for (auto* a : param_arrays(m)) {
    if (off + a->size() > blob.size()) throw std::runtime_error("load_model: blob too short");
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(off),
              blob.begin() + static_cast<std::ptrdiff_t>(off + a->size()), a->begin());
    off += a->size();
  }
  if (off != blob.size()) throw std::runtime_error("load_model: blob size mismatch");
  return m;
}

}  // namespace anc
