#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace anc {

enum class Variant { plain, vae, infovae };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct DenseLayer {
  std::size_t out = 0, in = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

// Two-layer spectral autoencoder. Encoder: rfft_concat -> E1 -> layernorm ->
// SiLU -> E2 (k outputs, or 2k mean/logvar for the VAE variants). Decoder:
// D1 -> layernorm -> SiLU -> D2 -> irfft_concat.
//
// spectral_boundaries / identity_activation switch the boundary transforms
// and the layernorm+SiLU stage off, giving purely linear networks for the
// closed-form checks in the latent controller analysis.
struct AutoencoderModel {
  DenseLayer enc1, enc2, dec1, dec2;
  Variant variant = Variant::plain;
  std::size_t filter_len = 0;   // L, even
  std::size_t hidden_dim = 0;   // h
  std::size_t latent_dim = 0;   // k
  bool spectral_boundaries = true;
  bool identity_activation = false;

  std::size_t head_dim() const {
    return variant == Variant::plain ? latent_dim : 2 * latent_dim;
  }
};

double silu(double x);
std::vector<double> silu(std::span<const double> x);

// Zero mean, unit variance, no learned affine; variance floor 1e-5.
std::vector<double> layernorm(std::span<const double> v);

// Seeded uniform +-sqrt(1/fan_in) init.
AutoencoderModel init_model(std::size_t filter_len, std::size_t hidden_dim,
                            std::size_t latent_dim, Variant variant, std::uint64_t seed);

// Recorded activations for one forward pass through half the network.
struct HalfTrace {
  std::vector<double> input;      // network input (spectral side for encoder)
  std::vector<double> pre_norm;   // first affine output
  std::vector<double> normed;     // after layernorm (== pre_norm when identity)
  std::vector<double> activated;  // after SiLU
  std::vector<double> output;     // second affine output
  double inv_sigma = 1.0;         // layernorm 1/sqrt(var + eps)
};

// Full encoder head: length k (plain) or 2k as (mean, logvar).
std::vector<double> encode_raw(const AutoencoderModel& m, std::span<const double> w,
                               HalfTrace* trace = nullptr);
// Deterministic latent: the mean head for VAE variants.
std::vector<double> encode_mean(const AutoencoderModel& m, std::span<const double> w);

std::vector<double> decode(const AutoencoderModel& m, std::span<const double> z,
                           HalfTrace* trace = nullptr);

struct LayerGrads {
  std::vector<double> w, b;
};
struct ModelGrads {
  LayerGrads enc1, enc2, dec1, dec2;
};
ModelGrads zero_grads(const AutoencoderModel& m);

// Canonical parameter order: E1.W, E1.b, E2.W, E2.b, D1.W, D1.b, D2.W, D2.b.
std::vector<std::vector<double>*> param_arrays(AutoencoderModel& m);
std::vector<std::vector<double>*> grad_arrays(ModelGrads& g);
std::size_t param_count(const AutoencoderModel& m);

// Reverse passes. decode_backward returns d_z and (optionally) accumulates
// decoder parameter gradients; encode_backward accumulates encoder parameter
// gradients from the head adjoint.
std::vector<double> decode_backward(const AutoencoderModel& m, const HalfTrace& trace,
                                    std::span<const double> d_w, ModelGrads* grads);
void encode_backward(const AutoencoderModel& m, const HalfTrace& trace,
                     std::span<const double> d_head, ModelGrads* grads);

// Upsilon(z) . v: reverse-mode pullback of the decoder at z.
std::vector<double> decoder_vjp(const AutoencoderModel& m, std::span<const double> z,
                                std::span<const double> v);

// Model file: JSON manifest plus a base-16 float64 parameter blob in the
// canonical order above.
void save_model(const std::string& path, const AutoencoderModel& m,
                const std::string& training_metadata_json = "");
AutoencoderModel load_model(const std::string& path);

}  // namespace anc
