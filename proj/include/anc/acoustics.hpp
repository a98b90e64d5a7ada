#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace anc {

using Vec3 = std::array<double, 3>;

struct RoomSpec {
  Vec3 dimensions{6.0, 6.2, 3.0};  // meters
  double rt60 = 0.15;              // seconds
  double sample_rate = 16000.0;    // Hz
  std::size_t rir_length = 512;    // taps
  double speed_of_sound = 343.0;   // m/s
  int max_order = -1;              // reflection count bound; derived when < 0
};

struct ImpulseResponse {
  std::vector<double> taps;
  double sample_rate = 16000.0;
};

// Sabine inversion: alpha = 0.161 V / (S rt60), clamped to (0, 1].
// rt60 == 0 is the anechoic sentinel (alpha = 1, direct path only).
double absorption_from_rt60(const RoomSpec& room);

// Reflection-count bound that guarantees every image whose delay can land
// inside the rir_length window is enumerated.
int default_max_order(const RoomSpec& room);

// Shoebox image source model with 1/(4 pi d) spreading, reflection
// coefficient sqrt(1 - alpha) per bounce, and an 81-tap Hann-windowed sinc
// for fractional delays.
ImpulseResponse simulate_rir(const RoomSpec& room, const Vec3& source, const Vec3& mic);

// RT60 estimate from backward-integrated energy, linear fit over the
// -5 dB .. -25 dB span extrapolated to 60 dB.
double schroeder_rt60(const ImpulseResponse& ir);

// Drops the first `trim` taps and re-pads to the original length. Removing a
// common bulk delay from p and g leaves the optimal control filter unchanged.
ImpulseResponse trim_onset(const ImpulseResponse& ir, std::size_t trim);

/// RIR bank container: text header "ANCRIR1 <L> <fs> <count>\n" followed by
// row-major little-endian float32 taps; positions in a sidecar text table.
void save_rir_bank(const std::string& path, const std::vector<ImpulseResponse>& rirs,
                   const std::vector<Vec3>& positions);
std::vector<ImpulseResponse> load_rir_bank(const std::string& path, std::vector<Vec3>* positions);

}  // namespace anc
