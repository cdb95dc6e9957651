#pragma once

// Block transmission chain: subcarrier mapping, OFDM modulation, guard
// interval, PA, multipath channel, guard removal and frequency-domain
// equalization.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cpsofdm/dsp.hpp"
#include "cpsofdm/precoder.hpp"

namespace cpsofdm {

/// One transmitted block of N + G samples.
struct BlockSignal {
  ComplexVec samples;
  std::size_t index = 0;
};

/// Maps `s` onto subcarriers eta..eta+S-1, N-point unitary IFFT, guard.
BlockSignal modulate(const ComplexVec& s, const WaveformConfig& cfg, std::size_t index = 0);

/// Same mapping, IFFT of size J N with each subcarrier kept at its signed
/// baseband frequency; the guard is J G samples. Samples at multiples of J
/// coincide with `modulate`.
ComplexVec modulate_oversampled(const ComplexVec& s, const WaveformConfig& cfg,
                                std::size_t oversampling);

/// Concatenation in block order; all blocks must have the same length.
ComplexVec serialize(std::span<const BlockSignal> blocks);

enum class PaKind { kIdentity, kPolynomial, kRapp };

struct PaModel {
  PaKind kind = PaKind::kIdentity;
  std::vector<cdouble> coefficients;  // c_1..c_Q applied as c_q x |x|^(q-1)
  double smoothness = 2.0;             // Rapp p
  double saturation = 1.0;             // Rapp A_sat, polynomial reference amplitude
  double phase_compensation = 0.0;     // radians
  double ibo_db = 3.0;

  static PaModel identity() { return {}; }
  static PaModel rapp(double smoothness, double saturation, double ibo_db);
  static PaModel polynomial(std::vector<cdouble> coefficients, double ibo_db,
                            double phase_compensation);
};

/// Reads a JSON list of (real, imag) coefficient pairs: {"coefficients": [[re, im], ...]}.
std::vector<cdouble> load_pa_coefficients(const std::filesystem::path& path);

/// Memoryless nonlinearity. The stream is scaled so that its mean power sits
/// `ibo_db` below the saturation reference, distorted, scaled back and
/// rotated by the phase compensation.
ComplexVec pa_apply(const ComplexVec& stream, const PaModel& pa);

/// Rapp AM/AM curve for a single amplitude.
double rapp_amplitude(double amplitude, double smoothness, double saturation);

/// Quasi-static multipath channel with AWGN.
struct ChannelModel {
  ComplexVec taps;       // h[0..L]
  double noise_var = 0;  // N0

  std::size_t order() const { return taps.size() > 0 ? static_cast<std::size_t>(taps.size()) - 1 : 0; }
  static ChannelModel flat(double noise_var = 0.0);
};

/// Power-delay profile; realizations draw one Rayleigh coefficient per tap.
struct ChannelProfile {
  std::vector<double> delays_ns;
  std::vector<double> powers_db;

  /// Built-in exponential profile: `taps` taps spaced one sample apart with
  /// `decay_db` attenuation per tap.
  static ChannelProfile exponential(std::size_t taps = 9, double decay_db = 3.0,
                                    double sample_rate_hz = 1.0);
  /// Single unit tap at zero delay.
  static ChannelProfile flat();

  /// Tap powers on the sample grid (delays rounded to the nearest sample),
  /// normalized to unit total power.
  RealVec sample_powers(double sample_rate_hz) const;

  ChannelModel realize(Rng& rng, double sample_rate_hz, double noise_var) const;
};

/// Reads {"taps": [{"delay_ns": x, "power_db": y}, ...]}.
ChannelProfile load_channel_profile(const std::filesystem::path& path);

/// Linear convolution with the taps, truncated to the input length, plus
/// i.i.d. CN(0, N0) noise. The noise draw is skipped when N0 = 0.
ComplexVec channel_apply(const ComplexVec& stream, const ChannelModel& ch, Rng& rng);

/// Convolution only, with the taps switching every `block_len` samples
/// (tap set b applies to output samples of block b).
ComplexVec channel_convolve_blocks(const ComplexVec& stream, std::span<const ComplexVec> taps,
                                   std::size_t block_len);

/// Guard removal (CP drop / ZP overlap-add / none), N-point FFT and
/// extraction of the S occupied subcarriers.
ComplexVec receive_block(const ComplexVec& y, const WaveformConfig& cfg);

/// Channel frequency response on the occupied subcarriers:
/// H_i = sum_l h[l] exp(-j 2 pi (eta + i) l / N).
ComplexVec channel_frequency_response(const ComplexVec& taps, const WaveformConfig& cfg);

enum class FdeMode { kZf, kMmse };

FdeMode parse_fde_mode(const std::string& name);

/// Q in d_hat = Q r for the effective S x D precoder p_bar and diagonal H.
ComplexMat fde_matrix(const ComplexVec& channel_freq, const ComplexMat& p_bar, double noise_var,
                      double symbol_energy, FdeMode mode);

/// d_hat = Q r.
ComplexVec fde(const ComplexVec& r, const ComplexVec& channel_freq, const ComplexMat& p_bar,
               double noise_var, double symbol_energy, FdeMode mode);

/// Per-stream gains diag(Q H p_bar); dividing by them removes the MMSE bias
/// before hard decisions.
ComplexVec fde_gains(const ComplexMat& q, const ComplexVec& channel_freq, const ComplexMat& p_bar);

}  // namespace cpsofdm
