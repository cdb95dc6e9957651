#pragma once

// Circularly pulse-shaped (CPS) subband precoder: P = W_S A where A is the
// GFDM matrix generated by one prototype pulse.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cpsofdm/dsp.hpp"

namespace cpsofdm {

enum class GuardType { kCp, kZp, kNone };

GuardType parse_guard_type(const std::string& name);
std::string to_string(GuardType type);

/// Static parameters of one user's waveform.
struct WaveformConfig {
  std::size_t n_fft = 0;         // N
  std::size_t k_sub = 1;         // K
  std::size_t m_sub = 1;         // M
  std::size_t first_subcarrier = 0;  // eta
  GuardType guard = GuardType::kCp;
  std::size_t guard_len = 0;     // G
  std::vector<std::size_t> data_k;  // data positions in Z_K
  std::vector<std::size_t> data_m;  // data positions in Z_M

  std::size_t subcarriers() const { return k_sub * m_sub; }  // S
  std::size_t block_len() const { return n_fft + guard_len; }  // N'
  /// CP length as it enters the spectral formulas (0 for ZP / no guard).
  std::size_t spectral_cp_len() const { return guard == GuardType::kCp ? guard_len : 0; }
  std::size_t num_data() const { return data_k.size() * data_m.size(); }  // D
  std::size_t num_zeros() const { return subcarriers() - num_data(); }     // Z
  /// Sorted positions kM + m of the data symbols inside d.
  std::vector<std::size_t> data_indices() const;

  /// Throws kInvalidConfig when an invariant is broken.
  void validate() const;

  /// Convenience: full data sets Z_K and Z_M.
  static WaveformConfig make(std::size_t n_fft, std::size_t k_sub, std::size_t m_sub,
                             std::size_t first_subcarrier, GuardType guard,
                             std::size_t guard_len);
};

/// The three equivalent prototype representations.
///
/// Normalization: the GFDM pulse is tied to the shaping vector by
/// p = sqrt(M) W_S a00, which is the scaling under which W_S A equals the
/// sum of spectrally shaped M-point DFT precoders C_{kM} diag(p) R W_M.
/// Gamma = sqrt(S / rho) reshape(p, M, K) W_K^H with rho = ||p||^2.
class ShapingSet {
 public:
  ShapingSet() = default;

  static ShapingSet from_shaping(const ComplexVec& p, std::size_t k_sub, std::size_t m_sub);
  static ShapingSet from_pulse(const ComplexVec& a00, std::size_t k_sub, std::size_t m_sub);
  /// Gamma together with the energy it was normalized with.
  static ShapingSet from_characteristic(const ComplexMat& gamma, double rho);

  std::size_t k_sub() const { return k_; }
  std::size_t m_sub() const { return m_; }
  std::size_t size() const { return k_ * m_; }
  double rho() const { return rho_; }

  const ComplexVec& pulse() const { return a00_; }
  const ComplexVec& shaping() const { return p_; }
  const ComplexMat& characteristic() const { return gamma_; }

  /// Copy with p scaled to energy `rho`.
  ShapingSet with_energy(double rho) const;

 private:
  std::size_t k_ = 0;
  std::size_t m_ = 0;
  double rho_ = 0.0;
  ComplexVec a00_;
  ComplexVec p_;
  ComplexMat gamma_;
};

void save_shaping(const ShapingSet& shaping, const std::filesystem::path& path);
ShapingSet load_shaping(const std::filesystem::path& path);
std::string shaping_to_json(const ShapingSet& shaping);
ShapingSet shaping_from_json(const std::string& text);

/// Columns kM + m: [a_{k,m}]_s = a00[<s - mK>_S] exp(j 2 pi k s / K).
ComplexMat build_gfdm_matrix(const ComplexVec& a00, std::size_t k_sub, std::size_t m_sub);

/// Explicit S x S precoder, with the GFDM matrix cached.
struct PrecodingMatrix {
  ComplexMat p;
  ComplexMat a;

  static PrecodingMatrix build(const ShapingSet& shaping);
  /// Columns of P at the data positions of `cfg` (S x D).
  ComplexMat data_columns(const WaveformConfig& cfg) const;
};

/// s = W_S A d.
ComplexVec precode_direct(const ComplexVec& d, const ShapingSet& shaping);
/// s = sum_k C_{kM} diag(p) R W_M d_k using M-point FFTs.
ComplexVec precode_frequency(const ComplexVec& d, const ShapingSet& shaping);
/// s = (W_K x I_M) diag(vec Gamma) (W_K^H x W_M) d, rescaled by sqrt(rho / M)
/// so that the result equals the other two forms for any energy rho.
ComplexVec precode_characteristic(const ComplexVec& d, const ShapingSet& shaping);

/// Noise enhancement penalty zeta(p) = sum_i 1 / |[(W_K^H x I_M) p]_i|^2.
/// Throws SingularPrecoderError with the offending index when an entry
/// vanishes (|.| <= 1e-9 max |.|).
double nep(const ComplexVec& p, std::size_t k_sub, std::size_t m_sub);

/// (W_K^H x I_M) p, whose squared moduli are the NEP denominators.
ComplexVec nep_transform(const ComplexVec& p, std::size_t k_sub, std::size_t m_sub);

/// P^H P = I holds iff every |Gamma| is 1 and the energy is rho = M.
bool is_unitary(const ShapingSet& shaping, double tol = 1e-9);
/// P is invertible iff Gamma has no zero entry (relative to max |Gamma|).
bool is_invertible(const ShapingSet& shaping, double tol = 1e-9);

enum class LegacyKind { kOfdma, kScFdma, kSsScFdma, kZtDftsOfdm };

LegacyKind parse_legacy_kind(const std::string& name);
std::string to_string(LegacyKind kind);

struct LegacyWaveform {
  WaveformConfig config;
  ShapingSet shaping;
};

/// Legacy waveforms expressed as CPS parameterizations. For ZT DFT-S-OFDM the
/// guard length only sizes the zero head/tail; the block itself carries no
/// guard. `data_k` selects the occupied half for SS-SC-FDMA.
LegacyWaveform legacy_config(LegacyKind kind, std::size_t subcarriers, std::size_t n_fft,
                             std::size_t first_subcarrier, std::size_t guard_len,
                             std::size_t data_k = 0);

/// Frequency-domain root-raised-cosine vector of `length` points with
/// roll-off 1, centered on the band and scaled to energy `rho`.
ComplexVec rrc_shaping(std::size_t length, double rho);

}  // namespace cpsofdm
