#pragma once

// Closed-form and empirical waveform metrics: PSD and out-of-subband power,
// instantaneous-power moments, PAPR, BER and spectral efficiency.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpsofdm/dsp.hpp"
#include "cpsofdm/precoder.hpp"

namespace cpsofdm {

/// Uniform grid omega_j = -pi + 2 pi j / (N * samples_per_subcarrier) with
/// an out-of-subband mask.
struct FrequencyGrid {
  std::size_t n_fft = 0;
  std::size_t samples_per_subcarrier = 10;
  RealVec omega;
  std::vector<bool> osb_mask;

  std::size_t size() const { return static_cast<std::size_t>(omega.size()); }
  double spacing() const;
  /// Subcarrier index (mod N) whose centre is closest to grid point j.
  std::size_t nearest_subcarrier(std::size_t j) const;

  /// Quadrature weights (including the 1/(2 pi)) of the trapezoid rule
  /// restricted to segments whose two endpoints are both masked.
  RealVec osb_weights() const;

  /// Grid without mask.
  static FrequencyGrid uniform(std::size_t n_fft, std::size_t samples_per_subcarrier);
  /// Marks every point whose nearest subcarrier lies outside
  /// [eta - guard, eta + S - 1 + guard].
  static FrequencyGrid for_subband(const WaveformConfig& cfg, std::size_t samples_per_subcarrier,
                                   std::size_t guard_subcarriers);
  /// Marks every point whose nearest subcarrier is in `osb_subcarriers`.
  static FrequencyGrid from_subcarriers(std::size_t n_fft, std::size_t samples_per_subcarrier,
                                        const std::vector<std::size_t>& osb_subcarriers);
};

/// Phi = G [W_N^H]_I P (N' x S).
ComplexMat synthesis_matrix(const WaveformConfig& cfg, const ShapingSet& shaping);

/// Vectors C_{kM}^T w_m(omega) for (k, m) in the data sets, as the columns
/// of an S x D matrix H, so that S_x = (E_s / N') ||H^H p||^2.
ComplexMat psd_generators(const WaveformConfig& cfg, double omega);

/// Psi(omega) = (E_s / N') sum_{k,m} C^T w_m w_m^H C.
ComplexMat psd_kernel(const WaveformConfig& cfg, double omega, double symbol_energy = 1.0);

/// Closed-form PSD S_x(e^{j omega}) at every grid point.
RealVec psd_closed_form(const ShapingSet& shaping, const WaveformConfig& cfg,
                        const FrequencyGrid& grid, double symbol_energy = 1.0);

/// Omega = sum_j weight_j Psi(omega_j) over the masked points, Hermitian.
/// Throws kNumeric when the result is not positive definite.
ComplexMat osbep_matrix(const WaveformConfig& cfg, const FrequencyGrid& grid,
                        double symbol_energy = 1.0, bool require_definite = true);

/// gamma_x = p^H Omega p.
double osbep(const ComplexVec& p, const ComplexMat& omega);

/// Masked trapezoid quadrature of sampled PSD values.
double osb_quadrature(const RealVec& psd, const FrequencyGrid& grid);

/// Mean instantaneous power D E_s rho / (N M).
double mip(const ShapingSet& shaping, const WaveformConfig& cfg, double symbol_energy = 1.0);

/// Mean fourth moment f(p) = (1/N) sum_n E|x_n|^4.
double quartic_moment(const ComplexVec& p, const WaveformConfig& cfg, double symbol_energy,
                      double fourth_moment);

/// Variance of instantaneous power f(p) - mip^2.
double vip_closed_form(const ShapingSet& shaping, const WaveformConfig& cfg,
                       double symbol_energy, double fourth_moment);

/// PAPR (linear) of one block: max |x|^2 / mean |x|^2.
double papr(const ComplexVec& block);
inline double to_db(double linear) { return 10.0 * std::log10(linear); }

struct CcdfPoint {
  double threshold_db = 0;
  double probability = 0;
};

/// Empirical Pr{PAPR > threshold} over the given per-block PAPR values (dB).
std::vector<CcdfPoint> papr_ccdf(std::span<const double> papr_db,
                                 std::span<const double> thresholds_db);
/// Same, computing PAPR from the oversampled blocks.
std::vector<CcdfPoint> papr_ccdf(std::span<const ComplexVec> blocks,
                                 std::span<const double> thresholds_db);

/// Smallest threshold at which the empirical CCDF drops to `probability` or
/// below (an order statistic; no interpolation).
double papr_at_probability(std::vector<double> papr_db, double probability);

/// Per-block periodogram average on the grid of `grid`. Each block (length
/// <= grid size) is zero-padded, transformed and scaled by 1 / block length.
class WelchAccumulator {
 public:
  explicit WelchAccumulator(const FrequencyGrid& grid);
  void add(const ComplexVec& block);
  std::size_t count() const { return count_; }
  RealVec estimate() const;

 private:
  std::size_t points_;
  RealVec acc_;
  std::size_t count_ = 0;
};

/// Bit mismatch fraction.
double ber(std::span<const std::uint8_t> detected, std::span<const std::uint8_t> reference);

/// chi / (T (BW + guard)), chi = N_bit D N_block (1 - BER).
double spectral_efficiency(double ber_value, std::size_t bits_per_symbol, std::size_t num_data,
                           std::size_t blocks_per_tti, double tti_s, double bandwidth_hz,
                           double guard_hz);

/// Textbook uncoded Gray 16QAM bit error probability on AWGN.
double qam16_awgn_ber(double ebn0_db);

/// Noise variance per subcarrier for a given E_b/N0: E_s / (N_bit E_b/N0).
double noise_variance_for_ebn0(double ebn0_db, double symbol_energy, std::size_t bits_per_symbol);

struct BerPoint {
  double ebn0_db = 0;
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
  double ber = 0;
  double spectral_efficiency = 0;
};

struct MetricReport {
  std::string label;
  RealVec omega;
  RealVec psd_db;
  double osbep = 0;
  double mip = 0;
  double vip = 0;
  std::vector<CcdfPoint> papr_ccdf;
  std::vector<BerPoint> ber;

  /// JSON object with scalar metrics and curves.
  std::string to_json() const;
  /// "omega,psd_db" rows.
  std::string psd_csv() const;
  /// "threshold_db,ccdf" rows.
  std::string ccdf_csv() const;
  /// "ebn0_db,bits,errors,ber,se" rows.
  std::string ber_csv() const;
};

/// Fixed-format number for CSV output (17 significant digits).
std::string format_double(double v);

}  // namespace cpsofdm
