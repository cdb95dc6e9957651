#pragma once

// Complex linear-algebra and modulation primitives shared by the toolkit.

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cpsofdm/error.hpp"

namespace cpsofdm {

using cdouble = std::complex<double>;
using ComplexVec = Eigen::VectorXcd;
using ComplexMat = Eigen::MatrixXcd;
using RealVec = Eigen::VectorXd;
using RealMat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

// Non-negative modulus, matching the <a>_n notation for circular indices.
inline std::size_t mod_index(long long a, std::size_t n) {
  const long long m = static_cast<long long>(n);
  return static_cast<std::size_t>(((a % m) + m) % m);
}

/// Normalized DFT matrix: entry (k, n) is exp(-j 2 pi k n / size) / sqrt(size).
ComplexMat dft_matrix(std::size_t size);

/// Unitary forward / inverse FFT. Agree with `dft_matrix(n) * x` and its
/// adjoint. Safe to call concurrently; plans are cached per thread.
ComplexVec fft(const ComplexVec& x);
ComplexVec ifft(const ComplexVec& x);

/// S x S permutation that circularly shifts a vector down by `shift`.
ComplexMat downshift_permutation(std::size_t size, std::size_t shift);

/// Applies the downshift in O(S) without materializing the matrix.
ComplexVec circular_downshift(const ComplexVec& v, std::size_t shift);

/// M x K matrix with entry (m, k) = x[k M + m].
ComplexMat reshape_vec(const ComplexVec& x, std::size_t rows, std::size_t cols);

/// Column-wise vectorization, inverse of `reshape_vec`.
ComplexVec vec(const ComplexMat& a);

/// Square-ish reshape used for S^2 x 1 lifted vectors.
ComplexMat unvec_square(const ComplexVec& x, std::size_t size);

/// Gray-labeled square QAM. Only 4, 16 and 64 points are supported.
///
/// Labeling: the first half of each symbol's bits selects the in-phase level,
/// the second half the quadrature level. Within one axis the PAM levels
/// -(L-1), ..., -1, +1, ..., +(L-1) carry the binary-reflected Gray code of
/// their rank, so the all-zero label maps to the lower-left corner
/// (-(L-1) - j(L-1)) / sqrt(E). The grid is scaled to unit mean energy.
class QamConstellation {
 public:
  explicit QamConstellation(int order = 16);

  int order() const noexcept { return order_; }
  int bits_per_symbol() const noexcept { return bits_per_symbol_; }
  const std::vector<cdouble>& points() const noexcept { return points_; }

  /// Mean |s|^2 over the symbol table.
  double symbol_energy() const noexcept { return energy_; }
  /// Mean |s|^4 over the symbol table.
  double fourth_moment() const noexcept { return fourth_moment_; }

  ComplexVec map(std::span<const std::uint8_t> bits) const;
  std::vector<std::uint8_t> demap(const ComplexVec& symbols) const;

  cdouble point(int label) const { return points_[static_cast<std::size_t>(label)]; }

 private:
  int axis_level_index(double value) const;

  int order_;
  int bits_per_symbol_;
  int levels_per_axis_;
  double scale_;
  std::vector<cdouble> points_;
  std::vector<int> gray_to_level_;
  std::vector<int> level_to_gray_;
  double energy_;
  double fourth_moment_;
};

/// Seedable pseudo-random source. Identical seeds yield identical streams on
/// the same platform. Not shared across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  cdouble complex_normal(double variance);
  ComplexVec complex_normal_vec(std::size_t n, double variance);

  std::vector<std::uint8_t> bits(std::size_t n);

  /// Child generator whose stream is a deterministic function of this seed
  /// and `stream_id`. Used to give workers independent sources.
  static Rng derive(std::uint64_t seed, std::uint64_t stream_id);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; used to derive seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace cpsofdm
