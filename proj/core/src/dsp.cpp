#include "cpsofdm/dsp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace cpsofdm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidDimension: return "invalid-dimension";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kSingularPrecoder: return "singular-precoder";
    case ErrorKind::kSingularMatrix: return "singular-matrix";
    case ErrorKind::kNotRankOne: return "not-rank-one";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kConvergence: return "convergence";
    case ErrorKind::kResource: return "resource";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

void throw_error(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

ComplexMat dft_matrix(std::size_t size) {
  require(size > 0, ErrorKind::kInvalidDimension, "dft_matrix needs size >= 1");
  const double norm = 1.0 / std::sqrt(static_cast<double>(size));
  ComplexMat w(size, size);
  for (std::size_t k = 0; k < size; ++k) {
    for (std::size_t n = 0; n < size; ++n) {
      // Reduce the exponent modulo size before evaluating to keep the phase exact.
      const double phase =
          -2.0 * kPi * static_cast<double>((k * n) % size) / static_cast<double>(size);
      w(k, n) = std::polar(norm, phase);
    }
  }
  return w;
}

namespace {

Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

}  // namespace

ComplexVec fft(const ComplexVec& x) {
  if (x.size() <= 1) return x;  // kissfft mishandles single-point plans
  ComplexVec out(x.size());
  thread_fft().fwd(out, x);
  out /= std::sqrt(static_cast<double>(x.size()));
  return out;
}

ComplexVec ifft(const ComplexVec& x) {
  if (x.size() <= 1) return x;
  auto& engine = thread_fft();
  engine.SetFlag(Eigen::FFT<double>::Unscaled);
  ComplexVec out(x.size());
  engine.inv(out, x);
  engine.ClearFlag(Eigen::FFT<double>::Unscaled);
  out /= std::sqrt(static_cast<double>(x.size()));
  return out;
}

ComplexMat downshift_permutation(std::size_t size, std::size_t shift) {
  require(size > 0, ErrorKind::kInvalidDimension, "permutation size must be >= 1");
  require(shift < size, ErrorKind::kInvalidArgument, "downshift must be < size");
  ComplexMat c = ComplexMat::Zero(size, size);
  for (std::size_t i = 0; i < size; ++i) c((i + shift) % size, i) = 1.0;
  return c;
}

ComplexVec circular_downshift(const ComplexVec& v, std::size_t shift) {
  const auto n = static_cast<std::size_t>(v.size());
  require(shift < n, ErrorKind::kInvalidArgument, "downshift must be < size");
  ComplexVec out(v.size());
  for (std::size_t i = 0; i < n; ++i) out((i + shift) % n) = v(i);
  return out;
}

ComplexMat reshape_vec(const ComplexVec& x, std::size_t rows, std::size_t cols) {
  require(static_cast<std::size_t>(x.size()) == rows * cols, ErrorKind::kInvalidDimension,
          "reshape needs length rows*cols");
  return Eigen::Map<const ComplexMat>(x.data(), static_cast<Eigen::Index>(rows),
                                      static_cast<Eigen::Index>(cols));
}

ComplexVec vec(const ComplexMat& a) {
  return Eigen::Map<const ComplexVec>(a.data(), a.size());
}

ComplexMat unvec_square(const ComplexVec& x, std::size_t size) {
  return reshape_vec(x, size, size);
}

QamConstellation::QamConstellation(int order) : order_(order) {
  require(order == 4 || order == 16 || order == 64, ErrorKind::kInvalidArgument,
          "supported QAM orders are 4, 16, 64");
  bits_per_symbol_ = 0;
  while ((1 << bits_per_symbol_) < order) ++bits_per_symbol_;
  levels_per_axis_ = 1 << (bits_per_symbol_ / 2);
  const int half_bits = bits_per_symbol_ / 2;

  // Average energy of the unscaled odd-integer grid: 2 (L^2 - 1) / 3.
  const double raw_energy = 2.0 * (levels_per_axis_ * levels_per_axis_ - 1) / 3.0;
  scale_ = 1.0 / std::sqrt(raw_energy);

  level_to_gray_.resize(static_cast<std::size_t>(levels_per_axis_));
  gray_to_level_.resize(static_cast<std::size_t>(levels_per_axis_));
  for (int rank = 0; rank < levels_per_axis_; ++rank) {
    const int gray = rank ^ (rank >> 1);
    level_to_gray_[static_cast<std::size_t>(rank)] = gray;
    gray_to_level_[static_cast<std::size_t>(gray)] = rank;
  }

  points_.resize(static_cast<std::size_t>(order));
  double e2 = 0.0;
  double e4 = 0.0;
  for (int label = 0; label < order; ++label) {
    const int gi = label >> half_bits;
    const int gq = label & ((1 << half_bits) - 1);
    const double li = 2.0 * gray_to_level_[static_cast<std::size_t>(gi)] - (levels_per_axis_ - 1);
    const double lq = 2.0 * gray_to_level_[static_cast<std::size_t>(gq)] - (levels_per_axis_ - 1);
    const cdouble s(li * scale_, lq * scale_);
    points_[static_cast<std::size_t>(label)] = s;
    e2 += std::norm(s);
    e4 += std::norm(s) * std::norm(s);
  }
  energy_ = e2 / order;
  fourth_moment_ = e4 / order;
}

ComplexVec QamConstellation::map(std::span<const std::uint8_t> bits) const {
  const auto bps = static_cast<std::size_t>(bits_per_symbol_);
  require(bits.size() % bps == 0, ErrorKind::kInvalidArgument,
          "bit count must be a multiple of bits per symbol");
  const std::size_t n = bits.size() / bps;
  ComplexVec out(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    int label = 0;
    for (std::size_t b = 0; b < bps; ++b) label = (label << 1) | (bits[s * bps + b] & 1);
    out(static_cast<Eigen::Index>(s)) = points_[static_cast<std::size_t>(label)];
  }
  return out;
}

int QamConstellation::axis_level_index(double value) const {
  // Nearest odd integer level, clamped to the grid.
  const double raw = value / scale_;
  int rank = static_cast<int>(std::floor((raw + levels_per_axis_) / 2.0));
  if (rank < 0) rank = 0;
  if (rank >= levels_per_axis_) rank = levels_per_axis_ - 1;
  return rank;
}

std::vector<std::uint8_t> QamConstellation::demap(const ComplexVec& symbols) const {
  const auto bps = static_cast<std::size_t>(bits_per_symbol_);
  const int half_bits = bits_per_symbol_ / 2;
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(symbols.size()) * bps);
  for (Eigen::Index s = 0; s < symbols.size(); ++s) {
    const int gi = level_to_gray_[static_cast<std::size_t>(axis_level_index(symbols(s).real()))];
    const int gq = level_to_gray_[static_cast<std::size_t>(axis_level_index(symbols(s).imag()))];
    const int label = (gi << half_bits) | gq;
    for (std::size_t b = 0; b < bps; ++b) {
      bits[static_cast<std::size_t>(s) * bps + b] =
          static_cast<std::uint8_t>((label >> (bps - 1 - b)) & 1);
    }
  }
  return bits;
}

cdouble Rng::complex_normal(double variance) {
  const double sd = std::sqrt(variance / 2.0);
  const double re = normal_(engine_);
  const double im = normal_(engine_);
  return {sd * re, sd * im};
}

ComplexVec Rng::complex_normal_vec(std::size_t n, double variance) {
  ComplexVec out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = complex_normal(variance);
  return out;
}

std::vector<std::uint8_t> Rng::bits(std::size_t n) {
  std::vector<std::uint8_t> out(n);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) word = engine_();
    out[i] = static_cast<std::uint8_t>(word & 1u);
    word >>= 1;
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream_id) {
  return Rng(mix_seed(seed, stream_id));
}

}  // namespace cpsofdm
