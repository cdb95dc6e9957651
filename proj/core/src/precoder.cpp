#include "cpsofdm/precoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cpsofdm {

GuardType parse_guard_type(const std::string& name) {
  if (name == "CP" || name == "cp") return GuardType::kCp;
  if (name == "ZP" || name == "zp") return GuardType::kZp;
  if (name == "NoGI" || name == "nogi" || name == "none") return GuardType::kNone;
  throw_error(ErrorKind::kInvalidConfig, "unknown guard type '" + name + "'");
}

std::string to_string(GuardType type) {
  switch (type) {
    case GuardType::kCp: return "CP";
    case GuardType::kZp: return "ZP";
    case GuardType::kNone: return "NoGI";
  }
  return "?";
}

std::vector<std::size_t> WaveformConfig::data_indices() const {
  std::vector<std::size_t> out;
  out.reserve(num_data());
  for (std::size_t k : data_k)
    for (std::size_t m : data_m) out.push_back(k * m_sub + m);
  std::sort(out.begin(), out.end());
  return out;
}

void WaveformConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw_error(ErrorKind::kInvalidConfig, msg); };
  if (n_fft == 0) fail("N must be positive");
  if (k_sub == 0 || m_sub == 0) fail("K and M must be positive");
  if (first_subcarrier + subcarriers() > n_fft) fail("eta + S must not exceed N");
  if (guard == GuardType::kNone && guard_len != 0) fail("NoGI requires G = 0");
  if (data_k.empty() || data_m.empty()) fail("data index sets must be nonempty");
  auto check_set = [&](const std::vector<std::size_t>& set, std::size_t bound, const char* name) {
    std::vector<std::size_t> sorted = set;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      fail(std::string(name) + " has duplicate entries");
    if (sorted.back() >= bound) fail(std::string(name) + " entry out of range");
  };
  check_set(data_k, k_sub, "data_k");
  check_set(data_m, m_sub, "data_m");
}

WaveformConfig WaveformConfig::make(std::size_t n_fft, std::size_t k_sub, std::size_t m_sub,
                                    std::size_t first_subcarrier, GuardType guard,
                                    std::size_t guard_len) {
  WaveformConfig cfg;
  cfg.n_fft = n_fft;
  cfg.k_sub = k_sub;
  cfg.m_sub = m_sub;
  cfg.first_subcarrier = first_subcarrier;
  cfg.guard = guard;
  cfg.guard_len = guard == GuardType::kNone ? 0 : guard_len;
  for (std::size_t k = 0; k < k_sub; ++k) cfg.data_k.push_back(k);
  for (std::size_t m = 0; m < m_sub; ++m) cfg.data_m.push_back(m);
  return cfg;
}

namespace {

// Row-wise unitary DFT (right-multiplication by W_K, which is symmetric).
ComplexMat rows_fft(const ComplexMat& a) {
  ComplexMat out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) out.row(r) = fft(a.row(r).transpose()).transpose();
  return out;
}

// Right-multiplication by W_K^H.
ComplexMat rows_ifft(const ComplexMat& a) {
  ComplexMat out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) out.row(r) = ifft(a.row(r).transpose()).transpose();
  return out;
}

// Left-multiplication by W_M.
ComplexMat cols_fft(const ComplexMat& a) {
  ComplexMat out(a.rows(), a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) out.col(c) = fft(a.col(c));
  return out;
}

void check_dims(std::size_t k_sub, std::size_t m_sub, Eigen::Index len) {
  require(k_sub > 0 && m_sub > 0, ErrorKind::kInvalidDimension, "K and M must be positive");
  require(static_cast<std::size_t>(len) == k_sub * m_sub, ErrorKind::kInvalidDimension,
          "vector length must equal S = K*M");
}

}  // namespace

ShapingSet ShapingSet::from_shaping(const ComplexVec& p, std::size_t k_sub, std::size_t m_sub) {
  check_dims(k_sub, m_sub, p.size());
  ShapingSet out;
  out.k_ = k_sub;
  out.m_ = m_sub;
  out.p_ = p;
  out.rho_ = p.squaredNorm();
  require(out.rho_ > 0.0, ErrorKind::kInvalidArgument, "shaping vector must be nonzero");
  out.a00_ = ifft(p) / std::sqrt(static_cast<double>(m_sub));
  const double s = static_cast<double>(k_sub * m_sub);
  out.gamma_ = std::sqrt(s / out.rho_) * rows_ifft(reshape_vec(p, m_sub, k_sub));
  return out;
}

ShapingSet ShapingSet::from_pulse(const ComplexVec& a00, std::size_t k_sub, std::size_t m_sub) {
  check_dims(k_sub, m_sub, a00.size());
  return from_shaping(fft(a00) * std::sqrt(static_cast<double>(m_sub)), k_sub, m_sub);
}

ShapingSet ShapingSet::from_characteristic(const ComplexMat& gamma, double rho) {
  require(rho > 0.0, ErrorKind::kInvalidArgument, "energy must be positive");
  const auto m_sub = static_cast<std::size_t>(gamma.rows());
  const auto k_sub = static_cast<std::size_t>(gamma.cols());
  require(m_sub > 0 && k_sub > 0, ErrorKind::kInvalidDimension, "empty characteristic matrix");
  const double s = static_cast<double>(k_sub * m_sub);
  ComplexMat pm = std::sqrt(rho / s) * rows_fft(gamma);
  return from_shaping(vec(pm), k_sub, m_sub);
}

ShapingSet ShapingSet::with_energy(double rho) const {
  require(rho > 0.0, ErrorKind::kInvalidArgument, "energy must be positive");
  return from_shaping(p_ * std::sqrt(rho / rho_), k_, m_);
}

std::string shaping_to_json(const ShapingSet& shaping) {
  nlohmann::json j;
  j["K"] = shaping.k_sub();
  j["M"] = shaping.m_sub();
  j["rho"] = shaping.rho();
  std::vector<double> re;
  std::vector<double> im;
  for (Eigen::Index i = 0; i < shaping.shaping().size(); ++i) {
    re.push_back(shaping.shaping()(i).real());
    im.push_back(shaping.shaping()(i).imag());
  }
  j["p_real"] = re;
  j["p_imag"] = im;
  return j.dump(2);
}

ShapingSet shaping_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::kInvalidConfig, std::string("shaping file: ") + e.what());
  }
  for (const char* key : {"K", "M", "rho", "p_real", "p_imag"})
    require(j.contains(key), ErrorKind::kInvalidConfig,
            std::string("shaping file missing field '") + key + "'");
  const auto k_sub = j["K"].get<std::size_t>();
  const auto m_sub = j["M"].get<std::size_t>();
  const auto re = j["p_real"].get<std::vector<double>>();
  const auto im = j["p_imag"].get<std::vector<double>>();
  require(re.size() == im.size() && re.size() == k_sub * m_sub, ErrorKind::kInvalidConfig,
          "shaping file: p length must be K*M");
  ComplexVec p(static_cast<Eigen::Index>(re.size()));
  for (std::size_t i = 0; i < re.size(); ++i) p(static_cast<Eigen::Index>(i)) = {re[i], im[i]};
  return ShapingSet::from_shaping(p, k_sub, m_sub);
}

void save_shaping(const ShapingSet& shaping, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << shaping_to_json(shaping) << "\n";
}

ShapingSet load_shaping(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return shaping_from_json(buf.str());
}

ComplexMat build_gfdm_matrix(const ComplexVec& a00, std::size_t k_sub, std::size_t m_sub) {
  check_dims(k_sub, m_sub, a00.size());
  const std::size_t s_len = k_sub * m_sub;
  ComplexMat a(static_cast<Eigen::Index>(s_len), static_cast<Eigen::Index>(s_len));
  for (std::size_t k = 0; k < k_sub; ++k) {
    for (std::size_t m = 0; m < m_sub; ++m) {
      const auto col = static_cast<Eigen::Index>(k * m_sub + m);
      for (std::size_t s = 0; s < s_len; ++s) {
        const double phase = 2.0 * kPi * static_cast<double>((k * s) % k_sub) /
                             static_cast<double>(k_sub);
        const std::size_t src = mod_index(static_cast<long long>(s) -
                                              static_cast<long long>(m * k_sub),
                                          s_len);
        a(static_cast<Eigen::Index>(s), col) = a00(static_cast<Eigen::Index>(src)) *
                                               std::polar(1.0, phase);
      }
    }
  }
  return a;
}

PrecodingMatrix PrecodingMatrix::build(const ShapingSet& shaping) {
  PrecodingMatrix out;
  out.a = build_gfdm_matrix(shaping.pulse(), shaping.k_sub(), shaping.m_sub());
  out.p = dft_matrix(shaping.size()) * out.a;
  return out;
}

ComplexMat PrecodingMatrix::data_columns(const WaveformConfig& cfg) const {
  const auto idx = cfg.data_indices();
  ComplexMat out(p.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = p.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

ComplexVec precode_direct(const ComplexVec& d, const ShapingSet& shaping) {
  check_dims(shaping.k_sub(), shaping.m_sub(), d.size());
  const ComplexMat a = build_gfdm_matrix(shaping.pulse(), shaping.k_sub(), shaping.m_sub());
  return dft_matrix(shaping.size()) * (a * d);
}

ComplexVec precode_frequency(const ComplexVec& d, const ShapingSet& shaping) {
  check_dims(shaping.k_sub(), shaping.m_sub(), d.size());
  const std::size_t k_sub = shaping.k_sub();
  const std::size_t m_sub = shaping.m_sub();
  const std::size_t s_len = k_sub * m_sub;
  const ComplexVec& p = shaping.shaping();
  ComplexVec s = ComplexVec::Zero(static_cast<Eigen::Index>(s_len));
  for (std::size_t k = 0; k < k_sub; ++k) {
    const ComplexVec spread =
        fft(d.segment(static_cast<Eigen::Index>(k * m_sub), static_cast<Eigen::Index>(m_sub)));
    for (std::size_t i = 0; i < s_len; ++i) {
      // R repeats the M-point spectrum K times; C_{kM} shifts it down by kM.
      const cdouble shaped = p(static_cast<Eigen::Index>(i)) *
                             spread(static_cast<Eigen::Index>(i % m_sub));
      s(static_cast<Eigen::Index>((i + k * m_sub) % s_len)) += shaped;
    }
  }
  return s;
}

ComplexVec precode_characteristic(const ComplexVec& d, const ShapingSet& shaping) {
  check_dims(shaping.k_sub(), shaping.m_sub(), d.size());
  const std::size_t k_sub = shaping.k_sub();
  const std::size_t m_sub = shaping.m_sub();
  // (W_K^H x W_M) vec(D) = vec(W_M D W_K^H)
  ComplexMat y = rows_ifft(cols_fft(reshape_vec(d, m_sub, k_sub)));
  const double scale = std::sqrt(shaping.rho() / static_cast<double>(m_sub));
  y = (y.array() * shaping.characteristic().array()).matrix() * scale;
  // (W_K x I_M) vec(Y) = vec(Y W_K)
  return vec(rows_fft(y));
}

ComplexVec nep_transform(const ComplexVec& p, std::size_t k_sub, std::size_t m_sub) {
  check_dims(k_sub, m_sub, p.size());
  return vec(rows_ifft(reshape_vec(p, m_sub, k_sub)));
}

double nep(const ComplexVec& p, std::size_t k_sub, std::size_t m_sub) {
  const ComplexVec y = nep_transform(p, k_sub, m_sub);
  const double peak = y.cwiseAbs().maxCoeff();
  double zeta = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mag = std::abs(y(i));
    if (mag <= 1e-9 * peak || mag == 0.0) {
      throw SingularPrecoderError(static_cast<std::size_t>(i),
                                  "singular-precoder: transformed shaping entry " +
                                      std::to_string(i) + " vanishes");
    }
    zeta += 1.0 / (mag * mag);
  }
  return zeta;
}

bool is_unitary(const ShapingSet& shaping, double tol) {
  const double m = static_cast<double>(shaping.m_sub());
  if (std::abs(shaping.rho() - m) > tol * m) return false;
  const double worst = (shaping.characteristic().cwiseAbs().array() - 1.0).abs().maxCoeff();
  return worst <= tol;
}

bool is_invertible(const ShapingSet& shaping, double tol) {
  const auto mags = shaping.characteristic().cwiseAbs();
  return mags.minCoeff() > tol * mags.maxCoeff();
}

LegacyKind parse_legacy_kind(const std::string& name) {
  if (name == "OFDMA") return LegacyKind::kOfdma;
  if (name == "SC-FDMA") return LegacyKind::kScFdma;
  if (name == "SS-SC-FDMA") return LegacyKind::kSsScFdma;
  if (name == "ZT-DFT-S-OFDM") return LegacyKind::kZtDftsOfdm;
  throw_error(ErrorKind::kInvalidConfig, "unknown legacy waveform '" + name + "'");
}

std::string to_string(LegacyKind kind) {
  switch (kind) {
    case LegacyKind::kOfdma: return "OFDMA";
    case LegacyKind::kScFdma: return "SC-FDMA";
    case LegacyKind::kSsScFdma: return "SS-SC-FDMA";
    case LegacyKind::kZtDftsOfdm: return "ZT-DFT-S-OFDM";
  }
  return "?";
}

ComplexVec rrc_shaping(std::size_t length, double rho) {
  require(length >= 2 && length % 2 == 0, ErrorKind::kInvalidArgument,
          "RRC shaping length must be even");
  const double half = static_cast<double>(length) / 2.0;
  ComplexVec p(static_cast<Eigen::Index>(length));
  for (std::size_t i = 0; i < length; ++i) {
    // Normalized frequency f T in (-1, 1); roll-off 1 gives cos(pi f T / 2).
    const double ft = (static_cast<double>(i) + 0.5 - half) / half;
    p(static_cast<Eigen::Index>(i)) = std::cos(kPi * ft / 2.0);
  }
  return p * std::sqrt(rho / p.squaredNorm());
}

LegacyWaveform legacy_config(LegacyKind kind, std::size_t subcarriers, std::size_t n_fft,
                             std::size_t first_subcarrier, std::size_t guard_len,
                             std::size_t data_k) {
  require(subcarriers > 0, ErrorKind::kInvalidArgument, "S must be positive");
  LegacyWaveform out;
  const std::size_t s_len = subcarriers;
  switch (kind) {
    case LegacyKind::kOfdma: {
      out.config = WaveformConfig::make(n_fft, s_len, 1, first_subcarrier, GuardType::kCp,
                                        guard_len);
      ComplexVec p = ComplexVec::Zero(static_cast<Eigen::Index>(s_len));
      p(0) = 1.0;
      out.shaping = ShapingSet::from_shaping(p, s_len, 1);
      break;
    }
    case LegacyKind::kScFdma: {
      out.config = WaveformConfig::make(n_fft, 1, s_len, first_subcarrier, GuardType::kCp,
                                        guard_len);
      out.shaping = ShapingSet::from_shaping(ComplexVec::Ones(static_cast<Eigen::Index>(s_len)),
                                             1, s_len);
      break;
    }
    case LegacyKind::kSsScFdma: {
      require(s_len % 2 == 0, ErrorKind::kInvalidArgument, "SS-SC-FDMA needs even S");
      require(data_k < 2, ErrorKind::kInvalidArgument, "SS-SC-FDMA data position must be 0 or 1");
      const std::size_t m_sub = s_len / 2;
      out.config = WaveformConfig::make(n_fft, 2, m_sub, first_subcarrier, GuardType::kCp,
                                        guard_len);
      out.config.data_k = {data_k};
      out.shaping = ShapingSet::from_shaping(rrc_shaping(s_len, static_cast<double>(m_sub)), 2,
                                             m_sub);
      break;
    }
    case LegacyKind::kZtDftsOfdm: {
      const std::size_t tail = (s_len * guard_len + n_fft - 1) / n_fft;
      const std::size_t zeros = 1 + tail;
      require(zeros < s_len, ErrorKind::kInvalidArgument, "S too small for the zero head/tail");
      out.config = WaveformConfig::make(n_fft, 1, s_len, first_subcarrier, GuardType::kNone, 0);
      out.config.data_m.clear();
      for (std::size_t m = 1; m <= s_len - zeros; ++m) out.config.data_m.push_back(m);
      out.shaping = ShapingSet::from_shaping(ComplexVec::Ones(static_cast<Eigen::Index>(s_len)),
                                             1, s_len);
      break;
    }
  }
  out.config.validate();
  return out;
}

}  // namespace cpsofdm
