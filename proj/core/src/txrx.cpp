#include "cpsofdm/txrx.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cpsofdm {

namespace {

void check_modulation_input(const ComplexVec& s, const WaveformConfig& cfg) {
  require(static_cast<std::size_t>(s.size()) == cfg.subcarriers(), ErrorKind::kInvalidDimension,
          "precoded vector length must equal S");
  require(cfg.first_subcarrier + cfg.subcarriers() <= cfg.n_fft, ErrorKind::kInvalidArgument,
          "eta + S must not exceed N");
  require(cfg.guard != GuardType::kNone || cfg.guard_len == 0, ErrorKind::kInvalidArgument,
          "NoGI requires G = 0");
}

ComplexVec add_guard(const ComplexVec& core, GuardType guard, std::size_t guard_len) {
  const auto n = core.size();
  const auto g = static_cast<Eigen::Index>(guard_len);
  ComplexVec out(n + g);
  switch (guard) {
    case GuardType::kCp:
      out.head(g) = core.tail(g);
      out.tail(n) = core;
      break;
    case GuardType::kZp:
      out.head(n) = core;
      out.tail(g).setZero();
      break;
    case GuardType::kNone:
      out = core;
      break;
  }
  return out;
}

}  // namespace

BlockSignal modulate(const ComplexVec& s, const WaveformConfig& cfg, std::size_t index) {
  check_modulation_input(s, cfg);
  ComplexVec spectrum = ComplexVec::Zero(static_cast<Eigen::Index>(cfg.n_fft));
  spectrum.segment(static_cast<Eigen::Index>(cfg.first_subcarrier), s.size()) = s;
  return {add_guard(ifft(spectrum), cfg.guard, cfg.guard_len), index};
}

ComplexVec modulate_oversampled(const ComplexVec& s, const WaveformConfig& cfg,
                                std::size_t oversampling) {
  check_modulation_input(s, cfg);
  require(oversampling >= 1, ErrorKind::kInvalidArgument, "oversampling must be >= 1");
  const std::size_t n = cfg.n_fft;
  const std::size_t big = n * oversampling;
  ComplexVec spectrum = ComplexVec::Zero(static_cast<Eigen::Index>(big));
  for (std::size_t i = 0; i < cfg.subcarriers(); ++i) {
    const std::size_t k = cfg.first_subcarrier + i;
    // Subcarriers in the upper half of the N grid are negative frequencies.
    const std::size_t pos = (2 * k < n) ? k : big - (n - k);
    spectrum(static_cast<Eigen::Index>(pos)) = s(static_cast<Eigen::Index>(i));
  }
  // Keep sample amplitudes identical to the critically sampled block.
  ComplexVec core = ifft(spectrum) * std::sqrt(static_cast<double>(oversampling));
  return add_guard(core, cfg.guard, cfg.guard_len * oversampling);
}

ComplexVec serialize(std::span<const BlockSignal> blocks) {
  if (blocks.empty()) return {};
  const auto len = blocks.front().samples.size();
  for (const auto& b : blocks)
    require(b.samples.size() == len, ErrorKind::kInvalidDimension, "blocks must share one length");
  ComplexVec out(len * static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t b = 0; b < blocks.size(); ++b)
    out.segment(static_cast<Eigen::Index>(b) * len, len) = blocks[b].samples;
  return out;
}

PaModel PaModel::rapp(double smoothness, double saturation, double ibo_db) {
  PaModel pa;
  pa.kind = PaKind::kRapp;
  pa.smoothness = smoothness;
  pa.saturation = saturation;
  pa.ibo_db = ibo_db;
  return pa;
}

PaModel PaModel::polynomial(std::vector<cdouble> coefficients, double ibo_db,
                            double phase_compensation) {
  PaModel pa;
  pa.kind = PaKind::kPolynomial;
  pa.coefficients = std::move(coefficients);
  pa.ibo_db = ibo_db;
  pa.phase_compensation = phase_compensation;
  return pa;
}

std::vector<cdouble> load_pa_coefficients(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::kInvalidConfig, "PA coefficient file: " + std::string(e.what()));
  }
  require(j.contains("coefficients") && j["coefficients"].is_array(), ErrorKind::kInvalidConfig,
          "PA coefficient file needs a 'coefficients' array");
  std::vector<cdouble> out;
  for (const auto& pair : j["coefficients"]) {
    require(pair.is_array() && pair.size() == 2, ErrorKind::kInvalidConfig,
            "PA coefficients must be [real, imag] pairs");
    out.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  require(!out.empty(), ErrorKind::kInvalidConfig, "PA coefficient list is empty");
  return out;
}

double rapp_amplitude(double amplitude, double smoothness, double saturation) {
  if (!std::isfinite(saturation)) return amplitude;
  const double ratio = std::pow(amplitude / saturation, 2.0 * smoothness);
  return amplitude / std::pow(1.0 + ratio, 1.0 / (2.0 * smoothness));
}

ComplexVec pa_apply(const ComplexVec& stream, const PaModel& pa) {
  if (pa.kind == PaKind::kIdentity || stream.size() == 0) return stream;
  const double mean_power = stream.squaredNorm() / static_cast<double>(stream.size());
  if (mean_power == 0.0) return stream;
  const double reference = (pa.kind == PaKind::kRapp && std::isfinite(pa.saturation))
                               ? pa.saturation
                               : 1.0;
  const double target_power = reference * reference * std::pow(10.0, -pa.ibo_db / 10.0);
  const double gain = std::sqrt(target_power / mean_power);
  const cdouble rotation = std::polar(1.0, pa.phase_compensation);

  ComplexVec out(stream.size());
  for (Eigen::Index n = 0; n < stream.size(); ++n) {
    const cdouble x = stream(n) * gain;
    const double a = std::abs(x);
    cdouble y;
    if (pa.kind == PaKind::kRapp) {
      y = a > 0.0 ? x * (rapp_amplitude(a, pa.smoothness, pa.saturation) / a) : cdouble{};
    } else {
      y = 0.0;
      double mag_pow = 1.0;
      for (const cdouble& c : pa.coefficients) {
        y += c * x * mag_pow;
        mag_pow *= a;
      }
    }
    out(n) = y * rotation / gain;
  }
  return out;
}

ChannelModel ChannelModel::flat(double noise_var) {
  ChannelModel ch;
  ch.taps = ComplexVec::Ones(1);
  ch.noise_var = noise_var;
  return ch;
}

ChannelProfile ChannelProfile::exponential(std::size_t taps, double decay_db,
                                           double sample_rate_hz) {
  require(taps >= 1, ErrorKind::kInvalidArgument, "profile needs at least one tap");
  ChannelProfile prof;
  for (std::size_t l = 0; l < taps; ++l) {
    prof.delays_ns.push_back(1e9 * static_cast<double>(l) / sample_rate_hz);
    prof.powers_db.push_back(-decay_db * static_cast<double>(l));
  }
  return prof;
}

ChannelProfile ChannelProfile::flat() { return {{0.0}, {0.0}}; }

RealVec ChannelProfile::sample_powers(double sample_rate_hz) const {
  require(!delays_ns.empty() && delays_ns.size() == powers_db.size(), ErrorKind::kInvalidConfig,
          "channel profile needs matching delay and power lists");
  std::size_t max_tap = 0;
  std::vector<std::size_t> pos(delays_ns.size());
  for (std::size_t i = 0; i < delays_ns.size(); ++i) {
    require(delays_ns[i] >= 0.0, ErrorKind::kInvalidConfig, "negative tap delay");
    pos[i] = static_cast<std::size_t>(std::llround(delays_ns[i] * 1e-9 * sample_rate_hz));
    max_tap = std::max(max_tap, pos[i]);
  }
  RealVec power = RealVec::Zero(static_cast<Eigen::Index>(max_tap + 1));
  for (std::size_t i = 0; i < pos.size(); ++i)
    power(static_cast<Eigen::Index>(pos[i])) += std::pow(10.0, powers_db[i] / 10.0);
  return power / power.sum();
}

ChannelModel ChannelProfile::realize(Rng& rng, double sample_rate_hz, double noise_var) const {
  const RealVec power = sample_powers(sample_rate_hz);
  ChannelModel ch;
  ch.noise_var = noise_var;
  ch.taps.resize(power.size());
  for (Eigen::Index l = 0; l < power.size(); ++l)
    ch.taps(l) = power(l) > 0.0 ? rng.complex_normal(power(l)) : cdouble{};
  return ch;
}

ChannelProfile load_channel_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::kInvalidConfig, "channel profile: " + std::string(e.what()));
  }
  require(j.contains("taps") && j["taps"].is_array(), ErrorKind::kInvalidConfig,
          "channel profile needs a 'taps' array");
  ChannelProfile prof;
  for (const auto& tap : j["taps"]) {
    prof.delays_ns.push_back(tap.at("delay_ns").get<double>());
    prof.powers_db.push_back(tap.at("power_db").get<double>());
  }
  require(!prof.delays_ns.empty(), ErrorKind::kInvalidConfig, "channel profile is empty");
  return prof;
}

ComplexVec channel_apply(const ComplexVec& stream, const ChannelModel& ch, Rng& rng) {
  const ComplexVec taps[] = {ch.taps};
  ComplexVec out = channel_convolve_blocks(stream, taps, static_cast<std::size_t>(stream.size()) + 1);
  if (ch.noise_var > 0.0) {
    for (Eigen::Index n = 0; n < out.size(); ++n) out(n) += rng.complex_normal(ch.noise_var);
  }
  return out;
}

ComplexVec channel_convolve_blocks(const ComplexVec& stream, std::span<const ComplexVec> taps,
                                   std::size_t block_len) {
  require(!taps.empty(), ErrorKind::kInvalidArgument, "no channel taps");
  require(block_len > 0, ErrorKind::kInvalidArgument, "block length must be positive");
  ComplexVec out = ComplexVec::Zero(stream.size());
  for (Eigen::Index n = 0; n < stream.size(); ++n) {
    const std::size_t b = std::min(static_cast<std::size_t>(n) / block_len, taps.size() - 1);
    const ComplexVec& h = taps[b];
    cdouble acc = 0.0;
    const Eigen::Index lmax = std::min<Eigen::Index>(h.size() - 1, n);
    for (Eigen::Index l = 0; l <= lmax; ++l) acc += h(l) * stream(n - l);
    out(n) = acc;
  }
  return out;
}

ComplexVec receive_block(const ComplexVec& y, const WaveformConfig& cfg) {
  require(static_cast<std::size_t>(y.size()) == cfg.block_len(), ErrorKind::kInvalidDimension,
          "received block length must equal N + G");
  const auto n = static_cast<Eigen::Index>(cfg.n_fft);
  const auto g = static_cast<Eigen::Index>(cfg.guard_len);
  ComplexVec y_n(n);
  switch (cfg.guard) {
    case GuardType::kCp:
      y_n = y.tail(n);
      break;
    case GuardType::kZp:
      y_n = y.head(n);
      y_n.head(g) += y.tail(g);
      break;
    case GuardType::kNone:
      y_n = y;
      break;
  }
  return fft(y_n).segment(static_cast<Eigen::Index>(cfg.first_subcarrier),
                          static_cast<Eigen::Index>(cfg.subcarriers()));
}

ComplexVec channel_frequency_response(const ComplexVec& taps, const WaveformConfig& cfg) {
  ComplexVec h(static_cast<Eigen::Index>(cfg.subcarriers()));
  const double n = static_cast<double>(cfg.n_fft);
  for (std::size_t i = 0; i < cfg.subcarriers(); ++i) {
    cdouble acc = 0.0;
    for (Eigen::Index l = 0; l < taps.size(); ++l) {
      const std::size_t k = cfg.first_subcarrier + i;
      const double phase = -2.0 * kPi *
                           static_cast<double>((k * static_cast<std::size_t>(l)) % cfg.n_fft) / n;
      acc += taps(l) * std::polar(1.0, phase);
    }
    h(static_cast<Eigen::Index>(i)) = acc;
  }
  return h;
}

FdeMode parse_fde_mode(const std::string& name) {
  if (name == "ZF" || name == "zf") return FdeMode::kZf;
  if (name == "MMSE" || name == "mmse") return FdeMode::kMmse;
  throw_error(ErrorKind::kInvalidConfig, "unknown FDE mode '" + name + "'");
}

ComplexMat fde_matrix(const ComplexVec& channel_freq, const ComplexMat& p_bar, double noise_var,
                      double symbol_energy, FdeMode mode) {
  require(channel_freq.size() == p_bar.rows(), ErrorKind::kInvalidDimension,
          "channel response length must equal S");
  require(p_bar.cols() <= p_bar.rows(), ErrorKind::kInvalidDimension, "D must not exceed S");
  const ComplexMat hp = channel_freq.asDiagonal() * p_bar;
  ComplexMat gram = hp.adjoint() * hp;
  if (mode == FdeMode::kZf) {
    Eigen::ColPivHouseholderQR<ComplexMat> qr(hp);
    qr.setThreshold(1e-12);
    require(qr.rank() == hp.cols(), ErrorKind::kSingularMatrix,
            "H P_bar is rank deficient; ZF equalizer undefined");
  } else {
    require(symbol_energy > 0.0, ErrorKind::kInvalidArgument, "symbol energy must be positive");
    gram.diagonal().array() += noise_var / symbol_energy;
  }
  Eigen::LDLT<ComplexMat> ldlt(gram);
  require(ldlt.info() == Eigen::Success, ErrorKind::kSingularMatrix, "FDE Gram matrix singular");
  return ldlt.solve(hp.adjoint());
}

ComplexVec fde(const ComplexVec& r, const ComplexVec& channel_freq, const ComplexMat& p_bar,
               double noise_var, double symbol_energy, FdeMode mode) {
  require(r.size() == p_bar.rows(), ErrorKind::kInvalidDimension, "r length must equal S");
  return fde_matrix(channel_freq, p_bar, noise_var, symbol_energy, mode) * r;
}

ComplexVec fde_gains(const ComplexMat& q, const ComplexVec& channel_freq, const ComplexMat& p_bar) {
  return (q * channel_freq.asDiagonal() * p_bar).diagonal();
}

}  // namespace cpsofdm
