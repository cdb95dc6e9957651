#include "cpsofdm/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "cpsofdm/txrx.hpp"

namespace cpsofdm {

double FrequencyGrid::spacing() const {
  return 2.0 * kPi / static_cast<double>(n_fft * samples_per_subcarrier);
}

std::size_t FrequencyGrid::nearest_subcarrier(std::size_t j) const {
  // omega_j in subcarrier units is j / spc - N / 2.
  const long long spc = static_cast<long long>(samples_per_subcarrier);
  const long long twice = 2 * static_cast<long long>(j) - spc * static_cast<long long>(n_fft);
  // round(twice / (2 spc)) with ties toward +inf
  const long long num = twice + spc;
  const long long q = (num >= 0) ? num / (2 * spc) : -((-num + 2 * spc - 1) / (2 * spc));
  return mod_index(q, n_fft);
}

RealVec FrequencyGrid::osb_weights() const {
  const std::size_t n = size();
  RealVec w = RealVec::Zero(static_cast<Eigen::Index>(n));
  if (osb_mask.empty()) return w;
  const double h = spacing() / (2.0 * kPi);
  for (std::size_t j = 0; j < n; ++j) {
    if (!osb_mask[j]) continue;
    const std::size_t next = (j + 1) % n;
    const std::size_t prev = (j + n - 1) % n;
    double wj = 0.0;
    if (osb_mask[next]) wj += 0.5 * h;
    if (osb_mask[prev]) wj += 0.5 * h;
    w(static_cast<Eigen::Index>(j)) = wj;
  }
  return w;
}

FrequencyGrid FrequencyGrid::uniform(std::size_t n_fft, std::size_t samples_per_subcarrier) {
  require(n_fft >= 1 && samples_per_subcarrier >= 1, ErrorKind::kInvalidArgument,
          "grid needs N >= 1 and at least one sample per subcarrier");
  FrequencyGrid g;
  g.n_fft = n_fft;
  g.samples_per_subcarrier = samples_per_subcarrier;
  const std::size_t points = n_fft * samples_per_subcarrier;
  g.omega.resize(static_cast<Eigen::Index>(points));
  for (std::size_t j = 0; j < points; ++j)
    g.omega(static_cast<Eigen::Index>(j)) =
        -kPi + 2.0 * kPi * static_cast<double>(j) / static_cast<double>(points);
  g.osb_mask.assign(points, false);
  return g;
}

FrequencyGrid FrequencyGrid::for_subband(const WaveformConfig& cfg,
                                         std::size_t samples_per_subcarrier,
                                         std::size_t guard_subcarriers) {
  std::vector<bool> inband(cfg.n_fft, false);
  const long long lo = static_cast<long long>(cfg.first_subcarrier) -
                       static_cast<long long>(guard_subcarriers);
  const long long hi = static_cast<long long>(cfg.first_subcarrier + cfg.subcarriers() - 1 +
                                              guard_subcarriers);
  require(hi - lo + 1 < static_cast<long long>(cfg.n_fft), ErrorKind::kInvalidConfig,
          "subband plus guard covers the whole band; no out-of-subband region left");
  for (long long k = lo; k <= hi; ++k) inband[mod_index(k, cfg.n_fft)] = true;
  std::vector<std::size_t> osb;
  for (std::size_t k = 0; k < cfg.n_fft; ++k)
    if (!inband[k]) osb.push_back(k);
  return from_subcarriers(cfg.n_fft, samples_per_subcarrier, osb);
}

FrequencyGrid FrequencyGrid::from_subcarriers(std::size_t n_fft,
                                              std::size_t samples_per_subcarrier,
                                              const std::vector<std::size_t>& osb_subcarriers) {
  FrequencyGrid g = uniform(n_fft, samples_per_subcarrier);
  std::vector<bool> osb(n_fft, false);
  for (std::size_t k : osb_subcarriers) {
    require(k < n_fft, ErrorKind::kInvalidConfig, "OSB subcarrier index out of range");
    osb[k] = true;
  }
  for (std::size_t j = 0; j < g.size(); ++j) g.osb_mask[j] = osb[g.nearest_subcarrier(j)];
  return g;
}

ComplexMat synthesis_matrix(const WaveformConfig& cfg, const ShapingSet& shaping) {
  const ComplexMat p = PrecodingMatrix::build(shaping).p;
  ComplexMat phi(static_cast<Eigen::Index>(cfg.block_len()), p.cols());
  for (Eigen::Index c = 0; c < p.cols(); ++c) phi.col(c) = modulate(p.col(c), cfg).samples;
  return phi;
}

namespace {

// sum_{n=0}^{len-1} exp(-j theta n)
cdouble dirichlet(double theta, std::size_t len) {
  const double l = static_cast<double>(len);
  const double half = 0.5 * theta;
  const double s = std::sin(half);
  // theta on a multiple of 2 pi: every term is 1.
  if (std::abs(s) < 1e-12) return {l, 0.0};
  return std::polar(std::sin(l * half) / s, -half * (l - 1.0));
}

void check_data_sets(const WaveformConfig& cfg) {
  require(!cfg.data_k.empty() && !cfg.data_m.empty(), ErrorKind::kInvalidConfig,
          "data index sets must be nonempty");
}

}  // namespace

ComplexMat psd_generators(const WaveformConfig& cfg, double omega) {
  check_data_sets(cfg);
  const std::size_t s = cfg.subcarriers();
  const std::size_t m_sub = cfg.m_sub;
  const double n = static_cast<double>(cfg.n_fft);
  const std::size_t gp = cfg.spectral_cp_len();
  const std::size_t len = cfg.n_fft + gp;
  const double norm = 1.0 / std::sqrt(n * static_cast<double>(m_sub));

  // Conjugate-free part of w_m: exp(j 2 pi i G'/N) W*(omega - 2 pi (eta+i)/N) / sqrt(NM).
  ComplexVec base(static_cast<Eigen::Index>(s));
  for (std::size_t i = 0; i < s; ++i) {
    const double theta = omega - 2.0 * kPi * static_cast<double>(cfg.first_subcarrier + i) / n;
    const double cp_phase = 2.0 * kPi * static_cast<double>((i * gp) % cfg.n_fft) / n;
    base(static_cast<Eigen::Index>(i)) =
        norm * std::polar(1.0, cp_phase) * std::conj(dirichlet(theta, len));
  }

  ComplexMat h(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(cfg.num_data()));
  Eigen::Index col = 0;
  for (std::size_t k : cfg.data_k) {
    for (std::size_t m : cfg.data_m) {
      // [C^T w]_j = w_{<j + kM>_S}
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t i = (j + k * m_sub) % s;
        const double phase = 2.0 * kPi * static_cast<double>((i * m) % m_sub) /
                             static_cast<double>(m_sub);
        h(static_cast<Eigen::Index>(j), col) = base(static_cast<Eigen::Index>(i)) *
                                               std::polar(1.0, phase);
      }
      ++col;
    }
  }
  return h;
}

ComplexMat psd_kernel(const WaveformConfig& cfg, double omega, double symbol_energy) {
  const ComplexMat h = psd_generators(cfg, omega);
  return (symbol_energy / static_cast<double>(cfg.block_len())) * h * h.adjoint();
}

RealVec psd_closed_form(const ShapingSet& shaping, const WaveformConfig& cfg,
                        const FrequencyGrid& grid, double symbol_energy) {
  require(shaping.size() == cfg.subcarriers(), ErrorKind::kInvalidDimension,
          "shaping length must equal S");
  const double scale = symbol_energy / static_cast<double>(cfg.block_len());
  RealVec out(grid.omega.size());
  for (Eigen::Index j = 0; j < grid.omega.size(); ++j) {
    const ComplexMat h = psd_generators(cfg, grid.omega(j));
    out(j) = scale * (h.adjoint() * shaping.shaping()).squaredNorm();
  }
  return out;
}

ComplexMat osbep_matrix(const WaveformConfig& cfg, const FrequencyGrid& grid,
                        double symbol_energy, bool require_definite) {
  check_data_sets(cfg);
  const RealVec w = grid.osb_weights();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w(j) > 0.0) active.push_back(j);
  require(!active.empty(), ErrorKind::kInvalidConfig, "OSB mask selects no quadrature segment");

  const auto s = static_cast<Eigen::Index>(cfg.subcarriers());
  const auto d = static_cast<Eigen::Index>(cfg.num_data());
  ComplexMat stacked(s, d * static_cast<Eigen::Index>(active.size()));
  for (std::size_t a = 0; a < active.size(); ++a)
    stacked.middleCols(static_cast<Eigen::Index>(a) * d, d) =
        std::sqrt(w(active[a])) * psd_generators(cfg, grid.omega(active[a]));

  ComplexMat omega = ComplexMat::Zero(s, s);
  omega.selfadjointView<Eigen::Lower>().rankUpdate(stacked);
  omega = omega.selfadjointView<Eigen::Lower>();
  omega *= symbol_energy / static_cast<double>(cfg.block_len());
  omega = (0.5 * (omega + omega.adjoint())).eval();

  if (require_definite) {
    Eigen::SelfAdjointEigenSolver<ComplexMat> es(omega, Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues()(0);
    if (!(min_eig > 0.0)) {
      std::ostringstream msg;
      msg << "OSBEP matrix is not positive definite (min eigenvalue " << min_eig
          << "); refine the grid or enlarge the OSB region";
      throw_error(ErrorKind::kNumeric, msg.str());
    }
  }
  return omega;
}

double osbep(const ComplexVec& p, const ComplexMat& omega) {
  require(p.size() == omega.rows(), ErrorKind::kInvalidDimension, "p length must match Omega");
  return (p.adjoint() * omega * p)(0).real();
}

double osb_quadrature(const RealVec& psd, const FrequencyGrid& grid) {
  require(static_cast<std::size_t>(psd.size()) == grid.size(), ErrorKind::kInvalidDimension,
          "PSD length must match the grid");
  return grid.osb_weights().dot(psd);
}

double mip(const ShapingSet& shaping, const WaveformConfig& cfg, double symbol_energy) {
  return static_cast<double>(cfg.num_data()) * symbol_energy * shaping.rho() /
         (static_cast<double>(cfg.n_fft) * static_cast<double>(cfg.m_sub));
}

double quartic_moment(const ComplexVec& p, const WaveformConfig& cfg, double symbol_energy,
                      double fourth_moment) {
  check_data_sets(cfg);
  const std::size_t s = cfg.subcarriers();
  const std::size_t m_sub = cfg.m_sub;
  const std::size_t n_fft = cfg.n_fft;
  require(static_cast<std::size_t>(p.size()) == s, ErrorKind::kInvalidDimension,
          "shaping length must equal S");
  const double norm = 1.0 / std::sqrt(static_cast<double>(n_fft * m_sub));

  double total = 0.0;
  ComplexVec folded(static_cast<Eigen::Index>(m_sub));
  for (std::size_t n = 0; n < n_fft; ++n) {
    double sum2 = 0.0;
    double sum4 = 0.0;
    for (std::size_t k : cfg.data_k) {
      // a_m = e_{m,n}^H C_{kM} p = norm sum_i [C p]_i e^{j2pi i n/N} e^{-j2pi i m/M}
      folded.setZero();
      for (std::size_t i = 0; i < s; ++i) {
        const cdouble cp = p(static_cast<Eigen::Index>((i + s - k * m_sub) % s));
        const double phase = 2.0 * kPi * static_cast<double>((i * n) % n_fft) /
                             static_cast<double>(n_fft);
        folded(static_cast<Eigen::Index>(i % m_sub)) += cp * std::polar(1.0, phase);
      }
      const ComplexVec spectrum = fft(folded) * std::sqrt(static_cast<double>(m_sub));
      for (std::size_t m : cfg.data_m) {
        const double a2 = std::norm(norm * spectrum(static_cast<Eigen::Index>(m)));
        sum2 += a2;
        sum4 += a2 * a2;
      }
    }
    total += fourth_moment * sum4 + 2.0 * symbol_energy * symbol_energy * (sum2 * sum2 - sum4);
  }
  return total / static_cast<double>(n_fft);
}

double vip_closed_form(const ShapingSet& shaping, const WaveformConfig& cfg,
                       double symbol_energy, double fourth_moment) {
  const double mu = mip(shaping, cfg, symbol_energy);
  return quartic_moment(shaping.shaping(), cfg, symbol_energy, fourth_moment) - mu * mu;
}

double papr(const ComplexVec& block) {
  require(block.size() > 0, ErrorKind::kInvalidArgument, "PAPR of an empty block");
  const double mean = block.squaredNorm() / static_cast<double>(block.size());
  require(mean > 0.0, ErrorKind::kInvalidArgument, "PAPR of an all-zero block");
  return block.cwiseAbs2().maxCoeff() / mean;
}

std::vector<CcdfPoint> papr_ccdf(std::span<const double> papr_db,
                                 std::span<const double> thresholds_db) {
  require(!papr_db.empty(), ErrorKind::kInvalidArgument, "CCDF of an empty block set");
  std::vector<double> sorted(papr_db.begin(), papr_db.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<CcdfPoint> out;
  out.reserve(thresholds_db.size());
  for (double t : thresholds_db) {
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t);
    out.push_back({t, static_cast<double>(above) / n});
  }
  return out;
}

std::vector<CcdfPoint> papr_ccdf(std::span<const ComplexVec> blocks,
                                 std::span<const double> thresholds_db) {
  require(!blocks.empty(), ErrorKind::kInvalidArgument, "CCDF of an empty block set");
  std::vector<double> values;
  values.reserve(blocks.size());
  for (const auto& b : blocks) values.push_back(to_db(papr(b)));
  return papr_ccdf(std::span<const double>(values), thresholds_db);
}

double papr_at_probability(std::vector<double> papr_db, double probability) {
  require(!papr_db.empty(), ErrorKind::kInvalidArgument, "no PAPR samples");
  require(probability > 0.0 && probability < 1.0, ErrorKind::kInvalidArgument,
          "probability must be in (0, 1)");
  std::sort(papr_db.begin(), papr_db.end());
  const std::size_t n = papr_db.size();
  const auto exceed = static_cast<std::size_t>(std::floor(probability * static_cast<double>(n)));
  return papr_db[n - std::min(exceed, n - 1) - 1];
}

WelchAccumulator::WelchAccumulator(const FrequencyGrid& grid)
    : points_(grid.size()), acc_(RealVec::Zero(static_cast<Eigen::Index>(grid.size()))) {
  require(points_ % 2 == 0, ErrorKind::kInvalidArgument, "grid size must be even");
}

void WelchAccumulator::add(const ComplexVec& block) {
  require(block.size() > 0 && static_cast<std::size_t>(block.size()) <= points_,
          ErrorKind::kInvalidDimension, "block longer than the grid");
  thread_local Eigen::FFT<double> engine;
  ComplexVec padded = ComplexVec::Zero(static_cast<Eigen::Index>(points_));
  padded.head(block.size()) = block;
  ComplexVec spec(static_cast<Eigen::Index>(points_));
  engine.fwd(spec, padded);
  const double scale = 1.0 / static_cast<double>(block.size());
  const std::size_t half = points_ / 2;
  // Grid point j sits at omega = 2 pi (j - L/2) / L.
  for (std::size_t j = 0; j < points_; ++j)
    acc_(static_cast<Eigen::Index>(j)) +=
        std::norm(spec(static_cast<Eigen::Index>((j + half) % points_))) * scale;
  ++count_;
}

RealVec WelchAccumulator::estimate() const {
  require(count_ > 0, ErrorKind::kInvalidArgument, "no blocks accumulated");
  return acc_ / static_cast<double>(count_);
}

double ber(std::span<const std::uint8_t> detected, std::span<const std::uint8_t> reference) {
  require(detected.size() == reference.size(), ErrorKind::kInvalidArgument,
          "bit streams differ in length");
  if (detected.empty()) return 0.0;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < detected.size(); ++i)
    errors += (detected[i] & 1) != (reference[i] & 1) ? 1 : 0;
  return static_cast<double>(errors) / static_cast<double>(detected.size());
}

double spectral_efficiency(double ber_value, std::size_t bits_per_symbol, std::size_t num_data,
                           std::size_t blocks_per_tti, double tti_s, double bandwidth_hz,
                           double guard_hz) {
  require(tti_s > 0.0 && bandwidth_hz + guard_hz > 0.0, ErrorKind::kInvalidArgument,
          "TTI and bandwidth must be positive");
  const double chi = static_cast<double>(bits_per_symbol * num_data * blocks_per_tti) *
                     (1.0 - ber_value);
  return chi / (tti_s * (bandwidth_hz + guard_hz));
}

namespace {
double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }
}  // namespace

double qam16_awgn_ber(double ebn0_db) {
  const double a = std::sqrt(0.8 * std::pow(10.0, ebn0_db / 10.0));
  return (3.0 * q_function(a) + 2.0 * q_function(3.0 * a) - q_function(5.0 * a)) / 4.0;
}

double noise_variance_for_ebn0(double ebn0_db, double symbol_energy,
                               std::size_t bits_per_symbol) {
  return symbol_energy / (static_cast<double>(bits_per_symbol) * std::pow(10.0, ebn0_db / 10.0));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["label"] = label;
  j["osbep"] = osbep;
  j["mip"] = mip;
  j["vip"] = vip;
  auto& ccdf = j["papr_ccdf"] = nlohmann::ordered_json::array();
  for (const auto& c : papr_ccdf) ccdf.push_back({{"threshold_db", c.threshold_db}, {"ccdf", c.probability}});
  auto& b = j["ber"] = nlohmann::ordered_json::array();
  for (const auto& p : ber)
    b.push_back({{"ebn0_db", p.ebn0_db},
                 {"bits", p.bits},
                 {"errors", p.errors},
                 {"ber", p.ber},
                 {"spectral_efficiency", p.spectral_efficiency}});
  j["psd_points"] = psd_db.size();
  return j.dump(2);
}

std::string MetricReport::psd_csv() const {
  std::ostringstream out;
  out << "omega,psd_db\n";
  for (Eigen::Index j = 0; j < psd_db.size(); ++j)
    out << format_double(omega(j)) << ',' << format_double(psd_db(j)) << '\n';
  return out.str();
}

std::string MetricReport::ccdf_csv() const {
  std::ostringstream out;
  out << "threshold_db,ccdf\n";
  for (const auto& c : papr_ccdf)
    out << format_double(c.threshold_db) << ',' << format_double(c.probability) << '\n';
  return out.str();
}

std::string MetricReport::ber_csv() const {
  std::ostringstream out;
  out << "ebn0_db,bits,errors,ber,se\n";
  for (const auto& p : ber)
    out << format_double(p.ebn0_db) << ',' << p.bits << ',' << p.errors << ','
        << format_double(p.ber) << ',' << format_double(p.spectral_efficiency) << '\n';
  return out.str();
}

}  // namespace cpsofdm
