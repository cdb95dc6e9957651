// Acceptance checks, one line per criterion. Exit status is nonzero when any
// criterion fails. Tolerances are fixed here and echoed in the output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpsofdm/scenario.hpp"
#include "oracles.hpp"

using namespace cpsofdm;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(CPSOFDM_SOURCE_DIR) / "configs";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Replaces every optimize-now shaping source by the inline result so that
// repeated runs do not repeat the optimization.
void freeze_shapings(ScenarioConfig& cfg) {
  for (auto& u : cfg.users) {
    if (u.shaping.kind != ShapingSource::Kind::kOptimize) continue;
    const ShapingSet sh = resolve_shaping(u, cfg);
    u.shaping.kind = ShapingSource::Kind::kInline;
    u.shaping.p = sh.shaping();
  }
}

OptimizerResult optimize(const WaveformConfig& wf, const ScenarioConfig& cfg,
                         OptimizerParams params) {
  const QamConstellation qam(cfg.qam_order);
  params.symbol_energy = qam.symbol_energy();
  params.fourth_moment = qam.fourth_moment();
  const FrequencyGrid grid =
      FrequencyGrid::for_subband(wf, cfg.samples_per_subcarrier, cfg.osb_guard_subcarriers);
  return run_algorithm1(wf, grid, params);
}

double papr_at_1e2(const ShapingSet& sh, const WaveformConfig& wf, std::size_t blocks,
                   std::uint64_t seed) {
  const QamConstellation qam(16);
  Rng rng(seed);
  const ComplexMat pd = PrecodingMatrix::build(sh).data_columns(wf);
  std::vector<double> v;
  v.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const ComplexVec s = pd * qam.map(rng.bits(wf.num_data() * 4));
    v.push_back(to_db(papr(modulate_oversampled(s, wf, 4))));
  }
  return papr_at_probability(v, 1e-2);
}

// 1. Three precoder implementations agree.
Outcome precoder_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int draw = 0; draw < 200; ++draw) {
    const std::size_t k = 1 + rng.next_u64() % 4;
    const std::size_t m = 1 + rng.next_u64() % 12;
    const ShapingSet sh = ShapingSet::from_shaping(oracle::random_vec(rng, k * m), k, m);
    const ComplexVec d = oracle::random_vec(rng, k * m);
    const ComplexVec a = precode_direct(d, sh);
    const ComplexVec b = precode_frequency(d, sh);
    const ComplexVec c = precode_characteristic(d, sh);
    worst = std::max({worst, (a - b).cwiseAbs().maxCoeff(), (a - c).cwiseAbs().maxCoeff(),
                      (b - c).cwiseAbs().maxCoeff()});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0,
          "max deviation " + fmt("%.2e", worst) + " (tol 1e-10), " + fmt("%.2f", secs) +
              " s (limit 5 s)"};
}

// 2. Legacy reductions.
Outcome legacy_reductions() {
  double dev_o = 0.0;
  double dev_s = 0.0;
  for (std::size_t s : {12u, 24u, 48u}) {
    const auto o = legacy_config(LegacyKind::kOfdma, s, 128, 10, 9);
    const auto c = legacy_config(LegacyKind::kScFdma, s, 128, 10, 9);
    const ComplexMat id = ComplexMat::Identity(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    dev_o = std::max(dev_o, (PrecodingMatrix::build(o.shaping).p - id).cwiseAbs().maxCoeff());
    dev_s = std::max(dev_s,
                     (PrecodingMatrix::build(c.shaping).p - oracle::dft(s)).cwiseAbs().maxCoeff());
  }
  return {dev_o <= 1e-12 && dev_s <= 1e-12, "|P - I| " + fmt("%.2e", dev_o) + ", |P - W_S| " +
                                                 fmt("%.2e", dev_s) + " (tol 1e-12)"};
}

// 3. Unit-modulus characteristic matrix <=> unitary precoder.
Outcome unitarity() {
  Rng rng(103);
  double worst_unitary = 0.0;
  double weakest_break = 1e300;
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 1 + rng.next_u64() % 4;
    const std::size_t m = 2 + rng.next_u64() % 8;
    ComplexMat gamma(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
      gamma(i) = std::polar(1.0, 2.0 * kPi * rng.uniform());
    const auto gram = [](const ShapingSet& sh) {
      const ComplexMat p = PrecodingMatrix::build(sh).p;
      return (p.adjoint() * p - ComplexMat::Identity(p.cols(), p.cols())).norm();
    };
    worst_unitary = std::max(
        worst_unitary, gram(ShapingSet::from_characteristic(gamma, static_cast<double>(m))));
    gamma(static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(gamma.size()))) *= 0.9;
    // Same energy normalization as the unperturbed matrix.
    const ShapingSet broken = ShapingSet::from_characteristic(
        gamma, static_cast<double>(m) * gamma.squaredNorm() / static_cast<double>(k * m));
    weakest_break = std::min(weakest_break, gram(broken));
  }
  return {worst_unitary <= 1e-8 && weakest_break >= 1e-2,
          "unit modulus: ||P^H P - I|| " + fmt("%.2e", worst_unitary) +
              " (tol 1e-8); one entry 0.9: " + fmt("%.3e", weakest_break) + " (need >= 1e-2)"};
}

// 4. Closed-form MIP and VIP against Monte Carlo.
Outcome moment_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(104);
  const QamConstellation qam(16);
  const std::size_t n_values[] = {32, 64, 96, 128, 128};
  double worst_mip = 0.0;
  double worst_vip = 0.0;
  for (std::size_t n : n_values) {
    const std::size_t k = 1 + rng.next_u64() % 3;
    const std::size_t m = 2 + rng.next_u64() % (n >= 64 ? 7 : 4);
    const std::size_t eta = rng.next_u64() % (n - k * m);
    WaveformConfig wf = WaveformConfig::make(n, k, m, eta, GuardType::kCp, n / 16);
    wf.data_m.clear();
    for (std::size_t i = 1; i < m; ++i) wf.data_m.push_back(i);
    const ShapingSet sh = ShapingSet::from_shaping(oracle::random_vec(rng, k * m), k, m)
                              .with_energy(static_cast<double>(m));
    const ComplexMat pd = PrecodingMatrix::build(sh).data_columns(wf);
    const std::size_t draws = 200000;
    double p2 = 0.0;
    double p4 = 0.0;
    for (std::size_t t = 0; t < draws; ++t) {
      const ComplexVec s = pd * qam.map(rng.bits(wf.num_data() * 4));
      const ComplexVec x = modulate(s, wf).samples.tail(static_cast<Eigen::Index>(n));
      const Eigen::ArrayXd a2 = x.cwiseAbs2().array();
      p2 += a2.sum();
      p4 += a2.square().sum();
    }
    const double samples = static_cast<double>(draws * n);
    const double mc_mip = p2 / samples;
    const double mc_vip = p4 / samples - mc_mip * mc_mip;
    const double cf_mip = mip(sh, wf, qam.symbol_energy());
    const double cf_vip = vip_closed_form(sh, wf, qam.symbol_energy(), qam.fourth_moment());
    worst_mip = std::max(worst_mip, std::abs(cf_mip - mc_mip) / mc_mip);
    worst_vip = std::max(worst_vip, std::abs(cf_vip - mc_vip) / mc_vip);
  }
  const double secs = seconds_since(t0);
  return {worst_mip <= 0.01 && worst_vip <= 0.02 && secs < 120.0,
          "MIP rel err " + fmt("%.2e", worst_mip) + " (tol 1e-2), VIP rel err " +
              fmt("%.2e", worst_vip) + " (tol 2e-2), 5 configs x 2e5 draws, " +
              fmt("%.1f", secs) + " s (limit 120 s)"};
}

// 5. Closed-form PSD against Welch, and Parseval, on the optimized Case 1b
// shaping.
Outcome psd_oracle() {
  ScenarioConfig cfg = load_scenario(kConfigs / "case1b.toy");
  const WaveformConfig wf = resolve_waveform(cfg.users.front());
  const ShapingSet cps = resolve_shaping(cfg.users.front(), cfg);
  const QamConstellation qam(16);
  const FrequencyGrid grid = FrequencyGrid::for_subband(wf, 10, 4);
  const RealVec closed = psd_closed_form(cps, wf, grid, qam.symbol_energy());
  WelchAccumulator welch(grid);
  Rng rng(105);
  const ComplexMat pd = PrecodingMatrix::build(cps).data_columns(wf);
  double power = 0.0;
  const std::size_t blocks = 10000;
  for (std::size_t b = 0; b < blocks; ++b) {
    const ComplexVec x = modulate(pd * qam.map(rng.bits(wf.num_data() * 4)), wf).samples;
    welch.add(x);
    power += x.squaredNorm();
  }
  power /= static_cast<double>(blocks * wf.block_len());
  const RealVec est = welch.estimate();
  const double peak = closed.maxCoeff();
  double worst_in = 0.0;
  double worst_osb = 0.0;
  std::size_t osb_points = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double diff = std::abs(to_db(est(jj)) - to_db(closed(jj)));
    const std::size_t sc = grid.nearest_subcarrier(j);
    const bool in_band = sc >= wf.first_subcarrier && sc < wf.first_subcarrier + wf.subcarriers();
    if (in_band) {
      worst_in = std::max(worst_in, diff);
    } else if (grid.osb_mask[j] && to_db(closed(jj) / peak) > -60.0) {
      worst_osb = std::max(worst_osb, diff);
      ++osb_points;
    }
  }
  const double parseval = std::abs(closed.mean() - power) / power;
  return {worst_in <= 0.5 && worst_osb <= 1.5 && parseval <= 0.01,
          "in-band " + fmt("%.3f", worst_in) + " dB (tol 0.5), OSB above -60 dBr " +
              fmt("%.3f", worst_osb) + " dB over " + std::to_string(osb_points) +
              " points (tol 1.5), Parseval " + fmt("%.2e", parseval) + " (tol 1e-2)"};
}

// 6. Lifted quartic against the direct quartic.
Outcome lifted_form() {
  Rng rng(106);
  WaveformConfig wf = WaveformConfig::make(32, 2, 4, 5, GuardType::kCp, 2);
  wf.data_m = {1, 2, 3};
  const QuarticKernel kernel = build_quartic_kernel(wf, 1.0, 1.32);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const ComplexVec p = oracle::random_vec(rng, 8);
    const double lifted = kernel.evaluate(p * p.adjoint());
    const double direct = quartic_moment(p, wf, 1.0, 1.32);
    worst = std::max(worst, std::abs(lifted - direct) / std::abs(direct));
  }
  return {worst <= 1e-8, "max rel deviation " + fmt("%.2e", worst) + " over 20 draws (tol 1e-8)"};
}

// 7. Majorization-minimization behavior on Case 1b.
Outcome mm_behavior() {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioConfig cfg = load_scenario(kConfigs / "case1b.toy");
  const UserConfig& user = cfg.users.front();
  const WaveformConfig wf = resolve_waveform(user);
  const OptimizerResult r = optimize(wf, cfg, user.shaping.optimizer);
  const double secs = seconds_since(t0);

  // Both the surrogate value g and the true objective f must not increase.
  double worst_rise = -1e300;
  double ci_step = 0.0;
  double prev_u = 0.0;
  bool have_ci = false;
  double prev_g = 0.0;
  double prev_f = 0.0;
  bool have_mm = false;
  std::size_t mm_rows = 0;
  double rank = 0.0;
  for (const TraceRow& row : r.trace) {
    if (row.phase == "ci") {
      if (have_ci) ci_step = std::abs(row.osbep - prev_u);
      prev_u = row.osbep;
      have_ci = true;
      prev_f = row.quartic;  // f at the starting point of MM
      continue;
    }
    if (have_mm) worst_rise = std::max(worst_rise, row.objective - prev_g);
    worst_rise = std::max(worst_rise, row.quartic - prev_f);
    prev_g = row.objective;
    prev_f = row.quartic;
    have_mm = true;
    rank = row.rank_ratio;
    ++mm_rows;
  }
  const double s = static_cast<double>(wf.subcarriers());
  const double rho = static_cast<double>(wf.m_sub);
  const double energy_err = std::abs(r.p.squaredNorm() - rho) / rho;
  const ComplexMat omega = osbep_matrix(wf, FrequencyGrid::for_subband(wf, cfg.samples_per_subcarrier,
                                                                       cfg.osb_guard_subcarriers),
                                        QamConstellation(cfg.qam_order).symbol_energy());
  const double osb_excess = (osbep(r.p, omega) - r.u_bound) / r.u_bound;
  const double nep_bound = (1.0 + user.shaping.optimizer.epsilon) * s * s / rho;
  const double nep_excess = (nep(r.p, wf.k_sub, wf.m_sub) - nep_bound) / nep_bound;
  const bool ok = worst_rise <= 1e-9 && r.ci_converged && ci_step <= 1e-8 && rank <= 1e-5 &&
                  energy_err <= 1e-6 && osb_excess <= 1e-6 && nep_excess <= 1e-6 &&
                  secs < 1800.0;
  return {ok, "largest rise " + fmt("%.2e", worst_rise) + " (slack 1e-9) over " +
                  std::to_string(mm_rows) + " MM steps, CI |dU| " + fmt("%.2e", ci_step) +
                  " (tol 1e-8), rank ratio " + fmt("%.2e", rank) + " (tol 1e-5), energy " +
                  fmt("%.1e", energy_err) + ", OSBEP excess " + fmt("%.1e", osb_excess) +
                  ", NEP excess " + fmt("%.1e", nep_excess) + " (tol 1e-6), " +
                  fmt("%.1f", secs) + " s (limit 1800 s)"};
}

// 8. NEP equality case.
Outcome nep_equality() {
  const ScenarioConfig cfg = load_scenario(kConfigs / "case1b.toy");
  WaveformConfig wf = WaveformConfig::make(128, 1, 24, 52, GuardType::kCp, 9);
  OptimizerParams params;
  params.epsilon = 0.0;
  const OptimizerResult r = optimize(wf, cfg, params);
  const double bound = 24.0 * 24.0 / 24.0;
  const double zeta = nep(r.p, 1, 24);
  const double rel = std::abs(zeta - bound) / bound;
  return {rel <= 1e-6, "K=1, M=24, full data, eps=0: NEP " + fmt("%.9f", zeta) + " vs S^2/rho " +
                           fmt("%.1f", bound) + ", rel " + fmt("%.2e", rel) + " (tol 1e-6)"};
}

// 9. Comparative PAPR at desk scale.
Outcome comparative_papr(std::string* info) {
  const std::size_t blocks = 10000;
  const auto o = legacy_config(LegacyKind::kOfdma, 24, 128, 52, 9);
  const auto sc = legacy_config(LegacyKind::kScFdma, 24, 128, 52, 9);
  const double papr_o = papr_at_1e2(o.shaping, o.config, blocks, 109);
  const double papr_sc = papr_at_1e2(sc.shaping, sc.config, blocks, 109);

  ScenarioConfig cfg = load_scenario(kConfigs / "papr_k1.toy");
  const WaveformConfig wf = resolve_waveform(cfg.users.front());
  const ShapingSet cps = resolve_shaping(cfg.users.front(), cfg);
  const double papr_cps = papr_at_1e2(cps, wf, blocks, 109);

  // Half-rate setting (K, M, Z) = (2, S/2, M+1): reported for context only.
  WaveformConfig half = WaveformConfig::make(128, 2, 12, 52, GuardType::kCp, 9);
  half.data_k = {0};
  half.data_m.clear();
  for (std::size_t m = 1; m < 12; ++m) half.data_m.push_back(m);
  OptimizerParams hp;
  hp.epsilon = 0.2;
  const OptimizerResult hr = optimize(half, cfg, hp);
  const double papr_half = papr_at_1e2(ShapingSet::from_shaping(hr.p, 2, 12), half, blocks, 109);
  if (info)
    *info = "(K,M,Z,eps)=(2,12,13,0.2), 11 data symbols: " + fmt("%.2f", papr_half) +
            " dB; SS-SC-FDMA: " +
            fmt("%.2f", papr_at_1e2(legacy_config(LegacyKind::kSsScFdma, 24, 128, 52, 9).shaping,
                                    legacy_config(LegacyKind::kSsScFdma, 24, 128, 52, 9).config,
                                    blocks, 109)) +
            " dB";

  const double margin_o = papr_o - papr_cps;
  const double margin_sc = papr_sc - papr_cps;
  return {margin_o >= 0.5 && margin_sc > 0.0,
          "PAPR at CCDF 1e-2: CPS (1,24,2,0.2) " + fmt("%.2f", papr_cps) + " dB, OFDMA " +
              fmt("%.2f", papr_o) + " dB, SC-FDMA " + fmt("%.2f", papr_sc) +
              " dB; margin vs OFDMA " + fmt("%.2f", margin_o) + " dB (need >= 0.5), vs SC-FDMA " +
              fmt("%.2f", margin_sc) + " dB (need > 0)"};
}

// 10. AWGN BER against the textbook curve.
Outcome awgn_ber() {
  const ShapingSet unitary = ShapingSet::from_characteristic(ComplexMat::Ones(12, 2), 12.0);
  ScenarioConfig cfg;
  cfg.seed = 110;
  cfg.ebn0_db = {6.0, 10.0, 14.0};
  cfg.blocks = 10417;  // 96 bits per block, just over 1e6 bits
  cfg.pa = PaModel::identity();
  cfg.fde = FdeMode::kMmse;
  UserConfig u;
  u.name = "target";
  u.waveform = WaveformConfig::make(128, 2, 12, 52, GuardType::kCp, 9);
  u.shaping.kind = ShapingSource::Kind::kInline;
  u.shaping.p = unitary.shaping();
  cfg.users.push_back(u);
  const std::vector<BerPoint> pts = run_ber(cfg);
  bool ok = true;
  std::ostringstream d;
  for (const BerPoint& p : pts) {
    const double ref = qam16_awgn_ber(p.ebn0_db);
    const double n = static_cast<double>(p.bits);
    const double sigma = std::sqrt(n * ref * (1.0 - ref));
    const double z = (static_cast<double>(p.errors) - n * ref) / sigma;
    ok = ok && std::abs(z) <= 3.0 && p.bits >= 1000000;
    d << fmt("%.0f", p.ebn0_db) << " dB: " << fmt("%.3e", p.ber) << " vs " << fmt("%.3e", ref)
      << " (" << fmt("%+.2f", z) << " sigma); ";
  }
  d << "tol 3 sigma, " << pts.front().bits << " bits per point";
  return {ok, d.str()};
}

// 11. Case 3 degenerates to Case 1b without interferer power.
Outcome case_degeneration() {
  ScenarioConfig c1 = load_scenario(kConfigs / "case1b.toy");
  ScenarioConfig c3 = load_scenario(kConfigs / "case3.toy");
  freeze_shapings(c3);
  c1.users.front().shaping = c3.users.front().shaping;
  const auto base = run_ber(c1);
  const auto loud = run_ber(c3);
  for (auto& u : c3.users)
    if (&u != &c3.users.front()) u.power = 0.0;
  const auto quiet = run_ber(c3);
  bool identical = base.size() == quiet.size();
  bool monotone = base.size() == loud.size();
  std::ostringstream d;
  for (std::size_t i = 0; i < base.size() && identical && monotone; ++i) {
    identical = identical && base[i].errors == quiet[i].errors && base[i].bits == quiet[i].bits;
    monotone = monotone && loud[i].ber >= base[i].ber;
    d << fmt("%.0f", base[i].ebn0_db) << " dB " << fmt("%.2e", base[i].ber) << "/"
      << fmt("%.2e", loud[i].ber) << "; ";
  }
  return {identical && monotone,
          std::string(identical ? "zero-power Case 3 bit-identical to Case 1b"
                                : "zero-power Case 3 DIFFERS from Case 1b") +
              (monotone ? ", interference never lowers BER" : ", interference lowered BER") +
              " (1b/3: " + d.str() + ")"};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 12. Determinism of the simulate artifact.
Outcome determinism() {
  const ScenarioConfig cfg = load_scenario(kConfigs / "case1b.toy");
  const fs::path root = fs::temp_directory_path() / "cpsofdm_acceptance";
  fs::remove_all(root);
  RunOptions one;
  RunOptions two;
  two.threads = 2;
  run_case(cfg, one).write(root / "a");
  run_case(cfg, two).write(root / "b");
  std::size_t compared = 0;
  bool same = true;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const fs::path other = root / "b" / entry.path().filename();
    same = same && fs::exists(other) && read_file(entry.path()) == read_file(other);
    ++compared;
  }
  return {same && compared >= 5,
          std::to_string(compared) + " artifact files compared byte for byte across 1 and 2 threads"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name
              << "): " << o.detail << std::endl;
    if (!o.pass) ++failures;
  };

  std::string papr_info;
  report(1, "precoder equivalence", precoder_equivalence);
  report(2, "legacy reductions", legacy_reductions);
  report(3, "unitarity", unitarity);
  report(4, "moment oracles", moment_oracles);
  report(5, "PSD oracle", psd_oracle);
  report(6, "lifted form", lifted_form);
  report(7, "MM behavior", mm_behavior);
  report(8, "NEP equality", nep_equality);
  report(9, "comparative PAPR", [&] { return comparative_papr(&papr_info); });
  if (!papr_info.empty()) std::cout << "info criterion 9: " << papr_info << std::endl;
  report(10, "AWGN BER", awgn_ber);
  report(11, "case degeneration", case_degeneration);
  report(12, "determinism", determinism);
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criterion(s) fail")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
