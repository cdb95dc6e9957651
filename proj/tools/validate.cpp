#include "validate.hpp"

#include <cmath>
#include <string>

namespace cpsofdm::cli {
namespace {

struct Checker {
  std::ostream& out;
  int failures = 0;

  void check(bool ok, const std::string& user, const std::string& what, double value) {
    out << (ok ? "ok    " : "FAIL  ") << user << ": " << what << " (" << value << ")\n";
    if (!ok) ++failures;
  }
};

}  // namespace

int validate_scenario(const ScenarioConfig& cfg, std::ostream& out) {
  Checker c{out};
  const QamConstellation qam(cfg.qam_order);
  for (std::size_t u = 0; u < cfg.users.size(); ++u) {
    const UserConfig& user = cfg.users[u];
    const WaveformConfig wf = resolve_waveform(user);
    const ShapingSet sh = resolve_shaping(user, cfg);
    const std::size_t s = wf.subcarriers();
    Rng rng = Rng::derive(cfg.seed, 0xC0FFEE + u);

    const ComplexVec d = rng.complex_normal_vec(s, 1.0);
    const ComplexVec a = precode_direct(d, sh);
    const double dev = std::max((precode_frequency(d, sh) - a).cwiseAbs().maxCoeff(),
                                (precode_characteristic(d, sh) - a).cwiseAbs().maxCoeff());
    c.check(dev <= 1e-10 * (1.0 + a.cwiseAbs().maxCoeff()), user.name,
            "precoder forms agree", dev);

    const ComplexMat pd = PrecodingMatrix::build(sh).data_columns(wf);
    const ComplexVec sig = pd * qam.map(rng.bits(wf.num_data() * qam.bits_per_symbol()));
    const ComplexVec x = modulate(sig, wf).samples;
    const double body = x.tail(static_cast<Eigen::Index>(wf.n_fft)).squaredNorm();
    c.check(std::abs(body - sig.squaredNorm()) <= 1e-12 * (1.0 + sig.squaredNorm()), user.name,
            "modulator preserves energy", body - sig.squaredNorm());

    const double zeta = nep(sh.shaping(), sh.k_sub(), sh.m_sub());
    const double bound = static_cast<double>(s * s) / sh.rho();
    c.check(zeta >= bound * (1.0 - 1e-9), user.name, "NEP above S^2/rho", zeta);
    if (is_unitary(sh))
      c.check(std::abs(zeta - bound) <= 1e-8 * bound, user.name, "unitary NEP equals S^2/rho",
              zeta);
    c.check(is_invertible(sh), user.name, "precoder invertible", sh.rho());

    const double vip = vip_closed_form(sh, wf, qam.symbol_energy(), qam.fourth_moment());
    c.check(vip >= -1e-12, user.name, "VIP nonnegative", vip);

    const FrequencyGrid grid = FrequencyGrid::uniform(wf.n_fft, cfg.samples_per_subcarrier);
    const RealVec psd = psd_closed_form(sh, wf, grid, qam.symbol_energy());
    // Mean PSD over a full period equals the mean power per sample.
    const double mean_psd = psd.mean();
    double synth = 0.0;
    for (Eigen::Index col = 0; col < pd.cols(); ++col)
      synth += modulate(pd.col(col), wf).samples.squaredNorm();
    const double expect = qam.symbol_energy() * synth / static_cast<double>(wf.block_len());
    c.check(std::abs(mean_psd - expect) <= 1e-6 * expect, user.name, "PSD integrates to power",
            mean_psd / expect);
  }
  out << (c.failures == 0 ? "all invariants hold\n"
                          : std::to_string(c.failures) + " invariant(s) failed\n");
  return c.failures;
}

}  // namespace cpsofdm::cli
