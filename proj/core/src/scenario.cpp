#include "cpsofdm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace cpsofdm {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

#ifndef CPSOFDM_VERSION
#define CPSOFDM_VERSION "0.1.0"
#endif

std::string version_string() { return CPSOFDM_VERSION; }

WaveformKind parse_waveform_kind(const std::string& name) {
  if (name == "CPS" || name == "CPS-OFDM") return WaveformKind::kCps;
  if (name == "OFDMA") return WaveformKind::kOfdma;
  if (name == "SC-FDMA") return WaveformKind::kScFdma;
  if (name == "SS-SC-FDMA") return WaveformKind::kSsScFdma;
  if (name == "ZT-DFT-S-OFDM") return WaveformKind::kZtDftsOfdm;
  throw_error(ErrorKind::kInvalidConfig, "unknown waveform '" + name + "'");
}

std::string to_string(WaveformKind kind) {
  switch (kind) {
    case WaveformKind::kCps: return "CPS";
    case WaveformKind::kOfdma: return "OFDMA";
    case WaveformKind::kScFdma: return "SC-FDMA";
    case WaveformKind::kSsScFdma: return "SS-SC-FDMA";
    case WaveformKind::kZtDftsOfdm: return "ZT-DFT-S-OFDM";
  }
  return "?";
}

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw_error(ErrorKind::kInvalidConfig, where + ": " + what);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    config_error(where + "." + key, "has the wrong type");
  }
}

template <typename T>
T get_required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) config_error(where, std::string("missing field '") + key + "'");
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    config_error(where + "." + key, "has the wrong type");
  }
}

std::vector<std::size_t> index_set(const json& j, const char* key, std::size_t bound,
                                   const std::string& where) {
  std::vector<std::size_t> out;
  if (!j.contains(key) || j[key].is_null() || (j[key].is_string() && j[key] == "all")) {
    for (std::size_t i = 0; i < bound; ++i) out.push_back(i);
    return out;
  }
  const json& v = j[key];
  if (v.is_object()) {
    const auto from = get_required<std::size_t>(v, "from", where + "." + key);
    const auto to = get_required<std::size_t>(v, "to", where + "." + key);
    if (to < from) config_error(where + "." + key, "'to' precedes 'from'");
    for (std::size_t i = from; i <= to; ++i) out.push_back(i);
    return out;
  }
  try {
    out = v.get<std::vector<std::size_t>>();
  } catch (const json::exception&) {
    config_error(where + "." + key, "must be \"all\", a list, or {from, to}");
  }
  return out;
}

OptimizerParams parse_optimizer(const json& j, OptimizerParams p, const std::string& where) {
  if (j.is_null()) return p;
  if (!j.is_object()) config_error(where, "must be an object");
  p.beta = get_or(j, "beta", p.beta, where);
  p.epsilon = get_or(j, "epsilon", p.epsilon, where);
  p.weight = get_or(j, "weight", p.weight, where);
  p.ci_tol = get_or(j, "ci_tol", p.ci_tol, where);
  p.mm_tol = get_or(j, "mm_tol", p.mm_tol, where);
  p.max_ci_iters = get_or(j, "max_ci_iters", p.max_ci_iters, where);
  p.max_mm_iters = get_or(j, "max_mm_iters", p.max_mm_iters, where);
  p.rank_one_tol = get_or(j, "rank_one_tol", p.rank_one_tol, where);
  if (j.contains("rho") && !j["rho"].is_null()) p.rho = get_required<double>(j, "rho", where);
  p.max_kernel_subcarriers =
      get_or(j, "max_kernel_subcarriers", p.max_kernel_subcarriers, where);
  p.solver.tolerance = get_or(j, "solver_tolerance", p.solver.tolerance, where);
  p.solver.max_iterations = get_or(j, "solver_max_iterations", p.solver.max_iterations, where);
  return p;
}

ojson optimizer_json(const OptimizerParams& p) {
  ojson j;
  j["beta"] = p.beta;
  j["epsilon"] = p.epsilon;
  j["weight"] = p.weight;
  j["ci_tol"] = p.ci_tol;
  j["mm_tol"] = p.mm_tol;
  j["max_ci_iters"] = p.max_ci_iters;
  j["max_mm_iters"] = p.max_mm_iters;
  j["rank_one_tol"] = p.rank_one_tol;
  j["rho"] = p.rho ? ojson(*p.rho) : ojson(nullptr);
  j["max_kernel_subcarriers"] = p.max_kernel_subcarriers;
  j["solver_tolerance"] = p.solver.tolerance;
  j["solver_max_iterations"] = p.solver.max_iterations;
  return j;
}

UserConfig parse_user(const json& j, const OptimizerParams& default_opt, std::size_t index) {
  const std::string where = "users[" + std::to_string(index) + "]";
  if (!j.is_object()) config_error(where, "must be an object");
  UserConfig u;
  u.name = get_or<std::string>(j, "name", "user" + std::to_string(index), where);
  u.kind = parse_waveform_kind(get_or<std::string>(j, "waveform", "CPS", where));
  u.timing_offset = get_or<std::size_t>(j, "timing_offset", 0, where);
  u.power = get_or(j, "power", 1.0, where);
  if (!(u.power >= 0.0)) config_error(where + ".power", "must be >= 0");
  u.numerology = get_or<std::size_t>(j, "numerology", 1, where);

  WaveformConfig& w = u.waveform;
  w.n_fft = get_required<std::size_t>(j, "n_fft", where);
  w.first_subcarrier = get_required<std::size_t>(j, "eta", where);
  w.guard = parse_guard_type(get_or<std::string>(j, "guard", "CP", where));
  w.guard_len = get_or<std::size_t>(j, "guard_len", 0, where);
  if (u.kind == WaveformKind::kCps) {
    w.k_sub = get_required<std::size_t>(j, "k", where);
    w.m_sub = get_required<std::size_t>(j, "m", where);
    w.data_k = index_set(j, "data_k", w.k_sub, where);
    w.data_m = index_set(j, "data_m", w.m_sub, where);
  } else {
    // Legacy kinds: S given directly, structure derived later.
    const auto s = get_required<std::size_t>(j, "s", where);
    w.k_sub = s;
    w.m_sub = 1;
    w.data_k = {get_or<std::size_t>(j, "data_k", 0, where)};
    w.data_m = {0};
  }

  const json sh = j.contains("shaping") ? j["shaping"] : json(nullptr);
  if (!sh.is_null()) {
    const auto source = get_required<std::string>(sh, "source", where + ".shaping");
    if (source == "file") {
      u.shaping.kind = ShapingSource::Kind::kFile;
      u.shaping.path = get_required<std::string>(sh, "path", where + ".shaping");
    } else if (source == "optimize") {
      u.shaping.kind = ShapingSource::Kind::kOptimize;
      u.shaping.optimizer = parse_optimizer(sh.value("optimizer", json(nullptr)), default_opt,
                                            where + ".shaping.optimizer");
    } else if (source == "inline") {
      u.shaping.kind = ShapingSource::Kind::kInline;
      const auto re = get_required<std::vector<double>>(sh, "p_real", where + ".shaping");
      const auto im = get_required<std::vector<double>>(sh, "p_imag", where + ".shaping");
      if (re.size() != im.size()) config_error(where + ".shaping", "p_real / p_imag lengths differ");
      u.shaping.p.resize(static_cast<Eigen::Index>(re.size()));
      for (std::size_t i = 0; i < re.size(); ++i)
        u.shaping.p(static_cast<Eigen::Index>(i)) = {re[i], im[i]};
    } else if (source == "default") {
      u.shaping.kind = ShapingSource::Kind::kDefault;
    } else {
      config_error(where + ".shaping.source", "unknown source '" + source + "'");
    }
  }
  if (u.kind == WaveformKind::kCps && u.shaping.kind == ShapingSource::Kind::kDefault)
    config_error(where, "CPS users need a shaping source (file, optimize or inline)");
  return u;
}

// The OSB guard is given in target subcarriers; a user with a wider
// subcarrier spacing keeps the same guard in Hz.
std::size_t osb_guard(const UserConfig& user, const ScenarioConfig& cfg) {
  return std::max<std::size_t>(1, cfg.osb_guard_subcarriers / std::max<std::size_t>(1, user.numerology));
}

// Same layout as a channel profile file: {"taps": [{delay_ns, power_db}, ...]}.
ChannelProfile inline_profile(const json& ch) {
  if (!ch.contains("taps") || !ch["taps"].is_array() || ch["taps"].empty())
    config_error("channel", "profile needs 'path' or a nonempty 'taps' list");
  ChannelProfile prof;
  for (const auto& tap : ch["taps"]) {
    prof.delays_ns.push_back(get_required<double>(tap, "delay_ns", "channel.taps"));
    prof.powers_db.push_back(get_required<double>(tap, "power_db", "channel.taps"));
  }
  return prof;
}

std::vector<cdouble> inline_coefficients(const json& list) {
  if (!list.is_array() || list.empty())
    config_error("pa.coefficients", "must be a file path or a list of [real, imag] pairs");
  std::vector<cdouble> out;
  for (const auto& pair : list) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
      config_error("pa.coefficients", "entries must be [real, imag] pairs");
    out.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  return out;
}

std::vector<double> parse_thresholds(const json& j, const std::string& where) {
  if (j.is_array()) return j.get<std::vector<double>>();
  if (j.is_object()) {
    const double start = get_required<double>(j, "start", where);
    const double stop = get_required<double>(j, "stop", where);
    const double step = get_required<double>(j, "step", where);
    if (!(step > 0.0) || stop < start) config_error(where, "invalid threshold range");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    // Rounded so that 0.1 steps print as 0.3 rather than 0.30000000000000004.
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(std::round((start + step * static_cast<double>(i)) * 1e9) / 1e9);
    return out;
  }
  config_error(where, "must be a list or {start, stop, step}");
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw_error(ErrorKind::kInvalidConfig, std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("scenario", "top level must be an object");

  ScenarioConfig c;
  c.base_dir = base_dir;
  const std::string root = "scenario";
  c.case_id = get_or<std::string>(j, "case", c.case_id, root);
  c.sample_rate_hz = get_or(j, "sample_rate_hz", c.sample_rate_hz, root);
  c.subcarrier_spacing_hz = get_or(j, "subcarrier_spacing_hz", c.subcarrier_spacing_hz, root);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, root);
  c.blocks = get_or(j, "blocks", c.blocks, root);
  c.qam_order = get_or(j, "qam_order", c.qam_order, root);
  c.fde = parse_fde_mode(get_or<std::string>(j, "fde", "MMSE", root));
  c.ebn0_db = get_or(j, "ebn0_db", std::vector<double>{}, root);
  if (c.blocks == 0) config_error(root + ".blocks", "must be positive");

  if (j.contains("channel")) {
    const json& ch = j["channel"];
    const auto model = get_or<std::string>(ch, "model", "flat", "channel");
    if (model == "flat") {
      c.channel_kind = ScenarioConfig::ChannelKind::kFlat;
      c.channel_profile = ChannelProfile::flat();
    } else if (model == "exponential") {
      c.channel_kind = ScenarioConfig::ChannelKind::kExponential;
      c.channel_profile = ChannelProfile::exponential(
          get_or<std::size_t>(ch, "taps", 9, "channel"), get_or(ch, "decay_db", 3.0, "channel"),
          c.sample_rate_hz);
    } else if (model == "profile") {
      c.channel_kind = ScenarioConfig::ChannelKind::kProfile;
      if (ch.contains("path")) {
        const std::filesystem::path p = get_required<std::string>(ch, "path", "channel");
        c.channel_profile = load_channel_profile(p.is_absolute() ? p : base_dir / p);
      } else {
        c.channel_profile = inline_profile(ch);
      }
    } else {
      config_error("channel.model", "unknown model '" + model + "'");
    }
  }

  if (j.contains("pa")) {
    const json& pa = j["pa"];
    const auto model = get_or<std::string>(pa, "model", "identity", "pa");
    const double ibo = get_or(pa, "ibo_db", 3.0, "pa");
    if (model == "identity") {
      c.pa = PaModel::identity();
    } else if (model == "rapp") {
      c.pa = PaModel::rapp(get_or(pa, "smoothness", 2.0, "pa"),
                           get_or(pa, "saturation", 1.0, "pa"), ibo);
    } else if (model == "polynomial") {
      if (!pa.contains("coefficients")) config_error("pa", "missing field 'coefficients'");
      std::vector<cdouble> coeffs;
      if (pa["coefficients"].is_string()) {
        const std::filesystem::path p = pa["coefficients"].get<std::string>();
        coeffs = load_pa_coefficients(p.is_absolute() ? p : base_dir / p);
      } else {
        coeffs = inline_coefficients(pa["coefficients"]);
      }
      c.pa = PaModel::polynomial(std::move(coeffs), ibo,
                                 get_or(pa, "phase_compensation_deg", 0.0, "pa") * kPi / 180.0);
    } else {
      config_error("pa.model", "unknown model '" + model + "'");
    }
  }

  if (j.contains("framing")) {
    const json& f = j["framing"];
    c.guard_hz = get_or(f, "guard_hz", c.guard_hz, "framing");
    c.blocks_per_tti = get_or(f, "blocks_per_tti", c.blocks_per_tti, "framing");
    c.tti_s = get_or(f, "tti_s", c.tti_s, "framing");
  }
  if (j.contains("psd")) {
    const json& p = j["psd"];
    c.samples_per_subcarrier = get_or(p, "samples_per_subcarrier", c.samples_per_subcarrier, "psd");
    c.osb_guard_subcarriers = get_or(p, "osb_guard_subcarriers", c.osb_guard_subcarriers, "psd");
    c.psd_blocks = get_or(p, "blocks", c.psd_blocks, "psd");
  }
  c.papr_thresholds_db.clear();
  for (int i = 0; i <= 120; ++i) c.papr_thresholds_db.push_back(i / 10.0);
  if (j.contains("papr")) {
    const json& p = j["papr"];
    c.papr_oversampling = get_or(p, "oversampling", c.papr_oversampling, "papr");
    if (p.contains("thresholds_db"))
      c.papr_thresholds_db = parse_thresholds(p["thresholds_db"], "papr.thresholds_db");
  }

  const OptimizerParams default_opt =
      parse_optimizer(j.value("optimizer", json(nullptr)), OptimizerParams{}, "optimizer");
  if (!j.contains("users") || !j["users"].is_array() || j["users"].empty())
    config_error(root, "needs a nonempty 'users' list (the first entry is the target)");
  for (std::size_t i = 0; i < j["users"].size(); ++i)
    c.users.push_back(parse_user(j["users"][i], default_opt, i));

  for (const auto& u : c.users) resolve_waveform(u);
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot read scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

WaveformConfig resolve_waveform(const UserConfig& user) {
  const WaveformConfig& w = user.waveform;
  if (user.kind == WaveformKind::kCps) {
    w.validate();
    return w;
  }
  LegacyKind kind = LegacyKind::kOfdma;
  switch (user.kind) {
    case WaveformKind::kOfdma: kind = LegacyKind::kOfdma; break;
    case WaveformKind::kScFdma: kind = LegacyKind::kScFdma; break;
    case WaveformKind::kSsScFdma: kind = LegacyKind::kSsScFdma; break;
    case WaveformKind::kZtDftsOfdm: kind = LegacyKind::kZtDftsOfdm; break;
    case WaveformKind::kCps: break;
  }
  const std::size_t s = w.k_sub * w.m_sub;
  LegacyWaveform lw = legacy_config(kind, s, w.n_fft, w.first_subcarrier, w.guard_len,
                                    w.data_k.empty() ? 0 : w.data_k.front());
  if (kind != LegacyKind::kZtDftsOfdm) {
    lw.config.guard = w.guard;
    lw.config.guard_len = w.guard == GuardType::kNone ? 0 : w.guard_len;
  }
  lw.config.validate();
  return lw.config;
}

std::string resolved_scenario_json(const ScenarioConfig& c) {
  ojson j;
  j["case"] = c.case_id;
  j["sample_rate_hz"] = c.sample_rate_hz;
  j["subcarrier_spacing_hz"] = c.subcarrier_spacing_hz;
  j["seed"] = c.seed;
  j["blocks"] = c.blocks;
  j["qam_order"] = c.qam_order;
  j["fde"] = c.fde == FdeMode::kZf ? "ZF" : "MMSE";
  j["ebn0_db"] = c.ebn0_db;
  // Multipath channels are written as an inline profile so the resolved file
  // is self-contained.
  ojson ch;
  if (c.channel_kind == ScenarioConfig::ChannelKind::kFlat) {
    ch["model"] = "flat";
  } else {
    ch["model"] = "profile";
    ojson taps = ojson::array();
    for (std::size_t i = 0; i < c.channel_profile.delays_ns.size(); ++i)
      taps.push_back({{"delay_ns", c.channel_profile.delays_ns[i]},
                      {"power_db", c.channel_profile.powers_db[i]}});
    ch["taps"] = taps;
  }
  j["channel"] = ch;
  ojson pa;
  switch (c.pa.kind) {
    case PaKind::kIdentity: pa["model"] = "identity"; break;
    case PaKind::kRapp:
      pa["model"] = "rapp";
      pa["smoothness"] = c.pa.smoothness;
      pa["saturation"] = c.pa.saturation;
      break;
    case PaKind::kPolynomial: {
      pa["model"] = "polynomial";
      ojson coeffs = ojson::array();
      for (const auto& v : c.pa.coefficients) coeffs.push_back({v.real(), v.imag()});
      pa["coefficients"] = coeffs;
      pa["phase_compensation_deg"] = c.pa.phase_compensation * 180.0 / kPi;
      break;
    }
  }
  pa["ibo_db"] = c.pa.ibo_db;
  j["pa"] = pa;
  j["framing"] = {{"guard_hz", c.guard_hz},
                  {"blocks_per_tti", c.blocks_per_tti},
                  {"tti_s", c.tti_s}};
  j["psd"] = {{"samples_per_subcarrier", c.samples_per_subcarrier},
              {"osb_guard_subcarriers", c.osb_guard_subcarriers},
              {"blocks", c.psd_blocks}};
  j["papr"] = {{"oversampling", c.papr_oversampling}, {"thresholds_db", c.papr_thresholds_db}};
  ojson users = ojson::array();
  for (const auto& u : c.users) {
    const WaveformConfig w = resolve_waveform(u);
    ojson uj;
    uj["name"] = u.name;
    uj["waveform"] = to_string(u.kind);
    uj["n_fft"] = w.n_fft;
    uj["eta"] = w.first_subcarrier;
    uj["k"] = w.k_sub;
    uj["m"] = w.m_sub;
    uj["guard"] = to_string(w.guard);
    uj["guard_len"] = w.guard_len;
    uj["data_k"] = w.data_k;
    uj["data_m"] = w.data_m;
    uj["timing_offset"] = u.timing_offset;
    uj["power"] = u.power;
    uj["numerology"] = u.numerology;
    ojson sh;
    switch (u.shaping.kind) {
      case ShapingSource::Kind::kDefault: sh["source"] = "default"; break;
      case ShapingSource::Kind::kFile:
        sh["source"] = "file";
        sh["path"] = u.shaping.path.generic_string();
        break;
      case ShapingSource::Kind::kOptimize:
        sh["source"] = "optimize";
        sh["optimizer"] = optimizer_json(u.shaping.optimizer);
        break;
      case ShapingSource::Kind::kInline: {
        sh["source"] = "inline";
        std::vector<double> re, im;
        for (Eigen::Index i = 0; i < u.shaping.p.size(); ++i) {
          re.push_back(u.shaping.p(i).real());
          im.push_back(u.shaping.p(i).imag());
        }
        sh["p_real"] = re;
        sh["p_imag"] = im;
        break;
      }
    }
    uj["shaping"] = sh;
    users.push_back(uj);
  }
  j["users"] = users;
  return j.dump(2);
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

ShapingSet resolve_shaping(const UserConfig& user, const ScenarioConfig& cfg,
                           std::vector<TraceRow>* trace) {
  const WaveformConfig w = resolve_waveform(user);
  switch (user.shaping.kind) {
    case ShapingSource::Kind::kDefault: {
      require(user.kind != WaveformKind::kCps, ErrorKind::kInvalidConfig,
              "CPS user '" + user.name + "' has no shaping source");
      LegacyKind kind = LegacyKind::kOfdma;
      if (user.kind == WaveformKind::kScFdma) kind = LegacyKind::kScFdma;
      if (user.kind == WaveformKind::kSsScFdma) kind = LegacyKind::kSsScFdma;
      if (user.kind == WaveformKind::kZtDftsOfdm) kind = LegacyKind::kZtDftsOfdm;
      return legacy_config(kind, w.subcarriers(), w.n_fft, w.first_subcarrier,
                           user.waveform.guard_len,
                           user.waveform.data_k.empty() ? 0 : user.waveform.data_k.front())
          .shaping;
    }
    case ShapingSource::Kind::kFile: {
      const auto& p = user.shaping.path;
      ShapingSet s = load_shaping(p.is_absolute() ? p : cfg.base_dir / p);
      require(s.k_sub() == w.k_sub && s.m_sub() == w.m_sub, ErrorKind::kInvalidConfig,
              "shaping file K/M do not match user '" + user.name + "'");
      return s;
    }
    case ShapingSource::Kind::kInline:
      return ShapingSet::from_shaping(user.shaping.p, w.k_sub, w.m_sub);
    case ShapingSource::Kind::kOptimize: {
      const FrequencyGrid grid =
          FrequencyGrid::for_subband(w, cfg.samples_per_subcarrier, osb_guard(user, cfg));
      const QamConstellation qam(cfg.qam_order);
      OptimizerParams params = user.shaping.optimizer;
      params.symbol_energy = qam.symbol_energy();
      params.fourth_moment = qam.fourth_moment();
      const OptimizerResult r = run_algorithm1(w, grid, params);
      if (trace) trace->insert(trace->end(), r.trace.begin(), r.trace.end());
      return ShapingSet::from_shaping(r.p, w.k_sub, w.m_sub);
    }
  }
  throw_error(ErrorKind::kInvalidConfig, "unhandled shaping source");
}

ComplexVec compose_multiuser(std::span<const ComplexVec> streams,
                             std::span<const std::size_t> offsets, double noise_var, Rng& rng) {
  require(!streams.empty(), ErrorKind::kInvalidArgument, "no streams to compose");
  require(streams.size() == offsets.size(), ErrorKind::kInvalidArgument,
          "one offset per stream required");
  const Eigen::Index len = streams.front().size();
  for (const auto& s : streams)
    require(s.size() == len, ErrorKind::kInvalidConfig,
            "streams differ in length; they must share one sample rate and frame");
  ComplexVec out = ComplexVec::Zero(len);
  for (std::size_t u = 0; u < streams.size(); ++u) {
    const auto off = static_cast<Eigen::Index>(offsets[u]);
    if (off >= len) continue;
    out.tail(len - off) += streams[u].head(len - off);
  }
  if (noise_var > 0.0)
    for (Eigen::Index n = 0; n < len; ++n) out(n) += rng.complex_normal(noise_var);
  return out;
}

ComplexVec compose_mixed_numerology(const ComplexVec& target, std::size_t target_block_len,
                                    std::span<const ComplexVec> interferers,
                                    std::span<const std::size_t> interferer_block_lens) {
  require(interferers.size() == interferer_block_lens.size(), ErrorKind::kInvalidArgument,
          "one block length per interferer required");
  require(target_block_len > 0 && target.size() % static_cast<Eigen::Index>(target_block_len) == 0,
          ErrorKind::kInvalidConfig, "target stream is not a whole number of blocks");
  ComplexVec out = target;
  for (std::size_t i = 0; i < interferers.size(); ++i) {
    const std::size_t bl = interferer_block_lens[i];
    require(bl > 0 && target_block_len % bl == 0, ErrorKind::kInvalidConfig,
            "interferer block length " + std::to_string(bl) +
                " does not divide the target block length " + std::to_string(target_block_len));
    require(interferers[i].size() == target.size(), ErrorKind::kInvalidConfig,
            "interferer stream does not cover the target frame");
    out += interferers[i];
  }
  return out;
}

namespace {

constexpr std::uint64_t kStreamData = 1;
constexpr std::uint64_t kStreamChannel = 2;
constexpr std::uint64_t kNoiseBase = 1u << 20;

struct PreparedUser {
  UserConfig user;
  WaveformConfig wf;
  ShapingSet shaping;
  ComplexMat p_data;  // S x D
  std::size_t blocks_per_frame = 1;
};

struct UserSignals {
  ComplexVec rx;                        // after PA, power, channel and offset
  std::vector<ComplexVec> taps;         // per target block
  std::vector<std::uint8_t> bits;       // target only
  std::vector<double> papr_db;
  RealVec welch_pre;
  RealVec welch_post;
};

std::vector<PreparedUser> prepare_users(const ScenarioConfig& cfg, std::vector<TraceRow>* trace) {
  std::vector<PreparedUser> out;
  for (const auto& u : cfg.users) {
    PreparedUser pu;
    pu.user = u;
    pu.wf = resolve_waveform(u);
    pu.shaping = resolve_shaping(u, cfg, out.empty() ? trace : nullptr);
    pu.p_data = PrecodingMatrix::build(pu.shaping).data_columns(pu.wf);
    out.push_back(std::move(pu));
  }
  const std::size_t target_len = out.front().wf.block_len();
  for (auto& pu : out) {
    const std::size_t bl = pu.wf.block_len();
    if (target_len % bl != 0)
      throw_error(ErrorKind::kInvalidConfig,
                  "user '" + pu.user.name + "' block length " + std::to_string(bl) +
                      " does not divide the target block length " + std::to_string(target_len));
    pu.blocks_per_frame = target_len / bl;
    if (pu.user.numerology != 1 && pu.user.numerology != pu.blocks_per_frame)
      throw_error(ErrorKind::kInvalidConfig,
                  "user '" + pu.user.name + "' numerology " + std::to_string(pu.user.numerology) +
                      " disagrees with its block-length ratio " +
                      std::to_string(pu.blocks_per_frame));
  }
  return out;
}

RealVec to_db_vec(const RealVec& v) {
  RealVec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out(i) = v(i) > 0.0 ? 10.0 * std::log10(v(i)) : -400.0;
  return out;
}

UserSignals generate_user(const PreparedUser& pu, std::size_t index, const ScenarioConfig& cfg,
                          const QamConstellation& qam, const RunOptions& opt, bool is_target) {
  UserSignals out;
  Rng data_rng = Rng::derive(cfg.seed, 16 * index + kStreamData);
  Rng chan_rng = Rng::derive(cfg.seed, 16 * index + kStreamChannel);
  const std::size_t nblocks = cfg.blocks * pu.blocks_per_frame;
  const std::size_t bl = pu.wf.block_len();
  const std::size_t nbits = pu.wf.num_data() * static_cast<std::size_t>(qam.bits_per_symbol());

  const bool want_psd = opt.collect_psd;
  const bool want_papr = opt.collect_papr;
  const FrequencyGrid grid = FrequencyGrid::uniform(pu.wf.n_fft, cfg.samples_per_subcarrier);
  std::optional<WelchAccumulator> pre, post;
  if (want_psd) {
    pre.emplace(grid);
    post.emplace(grid);
  }

  ComplexVec stream(static_cast<Eigen::Index>(nblocks * bl));
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::vector<std::uint8_t> bits = data_rng.bits(nbits);
    const ComplexVec s = pu.p_data * qam.map(bits);
    const BlockSignal blk = modulate(s, pu.wf, b);
    stream.segment(static_cast<Eigen::Index>(b * bl), static_cast<Eigen::Index>(bl)) = blk.samples;
    if (is_target) out.bits.insert(out.bits.end(), bits.begin(), bits.end());
    if (want_papr) out.papr_db.push_back(to_db(papr(modulate_oversampled(s, pu.wf, cfg.papr_oversampling))));
    if (want_psd && b < cfg.psd_blocks) pre->add(blk.samples);
  }

  ComplexVec amplified = pa_apply(stream, cfg.pa);
  if (want_psd) {
    const std::size_t nb = std::min(nblocks, cfg.psd_blocks);
    for (std::size_t b = 0; b < nb; ++b)
      post->add(amplified.segment(static_cast<Eigen::Index>(b * bl), static_cast<Eigen::Index>(bl)));
    out.welch_pre = pre->estimate();
    out.welch_post = post->estimate();
  }
  amplified *= std::sqrt(pu.user.power);

  // One channel realization per target block period.
  out.taps.reserve(cfg.blocks);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    if (cfg.channel_kind == ScenarioConfig::ChannelKind::kFlat) {
      out.taps.push_back(ComplexVec::Ones(1));
    } else {
      out.taps.push_back(cfg.channel_profile.realize(chan_rng, cfg.sample_rate_hz, 0.0).taps);
    }
  }
  out.rx = channel_convolve_blocks(amplified, out.taps, bl * pu.blocks_per_frame);
  return out;
}

BerPoint receive_point(const PreparedUser& target, const std::vector<UserSignals>& sig,
                       const std::vector<std::size_t>& offsets, const ScenarioConfig& cfg,
                       const QamConstellation& qam, std::size_t point) {
  const double ebn0 = cfg.ebn0_db[point];
  const double n0 = noise_variance_for_ebn0(ebn0, qam.symbol_energy(),
                                            static_cast<std::size_t>(qam.bits_per_symbol()));
  Rng noise_rng = Rng::derive(cfg.seed, kNoiseBase + point);
  std::vector<ComplexVec> streams;
  streams.reserve(sig.size());
  for (const auto& s : sig) streams.push_back(s.rx);
  const ComplexVec composite = compose_multiuser(streams, offsets, n0, noise_rng);

  const auto& wf = target.wf;
  const std::size_t bl = wf.block_len();
  const std::size_t nbits = wf.num_data() * static_cast<std::size_t>(qam.bits_per_symbol());
  std::uint64_t errors = 0;
  ComplexMat q;
  ComplexVec gains;
  const ComplexVec* last_taps = nullptr;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const ComplexVec& taps = sig.front().taps[b];
    if (last_taps == nullptr || taps.size() != last_taps->size() || taps != *last_taps) {
      const ComplexVec h = channel_frequency_response(taps, wf);
      q = fde_matrix(h, target.p_data, n0, qam.symbol_energy(), cfg.fde);
      gains = fde_gains(q, h, target.p_data);
      last_taps = &taps;
    }
    const ComplexVec r = receive_block(
        composite.segment(static_cast<Eigen::Index>(b * bl), static_cast<Eigen::Index>(bl)), wf);
    const ComplexVec d_hat = (q * r).cwiseQuotient(gains);
    const std::vector<std::uint8_t> bits = qam.demap(d_hat);
    const std::uint8_t* ref = sig.front().bits.data() + b * nbits;
    for (std::size_t i = 0; i < nbits; ++i) errors += (bits[i] != ref[i]) ? 1 : 0;
  }
  BerPoint p;
  p.ebn0_db = ebn0;
  p.bits = static_cast<std::uint64_t>(cfg.blocks * nbits);
  p.errors = errors;
  p.ber = static_cast<double>(errors) / static_cast<double>(p.bits);
  p.spectral_efficiency = spectral_efficiency(
      p.ber, static_cast<std::size_t>(qam.bits_per_symbol()), wf.num_data(), cfg.blocks_per_tti,
      cfg.tti_s, static_cast<double>(wf.subcarriers()) * cfg.subcarrier_spacing_hz, cfg.guard_hz);
  return p;
}

std::vector<BerPoint> run_points(const PreparedUser& target, const std::vector<UserSignals>& sig,
                                 const std::vector<std::size_t>& offsets, const ScenarioConfig& cfg,
                                 const QamConstellation& qam, std::size_t threads) {
  std::vector<BerPoint> out(cfg.ebn0_db.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, out.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = receive_point(target, sig, offsets, cfg, qam, i);
    return out;
  }
  std::vector<std::thread> pool;
  std::mutex err_mutex;
  std::exception_ptr first_error;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < out.size(); i += workers) {
        try {
          out[i] = receive_point(target, sig, offsets, cfg, qam, i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace

RunArtifact run_case(const ScenarioConfig& cfg, const RunOptions& options) {
  RunArtifact art;
  art.resolved_config = resolved_scenario_json(cfg);
  art.config_hash = fnv1a_hex(art.resolved_config);
  art.seed = cfg.seed;

  const QamConstellation qam(cfg.qam_order);
  const std::vector<PreparedUser> users = prepare_users(cfg, &art.optimizer_trace);

  std::vector<UserSignals> sig;
  std::vector<std::size_t> offsets;
  for (std::size_t u = 0; u < users.size(); ++u) {
    sig.push_back(generate_user(users[u], u, cfg, qam, options, u == 0));
    offsets.push_back(users[u].user.timing_offset);
  }

  for (std::size_t u = 0; u < users.size(); ++u) {
    const PreparedUser& pu = users[u];
    UserReport ur;
    ur.name = pu.user.name;
    MetricReport& rep = ur.report;
    rep.label = pu.user.name;
    const FrequencyGrid grid =
        FrequencyGrid::for_subband(pu.wf, cfg.samples_per_subcarrier, osb_guard(pu.user, cfg));
    rep.omega = grid.omega;
    const RealVec psd = psd_closed_form(pu.shaping, pu.wf, grid, qam.symbol_energy());
    rep.psd_db = to_db_vec(psd);
    ur.psd_closed_db = rep.psd_db;
    rep.osbep = osb_quadrature(psd, grid);
    rep.mip = mip(pu.shaping, pu.wf, qam.symbol_energy());
    rep.vip = vip_closed_form(pu.shaping, pu.wf, qam.symbol_energy(), qam.fourth_moment());
    if (options.collect_papr)
      rep.papr_ccdf = papr_ccdf(std::span<const double>(sig[u].papr_db),
                                std::span<const double>(cfg.papr_thresholds_db));
    if (options.collect_psd) {
      ur.psd_welch_pre_pa_db = to_db_vec(sig[u].welch_pre);
      ur.psd_welch_post_pa_db = to_db_vec(sig[u].welch_post);
    }
    art.users.push_back(std::move(ur));
  }
  if (options.collect_ber && !cfg.ebn0_db.empty())
    art.users.front().report.ber =
        run_points(users.front(), sig, offsets, cfg, qam, options.threads);
  return art;
}

std::vector<BerPoint> run_ber(const ScenarioConfig& cfg, std::size_t threads) {
  RunOptions opt;
  opt.threads = threads;
  opt.collect_psd = false;
  opt.collect_papr = false;
  const QamConstellation qam(cfg.qam_order);
  const std::vector<PreparedUser> users = prepare_users(cfg, nullptr);
  std::vector<UserSignals> sig;
  std::vector<std::size_t> offsets;
  for (std::size_t u = 0; u < users.size(); ++u) {
    sig.push_back(generate_user(users[u], u, cfg, qam, opt, u == 0));
    offsets.push_back(users[u].user.timing_offset);
  }
  return run_points(users.front(), sig, offsets, cfg, qam, threads);
}

std::string RunArtifact::report_json() const {
  ojson j;
  j["provenance"] = {{"tool", "cpsofdm"},
                     {"version", version_string()},
                     {"seed", seed},
                     {"config_hash", config_hash}};
  ojson us = ojson::array();
  for (const auto& u : users) us.push_back(ojson::parse(u.report.to_json()));
  j["users"] = us;
  return j.dump(2);
}

std::string RunArtifact::ber_csv() const {
  return users.empty() ? std::string("ebn0_db,bits,errors,ber,se\n") : users.front().report.ber_csv();
}

std::string RunArtifact::psd_csv() const {
  std::ostringstream out;
  out << "user,omega,closed_db,welch_pre_pa_db,welch_post_pa_db\n";
  for (const auto& u : users) {
    const auto& r = u.report;
    for (Eigen::Index j = 0; j < r.omega.size(); ++j) {
      out << u.name << ',' << format_double(r.omega(j)) << ',' << format_double(u.psd_closed_db(j))
          << ',';
      if (u.psd_welch_pre_pa_db.size() == r.omega.size())
        out << format_double(u.psd_welch_pre_pa_db(j)) << ','
            << format_double(u.psd_welch_post_pa_db(j));
      else
        out << ',';
      out << '\n';
    }
  }
  return out.str();
}

std::string RunArtifact::ccdf_csv() const {
  std::ostringstream out;
  out << "user,threshold_db,ccdf\n";
  for (const auto& u : users)
    for (const auto& c : u.report.papr_ccdf)
      out << u.name << ',' << format_double(c.threshold_db) << ','
          << format_double(c.probability) << '\n';
  return out.str();
}

void RunArtifact::write(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create output directory " + dir.string());
  auto put = [&](const char* name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    require(out.good(), ErrorKind::kIo, "cannot write " + (dir / name).string());
    out << content;
  };
  put("config.resolved.json", resolved_config + "\n");
  put("report.json", report_json() + "\n");
  put("ber.csv", ber_csv());
  put("psd.csv", psd_csv());
  put("papr_ccdf.csv", ccdf_csv());
  if (!optimizer_trace.empty()) put("trace.csv", trace_csv(optimizer_trace));
}

}  // namespace cpsofdm
