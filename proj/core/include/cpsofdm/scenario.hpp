#pragma once

// Configuration-driven multiuser uplink runs: per-user waveform generation,
// PA, channel and timing offset, composition at a common sample rate,
// reception of the target user and metric collection.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpsofdm/metrics.hpp"
#include "cpsofdm/optimizer.hpp"
#include "cpsofdm/precoder.hpp"
#include "cpsofdm/txrx.hpp"

namespace cpsofdm {

enum class WaveformKind { kCps, kOfdma, kScFdma, kSsScFdma, kZtDftsOfdm };

WaveformKind parse_waveform_kind(const std::string& name);
std::string to_string(WaveformKind kind);

struct ShapingSource {
  enum class Kind { kDefault, kFile, kOptimize, kInline };
  Kind kind = Kind::kDefault;
  std::filesystem::path path;  // kFile
  ComplexVec p;                // kInline
  OptimizerParams optimizer;   // kOptimize
};

struct UserConfig {
  std::string name;
  WaveformKind kind = WaveformKind::kCps;
  WaveformConfig waveform;
  ShapingSource shaping;
  std::size_t timing_offset = 0;  // samples at the common rate
  double power = 1.0;             // linear scale of the transmitted power
  std::size_t numerology = 1;     // subcarrier-spacing multiple of the target
};

struct ScenarioConfig {
  std::string case_id = "1b";
  double sample_rate_hz = 1.92e6;
  double subcarrier_spacing_hz = 15e3;
  std::vector<UserConfig> users;  // users[0] is the target

  enum class ChannelKind { kFlat, kExponential, kProfile };
  ChannelKind channel_kind = ChannelKind::kFlat;
  ChannelProfile channel_profile = ChannelProfile::flat();

  PaModel pa;
  FdeMode fde = FdeMode::kMmse;
  int qam_order = 16;
  std::vector<double> ebn0_db;
  std::size_t blocks = 1000;
  std::uint64_t seed = 1;

  double guard_hz = 60e3;
  std::size_t blocks_per_tti = 14;
  double tti_s = 1e-3;

  std::size_t samples_per_subcarrier = 10;
  std::size_t osb_guard_subcarriers = 4;
  std::size_t psd_blocks = 1000;
  std::size_t papr_oversampling = 4;
  std::vector<double> papr_thresholds_db;

  std::filesystem::path base_dir;  // resolves relative file references
};

/// Parses the JSON text of a scenario file. Throws kInvalidConfig.
ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Canonical JSON of the parsed configuration (all defaults filled in).
std::string resolved_scenario_json(const ScenarioConfig& cfg);

/// FNV-1a 64-bit hash, hex encoded.
std::string fnv1a_hex(const std::string& data);

/// Shaping set of a user; optimizes or loads as configured. The trace of an
/// optimization run is appended to `trace` when given.
ShapingSet resolve_shaping(const UserConfig& user, const ScenarioConfig& cfg,
                           std::vector<TraceRow>* trace = nullptr);

/// Effective waveform of a user (legacy kinds override K, M, data sets).
WaveformConfig resolve_waveform(const UserConfig& user);

/// Sum of equal-length streams, each delayed by its offset (truncated to the
/// common length), plus one CN(0, N0) draw per sample when N0 > 0.
ComplexVec compose_multiuser(std::span<const ComplexVec> streams,
                             std::span<const std::size_t> offsets, double noise_var, Rng& rng);

/// Sample-aligned sum of a target stream and interferers generated with a
/// block length that divides the target block length.
ComplexVec compose_mixed_numerology(const ComplexVec& target, std::size_t target_block_len,
                                    std::span<const ComplexVec> interferers,
                                    std::span<const std::size_t> interferer_block_lens);

struct UserReport {
  std::string name;
  MetricReport report;
  RealVec psd_closed_db;
  RealVec psd_welch_pre_pa_db;
  RealVec psd_welch_post_pa_db;
};

struct RunArtifact {
  std::string resolved_config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<UserReport> users;
  std::vector<TraceRow> optimizer_trace;

  std::string report_json() const;
  std::string ber_csv() const;
  std::string psd_csv() const;
  std::string ccdf_csv() const;
  /// Writes config.resolved.json, report.json, ber.csv, psd.csv,
  /// papr_ccdf.csv and (when present) trace.csv into `dir`.
  void write(const std::filesystem::path& dir) const;
};

struct RunOptions {
  std::size_t threads = 1;
  bool collect_psd = true;
  bool collect_papr = true;
  bool collect_ber = true;
};

RunArtifact run_case(const ScenarioConfig& cfg, const RunOptions& options = {});

/// Target-user BER only (no PSD / PAPR work); used by fast checks.
std::vector<BerPoint> run_ber(const ScenarioConfig& cfg, std::size_t threads = 1);

std::string version_string();

}  // namespace cpsofdm
