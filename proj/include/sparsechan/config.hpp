#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsechan/core.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/multipath.hpp"
#include "sparsechan/ofdm.hpp"
#include "sparsechan/pulse.hpp"
#include "sparsechan/receiver.hpp"
#include "sparsechan/trial.hpp"

namespace sparsechan {

using json = nlohmann::json;

enum class ExperimentKind { mse, rho, growth, ci, ber };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::mse: return "mse";
    case ExperimentKind::rho: return "rho";
    case ExperimentKind::growth: return "growth";
    case ExperimentKind::ci: return "ci";
    case ExperimentKind::ber: return "ber";
  }
  return "?";
}

/// A batch experiment: what to simulate, how often, and where to write it.
struct ExperimentSpec {
  std::string name = "custom";
  ExperimentKind kind = ExperimentKind::mse;
  std::uint64_t seed = 1;
  int trials = 1000;
  std::vector<double> snr_db{0.0};
  OfdmGrid grid;
  ChannelModel channel;
  std::vector<AmplitudeKind> models;  // empty: channel.amplitude as given
  std::vector<EstimatorSpec> estimators;
  PilotKind pilots = PilotKind::ones;
  BerConfig receiver;
  int d_max = 40;                      // rho and growth kinds
  int histogram_bins = 40;             // growth kind
  int lhat_calibration_trials = 200;   // ber kind, OMP nu2
  std::string output_dir = "out";
  bool dump_trials = false;

  /// Amplitude models actually swept.
  std::vector<AmplitudeKind> swept_models() const {
    return models.empty() ? std::vector<AmplitudeKind>{channel.amplitude.kind} : models;
  }

  void validate() const;
};

/// The channel for one amplitude kind. The clustered power split belongs to the
/// lognormal-decay model only; the other kinds share its delays.
inline ChannelModel with_amplitude(const ChannelModel& base, AmplitudeKind k) {
  ChannelModel c = base;
  c.amplitude.kind = k;
  c.amplitude.cluster_split = base.amplitude.cluster_split && k == AmplitudeKind::lognormal_decay;
  return c;
}

inline void ExperimentSpec::validate() const {
  if (name.empty()) throw schema_error("name", "must not be empty");
  if (trials < 1) throw schema_error("trials", "must be >= 1");
  if (snr_db.empty()) throw schema_error("snr_db", "must not be empty");
  for (std::size_t i = 1; i < snr_db.size(); ++i)
    if (!(snr_db[i] > snr_db[i - 1])) throw schema_error("snr_db", "must be strictly increasing");
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw schema_error("grid", e.what());
  }
  if (channel.pulse.fir_length != grid.M) throw schema_error("channel.pulse", "FIR length must equal grid.M");
  try {
    channel.validate();
  } catch (const std::invalid_argument& e) {
    throw schema_error("channel", e.what());
  }
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    const std::string path = "estimators[" + std::to_string(i) + "]";
    try {
      estimators[i].validate(grid);
    } catch (const std::invalid_argument& e) {
      throw schema_error(path, e.what());
    }
    const Method m = estimators[i].method;
    if (kind == ExperimentKind::ber && (m == Method::bpdn_direct || m == Method::bpdn_ls))
      throw schema_error(path + ".method", "BER runs support perfect-csi, ml-m, genie-ls, omp and ompbr");
  }
  if ((kind == ExperimentKind::mse || kind == ExperimentKind::ber) && estimators.empty())
    throw schema_error("estimators", "at least one estimator is required");
  if (kind == ExperimentKind::ber && swept_models().size() != 1)
    throw schema_error("models", "BER runs take exactly one amplitude model");
  try {
    receiver.validate();
  } catch (const std::invalid_argument& e) {
    throw schema_error("receiver", e.what());
  }
  if (d_max < 1 || d_max > grid.M) throw schema_error("d_max", "must lie in [1, M]");
  if (histogram_bins < 1) throw schema_error("histogram_bins", "must be >= 1");
  if (lhat_calibration_trials < 1) throw schema_error("lhat_calibration_trials", "must be >= 1");
  if (output_dir.empty()) throw schema_error("output_dir", "must not be empty");
}

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<AmplitudeKind> kAmplitudeNames[] = {
    {AmplitudeKind::lognormal_decay, "lognormal-decay"},
    {AmplitudeKind::lognormal_flat, "lognormal-flat"},
    {AmplitudeKind::rayleigh_decay, "rayleigh-decay"},
    {AmplitudeKind::rayleigh_flat, "rayleigh-flat"}};
inline constexpr EnumName<Method> kMethodNames[] = {
    {Method::perfect_csi, "perfect-csi"}, {Method::ml_m, "ml-m"},   {Method::genie_ls, "genie-ls"},
    {Method::omp, "omp"},                 {Method::ompbr, "ompbr"}, {Method::bpdn_direct, "bpdn-direct"},
    {Method::bpdn_ls, "bpdn-ls"}};
inline constexpr EnumName<ExperimentKind> kKindNames[] = {{ExperimentKind::mse, "mse"},
                                                          {ExperimentKind::rho, "rho"},
                                                          {ExperimentKind::growth, "growth"},
                                                          {ExperimentKind::ci, "ci"},
                                                          {ExperimentKind::ber, "ber"}};
inline constexpr EnumName<PulseKind> kPulseNames[] = {{PulseKind::sinc, "sinc"},
                                                      {PulseKind::raised_cosine, "raised-cosine"}};
inline constexpr EnumName<DelayKind> kDelayNames[] = {{DelayKind::uniform_poisson, "uniform-poisson"},
                                                      {DelayKind::clustered, "clustered"}};
inline constexpr EnumName<Modulation> kModulationNames[] = {{Modulation::qpsk, "qpsk"},
                                                            {Modulation::qam16, "16qam"}};
inline constexpr EnumName<PilotKind> kPilotNames[] = {{PilotKind::ones, "ones"}, {PilotKind::qpsk, "qpsk"}};

template <class E, std::size_t N>
E enum_from(const json& j, const EnumName<E> (&names)[N], const std::string& path) {
  if (!j.is_string()) throw schema_error(path, "expected a string");
  const auto s = j.get<std::string>();
  std::string valid;
  for (const auto& n : names) {
    if (s == n.name) return n.value;
    valid += valid.empty() ? n.name : std::string(", ") + n.name;
  }
  throw schema_error(path, "unknown value '" + s + "' (valid: " + valid + ")");
}

template <class E, std::size_t N>
const char* enum_name(E v, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (n.value == v) return n.name;
  return "?";
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw schema_error(path.empty() ? "<root>" : path, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw schema_error(path.empty() ? k : path + "." + k, "unknown field");
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double get_number(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw schema_error(join(path, key), "expected a number");
  return v.get<double>();
}

inline long long get_integer(const json& j, const std::string& key, const std::string& path, long long fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw schema_error(join(path, key), "expected an integer");
  return v.get<long long>();
}

inline bool get_bool(const json& j, const std::string& key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw schema_error(join(path, key), "expected true or false");
  return v.get<bool>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& path,
                              const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw schema_error(join(path, key), "expected a string");
  return v.get<std::string>();
}

inline void parse_pulse(const json& j, const std::string& path, PulseShape& p) {
  reject_unknown(j, path, {"kind", "rolloff", "sample_period_s"});
  if (j.contains("kind")) p.kind = enum_from(j.at("kind"), kPulseNames, join(path, "kind"));
  p.rolloff = get_number(j, "rolloff", path, p.rolloff);
  p.sample_period = get_number(j, "sample_period_s", path, p.sample_period);
}

inline void parse_delay(const json& j, const std::string& path, DelayProcessConfig& d) {
  reject_unknown(j, path,
                 {"kind", "mean_cluster_count", "cluster_rate_hz", "intra_cluster_rate_hz", "min_intra_gap_s",
                  "min_cluster_gap_s", "mean_mpc_count", "max_delay_spread_s", "max_mpc_count"});
  if (j.contains("kind")) d.kind = enum_from(j.at("kind"), kDelayNames, join(path, "kind"));
  d.mean_cluster_count = get_number(j, "mean_cluster_count", path, d.mean_cluster_count);
  d.cluster_rate = get_number(j, "cluster_rate_hz", path, d.cluster_rate);
  d.intra_cluster_rate = get_number(j, "intra_cluster_rate_hz", path, d.intra_cluster_rate);
  d.min_intra_gap = get_number(j, "min_intra_gap_s", path, d.min_intra_gap);
  d.min_cluster_gap = get_number(j, "min_cluster_gap_s", path, d.min_cluster_gap);
  d.mean_mpc_count = get_number(j, "mean_mpc_count", path, d.mean_mpc_count);
  d.max_delay_spread = get_number(j, "max_delay_spread_s", path, d.max_delay_spread);
  d.max_mpc_count = static_cast<int>(get_integer(j, "max_mpc_count", path, d.max_mpc_count));
}

inline void parse_amplitude(const json& j, const std::string& path, AmplitudeModel& a) {
  reject_unknown(j, path, {"kind", "decay_gamma_s", "shadow_var", "cluster_split", "intra_cluster_gamma_s"});
  if (j.contains("kind")) a.kind = enum_from(j.at("kind"), kAmplitudeNames, join(path, "kind"));
  a.decay_gamma = get_number(j, "decay_gamma_s", path, a.decay_gamma);
  a.shadow_var = get_number(j, "shadow_var", path, a.shadow_var);
  a.cluster_split = get_bool(j, "cluster_split", path, a.cluster_split);
  a.intra_cluster_gamma = get_number(j, "intra_cluster_gamma_s", path, a.intra_cluster_gamma);
}

inline void parse_channel(const json& j, const std::string& path, ChannelModel& c) {
  reject_unknown(j, path, {"pulse", "delay", "amplitude", "total_power"});
  if (j.contains("pulse")) parse_pulse(j.at("pulse"), join(path, "pulse"), c.pulse);
  if (j.contains("delay")) parse_delay(j.at("delay"), join(path, "delay"), c.delay);
  if (j.contains("amplitude")) parse_amplitude(j.at("amplitude"), join(path, "amplitude"), c.amplitude);
  c.total_power = get_number(j, "total_power", path, c.total_power);
}

inline EstimatorSpec parse_estimator(const json& j, const std::string& path) {
  reject_unknown(j, path,
                 {"method", "name", "dictionary_size", "refine", "delta_mu", "xi", "max_iters", "assumed_L_hat",
                  "bpdn"});
  if (!j.contains("method")) throw schema_error(join(path, "method"), "required");
  EstimatorSpec e = make_estimator(enum_from(j.at("method"), kMethodNames, join(path, "method")));
  e.name = get_string(j, "name", path, e.name);
  e.dict.size = static_cast<int>(get_integer(j, "dictionary_size", path, e.dict.size));
  e.dict.refine = get_bool(j, "refine", path, e.dict.refine);
  e.dict.delta_mu = get_number(j, "delta_mu", path, e.dict.delta_mu);
  if (j.contains("xi")) e.dict.xi = get_number(j, "xi", path, 0.0);
  if (j.contains("max_iters")) e.dict.max_iters = static_cast<int>(get_integer(j, "max_iters", path, 0));
  if (j.contains("assumed_L_hat")) e.assumed_L_hat = get_number(j, "assumed_L_hat", path, 0.0);
  if (j.contains("bpdn")) {
    const auto& b = j.at("bpdn");
    const auto bp = join(path, "bpdn");
    reject_unknown(b, bp, {"inner_tol", "max_inner", "threshold_frac", "band_low", "max_penalty_steps"});
    e.bpdn.inner_tol = get_number(b, "inner_tol", bp, e.bpdn.inner_tol);
    e.bpdn.max_inner = static_cast<int>(get_integer(b, "max_inner", bp, e.bpdn.max_inner));
    e.bpdn.threshold_frac = get_number(b, "threshold_frac", bp, e.bpdn.threshold_frac);
    e.bpdn.band_low = get_number(b, "band_low", bp, e.bpdn.band_low);
    e.bpdn.max_penalty_steps = static_cast<int>(get_integer(b, "max_penalty_steps", bp, e.bpdn.max_penalty_steps));
  }
  return e;
}

}  // namespace detail

inline const char* amplitude_name(AmplitudeKind k) { return detail::enum_name(k, detail::kAmplitudeNames); }

inline AmplitudeKind parse_amplitude_kind(const std::string& s) {
  return detail::enum_from(json(s), detail::kAmplitudeNames, "amplitude");
}

/// Overlays the fields present in `j` on `base` and validates the result.
/// Unknown fields and type mismatches raise schema_error with the field path.
inline ExperimentSpec spec_from_json(const json& j, ExperimentSpec base = {}) {
  using namespace detail;
  reject_unknown(j, "",
                 {"name", "kind", "seed", "trials", "snr_db", "grid", "channel", "models", "estimators", "pilots",
                  "receiver", "d_max", "histogram_bins", "lhat_calibration_trials", "output_dir", "dump_trials"});
  ExperimentSpec s = std::move(base);
  s.name = get_string(j, "name", "", s.name);
  if (j.contains("kind")) s.kind = enum_from(j.at("kind"), kKindNames, "kind");
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_unsigned()) throw schema_error("seed", "expected a non-negative integer");
    s.seed = v.get<std::uint64_t>();
  }
  s.trials = static_cast<int>(get_integer(j, "trials", "", s.trials));
  if (j.contains("snr_db")) {
    const auto& v = j.at("snr_db");
    if (!v.is_array()) throw schema_error("snr_db", "expected an array of numbers");
    s.snr_db.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw schema_error("snr_db[" + std::to_string(i) + "]", "expected a number");
      s.snr_db.push_back(v[i].get<double>());
    }
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    reject_unknown(g, "grid", {"K", "M", "N"});
    s.grid.K = static_cast<int>(get_integer(g, "K", "grid", s.grid.K));
    s.grid.M = static_cast<int>(get_integer(g, "M", "grid", s.grid.M));
    s.grid.N = static_cast<int>(get_integer(g, "N", "grid", s.grid.N));
  }
  if (j.contains("channel")) parse_channel(j.at("channel"), "channel", s.channel);
  s.channel.pulse.fir_length = s.grid.M;
  if (j.contains("models")) {
    const auto& v = j.at("models");
    if (!v.is_array()) throw schema_error("models", "expected an array of amplitude kinds");
    s.models.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      s.models.push_back(enum_from(v[i], kAmplitudeNames, "models[" + std::to_string(i) + "]"));
  }
  if (j.contains("estimators")) {
    const auto& v = j.at("estimators");
    if (!v.is_array()) throw schema_error("estimators", "expected an array");
    s.estimators.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      s.estimators.push_back(parse_estimator(v[i], "estimators[" + std::to_string(i) + "]"));
  }
  if (j.contains("pilots")) s.pilots = enum_from(j.at("pilots"), kPilotNames, "pilots");
  if (j.contains("receiver")) {
    const auto& r = j.at("receiver");
    reject_unknown(r, "receiver", {"modulation", "data_frames"});
    if (r.contains("modulation"))
      s.receiver.modulation = enum_from(r.at("modulation"), kModulationNames, "receiver.modulation");
    s.receiver.data_frames = static_cast<int>(get_integer(r, "data_frames", "receiver", s.receiver.data_frames));
  }
  s.d_max = static_cast<int>(get_integer(j, "d_max", "", s.d_max));
  s.histogram_bins = static_cast<int>(get_integer(j, "histogram_bins", "", s.histogram_bins));
  s.lhat_calibration_trials =
      static_cast<int>(get_integer(j, "lhat_calibration_trials", "", s.lhat_calibration_trials));
  s.output_dir = get_string(j, "output_dir", "", s.output_dir);
  s.dump_trials = get_bool(j, "dump_trials", "", s.dump_trials);
  s.validate();
  return s;
}

inline json spec_to_json(const ExperimentSpec& s) {
  using namespace detail;
  const auto& c = s.channel;
  json j;
  j["name"] = s.name;
  j["kind"] = enum_name(s.kind, kKindNames);
  j["seed"] = s.seed;
  j["trials"] = s.trials;
  j["snr_db"] = s.snr_db;
  j["grid"] = {{"K", s.grid.K}, {"M", s.grid.M}, {"N", s.grid.N}};
  j["channel"] = {
      {"pulse",
       {{"kind", enum_name(c.pulse.kind, kPulseNames)},
        {"rolloff", c.pulse.rolloff},
        {"sample_period_s", c.pulse.sample_period}}},
      {"delay",
       {{"kind", enum_name(c.delay.kind, kDelayNames)},
        {"mean_cluster_count", c.delay.mean_cluster_count},
        {"cluster_rate_hz", c.delay.cluster_rate},
        {"intra_cluster_rate_hz", c.delay.intra_cluster_rate},
        {"min_intra_gap_s", c.delay.min_intra_gap},
        {"min_cluster_gap_s", c.delay.min_cluster_gap},
        {"mean_mpc_count", c.delay.mean_mpc_count},
        {"max_delay_spread_s", c.delay.max_delay_spread},
        {"max_mpc_count", c.delay.max_mpc_count}}},
      {"amplitude",
       {{"kind", enum_name(c.amplitude.kind, kAmplitudeNames)},
        {"decay_gamma_s", c.amplitude.decay_gamma},
        {"shadow_var", c.amplitude.shadow_var},
        {"cluster_split", c.amplitude.cluster_split},
        {"intra_cluster_gamma_s", c.amplitude.intra_cluster_gamma}}},
      {"total_power", c.total_power}};
  j["models"] = json::array();
  for (auto m : s.models) j["models"].push_back(enum_name(m, kAmplitudeNames));
  j["estimators"] = json::array();
  for (const auto& e : s.estimators) {
    json je = {{"method", enum_name(e.method, kMethodNames)},
               {"dictionary_size", e.dict.size},
               {"refine", e.dict.refine},
               {"delta_mu", e.dict.delta_mu},
               {"bpdn",
                {{"inner_tol", e.bpdn.inner_tol},
                 {"max_inner", e.bpdn.max_inner},
                 {"threshold_frac", e.bpdn.threshold_frac},
                 {"band_low", e.bpdn.band_low},
                 {"max_penalty_steps", e.bpdn.max_penalty_steps}}}};
    if (!e.name.empty()) je["name"] = e.name;
    if (e.dict.xi) je["xi"] = *e.dict.xi;
    if (e.dict.max_iters) je["max_iters"] = *e.dict.max_iters;
    if (e.assumed_L_hat) je["assumed_L_hat"] = *e.assumed_L_hat;
    j["estimators"].push_back(std::move(je));
  }
  j["pilots"] = enum_name(s.pilots, kPilotNames);
  j["receiver"] = {{"modulation", enum_name(s.receiver.modulation, kModulationNames)},
                   {"data_frames", s.receiver.data_frames}};
  j["d_max"] = s.d_max;
  j["histogram_bins"] = s.histogram_bins;
  j["lhat_calibration_trials"] = s.lhat_calibration_trials;
  j["output_dir"] = s.output_dir;
  j["dump_trials"] = s.dump_trials;
  return j;
}

/// Reads and validates a spec file. Malformed JSON is reported as a schema error at the root.
inline ExperimentSpec load_spec_file(const std::string& path, ExperimentSpec base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw schema_error("<root>", std::string("invalid JSON: ") + e.what());
  }
  return spec_from_json(j, std::move(base));
}

}  // namespace sparsechan
