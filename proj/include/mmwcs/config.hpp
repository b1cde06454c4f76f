// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration: a JSON document with a fixed schema. Every key is
// optional and falls back to the desk profile; unknown keys are rejected so a
// typo cannot silently run the default. See configs/ for complete examples.

#include "mmwcs/beam_eval.hpp"
#include "mmwcs/channel_model.hpp"
#include "mmwcs/dictionary.hpp"
#include "mmwcs/dlista.hpp"
#include "mmwcs/grid.hpp"
#include "mmwcs/pursuit.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mmwcs {

using Json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DictionaryConfig {
  DictMethod method = DictMethod::spca;
  int atoms = 200;
  int iterations = 30;  // SPCA iterations, or kSVD iterations
  int sparsity = 0;     // 0: method default
  std::uint64_t seed = 7;
};

struct EstimatorConfig {
  OmpOptions omp = [] {
    OmpOptions o;
    o.normalize_columns = false;  // raw correlations: see README, "OMP column normalization"
    return o;
  }();
  bool ista_grid_search = true;   // scan step and threshold on the validation split
  IstaConfig ista{0.0, 0.01, 10};  // step 0: derived from the data
  int dlista_layers = 10;
  bool dlista_shared = false;
  double dlista_theta = 0.01;
  double dlista_step = 0.0;  // 0: derived from the data
};

struct EvalConfig {
  std::vector<std::string> estimators{"omp", "ista", "dlista"};
  int oversampling = 4;
  TapAggregation taps = TapAggregation::strongest;
  PowerAllocation rank2_power = PowerAllocation::equal;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int num_ues = 120;
  int dominant_taps = 5;  // taps kept per UE, strongest first
  int measurements = 5;   // beam pairs per sample
  std::string output_dir = "run";
  ScenarioConfig scenario;
  AngularGrid grid = desk_grid();
  DictionaryConfig dictionary;
  EstimatorConfig estimator;
  TrainConfig train;
  EvalConfig eval;

  void validate() const {
    require(num_ues >= 1, "num_ues must be >= 1");
    require(dominant_taps >= 1, "dominant_taps must be >= 1");
    require(measurements >= 1, "measurements must be >= 1");
    require(!output_dir.empty(), "output_dir must not be empty");
    scenario.validate();
    grid.validate();
    require(dictionary.atoms >= 1 && dictionary.iterations >= 1 && dictionary.sparsity >= 0,
            "dictionary: atoms and iterations must be >= 1");
    require(estimator.omp.max_iters >= 1 && estimator.omp.residual_tol >= 0, "omp: bad options");
    require(estimator.ista.step >= 0 && estimator.ista.threshold >= 0 && estimator.ista.iterations >= 1,
            "ista: bad options");
    require(estimator.dlista_layers >= 1 && estimator.dlista_theta >= 0 && estimator.dlista_step >= 0,
            "dlista: bad options");
    train.validate();
    require(eval.oversampling >= 1, "eval: oversampling must be >= 1");
    for (const auto& e : eval.estimators)
      require(e == "omp" || e == "ista" || e == "dlista" || e == "truth",
              "eval: unknown estimator '" + e + "'");
  }
};

namespace detail {

/// Reads fields out of one JSON object and complains about anything left over.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + k + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + path_ + key + "' has the wrong type");
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child(const char* key) const { return path_ + key + "."; }

 private:
  std::string where() const { return path_.empty() ? "" : "'" + path_ + "': "; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_axis(const Json& j, const std::string& path, GridAxis& a) {
  Fields f(j, path);
  f.get("count", a.count);
  f.get("lo", a.lo);
  f.get("hi", a.hi);
}

inline void read_range(const Json& j, const std::string& path, AngleRange& r) {
  Fields f(j, path);
  f.get("lo", r.lo);
  f.get("hi", r.hi);
}

inline void read_array(const Json& j, const std::string& path, ArrayGeometry& g) {
  Fields f(j, path);
  f.get("rows", g.rows);
  f.get("cols", g.cols);
  f.get("element_spacing", g.element_spacing);
  f.get("polarizations", g.polarizations);
  f.get("slant_deg", g.slant_deg);
  std::vector<double> o(g.orientation_deg.begin(), g.orientation_deg.end());
  f.get("orientation_deg", o);
  if (o.size() != 3) throw ConfigError("'" + path + "orientation_deg' needs three angles");
  std::copy(o.begin(), o.end(), g.orientation_deg.begin());
}

inline void read_grid(const Json& j, const std::string& path, AngularGrid& g) {
  Fields f(j, path);
  if (auto* s = f.sub("ue_azimuth")) read_axis(*s, f.child("ue_azimuth"), g.ue_azi);
  if (auto* s = f.sub("ue_zenith")) read_axis(*s, f.child("ue_zenith"), g.ue_elev);
  if (auto* s = f.sub("gnb_azimuth")) read_axis(*s, f.child("gnb_azimuth"), g.nb_azi);
  if (auto* s = f.sub("gnb_zenith")) read_axis(*s, f.child("gnb_zenith"), g.nb_elev);
}

inline void read_paths(const Json& j, const std::string& path, PathGeneratorConfig& p) {
  Fields f(j, path);
  f.get("environment_clusters", p.environment_clusters);
  f.get("environment_seed", p.environment_seed);
  f.get("cluster_count_min", p.cluster_count_min);
  f.get("cluster_count_max", p.cluster_count_max);
  f.get("cluster_offset_deg", p.cluster_offset_deg);
  f.get("angular_spread_deg", p.angular_spread_deg);
  f.get("tap_count_min", p.tap_count_min);
  f.get("tap_count_max", p.tap_count_max);
  f.get("paths_per_tap_min", p.paths_per_tap_min);
  f.get("paths_per_tap_max", p.paths_per_tap_max);
  f.get("pdp_decay_taps", p.pdp_decay_taps);
  f.get("distance_min_m", p.distance_min_m);
  f.get("distance_max_m", p.distance_max_m);
  f.get("pathloss_a", p.pathloss_a);
  f.get("pathloss_b", p.pathloss_b);
  f.get("pathloss_c", p.pathloss_c);
  f.get("on_grid", p.on_grid);
  if (auto* s = f.sub("ue_azimuth")) read_range(*s, f.child("ue_azimuth"), p.ue_azimuth);
  if (auto* s = f.sub("ue_zenith")) read_range(*s, f.child("ue_zenith"), p.ue_zenith);
  if (auto* s = f.sub("gnb_azimuth")) read_range(*s, f.child("gnb_azimuth"), p.gnb_azimuth);
  if (auto* s = f.sub("gnb_zenith")) read_range(*s, f.child("gnb_zenith"), p.gnb_zenith);
}

inline void read_scenario(const Json& j, const std::string& path, ScenarioConfig& s) {
  Fields f(j, path);
  f.get("carrier_freq_hz", s.carrier_freq_hz);
  f.get("subcarrier_spacing_hz", s.subcarrier_spacing_hz);
  f.get("num_tones", s.num_tones);
  f.get("gnb_tx_power_dbm", s.gnb_tx_power_dbm);
  f.get("tx_power_bandwidth_hz", s.tx_power_bandwidth_hz);
  f.get("gnb_antenna_gain_dbi", s.gnb_antenna_gain_dbi);
  f.get("ue_noise_figure_db", s.ue_noise_figure_db);
  f.get("noise_var_override", s.noise_var_override);
  if (auto* a = f.sub("ue_array")) read_array(*a, f.child("ue_array"), s.ue_geom);
  if (auto* a = f.sub("gnb_array")) read_array(*a, f.child("gnb_array"), s.gnb_geom);
  if (auto* p = f.sub("paths")) read_paths(*p, f.child("paths"), s.paths);
}

template <class E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, e] : options)
    if (v == name) return e;
  throw ConfigError("config key '" + key + "' has unknown value '" + v + "'");
}

inline void read_dictionary(const Json& j, const std::string& path, DictionaryConfig& d) {
  Fields f(j, path);
  std::string method = to_string(d.method);
  f.get("method", method);
  d.method = parse_enum<DictMethod>(path + "method", method,
                                    {{"spca", DictMethod::spca}, {"ksvd", DictMethod::ksvd},
                                     {"random", DictMethod::random}});
  f.get("atoms", d.atoms);
  f.get("iterations", d.iterations);
  f.get("sparsity", d.sparsity);
  f.get("seed", d.seed);
}

inline void read_estimator(const Json& j, const std::string& path, EstimatorConfig& e) {
  Fields f(j, path);
  if (auto* o = f.sub("omp")) {
    Fields g(*o, f.child("omp"));
    g.get("max_iters", e.omp.max_iters);
    g.get("residual_tol", e.omp.residual_tol);
    g.get("normalize_columns", e.omp.normalize_columns);
    std::string mode = e.omp.coefficients == OmpCoefficients::adjoint ? "adjoint" : "least_squares";
    g.get("coefficients", mode);
    e.omp.coefficients = parse_enum<OmpCoefficients>(
        f.child("omp") + "coefficients", mode,
        {{"least_squares", OmpCoefficients::least_squares}, {"adjoint", OmpCoefficients::adjoint}});
  }
  if (auto* o = f.sub("ista")) {
    Fields g(*o, f.child("ista"));
    g.get("step", e.ista.step);
    g.get("threshold", e.ista.threshold);
    g.get("iterations", e.ista.iterations);
    g.get("grid_search", e.ista_grid_search);
  }
  if (auto* o = f.sub("dlista")) {
    Fields g(*o, f.child("dlista"));
    g.get("layers", e.dlista_layers);
    g.get("shared", e.dlista_shared);
    g.get("theta", e.dlista_theta);
    g.get("step", e.dlista_step);
  }
}

inline void read_train(const Json& j, const std::string& path, TrainConfig& t) {
  Fields f(j, path);
  f.get("epochs", t.epochs);
  f.get("batch_size", t.batch_size);
  f.get("patience", t.patience);
  f.get("lr_scalar", t.adam.lr_scalar);
  f.get("lr_psi", t.adam.lr_psi);
  f.get("beta1", t.adam.beta1);
  f.get("beta2", t.adam.beta2);
  f.get("eps", t.adam.eps);
  f.get("weight_decay_psi", t.adam.weight_decay_psi);
  f.get("split_train", t.split_train);
  f.get("split_val", t.split_val);
  f.get("split_test", t.split_test);
  f.get("freeze_psi", t.freeze_psi);
}

inline void read_eval(const Json& j, const std::string& path, EvalConfig& e) {
  Fields f(j, path);
  f.get("estimators", e.estimators);
  f.get("oversampling", e.oversampling);
  std::string taps = e.taps == TapAggregation::average ? "average" : "strongest";
  f.get("tap_aggregation", taps);
  e.taps = parse_enum<TapAggregation>(path + "tap_aggregation", taps,
                                      {{"strongest", TapAggregation::strongest},
                                       {"average", TapAggregation::average}});
  std::string power = e.rank2_power == PowerAllocation::water_filling ? "water_filling" : "equal";
  f.get("rank2_power", power);
  e.rank2_power = parse_enum<PowerAllocation>(path + "rank2_power", power,
                                              {{"equal", PowerAllocation::equal},
                                               {"water_filling", PowerAllocation::water_filling}});
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig c;
  {
    detail::Fields f(j, "");
    f.get("seed", c.seed);
    f.get("num_ues", c.num_ues);
    f.get("dominant_taps", c.dominant_taps);
    f.get("measurements", c.measurements);
    f.get("output_dir", c.output_dir);
    if (auto* s = f.sub("scenario")) detail::read_scenario(*s, "scenario.", c.scenario);
    if (auto* s = f.sub("grid")) detail::read_grid(*s, "grid.", c.grid);
    if (auto* s = f.sub("dictionary")) detail::read_dictionary(*s, "dictionary.", c.dictionary);
    if (auto* s = f.sub("estimator")) detail::read_estimator(*s, "estimator.", c.estimator);
    if (auto* s = f.sub("train")) detail::read_train(*s, "train.", c.train);
    if (auto* s = f.sub("eval")) detail::read_eval(*s, "eval.", c.eval);
  }
  // The scenario seed and the training shuffle follow the experiment seed.
  c.scenario.rng_seed = c.seed;
  c.train.rng_seed = c.seed;
  c.validate();
  return c;
}

/// Applies "a.b.c=value" overrides to a config document before parsing. The
/// value is parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
    if (!node->is_object()) *node = Json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline Json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  Json j = Json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  return j;
}

/// Canonical text of a config: every field, keys sorted. Hashing this instead
/// of the input file makes equivalent configs hash alike.
inline Json config_to_json(const ExperimentConfig& c) {
  auto axis = [](const GridAxis& a) { return Json{{"count", a.count}, {"lo", a.lo}, {"hi", a.hi}}; };
  auto range = [](const AngleRange& r) { return Json{{"lo", r.lo}, {"hi", r.hi}}; };
  auto array = [](const ArrayGeometry& g) {
    return Json{{"rows", g.rows},
                {"cols", g.cols},
                {"element_spacing", g.element_spacing},
                {"polarizations", g.polarizations},
                {"slant_deg", g.slant_deg},
                {"orientation_deg", std::vector<double>(g.orientation_deg.begin(), g.orientation_deg.end())}};
  };
  const auto& s = c.scenario;
  const auto& p = s.paths;
  Json paths{{"environment_clusters", p.environment_clusters},
             {"environment_seed", p.environment_seed},
             {"cluster_count_min", p.cluster_count_min},
             {"cluster_count_max", p.cluster_count_max},
             {"cluster_offset_deg", p.cluster_offset_deg},
             {"angular_spread_deg", p.angular_spread_deg},
             {"tap_count_min", p.tap_count_min},
             {"tap_count_max", p.tap_count_max},
             {"paths_per_tap_min", p.paths_per_tap_min},
             {"paths_per_tap_max", p.paths_per_tap_max},
             {"pdp_decay_taps", p.pdp_decay_taps},
             {"distance_min_m", p.distance_min_m},
             {"distance_max_m", p.distance_max_m},
             {"pathloss_a", p.pathloss_a},
             {"pathloss_b", p.pathloss_b},
             {"pathloss_c", p.pathloss_c},
             {"on_grid", p.on_grid},
             {"ue_azimuth", range(p.ue_azimuth)},
             {"ue_zenith", range(p.ue_zenith)},
             {"gnb_azimuth", range(p.gnb_azimuth)},
             {"gnb_zenith", range(p.gnb_zenith)}};
  Json scenario{{"carrier_freq_hz", s.carrier_freq_hz},
                {"subcarrier_spacing_hz", s.subcarrier_spacing_hz},
                {"num_tones", s.num_tones},
                {"gnb_tx_power_dbm", s.gnb_tx_power_dbm},
                {"tx_power_bandwidth_hz", s.tx_power_bandwidth_hz},
                {"gnb_antenna_gain_dbi", s.gnb_antenna_gain_dbi},
                {"ue_noise_figure_db", s.ue_noise_figure_db},
                {"noise_var_override", s.noise_var_override},
                {"ue_array", array(s.ue_geom)},
                {"gnb_array", array(s.gnb_geom)},
                {"paths", paths}};
  const auto& e = c.estimator;
  Json estimator{
      {"omp",
       {{"max_iters", e.omp.max_iters},
        {"residual_tol", e.omp.residual_tol},
        {"normalize_columns", e.omp.normalize_columns},
        {"coefficients", e.omp.coefficients == OmpCoefficients::adjoint ? "adjoint" : "least_squares"}}},
      {"ista",
       {{"step", e.ista.step},
        {"threshold", e.ista.threshold},
        {"iterations", e.ista.iterations},
        {"grid_search", e.ista_grid_search}}},
      {"dlista",
       {{"layers", e.dlista_layers}, {"shared", e.dlista_shared}, {"theta", e.dlista_theta}, {"step", e.dlista_step}}}};
  const auto& t = c.train;
  Json train{{"epochs", t.epochs},
             {"batch_size", t.batch_size},
             {"patience", t.patience},
             {"lr_scalar", t.adam.lr_scalar},
             {"lr_psi", t.adam.lr_psi},
             {"beta1", t.adam.beta1},
             {"beta2", t.adam.beta2},
             {"eps", t.adam.eps},
             {"weight_decay_psi", t.adam.weight_decay_psi},
             {"split_train", t.split_train},
             {"split_val", t.split_val},
             {"split_test", t.split_test},
             {"freeze_psi", t.freeze_psi}};
  return Json{{"seed", c.seed},
              {"num_ues", c.num_ues},
              {"dominant_taps", c.dominant_taps},
              {"measurements", c.measurements},
              {"output_dir", c.output_dir},
              {"scenario", scenario},
              {"grid",
               {{"ue_azimuth", axis(c.grid.ue_azi)},
                {"ue_zenith", axis(c.grid.ue_elev)},
                {"gnb_azimuth", axis(c.grid.nb_azi)},
                {"gnb_zenith", axis(c.grid.nb_elev)}}},
              {"dictionary",
               {{"method", to_string(c.dictionary.method)},
                {"atoms", c.dictionary.atoms},
                {"iterations", c.dictionary.iterations},
                {"sparsity", c.dictionary.sparsity},
                {"seed", c.dictionary.seed}}},
              {"estimator", estimator},
              {"train", train},
              {"eval",
               {{"estimators", c.eval.estimators},
                {"oversampling", c.eval.oversampling},
                {"tap_aggregation", c.eval.taps == TapAggregation::average ? "average" : "strongest"},
                {"rank2_power", c.eval.rank2_power == PowerAllocation::water_filling ? "water_filling" : "equal"}}}};
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the canonical config, excluding output_dir so the same experiment
/// written to two places hashes alike.
inline std::string config_hash(const ExperimentConfig& c) {
  Json j = config_to_json(c);
  j.erase("output_dir");
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a64(j.dump());
  return os.str();
}

}  // namespace mmwcs
