// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment pipeline behind the command-line tool: dataset generation,
// dictionary learning, DLISTA training, evaluation and report merging. Every
// file written here carries the config hash and seed.

#include "mmwcs/beam_eval.hpp"
#include "mmwcs/config.hpp"
#include "mmwcs/dictionary.hpp"
#include "mmwcs/dlista.hpp"
#include "mmwcs/ksvd.hpp"
#include "mmwcs/recovery.hpp"
#include "mmwcs/tensor_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mmwcs {

namespace fs = std::filesystem;

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;

  static Provenance of(const ExperimentConfig& c) { return {mmwcs::config_hash(c), c.seed}; }

  std::string meta(Json extra = Json::object()) const {
    extra["config_hash"] = config_hash;
    extra["seed"] = seed;
    return extra.dump();
  }
};

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  std::vector<Sample> samples;  // raw (unnormalized) y and h
  std::vector<std::int64_t> ue;
  std::vector<std::int64_t> tap;
  std::vector<std::vector<BeamPair>> pairs;
  double noise_var = 0.0;
  Provenance provenance;

  std::size_t size() const { return samples.size(); }
};

struct Codebooks {
  Codebook ue;
  Codebook gnb;
  Codebook ue_os;
  Codebook gnb_os;

  static Codebooks of(const ExperimentConfig& c) {
    return {dft_codebook(c.scenario.ue_geom, 1, Side::ue), dft_codebook(c.scenario.gnb_geom, 1, Side::gnb),
            dft_codebook(c.scenario.ue_geom, c.eval.oversampling, Side::ue),
            dft_codebook(c.scenario.gnb_geom, c.eval.oversampling, Side::gnb)};
  }
};

/// Per-UE generator stream, independent of how many UEs come before it.
inline Rng ue_rng(std::uint64_t seed, std::int64_t ue) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(ue), std::uint32_t(ue >> 32)};
  return Rng(seq);
}

/// Channels and measurements for one UE: its strongest taps, each sounded
/// with the top-M beam pairs by RSRP.
inline void generate_ue(const ExperimentConfig& c, const Environment& env, const Codebooks& cb,
                        std::int64_t u, Dataset& out) {
  Rng rng = ue_rng(c.seed, u);
  const auto paths = synth_paths(c.scenario, env, rng);
  const auto taps = build_channel_taps(paths, c.scenario.ue_geom, c.scenario.gnb_geom);
  const double nv = c.scenario.noise_variance();
  for (std::size_t pos : dominant_taps(taps, c.dominant_taps)) {
    const ChannelTap& h = taps[pos];
    if (h.matrix.squaredNorm() <= 0.0) continue;
    auto pairs = rsrp_rank(h, cb.ue, cb.gnb, c.measurements, nv, rng);
    SensingMatrix phi = build_sensing_matrix(pairs, cb.ue, cb.gnb);
    CVec y = measure(h, phi, nv, rng);
    out.samples.push_back({std::move(y), std::move(phi), vec(h.matrix)});
    out.ue.push_back(u);
    out.tap.push_back(h.tap);
    out.pairs.push_back(std::move(pairs));
  }
}

inline Dataset generate_dataset(const ExperimentConfig& c) {
  c.validate();
  require(std::size_t(c.measurements) <= std::size_t(c.scenario.ue_geom.element_count()) *
                                            std::size_t(c.scenario.gnb_geom.element_count()),
          "measurements exceed the number of beam pairs");
  const Environment env = make_environment(c.scenario);
  const Codebooks cb = Codebooks::of(c);
  Dataset d;
  d.noise_var = c.scenario.noise_variance();
  d.provenance = Provenance::of(c);
  for (std::int64_t u = 0; u < c.num_ues; ++u) generate_ue(c, env, cb, u, d);
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path, const ExperimentConfig& c) {
  require(!d.samples.empty(), "save_dataset: empty dataset");
  const Index n = d.samples.front().h.size();
  const Index m = d.samples.front().y.size();
  const std::size_t count = d.size();
  CMat h(n, Index(count)), y(m, Index(count));
  std::vector<std::int64_t> beams;
  RMat rsrp(m, Index(count));
  for (std::size_t i = 0; i < count; ++i) {
    h.col(Index(i)) = d.samples[i].h;
    y.col(Index(i)) = d.samples[i].y;
    for (std::size_t k = 0; k < d.pairs[i].size(); ++k) {
      beams.push_back(d.pairs[i][k].ue_beam);
      beams.push_back(d.pairs[i][k].gnb_beam);
      rsrp(Index(k), Index(i)) = d.pairs[i][k].rsrp_db;
    }
  }
  const std::string meta = d.provenance.meta({{"noise_var", d.noise_var}});
  Tensor bp = to_tensor("beam_pairs", beams, meta);
  bp.shape = {2, std::uint64_t(m), std::uint64_t(count)};
  // The embedded config omits output_dir so a run is byte-identical wherever it lands.
  Json embedded = config_to_json(c);
  embedded.erase("output_dir");
  const std::string text = embedded.dump(2);
  write_tensors(path, {to_tensor("h", h, meta), to_tensor("y", y, meta), bp, to_tensor("rsrp_db", rsrp, meta),
                       to_tensor("ue", d.ue, meta), to_tensor("tap", d.tap, meta),
                       to_tensor("config", std::vector<std::uint8_t>(text.begin(), text.end()), meta)});
}

inline Dataset load_dataset(const std::string& path, const ExperimentConfig& c) {
  const auto ts = read_tensors(path);
  const CMat h = as_cmat(find_tensor(ts, "h"));
  const CMat y = as_cmat(find_tensor(ts, "y"));
  const Tensor& bp = find_tensor(ts, "beam_pairs");
  const RMat rsrp = as_rmat(find_tensor(ts, "rsrp_db"));
  Dataset d;
  d.ue = as_i64(find_tensor(ts, "ue"));
  d.tap = as_i64(find_tensor(ts, "tap"));
  const Index count = h.cols();
  const Index m = y.rows();
  if (bp.dtype != DType::i64 || bp.shape.size() != 3 || bp.shape[0] != 2 || Index(bp.shape[1]) != m ||
      Index(bp.shape[2]) != count || y.cols() != count || Index(d.ue.size()) != count ||
      Index(d.tap.size()) != count || rsrp.rows() != m || rsrp.cols() != count)
    throw TensorFormatError("dataset tensors have inconsistent shapes");
  const Codebooks cb = Codebooks::of(c);
  require_dims(h.rows() == cb.ue.dim() * cb.gnb.dim(), "dataset channel size does not match the configured arrays");
  const Json meta = Json::parse(find_tensor(ts, "h").meta);
  d.noise_var = meta.at("noise_var").get<double>();
  d.provenance = {meta.at("config_hash").get<std::string>(), meta.at("seed").get<std::uint64_t>()};
  const auto* beams = reinterpret_cast<const std::int64_t*>(bp.payload.data());
  for (Index i = 0; i < count; ++i) {
    std::vector<BeamPair> pairs;
    for (Index k = 0; k < m; ++k) {
      const auto ub = beams[2 * (i * m + k)];
      const auto gb = beams[2 * (i * m + k) + 1];
      if (ub < 0 || std::size_t(ub) >= cb.ue.size() || gb < 0 || std::size_t(gb) >= cb.gnb.size())
        throw TensorFormatError("dataset beam index out of range for the configured codebooks");
      pairs.push_back({int(ub), int(gb), rsrp(k, i)});
    }
    d.samples.push_back({y.col(i), build_sensing_matrix(pairs, cb.ue, cb.gnb), h.col(i)});
    d.pairs.push_back(std::move(pairs));
  }
  return d;
}

/// Train/validation/test partition by UE, so no UE contributes to two splits.
inline Split split_dataset(const Dataset& d, const TrainConfig& cfg) {
  std::int64_t n_ue = 0;
  for (auto u : d.ue) n_ue = std::max(n_ue, u + 1);
  const Split by_ue = split_indices(std::size_t(n_ue), cfg);
  std::vector<int> part(std::size_t(n_ue), 0);
  for (auto u : by_ue.val) part[u] = 1;
  for (auto u : by_ue.test) part[u] = 2;
  Split s;
  for (std::size_t i = 0; i < d.size(); ++i) {
    switch (part[std::size_t(d.ue[i])]) {
      case 0: s.train.push_back(i); break;
      case 1: s.val.push_back(i); break;
      default: s.test.push_back(i); break;
    }
  }
  return s;
}

inline std::vector<Sample> normalized_subset(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  for (std::size_t i : idx) {
    Sample s = d.samples[i];
    normalize_sample(s);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dictionary learning

/// Learns a dictionary from the unit-norm training channels.
inline LearnedDictionary learn_dictionary(const DictionaryConfig& dc, const std::vector<CVec>& channels) {
  require(!channels.empty(), "learn_dictionary: no training channels");
  const Index n = channels.front().size();
  std::vector<CVec> used;
  for (const auto& h : channels)
    if (h.norm() > 0.0) used.push_back(h.normalized());
  require(!used.empty(), "learn_dictionary: all training channels are zero");
  CMat hm(n, Index(used.size()));
  for (std::size_t i = 0; i < used.size(); ++i) hm.col(Index(i)) = used[i];

  Rng rng(dc.seed);
  LearnedDictionary out;
  switch (dc.method) {
    case DictMethod::spca: {
      const Index r0 = std::min(hm.rows(), hm.cols());
      require(dc.atoms <= r0, "spca: atoms cannot exceed min(channel size, training samples) = " +
                                  std::to_string(r0));
      const int s = dc.sparsity > 0 ? dc.sparsity : spca_default_sparsity(r0);
      out = spca_iht(hm, dc.iterations, s, rng, dc.atoms);
      break;
    }
    case DictMethod::ksvd: {
      KsvdOptions o;
      o.atoms = dc.atoms;
      o.sparsity = dc.sparsity > 0 ? dc.sparsity : 1;
      o.iterations = dc.iterations;
      out = ksvd(hm, o, rng);
      break;
    }
    case DictMethod::random:
      out = random_dictionary(n, dc.atoms, rng);
      break;
  }
  out.seed = dc.seed;
  return out;
}

inline void save_dictionary(const LearnedDictionary& d, const std::string& path, const Provenance& p) {
  const std::string meta = p.meta({{"method", to_string(d.method)},
                                   {"atoms", d.cols()},
                                   {"sparsity", d.sparsity},
                                   {"iterations", d.iterations},
                                   {"dict_seed", d.seed}});
  write_tensors(path, {to_tensor("dictionary", d.d, meta)});
}

inline LearnedDictionary load_dictionary(const std::string& path) {
  const auto ts = read_tensors(path);
  const Tensor& t = find_tensor(ts, "dictionary");
  const Json meta = Json::parse(t.meta);
  LearnedDictionary d;
  d.d = as_cmat(t);
  d.method = dict_method_from_string(meta.at("method").get<std::string>());
  d.sparsity = meta.at("sparsity").get<int>();
  d.iterations = meta.at("iterations").get<int>();
  d.seed = meta.at("dict_seed").get<std::uint64_t>();
  return d;
}

// ---------------------------------------------------------------------------
// DLISTA checkpoints

inline void save_checkpoint(const DlistaParams& p, const std::string& path, const Provenance& prov,
                            DictMethod init, const TrainResult* res = nullptr) {
  Json extra{{"layers", p.layers()}, {"atoms", p.atoms()}, {"shared", p.shared}, {"init", to_string(init)}};
  if (res) {
    extra["best_epoch"] = res->best_epoch;
    extra["best_val_nmse_db"] = res->best_val_nmse_db;
  }
  const std::string meta = prov.meta(extra);
  std::vector<Tensor> ts{to_tensor("gamma", p.gamma, meta), to_tensor("theta_raw", p.theta_raw, meta)};
  for (std::size_t k = 0; k < p.psi.size(); ++k) ts.push_back(to_tensor("psi_" + std::to_string(k), p.psi[k], meta));
  ts.push_back(to_tensor("psi_final", p.psi_final, meta));
  write_tensors(path, ts);
}

inline DlistaParams load_checkpoint(const std::string& path) {
  const auto ts = read_tensors(path);
  const Json meta = Json::parse(find_tensor(ts, "gamma").meta);
  DlistaParams p;
  p.gamma = as_f64(find_tensor(ts, "gamma"));
  p.theta_raw = as_f64(find_tensor(ts, "theta_raw"));
  p.shared = meta.at("shared").get<bool>();
  const std::size_t count = p.shared ? 1 : p.gamma.size();
  for (std::size_t k = 0; k < count; ++k) p.psi.push_back(as_cmat(find_tensor(ts, "psi_" + std::to_string(k))));
  p.psi_final = as_cmat(find_tensor(ts, "psi_final"));
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// CSV output

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header, Provenance prov)
      : out_(path, std::ios::binary | std::ios::trunc), prov_(std::move(prov)) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& h : header) out_ << h << ',';
    out_ << "config_hash,seed\n";
  }

  CsvWriter& cell(const std::string& s) {
    out_ << s << ',';
    return *this;
  }
  CsvWriter& cell(std::int64_t v) {
    out_ << v << ',';
    return *this;
  }
  CsvWriter& cell(double v) {
    out_ << format(v) << ',';
    return *this;
  }
  void end_row() { out_ << prov_.config_hash << ',' << prov_.seed << '\n'; }

  static std::string format(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
  }

 private:
  std::ofstream out_;
  Provenance prov_;
};

/// Minimal reader for the CSV files written above (no quoting).
inline std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    return out;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::runtime_error("'" + path + "': ragged row");
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_cdf(const std::string& path, const std::map<std::string, std::vector<double>>& series,
                      const Provenance& prov) {
  CsvWriter w(path, {"method", "value", "quantile"}, prov);
  for (const auto& [method, values] : series) {
    if (values.empty()) continue;
    const CdfSeries c = build_cdf(values);
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      w.cell(method).cell(c.values[i]).cell(c.quantiles[i]);
      w.end_row();
    }
  }
}

// ---------------------------------------------------------------------------
// Estimators and beam selection

/// ISTA step and threshold: fixed from the config, or scanned on `tune`.
template <class Dict>
IstaConfig resolve_ista(const EstimatorConfig& ec, std::span<const Sample> tune, const Dict& dict) {
  IstaConfig base = ec.ista;
  if (!ec.ista_grid_search && base.step > 0.0) return base;
  require(!tune.empty(), "ista: no samples to derive the step size from");
  double lsum = 0.0;
  for (const auto& s : tune) lsum += lipschitz_estimate(make_operator(s.phi, dict));
  const double step0 = double(tune.size()) / lsum;
  if (!ec.ista_grid_search) {
    base.step = step0;
    return base;
  }
  const std::vector<double> steps{0.25 * step0, 0.5 * step0, step0, 2.0 * step0};
  const std::vector<double> thetas{0.001, 0.003, 0.01, 0.03, 0.1};
  return grid_search_ista(tune, dict, steps, thetas, base.iterations).best;
}

/// Beams for one UE from its strongest-tap record. `estimates` maps estimator
/// name to the estimated channel of that tap; `omp_angles` is the strongest
/// OMP path, when OMP ran.
inline std::map<std::string, double> ue_spectral_efficiency(
    const ChannelTap& h, const Codebooks& cb, double noise_var, const EvalConfig& ec,
    const std::optional<Quadruple>& omp_angles, const std::map<std::string, CVec>& estimates,
    const ArrayGeometry& ue_geom, const ArrayGeometry& gnb_geom) {
  std::map<std::string, double> se;
  se["rank2_digital"] = rank2_digital_bound(h, noise_var, 1.0, ec.rank2_power);
  se["codebook"] = spectral_efficiency(h, exhaustive_beam_search(h, cb.ue, cb.gnb, BeamMethod::codebook), noise_var);
  se["oversampled_codebook"] =
      spectral_efficiency(h, exhaustive_beam_search(h, cb.ue_os, cb.gnb_os, BeamMethod::oversampled), noise_var);
  if (omp_angles) se["custom_angles_omp"] = spectral_efficiency(h, custom_beam(*omp_angles, gnb_geom, ue_geom), noise_var);
  for (const auto& [name, est] : estimates) {
    const ChannelTap eh{h.tap, unvec(est, h.matrix.rows(), h.matrix.cols())};
    se["exhaustive_from_" + name] = spectral_efficiency(h, exhaustive_beam_search(eh, cb.ue_os, cb.gnb_os), noise_var);
  }
  return se;
}

// ---------------------------------------------------------------------------
// Commands

struct CommandResult {
  std::vector<std::string> files;
  std::string summary;
};

inline std::string prepare_output_dir(const ExperimentConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec || !fs::is_directory(c.output_dir))
    throw std::runtime_error("cannot create output directory '" + c.output_dir + "'");
  const std::string probe = (fs::path(c.output_dir) / ".write_test").string();
  {
    std::ofstream t(probe);
    if (!t) throw std::runtime_error("output directory '" + c.output_dir + "' is not writable");
  }
  fs::remove(probe, ec);
  return c.output_dir;
}

inline std::string out_path(const ExperimentConfig& c, const char* name) {
  return (fs::path(c.output_dir) / name).string();
}

inline CommandResult cmd_generate(const ExperimentConfig& c) {
  prepare_output_dir(c);
  const Dataset d = generate_dataset(c);
  if (d.samples.empty()) throw std::runtime_error("generate: no non-zero channel taps were produced");
  const std::string path = out_path(c, "dataset.mmwt");
  save_dataset(d, path, c);
  std::ostringstream os;
  os << "wrote " << d.size() << " samples from " << c.num_ues << " UEs to " << path;
  return {{path}, os.str()};
}

inline CommandResult cmd_learn_dict(const ExperimentConfig& c, const std::string& dataset_path) {
  prepare_output_dir(c);
  const Dataset d = load_dataset(dataset_path, c);
  const Split s = split_dataset(d, c.train);
  std::vector<CVec> channels;
  for (std::size_t i : s.train) channels.push_back(d.samples[i].h);
  const LearnedDictionary dict = learn_dictionary(c.dictionary, channels);
  const std::string path = out_path(c, "dictionary.mmwt");
  save_dictionary(dict, path, Provenance::of(c));
  std::ostringstream os;
  os << "learned " << to_string(dict.method) << " dictionary " << dict.rows() << "x" << dict.cols() << " from "
     << channels.size() << " training channels";
  return {{path}, os.str()};
}

inline CommandResult cmd_train(const ExperimentConfig& c, const std::string& dataset_path,
                               const std::string& dict_path) {
  prepare_output_dir(c);
  const Dataset d = load_dataset(dataset_path, c);
  const LearnedDictionary dict = load_dictionary(dict_path);
  require_dims(dict.rows() == d.samples.front().h.size(), "dictionary size does not match the dataset channels");
  const Split s = split_dataset(d, c.train);
  if (s.train.size() < std::size_t(c.train.batch_size))
    throw ConfigError("training split has " + std::to_string(s.train.size()) +
                      " samples, fewer than the batch size " + std::to_string(c.train.batch_size));
  if (s.val.empty()) throw ConfigError("validation split is empty; use more UEs or a larger split_val");
  const auto train = normalized_subset(d, s.train);
  const auto val = normalized_subset(d, s.val);
  const auto& ec = c.estimator;
  const double step = ec.dlista_step > 0.0 ? ec.dlista_step : default_step(train, dict.d);
  const DlistaParams init =
      DlistaParams::from_dictionary(dict.d, ec.dlista_layers, step, ec.dlista_theta, ec.dlista_shared);
  const TrainResult res = train_dlista(train, val, init, c.train);

  const Provenance prov = Provenance::of(c);
  const std::string ckpt = out_path(c, "checkpoint.mmwt");
  save_checkpoint(res.best, ckpt, prov, dict.method, &res);
  const std::string metrics = out_path(c, "train_metrics.csv");
  {
    CsvWriter w(metrics, {"epoch", "train_nmse_db", "val_nmse_db", "lr_scalar", "lr_psi"}, prov);
    for (const auto& e : res.history) {
      w.cell(std::int64_t(e.epoch)).cell(e.train_nmse_db).cell(e.val_nmse_db).cell(e.lr_scalar).cell(e.lr_psi);
      w.end_row();
    }
  }
  std::ostringstream os;
  os << "trained " << ec.dlista_layers << "-layer DLISTA: val NMSE " << CsvWriter::format(res.initial_val_nmse_db)
     << " dB -> " << CsvWriter::format(res.best_val_nmse_db) << " dB (best epoch " << res.best_epoch << ")";
  return {{ckpt, metrics}, os.str()};
}

inline CommandResult cmd_eval(const ExperimentConfig& c, const std::string& dataset_path,
                              const std::string& dict_path = {}, const std::string& checkpoint_path = {}) {
  const auto& want = c.eval.estimators;
  auto wants = [&](const char* e) { return std::find(want.begin(), want.end(), e) != want.end(); };
  if (wants("dlista") && checkpoint_path.empty())
    throw ConfigError("eval: the dlista estimator needs a checkpoint (--checkpoint)");
  prepare_output_dir(c);
  const Dataset d = load_dataset(dataset_path, c);
  const Split s = split_dataset(d, c.train);
  if (s.test.empty()) throw ConfigError("test split is empty; use more UEs or a larger split_test");
  const Provenance prov = Provenance::of(c);
  const Codebooks cb = Codebooks::of(c);
  const GridDictionary grid(c.grid, c.scenario.ue_geom, c.scenario.gnb_geom);

  std::optional<LearnedDictionary> dict;
  if (!dict_path.empty()) dict = load_dictionary(dict_path);
  std::optional<DlistaParams> net;
  if (wants("dlista")) net = load_checkpoint(checkpoint_path);

  // ISTA runs on the learned dictionary when one is given, else on the grid.
  const auto tune = normalized_subset(d, s.val.empty() ? s.train : s.val);
  std::optional<IstaConfig> ista_cfg;
  if (wants("ista")) ista_cfg = dict ? resolve_ista(c.estimator, tune, *dict) : resolve_ista(c.estimator, tune, grid);

  // Strongest test record of each UE, for the beam-selection comparison.
  std::map<std::int64_t, std::size_t> strongest;
  for (std::size_t i : s.test) {
    auto it = strongest.find(d.ue[i]);
    if (it == strongest.end() || d.samples[i].h.squaredNorm() > d.samples[it->second].h.squaredNorm())
      strongest[d.ue[i]] = i;
  }

  std::map<std::string, std::vector<double>> nmse_series, se_series;
  const std::string nmse_path = out_path(c, "nmse.csv");
  const std::string se_path = out_path(c, "se.csv");
  {
    CsvWriter nw(nmse_path, {"sample", "ue", "tap", "method", "nmse_db"}, prov);
    std::map<std::size_t, std::map<std::string, CVec>> kept;
    std::map<std::size_t, std::optional<Quadruple>> kept_angles;
    for (std::size_t i : s.test) {
      const Sample& smp = d.samples[i];
      const MeasurementSet ms{smp.y, smp.phi, d.noise_var, int(d.tap[i])};
      std::map<std::string, CVec> est;
      std::optional<Quadruple> angles;
      for (const auto& name : want) {
        if (name == "omp") {
          const OmpResult r = omp(ms, grid, c.estimator.omp);
          est["omp"] = vec(r.estimated_channel.matrix);
          if (!r.quadruples.empty()) angles = r.quadruples[r.strongest()];
        } else if (name == "ista") {
          Sample ns = smp;
          const double scale = normalize_sample(ns);
          est["ista"] = scale * (dict ? ista_estimate(ns, *dict, *ista_cfg) : ista_estimate(ns, grid, *ista_cfg));
        } else if (name == "dlista") {
          est["dlista"] = dlista_estimate(smp.y, smp.phi, *net);
        } else if (name == "truth") {
          est["truth"] = smp.h;
        }
      }
      for (const auto& [name, h_hat] : est) {
        const double v = nmse_db_floored(smp.h, h_hat);
        nw.cell(std::int64_t(i)).cell(d.ue[i]).cell(d.tap[i]).cell(name).cell(v);
        nw.end_row();
        nmse_series[name].push_back(v);
      }
      if (strongest.at(d.ue[i]) == i) {
        kept[i] = std::move(est);
        kept_angles[i] = angles;
      }
    }

    CsvWriter sw(se_path, {"ue", "tap", "method", "se_bps_hz"}, prov);
    for (const auto& [u, i] : strongest) {
      const ChannelTap h{int(d.tap[i]), unvec(d.samples[i].h, c.scenario.ue_geom.element_count(),
                                              c.scenario.gnb_geom.element_count())};
      const auto se = ue_spectral_efficiency(h, cb, d.noise_var, c.eval, kept_angles[i], kept[i],
                                             c.scenario.ue_geom, c.scenario.gnb_geom);
      for (const auto& [method, v] : se) {
        sw.cell(u).cell(d.tap[i]).cell(method).cell(v);
        sw.end_row();
        se_series[method].push_back(v);
      }
    }
  }
  const std::string nmse_cdf = out_path(c, "nmse_cdf.csv");
  const std::string se_cdf = out_path(c, "se_cdf.csv");
  write_cdf(nmse_cdf, nmse_series, prov);
  write_cdf(se_cdf, se_series, prov);

  std::ostringstream os;
  os << "evaluated " << s.test.size() << " test samples from " << strongest.size() << " UEs";
  if (ista_cfg)
    os << "; ista step " << CsvWriter::format(ista_cfg->step) << " threshold "
       << CsvWriter::format(ista_cfg->threshold);
  return {{nmse_path, se_path, nmse_cdf, se_cdf}, os.str()};
}

/// Merges the CDF files of one or more runs into a table of medians and 80th
/// percentiles, keyed by run and method.
inline CommandResult cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_file,
                                std::ostream& console) {
  require(!run_dirs.empty(), "report: need at least one run directory");
  struct Row {
    std::string run, metric, method, hash, seed;
    std::size_t n;
    double median, p80;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    for (const char* metric : {"nmse", "se"}) {
      const std::string path = (fs::path(dir) / (std::string(metric) + "_cdf.csv")).string();
      if (!fs::exists(path)) throw std::runtime_error("report: missing " + path);
      std::map<std::string, std::vector<std::pair<double, double>>> by_method;
      std::map<std::string, std::pair<std::string, std::string>> prov;
      for (const auto& r : read_csv(path)) {
        by_method[r.at("method")].push_back({std::stod(r.at("value")), std::stod(r.at("quantile"))});
        prov[r.at("method")] = {r.at("config_hash"), r.at("seed")};
      }
      for (const auto& [method, pts] : by_method) {
        CdfSeries cdf;
        for (const auto& [v, q] : pts) {
          cdf.values.push_back(v);
          cdf.quantiles.push_back(q);
        }
        rows.push_back({dir, metric, method, prov[method].first, prov[method].second, pts.size(), cdf.median(),
                        cdf.quantile(0.8)});
      }
    }
  }
  std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + out_file + "' for writing");
  out << "run,metric,method,n,median,p80,config_hash,seed\n";
  for (const auto& r : rows)
    out << r.run << ',' << r.metric << ',' << r.method << ',' << r.n << ',' << CsvWriter::format(r.median) << ','
        << CsvWriter::format(r.p80) << ',' << r.hash << ',' << r.seed << '\n';

  char line[160];
  std::snprintf(line, sizeof line, "%-28s %-6s %-32s %6s %12s %12s\n", "run", "metric", "method", "n", "median",
                "p80");
  console << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-28s %-6s %-32s %6zu %12.4f %12.4f\n", r.run.c_str(), r.metric.c_str(),
                  r.method.c_str(), r.n, r.median, r.p80);
    console << line;
  }
  return {{out_file}, "merged " + std::to_string(rows.size()) + " rows"};
}

}  // namespace mmwcs
