// SPDX-License-Identifier: Apache-2.0
#include "mmwcs/experiment.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace mmwcs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmwcs_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor container

TEST(TensorIo, RoundTripIsBitExactForEveryDtype) {
  Rng rng(1);
  const fs::path dir = scratch("roundtrip");
  CMat c = complex_normal_matrix(rng, 3, 5);
  c(0, 0) = cdouble(-0.0, std::numeric_limits<double>::denorm_min());
  RMat r = RMat::Random(4, 2);
  r(1, 1) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> f{1.5, -0.0, std::numeric_limits<double>::infinity()};
  const std::vector<std::int64_t> i{0, -1, std::numeric_limits<std::int64_t>::max()};
  const std::vector<std::uint8_t> u{0, 255, 7};
  const std::vector<Tensor> ts{to_tensor("c", c, "{\"k\":1}"), to_tensor("r", r), to_tensor("f", f),
                               to_tensor("i", i), to_tensor("u", u), to_tensor("empty", std::vector<double>{})};
  const std::string path = (dir / "t.mmwt").string();
  write_tensors(path, ts);
  const auto back = read_tensors(path);
  ASSERT_EQ(back.size(), ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    EXPECT_EQ(back[k].name, ts[k].name);
    EXPECT_EQ(back[k].dtype, ts[k].dtype);
    EXPECT_EQ(back[k].shape, ts[k].shape);
    EXPECT_EQ(back[k].meta, ts[k].meta);
    EXPECT_EQ(back[k].payload, ts[k].payload);
  }
  EXPECT_EQ(std::memcmp(as_cmat(find_tensor(back, "c")).data(), c.data(), sizeof(cdouble) * 15), 0);
  EXPECT_EQ(as_i64(find_tensor(back, "i")), i);
  EXPECT_EQ(as_u8(find_tensor(back, "u")), u);
  EXPECT_THROW(find_tensor(back, "missing"), TensorFormatError);
  EXPECT_THROW(as_cmat(find_tensor(back, "r")), TensorFormatError);
}

TEST(TensorIo, HeaderLayout) {
  const std::vector<double> v{1.0, 2.0};
  const auto bytes = encode_tensor(to_tensor("ab", v, "{}"));
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MMWT");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian u16
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);  // f64
  EXPECT_EQ(bytes[7], 0);
  // magic+version+dtype+reserved, rank, one dim, name, meta, payload_len, two CRCs, payload.
  EXPECT_EQ(bytes.size(), 8u + 4 + 8 + (4 + 2) + (4 + 2) + 8 + 4 + 4 + 16);
  double tail[2];
  std::memcpy(tail, bytes.data() + bytes.size() - 16, 16);
  EXPECT_EQ(tail[0], 1.0);
  EXPECT_EQ(tail[1], 2.0);
  // The payload checksum is the zlib CRC-32 of the payload bytes.
  std::uint32_t crc;
  std::memcpy(&crc, bytes.data() + bytes.size() - 16 - 8, 4);
  EXPECT_EQ(crc, crc32_bytes(bytes.data() + bytes.size() - 16, 16));
  EXPECT_EQ(crc32_bytes(reinterpret_cast<const std::uint8_t*>("123456789"), 9), 0xCBF43926u);
}

TEST(TensorIo, CorruptionIsDetected) {
  const fs::path dir = scratch("corrupt");
  const std::string path = (dir / "t.mmwt").string();
  write_tensors(path, {to_tensor("x", std::vector<double>{1, 2, 3, 4})});
  const std::string good = slurp(path);

  auto expect_bad = [&](std::string bytes) {
    spit(path, bytes);
    EXPECT_THROW(read_tensors(path), TensorFormatError);
  };
  std::string b = good;
  b.back() ^= 0x01;  // payload
  expect_bad(b);
  b = good;
  b[20] ^= 0x40;  // dims
  expect_bad(b);
  b = good;
  b[0] = 'X';  // magic
  expect_bad(b);
  expect_bad(good.substr(0, good.size() - 3));  // truncated payload
  expect_bad(good.substr(0, 10));               // truncated header
  b = good;
  b[4] = 2;  // version
  expect_bad(b);
  spit(path, good);
  EXPECT_NO_THROW(read_tensors(path));

  Tensor t = to_tensor("y", std::vector<double>{1.0});
  t.shape = {2};
  EXPECT_THROW(encode_tensor(t), std::length_error);
  EXPECT_THROW(read_tensors((dir / "absent").string()), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsAreTheDeskProfile) {
  const ExperimentConfig c = parse_config(Json::object());
  EXPECT_EQ(c.num_ues, 120);
  EXPECT_EQ(c.measurements, 5);
  EXPECT_EQ(c.scenario.ue_geom.element_count(), 8);
  EXPECT_EQ(c.scenario.gnb_geom.element_count(), 32);
  EXPECT_EQ(c.grid.atom_count(), 18 * 18 * 18 * 18);
  EXPECT_EQ(c.train.split_train, 0.75);
  EXPECT_EQ(c.train.split_val, 0.08);
  EXPECT_EQ(c.train.split_test, 0.17);
  EXPECT_EQ(c.estimator.dlista_layers, 10);
  EXPECT_EQ(c.dictionary.atoms, 200);
}

TEST(Config, UnknownKeysAndBadTypesAreRejected) {
  EXPECT_THROW(parse_config(Json::parse(R"({"nmu_ues": 3})")), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"scenario": {"ue_array": {"rowz": 2}}})")), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"num_ues": "many"})")), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"eval": {"rank2_power": "greedy"}})")), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"train": 3})")), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"num_ues": 0})")), std::invalid_argument);
  EXPECT_THROW(parse_config(Json::parse(R"({"train": {"split_val": 0.5}})")), std::invalid_argument);
  EXPECT_THROW(parse_config(Json::parse(R"({"eval": {"estimators": ["amp"]}})")), std::invalid_argument);
}

TEST(Config, OverridesAndHash) {
  Json j = Json::object();
  apply_override(j, "train.epochs=7");
  apply_override(j, "estimator.omp.normalize_columns=true");
  apply_override(j, "output_dir=somewhere/else");
  const ExperimentConfig c = parse_config(j);
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_TRUE(c.estimator.omp.normalize_columns);
  EXPECT_EQ(c.output_dir, "somewhere/else");
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b=1"), ConfigError);

  // Round trip through the canonical form keeps the hash; output_dir is not hashed.
  const ExperimentConfig back = parse_config(config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  ExperimentConfig reseeded = c;
  reseeded.seed = 99;
  EXPECT_NE(config_hash(reseeded), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  // FNV-1a reference values.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Config, ShippedProfilesParse) {
  for (const char* name : {"desk.json", "paper.json", "tiny.json"}) {
    const std::string path = std::string(MMWCS_CONFIG_DIR) + "/" + name;
    EXPECT_NO_THROW(parse_config(load_config_json(path))) << name;
  }
  const ExperimentConfig paper = parse_config(load_config_json(std::string(MMWCS_CONFIG_DIR) + "/paper.json"));
  EXPECT_EQ(paper.grid.atom_count(), 524288);
  EXPECT_THROW(load_config_json("/nonexistent/config.json"), ConfigError);
}

// ---------------------------------------------------------------------------
// In-process pipeline pieces

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c = parse_config(load_config_json(std::string(MMWCS_CONFIG_DIR) + "/tiny.json"));
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Pipeline, DatasetRoundTrip) {
  const fs::path dir = scratch("dataset");
  const ExperimentConfig c = tiny_config(dir);
  const Dataset d = generate_dataset(c);
  ASSERT_FALSE(d.samples.empty());
  const std::string path = (dir / "d.mmwt").string();
  save_dataset(d, path, c);
  const Dataset back = load_dataset(path, c);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.samples[i].h, d.samples[i].h);
    EXPECT_EQ(back.samples[i].y, d.samples[i].y);
    EXPECT_EQ(back.samples[i].phi.dense(), d.samples[i].phi.dense());
    EXPECT_EQ(back.ue[i], d.ue[i]);
    EXPECT_EQ(back.tap[i], d.tap[i]);
  }
  EXPECT_EQ(back.noise_var, d.noise_var);
  EXPECT_EQ(back.provenance.config_hash, config_hash(c));
  EXPECT_EQ(back.provenance.seed, c.seed);
}

TEST(Pipeline, UeStreamsAreIndependentOfUeCount) {
  ExperimentConfig c = tiny_config(scratch("streams"));
  const Dataset small = generate_dataset(c);
  c.num_ues = 12;
  const Dataset large = generate_dataset(c);
  ASSERT_GE(large.size(), small.size());
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small.samples[i].h, large.samples[i].h);
}

TEST(Pipeline, SplitIsByUe) {
  ExperimentConfig c = tiny_config(scratch("split"));
  c.num_ues = 30;
  c.dominant_taps = 5;
  const Dataset d = generate_dataset(c);
  const Split s = split_dataset(d, c.train);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), d.size());
  std::map<std::int64_t, int> part;
  auto mark = [&](const std::vector<std::size_t>& idx, int p) {
    for (auto i : idx) {
      auto [it, fresh] = part.emplace(d.ue[i], p);
      EXPECT_TRUE(fresh || it->second == p) << "UE " << d.ue[i] << " spans two splits";
    }
  };
  mark(s.train, 0);
  mark(s.val, 1);
  mark(s.test, 2);
}

TEST(Pipeline, DictionaryAndCheckpointRoundTrip) {
  const fs::path dir = scratch("ckpt");
  Rng rng(3);
  const LearnedDictionary d = random_dictionary(8, 5, rng);
  const Provenance prov{"0123456789abcdef", 4};
  save_dictionary(d, (dir / "d.mmwt").string(), prov);
  const LearnedDictionary db = load_dictionary((dir / "d.mmwt").string());
  EXPECT_EQ(db.d, d.d);
  EXPECT_EQ(db.method, d.method);

  for (bool shared : {false, true}) {
    DlistaParams p = DlistaParams::from_dictionary(d.d, 3, 0.2, 0.05, shared);
    p.gamma[1] = 0.7;
    p.psi_final(0, 0) = cdouble(2, -3);
    save_checkpoint(p, (dir / "c.mmwt").string(), prov, DictMethod::spca);
    const DlistaParams q = load_checkpoint((dir / "c.mmwt").string());
    EXPECT_EQ(q.gamma, p.gamma);
    EXPECT_EQ(q.theta_raw, p.theta_raw);
    EXPECT_EQ(q.shared, p.shared);
    ASSERT_EQ(q.psi.size(), p.psi.size());
    for (std::size_t k = 0; k < p.psi.size(); ++k) EXPECT_EQ(q.psi[k], p.psi[k]);
    EXPECT_EQ(q.psi_final, p.psi_final);
    const Json meta = Json::parse(read_tensors((dir / "c.mmwt").string()).front().meta);
    EXPECT_EQ(meta.at("config_hash"), "0123456789abcdef");
    EXPECT_EQ(meta.at("layers"), 3);
    EXPECT_EQ(meta.at("init"), "spca");
  }
}

TEST(Pipeline, CsvFormatting) {
  EXPECT_EQ(CsvWriter::format(0.1), "0.1");
  EXPECT_EQ(CsvWriter::format(-120.0), "-120");
  EXPECT_EQ(CsvWriter::format(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(CsvWriter::format(1.0 / 3.0), "0.333333333333");
}

// ---------------------------------------------------------------------------
// Command-line tool

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MMWCS_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny() { return std::string("-c ") + MMWCS_CONFIG_DIR + "/tiny.json"; }

const std::vector<std::string> kOutputs{"dataset.mmwt", "dictionary.mmwt", "checkpoint.mmwt", "train_metrics.csv",
                                        "nmse.csv",     "se.csv",          "nmse_cdf.csv",    "se_cdf.csv"};

void full_run(const fs::path& out, const fs::path& log) {
  const std::string o = " -o '" + out.string() + "'";
  ASSERT_EQ(run_cli("generate " + tiny() + o, log), 0) << slurp(log);
  ASSERT_EQ(run_cli("learn-dict " + tiny() + o, log), 0) << slurp(log);
  ASSERT_EQ(run_cli("train " + tiny() + o, log), 0) << slurp(log);
  ASSERT_EQ(run_cli("eval " + tiny() + o + " --dictionary '" + (out / "dictionary.mmwt").string() +
                        "' --checkpoint '" + (out / "checkpoint.mmwt").string() + "'",
                    log),
            0)
      << slurp(log);
}

}  // namespace

TEST(Cli, EndToEndIsReproducible) {
  const fs::path root = scratch("cli");
  const auto start = std::chrono::steady_clock::now();
  full_run(root / "a", root / "log_a");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
  full_run(root / "b", root / "log_b");
  for (const auto& f : kOutputs) {
    ASSERT_TRUE(fs::exists(root / "a" / f)) << f;
    EXPECT_EQ(slurp(root / "a" / f), slurp(root / "b" / f)) << f << " differs between identical runs";
  }

  // Every CSV carries the provenance columns.
  const ExperimentConfig c = tiny_config(root / "a");
  for (const auto& f : kOutputs) {
    if (f.find(".csv") == std::string::npos) continue;
    const auto rows = read_csv((root / "a" / f).string());
    ASSERT_FALSE(rows.empty()) << f;
    for (const auto& r : rows) {
      EXPECT_EQ(r.at("config_hash"), config_hash(c));
      EXPECT_EQ(r.at("seed"), "3");
    }
  }
  const auto se = read_csv((root / "a" / "se_cdf.csv").string());
  std::set<std::string> methods;
  for (const auto& r : se) methods.insert(r.at("method"));
  for (const char* m : {"rank2_digital", "codebook", "oversampled_codebook", "custom_angles_omp",
                        "exhaustive_from_dlista", "exhaustive_from_omp", "exhaustive_from_ista"})
    EXPECT_TRUE(methods.count(m)) << m;

  const fs::path report = root / "report.csv";
  ASSERT_EQ(run_cli("report '" + (root / "a").string() + "' '" + (root / "b").string() + "' --out '" +
                        report.string() + "'",
                    root / "log_r"),
            0)
      << slurp(root / "log_r");
  const auto rows = read_csv(report.string());
  EXPECT_FALSE(rows.empty());
  for (const auto& r : rows) EXPECT_TRUE(r.count("median") && r.count("p80"));
}

TEST(Cli, TruthEstimatorHitsTheNmseFloor) {
  const fs::path root = scratch("truth");
  const std::string o = " -o '" + (root / "run").string() + "'";
  ASSERT_EQ(run_cli("generate " + tiny() + o, root / "log"), 0) << slurp(root / "log");
  ASSERT_EQ(run_cli("eval " + tiny() + o + " --set 'eval.estimators=[\"truth\"]'", root / "log"), 0)
      << slurp(root / "log");
  const auto rows = read_csv((root / "run" / "nmse.csv").string());
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    EXPECT_EQ(r.at("method"), "truth");
    EXPECT_EQ(std::stod(r.at("nmse_db")), kNmseFloorDb);
  }
}

TEST(Cli, SingleUeSingleTapGivesOneRecord) {
  const fs::path root = scratch("one");
  const std::string args = "generate " + tiny() + " -o '" + (root / "run").string() +
                           "' --set num_ues=1 --set dominant_taps=1 --set scenario.paths.tap_count_max=1";
  ASSERT_EQ(run_cli(args, root / "log"), 0) << slurp(root / "log");
  const ExperimentConfig c = tiny_config(root / "run");
  EXPECT_EQ(load_dataset((root / "run" / "dataset.mmwt").string(), c).size(), 1u);
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch("codes");
  const std::string o = " -o '" + (root / "run").string() + "'";
  EXPECT_EQ(run_cli("", root / "log"), 1);
  EXPECT_EQ(run_cli("--help", root / "log"), 0);
  EXPECT_EQ(run_cli("frobnicate", root / "log"), 1);
  EXPECT_EQ(run_cli("generate", root / "log"), 1);                         // missing --config
  EXPECT_EQ(run_cli("generate -c /nonexistent.json", root / "log"), 1);
  EXPECT_EQ(run_cli("generate " + tiny() + o + " --set bogus=1", root / "log"), 1);
  EXPECT_EQ(run_cli("generate " + tiny() + o + " --set num_ues=0", root / "log"), 1);
  EXPECT_EQ(run_cli("generate " + tiny() + " -o /proc/mmwcs_nope", root / "log"), 2);
  ASSERT_EQ(run_cli("generate " + tiny() + o, root / "log"), 0) << slurp(root / "log");
  EXPECT_EQ(run_cli("eval " + tiny() + o, root / "log"), 1);  // dlista without a checkpoint
  EXPECT_EQ(run_cli("train " + tiny() + o + " --dictionary /nonexistent.mmwt", root / "log"), 2);
  EXPECT_EQ(run_cli("learn-dict " + tiny() + o + " --set train.batch_size=64", root / "log"), 0);
  EXPECT_EQ(run_cli("train " + tiny() + o + " --set train.batch_size=64", root / "log"), 1);
  EXPECT_EQ(run_cli("report '" + (root / "run").string() + "'", root / "log"), 2);  // no eval outputs yet
}
