#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mlnc/io.hpp"
#include "support.hpp"

using namespace mlnc;
using testing_support::scratch_dir;

namespace {

Json reference_doc() {
  return Json::parse(R"({
    "labels": {"K": 3, "M": 2, "counts": {"1": 10, "2": 10}},
    "model": {"d": 5, "lambda_W": 5e-3, "lambda_H": 5e-3, "lambda_b": 1e-3},
    "train": {"seeds": [0, 1, 2], "step_size": 0.5, "log_every": 50},
    "verify": {"tolerance": 1e-4},
    "output_dir": "runs/ref"
  })");
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("config parsing fills every field") {
  const ExperimentConfig cfg = parse_config(reference_doc());
  CHECK(cfg.labels.K == 3);
  CHECK(cfg.labels.total() == 60);
  CHECK(cfg.model.d == 5);
  CHECK(cfg.model.lambda_b == 1e-3);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(cfg.train.log_every == 50);
  CHECK(cfg.train.momentum == TrainConfig{}.momentum);
  CHECK(cfg.verify_tolerance == 1e-4);
  CHECK(cfg.output_dir == "runs/ref");

  Json per_subset = reference_doc();
  per_subset["labels"]["counts"]["2"] = {4, 0, 7};
  const ExperimentConfig imb = parse_config(per_subset);
  CHECK(imb.labels.count(2, 2) == 7);
  CHECK_FALSE(imb.labels.is_balanced(2));
}

TEST_CASE("config errors name the offending key") {
  const auto expect_error = [](Json doc, const std::string& needle) {
    try {
      (void)parse_config(doc);
      FAIL("accepted an invalid config");
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  Json d = reference_doc();
  d["extra"] = 1;
  expect_error(d, "extra");
  d = reference_doc();
  d["model"].erase("d");
  expect_error(d, "model.d");
  d = reference_doc();
  d["model"]["lambda_W"] = 0.0;
  expect_error(d, "model");
  d = reference_doc();
  d["labels"]["M"] = 3;
  expect_error(d, "labels.M");
  d = reference_doc();
  d["labels"]["counts"]["2"] = {1, 2};
  expect_error(d, "labels.counts");
  d = reference_doc();
  d["labels"]["counts"]["3"] = 1;
  expect_error(d, "labels.counts");
  d = reference_doc();
  d["train"]["seeds"] = Json::array();
  expect_error(d, "train.seeds");
  d = reference_doc();
  d["train"]["step_size"] = "big";
  expect_error(d, "train.step_size");
  d = reference_doc();
  d["verify"]["tolerance"] = -1.0;
  expect_error(d, "verify.tolerance");
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  const auto dir = scratch_dir("io_badjson");
  write_text(dir / "c.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir / "c.json"), ConfigError);
}

TEST_CASE("canonical form round-trips and the hash ignores the output directory") {
  const ExperimentConfig cfg = parse_config(reference_doc());
  const ExperimentConfig again = parse_config(to_json(cfg));
  CHECK(to_json(again) == to_json(cfg));
  CHECK(config_hash(again) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);

  Json moved = reference_doc();
  moved["output_dir"] = "elsewhere";
  CHECK(config_hash(parse_config(moved)) == config_hash(cfg));
  Json changed = reference_doc();
  changed["model"]["d"] = 6;
  CHECK(config_hash(parse_config(changed)) != config_hash(cfg));
  // integer and explicit per-subset counts describe the same experiment
  Json expanded = reference_doc();
  expanded["labels"]["counts"]["2"] = {10, 10, 10};
  CHECK(config_hash(parse_config(expanded)) == config_hash(cfg));
}

TEST_CASE("doubles print in shortest round-trip form") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 4.9e-324}) CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("matrix snapshots round-trip bit for bit") {
  const auto dir = scratch_dir("io_matrix");
  Eigen::MatrixXd m = testing_support::gaussian_state(3, 4, 5, 1).H;
  m(0, 0) = -0.0;
  m(1, 2) = std::numeric_limits<double>::infinity();
  m(2, 3) = std::bit_cast<double>(std::uint64_t{0x7ff8000000000123ull});  // NaN with payload
  m(3, 4) = std::numeric_limits<double>::denorm_min();
  write_matrix(dir, "H", m, "abc");
  std::string hash;
  const Eigen::MatrixXd back = read_matrix(dir, "H", &hash);
  CHECK(same_bits(back, m));
  CHECK(hash == "abc");
  CHECK(std::signbit(back(0, 0)));

  // explicit little-endian layout: the first 8 payload bytes are m(0,0), the next m(0,1)
  std::ifstream bin(dir / "H.bin", std::ios::binary);
  unsigned char bytes[16];
  bin.read(reinterpret_cast<char*>(bytes), 16);
  std::uint64_t second = 0;
  for (int j = 7; j >= 0; --j) second = (second << 8) | bytes[8 + j];
  CHECK(std::bit_cast<double>(second) == m(0, 1));
  CHECK(bytes[7] == 0x80);

  const Json manifest = Json::parse(read_text(dir / "H.json"));
  CHECK(manifest.at("shape") == Json::array({4, 5}));
  CHECK(manifest.at("bytes") == 160);

  const ModelState st = testing_support::gaussian_state(3, 4, 7, 2);
  write_state(dir / "state", st, "h1");
  const ModelState st2 = read_state(dir / "state", &hash);
  CHECK(same_bits(st.W, st2.W));
  CHECK(same_bits(st.H, st2.H));
  CHECK(same_bits(st.b, st2.b));
  CHECK(hash == "h1");
}

TEST_CASE("corrupt snapshots are rejected") {
  const auto dir = scratch_dir("io_corrupt");
  write_matrix(dir, "W", Eigen::MatrixXd::Ones(2, 3), "x");
  {
    std::ofstream bin(dir / "W.bin", std::ios::binary | std::ios::trunc);
    bin << "short";
  }
  CHECK_THROWS_AS(read_matrix(dir, "W"), SnapshotError);
  write_text(dir / "W.json", "{ broken");
  CHECK_THROWS_AS(read_matrix(dir, "W"), SnapshotError);
  CHECK_THROWS_AS(read_matrix(dir, "missing"), SnapshotError);

  write_matrix(dir, "V", Eigen::MatrixXd::Ones(2, 3), "x");
  Json manifest = Json::parse(read_text(dir / "V.json"));
  manifest["dtype"] = "f32le";
  write_text(dir / "V.json", manifest.dump());
  CHECK_THROWS_AS(read_matrix(dir, "V"), SnapshotError);

  const auto sdir = dir / "state";
  write_state(sdir, testing_support::gaussian_state(3, 4, 5, 1), "a");
  write_matrix(sdir, "b", Eigen::MatrixXd::Zero(3, 1), "b");
  CHECK_THROWS_AS(read_state(sdir), SnapshotError);
}

TEST_CASE("trajectory CSV round-trips and rejects drift") {
  Trajectory t;
  for (int j = 0; j < 3; ++j) {
    TrajectoryRecord r;
    r.iteration = 10 * j;
    r.f = 1.0 / (j + 1);
    r.grad_norm = std::pow(10.0, -j);
    MetricReport m;
    m.nc1 = {{1, 0.5 * j}};
    m.nc2 = 0.1;
    m.nc3 = 0.2 + j;
    r.metrics = m;
    t.records.push_back(r);
  }
  t.records.push_back({40, 0.2, 1e-9, std::nullopt});
  const std::string csv = trajectory_csv(t, 2);
  CHECK(csv.rfind(std::string(kTrajectorySchema) + "\niter,f,grad_norm,nc1_m1,nc1_m2,nc2,nc3,ncm\n", 0) == 0);
  const TrajectoryTable table = parse_trajectory_csv(csv, 2);
  REQUIRE(table.rows.size() == 4);
  CHECK(table.column("f")[2] == 1.0 / 3.0);
  CHECK(table.column("iter")[3] == 40);
  CHECK(std::isnan(table.column("nc1_m2")[0]));
  CHECK(std::isnan(table.column("ncm")[1]));
  CHECK(std::isnan(table.column("nc2")[3]));
  CHECK_THROWS_AS(table.column("nc9"), std::out_of_range);

  CHECK_THROWS_AS(parse_trajectory_csv(csv, 3), SchemaError);
  std::string drift = csv;
  drift.replace(drift.find("nc3"), 3, "nc4");
  CHECK_THROWS_AS(parse_trajectory_csv(drift, 2), SchemaError);
  CHECK_THROWS_AS(parse_trajectory_csv("# mlnc-trajectory v2\n" + csv.substr(csv.find('\n') + 1), 2), SchemaError);
  std::string crlf = csv;
  crlf.insert(crlf.rfind('\n'), "\r");
  CHECK_THROWS_AS(parse_trajectory_csv(crlf, 2), SchemaError);
  CHECK_THROWS_AS(parse_trajectory_csv(csv + "1,2\n", 2), SchemaError);
  CHECK_THROWS_AS(parse_trajectory_csv(csv + "1,2,x,4,5,6,7,8\n", 2), SchemaError);
}

TEST_CASE("analytic solutions survive a JSON round trip") {
  const LabelConfig cfg = testing_support::reference_labels();
  const AnalyticSolution sol = optimal_rho(cfg, testing_support::reference_hp());
  const AnalyticSolution back = solution_from_json(Json::parse(to_json(sol).dump()));
  CHECK(back.rho == sol.rho);
  CHECK(back.bound == sol.bound);
  CHECK(back.Gamma2 == sol.Gamma2);
  REQUIRE(back.per_m.size() == sol.per_m.size());
  for (std::size_t j = 0; j < sol.per_m.size(); ++j) {
    CHECK(back.per_m[j].c1 == sol.per_m[j].c1);
    CHECK(back.per_m[j].Hm_norm == sol.per_m[j].Hm_norm);
  }
  CHECK_THROWS_AS(solution_from_json(Json::parse(R"({"K": 3})")), SnapshotError);
}
