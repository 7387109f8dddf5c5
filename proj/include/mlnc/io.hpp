#pragma once

// Experiment configuration, matrix snapshots, trajectory CSV and the JSON
// documents the command line tool writes.
//
// Config (JSON, unknown keys rejected):
//
//   {
//     "labels": {"K": 3, "M": 2, "counts": {"1": 10, "2": [10, 10, 10]}},
//     "model":  {"d": 5, "lambda_W": 5e-3, "lambda_H": 5e-3, "lambda_b": 1e-3},
//     "train":  {"seeds": [0, 1], "step_size": 0.5, "momentum": 0.9, "grad_tol": 1e-8,
//                "max_iters": 200000, "init_scale": 0.1, "log_every": 100},
//     "verify": {"tolerance": 1e-3},
//     "output_dir": "out"
//   }
//
// A count given as an integer applies to every subset of that size; an array
// lists per-subset counts in lexicographic subset order. Omitted sizes have no
// samples. "train", "verify" and "output_dir" are optional.
//
// Snapshot: <label>.json manifest plus <label>.bin payload of little-endian
// binary64 values in row-major order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mlnc/landscape.hpp"
#include "mlnc/lemmas.hpp"
#include "mlnc/optimizer.hpp"
#include "mlnc/theory.hpp"
#include "mlnc/ufm.hpp"

namespace mlnc {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  LabelConfig labels;
  Hyperparams model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double verify_tolerance = 1e-3;
  std::string output_dir = "out";
};

/// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical form: every field present, counts always per-subset arrays.
Json to_json(const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a 64 over the canonical form without output_dir.
std::string config_hash(const ExperimentConfig& cfg);

/// Shortest round-trip decimal; "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& dir, const std::string& label, const Eigen::MatrixXd& m,
                  const std::string& config_hash);
/// Throws SnapshotError on a missing or inconsistent manifest or payload.
Eigen::MatrixXd read_matrix(const std::filesystem::path& dir, const std::string& label,
                            std::string* config_hash = nullptr);

/// W, H and b (stored as a K x 1 matrix).
void write_state(const std::filesystem::path& dir, const ModelState& state, const std::string& config_hash);
ModelState read_state(const std::filesystem::path& dir, std::string* config_hash = nullptr);

inline constexpr const char* kTrajectorySchema = "# mlnc-trajectory v1";

std::vector<std::string> trajectory_columns(int M);
std::string trajectory_csv(const Trajectory& traj, int M);

struct TrajectoryTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};

/// Throws SchemaError unless the schema line and header match exactly.
TrajectoryTable parse_trajectory_csv(const std::string& text, int M);

Json to_json(const MetricReport& r);
Json to_json(const AnalyticSolution& s);
AnalyticSolution solution_from_json(const Json& doc);
Json to_json(const VerificationReport& r);
Json to_json(const CurvatureReport& r);
Json to_json(const EscapeReport& r);
Json to_json(const LemmaReport& r);

}  // namespace mlnc
