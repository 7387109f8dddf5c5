#include "mlnc/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace mlnc {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSnapshotFormat = "mlnc-matrix/1";

void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(where + "." + key + ": unknown key");
  }
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + "." + key + ": missing");
  return obj.at(key);
}

std::int64_t as_int(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_uint(const Json& v, const std::string& where) {
  if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

double as_real(const Json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double real_from(const Json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); }

Json checks_to_json(const std::map<int, double>& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = real_or_null(v);
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

ExperimentConfig parse_config(const Json& doc) {
  reject_unknown(doc, {"labels", "model", "train", "verify", "output_dir"}, "config");
  ExperimentConfig cfg;

  const Json& labels = require(doc, "labels", "config");
  reject_unknown(labels, {"K", "M", "counts"}, "labels");
  const auto K = as_int(require(labels, "K", "labels"), "labels.K");
  const auto M = as_int(require(labels, "M", "labels"), "labels.M");
  if (K < 2 || K > 62) throw ConfigError("labels.K: must lie in [2, 62]");
  if (M < 1 || M >= K) throw ConfigError("labels.M: must lie in [1, K-1]");
  const Json& counts = require(labels, "counts", "labels");
  if (!counts.is_object()) throw ConfigError("labels.counts: expected an object keyed by multiplicity");
  std::vector<std::vector<std::int64_t>> per(M);
  for (int m = 1; m <= M; ++m) per[m - 1].assign(binomial(static_cast<int>(K), m), 0);
  for (const auto& [key, value] : counts.items()) {
    const std::string where = "labels.counts." + key;
    int m = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), m);
    if (ec != std::errc() || ptr != key.data() + key.size() || m < 1 || m > M)
      throw ConfigError(where + ": key must be a multiplicity in [1, M]");
    auto& row = per[m - 1];
    if (value.is_array()) {
      if (value.size() != row.size())
        throw ConfigError(where + ": expected " + std::to_string(row.size()) + " per-subset counts");
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = as_int(value[k], where + "[" + std::to_string(k) + "]");
    } else {
      const std::int64_t n = as_int(value, where);
      for (auto& c : row) c = n;
    }
  }
  cfg.labels = LabelConfig::per_subset(static_cast<int>(K), std::move(per));
  try {
    cfg.labels.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("labels: ") + e.what());
  }

  const Json& model = require(doc, "model", "config");
  reject_unknown(model, {"d", "lambda_W", "lambda_H", "lambda_b"}, "model");
  const auto d = as_int(require(model, "d", "model"), "model.d");
  if (d < 1 || d > 100000) throw ConfigError("model.d: must be a positive dimension");
  cfg.model.d = static_cast<int>(d);
  cfg.model.lambda_W = as_real(require(model, "lambda_W", "model"), "model.lambda_W");
  cfg.model.lambda_H = as_real(require(model, "lambda_H", "model"), "model.lambda_H");
  cfg.model.lambda_b = model.contains("lambda_b") ? as_real(model.at("lambda_b"), "model.lambda_b") : 0.0;
  try {
    cfg.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  if (doc.contains("train")) {
    const Json& train = doc.at("train");
    reject_unknown(train, {"seeds", "step_size", "momentum", "grad_tol", "max_iters", "init_scale", "log_every"},
                   "train");
    if (train.contains("seeds")) {
      const Json& seeds = train.at("seeds");
      if (!seeds.is_array() || seeds.empty()) throw ConfigError("train.seeds: expected a nonempty array");
      cfg.seeds.clear();
      for (std::size_t j = 0; j < seeds.size(); ++j)
        cfg.seeds.push_back(as_uint(seeds[j], "train.seeds[" + std::to_string(j) + "]"));
    }
    if (train.contains("step_size")) cfg.train.step_size = as_real(train.at("step_size"), "train.step_size");
    if (train.contains("momentum")) cfg.train.momentum = as_real(train.at("momentum"), "train.momentum");
    if (train.contains("grad_tol")) cfg.train.grad_tol = as_real(train.at("grad_tol"), "train.grad_tol");
    if (train.contains("max_iters")) cfg.train.max_iters = as_int(train.at("max_iters"), "train.max_iters");
    if (train.contains("init_scale")) cfg.train.init_scale = as_real(train.at("init_scale"), "train.init_scale");
    if (train.contains("log_every")) cfg.train.log_every = as_int(train.at("log_every"), "train.log_every");
  }
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  if (doc.contains("verify")) {
    const Json& verify = doc.at("verify");
    reject_unknown(verify, {"tolerance"}, "verify");
    if (verify.contains("tolerance")) cfg.verify_tolerance = as_real(verify.at("tolerance"), "verify.tolerance");
    if (!(cfg.verify_tolerance > 0.0)) throw ConfigError("verify.tolerance: must be positive");
  }

  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) throw ConfigError("config.output_dir: expected a string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

Json to_json(const ExperimentConfig& cfg) {
  Json counts = Json::object();
  for (int m = 1; m <= cfg.labels.M; ++m) counts[std::to_string(m)] = cfg.labels.counts[m - 1];
  Json doc;
  doc["labels"] = {{"K", cfg.labels.K}, {"M", cfg.labels.M}, {"counts", counts}};
  doc["model"] = {{"d", cfg.model.d},
                  {"lambda_W", cfg.model.lambda_W},
                  {"lambda_H", cfg.model.lambda_H},
                  {"lambda_b", cfg.model.lambda_b}};
  doc["train"] = {{"seeds", cfg.seeds},
                  {"step_size", cfg.train.step_size},
                  {"momentum", cfg.train.momentum},
                  {"grad_tol", cfg.train.grad_tol},
                  {"max_iters", cfg.train.max_iters},
                  {"init_scale", cfg.train.init_scale},
                  {"log_every", cfg.train.log_every}};
  doc["verify"] = {{"tolerance", cfg.verify_tolerance}};
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  Json doc = to_json(cfg);
  doc.erase("output_dir");
  const std::uint64_t h = fnv1a(doc.dump());
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf.data(), 16);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_matrix(const fs::path& dir, const std::string& label, const Eigen::MatrixXd& m,
                  const std::string& hash) {
  fs::create_directories(dir);
  std::string payload;
  payload.resize(static_cast<std::size_t>(m.size()) * 8);
  std::size_t pos = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::uint64_t bits = 0;
      const double v = m(r, c);
      std::memcpy(&bits, &v, 8);
      for (int byte = 0; byte < 8; ++byte) payload[pos++] = static_cast<char>((bits >> (8 * byte)) & 0xFF);
    }
  }
  Json manifest = {{"format", kSnapshotFormat},
                   {"label", label},
                   {"shape", {m.rows(), m.cols()}},
                   {"layout", "row-major"},
                   {"dtype", "f64le"},
                   {"config_hash", hash},
                   {"payload", label + ".bin"},
                   {"bytes", payload.size()}};
  write_text(dir / (label + ".bin"), payload);
  write_text(dir / (label + ".json"), manifest.dump(2) + "\n");
}

Eigen::MatrixXd read_matrix(const fs::path& dir, const std::string& label, std::string* hash) {
  Json manifest;
  try {
    manifest = Json::parse(read_text(dir / (label + ".json")));
  } catch (const Json::exception& e) {
    throw SnapshotError("manifest " + label + ".json is corrupt: " + e.what());
  }
  auto field = [&](const char* key) -> const Json& {
    if (!manifest.contains(key)) throw SnapshotError("manifest " + label + ".json lacks " + key);
    return manifest.at(key);
  };
  if (field("format") != kSnapshotFormat) throw SnapshotError("unsupported snapshot format");
  if (field("dtype") != "f64le") throw SnapshotError("unsupported element type");
  if (field("layout") != "row-major") throw SnapshotError("unsupported layout");
  const Json& shape = field("shape");
  if (!shape.is_array() || shape.size() != 2 || !shape[0].is_number_unsigned() || !shape[1].is_number_unsigned())
    throw SnapshotError("manifest shape must be two nonnegative integers");
  const auto rows = shape[0].get<std::uint64_t>();
  const auto cols = shape[1].get<std::uint64_t>();
  if (rows > (1ULL << 31) || cols > (1ULL << 31) || rows * cols > (1ULL << 31))
    throw SnapshotError("manifest shape is implausibly large");
  const std::string payload_name = field("payload").is_string() ? field("payload").get<std::string>() : "";
  if (payload_name != label + ".bin") throw SnapshotError("manifest payload name mismatch");
  const std::string payload = read_text(dir / payload_name);
  if (payload.size() != rows * cols * 8)
    throw SnapshotError("payload " + payload_name + " has " + std::to_string(payload.size()) + " bytes, expected " +
                        std::to_string(rows * cols * 8));
  if (hash) *hash = field("config_hash").is_string() ? field("config_hash").get<std::string>() : "";

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t pos = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::uint64_t bits = 0;
      for (int byte = 0; byte < 8; ++byte)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[pos++])) << (8 * byte);
      double v = 0.0;
      std::memcpy(&v, &bits, 8);
      m(r, c) = v;
    }
  }
  return m;
}

void write_state(const fs::path& dir, const ModelState& state, const std::string& hash) {
  write_matrix(dir, "W", state.W, hash);
  write_matrix(dir, "H", state.H, hash);
  write_matrix(dir, "b", state.b, hash);
}

ModelState read_state(const fs::path& dir, std::string* hash) {
  ModelState s;
  std::string hw, hh, hb;
  s.W = read_matrix(dir, "W", &hw);
  s.H = read_matrix(dir, "H", &hh);
  const Eigen::MatrixXd b = read_matrix(dir, "b", &hb);
  if (b.cols() != 1) throw SnapshotError("b must be stored as a column");
  s.b = b.col(0);
  if (hw != hh || hw != hb) throw SnapshotError("snapshot parts carry different config hashes");
  if (s.W.cols() != s.H.rows() || s.W.rows() != s.b.size()) throw SnapshotError("snapshot parts disagree in shape");
  if (hash) *hash = hw;
  return s;
}

std::vector<std::string> trajectory_columns(int M) {
  std::vector<std::string> cols{"iter", "f", "grad_norm"};
  for (int m = 1; m <= M; ++m) cols.push_back("nc1_m" + std::to_string(m));
  cols.insert(cols.end(), {"nc2", "nc3", "ncm"});
  return cols;
}

std::string trajectory_csv(const Trajectory& traj, int M) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::string out = std::string(kTrajectorySchema) + "\n";
  const auto cols = trajectory_columns(M);
  for (std::size_t j = 0; j < cols.size(); ++j) out += (j ? "," : "") + cols[j];
  out += "\n";
  for (const TrajectoryRecord& rec : traj.records) {
    out += std::to_string(rec.iteration) + "," + format_double(rec.f) + "," + format_double(rec.grad_norm);
    for (int m = 1; m <= M; ++m) {
      double v = nan;
      if (rec.metrics && rec.metrics->nc1.contains(m)) v = rec.metrics->nc1.at(m);
      out += "," + format_double(v);
    }
    const auto opt = [&](const std::optional<double>& x) { return format_double(x.value_or(nan)); };
    if (rec.metrics) {
      out += "," + opt(rec.metrics->nc2) + "," + opt(rec.metrics->nc3) + "," + opt(rec.metrics->ncm);
    } else {
      out += ",nan,nan,nan";
    }
    out += "\n";
  }
  return out;
}

std::vector<double> TrajectoryTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] != name) continue;
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row[j]);
    return out;
  }
  throw std::out_of_range("no column " + name);
}

TrajectoryTable parse_trajectory_csv(const std::string& text, int M) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrajectorySchema) throw SchemaError("missing or unknown schema line");
  TrajectoryTable table;
  table.columns = trajectory_columns(M);
  std::string expected;
  for (std::size_t j = 0; j < table.columns.size(); ++j) expected += (j ? "," : "") + table.columns[j];
  if (!std::getline(in, line) || line != expected) throw SchemaError("header does not match: " + line);
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') throw SchemaError("CRLF line ending at line " + std::to_string(lineno));
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t end = line.find(',', start);
      const std::string field = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        throw SchemaError("bad value '" + field + "' at line " + std::to_string(lineno));
      row.push_back(v);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (row.size() != table.columns.size())
      throw SchemaError("wrong field count at line " + std::to_string(lineno));
    table.rows.push_back(std::move(row));
  }
  return table;
}

Json to_json(const MetricReport& r) {
  Json out;
  out["nc1"] = checks_to_json(r.nc1);
  out["nc2"] = r.nc2 ? real_or_null(*r.nc2) : Json(nullptr);
  out["nc3"] = r.nc3 ? real_or_null(*r.nc3) : Json(nullptr);
  out["ncm"] = r.ncm ? real_or_null(*r.ncm) : Json(nullptr);
  out["ncm_by_multiplicity"] = checks_to_json(r.ncm_by_multiplicity);
  out["w_norm_spread"] = real_or_null(r.w_norm_spread);
  out["bias_residual"] = real_or_null(r.bias_residual);
  return out;
}

Json to_json(const AnalyticSolution& s) {
  Json per = Json::array();
  for (const auto& r : s.per_m) {
    per.push_back({{"m", r.m},         {"n", r.n},         {"c1", r.c1},         {"c2", r.c2},
                   {"c3", r.c3},       {"gamma1", r.gamma1}, {"kappa", r.kappa}, {"Cm", r.Cm},
                   {"z_in", r.z_in},   {"z_out", r.z_out}, {"alpha", r.alpha},   {"beta", r.beta},
                   {"Hm_norm", r.Hm_norm}});
  }
  Json roots = Json::array();
  for (const auto& root : s.roots) roots.push_back(checks_to_json(root));
  return {{"K", s.K},         {"rho", s.rho},       {"per_multiplicity", per}, {"Q", s.Q},
          {"Gamma2", s.Gamma2}, {"b_star", s.b_star}, {"bound", s.bound},       {"c_residual", s.c_residual},
          {"method", s.method}, {"roots", roots}};
}

AnalyticSolution solution_from_json(const Json& doc) {
  try {
    AnalyticSolution s;
    s.K = doc.at("K").get<int>();
    s.rho = doc.at("rho").get<double>();
    for (const Json& r : doc.at("per_multiplicity")) {
      MultiplicitySolution m;
      m.m = r.at("m").get<int>();
      m.n = r.at("n").get<std::int64_t>();
      m.c1 = r.at("c1").get<double>();
      m.c2 = r.at("c2").get<double>();
      m.c3 = r.at("c3").get<double>();
      m.gamma1 = r.at("gamma1").get<double>();
      m.kappa = r.at("kappa").get<double>();
      m.Cm = r.at("Cm").get<double>();
      m.z_in = r.at("z_in").get<double>();
      m.z_out = r.at("z_out").get<double>();
      m.alpha = r.at("alpha").get<double>();
      m.beta = r.at("beta").get<double>();
      m.Hm_norm = r.at("Hm_norm").get<double>();
      s.per_m.push_back(m);
    }
    s.Q = doc.at("Q").get<double>();
    s.Gamma2 = doc.at("Gamma2").get<double>();
    s.b_star = doc.at("b_star").get<double>();
    s.bound = doc.at("bound").get<double>();
    s.c_residual = real_from(doc.at("c_residual"));
    s.method = doc.at("method").get<std::string>();
    return s;
  } catch (const Json::exception& e) {
    throw SnapshotError(std::string("solution document is malformed: ") + e.what());
  }
}

Json to_json(const VerificationReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"residual", real_or_null(c.residual)}, {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  return {{"passed", r.passed()},
          {"rho", r.rho},
          {"checks", checks},
          {"fitted_C", checks_to_json(r.fitted_C)},
          {"z_in", checks_to_json(r.z_in)},
          {"z_out", checks_to_json(r.z_out)},
          {"fitted_c1", checks_to_json(r.fitted_c1)}};
}

Json to_json(const CurvatureReport& r) {
  return {{"classification", std::string(to_string(r.classification))},
          {"f", real_or_null(r.f)},
          {"f_global", r.f_global ? real_or_null(*r.f_global) : Json(nullptr)},
          {"grad_norm", real_or_null(r.grad_norm)},
          {"is_critical", r.is_critical},
          {"lambda_min_estimate", real_or_null(r.lambda_min_estimate)},
          {"lambda_max_estimate", real_or_null(r.lambda_max_estimate)},
          {"eigvec_residual", real_or_null(r.eigvec_residual)},
          {"eigen_converged", r.eigen_converged},
          {"curvature_margin", real_or_null(r.curvature_margin)},
          {"near_zero_directions", r.near_zero_directions},
          {"hvp_symmetry", real_or_null(r.hvp.symmetry)},
          {"hvp_finite_diff", real_or_null(r.hvp.finite_diff)}};
}

Json to_json(const EscapeReport& r) {
  return {{"f_saddle", real_or_null(r.f_saddle)},
          {"perturbation", real_or_null(r.perturbation)},
          {"f_plus", real_or_null(r.f_plus)},
          {"f_minus", real_or_null(r.f_minus)},
          {"both_decrease", r.both_decrease},
          {"diverged", r.diverged},
          {"f_final", real_or_null(r.f_final)},
          {"descended", r.descended},
          {"iterations", r.trajectory.iterations},
          {"verification", to_json(r.verification)}};
}

Json to_json(const LemmaReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"suite", row.suite}, {"K", row.K}, {"m", row.m}, {"value", real_or_null(row.value)},
                    {"passed", row.passed}});
  return {{"passed", r.passed()}, {"draws", r.draws}, {"rows", rows}};
}

}  // namespace mlnc
