#include "chmc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "chmc/simd/kernels.hpp"
#include "chmc/targets.hpp"

#ifndef CHMC_VERSION_STRING
#define CHMC_VERSION_STRING "0.0.0"
#endif

namespace chmc {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string library_version() { return CHMC_VERSION_STRING; }

CovarianceMode ExperimentSpec::resolved_covariance_mode() const {
  switch (covariance) {
    case CovarianceSetting::full:
      return CovarianceMode::full;
    case CovarianceSetting::diagonal:
      return CovarianceMode::diagonal;
    case CovarianceSetting::automatic:
      break;
  }
  return target.dimension > kFullCovarianceLimit ? CovarianceMode::diagonal
                                                 : CovarianceMode::full;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

std::string trace_file_name(const std::string& method, std::size_t chain) {
  std::string safe;
  for (char c : method) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    safe.push_back(ok ? c : '_');
  }
  return "trace_" + safe + "_" + std::to_string(chain) + ".csv";
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Errors {
 public:
  void add(const std::string& path, const std::string& message) {
    list_.push_back(path + ": " + message);
  }
  std::vector<std::string>& list() { return list_; }

 private:
  std::vector<std::string> list_;
};

const std::set<std::string> kTopKeys = {"target", "mass", "methods", "chains", "output_dir",
                                        "covariance_mode", "seed", "record_stride", "defaults"};
const std::set<std::string> kMethodKeys = {
    "name", "method", "jacobian", "jacobian_source", "h_fd", "tau", "total_time", "iterations",
    "burn_in", "initial_state", "initial_values", "solver", "n_steps"};
const std::set<std::string> kSolverKeys = {"delta",     "max_fpi",      "dd_guard",
                                           "init_mode", "force_source", "scheme"};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path,
                Errors& errors) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) errors.add(path.empty() ? key : path + "." + key, "unknown field");
  }
}

std::optional<double> read_number(const json& obj, const std::string& key, const std::string& path,
                                  Errors& errors) {
  if (!obj.contains(key)) return std::nullopt;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    errors.add(path + key, "must be a number");
    return std::nullopt;
  }
  return v.get<double>();
}

std::optional<std::uint64_t> read_count(const json& obj, const std::string& key,
                                        const std::string& path, Errors& errors) {
  if (!obj.contains(key)) return std::nullopt;
  const json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number()) {
    const double d = v.get<double>();
    if (d >= 0.0 && std::floor(d) == d && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  errors.add(path + key, "must be a non-negative integer");
  return std::nullopt;
}

std::optional<std::string> read_string(const json& obj, const std::string& key,
                                       const std::string& path, Errors& errors) {
  if (!obj.contains(key)) return std::nullopt;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    errors.add(path + key, "must be a string");
    return std::nullopt;
  }
  return v.get<std::string>();
}

std::optional<Vector> read_vector(const json& v, const std::string& path, Errors& errors) {
  if (!v.is_array()) {
    errors.add(path, "must be an array of numbers");
    return std::nullopt;
  }
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      errors.add(path + "[" + std::to_string(i) + "]", "must be a number");
      return std::nullopt;
    }
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

std::optional<Matrix> read_matrix(const json& v, const std::string& path, Errors& errors) {
  if (!v.is_array() || v.empty()) {
    errors.add(path, "must be a non-empty array of rows");
    return std::nullopt;
  }
  const std::size_t rows = v.size();
  Matrix out;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = read_vector(v[r], path + "[" + std::to_string(r) + "]", errors);
    if (!row) return std::nullopt;
    if (r == 0) out.resize(static_cast<Eigen::Index>(rows), row->size());
    if (row->size() != out.cols()) {
      errors.add(path, "rows have different lengths");
      return std::nullopt;
    }
    out.row(static_cast<Eigen::Index>(r)) = row->transpose();
  }
  return out;
}

std::vector<double> read_numbers_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<double> out;
  std::string line;
  std::size_t cols = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double x;
    std::size_t c = 0;
    while (ls >> x) {
      out.push_back(x);
      ++c;
    }
    if (!ls.eof()) throw std::runtime_error("non-numeric entry in " + file.string());
    if (c == 0) continue;
    if (rows > 0 && c != cols) throw std::runtime_error("ragged rows in " + file.string());
    cols = c;
    ++rows;
  }
  return out;
}

struct MethodFields {
  std::optional<std::string> method, jacobian, jacobian_source, initial_state;
  std::optional<double> h_fd, tau, total_time;
  std::optional<std::uint64_t> iterations, burn_in, n_steps;
  std::optional<Vector> initial_values;
  std::optional<double> delta, dd_guard;
  std::optional<std::uint64_t> max_fpi;
  std::optional<std::string> init_mode, force_source, scheme;
  // Where each value came from, for error messages.
  std::map<std::string, std::string> origin;
};

void read_method_fields(const json& obj, const std::string& path, MethodFields& f,
                        Errors& errors) {
  const std::string p = path.empty() ? "" : path + ".";
  auto note = [&](const char* key, bool present) {
    if (present) f.origin[key] = p + key;
  };
  if (auto v = read_string(obj, "method", p, errors)) f.method = v, note("method", true);
  if (auto v = read_string(obj, "jacobian", p, errors)) f.jacobian = v, note("jacobian", true);
  if (auto v = read_string(obj, "jacobian_source", p, errors)) {
    f.jacobian_source = v, note("jacobian_source", true);
  }
  if (auto v = read_string(obj, "initial_state", p, errors)) {
    f.initial_state = v, note("initial_state", true);
  }
  if (auto v = read_number(obj, "h_fd", p, errors)) f.h_fd = v, note("h_fd", true);
  if (auto v = read_number(obj, "tau", p, errors)) f.tau = v, note("tau", true);
  if (auto v = read_number(obj, "total_time", p, errors)) f.total_time = v, note("total_time", true);
  if (auto v = read_count(obj, "iterations", p, errors)) f.iterations = v, note("iterations", true);
  if (auto v = read_count(obj, "burn_in", p, errors)) f.burn_in = v, note("burn_in", true);
  // derived; accepted so resolved configs can be read back, and checked
  if (auto v = read_count(obj, "n_steps", p, errors)) f.n_steps = v, note("n_steps", true);
  if (obj.contains("initial_values")) {
    if (auto v = read_vector(obj.at("initial_values"), p + "initial_values", errors)) {
      f.initial_values = v;
      note("initial_values", true);
    }
  }
  if (obj.contains("solver")) {
    const json& s = obj.at("solver");
    const std::string sp = p + "solver.";
    if (!s.is_object()) {
      errors.add(p + "solver", "must be an object");
    } else {
      check_keys(s, kSolverKeys, p + "solver", errors);
      if (auto v = read_number(s, "delta", sp, errors)) f.delta = v, f.origin["delta"] = sp + "delta";
      if (auto v = read_count(s, "max_fpi", sp, errors)) {
        f.max_fpi = v, f.origin["max_fpi"] = sp + "max_fpi";
      }
      if (auto v = read_number(s, "dd_guard", sp, errors)) {
        f.dd_guard = v, f.origin["dd_guard"] = sp + "dd_guard";
      }
      if (auto v = read_string(s, "init_mode", sp, errors)) {
        f.init_mode = v, f.origin["init_mode"] = sp + "init_mode";
      }
      if (auto v = read_string(s, "scheme", sp, errors)) {
        f.scheme = v, f.origin["scheme"] = sp + "scheme";
      }
      if (auto v = read_string(s, "force_source", sp, errors)) {
        f.force_source = v, f.origin["force_source"] = sp + "force_source";
      }
    }
  }
}

template <typename T>
void overlay(std::optional<T>& base, const std::optional<T>& over) {
  if (over) base = over;
}

MethodFields merge_fields(const MethodFields& defaults, const MethodFields& over) {
  MethodFields m = defaults;
  overlay(m.method, over.method);
  overlay(m.jacobian, over.jacobian);
  overlay(m.jacobian_source, over.jacobian_source);
  overlay(m.initial_state, over.initial_state);
  overlay(m.h_fd, over.h_fd);
  overlay(m.tau, over.tau);
  overlay(m.total_time, over.total_time);
  overlay(m.iterations, over.iterations);
  overlay(m.burn_in, over.burn_in);
  overlay(m.n_steps, over.n_steps);
  overlay(m.initial_values, over.initial_values);
  overlay(m.delta, over.delta);
  overlay(m.dd_guard, over.dd_guard);
  overlay(m.max_fpi, over.max_fpi);
  overlay(m.init_mode, over.init_mode);
  overlay(m.force_source, over.force_source);
  overlay(m.scheme, over.scheme);
  for (const auto& [k, v] : over.origin) m.origin[k] = v;
  return m;
}

std::string origin_of(const MethodFields& f, const std::string& key, const std::string& fallback) {
  const auto it = f.origin.find(key);
  return it != f.origin.end() ? it->second : fallback + "." + key;
}

SamplerConfig build_sampler(const MethodFields& f, const std::string& path,
                            std::size_t dimension, Errors& errors) {
  SamplerConfig c;
  auto where = [&](const std::string& key) { return origin_of(f, key, path); };

  if (!f.method) {
    errors.add(path + ".method", "required (hmc-leapfrog or chmc)");
  } else {
    try {
      c.method = parse_method(*f.method);
    } catch (const std::invalid_argument& e) {
      errors.add(where("method"), e.what());
    }
  }
  if (f.jacobian) {
    try {
      c.jacobian.order = parse_jacobian_order(*f.jacobian);
    } catch (const std::invalid_argument& e) {
      errors.add(where("jacobian"), e.what());
    }
  }
  if (f.jacobian_source) {
    if (*f.jacobian_source == "analytic") {
      c.jacobian.source = DerivativeSource::analytic;
    } else if (*f.jacobian_source == "finite-difference") {
      c.jacobian.source = DerivativeSource::finite_difference;
    } else {
      errors.add(where("jacobian_source"), "must be analytic or finite-difference");
    }
  }
  if (f.h_fd) {
    c.jacobian.h_fd = *f.h_fd;
    if (!(*f.h_fd > 0.0)) errors.add(where("h_fd"), "must be positive");
  }
  if (f.tau) c.tau = *f.tau;
  if (f.total_time) c.total_time = *f.total_time;
  bool times_ok = true;
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) {
    errors.add(where("tau"), "must be positive");
    times_ok = false;
  }
  if (!(c.total_time > 0.0) || !std::isfinite(c.total_time)) {
    errors.add(where("total_time"), "must be positive");
    times_ok = false;
  }
  if (times_ok) {
    const double ratio = c.total_time / c.tau;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
      errors.add(where("total_time"),
                 "n_steps not integral (total_time / tau = " + format_double(ratio) + ")");
    } else if (f.n_steps && static_cast<double>(*f.n_steps) != std::round(ratio)) {
      errors.add(where("n_steps"), "does not equal total_time / tau = " + format_double(ratio));
    }
  }
  if (f.iterations) c.iterations = static_cast<std::size_t>(*f.iterations);
  if (f.burn_in) c.burn_in = static_cast<std::size_t>(*f.burn_in);
  if (c.iterations == 0) errors.add(where("iterations"), "must be at least 1");
  if (c.burn_in > c.iterations) errors.add(where("burn_in"), "must not exceed iterations");

  if (f.initial_state) {
    try {
      c.initial_state = parse_initial_state_mode(*f.initial_state);
    } catch (const std::invalid_argument& e) {
      errors.add(where("initial_state"), e.what());
    }
  }
  if (c.initial_state == InitialStateMode::explicit_vector) {
    if (!f.initial_values) {
      errors.add(path + ".initial_values", "required when initial_state is explicit");
    } else if (static_cast<std::size_t>(f.initial_values->size()) != dimension) {
      errors.add(where("initial_values"), "length must equal the target dimension " +
                                              std::to_string(dimension));
    } else {
      c.initial_values = *f.initial_values;
    }
  }

  if (f.delta) c.solver.delta = *f.delta;
  if (f.dd_guard) c.solver.dd_guard = *f.dd_guard;
  if (f.max_fpi) c.solver.max_fpi = static_cast<int>(std::min<std::uint64_t>(*f.max_fpi, 1000000));
  if (!(c.solver.delta > 0.0)) errors.add(where("delta"), "must be positive");
  if (!(c.solver.dd_guard > 0.0)) errors.add(where("dd_guard"), "must be positive");
  if (c.solver.max_fpi < 1) errors.add(where("max_fpi"), "must be at least 1");
  if (f.init_mode) {
    try {
      c.solver.init_mode = parse_init_mode(*f.init_mode);
    } catch (const std::invalid_argument& e) {
      errors.add(where("init_mode"), e.what());
    }
  }
  if (f.scheme) {
    try {
      c.solver.scheme = parse_fpi_scheme(*f.scheme);
    } catch (const std::invalid_argument& e) {
      errors.add(where("scheme"), e.what());
    }
  }
  if (f.force_source) {
    if (*f.force_source == "auto") {
      c.solver.force_source = ForceSource::automatic;
    } else if (*f.force_source == "generic") {
      c.solver.force_source = ForceSource::generic;
    } else {
      errors.add(where("force_source"), "must be auto or generic");
    }
  }
  if (c.method == Method::hmc_leapfrog && c.jacobian.order != JacobianOrder::j0 && f.jacobian) {
    errors.add(where("jacobian"), "only applies to chmc");
  }
  c.solver.tau = c.tau;
  return c;
}

void parse_target(const json& root, const fs::path& base_dir, TargetSpec& t, Errors& errors) {
  if (!root.contains("target")) {
    errors.add("target", "required");
    return;
  }
  const json& tj = root.at("target");
  if (!tj.is_object()) {
    errors.add("target", "must be an object");
    return;
  }
  check_keys(tj, {"kind", "dimension", "mean", "covariance"}, "target", errors);
  const auto kind = read_string(tj, "kind", "target.", errors);
  if (!kind) {
    if (!tj.contains("kind")) errors.add("target.kind", "required (quartic or gaussian)");
  } else if (*kind == "quartic") {
    t.kind = TargetKind::quartic;
  } else if (*kind == "gaussian") {
    t.kind = TargetKind::gaussian;
  } else {
    errors.add("target.kind", "must be quartic or gaussian");
  }
  const auto dim = read_count(tj, "dimension", "target.", errors);
  if (!dim) {
    if (!tj.contains("dimension")) errors.add("target.dimension", "required");
    t.dimension = 0;
  } else if (*dim < 1) {
    errors.add("target.dimension", "must be at least 1");
    t.dimension = 0;
  } else {
    t.dimension = static_cast<std::size_t>(*dim);
  }

  if (t.kind == TargetKind::quartic) {
    if (tj.contains("mean") || tj.contains("covariance")) {
      errors.add("target", "quartic target takes no mean or covariance");
    }
    return;
  }
  if (t.dimension == 0) return;
  const auto d = static_cast<Eigen::Index>(t.dimension);

  t.mean = Vector::Zero(d);
  t.mean_source = "zeros";
  if (tj.contains("mean")) {
    const json& m = tj.at("mean");
    if (m.is_string()) {
      const fs::path file = base_dir / m.get<std::string>();
      try {
        const auto values = read_numbers_file(file);
        if (values.size() != t.dimension) {
          errors.add("target.mean", file.string() + " holds " + std::to_string(values.size()) +
                                        " values, expected " + std::to_string(t.dimension));
        } else {
          t.mean = Eigen::Map<const Vector>(values.data(), d);
          t.mean_source = file.string();
        }
      } catch (const std::exception& e) {
        errors.add("target.mean", e.what());
      }
    } else if (auto v = read_vector(m, "target.mean", errors)) {
      if (v->size() != d) {
        errors.add("target.mean", "length must equal dimension");
      } else {
        t.mean = *v;
        t.mean_source = "inline";
      }
    }
  }

  t.covariance = Matrix::Identity(d, d);
  t.covariance_source = "identity";
  if (tj.contains("covariance")) {
    const json& c = tj.at("covariance");
    std::optional<Matrix> cov;
    if (c.is_string()) {
      const fs::path file = base_dir / c.get<std::string>();
      try {
        const auto values = read_numbers_file(file);
        if (values.size() != t.dimension * t.dimension) {
          errors.add("target.covariance", file.string() + " must hold a " +
                                              std::to_string(t.dimension) + "x" +
                                              std::to_string(t.dimension) + " matrix");
        } else {
          cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(values.data(), d, d);
          t.covariance_source = file.string();
        }
      } catch (const std::exception& e) {
        errors.add("target.covariance", e.what());
      }
    } else {
      cov = read_matrix(c, "target.covariance", errors);
      if (cov) t.covariance_source = "inline";
    }
    if (cov) {
      if (cov->rows() != d || cov->cols() != d) {
        errors.add("target.covariance", "must be dimension x dimension");
      } else if (!cov->isApprox(cov->transpose(), 1e-12)) {
        errors.add("target.covariance", "must be symmetric");
      } else if (Eigen::LLT<Matrix>(*cov).info() != Eigen::Success) {
        errors.add("target.covariance", "must be positive definite");
      } else {
        t.covariance = *cov;
      }
    }
  }
}

void parse_mass(const json& root, std::size_t dimension, MassSpec& m, Errors& errors) {
  if (!root.contains("mass")) return;
  const json& mj = root.at("mass");
  if (mj.is_string() && mj.get<std::string>() == "identity") return;
  if (!mj.is_object()) {
    errors.add("mass", "must be \"identity\" or an object");
    return;
  }
  check_keys(mj, {"kind", "entries", "matrix"}, "mass", errors);
  const auto kind = read_string(mj, "kind", "mass.", errors);
  if (!kind || *kind == "identity") return;
  const auto d = static_cast<Eigen::Index>(dimension);
  if (*kind == "diagonal") {
    if (!mj.contains("entries")) {
      errors.add("mass.entries", "required for a diagonal mass");
      return;
    }
    if (auto v = read_vector(mj.at("entries"), "mass.entries", errors)) {
      if (v->size() != d) {
        errors.add("mass.entries", "length must equal the target dimension");
      } else if ((v->array() <= 0.0).any()) {
        errors.add("mass.entries", "entries must be strictly positive");
      } else {
        m.kind = MassMatrix::Kind::diagonal;
        m.diagonal = *v;
      }
    }
  } else if (*kind == "dense") {
    if (!mj.contains("matrix")) {
      errors.add("mass.matrix", "required for a dense mass");
      return;
    }
    if (auto mat = read_matrix(mj.at("matrix"), "mass.matrix", errors)) {
      if (mat->rows() != d || mat->cols() != d) {
        errors.add("mass.matrix", "must be dimension x dimension");
      } else if (!mat->isApprox(mat->transpose(), 1e-12) ||
                 Eigen::LLT<Matrix>(*mat).info() != Eigen::Success) {
        errors.add("mass.matrix", "must be symmetric positive definite");
      } else {
        m.kind = MassMatrix::Kind::dense;
        m.dense = *mat;
      }
    }
  } else {
    errors.add("mass.kind", "must be identity, diagonal or dense");
  }
}

}  // namespace

ValidationResult validate_spec(const std::string& raw_text, const fs::path& base_dir) {
  ValidationResult result;
  Errors errors;
  json root;
  try {
    root = json::parse(raw_text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    result.errors.push_back(std::string("config: parse error: ") + e.what());
    return result;
  }
  if (!root.is_object()) {
    result.errors.push_back("config: top level must be an object");
    return result;
  }
  check_keys(root, kTopKeys, "", errors);

  ExperimentSpec spec;
  parse_target(root, base_dir, spec.target, errors);
  parse_mass(root, spec.target.dimension, spec.mass, errors);

  if (auto v = read_count(root, "chains", "", errors)) {
    spec.chains = static_cast<std::size_t>(*v);
    if (spec.chains < 1) errors.add("chains", "must be at least 1");
  }
  if (auto v = read_count(root, "seed", "", errors)) spec.seed = *v;
  if (auto v = read_count(root, "record_stride", "", errors)) {
    spec.record_stride = static_cast<std::size_t>(*v);
    if (spec.record_stride < 1) errors.add("record_stride", "must be at least 1");
  }
  if (auto v = read_string(root, "output_dir", "", errors)) {
    if (v->empty()) {
      errors.add("output_dir", "must not be empty");
    } else {
      fs::path out(*v);
      spec.output_dir = out.is_absolute() || base_dir.empty() ? out : base_dir / out;
    }
  } else if (!root.contains("output_dir")) {
    errors.add("output_dir", "required");
  }
  if (auto v = read_string(root, "covariance_mode", "", errors)) {
    if (*v == "auto") {
      spec.covariance = CovarianceSetting::automatic;
    } else if (*v == "full") {
      spec.covariance = CovarianceSetting::full;
      if (spec.target.dimension > kFullCovarianceLimit) {
        errors.add("covariance_mode", "full covariance is not supported above d = " +
                                          std::to_string(kFullCovarianceLimit));
      }
    } else if (*v == "diagonal") {
      spec.covariance = CovarianceSetting::diagonal;
    } else {
      errors.add("covariance_mode", "must be auto, full or diagonal");
    }
  }

  MethodFields defaults;
  if (root.contains("defaults")) {
    const json& dj = root.at("defaults");
    if (!dj.is_object()) {
      errors.add("defaults", "must be an object");
    } else {
      check_keys(dj, kMethodKeys, "defaults", errors);
      if (dj.contains("name")) errors.add("defaults.name", "names belong to individual methods");
      read_method_fields(dj, "defaults", defaults, errors);
    }
  }

  if (!root.contains("methods")) {
    errors.add("methods", "required");
  } else if (!root.at("methods").is_array() || root.at("methods").empty()) {
    errors.add("methods", "must be a non-empty array");
  } else {
    std::set<std::string> names;
    std::set<std::string> files;
    const json& ms = root.at("methods");
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const std::string path = "methods[" + std::to_string(i) + "]";
      const json& mj = ms[i];
      if (!mj.is_object()) {
        errors.add(path, "must be an object");
        continue;
      }
      check_keys(mj, kMethodKeys, path, errors);
      MethodFields own;
      read_method_fields(mj, path, own, errors);
      MethodSpec method;
      if (auto name = read_string(mj, "name", path + ".", errors)) {
        method.name = *name;
      } else if (!mj.contains("name")) {
        errors.add(path + ".name", "required");
      }
      if (method.name.empty() && mj.contains("name")) errors.add(path + ".name", "must not be empty");
      if (!method.name.empty()) {
        if (!names.insert(method.name).second) errors.add(path + ".name", "duplicate method name");
        if (!files.insert(trace_file_name(method.name, 0)).second) {
          errors.add(path + ".name", "collides with another method after sanitising for file names");
        }
      }
      const MethodFields merged = merge_fields(defaults, own);
      method.sampler = build_sampler(merged, path, spec.target.dimension, errors);
      method.sampler.seed = spec.seed;
      method.sampler.record_stride = spec.record_stride;
      spec.methods.push_back(std::move(method));
    }
  }

  result.errors = std::move(errors.list());
  if (result.errors.empty()) result.spec = std::move(spec);
  return result;
}

std::string spec_to_json(const ExperimentSpec& spec, int indent) {
  json j;
  json target;
  target["kind"] = spec.target.kind == TargetKind::quartic ? "quartic" : "gaussian";
  target["dimension"] = spec.target.dimension;
  if (spec.target.kind == TargetKind::gaussian) {
    target["mean_source"] = spec.target.mean_source;
    target["covariance_source"] = spec.target.covariance_source;
    target["mean"] = std::vector<double>(spec.target.mean.data(),
                                         spec.target.mean.data() + spec.target.mean.size());
  }
  j["target"] = target;
  switch (spec.mass.kind) {
    case MassMatrix::Kind::identity:
      j["mass"] = {{"kind", "identity"}};
      break;
    case MassMatrix::Kind::diagonal:
      j["mass"] = {{"kind", "diagonal"},
                   {"entries", std::vector<double>(spec.mass.diagonal.data(),
                                                   spec.mass.diagonal.data() +
                                                       spec.mass.diagonal.size())}};
      break;
    case MassMatrix::Kind::dense:
      j["mass"] = {{"kind", "dense"}};
      break;
  }
  j["chains"] = spec.chains;
  j["seed"] = spec.seed;
  j["record_stride"] = spec.record_stride;
  j["output_dir"] = spec.output_dir.string();
  j["covariance_mode"] = std::string(to_string(spec.resolved_covariance_mode()));
  json methods = json::array();
  for (const auto& m : spec.methods) {
    const SamplerConfig& c = m.sampler;
    json mj;
    mj["name"] = m.name;
    mj["method"] = std::string(to_string(c.method));
    mj["tau"] = c.tau;
    mj["total_time"] = c.total_time;
    mj["n_steps"] = c.n_steps();
    mj["iterations"] = c.iterations;
    mj["burn_in"] = c.burn_in;
    mj["initial_state"] = std::string(to_string(c.initial_state));
    if (c.method == Method::chmc) {
      mj["jacobian"] = std::string(to_string(c.jacobian.order));
      mj["jacobian_source"] =
          c.jacobian.source == DerivativeSource::analytic ? "analytic" : "finite-difference";
      mj["h_fd"] = c.jacobian.h_fd;
      mj["solver"] = {{"delta", c.solver.delta},
                      {"max_fpi", c.solver.max_fpi},
                      {"dd_guard", c.solver.dd_guard},
                      {"init_mode", std::string(to_string(c.solver.init_mode))},
                      {"scheme", std::string(to_string(c.solver.scheme))},
                      {"force_source",
                       c.solver.force_source == ForceSource::automatic ? "auto" : "generic"}};
    }
    methods.push_back(mj);
  }
  j["methods"] = methods;
  return j.dump(indent);
}

std::unique_ptr<Potential> make_target(const TargetSpec& spec) {
  if (spec.kind == TargetKind::quartic) {
    return std::make_unique<QuarticGeneralizedGaussian>(spec.dimension);
  }
  return std::make_unique<MultivariateGaussian>(spec.mean, spec.covariance);
}

MassMatrix make_mass(const MassSpec& spec, std::size_t dimension) {
  switch (spec.kind) {
    case MassMatrix::Kind::identity:
      return MassMatrix::identity(dimension);
    case MassMatrix::Kind::diagonal:
      return MassMatrix::diagonal(spec.diagonal);
    case MassMatrix::Kind::dense:
      return MassMatrix::dense(spec.dense);
  }
  return MassMatrix::identity(dimension);
}

TargetCovariance target_covariance(const TargetSpec& spec) {
  if (spec.kind == TargetKind::quartic) {
    return TargetCovariance::scaled_identity(quartic_target_variance());
  }
  return TargetCovariance::dense(spec.covariance);
}

// ---------------------------------------------------------------------------
// Running

namespace {

const char* kSummaryHeader =
    "method,chain,d,tau,T,delta,mean_acceptance_pct,mean_energy_error,mean_force_evals,"
    "wall_time_s\n";
const char* kTraceHeader = "iteration,cov_error,delta_H,alpha,accepted,force_evals\n";

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string summary_row(const std::string& method, const std::string& chain, std::size_t d,
                        const SamplerConfig& c, double acceptance, double energy, double force,
                        double wall) {
  const std::string delta = c.method == Method::chmc ? format_double(c.solver.delta) : "";
  return fmt::format("{},{},{},{},{},{},{},{},{},{}\n", method, chain, d, format_double(c.tau),
                     format_double(c.total_time), delta, format_double(acceptance),
                     format_double(energy), format_double(force), format_double(wall));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (ec || !fs::is_directory(spec.output_dir)) {
    throw std::runtime_error("cannot create output directory " + spec.output_dir.string());
  }

  const std::unique_ptr<Potential> target = make_target(spec.target);
  const MassMatrix mass = make_mass(spec.mass, spec.target.dimension);
  const TargetCovariance target_cov = target_covariance(spec.target);
  const CovarianceMode cov_mode = spec.resolved_covariance_mode();

  struct Task {
    std::size_t method;
    std::size_t chain;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < spec.methods.size(); ++m) {
    for (std::size_t c = 0; c < spec.chains; ++c) tasks.push_back({m, c});
  }

  ExperimentResult result;
  result.chains.resize(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const MethodSpec& ms = spec.methods[tasks[t].method];
      const std::size_t chain = tasks[t].chain;
      try {
        const fs::path trace_path = spec.output_dir / trace_file_name(ms.name, chain);
        std::ofstream trace(trace_path, std::ios::binary);
        if (!trace) throw std::runtime_error("cannot write " + trace_path.string());
        trace << kTraceHeader;
        std::string line;
        ChainOptions copts;
        copts.chain_index = chain;
        copts.covariance_mode = cov_mode;
        copts.target_covariance = target_cov;
        auto sink = [&](const ChainEvent& e) {
          line = fmt::format("{},{},{},{},{},{}\n", e.iteration, format_double(e.cov_error),
                             format_double(e.outcome->delta_h), format_double(e.outcome->alpha),
                             e.outcome->accepted ? 1 : 0, e.outcome->force_evaluations);
          trace << line;
        };
        ChainResult cr = run_chain(ms.sampler, *target, mass, copts, sink);
        trace.close();
        if (!trace) throw std::runtime_error("error writing " + trace_path.string());
        result.chains[t] = ChainRecord{ms.name, chain, ms.sampler, std::move(cr.summary)};
        if (options.log != nullptr) {
          std::lock_guard<std::mutex> lock(log_mutex);
          const ChainSummary& s = result.chains[t].summary;
          *options.log << fmt::format("{:>12} chain {:>3}: accept {:7.3f}%  |dH| {:.3e}  "
                                      "F/step {:.3f}  {:.2f}s\n",
                                      ms.name, chain, s.mean_acceptance, s.mean_energy_error,
                                      s.mean_force_evals, s.wall_time_seconds);
        }
      } catch (const std::exception& e) {
        failures[t] = e.what();
      }
    }
  };

  std::size_t workers = options.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, tasks.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw std::runtime_error(f);
  }

  // summary.csv
  const fs::path summary_path = spec.output_dir / "summary.csv";
  std::ofstream summary(summary_path, std::ios::binary);
  if (!summary) throw std::runtime_error("cannot write " + summary_path.string());
  summary << kSummaryHeader;
  const std::size_t d = spec.target.dimension;
  for (const auto& rec : result.chains) {
    const ChainSummary& s = rec.summary;
    summary << summary_row(rec.method, std::to_string(rec.chain), d, rec.sampler,
                           s.mean_acceptance, s.mean_energy_error, s.mean_force_evals,
                           s.wall_time_seconds);
  }
  if (spec.chains > 1) {
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      double acc = 0, energy = 0, force = 0, wall = 0;
      for (std::size_t c = 0; c < spec.chains; ++c) {
        const ChainSummary& s = result.chains[m * spec.chains + c].summary;
        acc += s.mean_acceptance;
        energy += s.mean_energy_error;
        force += s.mean_force_evals;
        wall += s.wall_time_seconds;
      }
      const double n = static_cast<double>(spec.chains);
      summary << summary_row(spec.methods[m].name, "all", d, spec.methods[m].sampler, acc / n,
                             energy / n, force / n, wall);
    }
  }
  summary.close();
  if (!summary) throw std::runtime_error("error writing " + summary_path.string());

  // meta.json
  json meta;
  meta["schema_version"] = kMetaSchemaVersion;
  meta["library_version"] = library_version();
  meta["created_utc"] = utc_timestamp();
  meta["seed"] = spec.seed;
  meta["config"] = json::parse(spec_to_json(spec, -1));
  meta["covariance_mode"] = std::string(to_string(cov_mode));
  meta["covariance_error"] = cov_mode == CovarianceMode::full
                                 ? "l-infinity over all entries of the sample covariance"
                                 : "l-infinity over the diagonal of the sample covariance";
  meta["energy_error_convention"] = "mean |H(q*,p*) - H(q0,p0)| over all proposals";
  meta["acceptance_convention"] = "100 * accepted proposals / iterations";
  meta["force_eval_convention"] =
      "force vectors per integrator step; DMM counts 1 initial guess + 1 per fixed-point iteration";
  meta["simd_backend"] = std::string(simd::backend_name(simd::active_backend()));
  meta["workers"] = workers;
  json files = json::array();
  for (const auto& rec : result.chains) files.push_back(trace_file_name(rec.method, rec.chain));
  meta["trace_files"] = files;
  const fs::path meta_path = spec.output_dir / "meta.json";
  std::ofstream mf(meta_path, std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write " + meta_path.string());
  mf << meta.dump(2) << "\n";
  if (!mf) throw std::runtime_error("error writing " + meta_path.string());

  return result;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

void print_table(const fs::path& output_dir, std::ostream& out) {
  print_table(std::vector<fs::path>{output_dir}, out);
}

void print_table(const std::vector<fs::path>& output_dirs, std::ostream& out) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& dir : output_dirs) {
    auto part = read_csv(dir / "summary.csv");
    if (part.empty()) throw std::runtime_error((dir / "summary.csv").string() + " is empty");
    if (!rows.empty() && part.front() != rows.front()) {
      throw std::runtime_error((dir / "summary.csv").string() + " has a different header");
    }
    rows.insert(rows.end(), part.begin() + (rows.empty() ? 0 : 1), part.end());
  }
  if (rows.empty()) throw std::runtime_error("no summary.csv given");
  const auto& header = rows.front();
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("summary.csv lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_method = col("method"), c_chain = col("chain"), c_d = col("d");
  const std::size_t c_acc = col("mean_acceptance_pct"), c_err = col("mean_energy_error");
  const std::size_t c_force = col("mean_force_evals"), c_wall = col("wall_time_s");

  // Prefer the aggregate rows; fall back to single-chain rows.
  bool has_aggregate = false;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == header.size() && rows[r][c_chain] == "all") has_aggregate = true;
  }
  std::vector<std::string> methods;
  std::vector<std::string> dims;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> cells;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) throw std::runtime_error("malformed row in summary.csv");
    if (has_aggregate != (row[c_chain] == "all")) continue;
    if (std::find(methods.begin(), methods.end(), row[c_method]) == methods.end()) {
      methods.push_back(row[c_method]);
    }
    if (std::find(dims.begin(), dims.end(), row[c_d]) == dims.end()) dims.push_back(row[c_d]);
    cells[{row[c_method], row[c_d]}] = row;
  }

  std::sort(dims.begin(), dims.end(), [](const std::string& a, const std::string& b) {
    return std::stoull(a) < std::stoull(b);
  });

  struct Metric {
    const char* label;
    std::size_t column;
    const char* format;
  };
  const Metric metrics[] = {{"Mean Accept. (%)", c_acc, "{:.2f}"},
                            {"Mean Energy Error", c_err, "{:.3e}"},
                            {"Mean Force Eval.", c_force, "{:.3f}"},
                            {"Running Time (s)", c_wall, "{:.3f}"}};
  std::size_t width = 14;
  for (const auto& m : methods) width = std::max(width, m.size() + 2);

  out << fmt::format("{:<20}{:>8}", "", "d");
  for (const auto& m : methods) out << fmt::format("{:>{}}", m, width);
  out << "\n";
  for (const auto& metric : metrics) {
    for (std::size_t i = 0; i < dims.size(); ++i) {
      out << fmt::format("{:<20}{:>8}", i == 0 ? metric.label : "", dims[i]);
      for (const auto& m : methods) {
        const auto it = cells.find({m, dims[i]});
        std::string cell = "-";
        if (it != cells.end() && !it->second[metric.column].empty()) {
          const double v = std::stod(it->second[metric.column]);
          cell = fmt::format(fmt::runtime(metric.format), v);
        }
        out << fmt::format("{:>{}}", cell, width);
      }
      out << "\n";
    }
  }
}

}  // namespace chmc
