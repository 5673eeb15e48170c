#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kostpm/basis.hpp"
#include "kostpm/dynamics.hpp"
#include "kostpm/error.hpp"
#include "kostpm/io.hpp"
#include "kostpm/koopman.hpp"
#include "kostpm/reduce.hpp"
#include "kostpm/updf.hpp"
#include "kostpm/validate.hpp"

namespace kostpm::experiment {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EdmdSettings {
  std::size_t samples = 10000;
  double dt = 0.1;
  std::uint64_t seed = 42;
};

struct ReductionSettings {
  int order = 4;
  std::size_t samples = 0;
  std::uint64_t seed = 42;
  double level_cut = 25.0;
  double holdout_fraction = 0.2;
};

struct MonteCarloSettings {
  std::size_t samples = 100000;
  std::uint64_t seed = 42;
  double tolerance = 1e-10;
  std::optional<Vector> bandwidth;  // unset: Silverman
  std::size_t export_samples = 5000;
};

/// Fully resolved experiment description. Defaults reproduce the Duffing
/// study: eps = 0.01, order 9, prior N((0.4, 0.6), 0.1^2 I), 500 s.
struct ExperimentConfig {
  std::string system = "duffing";
  DuffingParams duffing;
  int order = 9;
  BoxDomain box = BoxDomain::cube(2, -1.1, 1.1);
  int quadrature_points = 0;  // 0: 2 * order + 2
  std::string source = "galerkin";
  EdmdSettings edmd;
  Vector prior_mean = Eigen::Vector2d(0.4, 0.6);
  Matrix prior_covariance = 0.01 * Matrix::Identity(2, 2);
  std::vector<double> schedule{500.0};
  ReductionSettings reduction;
  BoxDomain grid_box = BoxDomain::cube(2, -1.5, 1.5);
  std::vector<std::size_t> grid_points{151, 151};
  bool normalize = true;
  Vector x0 = Eigen::Vector2d(0.4, 0.6);
  std::vector<double> times = linspace(0.0, 500.0, 101);
  MonteCarloSettings mc;
  std::string output = "run";

  [[nodiscard]] GridAxes axes() const {
    GridAxes out;
    for (std::size_t d = 0; d < grid_points.size(); ++d) {
      const auto dd = static_cast<Eigen::Index>(d);
      out.push_back(linspace(grid_box.lower()[dd], grid_box.upper()[dd], grid_points[d]));
    }
    return out;
  }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) {
    throw ConfigError(where + ": expected an object");
  }
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) {
    return;
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline Vector read_vector(const json& obj, const char* key, const Vector& fallback, const std::string& where) {
  std::vector<double> v(fallback.data(), fallback.data() + fallback.size());
  read(obj, key, v, where);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json vec(const Vector& v) { return io::to_std(v); }

}  // namespace detail

/// Parses and validates a JSON config. Unknown keys and invariant violations
/// raise ConfigError.
inline ExperimentConfig parse_config(const json& root) {
  using detail::read;
  using detail::reject_unknown;
  ExperimentConfig cfg;
  reject_unknown(root, {"system", "basis", "koopman", "prior", "schedule", "reduction", "grid", "state",
                        "monte_carlo", "output"},
                 "config");
  try {
    if (root.contains("system")) {
      const json& s = root["system"];
      reject_unknown(s, {"type", "mass", "stiffness", "unit_scale", "epsilon"}, "system");
      read(s, "type", cfg.system, "system");
      read(s, "mass", cfg.duffing.mass, "system");
      read(s, "stiffness", cfg.duffing.stiffness, "system");
      read(s, "unit_scale", cfg.duffing.unit_scale, "system");
      read(s, "epsilon", cfg.duffing.epsilon, "system");
      if (cfg.system == "harmonic") {
        if (s.contains("epsilon") && cfg.duffing.epsilon != 0.0) {
          throw ConfigError("system: the harmonic oscillator has epsilon = 0");
        }
        cfg.duffing.epsilon = 0.0;
      } else if (cfg.system != "duffing") {
        throw ConfigError("system.type: expected 'duffing' or 'harmonic'");
      }
      cfg.duffing.validate();
    }
    if (root.contains("basis")) {
      const json& b = root["basis"];
      reject_unknown(b, {"order", "lower", "upper", "quadrature_points"}, "basis");
      read(b, "order", cfg.order, "basis");
      read(b, "quadrature_points", cfg.quadrature_points, "basis");
      cfg.box = BoxDomain(detail::read_vector(b, "lower", cfg.box.lower(), "basis"),
                          detail::read_vector(b, "upper", cfg.box.upper(), "basis"));
    }
    if (root.contains("koopman")) {
      const json& k = root["koopman"];
      reject_unknown(k, {"source", "edmd"}, "koopman");
      read(k, "source", cfg.source, "koopman");
      if (k.contains("edmd")) {
        const json& e = k["edmd"];
        reject_unknown(e, {"samples", "dt", "seed"}, "koopman.edmd");
        read(e, "samples", cfg.edmd.samples, "koopman.edmd");
        read(e, "dt", cfg.edmd.dt, "koopman.edmd");
        read(e, "seed", cfg.edmd.seed, "koopman.edmd");
      }
    }
    if (root.contains("prior")) {
      const json& p = root["prior"];
      reject_unknown(p, {"mean", "covariance", "sigma"}, "prior");
      cfg.prior_mean = detail::read_vector(p, "mean", cfg.prior_mean, "prior");
      const auto n = cfg.prior_mean.size();
      if (p.contains("sigma") && p.contains("covariance")) {
        throw ConfigError("prior: give either sigma or covariance, not both");
      }
      if (p.contains("sigma")) {
        double sigma = 0.0;
        read(p, "sigma", sigma, "prior");
        cfg.prior_covariance = sigma * sigma * Matrix::Identity(n, n);
      } else if (p.contains("covariance")) {
        std::vector<std::vector<double>> rows;
        read(p, "covariance", rows, "prior");
        if (static_cast<Eigen::Index>(rows.size()) != n) {
          throw ConfigError("prior.covariance: expected " + std::to_string(n) + " rows");
        }
        cfg.prior_covariance.resize(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
          if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n) {
            throw ConfigError("prior.covariance: rows must have " + std::to_string(n) + " entries");
          }
          for (Eigen::Index c = 0; c < n; ++c) {
            cfg.prior_covariance(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
          }
        }
      } else if (cfg.prior_covariance.rows() != n) {
        throw ConfigError("prior: covariance (or sigma) required for a non-default dimension");
      }
    }
    read(root, "schedule", cfg.schedule, "config");
    if (root.contains("reduction")) {
      const json& r = root["reduction"];
      reject_unknown(r, {"order", "samples", "seed", "level_cut", "holdout_fraction"}, "reduction");
      read(r, "order", cfg.reduction.order, "reduction");
      read(r, "samples", cfg.reduction.samples, "reduction");
      read(r, "seed", cfg.reduction.seed, "reduction");
      read(r, "level_cut", cfg.reduction.level_cut, "reduction");
      read(r, "holdout_fraction", cfg.reduction.holdout_fraction, "reduction");
    }
    if (root.contains("grid")) {
      const json& g = root["grid"];
      reject_unknown(g, {"lower", "upper", "points", "normalize"}, "grid");
      cfg.grid_box = BoxDomain(detail::read_vector(g, "lower", cfg.grid_box.lower(), "grid"),
                               detail::read_vector(g, "upper", cfg.grid_box.upper(), "grid"));
      read(g, "points", cfg.grid_points, "grid");
      read(g, "normalize", cfg.normalize, "grid");
    }
    if (root.contains("state")) {
      const json& s = root["state"];
      reject_unknown(s, {"x0", "times"}, "state");
      cfg.x0 = detail::read_vector(s, "x0", cfg.x0, "state");
      if (s.contains("times")) {
        const json& t = s["times"];
        if (t.is_array()) {
          read(s, "times", cfg.times, "state");
        } else {
          reject_unknown(t, {"start", "stop", "count"}, "state.times");
          double start = 0.0;
          double stop = 500.0;
          std::size_t count = 101;
          read(t, "start", start, "state.times");
          read(t, "stop", stop, "state.times");
          read(t, "count", count, "state.times");
          if (count < 2) {
            throw ConfigError("state.times.count: need at least 2 points");
          }
          cfg.times = linspace(start, stop, count);
        }
      }
    }
    if (root.contains("monte_carlo")) {
      const json& m = root["monte_carlo"];
      reject_unknown(m, {"samples", "seed", "tolerance", "bandwidth", "export_samples"}, "monte_carlo");
      read(m, "samples", cfg.mc.samples, "monte_carlo");
      read(m, "seed", cfg.mc.seed, "monte_carlo");
      read(m, "tolerance", cfg.mc.tolerance, "monte_carlo");
      read(m, "export_samples", cfg.mc.export_samples, "monte_carlo");
      if (m.contains("bandwidth")) {
        const json& bw = m["bandwidth"];
        if (bw.is_string()) {
          if (bw.get<std::string>() != "silverman") {
            throw ConfigError("monte_carlo.bandwidth: expected 'silverman' or a per-dimension array");
          }
        } else {
          cfg.mc.bandwidth = detail::read_vector(m, "bandwidth", Vector(), "monte_carlo");
        }
      }
    }
    read(root, "output", cfg.output, "config");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// Cross-field checks shared by every command.
inline void validate_config(const ExperimentConfig& cfg) {
  const std::size_t n = 2;
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (cfg.order < 0) fail("basis.order: must be >= 0");
  if (cfg.box.dimension() != n) fail("basis: box must be two-dimensional for the oscillator systems");
  if (cfg.quadrature_points < 0) fail("basis.quadrature_points: must be >= 0");
  if (cfg.source != "galerkin" && cfg.source != "edmd") fail("koopman.source: expected 'galerkin' or 'edmd'");
  if (cfg.edmd.dt <= 0.0) fail("koopman.edmd.dt: must be > 0");
  if (cfg.prior_mean.size() != static_cast<Eigen::Index>(n)) fail("prior.mean: must have 2 entries");
  try {
    GaussianPdf check(cfg.prior_mean, cfg.prior_covariance);
    (void)check;
  } catch (const InvalidArgument& e) {
    fail(std::string("prior: ") + e.what());
  }
  if (cfg.schedule.empty()) fail("schedule: need at least one leg");
  if (cfg.grid_box.dimension() != n || cfg.grid_points.size() != n) fail("grid: must be two-dimensional");
  for (auto p : cfg.grid_points) {
    if (p < 2) fail("grid.points: need at least 2 points per axis");
  }
  if (cfg.x0.size() != static_cast<Eigen::Index>(n)) fail("state.x0: must have 2 entries");
  for (std::size_t i = 0; i < cfg.times.size(); ++i) {
    if (cfg.times[i] < 0.0 || (i > 0 && cfg.times[i] < cfg.times[i - 1])) {
      fail("state.times: must be non-negative and ascending");
    }
  }
  if (cfg.mc.samples == 0) fail("monte_carlo.samples: must be positive");
  if (cfg.mc.tolerance <= 0.0) fail("monte_carlo.tolerance: must be > 0");
  if (cfg.mc.bandwidth && (cfg.mc.bandwidth->size() != static_cast<Eigen::Index>(n) ||
                           !(cfg.mc.bandwidth->array() > 0.0).all())) {
    fail("monte_carlo.bandwidth: need two positive entries");
  }
  if (cfg.reduction.order < 1) fail("reduction.order: must be >= 1");
  if (cfg.reduction.level_cut <= 0.0) fail("reduction.level_cut: must be > 0");
  if (cfg.reduction.holdout_fraction < 0.0 || cfg.reduction.holdout_fraction >= 1.0) {
    fail("reduction.holdout_fraction: must be in [0, 1)");
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = parse_config(root);
  validate_config(cfg);
  return cfg;
}

/// Every resolved value, echoed next to the outputs.
inline json resolved_config_json(const ExperimentConfig& cfg) {
  json cov = io::matrix_rows(cfg.prior_covariance);
  json bandwidth = cfg.mc.bandwidth ? detail::vec(*cfg.mc.bandwidth) : json("silverman");
  return {
      {"system",
       {{"type", cfg.system},
        {"mass", cfg.duffing.mass},
        {"stiffness", cfg.duffing.stiffness},
        {"unit_scale", cfg.duffing.unit_scale},
        {"epsilon", cfg.duffing.epsilon}}},
      {"basis",
       {{"order", cfg.order},
        {"lower", detail::vec(cfg.box.lower())},
        {"upper", detail::vec(cfg.box.upper())},
        {"quadrature_points", cfg.quadrature_points == 0 ? 2 * cfg.order + 2 : cfg.quadrature_points}}},
      {"koopman",
       {{"source", cfg.source},
        {"edmd", {{"samples", cfg.edmd.samples}, {"dt", cfg.edmd.dt}, {"seed", cfg.edmd.seed}}}}},
      {"prior", {{"mean", detail::vec(cfg.prior_mean)}, {"covariance", cov}}},
      {"schedule", cfg.schedule},
      {"reduction",
       {{"order", cfg.reduction.order},
        {"samples", cfg.reduction.samples},
        {"seed", cfg.reduction.seed},
        {"level_cut", cfg.reduction.level_cut},
        {"holdout_fraction", cfg.reduction.holdout_fraction}}},
      {"grid",
       {{"lower", detail::vec(cfg.grid_box.lower())},
        {"upper", detail::vec(cfg.grid_box.upper())},
        {"points", cfg.grid_points},
        {"normalize", cfg.normalize}}},
      {"state", {{"x0", detail::vec(cfg.x0)}, {"times", cfg.times}}},
      {"monte_carlo",
       {{"samples", cfg.mc.samples},
        {"seed", cfg.mc.seed},
        {"tolerance", cfg.mc.tolerance},
        {"bandwidth", bandwidth},
        {"export_samples", cfg.mc.export_samples}}},
      {"output", cfg.output}};
}

/// Files produced by a command, written only after the command succeeds.
struct RunOutput {
  std::map<std::string, std::string> files;

  void add_json(const std::string& name, const json& doc) { files[name] = doc.dump(2) + "\n"; }
  void add_grid(const std::string& stem, const GridEvaluation& grid, const std::string& provenance, double dt) {
    files[stem + ".csv"] = io::grid_csv(grid);
    add_json(stem + ".json", io::grid_metadata(grid, provenance, dt));
  }

  void write(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    for (const auto& [name, text] : files) {
      io::write_text(dir / name, text);
    }
  }
};

inline SystemModel make_system(const ExperimentConfig& cfg) { return make_duffing(cfg.duffing); }

inline BasisSet make_basis(const ExperimentConfig& cfg) { return {cfg.box, cfg.order}; }

inline SnapshotSet make_snapshots(const ExperimentConfig& cfg) {
  const BasisSet basis = make_basis(cfg);
  return generate_snapshots(make_system(cfg), cfg.box, cfg.edmd.samples, cfg.edmd.dt, cfg.edmd.seed, basis.size());
}

inline KoopmanModel make_model(const ExperimentConfig& cfg, const std::string& source) {
  const SystemModel sys = make_system(cfg);
  const BasisSet basis = make_basis(cfg);
  if (source == "edmd") {
    return build_edmd_model(make_snapshots(cfg), basis);
  }
  const Quadrature quad(basis.domain(), cfg.quadrature_points == 0 ? 2 * cfg.order + 2 : cfg.quadrature_points);
  Matrix K = galerkin_koopman(sys, basis, quad);
  Matrix H = observable_matrix_galerkin(identity_observable(), sys.dimension, basis, quad);
  return {basis, std::move(K), std::move(H), Provenance{}};
}

inline RunOutput run_eigen(const ExperimentConfig& cfg) {
  const KoopmanModel galerkin = make_model(cfg, "galerkin");
  const KoopmanModel edmd = make_model(cfg, "edmd");
  const EigenvalueComparison cmp = eigenvalue_report(galerkin.eigenvalues(), edmd.eigenvalues());
  RunOutput out;
  out.files["eigenvalues_galerkin.csv"] = io::eigenvalues_csv(galerkin.eigenvalues(), "galerkin");
  out.files["eigenvalues_edmd.csv"] = io::eigenvalues_csv(edmd.eigenvalues(), "edmd");
  out.add_json("eigen_report.json", {{"basis_size", galerkin.basis().size()},
                                     {"order", cfg.order},
                                     {"edmd_snapshots", cfg.edmd.samples},
                                     {"edmd_dt", cfg.edmd.dt},
                                     {"max_abs_real_galerkin", cmp.max_real_first},
                                     {"max_abs_real_edmd", cmp.max_real_second},
                                     {"pairing_total_distance", cmp.total_distance},
                                     {"pairing_max_distance", cmp.max_distance}});
  out.add_json("model_galerkin.json", io::model_json(galerkin));
  out.add_json("model_edmd.json", io::model_json(edmd));
  return out;
}

inline RunOutput run_propagate_state(const ExperimentConfig& cfg) {
  const SystemModel sys = make_system(cfg);
  const KoopmanModel galerkin = make_model(cfg, "galerkin");
  const KoopmanModel edmd = make_model(cfg, "edmd");
  const auto err_g = state_error_series(galerkin, sys, cfg.x0, cfg.times);
  const auto err_e = state_error_series(edmd, sys, cfg.x0, cfg.times);
  std::string csv = "t,err_galerkin,err_edmd\n";
  for (std::size_t i = 0; i < cfg.times.size(); ++i) {
    csv += io::format_double(cfg.times[i]) + "," + io::format_double(err_g[i]) + "," + io::format_double(err_e[i]) +
           "\n";
  }
  RunOutput out;
  out.files["state_error.csv"] = csv;
  out.add_json("state_report.json", {{"norm", "euclidean"},
                                     {"x0", detail::vec(cfg.x0)},
                                     {"final_time", cfg.times.empty() ? 0.0 : cfg.times.back()},
                                     {"final_error_galerkin", err_g.empty() ? 0.0 : err_g.back()},
                                     {"final_error_edmd", err_e.empty() ? 0.0 : err_e.back()}});
  return out;
}

/// Analytic push-forward of the Gaussian prior under the linear oscillator.
inline GaussianPdf rotated_prior(const ExperimentConfig& cfg, double t) {
  const Eigen::Matrix2d A = harmonic_flow_matrix(cfg.duffing, t);
  Matrix cov = A * cfg.prior_covariance * A.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return {A * cfg.prior_mean, cov};
}

inline RunOutput run_propagate_pdf(const ExperimentConfig& cfg) {
  if (cfg.schedule.size() != 1) {
    throw ConfigError("propagate-pdf: schedule must have exactly one leg");
  }
  const double tf = cfg.schedule.front();
  const SystemModel sys = make_system(cfg);
  const KoopmanModel model = make_model(cfg, cfg.source);
  const GaussianPdf prior(cfg.prior_mean, cfg.prior_covariance);
  const GridAxes axes = cfg.axes();
  const Matrix pts = grid_points(axes);
  const ScalarField prior_field = [&prior](const Vector& x) { return prior(x); };

  BatchFlowResult diag;
  Vector ko_values = propagate_inverse_batch(model, prior_field, tf, pts, &diag);
  const double raw_mass = grid_integral(axes, ko_values);
  const GridEvaluation ko = grid_from_values(axes, ko_values, FieldKind::density, cfg.normalize);
  const GridEvaluation prior_grid = evaluate_on_grid(prior_field, axes, cfg.normalize);

  const McEnsemble ens = mc_propagate(prior, sys, tf, cfg.mc.samples, cfg.mc.seed, cfg.mc.tolerance);
  const Vector bandwidth = cfg.mc.bandwidth ? *cfg.mc.bandwidth : silverman_bandwidth(ens);
  const GridEvaluation mc = density_estimate(ens, axes, bandwidth);

  RunOutput out;
  out.add_grid("pdf_prior", prior_grid, "prior", 0.0);
  out.add_grid("pdf_ko", ko, "ko_inverse_map_" + model.provenance().name(), tf);
  out.add_grid("pdf_mc", mc, "monte_carlo_kde", tf);
  std::string samples = "x1,x2\n";
  for (Eigen::Index m = 0; m < std::min<Eigen::Index>(ens.samples.cols(), cfg.mc.export_samples); ++m) {
    samples += io::format_double(ens.samples(0, m)) + "," + io::format_double(ens.samples(1, m)) + "\n";
  }
  out.files["mc_samples.csv"] = samples;

  json report = {{"dt", tf},
                 {"source", model.provenance().name()},
                 {"raw_mass_ko", raw_mass},
                 {"max_imaginary_leak", diag.max_imaginary_leak},
                 {"grid_points_outside_box", diag.outside_domain},
                 {"mc_samples", cfg.mc.samples},
                 {"mc_seed", cfg.mc.seed},
                 {"bandwidth", detail::vec(bandwidth)}};
  if (cfg.normalize) {
    report["l2_ko_vs_mc"] = grid_l2(ko, mc);
    report["max_pointwise_ko_vs_mc"] = grid_max_pointwise(ko, mc);
    report["l2_ko_vs_prior"] = grid_l2(ko, prior_grid);
  }
  if (cfg.system == "harmonic") {
    const GaussianPdf exact = rotated_prior(cfg, tf);
    const GridEvaluation analytic =
        evaluate_on_grid([&exact](const Vector& x) { return exact(x); }, axes, cfg.normalize);
    out.add_grid("pdf_analytic", analytic, "analytic_rotation", tf);
    if (cfg.normalize) {
      report["l2_ko_vs_analytic"] = grid_l2(ko, analytic);
      report["l2_mc_vs_analytic"] = grid_l2(mc, analytic);
    }
  }
  out.add_json("comparison.json", report);
  return out;
}

/// Log-density grids at every leg boundary of a multi-leg schedule, with
/// least-squares reduction between legs.
struct RecursiveResult {
  std::vector<GridEvaluation> boundaries;  // prior first, then after each leg
  std::vector<ReductionResult> reductions;
  std::vector<double> times;
};

inline RecursiveResult propagate_recursive(const ExperimentConfig& cfg, const KoopmanModel& model) {
  const GaussianPdf prior(cfg.prior_mean, cfg.prior_covariance);
  const GridAxes axes = cfg.axes();
  const Matrix pts = grid_points(axes);
  RecursiveResult out;
  PolyLogPdf current = log_gaussian(prior);
  double t = 0.0;
  out.times.push_back(t);
  out.boundaries.push_back(evaluate_on_grid(current, axes, true, FieldKind::log_density));
  for (std::size_t leg = 0; leg < cfg.schedule.size(); ++leg) {
    const double dt = cfg.schedule[leg];
    const PolyLogPdf zeta = current;
    const Vector log_values = propagate_inverse_batch(model, zeta, dt, pts);
    t += dt;
    out.times.push_back(t);
    out.boundaries.push_back(grid_from_values(axes, log_values, FieldKind::log_density, true));
    if (leg + 1 == cfg.schedule.size()) {
      break;
    }
    const SupportRegion support = find_support_region(axes, log_values, cfg.reduction.level_cut);
    ReductionConfig rc;
    rc.order = cfg.reduction.order;
    rc.samples = cfg.reduction.samples;
    rc.seed = cfg.reduction.seed + leg;
    rc.region = support.region;
    rc.level = support.level;
    rc.holdout_fraction = cfg.reduction.holdout_fraction;
    const ScalarField propagated = [&model, &zeta, dt](const Vector& x) {
      return zeta(inverse_flow(model, x, dt).value);
    };
    out.reductions.push_back(reduce_logpdf(propagated, rc, model.basis().order()));
    current = out.reductions.back().pdf;
  }
  return out;
}

inline RunOutput run_recursive(const ExperimentConfig& cfg) {
  if (cfg.schedule.size() < 2) {
    throw ConfigError("recursive: schedule must have at least two legs");
  }
  const KoopmanModel model = make_model(cfg, cfg.source);
  const RecursiveResult rec = propagate_recursive(cfg, model);
  RunOutput out;
  json legs = json::array();
  for (std::size_t k = 0; k < rec.boundaries.size(); ++k) {
    const std::string stem = "pdf_boundary_" + std::to_string(k);
    out.add_grid(stem, rec.boundaries[k], k == 0 ? "prior" : "ko_recursive", rec.times[k]);
    legs.push_back({{"boundary", k}, {"time", rec.times[k]}, {"grid", stem + ".csv"}});
  }
  for (std::size_t k = 0; k < rec.reductions.size(); ++k) {
    out.add_json("reduction_leg_" + std::to_string(k + 1) + ".json", io::reduction_json(rec.reductions[k]));
  }
  out.add_json("recursive_report.json", {{"boundaries", legs}, {"source", model.provenance().name()}});
  return out;
}

inline RunOutput run_snapshots(const ExperimentConfig& cfg) {
  const SnapshotSet snap = make_snapshots(cfg);
  RunOutput out;
  out.files["snapshots.csv"] = io::snapshots_csv(snap);
  out.add_json("snapshots.json", io::snapshots_metadata(snap));
  return out;
}

}  // namespace kostpm::experiment
