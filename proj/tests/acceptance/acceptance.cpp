// Acceptance run: one PASS/FAIL line per primary criterion, nonzero exit if
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "kostpm/experiment.hpp"

using namespace kostpm;
using namespace kostpm::experiment;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome r;
  try {
    r = check();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  failures += r.pass ? 0 : 1;
  std::printf("%s %s: %s [%.1f s]\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double min_distance(const ComplexVector& values, Complex target) {
  double best = INFINITY;
  for (auto v : values) best = std::min(best, std::abs(v - target));
  return best;
}

const BoxDomain kBox = BoxDomain::cube(2, -1.1, 1.1);
const GaussianPdf kPrior(Eigen::Vector2d(0.4, 0.6), 0.01 * Matrix::Identity(2, 2));

Outcome galerkin_spectrum() {
  const auto t0 = std::chrono::steady_clock::now();
  const KoopmanModel m9 = build_galerkin_model(make_duffing(DuffingParams{}), BasisSet(kBox, 9));
  const double max_re = m9.eigenvalues().real().cwiseAbs().maxCoeff();
  // linear part of the Duffing field (eps = 0) at order 1
  DuffingParams linear;
  linear.epsilon = 0.0;
  const KoopmanModel m1 = build_galerkin_model(make_duffing(linear), BasisSet(kBox, 1));
  double linear_dist = 0.0;
  for (const Complex target : {Complex(0, 0), Complex(0, 1), Complex(0, -1)}) {
    linear_dist = std::max(linear_dist, min_distance(m1.eigenvalues(), target));
  }
  const KoopmanModel d1 = build_galerkin_model(make_duffing(DuffingParams{}), BasisSet(kBox, 1));
  const double secs = seconds_since(t0);
  const bool pass = m9.eigenvalues().size() == 55 && max_re < 1e-6 && linear_dist < 1e-9 && secs < 10.0;
  return {pass, "eta=" + std::to_string(m9.eigenvalues().size()) + " max|Re|=" + fmt(max_re) +
                    " linear {0,+i,-i} dist=" + fmt(linear_dist) + " (eps=0.01 order-1 pair at +/-" +
                    std::to_string(d1.eigenvalues().imag().cwiseAbs().maxCoeff()) + "i)"};
}

Outcome edmd_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const SystemModel sys = make_duffing(DuffingParams{});
  const BasisSet basis(kBox, 3);
  const Matrix Kg = galerkin_koopman(sys, basis, Quadrature::for_basis(basis));
  std::vector<double> errors;
  std::string detail = "||K_G - log(K~_M)/dt||_F:";
  for (std::size_t M : {100ul, 1000ul, 10000ul, 100000ul}) {
    const SnapshotSet snap = generate_snapshots(sys, kBox, M, 0.1, 42, basis.size());
    errors.push_back((Kg - discrete_to_continuous(edmd_koopman(snap, basis).matrix, 0.1)).norm());
    detail += " M=" + std::to_string(M) + ":" + fmt(errors.back());
  }
  bool strictly = true;
  for (std::size_t i = 1; i < errors.size(); ++i) strictly = strictly && errors[i] < errors[i - 1];
  const double ratio = errors.front() / errors.back();
  const double secs = seconds_since(t0);
  detail += " ratio=" + fmt(ratio) + (strictly ? "" : " (not strictly decreasing)");
  return {strictly && ratio >= 10.0 && secs < 60.0, detail};
}

Outcome linear_flow_exactness() {
  const KoopmanModel model =
      build_galerkin_model(make_harmonic_oscillator(), BasisSet(BoxDomain::cube(2, -1.5, 1.5), 3));
  const GridAxes axes{linspace(-1.5, 1.5, 101), linspace(-1.5, 1.5, 101)};
  const Matrix pts = grid_points(axes);
  const ScalarField psi = [](const Vector& x) { return kPrior(x); };
  double worst = 0.0;
  std::string detail = "relL2:";
  for (double t : {std::numbers::pi / 4, std::numbers::pi / 2, std::numbers::pi}) {
    const GridEvaluation ko = grid_from_values(axes, propagate_inverse_batch(model, psi, t, pts), FieldKind::density, true);
    const Eigen::Matrix2d A = harmonic_flow_matrix(DuffingParams{1, 1, 1, 0.0}, t);
    Matrix cov = A * kPrior.covariance() * A.transpose();
    const GaussianPdf exact(A * kPrior.mean(), 0.5 * (cov + cov.transpose()));
    const GridEvaluation ref = evaluate_on_grid([&exact](const Vector& x) { return exact(x); }, axes, true);
    const double e = grid_l2(ko, ref);
    worst = std::max(worst, e);
    detail += " " + fmt(e);
  }
  return {worst < 1e-4, detail};
}

Outcome round_trip() {
  const KoopmanModel model = build_galerkin_model(make_duffing(DuffingParams{}), BasisSet(kBox, 9));
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.1, 1.1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector x = Eigen::Vector2d(u(rng), u(rng));
    worst = std::max(worst, (inverse_flow(model, forward_flow(model, x, 1.0).value, 1.0).value - x).norm());
  }
  return {worst < 1e-4, "max ||W(M(x)) - x|| over 100 points = " + fmt(worst)};
}

Outcome duffing_headline() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;  // defaults: order 9, 500 s, N_mc = 1e5 seed 42, 151x151 on [-1.5,1.5]^2
  const RunOutput out = run_propagate_pdf(cfg);
  const auto report = json::parse(out.files.at("comparison.json"));
  const double l2 = report["l2_ko_vs_mc"].get<double>();
  const double mx = report["max_pointwise_ko_vs_mc"].get<double>();
  const double secs = seconds_since(t0);
  return {l2 < 0.15 && mx < 0.2 && secs < 300.0,
          "relL2=" + fmt(l2) + " max-pointwise=" + fmt(mx) + " N_mc=" + std::to_string(cfg.mc.samples)};
}

Outcome error_ordering() {
  ExperimentConfig cfg;
  cfg.times = {500.0};
  const SystemModel sys = make_system(cfg);
  const double eg = state_error_series(make_model(cfg, "galerkin"), sys, cfg.x0, cfg.times).back();
  const double ee = state_error_series(make_model(cfg, "edmd"), sys, cfg.x0, cfg.times).back();
  return {eg <= ee, "t=500 galerkin=" + fmt(eg) + " edmd=" + fmt(ee) + " (M=" + std::to_string(cfg.edmd.samples) +
                        ", seed " + std::to_string(cfg.edmd.seed) + ")"};
}

Outcome recursivity() {
  ExperimentConfig single;
  single.schedule = {500.0};
  ExperimentConfig split = single;
  split.schedule = {250.0, 250.0};
  const KoopmanModel model = make_model(single, "galerkin");
  const GridEvaluation one = propagate_recursive(single, model).boundaries.back();
  const GridEvaluation two = propagate_recursive(split, model).boundaries.back();
  const double duffing = grid_l2(two, one);

  ExperimentConfig h1 = parse_config(json::parse(R"({"system": {"type": "harmonic"},
    "basis": {"order": 3, "lower": [-1.5, -1.5], "upper": [1.5, 1.5]}, "reduction": {"order": 2},
    "grid": {"points": [101, 101]}, "schedule": [500]})"));
  ExperimentConfig h2 = h1;
  h2.schedule = {250.0, 250.0};
  const KoopmanModel hm = make_model(h1, "galerkin");
  const double harmonic =
      grid_l2(propagate_recursive(h2, hm).boundaries.back(), propagate_recursive(h1, hm).boundaries.back());
  return {duffing < 0.2 && harmonic < 1e-4,
          "duffing 250+250 vs 500 relL2=" + fmt(duffing) + " harmonic (order 2) relL2=" + fmt(harmonic)};
}

Outcome route_agreement() {
  const KoopmanModel model = build_galerkin_model(make_duffing(DuffingParams{}), BasisSet(kBox, 9));
  const ScalarField psi = [](const Vector& x) { return kPrior(x); };
  const auto row = pdf_observable_row(psi, model.basis(), Quadrature::for_basis(model.basis()));
  const GridAxes axes{linspace(-1.5, 1.5, 151), linspace(-1.5, 1.5, 151)};
  const Matrix pts = grid_points(axes);
  const Vector inverse0 = propagate_inverse_batch(model, psi, 0.0, pts);
  double excess = 0.0;
  double gap = 0.0;
  for (Eigen::Index c = 0; c < pts.cols(); ++c) {
    const Vector x = pts.col(c);
    const double obs = propagate_pdf_observable(model, row, 0.0, x).value;
    const double rec_err = std::abs(row.dot(model.basis().values(x)) - kPrior(x));
    const double route = std::abs(obs - inverse0[c]);
    gap = std::max(gap, route);
    excess = std::max(excess, route - rec_err);
  }
  const double peak = kPrior(kPrior.mean());
  const PolyLogPdf zeta = log_gaussian(kPrior);
  const GridEvaluation a =
      grid_from_values(axes, propagate_inverse_batch(model, psi, 500.0, pts), FieldKind::density, true);
  const GridEvaluation b =
      grid_from_values(axes, propagate_inverse_batch(model, zeta, 500.0, pts), FieldKind::log_density, true);
  const double shape = (a.values - b.values).cwiseAbs().maxCoeff() / a.values.maxCoeff();
  return {excess <= 1e-10 * peak && shape < 1e-10,
          "dt=0 max route gap=" + fmt(gap / peak) + " of peak, excess over H_p error=" + fmt(excess / peak) +
              "; psi vs exp(zeta) at 500 s=" + fmt(shape)};
}

int run_filtered(const std::string& binary, const std::string& filter) {
  const std::string cmd = binary + " --gtest_brief=1 --gtest_filter='" + filter + "' > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome invariant_suites() {
  const std::vector<std::pair<std::string, std::string>> suites = {
      {KOSTPM_TEST_BASIS,
       "InnerProduct.BasisIsOrthonormal:EvalBasis.DerivativesMatchCentralDifferences:EvalBasis.AffineInvariance:"
       "Quadrature.*:GaussLegendre.*:EnumerateIndices.*"},
      {KOSTPM_TEST_DYNAMICS,
       "SystemModel.*:Integrate.EnergyConservedOver500Seconds:Integrate.ForwardThenBackward:Integrate.Deterministic:"
       "GenerateSnapshots.*"},
      {KOSTPM_TEST_LINALG, "Eigendecompose.LeftResidualAndInverse:MatrixLog.RecoversStableGenerator"},
      {KOSTPM_TEST_KOOPMAN, "KoopmanInvariants.*:FlowMap.*"},
      {KOSTPM_TEST_UPDF,
       "UpdfInvariants.*:PropagatePdfInverse.*:PropagateLogpdfInverse.ShapeEquivalenceAndArgmax:"
       "EvaluateOnGrid.LogShiftInvariance"},
      {KOSTPM_TEST_REDUCE,
       "ReduceLogpdf.IdempotentOnModelClass:ReduceLogpdf.ReduceTwiceIsReduceOnce:ReduceLogpdf.SeededBitIdentical:"
       "ReduceLogpdf.HoldoutErrorNonIncreasingInOrder:FitCoefficients.NormalEquationsAgree"},
      {KOSTPM_TEST_VALIDATE,
       "McPropagate.DeterministicAcrossWorkerCounts:McPropagate.DuffingSamplesStayInEnergyBox:"
       "DensityEstimate.OracleSelfConsistencyAtInitialTime"},
      {KOSTPM_TEST_EXPERIMENT,
       "Cli.OutputsAreByteIdenticalAcrossRuns:Cli.FlagsOverrideAndAreEchoed:Cli.MalformedConfigExitsWithConfigCodeAndNoOutputs:"
       "Cli.NumericFailureExitCode:Cli.IoFailureExitCode"},
  };
  std::string failed;
  for (const auto& [binary, filter] : suites) {
    if (run_filtered(binary, filter) != 0) {
      failed += " " + binary.substr(binary.find_last_of('/') + 1);
    }
  }
  return {failed.empty(), failed.empty() ? std::to_string(suites.size()) + " module suites green"
                                         : "failing suites:" + failed};
}

}  // namespace

int main() {
  report("galerkin-spectrum", galerkin_spectrum);
  report("edmd-converges-to-galerkin", edmd_convergence);
  report("linear-flow-exactness", linear_flow_exactness);
  report("round-trip-inversion", round_trip);
  report("duffing-headline", duffing_headline);
  report("error-ordering", error_ordering);
  report("recursivity", recursivity);
  report("route-agreement", route_agreement);
  report("invariant-suites", invariant_suites);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
