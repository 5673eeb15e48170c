#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "kostpm/io.hpp"

using namespace kostpm;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kostpm_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 40 - 20);
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
}

TEST(EigenvaluesCsv, HeaderAndRows) {
  ComplexVector v(2);
  v << Complex(0, 1), Complex(-0.5, 0);
  EXPECT_EQ(io::eigenvalues_csv(v, "galerkin"), "re,im,source\n0,1,galerkin\n-0.5,0,galerkin\n");
}

TEST(Snapshots, CsvRoundTripIsBitExact) {
  const SnapshotSet snap =
      generate_snapshots(make_duffing(DuffingParams{}), BoxDomain::cube(2, -1.1, 1.1), 200, 0.1, 77);
  const auto csv = scratch("snap.csv");
  io::write_text(csv, io::snapshots_csv(snap));
  const std::string text = io::read_text(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), "x1,x2,y1,y2");
  EXPECT_EQ(count_lines(text), 201u);
  const SnapshotSet back = io::read_snapshots(csv, io::snapshots_metadata(snap));
  EXPECT_EQ(back.X, snap.X);
  EXPECT_EQ(back.Y, snap.Y);
  EXPECT_EQ(back.dt, snap.dt);
  EXPECT_EQ(back.seed, snap.seed);
  EXPECT_TRUE(back.domain == snap.domain);
}

TEST(Snapshots, MalformedCsvIsIoError) {
  const SnapshotSet snap =
      generate_snapshots(make_duffing(DuffingParams{}), BoxDomain::cube(2, -1.1, 1.1), 5, 0.1, 77);
  const auto csv = scratch("bad.csv");
  io::write_text(csv, "x1,x2,y1,y2\n0.1,0.2,0.3\n");
  EXPECT_THROW(io::read_snapshots(csv, io::snapshots_metadata(snap)), IoError);
  io::write_text(csv, "x1,x2,y1,y2\n0.1,abc,0.3,0.4\n");
  EXPECT_THROW(io::read_snapshots(csv, io::snapshots_metadata(snap)), IoError);
  EXPECT_THROW(io::read_text(scratch("missing.csv")), IoError);
}

TEST(GridCsv, SchemaAndOrdering) {
  const GridAxes axes{linspace(0, 1, 2), linspace(0, 2, 3)};
  const GridEvaluation g = evaluate_on_grid([](const Vector& x) { return x[0] + 10 * x[1]; }, axes, false);
  EXPECT_EQ(io::grid_csv(g), "x1,x2,density\n0,0,0\n0,1,10\n0,2,20\n1,0,1\n1,1,11\n1,2,21\n");
  const auto meta = io::grid_metadata(g, "test", 1.5);
  EXPECT_EQ(meta["dt"], 1.5);
  EXPECT_EQ(meta["normalized"], false);
  EXPECT_EQ(meta["axes"][1].size(), 3u);
}

TEST(ModelJson, ContainsContractFields) {
  const KoopmanModel model =
      build_galerkin_model(make_harmonic_oscillator(), BasisSet(BoxDomain::cube(2, -1.5, 1.5), 2));
  const auto doc = io::model_json(model);
  for (const char* key : {"basis", "K", "eigenvalues", "V", "H", "provenance"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["basis"]["size"], 6);
  EXPECT_EQ(doc["K"].size(), 6u);
  EXPECT_EQ(doc["V"].size(), 6u);
  EXPECT_EQ(doc["H"].size(), 2u);
  EXPECT_EQ(doc["provenance"]["kind"], "galerkin");
  EXPECT_EQ(doc["eigenvalues"][0].size(), 2u);
}

TEST(PolylogJson, TermsAndRegion) {
  const PolyLogPdf z = log_gaussian(GaussianPdf::isotropic(Eigen::Vector2d(0.4, 0.6), 0.1));
  const auto doc = io::polylog_json(z);
  EXPECT_EQ(doc["order"], 2);
  EXPECT_EQ(doc["terms"].size(), 6u);
  EXPECT_EQ(doc["terms"][3]["exponents"], (std::vector<int>{2, 0}));
  EXPECT_NEAR(doc["terms"][3]["coefficient"].get<double>(), -50.0, 1e-10);
  EXPECT_TRUE(doc["floor"].is_null());
}

TEST(WriteText, UnwritablePathIsIoError) {
  EXPECT_THROW(io::write_text("/proc/kostpm_no_such_dir/file.txt", "x"), IoError);
}
