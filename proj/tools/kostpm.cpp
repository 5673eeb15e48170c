// Command-line driver: one subcommand per experiment.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kostpm/experiment.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> mc_samples;
  std::optional<int> order;
};

int run(const std::string& command, const Options& opt) {
  using namespace kostpm::experiment;
  try {
    ExperimentConfig cfg = opt.config.empty() ? ExperimentConfig{} : load_config(opt.config);
    if (opt.seed) {
      cfg.edmd.seed = *opt.seed;
      cfg.mc.seed = *opt.seed;
      cfg.reduction.seed = *opt.seed;
    }
    if (opt.mc_samples) cfg.mc.samples = *opt.mc_samples;
    if (opt.order) cfg.order = *opt.order;
    if (!opt.out.empty()) cfg.output = opt.out;
    validate_config(cfg);

    RunOutput result;
    if (command == "eigen") {
      result = run_eigen(cfg);
    } else if (command == "propagate-state") {
      result = run_propagate_state(cfg);
    } else if (command == "propagate-pdf") {
      result = run_propagate_pdf(cfg);
    } else if (command == "recursive") {
      result = run_recursive(cfg);
    } else {
      result = run_snapshots(cfg);
    }
    result.add_json("resolved_config.json", resolved_config_json(cfg));
    result.write(cfg.output);
    std::cout << command << ": wrote " << result.files.size() << " files to " << cfg.output << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const kostpm::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const kostpm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const kostpm::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman-operator uncertainty propagation"};
  app.require_subcommand(1);
  Options opt;
  const char* names[][2] = {
      {"eigen", "Galerkin and EDMD spectra"},
      {"propagate-state", "state error of both generators against the reference integrator"},
      {"propagate-pdf", "single-leg density propagation with Monte Carlo comparison"},
      {"recursive", "multi-leg propagation with polynomial reduction between legs"},
      {"snapshots", "generate EDMD snapshot pairs"},
  };
  for (const auto& [name, help] : names) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "seed for snapshots, Monte Carlo and reduction");
    sub->add_option("--mc-samples", opt.mc_samples, "Monte Carlo sample count");
    sub->add_option("--order", opt.order, "basis total degree");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    return run(sub->get_name(), opt);
  }
  return kConfig;
}
