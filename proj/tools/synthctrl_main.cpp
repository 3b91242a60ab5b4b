#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "synthctrl/config.hpp"
#include "synthctrl/harness.hpp"
#include "synthctrl/pipeline.hpp"
#include "synthctrl/report.hpp"

namespace {

using namespace synthctrl;

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    if (!content.empty() && content.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << content;
}

std::string error_record(const Error& e) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(1);
  w.key("error");
  w.begin_object();
  w.key("code");
  w.value(e.code_name());
  w.key("message");
  w.value(e.what());
  w.end_object();
  w.end_object();
  return std::move(w).str();
}

struct Cli {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<std::string> out;
};

int run(const Cli& cli) {
  RunConfig cfg = load_run_config(cli.config_path);
  // precedence: config file < SEED env var < --seed flag
  if (const char* env = std::getenv("SEED")) {
    try {
      cfg.study.seed = std::stoull(env);
    } catch (...) {
      throw Error(ErrorCode::ConfigError, "SEED env var is not an integer");
    }
  }
  if (cli.seed) cfg.study.seed = *cli.seed;
  cfg.dgp.seed = cfg.study.seed;
  if (cli.format) {
    if (*cli.format != "json" && *cli.format != "csv")
      throw Error(ErrorCode::ConfigError, "--format must be json or csv");
    cfg.format = *cli.format;
  }
  if (cli.out) cfg.output = *cli.out;
  cfg.study.validate();

  if (cli.command == "coverage") {
    const CoverageReport report = coverage_study(cfg.dgp, cfg.study);
    write_output(cfg.output, coverage_report_json(report, cfg.dgp));
    return 0;
  }

  if (cfg.input.empty())
    throw Error(ErrorCode::ConfigError, "config key 'input' is required");
  if (cfg.schema.features.empty())
    throw Error(ErrorCode::ConfigError, "config key 'features' is required");
  const PanelDataset data = load_panel(cfg.input, cfg.schema);
  const StudyFit fit = fit_study(data, cfg.study);

  if (cli.command == "estimate") {
    write_output(cfg.output, cfg.format == "csv" ? weights_report_csv(fit)
                                                 : weights_report_json(fit));
    return 0;
  }
  const UncertaintyModel um = prepare_uncertainty(fit, cfg.study);
  if (cli.command == "intervals") {
    const StudyIntervals si = intervals_study(fit, um, cfg.study);
    write_output(cfg.output, cfg.format == "csv"
                                 ? intervals_report_csv(si)
                                 : intervals_report_json(si, cfg.study));
    return 0;
  }
  if (cli.command == "plotdata") {
    const auto rows = plotdata_study(fit, um, cfg.study);
    write_output(cfg.output,
                 cfg.format == "csv" ? plotdata_csv(rows) : plotdata_json(rows));
    return 0;
  }
  throw Error(ErrorCode::ConfigError, "unknown command '" + cli.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Synthetic-control estimation and prediction intervals for panels "
      "with staggered treatment adoption"};
  app.require_subcommand(1);

  Cli cli;
  for (const char* name : {"estimate", "intervals", "coverage", "plotdata"}) {
    auto* sub = app.add_subcommand(
        name, std::string("run the ") + name + " pipeline");
    sub->add_option("--config", cli.config_path, "run configuration file")
        ->required();
    std::uint64_t seed_val = 0;
    sub->add_option_function<std::uint64_t>(
        "--seed", [&cli](const std::uint64_t& v) { cli.seed = v; },
        "override the RNG seed");
    (void)seed_val;
    sub->add_option_function<std::string>(
        "--format", [&cli](const std::string& v) { cli.format = v; },
        "output format (json|csv)");
    sub->add_option_function<std::string>(
        "--out", [&cli](const std::string& v) { cli.out = v; },
        "output path (default stdout)");
    sub->callback([&cli, name] { cli.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    return run(cli);
  } catch (const synthctrl::Error& e) {
    std::cerr << error_record(e) << "\n";
    return synthctrl::error_exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "{\"schema_version\":1,\"error\":{\"code\":\"Internal\",\"message\":\""
              << e.what() << "\"}}\n";
    return 1;
  }
}
