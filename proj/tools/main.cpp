// Experiment runner: parses a config, executes the phased training protocol
// and writes the metrics CSV/JSONL plus a final size report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "phasedfl/config.hpp"
#include "phasedfl/errors.hpp"
#include "phasedfl/federation.hpp"

namespace fs = std::filesystem;

namespace {

void print_summary(const phasedfl::RunResult& result) {
  for (const phasedfl::PhaseSummary& p : result.phases) {
    std::printf(
        "phase %d: rounds %-3d participants %-4d final accuracy %.4f  best accuracy %.4f  "
        "sparsity %.4f\n",
        p.phase, p.rounds, p.participants, p.final_accuracy, p.best_accuracy, p.sparsity);
  }
  const phasedfl::SizeReport& s = result.size_report;
  std::printf("speed-up: %.2fx\n", result.phases.back().speedup);
  std::printf("space-saving: %.3f (dense %zu B compressed -> sparse %zu B compressed)\n",
              s.space_saving, s.dense_compressed_bytes, s.sparse_compressed_bytes);
}

int run(const fs::path& config_path, std::optional<std::uint64_t> seed,
        std::optional<fs::path> out_dir, std::optional<std::string> format,
        bool validate_only) {
  phasedfl::ExperimentConfig config = phasedfl::load_config_file(config_path);
  if (seed) config.seed = *seed;
  if (out_dir) config.out_dir = *out_dir;
  if (format) {
    if (*format == "csv") {
      config.format = phasedfl::EmitFormat::Csv;
    } else if (*format == "jsonl") {
      config.format = phasedfl::EmitFormat::JsonLines;
    } else {
      throw phasedfl::ValidationError("key 'format': expected csv or jsonl, got '" + *format +
                                      "'");
    }
  }
  phasedfl::validate_config(config);

  if (validate_only) {
    std::printf("config ok: %s\n", config_path.string().c_str());
    return 0;
  }

  phasedfl::RunResult result = phasedfl::run_experiment(config);

  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw phasedfl::IoError("cannot create '" + config.out_dir.string() + "': " + ec.message());

  fs::path metrics_path =
      config.out_dir /
      (config.format == phasedfl::EmitFormat::Csv ? "metrics.csv" : "metrics.jsonl");
  phasedfl::emit(result.records, config.format, metrics_path);

  nlohmann::ordered_json report{
      {"dense_compressed_bytes", result.size_report.dense_compressed_bytes},
      {"sparse_compressed_bytes", result.size_report.sparse_compressed_bytes},
      {"space_saving", result.size_report.space_saving},
  };
  fs::path report_path = config.out_dir / "size_report.json";
  {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw phasedfl::IoError("cannot write '" + report_path.string() + "'");
    out << report.dump(2) << "\n";
  }

  print_summary(result);
  std::printf("metrics written to %s\n", metrics_path.string().c_str());
  std::printf("size report written to %s\n", report_path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phased federated-learning simulator with lottery-ticket sparsification"};
  app.footer("exit codes: 0 success, 1 invalid usage or config, 2 runtime failure");

  std::string config_path;
  app.add_option("config", config_path, "experiment config file")->required();

  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "override the experiment seed");
  std::optional<std::string> out_dir;
  app.add_option("--out", out_dir, "override the output directory");
  std::optional<std::string> format;
  app.add_option("--format", format, "metrics format: csv or jsonl");
  bool validate_only = false;
  app.add_flag("--validate-only", validate_only, "validate the config and exit without running");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    std::optional<fs::path> out;
    if (out_dir) out = fs::path(*out_dir);
    return run(config_path, seed, out, format, validate_only);
  } catch (const phasedfl::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const phasedfl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
