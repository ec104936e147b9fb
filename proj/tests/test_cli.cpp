// End-to-end checks of the command-line runner. The binary path arrives via
// the PHASEDFL_CLI environment variable, set by ctest.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("phasedfl-cli-" + std::to_string(::getpid()) + "-" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string cli() {
  const char* bin = std::getenv("PHASEDFL_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "PHASEDFL_CLI must point at the runner binary");
  return bin;
}

int run_cli(const std::string& args, const fs::path& capture) {
  std::string cmd = cli() + " " + args + " > " + capture.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

constexpr const char* kSmokeConfig = R"(
seed = 7
dataset = synthetic
classes = 5
per_class = 50
test_per_class = 10
input_dim = 16
clients = 10
samples_per_client = 20
alpha = 0.05
batch_size = 16

[phase 1]
rounds = 3
target_sparsity = 0

[phase 2]
rounds = 3
target_sparsity = 0.3

[phase 3]
rounds = 3
target_sparsity = 0.8
)";

fs::path write_smoke_config(const TempDir& dir) {
  fs::path cfg = dir.path / "smoke.cfg";
  std::ofstream out(cfg);
  out << kSmokeConfig;
  return cfg;
}

}  // namespace

TEST_CASE("smoke run exits 0 and writes a 9-row metrics csv") {
  TempDir dir;
  fs::path cfg = write_smoke_config(dir);
  fs::path out = dir.path / "run";
  int code = run_cli(cfg.string() + " --out " + out.string(), dir.path / "stdout.txt");
  CHECK(code == 0);

  std::string csv = slurp(out / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 9 rounds
  CHECK(fs::exists(out / "size_report.json"));

  std::string stdout_text = slurp(dir.path / "stdout.txt");
  CHECK(stdout_text.find("phase 1") != std::string::npos);
  CHECK(stdout_text.find("space-saving") != std::string::npos);
}

TEST_CASE("identical invocations produce byte-identical metrics") {
  TempDir dir;
  fs::path cfg = write_smoke_config(dir);
  fs::path out_a = dir.path / "a";
  fs::path out_b = dir.path / "b";
  CHECK(run_cli(cfg.string() + " --out " + out_a.string(), dir.path / "log_a.txt") == 0);
  CHECK(run_cli(cfg.string() + " --out " + out_b.string(), dir.path / "log_b.txt") == 0);
  CHECK(slurp(out_a / "metrics.csv") == slurp(out_b / "metrics.csv"));
  CHECK(slurp(out_a / "size_report.json") == slurp(out_b / "size_report.json"));
}

TEST_CASE("a seed override changes the metrics") {
  TempDir dir;
  fs::path cfg = write_smoke_config(dir);
  fs::path out_a = dir.path / "a";
  fs::path out_b = dir.path / "b";
  CHECK(run_cli(cfg.string() + " --out " + out_a.string(), dir.path / "log_a.txt") == 0);
  CHECK(run_cli(cfg.string() + " --seed 8 --out " + out_b.string(), dir.path / "log_b.txt") ==
        0);
  CHECK(slurp(out_a / "metrics.csv") != slurp(out_b / "metrics.csv"));
}

TEST_CASE("validate-only writes no files") {
  TempDir dir;
  fs::path cfg = write_smoke_config(dir);
  fs::path out = dir.path / "run";
  int code = run_cli(cfg.string() + " --out " + out.string() + " --validate-only",
                     dir.path / "stdout.txt");
  CHECK(code == 0);
  CHECK(!fs::exists(out));
  CHECK(slurp(dir.path / "stdout.txt").find("config ok") != std::string::npos);
}

TEST_CASE("missing config path exits 1 with usage text") {
  TempDir dir;
  int code = run_cli("", dir.path / "stderr.txt");
  CHECK(code == 1);
  std::string text = slurp(dir.path / "stderr.txt");
  CHECK(text.find("Usage") != std::string::npos);
}

TEST_CASE("a nonexistent config exits 1") {
  TempDir dir;
  CHECK(run_cli((dir.path / "missing.cfg").string(), dir.path / "log.txt") == 1);
}

TEST_CASE("an invalid config exits 1 and names the key") {
  TempDir dir;
  fs::path cfg = dir.path / "bad.cfg";
  std::ofstream(cfg) << "dataset = synthetic\nbogus = 1\n";
  CHECK(run_cli(cfg.string(), dir.path / "log.txt") == 1);
  CHECK(slurp(dir.path / "log.txt").find("bogus") != std::string::npos);
}

TEST_CASE("jsonl format flag switches the metrics file") {
  TempDir dir;
  fs::path cfg = write_smoke_config(dir);
  fs::path out = dir.path / "run";
  int code = run_cli(cfg.string() + " --out " + out.string() + " --format jsonl",
                     dir.path / "log.txt");
  CHECK(code == 0);
  CHECK(fs::exists(out / "metrics.jsonl"));
  std::string jsonl = slurp(out / "metrics.jsonl");
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 9);
}

TEST_CASE("a malformed dataset file exits 2") {
  TempDir dir;
  // all four files exist, so validation passes; ingestion then fails
  for (const char* name : {"ti", "tl", "vi", "vl"}) {
    std::ofstream(dir.path / name) << "not an idx file";
  }
  fs::path cfg = dir.path / "bad-data.cfg";
  std::ofstream(cfg) << "dataset = idx\n"
                     << "train_images = " << (dir.path / "ti").string() << "\n"
                     << "train_labels = " << (dir.path / "tl").string() << "\n"
                     << "test_images = " << (dir.path / "vi").string() << "\n"
                     << "test_labels = " << (dir.path / "vl").string() << "\n"
                     << "clients = 2\nsamples_per_client = 1\nfractions = 1.0\n"
                     << "[phase 1]\nrounds = 1\ntarget_sparsity = 0\n";
  int code = run_cli(cfg.string() + " --out " + (dir.path / "out").string(),
                     dir.path / "log.txt");
  CHECK(code == 2);
}
