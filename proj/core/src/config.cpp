#include "phasedfl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "phasedfl/errors.hpp"
#include "phasedfl/nn.hpp"

namespace phasedfl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_fields(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

[[noreturn]] void key_error(const std::string& key, const std::string& what) {
  throw ValidationError("key '" + key + "': " + what);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) key_error(key, "expected an integer, got '" + value + "'");
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    key_error(key, "expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) key_error(key, "expected an unsigned integer, got '" + value + "'");
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    key_error(key, "expected an unsigned integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) key_error(key, "expected a number, got '" + value + "'");
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    key_error(key, "expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  key_error(key, "expected true or false, got '" + value + "'");
}

int require_positive(const std::string& key, long long v) {
  if (v <= 0) key_error(key, "must be positive, got " + std::to_string(v));
  if (v > INT32_MAX) key_error(key, "too large");
  return static_cast<int>(v);
}

struct PhaseInput {
  bool has_rounds = false;
  bool has_target = false;
  int rounds = 0;
  double target = 0.0;
};

}  // namespace

ExperimentConfig parse_config(const std::string& document) {
  ExperimentConfig cfg;
  bool dataset_set = false;
  std::map<int, PhaseInput> phase_inputs;
  std::vector<ClientProfile> profiles;

  enum class Section { Top, Phase, Profiles };
  Section section = Section::Top;
  int phase_no = 0;

  std::istringstream in(document);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (std::size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValidationError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name == "profiles") {
        section = Section::Profiles;
      } else if (name.rfind("phase", 0) == 0) {
        section = Section::Phase;
        phase_no = static_cast<int>(parse_int("phase section", trim(name.substr(5))));
        if (phase_no < 1) throw ValidationError("section '[" + name + "]': phase must be >= 1");
        if (phase_inputs.count(phase_no)) {
          throw ValidationError("section '[" + name + "]' appears twice");
        }
        phase_inputs[phase_no] = {};
      } else {
        throw ValidationError("unknown section '[" + name + "]'");
      }
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected key = value, got '" +
                            line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty key");
    if (value.empty()) key_error(key, "empty value");

    if (section == Section::Phase) {
      PhaseInput& p = phase_inputs[phase_no];
      if (key == "rounds") {
        p.rounds = require_positive("rounds", parse_int(key, value));
        p.has_rounds = true;
      } else if (key == "target_sparsity") {
        p.target = parse_double(key, value);
        p.has_target = true;
      } else {
        throw ValidationError("unknown config key '" + key + "' in [phase " +
                              std::to_string(phase_no) + "]");
      }
      continue;
    }

    if (section == Section::Profiles) {
      if (key != "profile") {
        throw ValidationError("unknown config key '" + key + "' in [profiles]");
      }
      std::vector<std::string> fields = split_fields(value);
      if (fields.size() != 4) {
        key_error(key, "expected 'id compute storage bandwidth', got '" + value + "'");
      }
      ClientProfile p;
      p.client_id = static_cast<int>(parse_int(key, fields[0]));
      p.compute = parse_double(key, fields[1]);
      p.storage = parse_double(key, fields[2]);
      p.bandwidth = parse_double(key, fields[3]);
      profiles.push_back(p);
      continue;
    }

    if (key == "seed") {
      cfg.seed = parse_u64(key, value);
    } else if (key == "architecture") {
      cfg.architecture = value;
    } else if (key == "dataset") {
      if (value == "synthetic") {
        cfg.dataset = DatasetKind::Synthetic;
      } else if (value == "idx") {
        cfg.dataset = DatasetKind::Idx;
      } else {
        key_error(key, "expected synthetic or idx, got '" + value + "'");
      }
      dataset_set = true;
    } else if (key == "classes") {
      cfg.classes = require_positive(key, parse_int(key, value));
    } else if (key == "per_class") {
      cfg.per_class = require_positive(key, parse_int(key, value));
    } else if (key == "test_per_class") {
      cfg.test_per_class = require_positive(key, parse_int(key, value));
    } else if (key == "input_dim") {
      cfg.input_dim = require_positive(key, parse_int(key, value));
    } else if (key == "train_images") {
      cfg.train_images = value;
    } else if (key == "train_labels") {
      cfg.train_labels = value;
    } else if (key == "test_images") {
      cfg.test_images = value;
    } else if (key == "test_labels") {
      cfg.test_labels = value;
    } else if (key == "clients") {
      cfg.clients = require_positive(key, parse_int(key, value));
    } else if (key == "samples_per_client") {
      cfg.samples_per_client = require_positive(key, parse_int(key, value));
    } else if (key == "fractions") {
      cfg.fractions.clear();
      for (const std::string& f : split_fields(value)) {
        cfg.fractions.push_back(parse_double(key, f));
      }
      if (cfg.fractions.empty()) key_error(key, "expected at least one fraction");
    } else if (key == "k") {
      cfg.k = require_positive(key, parse_int(key, value));
    } else if (key == "alpha") {
      cfg.alpha = parse_double(key, value);
      if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) {
        key_error(key, "must be positive and finite, got " + value);
      }
    } else if (key == "epochs") {
      cfg.epochs = require_positive(key, parse_int(key, value));
    } else if (key == "batch_size") {
      cfg.batch_size = require_positive(key, parse_int(key, value));
    } else if (key == "weighted_aggregation") {
      cfg.weighted_aggregation = parse_bool(key, value);
    } else if (key == "aggregate_all") {
      cfg.aggregate_all = parse_bool(key, value);
    } else if (key == "granularity") {
      if (value == "per-tensor") {
        cfg.granularity = PruneGranularity::PerTensor;
      } else if (value == "global") {
        cfg.granularity = PruneGranularity::Global;
      } else {
        key_error(key, "expected per-tensor or global, got '" + value + "'");
      }
    } else if (key == "record_timing") {
      cfg.record_timing = parse_bool(key, value);
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "format") {
      if (value == "csv") {
        cfg.format = EmitFormat::Csv;
      } else if (value == "jsonl") {
        cfg.format = EmitFormat::JsonLines;
      } else {
        key_error(key, "expected csv or jsonl, got '" + value + "'");
      }
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }

  if (!dataset_set) {
    throw ValidationError("key 'dataset' is required (synthetic or idx)");
  }

  if (!phase_inputs.empty()) {
    cfg.phases.clear();
    int expected = 1;
    for (const auto& [no, p] : phase_inputs) {
      if (no != expected) {
        throw ValidationError("phase sections must be consecutive from 1, missing [phase " +
                              std::to_string(expected) + "]");
      }
      if (!p.has_rounds) {
        throw ValidationError("key 'rounds' missing in [phase " + std::to_string(no) + "]");
      }
      if (!p.has_target) {
        throw ValidationError("key 'target_sparsity' missing in [phase " + std::to_string(no) +
                              "]");
      }
      cfg.phases.push_back({p.rounds, p.target});
      ++expected;
    }
  }
  cfg.profiles = std::move(profiles);

  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.phases.empty()) throw ValidationError("key 'rounds': no phases configured");

  // architecture must resolve
  try {
    (void)Architecture::by_name(cfg.architecture, cfg.input_dim, cfg.classes);
  } catch (const Error& e) {
    throw ValidationError("key 'architecture': " + std::string(e.what()));
  }

  // sparsity schedule
  std::vector<double> targets;
  for (const PhaseSpec& p : cfg.phases) targets.push_back(p.target_sparsity);
  try {
    (void)SparsitySchedule::validated(targets);
  } catch (const Error& e) {
    throw ValidationError("key 'target_sparsity': " + std::string(e.what()));
  }

  if (cfg.fractions.size() != cfg.phases.size()) {
    throw ValidationError("key 'fractions': expected one fraction per phase (" +
                          std::to_string(cfg.phases.size()) + "), got " +
                          std::to_string(cfg.fractions.size()));
  }
  double sum = 0.0;
  for (double f : cfg.fractions) {
    if (!(f > 0.0)) throw ValidationError("key 'fractions': fraction must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("key 'fractions': fractions sum to " + std::to_string(sum) +
                          ", expected 1");
  }

  // k has to fit the smallest participant set, the phase-1 pool
  std::size_t n = static_cast<std::size_t>(cfg.clients);
  std::size_t pool1;
  if (cfg.fractions.size() == 1) {
    pool1 = n;
  } else {
    pool1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.fractions[0] + 0.5));
    pool1 = std::min(pool1, n);
  }
  if (static_cast<std::size_t>(cfg.k) > pool1) {
    throw ValidationError("key 'k': k = " + std::to_string(cfg.k) +
                          " exceeds the phase-1 pool of " + std::to_string(pool1) + " clients");
  }

  if (cfg.dataset == DatasetKind::Synthetic) {
    std::size_t have = static_cast<std::size_t>(cfg.classes) * cfg.per_class;
    std::size_t need = n * static_cast<std::size_t>(cfg.samples_per_client);
    if (need > have) {
      throw ValidationError("key 'per_class': clients x samples_per_client = " +
                            std::to_string(need) + " exceeds synthetic dataset size " +
                            std::to_string(have));
    }
  } else {
    auto require_path = [](const char* key, const std::filesystem::path& p) {
      if (p.empty()) {
        throw ValidationError("key '" + std::string(key) + "' is required for dataset = idx");
      }
      if (!std::filesystem::exists(p)) {
        throw ValidationError("key '" + std::string(key) + "': file '" + p.string() +
                              "' does not exist");
      }
    };
    require_path("train_images", cfg.train_images);
    require_path("train_labels", cfg.train_labels);
    require_path("test_images", cfg.test_images);
    require_path("test_labels", cfg.test_labels);
  }

  if (!cfg.profiles.empty()) {
    if (cfg.profiles.size() != n) {
      throw ValidationError("key 'profile': " + std::to_string(cfg.profiles.size()) +
                            " profiles configured, clients = " + std::to_string(cfg.clients));
    }
    std::set<int> ids;
    for (const ClientProfile& p : cfg.profiles) {
      if (!ids.insert(p.client_id).second) {
        throw ValidationError("key 'profile': duplicate client id " +
                              std::to_string(p.client_id));
      }
      try {
        (void)score(p);
      } catch (const Error& e) {
        throw ValidationError("key 'profile': " + std::string(e.what()));
      }
    }
  }

  if (cfg.out_dir.empty()) throw ValidationError("key 'out_dir': empty path");
}

}  // namespace phasedfl
