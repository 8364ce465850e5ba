#include "oim/config_file.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace oim {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("ConfigFile: cannot open " + path);
  return parse(is, path);
}

ConfigFile ConfigFile::parse(std::istream& is, const std::string& origin) {
  ConfigFile cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  return std::stod(get_string(section, key, ""));
}

long long ConfigFile::get_int(const std::string& section, const std::string& key,
                              long long fallback) const {
  if (!has(section, key)) return fallback;
  return std::stoll(get_string(section, key, ""));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get_string(section, key, "");
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("ConfigFile: bad boolean value '" + v + "' for " + section + "." +
                              key);
}

std::vector<double> ConfigFile::get_double_list(const std::string& section, const std::string& key,
                                                const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(get_string(section, key, "")))
    out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> ConfigFile::get_string_list(
    const std::string& section, const std::string& key,
    const std::vector<std::string>& fallback) const {
  if (!has(section, key)) return fallback;
  return split_list(get_string(section, key, ""));
}

namespace {

const std::map<std::string, std::set<std::string>> kSchema = {
    {"frame", {"users", "payload_bits", "repetition", "fft_size", "cp_len"}},
    {"channel",
     {"taps", "max_timing_offset", "phase_noise_std", "power_imbalance_db", "fixed_cfos"}},
    {"sweep", {"snr_db", "rho", "frames"}},
    {"receiver", {"kinds", "sage_iterations", "ecm_iterations", "decoder_iterations"}},
    {"run", {"seed", "workers", "out", "diagnostics", "timings"}},
};

}  // namespace

ExperimentConfig experiment_from_config(const ConfigFile& file) {
  for (const auto& [section, keys] : file.sections()) {
    const auto schema = kSchema.find(section);
    if (schema == kSchema.end())
      throw std::invalid_argument("config: unknown section [" + section + "]");
    for (const auto& [key, value] : keys)
      if (schema->second.count(key) == 0)
        throw std::invalid_argument("config: unknown key '" + key + "' in [" + section + "]");
  }

  ExperimentConfig cfg;
  cfg.num_users = static_cast<std::size_t>(file.get_int("frame", "users", 2));
  cfg.payload_bits = static_cast<std::size_t>(file.get_int("frame", "payload_bits", 240));
  cfg.repetition = static_cast<std::size_t>(file.get_int("frame", "repetition", 0));
  cfg.fft_size = static_cast<std::size_t>(file.get_int("frame", "fft_size", 64));
  cfg.cp_len = static_cast<std::size_t>(file.get_int("frame", "cp_len", 16));

  cfg.channel_taps = static_cast<std::size_t>(file.get_int("channel", "taps", 4));
  cfg.max_timing_offset =
      static_cast<std::size_t>(file.get_int("channel", "max_timing_offset", 9));
  cfg.phase_noise_std = file.get_double("channel", "phase_noise_std", 0.0);
  cfg.power_imbalance_db = file.get_double("channel", "power_imbalance_db", 0.0);
  cfg.fixed_cfos = file.get_double_list("channel", "fixed_cfos", {});

  cfg.snr_db_grid = file.get_double_list("sweep", "snr_db", cfg.snr_db_grid);
  cfg.rho_grid = file.get_double_list("sweep", "rho", cfg.rho_grid);
  cfg.frames_per_point = static_cast<std::size_t>(file.get_int("sweep", "frames", 200));

  const std::vector<std::string> names = file.get_string_list(
      "receiver", "kinds", {"full_csi", "one_shot", "sage_minsum", "sage_ecm"});
  cfg.receivers.clear();
  for (const std::string& name : names) {
    const auto kind = receiver_from_name(name);
    if (!kind) throw std::invalid_argument("config: unknown receiver '" + name + "'");
    cfg.receivers.push_back(*kind);
  }
  cfg.sage_iterations = static_cast<int>(file.get_int("receiver", "sage_iterations", 10));
  cfg.ecm_iterations = static_cast<int>(file.get_int("receiver", "ecm_iterations", 20));
  cfg.decoder_iterations = static_cast<int>(file.get_int("receiver", "decoder_iterations", 20));

  cfg.master_seed = static_cast<std::uint64_t>(file.get_int("run", "seed", 1));
  cfg.workers = static_cast<unsigned>(file.get_int("run", "workers", 1));
  cfg.output_path = file.get_string("run", "out", "");
  cfg.diagnostics = file.get_bool("run", "diagnostics", false);
  cfg.timings_in_csv = file.get_bool("run", "timings", false);

  cfg.validate();
  return cfg;
}

ExperimentConfig experiment_from_file(const std::string& path) {
  return experiment_from_config(ConfigFile::load(path));
}

}  // namespace oim
