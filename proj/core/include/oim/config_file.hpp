#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

#include "oim/sim.hpp"

namespace oim {

/// Minimal sectioned key/value text format:
///
///   # comment
///   [section]
///   key = value
///   list = a, b, c
///
/// Unknown keys are rejected by experiment_from_config, so typos surface
/// immediately instead of silently running defaults.
class ConfigFile {
 public:
  static ConfigFile load(const std::string& path);
  static ConfigFile parse(std::istream& is, const std::string& origin = "<stream>");

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& section, const std::string& key,
                                           const std::vector<std::string>& fallback) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Builds an experiment from a config file, validating section and key
/// names against the documented schema.
ExperimentConfig experiment_from_config(const ConfigFile& file);
ExperimentConfig experiment_from_file(const std::string& path);

}  // namespace oim
