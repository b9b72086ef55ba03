#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "comma/sim.hpp"
#include "comma/training.hpp"

namespace comma::cfg {

/// INI-style key/value file with [section] headers and '#' comments.
class ConfigFile {
 public:
  static ConfigFile parse(const std::filesystem::path& path);
  static ConfigFile parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key, double fallback) const;
  std::vector<double> get_list(const std::string& section, const std::string& key) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// [corridor] section -> validated CorridorConfig.
sim::CorridorConfig corridor_from_config(const ConfigFile& f);
/// [train] section -> TrainConfig.
train::TrainConfig train_from_config(const ConfigFile& f);

}  // namespace comma::cfg
