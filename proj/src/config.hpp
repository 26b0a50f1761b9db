#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace ropnet {

// Unified flat key=value configuration. Resolution order:
// defaults < config file < command-line flags. Unknown keys are rejected.
class RunConfig {
  public:
    RunConfig();  // populated with defaults

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    long get_long(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<long> get_longs(const std::string& key) const;     // comma-separated
    std::vector<std::string> get_list(const std::string& key) const;

    void load_file(const std::string& path);
    void save_file(const std::string& path) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // Applies the ROPNET_SEED environment override, when present.
    void apply_env_overrides();

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace ropnet
