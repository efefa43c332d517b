#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adllab/model.hpp"
#include "adllab/synthdata.hpp"

namespace adllab {

// Flat "key = value" file with [section] headers and '#' comments. No nesting,
// no quoting; lists are comma separated, ranges are "lo:hi".
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text);
    static ConfigFile parse_file(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key) const;
    void get_range(const std::string& section, const std::string& key, double& lo, double& hi) const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class Variant { Vanilla, Adl, Has };

Variant variant_from_name(const std::string& name);
const char* variant_name(Variant v);

// Everything one experiment run needs, assembled from a config file plus
// command-line overrides.
struct RunConfig {
    DataSpec data;
    std::vector<BlockConfig> blocks;
    int model_classes = 0;  // 0: follow the dataset
    AdlConfig adl;
    std::vector<std::string> adl_insert;  // block names
    HasConfig has;
    std::vector<std::string> has_insert;
    TrainOptions train;
    double theta_box = 0.2;
    std::vector<std::uint64_t> seeds;

    std::vector<double> sweep_drop_rates;
    std::vector<double> sweep_gammas;

    // Model config for a variant against a dataset with `num_classes` labels.
    ModelConfig model_config(Variant v, int num_classes) const;
};

RunConfig parse_run_config(const ConfigFile& file);
RunConfig default_run_config();

}  // namespace adllab
