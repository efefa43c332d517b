#include "adllab/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "adllab/error.hpp"

namespace adllab {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& section, const std::string& key, const std::string& raw) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        fail("config-invalid", "[" + section + "] " + key + ": \"" + raw + "\" is not a number");
    }
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                fail("config-invalid", "line " + std::to_string(lineno) + ": unterminated section");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail("config-invalid",
                 "line " + std::to_string(lineno) + ": expected key = value, got \"" + line + "\"");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            fail("config-invalid", "line " + std::to_string(lineno) + ": empty key");
        }
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("io-error", "cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
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
    return parse_double(section, key, get_string(section, key, ""));
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    if (!has(section, key)) return fallback;
    const double v = parse_double(section, key, get_string(section, key, ""));
    return static_cast<int>(v);
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("config-invalid", "[" + section + "] " + key + ": \"" + v + "\" is not a boolean");
}

std::vector<std::string> ConfigFile::get_list(const std::string& section,
                                              const std::string& key) const {
    std::vector<std::string> out;
    const std::string raw = get_string(section, key, "");
    std::string item;
    std::istringstream is(raw);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> ConfigFile::get_double_list(const std::string& section,
                                                const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : get_list(section, key)) {
        out.push_back(parse_double(section, key, item));
    }
    return out;
}

void ConfigFile::get_range(const std::string& section, const std::string& key, double& lo,
                           double& hi) const {
    if (!has(section, key)) return;
    const std::string raw = get_string(section, key, "");
    const auto colon = raw.find(':');
    if (colon == std::string::npos) {
        lo = hi = parse_double(section, key, raw);
        return;
    }
    lo = parse_double(section, key, trim(raw.substr(0, colon)));
    hi = parse_double(section, key, trim(raw.substr(colon + 1)));
}

Variant variant_from_name(const std::string& name) {
    if (name == "vanilla") return Variant::Vanilla;
    if (name == "adl") return Variant::Adl;
    if (name == "has") return Variant::Has;
    fail("config-invalid", "unknown variant \"" + name + "\" (expected vanilla, adl or has)");
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Vanilla: return "vanilla";
        case Variant::Adl: return "adl";
        case Variant::Has: return "has";
    }
    return "?";
}

ModelConfig RunConfig::model_config(Variant v, int num_classes) const {
    ModelConfig cfg;
    cfg.blocks = blocks;
    cfg.num_classes = model_classes > 0 ? model_classes : num_classes;
    cfg.assign_default_names();
    if (v == Variant::Adl) {
        for (const std::string& name : adl_insert) cfg.adl_insertions.emplace_back(name, adl);
    } else if (v == Variant::Has) {
        for (const std::string& name : has_insert) cfg.has_insertions.emplace_back(name, has);
    }
    cfg.validate();
    return cfg;
}

RunConfig default_run_config() {
    RunConfig rc;
    rc.blocks = {
        {"block1", 8, 3, PoolKind::Max2x2},
        {"block2", 12, 3, PoolKind::Max2x2},
        {"block3", 16, 3, PoolKind::None},
    };
    rc.adl_insert = {"block2", "block3"};
    rc.has_insert = {"block2", "block3"};
    // Classify-then-fine-tune schedule; the trend experiment ships with it.
    rc.train.lr = 0.05;
    rc.train.momentum = 0.9;
    rc.train.epochs = 27;
    rc.train.warmup_epochs = 12;
    rc.train.finetune_lr_scale = 0.2;
    rc.train.batch_size = 32;
    rc.seeds = {1, 2, 3};
    rc.sweep_drop_rates = {0.0, 0.25, 0.5, 0.75, 1.0};
    rc.sweep_gammas = {0.5, 0.8, 0.9, 0.95, 1.0};
    return rc;
}

RunConfig parse_run_config(const ConfigFile& f) {
    RunConfig rc = default_run_config();

    rc.data.num_classes = f.get_int("data", "num_classes", rc.data.num_classes);
    rc.data.image_size = f.get_int("data", "image_size", rc.data.image_size);
    rc.data.samples_per_class = f.get_int("data", "samples_per_class", rc.data.samples_per_class);
    rc.data.test_fraction = f.get_double("data", "test_fraction", rc.data.test_fraction);
    rc.data.noise = f.get_double("data", "noise", rc.data.noise);
    rc.data.class_correlated_background =
        f.get_bool("data", "class_correlated_background", rc.data.class_correlated_background);
    const std::string bg = f.get_string("data", "background", "plain");
    if (bg == "plain") rc.data.background = DataSpec::Background::Plain;
    else if (bg == "textured") rc.data.background = DataSpec::Background::Textured;
    else fail("config-invalid", "[data] background: \"" + bg + "\" (expected plain or textured)");
    f.get_range("data", "head_radius", rc.data.head_radius_min, rc.data.head_radius_max);
    f.get_range("data", "body_half_width", rc.data.body_half_width_min, rc.data.body_half_width_max);
    f.get_range("data", "body_half_height", rc.data.body_half_height_min,
                rc.data.body_half_height_max);
    rc.data.seed = static_cast<std::uint64_t>(f.get_int("data", "seed", static_cast<int>(rc.data.seed)));

    if (f.has("model", "blocks")) {
        rc.blocks.clear();
        for (const std::string& spec : f.get_list("model", "blocks")) {
            // channels:kernel:pool
            std::istringstream is(spec);
            std::string ch, k, pool;
            if (!std::getline(is, ch, ':') || !std::getline(is, k, ':') ||
                !std::getline(is, pool, ':')) {
                fail("config-invalid", "[model] blocks: bad entry \"" + spec +
                                           "\" (expected channels:kernel:pool)");
            }
            BlockConfig b;
            b.out_channels = static_cast<int>(parse_double("model", "blocks", ch));
            b.kernel = static_cast<int>(parse_double("model", "blocks", k));
            if (pool == "max2x2") b.pool = PoolKind::Max2x2;
            else if (pool == "none") b.pool = PoolKind::None;
            else fail("config-invalid", "[model] blocks: unknown pool \"" + pool + "\"");
            rc.blocks.push_back(std::move(b));
        }
    }
    rc.model_classes = f.get_int("model", "num_classes", rc.model_classes);

    rc.adl.drop_rate = f.get_double("adl", "drop_rate", rc.adl.drop_rate);
    rc.adl.gamma = f.get_double("adl", "gamma", rc.adl.gamma);
    rc.adl.drop_enabled = f.get_bool("adl", "drop_enabled", rc.adl.drop_enabled);
    rc.adl.importance_enabled = f.get_bool("adl", "importance_enabled", rc.adl.importance_enabled);
    rc.adl.normalize_attention =
        f.get_bool("adl", "normalize_attention", rc.adl.normalize_attention);
    if (f.has("adl", "insert")) rc.adl_insert = f.get_list("adl", "insert");

    rc.has.patch_size = f.get_int("has", "patch_size", rc.has.patch_size);
    rc.has.hide_prob = f.get_double("has", "hide_prob", rc.has.hide_prob);
    if (f.has("has", "insert")) rc.has_insert = f.get_list("has", "insert");

    rc.train.lr = f.get_double("train", "lr", rc.train.lr);
    rc.train.momentum = f.get_double("train", "momentum", rc.train.momentum);
    rc.train.epochs = f.get_int("train", "epochs", rc.train.epochs);
    rc.train.batch_size = f.get_int("train", "batch_size", rc.train.batch_size);
    rc.train.warmup_epochs = f.get_int("train", "warmup_epochs", rc.train.warmup_epochs);
    rc.train.finetune_lr_scale =
        f.get_double("train", "finetune_lr_scale", rc.train.finetune_lr_scale);

    rc.theta_box = f.get_double("eval", "theta_box", rc.theta_box);

    if (f.has("run", "seeds")) {
        rc.seeds.clear();
        for (double v : f.get_double_list("run", "seeds")) {
            rc.seeds.push_back(static_cast<std::uint64_t>(v));
        }
        if (rc.seeds.empty()) fail("config-invalid", "[run] seeds must not be empty");
    }

    if (f.has("sweep", "drop_rate")) rc.sweep_drop_rates = f.get_double_list("sweep", "drop_rate");
    if (f.has("sweep", "gamma")) rc.sweep_gammas = f.get_double_list("sweep", "gamma");

    // Validate eagerly so bad configs die before any work happens.
    rc.data.validate();
    rc.adl.validate();
    if (rc.theta_box <= 0.0 || rc.theta_box >= 1.0) {
        fail("config-invalid", "[eval] theta_box must lie in (0, 1)");
    }
    if (rc.train.lr < 0.0) fail("config-invalid", "[train] lr must be non-negative");
    if (rc.train.epochs < 1) fail("config-invalid", "[train] epochs must be >= 1");
    if (rc.train.batch_size < 1) fail("config-invalid", "[train] batch_size must be >= 1");
    return rc;
}

}  // namespace adllab
