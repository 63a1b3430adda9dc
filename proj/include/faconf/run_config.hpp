#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "faconf/errors.hpp"
#include "faconf/filterbank.hpp"
#include "faconf/model.hpp"
#include "faconf/training.hpp"

namespace faconf {

// Experiment configuration merged from defaults, an optional key=value file,
// and command-line overrides (CLI > file > defaults). Dataset-derived model
// dimensions (channels, time points, classes) are filled in at load time.
struct RunConfig {
    // filter bank
    std::vector<BandSpec> bands = default_band_layout();
    int band_order = 4;
    double band_atten_db = 30.0;
    double band_trans_hz = 2.0;

    // architecture
    std::vector<std::size_t> kernel_sizes = {15, 31, 63, 125};
    std::size_t fuse_filters = 128;
    std::size_t icscm_stride = 4;
    std::size_t icscm_kernel = 11;
    std::size_t se_reduction_ratio = 8;
    std::size_t attn_heads = 4;
    std::size_t attn_dim = 16;
    std::size_t emg_blocks = 2;
    std::size_t emg_filters = 16;
    double dropout_p = 0.25;
    bool shared_band_attention = true;

    // training
    TrainConfig train;

    // pipeline
    std::size_t decimate_factor = 1;
    std::size_t jobs = 1;
    double stop_at_train_acc = 2.0;

    ModelConfig model_config(const TrialSet& set) const {
        ModelConfig m;
        m.n_bands = bands.size();
        m.eeg_channels = set.eeg_channels;
        m.emg_channels = set.emg_channels;
        m.time_points = set.time_points;
        m.n_classes = set.n_classes;
        m.kernel_sizes = kernel_sizes;
        m.fuse_filters = fuse_filters;
        m.icscm_stride = icscm_stride;
        m.icscm_kernel = icscm_kernel;
        m.se_reduction_ratio = se_reduction_ratio;
        m.attn_heads = attn_heads;
        m.attn_dim = attn_dim;
        m.emg_blocks = emg_blocks;
        m.emg_filters = emg_filters;
        m.dropout_p = dropout_p;
        m.shared_band_attention = shared_band_attention;
        return m;
    }

    FilterBank filter_bank(double fs) const {
        std::vector<BandSpec> specs = bands;
        for (BandSpec& s : specs) {
            s.order = band_order;
            s.stop_atten_db = band_atten_db;
            s.trans_hz = band_trans_hz;
        }
        return make_filter_bank(specs, fs);
    }
};

namespace detail {

inline const std::set<std::string>& run_config_keys() {
    static const std::set<std::string> keys = {
        "bands",          "band_order",      "band_atten_db",  "band_trans_hz",
        "kernel_sizes",   "fuse_filters",    "icscm_stride",   "icscm_kernel",
        "se_reduction",   "attn_heads",      "attn_dim",       "emg_blocks",
        "emg_filters",    "dropout_p",       "shared_band_attention",
        "lr",             "epochs",          "batch_size",     "rdrop_alpha",
        "seed",           "folds",           "stratified",     "decimate_factor",
        "jobs",           "stop_at_train_acc"};
    return keys;
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace detail

// Bands are written "lo-hi,lo-hi,...", e.g. "4-8,8-12".
inline std::vector<BandSpec> parse_band_list(const std::string& text) {
    std::vector<BandSpec> bands;
    for (const std::string& part : detail::split_list(text, ',')) {
        const auto dash = part.find('-');
        if (dash == std::string::npos)
            throw ConfigError("band '" + part + "' must be written lo-hi");
        BandSpec s;
        try {
            s.low_hz = std::stod(part.substr(0, dash));
            s.high_hz = std::stod(part.substr(dash + 1));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse band '" + part + "'");
        }
        bands.push_back(s);
    }
    if (bands.empty()) throw ConfigError("band list is empty");
    return bands;
}

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (detail::run_config_keys().count(key) == 0)
        throw ConfigError("unknown config key '" + key + "'");
    auto as_size = [&](const std::string& v) -> std::size_t {
        try {
            const long long n = std::stoll(v);
            if (n < 0) throw std::invalid_argument(v);
            return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': cannot parse '" + v + "' as an integer");
        }
    };
    auto as_double = [&](const std::string& v) -> double {
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
        }
    };
    auto as_bool = [&](const std::string& v) -> bool {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
    };

    if (key == "bands") cfg.bands = parse_band_list(value);
    else if (key == "band_order") cfg.band_order = static_cast<int>(as_size(value));
    else if (key == "band_atten_db") cfg.band_atten_db = as_double(value);
    else if (key == "band_trans_hz") cfg.band_trans_hz = as_double(value);
    else if (key == "kernel_sizes") {
        cfg.kernel_sizes.clear();
        for (const std::string& v : detail::split_list(value, ',')) cfg.kernel_sizes.push_back(as_size(v));
        if (cfg.kernel_sizes.size() != 4)
            throw ConfigError("kernel_sizes needs exactly four comma-separated values");
    } else if (key == "fuse_filters") cfg.fuse_filters = as_size(value);
    else if (key == "icscm_stride") cfg.icscm_stride = as_size(value);
    else if (key == "icscm_kernel") cfg.icscm_kernel = as_size(value);
    else if (key == "se_reduction") cfg.se_reduction_ratio = as_size(value);
    else if (key == "attn_heads") cfg.attn_heads = as_size(value);
    else if (key == "attn_dim") cfg.attn_dim = as_size(value);
    else if (key == "emg_blocks") cfg.emg_blocks = as_size(value);
    else if (key == "emg_filters") cfg.emg_filters = as_size(value);
    else if (key == "dropout_p") cfg.dropout_p = as_double(value);
    else if (key == "shared_band_attention") cfg.shared_band_attention = as_bool(value);
    else if (key == "lr") cfg.train.learning_rate = as_double(value);
    else if (key == "epochs") cfg.train.epochs = as_size(value);
    else if (key == "batch_size") cfg.train.batch_size = as_size(value);
    else if (key == "rdrop_alpha") cfg.train.rdrop_alpha = as_double(value);
    else if (key == "seed") cfg.train.seed = as_size(value);
    else if (key == "folds") cfg.train.folds = as_size(value);
    else if (key == "stratified") cfg.train.stratified = as_bool(value);
    else if (key == "decimate_factor") cfg.decimate_factor = as_size(value);
    else if (key == "jobs") cfg.jobs = as_size(value);
    else if (key == "stop_at_train_acc") cfg.stop_at_train_acc = as_double(value);
}

// Plain-text `key = value` file; '#' starts a comment, blank lines ignored.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        try {
            apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace faconf
