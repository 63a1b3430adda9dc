// faconf: train, evaluate, and inspect the EEG-EMG motor-pattern decoder.
//
// Subcommands: synth, train, eval, ablate, filter-probe.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "faconf/data_io.hpp"
#include "faconf/filterbank.hpp"
#include "faconf/log.hpp"
#include "faconf/metrics.hpp"
#include "faconf/model.hpp"
#include "faconf/run_config.hpp"
#include "faconf/training.hpp"

namespace {

using namespace faconf;

struct CommonArgs {
    std::string config_path;
    std::int64_t seed = -1;       // -1: keep config/default
    std::int64_t jobs = -1;
};

RunConfig build_run_config(const CommonArgs& common) {
    RunConfig cfg;
    if (!common.config_path.empty()) load_config_file(cfg, common.config_path);
    if (common.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(common.seed);
    if (common.jobs >= 1) cfg.jobs = static_cast<std::size_t>(common.jobs);
    return cfg;
}

TrialSet load_dataset(const std::string& path, const RunConfig& cfg) {
    TrialSet set = read_container(path);
    log_info("loaded " + path + ": " + std::to_string(set.n_trials) + " trials, " +
             std::to_string(set.eeg_channels) + " EEG ch, " + std::to_string(set.emg_channels) +
             " EMG ch, T=" + std::to_string(set.time_points) + " @ " + std::to_string(set.fs_hz) +
             " Hz");
    if (cfg.decimate_factor > 1) {
        set = decimate(set, cfg.decimate_factor);
        log_info("decimated by " + std::to_string(cfg.decimate_factor) + " to T=" +
                 std::to_string(set.time_points) + " @ " + std::to_string(set.fs_hz) + " Hz");
    }
    return set;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "epoch,train_loss,val_acc\n";
    os << std::setprecision(12);
    for (std::size_t e = 0; e < history.size(); ++e)
        os << e << ',' << history[e].train_loss << ',' << history[e].val_acc << '\n';
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << text;
}

int cmd_synth(std::size_t trials, std::size_t classes, std::size_t eeg_ch, std::size_t emg_ch,
              std::size_t t, double fs, std::uint64_t seed, double snr, const std::string& out) {
    TrialSet set = make_synthetic(trials, classes, eeg_ch, emg_ch, t, fs, seed, snr);
    write_container(set, out);
    std::cout << "wrote " << out << ": " << set.n_trials << " trials, " << set.n_classes
              << " classes, " << set.eeg_channels << " EEG ch, " << set.emg_channels
              << " EMG ch, T=" << set.time_points << " @ " << set.fs_hz << " Hz\n";
    return 0;
}

CrossValidationResult run_cv(const TrialSet& set, const RunConfig& cfg, const ModelConfig& mcfg) {
    const FilterBank bank = cfg.filter_bank(set.fs_hz);
    PreparedData data = prepare_trials(set, bank);
    TrainOptions opts;
    opts.jobs = cfg.jobs;
    opts.stop_at_train_acc = cfg.stop_at_train_acc;
    return cross_validate(data, mcfg, cfg.train, opts);
}

int cmd_train(const std::string& dataset, const CommonArgs& common, const std::string& outdir) {
    RunConfig cfg = build_run_config(common);
    TrialSet set = load_dataset(dataset, cfg);
    ModelConfig mcfg = cfg.model_config(set);
    mcfg.validate();
    std::filesystem::create_directories(outdir);

    CrossValidationResult cv = run_cv(set, cfg, mcfg);
    for (std::size_t fold = 0; fold < cv.folds.size(); ++fold) {
        write_history_csv(outdir + "/fold_" + std::to_string(fold) + "_history.csv",
                          cv.folds[fold].history);
        save_checkpoint(mcfg, cv.folds[fold].params,
                        outdir + "/fold_" + std::to_string(fold) + ".ckpt");
        write_text(outdir + "/fold_" + std::to_string(fold) + "_confusion.csv",
                   confusion_csv(cv.folds[fold].confusion));
    }
    std::ostringstream summary;
    summary << std::setprecision(6) << "mean_acc=" << cv.mean_accuracy
            << " mean_kappa=" << cv.mean_kappa;
    write_text(outdir + "/summary.txt", summary.str() + "\n");
    std::cout << summary.str() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const CommonArgs& common,
             const std::string& outdir) {
    RunConfig cfg = build_run_config(common);
    auto [mcfg, params] = load_checkpoint(checkpoint);
    TrialSet set = load_dataset(dataset, cfg);
    if (set.eeg_channels != mcfg.eeg_channels)
        throw FormatError("checkpoint expects " + std::to_string(mcfg.eeg_channels) +
                          " EEG channels, dataset has " + std::to_string(set.eeg_channels));
    if (set.emg_channels != mcfg.emg_channels)
        throw FormatError("checkpoint expects " + std::to_string(mcfg.emg_channels) +
                          " EMG channels, dataset has " + std::to_string(set.emg_channels));
    if (set.time_points != mcfg.time_points)
        throw FormatError("checkpoint expects T=" + std::to_string(mcfg.time_points) +
                          ", dataset has T=" + std::to_string(set.time_points));
    if (set.n_classes > mcfg.n_classes)
        throw FormatError("checkpoint expects " + std::to_string(mcfg.n_classes) +
                          " classes, dataset has " + std::to_string(set.n_classes));

    const FilterBank bank = cfg.filter_bank(set.fs_hz);
    PreparedData data = prepare_trials(set, bank);
    std::vector<std::size_t> all(set.n_trials);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    data.n_classes = mcfg.n_classes;
    ConfusionMatrix cm = evaluate(data, all, mcfg, params);

    std::filesystem::create_directories(outdir);
    write_text(outdir + "/confusion.csv", confusion_csv(cm));
    {
        ModelParams eval_params = params.detached();
        std::ofstream os(outdir + "/predictions.csv");
        os << "trial,label,pred\n";
        for (std::size_t i = 0; i < set.n_trials; ++i)
            os << i << ',' << set.labels[i] << ',' << predict_one(data, i, mcfg, eval_params)
               << '\n';
    }
    std::cout << std::setprecision(6) << "accuracy=" << accuracy(cm) << " kappa=" << kappa(cm)
              << "\n";
    return 0;
}

int cmd_ablate(const std::string& dataset, const CommonArgs& common,
               const std::vector<std::string>& disable, const std::string& outdir) {
    RunConfig cfg = build_run_config(common);
    TrialSet set = load_dataset(dataset, cfg);
    const ModelConfig full = cfg.model_config(set);
    full.validate();

    std::vector<std::pair<std::string, ModelConfig>> variants;
    variants.push_back({"full", full});
    for (const std::string& name : disable) {
        if (ablation_names().count(name) == 0)
            throw ConfigError("unknown ablation '" + name + "'; valid: band_attention, multiscale, emg, icscm");
        variants.push_back({"no_" + name, ablate(full, {name})});
    }

    std::ostringstream table;
    table << "variant,param_count,mean_acc,mean_kappa\n";
    for (auto& [name, mcfg] : variants) {
        log_info("ablation variant: " + name);
        CrossValidationResult cv = run_cv(set, cfg, mcfg);
        table << name << ',' << param_count(mcfg) << ',' << std::setprecision(6)
              << cv.mean_accuracy << ',' << cv.mean_kappa << '\n';
    }
    std::cout << table.str();
    if (!outdir.empty()) {
        std::filesystem::create_directories(outdir);
        write_text(outdir + "/ablation.csv", table.str());
    }
    return 0;
}

int cmd_filter_probe(const CommonArgs& common, double fs, const std::string& out) {
    RunConfig cfg = build_run_config(common);
    const FilterBank bank = cfg.filter_bank(fs);
    std::ostringstream os;
    os << std::setprecision(10);
    for (std::size_t b = 0; b < bank.bands.size(); ++b) {
        const auto& [spec, cascade] = bank.bands[b];
        os << "# band " << b << ": " << spec.low_hz << "-" << spec.high_hz << " Hz\n";
        os << "freq_hz,magnitude_db\n";
        std::vector<double> freqs;
        for (double f = 0.0; f <= fs / 2.0 + 1e-9; f += 0.1) freqs.push_back(std::min(f, fs / 2.0));
        const std::vector<double> mags = frequency_response(cascade, freqs);
        for (std::size_t i = 0; i < freqs.size(); ++i)
            os << freqs[i] << ',' << mags[i] << '\n';
    }
    if (out.empty())
        std::cout << os.str();
    else
        write_text(out, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG-EMG motor-pattern decoder"};
    app.require_subcommand(1);

    CommonArgs common;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic trial container");
    std::size_t s_trials = 300, s_classes = 3, s_eeg = 8, s_emg = 2, s_t = 500;
    double s_fs = 250.0, s_snr = 4.0;
    std::uint64_t s_seed = 7;
    std::string s_out = "synthetic.fact";
    synth->add_option("--trials", s_trials, "number of trials")->check(CLI::PositiveNumber);
    synth->add_option("--classes", s_classes, "number of classes")->check(CLI::PositiveNumber);
    synth->add_option("--eeg-channels", s_eeg, "EEG channels")->check(CLI::PositiveNumber);
    synth->add_option("--emg-channels", s_emg, "EMG channels")->check(CLI::PositiveNumber);
    synth->add_option("--time-points", s_t, "samples per trial")->check(CLI::PositiveNumber);
    synth->add_option("--fs", s_fs, "sampling rate in Hz")->check(CLI::PositiveNumber);
    synth->add_option("--seed", s_seed, "random seed");
    synth->add_option("--snr", s_snr, "signal-to-noise amplitude ratio")->check(CLI::PositiveNumber);
    synth->add_option("-o,--output", s_out, "output container path");

    // train
    auto* train = app.add_subcommand("train", "k-fold cross-validated training");
    std::string t_dataset, t_outdir = "train_out";
    train->add_option("dataset", t_dataset, "FACT container")->required();
    train->add_option("--config", common.config_path, "key=value config file");
    train->add_option("--seed", common.seed, "override random seed");
    train->add_option("--jobs", common.jobs, "parallel fold workers");
    train->add_option("-o,--output", t_outdir, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string e_ckpt, e_dataset, e_outdir = "eval_out";
    eval->add_option("--checkpoint", e_ckpt, "FACP checkpoint")->required();
    eval->add_option("dataset", e_dataset, "FACT container")->required();
    eval->add_option("--config", common.config_path, "key=value config file");
    eval->add_option("--seed", common.seed, "override random seed");
    eval->add_option("-o,--output", e_outdir, "output directory");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "cross-validate the full model and ablations");
    std::string a_dataset, a_outdir;
    std::vector<std::string> a_disable;
    ablate_cmd->add_option("dataset", a_dataset, "FACT container")->required();
    ablate_cmd->add_option("--disable", a_disable,
                           "modules to ablate (band_attention, multiscale, emg, icscm)");
    ablate_cmd->add_option("--config", common.config_path, "key=value config file");
    ablate_cmd->add_option("--seed", common.seed, "override random seed");
    ablate_cmd->add_option("--jobs", common.jobs, "parallel fold workers");
    ablate_cmd->add_option("-o,--output", a_outdir, "output directory");

    // filter-probe
    auto* probe = app.add_subcommand("filter-probe", "emit per-band frequency responses as CSV");
    double p_fs = 250.0;
    std::string p_out;
    probe->add_option("--fs", p_fs, "sampling rate in Hz")->check(CLI::PositiveNumber);
    probe->add_option("--config", common.config_path, "key=value config file");
    probe->add_option("-o,--output", p_out, "output CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(s_trials, s_classes, s_eeg, s_emg, s_t, s_fs, s_seed, s_snr, s_out);
        if (train->parsed()) return cmd_train(t_dataset, common, t_outdir);
        if (eval->parsed()) return cmd_eval(e_ckpt, e_dataset, common, e_outdir);
        if (ablate_cmd->parsed()) return cmd_ablate(a_dataset, common, a_disable, a_outdir);
        if (probe->parsed()) return cmd_filter_probe(common, p_fs, p_out);
    } catch (const std::exception& e) {
        faconf::log_error(e.what());
        return 1;
    }
    return 1;
}
