// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "faconf/data_io.hpp"
#include "faconf/filterbank.hpp"
#include "faconf/metrics.hpp"
#include "faconf/model.hpp"
#include "faconf/rng.hpp"
#include "faconf/tensor.hpp"
#include "faconf/training.hpp"

using namespace faconf;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

std::vector<double> sine(double hz, double fs, std::size_t t, double amp = 1.0) {
    std::vector<double> out(t);
    for (std::size_t i = 0; i < t; ++i) out[i] = amp * std::sin(2.0 * kPi * hz * i / fs);
    return out;
}

double tone_amplitude(const std::vector<double>& x, std::size_t skip) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = skip; i + skip < x.size(); ++i) {
        acc += x[i] * x[i];
        ++n;
    }
    return std::sqrt(2.0 * acc / n);
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

bool criterion_gradients(std::string& detail) {
    Timer timer;
    RngState rng(101);
    ModelConfig cfg = ModelConfig::tiny();
    ModelParams p = ModelParams::init(cfg, rng);
    RngState data_rng(102);
    std::vector<Tensor> bands;
    for (std::size_t n = 0; n < cfg.n_bands; ++n)
        bands.push_back(Tensor::randn({cfg.eeg_channels, cfg.time_points}, data_rng, 0.5));
    Tensor emg = Tensor::randn({cfg.emg_channels, cfg.time_points}, data_rng, 0.5);

    auto loss_value = [&]() {
        return cross_entropy(forward_from_bands(bands, emg, cfg, p, nullptr, false), 1).item();
    };
    p.zero_grads();
    backward(cross_entropy(forward_from_bands(bands, emg, cfg, p, nullptr, false), 1));

    const double eps = 1e-5;
    double worst = 0.0;
    for (auto& [name, t] : p.named()) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double saved = (*t)[i];
            (*t)[i] = saved + eps;
            const double up = loss_value();
            (*t)[i] = saved - eps;
            const double down = loss_value();
            (*t)[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = t->grad()[i];
            const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    const double secs = timer.seconds();
    detail = "max rel err " + fmt(worst) + " over " + std::to_string(param_count(cfg)) +
             " params, " + fmt(secs) + " s";
    return worst < 1e-4 && secs < 60.0;
}

// ---------------------------------------------------------------------------
// 2. filter bank

bool criterion_filterbank(std::string& detail) {
    Timer timer;
    const double fs = 250.0;
    const FilterBank bank = make_filter_bank(default_band_layout(), fs);
    for (const auto& [spec, cascade] : bank.bands) {
        if (!cascade.stable()) {
            detail = "unstable cascade for band " + fmt(spec.low_hz) + "-" + fmt(spec.high_hz);
            return false;
        }
        const double center = std::sqrt(spec.low_hz * spec.high_hz);
        if (std::abs(frequency_response(cascade, {center})[0]) >= 1.0) {
            detail = "passband center off unity for band " + fmt(spec.low_hz) + "-" +
                     fmt(spec.high_hz);
            return false;
        }
        // scan both stopbands on a 0.1 Hz grid
        const double lo_edge = spec.low_hz - spec.trans_hz;
        const double hi_edge = spec.high_hz + spec.trans_hz;
        std::vector<double> freqs;
        for (double f = 0.1; f <= lo_edge + 1e-9; f += 0.1) freqs.push_back(f);
        for (double f = hi_edge; f <= fs / 2.0 - 0.05; f += 0.1) freqs.push_back(f);
        for (double m : frequency_response(cascade, freqs))
            if (m > -spec.stop_atten_db + 1e-6) {
                detail = "stopband above -" + fmt(spec.stop_atten_db) + " dB for band " +
                         fmt(spec.low_hz) + "-" + fmt(spec.high_hz);
                return false;
            }
    }

    // two-tone separation: 10 Hz into band 8-12, 25 Hz into band 24-28
    const std::size_t t = 2000;
    const auto s10 = sine(10.0, fs, t);
    const auto s25 = sine(25.0, fs, t, 0.7);
    Tensor trial({1, t});
    for (std::size_t i = 0; i < t; ++i) trial[i] = s10[i] + s25[i];
    const auto split = split_bands_list(trial, bank);
    const double a10 = tone_amplitude(split[1].values(), 150);  // band index 1 = 8-12 Hz
    const double a25 = tone_amplitude(split[5].values(), 150);  // band index 5 = 24-28 Hz
    const double secs = timer.seconds();
    detail = "recovered 10 Hz amp " + fmt(a10) + " (true 1.0), 25 Hz amp " + fmt(a25) +
             " (true 0.7), " + fmt(secs) + " s";
    return std::abs(a10 - 1.0) < 0.05 && std::abs(a25 - 0.7) < 0.05 * 0.7 && secs < 10.0;
}

// ---------------------------------------------------------------------------
// 3. metric oracles

bool criterion_metrics(std::string& detail) {
    RngState rng(303);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t k = 2 + rng.below(4);
        const std::size_t n = k + rng.below(200);
        std::vector<std::size_t> preds(n), labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = rng.below(k);
            labels[i] = rng.below(k);
        }
        const ConfusionMatrix cm = confusion(preds, labels, k);

        // brute force directly from the prediction lists
        std::int64_t match = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (preds[i] == labels[i]) ++match;
        if (accuracy(cm) != static_cast<double>(match) / static_cast<double>(n)) {
            detail = "accuracy mismatch at rep " + std::to_string(rep);
            return false;
        }
        std::int64_t ab = 0;
        for (std::size_t c = 0; c < k; ++c) {
            std::int64_t a = 0, b = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (labels[i] == c) ++a;
                if (preds[i] == c) ++b;
            }
            ab += a * b;
        }
        const std::int64_t nn = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n);
        if (ab == nn) continue;  // kappa undefined
        const double brute =
            static_cast<double>(match * static_cast<std::int64_t>(n) - ab) /
            static_cast<double>(nn - ab);
        if (kappa(cm) != brute) {
            detail = "kappa mismatch at rep " + std::to_string(rep);
            return false;
        }
        // cross-check against the double-precision ratio form
        const double pe = static_cast<double>(ab) / static_cast<double>(nn);
        const double p0 = static_cast<double>(match) / static_cast<double>(n);
        if (std::abs(kappa(cm) - (p0 - pe) / (1.0 - pe)) > 1e-12) {
            detail = "kappa ratio-form mismatch at rep " + std::to_string(rep);
            return false;
        }
    }

    // worked examples
    ConfusionMatrix perfect;
    perfect.n_classes = 2;
    perfect.counts = {3, 0, 0, 2};
    perfect.n = 5;
    ConfusionMatrix chance;
    chance.n_classes = 2;
    chance.counts = {1, 1, 1, 1};
    chance.n = 4;
    ConfusionMatrix worked;
    worked.n_classes = 2;
    worked.counts = {40, 10, 20, 30};
    worked.n = 100;
    if (kappa(perfect) != 1.0 || kappa(chance) != 0.0 || kappa(worked) != 0.4) {
        detail = "worked example failed: " + fmt(kappa(perfect)) + ", " + fmt(kappa(chance)) +
                 ", " + fmt(kappa(worked));
        return false;
    }
    detail = "1000 random tables and 3 worked examples agree exactly";
    return true;
}

// ---------------------------------------------------------------------------
// 4. loss contracts

bool criterion_losses(std::string& detail) {
    RngState rng(404);
    // no dropout => both passes identical => R-Drop collapses to plain CE
    for (int rep = 0; rep < 100; ++rep) {
        Tensor l = Tensor::randn({4}, rng, 2.0);
        const std::size_t label = rng.below(4);
        if (rdrop_loss(l, l, label, 0.5).item() != cross_entropy(l, label).item()) {
            detail = "rdrop did not reduce to cross entropy for identical passes";
            return false;
        }
    }
    for (int rep = 0; rep < 1000; ++rep) {
        Tensor a = Tensor::randn({5}, rng, 2.0);
        Tensor b = Tensor::randn({5}, rng, 2.0);
        if (kl_divergence_logits(a, b).item() < 0.0) {
            detail = "negative KL at rep " + std::to_string(rep);
            return false;
        }
    }
    for (std::size_t k = 2; k <= 6; ++k) {
        Tensor uniform({k}, 0.7);
        if (std::abs(cross_entropy(uniform, 0).item() - std::log(static_cast<double>(k))) > 1e-12) {
            detail = "uniform-logit CE differs from ln(" + std::to_string(k) + ")";
            return false;
        }
    }
    detail = "rdrop/CE identity, KL >= 0 on 1000 pairs, uniform CE = ln k";
    return true;
}

// ---------------------------------------------------------------------------
// 5. overfit sanity

ModelConfig overfit_model() {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.eeg_channels = 8;
    cfg.emg_channels = 2;
    cfg.time_points = 500;
    cfg.n_classes = 3;
    return cfg;
}

FilterBank overfit_bank() {
    std::vector<BandSpec> specs(2);
    specs[0].low_hz = 6.0;
    specs[0].high_hz = 10.0;
    specs[1].low_hz = 10.0;
    specs[1].high_hz = 14.0;
    return make_filter_bank(specs, 250.0);
}

bool criterion_overfit(std::string& detail) {
    Timer timer;
    const TrialSet set = make_synthetic(300, 3, 8, 2, 500, 250.0, 7, 10.0);
    const ModelConfig mcfg = overfit_model();
    const PreparedData data = prepare_trials(set, overfit_bank());

    TrainConfig tcfg;
    tcfg.learning_rate = 1e-3;
    tcfg.epochs = 200;
    tcfg.batch_size = 25;
    tcfg.seed = 7;
    TrainOptions opts;
    opts.stop_at_train_acc = 0.95;

    std::vector<std::size_t> all(set.n_trials);
    std::iota(all.begin(), all.end(), 0);
    FoldResult fit = train_on_indices(data, all, {}, mcfg, tcfg, opts);
    const double train_acc = accuracy(evaluate(data, all, mcfg, fit.params));
    if (train_acc < 0.95) {
        detail = "training accuracy " + fmt(train_acc) + " after " +
                 std::to_string(fit.history.size()) + " epochs";
        return false;
    }

    tcfg.folds = 5;
    const CrossValidationResult cv = cross_validate(data, mcfg, tcfg, opts);
    const double secs = timer.seconds();
    detail = "train acc " + fmt(train_acc) + " in " + std::to_string(fit.history.size()) +
             " epochs, 5-fold CV acc " + fmt(cv.mean_accuracy) + ", " + fmt(secs) + " s";
    return cv.mean_accuracy >= 0.80 && secs < 900.0;
}

// ---------------------------------------------------------------------------
// 6. ablation mechanics

bool criterion_ablation(std::string& detail) {
    RngState rng(606);
    const ModelConfig base = ModelConfig::tiny();
    for (const std::string& name : ablation_names()) {
        ModelConfig cfg = ablate(base, {name});
        ModelParams p = ModelParams::init(cfg, rng);
        if (p.count() != param_count(cfg)) {
            detail = "param_count mismatch for ablation '" + name + "'";
            return false;
        }
        if (param_count(cfg) == param_count(base)) {
            detail = "ablation '" + name + "' did not change the parameter count";
            return false;
        }
    }

    // all 16 switch combinations on a 10-epoch smoke run
    const TrialSet set = make_synthetic(12, 2, 3, 2, 128, 250.0, 11, 5.0);
    std::vector<BandSpec> specs(2);
    specs[0].low_hz = 6.0;
    specs[0].high_hz = 10.0;
    specs[1].low_hz = 10.0;
    specs[1].high_hz = 14.0;
    const PreparedData data = prepare_trials(set, make_filter_bank(specs, 250.0));
    std::vector<std::size_t> all(set.n_trials);
    std::iota(all.begin(), all.end(), 0);
    const std::vector<std::string> names(ablation_names().begin(), ablation_names().end());
    for (unsigned mask = 0; mask < 16; ++mask) {
        std::set<std::string> off;
        for (unsigned bit = 0; bit < 4; ++bit)
            if (mask & (1u << bit)) off.insert(names[bit]);
        ModelConfig cfg = ablate(base, off);
        cfg.eeg_channels = 3;
        cfg.emg_channels = 2;
        cfg.time_points = 128;
        cfg.n_classes = 2;
        TrainConfig tcfg;
        tcfg.learning_rate = 1e-3;
        tcfg.epochs = 10;
        tcfg.batch_size = 12;
        tcfg.seed = mask;
        ModelParams check = ModelParams::init(cfg, rng);
        if (check.count() != param_count(cfg)) {
            detail = "param_count mismatch for combination mask " + std::to_string(mask);
            return false;
        }
        try {
            const FoldResult fr = train_on_indices(data, all, {}, cfg, tcfg);
            if (fr.history.size() != 10 || !std::isfinite(fr.history.back().train_loss)) {
                detail = "combination mask " + std::to_string(mask) + " did not finish cleanly";
                return false;
            }
        } catch (const std::exception& e) {
            detail = "combination mask " + std::to_string(mask) + " threw: " + e.what();
            return false;
        }
    }
    detail = "4 single ablation deltas exact, 16/16 combinations trained 10 epochs";
    return true;
}

// ---------------------------------------------------------------------------
// 7. convexity / normalization invariants

bool criterion_invariants(std::string& detail) {
    RngState rng(707);
    const ModelConfig cfg = ModelConfig::tiny();

    for (int rep = 0; rep < 100; ++rep) {
        // band_fuse bounded by per-position extrema
        std::vector<Tensor> bands = {Tensor::randn({3, 5}, rng), Tensor::randn({3, 5}, rng),
                                     Tensor::randn({3, 5}, rng)};
        Tensor logits = Tensor::randn({3}, rng, 2.0);
        Tensor fused = band_fuse(bands, logits);
        for (std::size_t i = 0; i < fused.size(); ++i) {
            double lo = bands[0][i], hi = bands[0][i];
            for (std::size_t b = 1; b < 3; ++b) {
                lo = std::min(lo, bands[b][i]);
                hi = std::max(hi, bands[b][i]);
            }
            if (fused[i] < lo - 1e-12 || fused[i] > hi + 1e-12) {
                detail = "band_fuse escaped the band envelope at rep " + std::to_string(rep);
                return false;
            }
        }

        // attention matrix row-stochastic
        Tensor x = Tensor::randn({4, 8}, rng);
        Tensor wq = Tensor::randn({8, 3}, rng), wk = Tensor::randn({8, 3}, rng);
        Tensor a = softmax(mul_const(matmul(matmul(x, wq), transpose2d(matmul(x, wk))),
                                     1.0 / std::sqrt(3.0)),
                           1);
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 4; ++c) s += a[r * 4 + c];
            if (std::abs(s - 1.0) > 1e-9) {
                detail = "attention row sum " + fmt(s) + " at rep " + std::to_string(rep);
                return false;
            }
        }

        // SE gate strictly inside (0, 1)
        ModelParams p = ModelParams::init(cfg, rng);
        Tensor feat = Tensor::randn({cfg.fuse_filters, 16}, rng, 2.0);
        Tensor gate = sigmoid(matvec(p.se_w2, sigmoid(matvec(p.se_w1, mean_pool_time(feat)))));
        for (double g : gate.values())
            if (g <= 0.0 || g >= 1.0) {
                detail = "SE gate value " + fmt(g) + " outside (0,1)";
                return false;
            }

        // icscm channel independence under a single-channel perturbation
        Tensor ix = Tensor::randn({cfg.fuse_filters, cfg.time_points}, rng);
        Tensor base_out = icscm(ix, cfg, p);
        const std::size_t ch = rng.below(cfg.fuse_filters);
        Tensor perturbed = ix;
        for (std::size_t j = 0; j < cfg.time_points; ++j)
            perturbed[ch * cfg.time_points + j] += 1.0 + rng.uniform();
        Tensor pert_out = icscm(perturbed, cfg, p);
        const std::size_t tf = cfg.fused_time();
        for (std::size_t c = 0; c < cfg.fuse_filters; ++c) {
            if (c == ch) continue;
            for (std::size_t j = 0; j < tf; ++j)
                if (pert_out[c * tf + j] != base_out[c * tf + j]) {
                    detail = "icscm leaked between channels at rep " + std::to_string(rep);
                    return false;
                }
        }
    }
    detail = "band envelope, row-stochastic attention, SE gate, icscm independence x100";
    return true;
}

// ---------------------------------------------------------------------------
// 8. determinism and round trips

bool criterion_determinism(std::string& detail) {
#ifndef FACONF_CLI_PATH
    detail = "FACONF_CLI_PATH not defined";
    return false;
#else
    const fs::path work = fs::temp_directory_path() / "faconf_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string cli = FACONF_CLI_PATH;
    const std::string dataset = (work / "data.fact").string();
    const std::string config = (work / "run.cfg").string();
    {
        std::ofstream os(config);
        os << "bands = 6-10,10-14\nkernel_sizes = 3,5,7,9\nfuse_filters = 16\n"
              "icscm_stride = 4\nicscm_kernel = 5\nattn_heads = 2\nattn_dim = 4\n"
              "emg_blocks = 2\nemg_filters = 4\nlr = 0.001\nepochs = 2\nbatch_size = 8\n"
              "folds = 2\nseed = 5\n";
    }
    auto run = [&](const std::string& cmd) {
        const std::string full = cmd + " > /dev/null 2>>" + (work / "stderr.log").string();
        return std::system(full.c_str()) == 0;
    };
    if (!run(cli + " synth --trials 24 --classes 2 --eeg-channels 3 --emg-channels 2"
                   " --time-points 128 --fs 250 --seed 3 -o " + dataset)) {
        detail = "synth command failed";
        return false;
    }
    const std::string out_a = (work / "run_a").string();
    const std::string out_b = (work / "run_b").string();
    if (!run(cli + " train " + dataset + " --config " + config + " -o " + out_a) ||
        !run(cli + " train " + dataset + " --config " + config + " -o " + out_b)) {
        detail = "train command failed (see " + (work / "stderr.log").string() + ")";
        return false;
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(out_a)) {
        const std::string name = entry.path().filename().string();
        if (file_bytes(entry.path().string()) != file_bytes(out_b + "/" + name)) {
            detail = "train output differs between runs: " + name;
            return false;
        }
        ++compared;
    }
    if (compared == 0) {
        detail = "train produced no output files";
        return false;
    }

    // container bitwise round trip
    const TrialSet loaded = read_container(dataset);
    const std::string rewrite = (work / "rewrite.fact").string();
    write_container(loaded, rewrite);
    if (file_bytes(dataset) != file_bytes(rewrite)) {
        detail = "container rewrite is not byte-identical";
        return false;
    }

    // decimate bounds: 40 Hz preserved within 2 %, 200 Hz rejected >= 25 dB
    TrialSet tones;
    tones.n_trials = 1;
    tones.eeg_channels = 2;
    tones.emg_channels = 1;
    tones.time_points = 2000;
    tones.fs_hz = 1000.0;
    tones.n_classes = 1;
    tones.labels = {0};
    tones.eeg.resize(2 * 2000);
    tones.emg.assign(2000, 0.0);
    for (std::size_t i = 0; i < 2000; ++i) {
        tones.eeg[i] = std::sin(2 * kPi * 40.0 * i / 1000.0);
        tones.eeg[2000 + i] = std::sin(2 * kPi * 200.0 * i / 1000.0);
    }
    const TrialSet dec = decimate(tones, 4);
    const std::size_t td = dec.time_points;
    const double keep = tone_amplitude(
        std::vector<double>(dec.eeg.begin(), dec.eeg.begin() + td), 50);
    const double alias = tone_amplitude(
        std::vector<double>(dec.eeg.begin() + td, dec.eeg.begin() + 2 * td), 50);
    if (std::abs(keep - 1.0) > 0.02) {
        detail = "decimate altered a 40 Hz tone to amplitude " + fmt(keep);
        return false;
    }
    if (20.0 * std::log10(1.0 / std::max(alias, 1e-12)) < 25.0) {
        detail = "decimate alias rejection only " +
                 fmt(20.0 * std::log10(1.0 / std::max(alias, 1e-12))) + " dB";
        return false;
    }
    fs::remove_all(work);
    detail = std::to_string(compared) + " train artifacts byte-identical, container and "
             "decimate bounds hold";
    return true;
#endif
}

// ---------------------------------------------------------------------------
// 9. chance-level control

bool criterion_chance(std::string& detail) {
    RngState rng(909);
    std::vector<std::size_t> labels(3000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3;
    for (std::size_t i = labels.size(); i > 1; --i)
        std::swap(labels[i - 1], labels[rng.below(i)]);
    const std::vector<std::size_t> preds(labels.size(), 0);  // constant prediction
    const ConfusionMatrix cm = confusion(preds, labels, 3);
    const double acc = accuracy(cm);
    const double kap = kappa(cm);
    detail = "constant predictor: acc " + fmt(acc) + ", kappa " + fmt(kap);
    return std::abs(acc - 1.0 / 3.0) <= 0.02 && std::abs(kap) <= 0.02;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        bool (*fn)(std::string&);
    };
    const Criterion criteria[] = {
        {"1 gradient integrity", criterion_gradients},
        {"2 filter bank", criterion_filterbank},
        {"3 metric oracles", criterion_metrics},
        {"4 loss contracts", criterion_losses},
        {"5 overfit sanity", criterion_overfit},
        {"6 ablation mechanics", criterion_ablation},
        {"7 convexity/normalization invariants", criterion_invariants},
        {"8 determinism and round trips", criterion_determinism},
        {"9 chance-level control", criterion_chance},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.name
                  << (detail.empty() ? "" : " — " + detail) << std::endl;
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
