#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "faconf/data_io.hpp"
#include "faconf/errors.hpp"
#include "faconf/metrics.hpp"
#include "faconf/model.hpp"
#include "faconf/rng.hpp"
#include "faconf/tensor.hpp"

namespace faconf {

struct TrainConfig {
    double learning_rate = 1e-6;
    std::size_t epochs = 500;
    std::size_t batch_size = 100;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double rdrop_alpha = 0.5;
    std::uint64_t seed = 0;
    std::size_t folds = 5;
    bool stratified = true;

    void validate() const {
        if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (folds < 2) throw ConfigError("folds must be >= 2");
        if (rdrop_alpha < 0.0) throw ConfigError("rdrop_alpha must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// losses

// -log softmax(logits)[label], stabilized via log-sum-exp.
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    if (logits.ndim() != 1)
        throw ShapeError("cross_entropy expects a logit vector, got " + shape_str(logits.shape()));
    const std::size_t k = logits.dim(0);
    if (label >= k)
        throw DataError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                        std::to_string(k) + " classes");
    const bool track = logits.requires_grad();
    Tensor out = make_result({1}, track, {logits.node()});
    double mx = logits[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);
    out[0] = mx + std::log(sum) - logits[label];
    if (track) {
        auto ln = logits.node();
        auto* on = out.node().get();
        out.node()->backprop = [ln, on, k, label, mx, sum] {
            ln->ensure_grad();
            // d/dl_i = softmax_i - onehot_i
            for (std::size_t i = 0; i < k; ++i) {
                const double p = std::exp(ln->data[i] - mx) / sum;
                ln->grad[i] += on->grad[0] * (p - (i == label ? 1.0 : 0.0));
            }
        };
    }
    return out;
}

// KL(softmax(a) || softmax(b)) as a scalar graph node.
inline Tensor kl_divergence_logits(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "kl_divergence_logits");
    if (a.ndim() != 1) throw ShapeError("kl_divergence_logits expects logit vectors");
    const std::size_t k = a.dim(0);
    auto log_softmax = [k](const std::vector<double>& x) {
        double mx = x[0];
        for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += std::exp(x[i] - mx);
        const double lse = mx + std::log(sum);
        std::vector<double> out(k);
        for (std::size_t i = 0; i < k; ++i) out[i] = x[i] - lse;
        return out;
    };
    const std::vector<double> lsa = log_softmax(a.values());
    const std::vector<double> lsb = log_softmax(b.values());
    const bool track = any_requires_grad({&a, &b});
    Tensor out = make_result({1}, track, {a.node(), b.node()});
    double kl = 0.0;
    for (std::size_t i = 0; i < k; ++i) kl += std::exp(lsa[i]) * (lsa[i] - lsb[i]);
    out[0] = std::max(kl, 0.0);
    if (track) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, bn, on, lsa, lsb, k, kl] {
            // d/da_i = p_a_i * ((lsa_i - lsb_i) - KL); d/db_i = p_b_i - p_a_i
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < k; ++i)
                    an->grad[i] += on->grad[0] * std::exp(lsa[i]) * ((lsa[i] - lsb[i]) - kl);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < k; ++i)
                    bn->grad[i] += on->grad[0] * (std::exp(lsb[i]) - std::exp(lsa[i]));
            }
        };
    }
    return out;
}

// R-Drop loss over two dropout-perturbed passes:
// L = (CE1 + CE2)/2 + (alpha/2) * (KL(p1||p2) + KL(p2||p1)).
inline Tensor rdrop_loss(const Tensor& logits1, const Tensor& logits2, std::size_t label,
                         double alpha) {
    Tensor ce = mul_const(add(cross_entropy(logits1, label), cross_entropy(logits2, label)), 0.5);
    if (alpha == 0.0) return ce;
    Tensor kl = add(kl_divergence_logits(logits1, logits2), kl_divergence_logits(logits2, logits1));
    return add(ce, mul_const(kl, alpha / 2.0));
}

// ---------------------------------------------------------------------------
// optimizer

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;

    static AdamState init(const std::vector<Tensor*>& params) {
        AdamState s;
        for (Tensor* p : params) {
            s.m.emplace_back(p->size(), 0.0);
            s.v.emplace_back(p->size(), 0.0);
        }
        return s;
    }
};

// Bias-corrected Adam update in place. Gradients are read from each tensor's
// grad buffer; a NaN gradient aborts with the parameter's name.
inline void adam_step(const std::vector<std::pair<std::string, Tensor*>>& params, AdamState& state,
                      const TrainConfig& cfg) {
    if (state.m.size() != params.size())
        throw ConfigError("adam_step: state tracks " + std::to_string(state.m.size()) +
                          " tensors, got " + std::to_string(params.size()));
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor* p = params[pi].second;
        const std::vector<double>& g = p->grad();
        std::vector<double>& m = state.m[pi];
        std::vector<double>& v = state.v[pi];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::isnan(g[i]))
                throw TrainingError("NaN gradient in parameter '" + params[pi].first + "'");
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            (*p)[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

// ---------------------------------------------------------------------------
// cross-validation machinery

struct FoldSplit {
    std::vector<std::size_t> assignment;  // trial index -> fold id
    std::size_t folds = 0;

    std::vector<std::size_t> fold_indices(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] == fold) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> complement_indices(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] != fold) out.push_back(i);
        return out;
    }
};

// Seeded stratified partition: per class, shuffle then deal round-robin with
// a rotating start so per-class fold counts differ by at most one.
inline FoldSplit stratified_kfold(const std::vector<std::uint16_t>& labels, std::size_t k,
                                  std::uint64_t seed) {
    if (k < 2) throw ConfigError("stratified_kfold: k must be >= 2");
    std::size_t n_classes = 0;
    for (std::uint16_t l : labels) n_classes = std::max<std::size_t>(n_classes, l + 1);
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (std::size_t c = 0; c < n_classes; ++c)
        if (by_class[c].size() < k)
            throw DataError("class " + std::to_string(c) + " has only " +
                            std::to_string(by_class[c].size()) + " trials for " + std::to_string(k) +
                            " folds");

    RngState rng(seed);
    FoldSplit split;
    split.folds = k;
    split.assignment.assign(labels.size(), 0);
    std::size_t start = 0;
    for (auto& indices : by_class) {
        for (std::size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.below(i)]);
        for (std::size_t j = 0; j < indices.size(); ++j)
            split.assignment[indices[j]] = (start + j) % k;
        start = (start + indices.size()) % k;
    }
    return split;
}

// Unstratified variant: plain seeded shuffle dealt round-robin.
inline FoldSplit random_kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("random_kfold: k must be >= 2");
    if (n < k) throw DataError("random_kfold: fewer trials than folds");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    RngState rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    FoldSplit split;
    split.folds = k;
    split.assignment.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) split.assignment[order[j]] = j % k;
    return split;
}

// ---------------------------------------------------------------------------
// data preparation

// Band-split EEG and raw EMG tensors for every trial, computed once so the
// filter bank does not run inside the epoch loop.
struct PreparedData {
    std::vector<std::vector<Tensor>> bands;  // per trial, per band [C x T]
    std::vector<Tensor> emg;                 // per trial [emg_channels x T]
    std::vector<std::uint16_t> labels;
    std::size_t n_classes = 0;
};

inline PreparedData prepare_trials(const TrialSet& set, const FilterBank& bank,
                                   const DenoiseHook& denoise = passthrough_denoise()) {
    set.validate();
    PreparedData data;
    data.labels = set.labels;
    data.n_classes = set.n_classes;
    data.bands.reserve(set.n_trials);
    data.emg.reserve(set.n_trials);
    for (std::size_t i = 0; i < set.n_trials; ++i) {
        data.bands.push_back(split_bands_list(denoise(set.trial_eeg(i)), bank));
        data.emg.push_back(set.trial_emg(i));
    }
    return data;
}

inline std::size_t predict_one(const PreparedData& data, std::size_t trial, const ModelConfig& cfg,
                               ModelParams& eval_params) {
    Tensor logits =
        forward_from_bands(data.bands[trial], data.emg[trial], cfg, eval_params, nullptr, false);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

inline ConfusionMatrix evaluate(const PreparedData& data, const std::vector<std::size_t>& indices,
                                const ModelConfig& cfg, ModelParams& params) {
    ModelParams eval_params = params.detached();
    std::vector<std::size_t> preds, truth;
    preds.reserve(indices.size());
    for (std::size_t idx : indices) {
        preds.push_back(predict_one(data, idx, cfg, eval_params));
        truth.push_back(data.labels[idx]);
    }
    return confusion(preds, truth, data.n_classes);
}

// ---------------------------------------------------------------------------
// training loops

struct EpochRecord {
    double train_loss;
    double val_acc;
};

struct FoldResult {
    ModelParams params;
    std::vector<EpochRecord> history;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double kappa = 0.0;
};

// Optional early exit for desk-scale runs: stop once training accuracy
// reaches the threshold. Disabled (> 1) by default.
struct TrainOptions {
    double stop_at_train_acc = 2.0;
    std::size_t jobs = 1;  // parallel fold workers in cross_validate
};

inline FoldResult train_on_indices(const PreparedData& data, std::vector<std::size_t> train_idx,
                                   const std::vector<std::size_t>& val_idx, const ModelConfig& mcfg,
                                   const TrainConfig& tcfg, const TrainOptions& opts = {}) {
    mcfg.validate();
    tcfg.validate();
    if (train_idx.empty()) throw DataError("train_on_indices: empty training set");
    RngState init_rng = RngState(tcfg.seed).derive(0x1a17);
    FoldResult result;
    result.params = ModelParams::init(mcfg, init_rng);
    auto named = result.params.named();
    AdamState adam = AdamState::init(result.params.trainable());
    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        RngState epoch_rng = RngState(tcfg.seed).derive(0xe90c + epoch);
        // epoch-wise reshuffle of the training fold
        for (std::size_t i = train_idx.size(); i > 1; --i)
            std::swap(train_idx[i - 1], train_idx[epoch_rng.below(i)]);

        double loss_sum = 0.0;
        std::size_t batch_start = 0;
        std::size_t batch_no = 0;
        while (batch_start < train_idx.size()) {
            const std::size_t batch_end =
                std::min(batch_start + tcfg.batch_size, train_idx.size());
            const double inv_b = 1.0 / static_cast<double>(batch_end - batch_start);
            result.params.zero_grads();
            Tensor batch_loss;
            bool first = true;
            for (std::size_t i = batch_start; i < batch_end; ++i) {
                const std::size_t trial = train_idx[i];
                Tensor l1 = forward_from_bands(data.bands[trial], data.emg[trial], mcfg,
                                               result.params, &epoch_rng, true);
                Tensor l2 = forward_from_bands(data.bands[trial], data.emg[trial], mcfg,
                                               result.params, &epoch_rng, true);
                Tensor loss = rdrop_loss(l1, l2, data.labels[trial], tcfg.rdrop_alpha);
                batch_loss = first ? loss : add(batch_loss, loss);
                first = false;
            }
            batch_loss = mul_const(batch_loss, inv_b);
            if (std::isnan(batch_loss.item()))
                throw TrainingError("NaN loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_no));
            loss_sum += batch_loss.item() * static_cast<double>(batch_end - batch_start);
            backward(batch_loss);
            adam_step(named, adam, tcfg);
            batch_start = batch_end;
            ++batch_no;
        }

        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
        rec.val_acc = val_idx.empty() ? 0.0 : accuracy(evaluate(data, val_idx, mcfg, result.params));
        result.history.push_back(rec);

        if (opts.stop_at_train_acc <= 1.0) {
            const double train_acc = accuracy(evaluate(data, train_idx, mcfg, result.params));
            if (train_acc >= opts.stop_at_train_acc) break;
        }
    }
    if (!val_idx.empty()) {
        result.confusion = evaluate(data, val_idx, mcfg, result.params);
        result.accuracy = accuracy(result.confusion);
        result.kappa = kappa(result.confusion);
    }
    return result;
}

inline FoldResult train_fold(const TrialSet& trainset, const TrialSet& valset,
                             const ModelConfig& mcfg, const TrainConfig& tcfg,
                             const FilterBank& bank, const TrainOptions& opts = {}) {
    // merge into one PreparedData so both splits share the cached band-split
    TrialSet merged = trainset;
    merged.n_trials = trainset.n_trials + valset.n_trials;
    merged.eeg.insert(merged.eeg.end(), valset.eeg.begin(), valset.eeg.end());
    merged.emg.insert(merged.emg.end(), valset.emg.begin(), valset.emg.end());
    merged.labels.insert(merged.labels.end(), valset.labels.begin(), valset.labels.end());
    merged.n_classes = std::max(trainset.n_classes, valset.n_classes);
    PreparedData data = prepare_trials(merged, bank);
    std::vector<std::size_t> train_idx(trainset.n_trials), val_idx(valset.n_trials);
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::iota(val_idx.begin(), val_idx.end(), trainset.n_trials);
    return train_on_indices(data, train_idx, val_idx, mcfg, tcfg, opts);
}

struct CrossValidationResult {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double mean_kappa = 0.0;
};

// Trains `folds` independent models, each evaluated on its held-out fold.
inline CrossValidationResult cross_validate(const PreparedData& data, const ModelConfig& mcfg,
                                            const TrainConfig& tcfg, const TrainOptions& opts = {}) {
    const FoldSplit split = tcfg.stratified
                                ? stratified_kfold(data.labels, tcfg.folds, tcfg.seed)
                                : random_kfold(data.labels.size(), tcfg.folds, tcfg.seed);
    CrossValidationResult result;
    result.folds.resize(tcfg.folds);
    auto run_fold = [&](std::size_t fold) {
        TrainConfig fold_cfg = tcfg;
        fold_cfg.seed = RngState(tcfg.seed).derive(0xf01d + fold).seed();
        result.folds[fold] = train_on_indices(data, split.complement_indices(fold),
                                              split.fold_indices(fold), mcfg, fold_cfg, opts);
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.jobs, tcfg.folds));
    if (workers == 1) {
        for (std::size_t fold = 0; fold < tcfg.folds; ++fold) run_fold(fold);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t fold = next.fetch_add(1); fold < tcfg.folds;
                         fold = next.fetch_add(1))
                        run_fold(fold);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }
    for (const FoldResult& fr : result.folds) {
        result.mean_accuracy += fr.accuracy;
        result.mean_kappa += fr.kappa;
    }
    result.mean_accuracy /= static_cast<double>(tcfg.folds);
    result.mean_kappa /= static_cast<double>(tcfg.folds);
    return result;
}

inline CrossValidationResult cross_validate(const TrialSet& set, const ModelConfig& mcfg,
                                            const TrainConfig& tcfg, const FilterBank& bank,
                                            const TrainOptions& opts = {}) {
    return cross_validate(prepare_trials(set, bank), mcfg, tcfg, opts);
}

// ---------------------------------------------------------------------------
// synthetic data

// Desk-scale verification data: class c carries a tone at (8 + 4c) Hz on a
// class-specific EEG channel subset, and a class-specific burst envelope on
// one EMG channel, plus white noise at the requested SNR (amplitude ratio).
inline TrialSet make_synthetic(std::size_t n_trials, std::size_t n_classes,
                               std::size_t eeg_channels, std::size_t emg_channels, std::size_t t,
                               double fs, std::uint64_t seed, double snr) {
    if (n_trials == 0 || n_classes == 0 || eeg_channels == 0 || emg_channels == 0 || t == 0 ||
        fs <= 0.0 || snr <= 0.0)
        throw ConfigError("make_synthetic: all parameters must be positive");
    RngState rng(seed);
    TrialSet set;
    set.n_trials = n_trials;
    set.eeg_channels = eeg_channels;
    set.emg_channels = emg_channels;
    set.time_points = t;
    set.fs_hz = fs;
    set.n_classes = n_classes;
    set.subject_id = "synthetic";
    for (std::size_t c = 0; c < n_classes; ++c) set.class_names.push_back("class" + std::to_string(c));
    set.eeg.resize(n_trials * eeg_channels * t);
    set.emg.resize(n_trials * emg_channels * t);
    set.labels.resize(n_trials);

    const double noise_std = 1.0 / snr;
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
        const std::size_t cls = trial % n_classes;
        set.labels[trial] = static_cast<std::uint16_t>(cls);
        const double tone_hz = 8.0 + 4.0 * static_cast<double>(cls);
        const double phase = two_pi * rng.uniform();
        for (std::size_t ch = 0; ch < eeg_channels; ++ch) {
            const bool active = ch % n_classes == cls;
            const double amp = active ? 1.0 : 0.0;
            double* row = set.eeg.data() + (trial * eeg_channels + ch) * t;
            for (std::size_t j = 0; j < t; ++j)
                row[j] = amp * std::sin(two_pi * tone_hz * j / fs + phase) + noise_std * rng.normal();
        }
        // burst envelope centered at a class-specific time on one channel
        const double center = (static_cast<double>(cls) + 1.0) /
                              (static_cast<double>(n_classes) + 1.0) * static_cast<double>(t);
        const double width = static_cast<double>(t) / (4.0 * static_cast<double>(n_classes));
        for (std::size_t ch = 0; ch < emg_channels; ++ch) {
            const bool active = ch == cls % emg_channels;
            double* row = set.emg.data() + (trial * emg_channels + ch) * t;
            for (std::size_t j = 0; j < t; ++j) {
                const double dt = (static_cast<double>(j) - center) / width;
                const double env = active ? std::exp(-0.5 * dt * dt) : 0.0;
                row[j] = env * (1.0 + 0.2 * rng.normal()) + noise_std * rng.normal();
            }
        }
    }
    set.validate();
    return set;
}

}  // namespace faconf
