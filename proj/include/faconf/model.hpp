#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "faconf/data_io.hpp"
#include "faconf/errors.hpp"
#include "faconf/filterbank.hpp"
#include "faconf/rng.hpp"
#include "faconf/tensor.hpp"

namespace faconf {

// Hook point for an external EEG denoiser; the default is a pass-through.
using DenoiseHook = std::function<Tensor(const Tensor&)>;

inline DenoiseHook passthrough_denoise() {
    return [](const Tensor& x) { return x; };
}

constexpr std::size_t kEmgKernel = 7;

// Architecture hyperparameters. The four `use_*` switches correspond to the
// ablatable modules.
struct ModelConfig {
    std::size_t n_bands = 9;
    std::size_t eeg_channels = 60;
    std::size_t emg_channels = 6;
    std::size_t time_points = 1000;  // post-decimation
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
    std::size_t n_classes = 3;
    bool shared_band_attention = true;

    bool use_band_attention = true;
    bool use_multiscale = true;
    bool use_emg = true;
    bool use_icscm = true;

    std::size_t fused_time() const { return time_points / icscm_stride; }
    std::size_t fused_channels() const { return fuse_filters + (use_emg ? emg_filters : 0); }

    void validate() const {
        if (n_bands == 0 || eeg_channels == 0 || emg_channels == 0 || time_points == 0 ||
            n_classes < 2)
            throw ConfigError("model dimensions must be positive and n_classes >= 2");
        if (kernel_sizes.size() != 4) throw ConfigError("exactly four multiscale kernel sizes required");
        for (std::size_t k : kernel_sizes) {
            if (k % 2 == 0) throw ConfigError("multiscale kernel sizes must be odd");
            if (k > time_points) throw ConfigError("multiscale kernel exceeds time_points");
        }
        if (fuse_filters % 4 != 0)
            throw ConfigError("fuse_filters must be divisible by 4 (one quarter per scale)");
        if (fuse_filters % attn_heads != 0)
            throw ConfigError("fuse_filters must be divisible by attn_heads");
        if (icscm_kernel % 2 == 0) throw ConfigError("icscm_kernel must be odd");
        if (icscm_stride == 0 || time_points % icscm_stride != 0)
            throw ConfigError("icscm_stride must divide time_points");
        if (se_reduction_ratio == 0 || fuse_filters % se_reduction_ratio != 0)
            throw ConfigError("se_reduction_ratio must divide fuse_filters");
        if (attn_heads == 0 || attn_dim == 0) throw ConfigError("attention heads and dim must be positive");
        if (emg_blocks == 0 || emg_filters == 0) throw ConfigError("EMG branch needs blocks and filters");
        if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0, 1)");
        if (time_points < kEmgKernel) throw ConfigError("time_points too short for the EMG kernel");
    }

    // Desk-scale configuration used by gradient checks and fast tests.
    static ModelConfig tiny() {
        ModelConfig c;
        c.n_bands = 2;
        c.eeg_channels = 3;
        c.emg_channels = 2;
        c.time_points = 64;
        c.kernel_sizes = {3, 5, 7, 9};
        c.fuse_filters = 16;
        c.icscm_stride = 4;
        c.icscm_kernel = 5;
        c.se_reduction_ratio = 8;
        c.attn_heads = 2;
        c.attn_dim = 4;
        c.emg_blocks = 2;
        c.emg_filters = 4;
        c.dropout_p = 0.1;
        c.n_classes = 3;
        return c;
    }
};

// Named ablation switches mirroring the ablation study rows.
inline const std::set<std::string>& ablation_names() {
    static const std::set<std::string> names = {"band_attention", "multiscale", "emg", "icscm"};
    return names;
}

inline ModelConfig ablate(ModelConfig config, const std::set<std::string>& disable) {
    for (const std::string& name : disable) {
        if (name == "band_attention")
            config.use_band_attention = false;
        else if (name == "multiscale")
            config.use_multiscale = false;
        else if (name == "emg")
            config.use_emg = false;
        else if (name == "icscm")
            config.use_icscm = false;
        else
            throw ConfigError("unknown ablation switch '" + name + "'");
    }
    return config;
}

// All trainable values. Projections are bias-free; convolutions carry biases.
struct ModelParams {
    Tensor band_logits;                       // [N_b], softmaxed into w(n)
    std::vector<Tensor> attn_wq, attn_wk, attn_wv, attn_wo;  // 1 set if shared, else N_b
    std::vector<Tensor> ms_w, ms_b;           // 4 branches, or 1 when multiscale is off
    Tensor merge_w, merge_b;                  // 1x1 fuse conv
    Tensor icscm_w, icscm_b;
    Tensor se_w1, se_w2;
    struct EmgBlock {
        Tensor w1, b1, w2, b2;
        bool has_skip = false;
        Tensor skip_w, skip_b;
    };
    std::vector<EmgBlock> emg;
    std::vector<Tensor> fuse_wq, fuse_wk, fuse_wv, fuse_wo;  // per head
    Tensor cls_w, cls_b;

    static ModelParams init(const ModelConfig& cfg, RngState& rng) {
        cfg.validate();
        ModelParams p;
        const std::size_t t = cfg.time_points;
        const std::size_t d = cfg.attn_dim;
        const std::size_t f = cfg.fuse_filters;
        const std::size_t c = cfg.eeg_channels;
        auto w_init = [&rng](Shape shape, std::size_t fan_in) {
            return Tensor::randn(shape, rng, std::sqrt(1.0 / static_cast<double>(fan_in)), true);
        };
        auto zeros = [](Shape shape) { return Tensor(std::move(shape), 0.0, true); };

        if (cfg.use_band_attention) {
            p.band_logits = zeros({cfg.n_bands});
            const std::size_t sets = cfg.shared_band_attention ? 1 : cfg.n_bands;
            for (std::size_t s = 0; s < sets; ++s) {
                p.attn_wq.push_back(w_init({t, d}, t));
                p.attn_wk.push_back(w_init({t, d}, t));
                p.attn_wv.push_back(w_init({t, d}, t));
                p.attn_wo.push_back(w_init({d, t}, d));
            }
        }
        if (cfg.use_multiscale) {
            for (std::size_t k = 0; k < 4; ++k) {
                const std::size_t sk = cfg.kernel_sizes[k];
                p.ms_w.push_back(w_init({f / 4, c, sk}, c * sk));
                p.ms_b.push_back(zeros({f / 4}));
            }
        } else {
            const std::size_t sk = cfg.kernel_sizes[1];
            p.ms_w.push_back(w_init({f, c, sk}, c * sk));
            p.ms_b.push_back(zeros({f}));
        }
        p.merge_w = w_init({f, f, 1}, f);
        p.merge_b = zeros({f});
        if (cfg.use_icscm) {
            p.icscm_w = w_init({f, 1, cfg.icscm_kernel}, cfg.icscm_kernel);
        } else {
            p.icscm_w = w_init({f, f, cfg.icscm_kernel}, f * cfg.icscm_kernel);
        }
        p.icscm_b = zeros({f});
        p.se_w1 = w_init({f / cfg.se_reduction_ratio, f}, f);
        p.se_w2 = w_init({f, f / cfg.se_reduction_ratio}, f / cfg.se_reduction_ratio);
        if (cfg.use_emg) {
            const std::size_t g = cfg.emg_filters;
            for (std::size_t b = 0; b < cfg.emg_blocks; ++b) {
                EmgBlock blk;
                const std::size_t in_c = b == 0 ? cfg.emg_channels : g;
                blk.w1 = w_init({g, in_c, kEmgKernel}, in_c * kEmgKernel);
                blk.b1 = zeros({g});
                blk.w2 = w_init({g, g, kEmgKernel}, g * kEmgKernel);
                blk.b2 = zeros({g});
                if (in_c != g) {
                    blk.has_skip = true;
                    blk.skip_w = w_init({g, in_c, 1}, in_c);
                    blk.skip_b = zeros({g});
                }
                p.emg.push_back(std::move(blk));
            }
        }
        const std::size_t tf = cfg.fused_time();
        for (std::size_t h = 0; h < cfg.attn_heads; ++h) {
            p.fuse_wq.push_back(w_init({tf, d}, tf));
            p.fuse_wk.push_back(w_init({tf, d}, tf));
            p.fuse_wv.push_back(w_init({tf, d}, tf));
            p.fuse_wo.push_back(w_init({d, tf}, d));
        }
        const std::size_t c_tot = cfg.fused_channels();
        p.cls_w = w_init({cfg.n_classes, c_tot}, c_tot);
        p.cls_b = zeros({cfg.n_classes});
        return p;
    }

    std::vector<std::pair<std::string, Tensor*>> named() {
        std::vector<std::pair<std::string, Tensor*>> out;
        auto push = [&out](const std::string& name, Tensor& t) {
            if (t.size() > 0) out.push_back({name, &t});
        };
        push("band_logits", band_logits);
        for (std::size_t i = 0; i < attn_wq.size(); ++i) {
            const std::string tag = attn_wq.size() > 1 ? "." + std::to_string(i) : "";
            push("band_attn.wq" + tag, attn_wq[i]);
            push("band_attn.wk" + tag, attn_wk[i]);
            push("band_attn.wv" + tag, attn_wv[i]);
            push("band_attn.wo" + tag, attn_wo[i]);
        }
        for (std::size_t i = 0; i < ms_w.size(); ++i) {
            push("multiscale.w" + std::to_string(i), ms_w[i]);
            push("multiscale.b" + std::to_string(i), ms_b[i]);
        }
        push("merge.w", merge_w);
        push("merge.b", merge_b);
        push("icscm.w", icscm_w);
        push("icscm.b", icscm_b);
        push("se.w1", se_w1);
        push("se.w2", se_w2);
        for (std::size_t i = 0; i < emg.size(); ++i) {
            const std::string tag = "emg." + std::to_string(i);
            push(tag + ".w1", emg[i].w1);
            push(tag + ".b1", emg[i].b1);
            push(tag + ".w2", emg[i].w2);
            push(tag + ".b2", emg[i].b2);
            if (emg[i].has_skip) {
                push(tag + ".skip_w", emg[i].skip_w);
                push(tag + ".skip_b", emg[i].skip_b);
            }
        }
        for (std::size_t h = 0; h < fuse_wq.size(); ++h) {
            const std::string tag = "fuse." + std::to_string(h);
            push(tag + ".wq", fuse_wq[h]);
            push(tag + ".wk", fuse_wk[h]);
            push(tag + ".wv", fuse_wv[h]);
            push(tag + ".wo", fuse_wo[h]);
        }
        push("classifier.w", cls_w);
        push("classifier.b", cls_b);
        return out;
    }

    std::vector<Tensor*> trainable() {
        std::vector<Tensor*> out;
        for (auto& [name, t] : named()) out.push_back(t);
        return out;
    }

    std::size_t count() {
        std::size_t n = 0;
        for (Tensor* t : trainable()) n += t->size();
        return n;
    }

    void zero_grads() {
        for (Tensor* t : trainable()) t->zero_grad();
    }

    // Gradient-free clones for evaluation passes.
    ModelParams detached() {
        ModelParams copy = *this;
        auto strip = [](Tensor& t) {
            if (t.size() > 0) t = t.detach();
        };
        for (auto& [name, ptr] : copy.named()) strip(*ptr);
        return copy;
    }
};

// Exact trainable scalar count; kept in closed form so tests can compare it
// against enumeration over ModelParams.
inline std::size_t param_count(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t t = cfg.time_points, d = cfg.attn_dim, f = cfg.fuse_filters;
    const std::size_t c = cfg.eeg_channels, g = cfg.emg_filters, tf = cfg.fused_time();
    std::size_t n = 0;
    if (cfg.use_band_attention) {
        n += cfg.n_bands;  // band_logits
        const std::size_t sets = cfg.shared_band_attention ? 1 : cfg.n_bands;
        n += sets * 4 * t * d;
    }
    if (cfg.use_multiscale) {
        for (std::size_t k = 0; k < 4; ++k) n += (f / 4) * c * cfg.kernel_sizes[k] + f / 4;
    } else {
        n += f * c * cfg.kernel_sizes[1] + f;
    }
    n += f * f + f;  // 1x1 merge
    n += (cfg.use_icscm ? f * cfg.icscm_kernel : f * f * cfg.icscm_kernel) + f;
    n += 2 * f * (f / cfg.se_reduction_ratio);  // SE gate
    if (cfg.use_emg) {
        for (std::size_t b = 0; b < cfg.emg_blocks; ++b) {
            const std::size_t in_c = b == 0 ? cfg.emg_channels : g;
            n += g * in_c * kEmgKernel + g + g * g * kEmgKernel + g;
            if (in_c != g) n += g * in_c + g;
        }
    }
    n += cfg.attn_heads * 4 * tf * d;
    n += cfg.n_classes * cfg.fused_channels() + cfg.n_classes;
    return n;
}

// ---------------------------------------------------------------------------
// blocks

// Scaled dot-product self-attention over channels (tokens = channels,
// features = the T-long series), with a residual connection.
inline Tensor channel_self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                                     const Tensor& wv, const Tensor& wo) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(wq.dim(1)));
    Tensor q = matmul(x, wq);
    Tensor k = matmul(x, wk);
    Tensor v = matmul(x, wv);
    Tensor a = softmax(mul_const(matmul(q, transpose2d(k)), inv_sqrt_d), 1);
    return add(x, matmul(matmul(a, v), wo));
}

inline Tensor band_channel_attention(const std::vector<Tensor>& bands, const ModelConfig& cfg,
                                     ModelParams& p, std::size_t band_index) {
    if (bands.size() != cfg.n_bands)
        throw ConfigError("expected " + std::to_string(cfg.n_bands) + " bands, got " +
                          std::to_string(bands.size()));
    const std::size_t set = cfg.shared_band_attention ? 0 : band_index;
    return channel_self_attention(bands[band_index], p.attn_wq[set], p.attn_wk[set], p.attn_wv[set],
                                  p.attn_wo[set]);
}

// X_FS = sum_n w(n) * X_MB(n) with w = softmax(band_logits).
inline Tensor band_fuse(const std::vector<Tensor>& bands, const Tensor& band_logits) {
    if (bands.empty()) throw ShapeError("band_fuse: no bands");
    if (band_logits.size() != bands.size())
        throw ShapeError("band_fuse: " + std::to_string(band_logits.size()) + " logits for " +
                         std::to_string(bands.size()) + " bands");
    Tensor w = softmax(band_logits, 0);
    Tensor acc = scale(bands[0], pick(w, 0));
    for (std::size_t n = 1; n < bands.size(); ++n) acc = add(acc, scale(bands[n], pick(w, n)));
    return acc;
}

inline Tensor multiscale_fusion(const Tensor& x_fs, const ModelConfig& cfg, ModelParams& p) {
    std::vector<Tensor> branches;
    for (std::size_t k = 0; k < p.ms_w.size(); ++k)
        branches.push_back(elu(conv1d(x_fs, p.ms_w[k], p.ms_b[k], Padding::Same)));
    Tensor cat = branches.size() == 1 ? branches[0] : concat_rows(branches);
    return elu(conv1d(cat, p.merge_w, p.merge_b, Padding::Same));
}

// Depthwise strided temporal convolution; no cross-channel mixing. The
// ablated variant is a standard strided convolution of equal stride.
inline Tensor icscm(const Tensor& x, const ModelConfig& cfg, ModelParams& p) {
    const std::size_t groups = cfg.use_icscm ? cfg.fuse_filters : 1;
    return elu(conv1d(x, p.icscm_w, p.icscm_b, Padding::Same, cfg.icscm_stride, groups));
}

// Squeeze (temporal mean) and excite (two-layer sigmoid gate), applied as a
// per-channel rescale of the input.
inline Tensor se_block(const Tensor& x, ModelParams& p) {
    Tensor z = mean_pool_time(x);
    Tensor gate = sigmoid(matvec(p.se_w2, sigmoid(matvec(p.se_w1, z))));
    return mul_channels(x, gate);
}

inline Tensor emg_branch(const Tensor& x_emg, const ModelConfig& cfg, ModelParams& p, RngState* rng,
                         bool training) {
    Tensor h = x_emg;
    for (auto& blk : p.emg) {
        Tensor y = conv1d(elu(conv1d(h, blk.w1, blk.b1, Padding::Same)), blk.w2, blk.b2,
                          Padding::Same);
        Tensor skip = blk.has_skip ? conv1d(h, blk.skip_w, blk.skip_b, Padding::Same) : h;
        h = elu(add(y, skip));
    }
    if (training) h = dropout(h, cfg.dropout_p, *rng, true);
    return avg_pool1d(h, cfg.icscm_stride, cfg.icscm_stride);
}

// Channel concat of both branches followed by multihead self-attention over
// channels, residual added.
inline Tensor fuse_module(const Tensor& eeg_f, const Tensor* emg_f, const ModelConfig& cfg,
                          ModelParams& p) {
    if (emg_f && emg_f->dim(1) != eeg_f.dim(1))
        throw ShapeError("fuse_module: temporal lengths differ (" + std::to_string(emg_f->dim(1)) +
                         " vs " + std::to_string(eeg_f.dim(1)) + ")");
    Tensor x = emg_f ? concat_rows({*emg_f, eeg_f}) : eeg_f;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.attn_dim));
    Tensor out;
    bool first = true;
    for (std::size_t h = 0; h < cfg.attn_heads; ++h) {
        Tensor q = matmul(x, p.fuse_wq[h]);
        Tensor k = matmul(x, p.fuse_wk[h]);
        Tensor v = matmul(x, p.fuse_wv[h]);
        Tensor a = softmax(mul_const(matmul(q, transpose2d(k)), inv_sqrt_d), 1);
        Tensor head = matmul(matmul(a, v), p.fuse_wo[h]);
        out = first ? head : add(out, head);
        first = false;
    }
    return add(x, out);
}

// ---------------------------------------------------------------------------
// full network

// EEG side from precomputed band-split tensors (training loops cache these).
inline Tensor forward_from_bands(const std::vector<Tensor>& bands, const Tensor& emg,
                                 const ModelConfig& cfg, ModelParams& p, RngState* rng,
                                 bool training) {
    if (training && rng == nullptr) throw ConfigError("training forward requires an RngState");
    std::vector<Tensor> attended;
    attended.reserve(bands.size());
    Tensor x_fs;
    if (cfg.use_band_attention) {
        for (std::size_t n = 0; n < bands.size(); ++n)
            attended.push_back(band_channel_attention(bands, cfg, p, n));
        x_fs = band_fuse(attended, p.band_logits);
    } else {
        // frozen uniform weights, attention replaced by identity
        Tensor acc = mul_const(bands[0], 1.0 / static_cast<double>(bands.size()));
        for (std::size_t n = 1; n < bands.size(); ++n)
            acc = add(acc, mul_const(bands[n], 1.0 / static_cast<double>(bands.size())));
        x_fs = acc;
    }
    Tensor eeg_f = multiscale_fusion(x_fs, cfg, p);
    if (training) eeg_f = dropout(eeg_f, cfg.dropout_p, *rng, true);
    eeg_f = icscm(eeg_f, cfg, p);
    eeg_f = se_block(eeg_f, p);

    Tensor fused;
    if (cfg.use_emg) {
        Tensor emg_f = emg_branch(emg, cfg, p, rng, training);
        fused = fuse_module(eeg_f, &emg_f, cfg, p);
    } else {
        fused = fuse_module(eeg_f, nullptr, cfg, p);
    }
    Tensor pooled = mean_pool_time(fused);
    return add(matvec(p.cls_w, pooled), p.cls_b);
}

inline Tensor forward(const Tensor& eeg, const Tensor& emg, const ModelConfig& cfg, ModelParams& p,
                      const FilterBank& bank, RngState* rng, bool training,
                      const DenoiseHook& denoise = passthrough_denoise()) {
    if (eeg.ndim() != 2 || eeg.dim(0) != cfg.eeg_channels || eeg.dim(1) != cfg.time_points)
        throw ShapeError("forward: EEG " + shape_str(eeg.shape()) + " does not match config [" +
                         std::to_string(cfg.eeg_channels) + "x" + std::to_string(cfg.time_points) + "]");
    if (emg.ndim() != 2 || emg.dim(0) != cfg.emg_channels || emg.dim(1) != cfg.time_points)
        throw ShapeError("forward: EMG " + shape_str(emg.shape()) + " does not match config [" +
                         std::to_string(cfg.emg_channels) + "x" + std::to_string(cfg.time_points) + "]");
    std::vector<Tensor> bands = split_bands_list(denoise(eeg), bank);
    return forward_from_bands(bands, emg, cfg, p, rng, training);
}

// ---------------------------------------------------------------------------
// checkpoints

namespace detail {

inline void put_string(std::ostream& os, const std::string& s) {
    put_u16(os, static_cast<std::uint16_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string get_string(std::istream& is) {
    const std::uint16_t len = get_u16(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    return s;
}
inline void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i)
        os.put(static_cast<char>((u >> (8 * i)) & 0xff));
}
inline double get_f64(std::istream& is) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = is.get();
        u |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

inline std::map<std::string, double> config_entries(const ModelConfig& c) {
    std::map<std::string, double> m;
    m["n_bands"] = static_cast<double>(c.n_bands);
    m["eeg_channels"] = static_cast<double>(c.eeg_channels);
    m["emg_channels"] = static_cast<double>(c.emg_channels);
    m["time_points"] = static_cast<double>(c.time_points);
    for (std::size_t i = 0; i < 4; ++i)
        m["kernel_size_" + std::to_string(i)] = static_cast<double>(c.kernel_sizes[i]);
    m["fuse_filters"] = static_cast<double>(c.fuse_filters);
    m["icscm_stride"] = static_cast<double>(c.icscm_stride);
    m["icscm_kernel"] = static_cast<double>(c.icscm_kernel);
    m["se_reduction_ratio"] = static_cast<double>(c.se_reduction_ratio);
    m["attn_heads"] = static_cast<double>(c.attn_heads);
    m["attn_dim"] = static_cast<double>(c.attn_dim);
    m["emg_blocks"] = static_cast<double>(c.emg_blocks);
    m["emg_filters"] = static_cast<double>(c.emg_filters);
    m["dropout_p"] = c.dropout_p;
    m["n_classes"] = static_cast<double>(c.n_classes);
    m["shared_band_attention"] = c.shared_band_attention ? 1.0 : 0.0;
    m["use_band_attention"] = c.use_band_attention ? 1.0 : 0.0;
    m["use_multiscale"] = c.use_multiscale ? 1.0 : 0.0;
    m["use_emg"] = c.use_emg ? 1.0 : 0.0;
    m["use_icscm"] = c.use_icscm ? 1.0 : 0.0;
    return m;
}

inline ModelConfig config_from_entries(const std::map<std::string, double>& m) {
    ModelConfig c;
    auto get = [&m](const std::string& key) {
        auto it = m.find(key);
        if (it == m.end()) throw FormatError("checkpoint missing config key '" + key + "'");
        return it->second;
    };
    c.n_bands = static_cast<std::size_t>(get("n_bands"));
    c.eeg_channels = static_cast<std::size_t>(get("eeg_channels"));
    c.emg_channels = static_cast<std::size_t>(get("emg_channels"));
    c.time_points = static_cast<std::size_t>(get("time_points"));
    for (std::size_t i = 0; i < 4; ++i)
        c.kernel_sizes[i] = static_cast<std::size_t>(get("kernel_size_" + std::to_string(i)));
    c.fuse_filters = static_cast<std::size_t>(get("fuse_filters"));
    c.icscm_stride = static_cast<std::size_t>(get("icscm_stride"));
    c.icscm_kernel = static_cast<std::size_t>(get("icscm_kernel"));
    c.se_reduction_ratio = static_cast<std::size_t>(get("se_reduction_ratio"));
    c.attn_heads = static_cast<std::size_t>(get("attn_heads"));
    c.attn_dim = static_cast<std::size_t>(get("attn_dim"));
    c.emg_blocks = static_cast<std::size_t>(get("emg_blocks"));
    c.emg_filters = static_cast<std::size_t>(get("emg_filters"));
    c.dropout_p = get("dropout_p");
    c.n_classes = static_cast<std::size_t>(get("n_classes"));
    c.shared_band_attention = get("shared_band_attention") != 0.0;
    c.use_band_attention = get("use_band_attention") != 0.0;
    c.use_multiscale = get("use_multiscale") != 0.0;
    c.use_emg = get("use_emg") != 0.0;
    c.use_icscm = get("use_icscm") != 0.0;
    return c;
}

}  // namespace detail

constexpr std::uint16_t kCheckpointVersion = 1;

// "FACP" checkpoint: config entries plus an ordered name -> shape -> values
// manifest of every trainable tensor.
inline void save_checkpoint(const ModelConfig& cfg, ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("FACP", 4);
    detail::put_u16(os, kCheckpointVersion);
    const auto entries = detail::config_entries(cfg);
    detail::put_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [key, value] : entries) {
        detail::put_string(os, key);
        detail::put_f64(os, value);
    }
    auto named = params.named();
    detail::put_u32(os, static_cast<std::uint32_t>(named.size()));
    for (auto& [name, t] : named) {
        detail::put_string(os, name);
        detail::put_u16(os, static_cast<std::uint16_t>(t->ndim()));
        for (std::size_t i = 0; i < t->ndim(); ++i)
            detail::put_u32(os, static_cast<std::uint32_t>(t->dim(i)));
        for (double v : t->values()) detail::put_f64(os, v);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FACP", 4) != 0)
        throw FormatError(path + ": bad magic, not a FACP checkpoint");
    const std::uint16_t version = detail::get_u16(is);
    if (version != kCheckpointVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    std::map<std::string, double> entries;
    const std::uint32_t n_entries = detail::get_u32(is);
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        std::string key = detail::get_string(is);
        entries[key] = detail::get_f64(is);
    }
    ModelConfig cfg = detail::config_from_entries(entries);
    RngState rng(0);
    ModelParams params = ModelParams::init(cfg, rng);
    auto named = params.named();
    const std::uint32_t n_params = detail::get_u32(is);
    if (n_params != named.size())
        throw FormatError(path + ": manifest lists " + std::to_string(n_params) +
                          " tensors, config implies " + std::to_string(named.size()));
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const std::string name = detail::get_string(is);
        if (name != named[i].first)
            throw FormatError(path + ": tensor " + std::to_string(i) + " named '" + name +
                              "', expected '" + named[i].first + "'");
        const std::uint16_t rank = detail::get_u16(is);
        Shape shape(rank);
        for (auto& dim : shape) dim = detail::get_u32(is);
        Tensor* t = named[i].second;
        if (shape != t->shape())
            throw FormatError(path + ": tensor '" + name + "' has shape " + shape_str(shape) +
                              ", config implies " + shape_str(t->shape()));
        for (double& v : t->values()) v = detail::get_f64(is);
    }
    if (!is) throw FormatError(path + ": read failed mid-manifest");
    return {cfg, std::move(params)};
}

}  // namespace faconf
