#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "faconf/errors.hpp"
#include "faconf/tensor.hpp"

namespace faconf {

// Band-pass specification for one filter of the bank.
struct BandSpec {
    double low_hz;
    double high_hz;
    int order = 4;             // analog prototype order, even
    double stop_atten_db = 30.0;
    double trans_hz = 2.0;     // passband edge -> stopband edge

    void validate(double fs) const {
        if (low_hz <= 0.0 || low_hz >= high_hz)
            throw DesignError("band edges must satisfy 0 < low < high, got [" +
                              std::to_string(low_hz) + ", " + std::to_string(high_hz) + "]");
        if (high_hz >= fs / 2.0 - trans_hz)
            throw DesignError("upper edge " + std::to_string(high_hz) + " + transition " +
                              std::to_string(trans_hz) + " reaches Nyquist at fs=" + std::to_string(fs));
        if (low_hz - trans_hz <= 0.0)
            throw DesignError("lower stopband edge " + std::to_string(low_hz - trans_hz) +
                              " is not positive");
        if (order < 2 || order % 2 != 0)
            throw DesignError("filter order must be even and >= 2, got " + std::to_string(order));
        if (stop_atten_db <= 0.0) throw DesignError("stopband attenuation must be positive");
    }
};

// One biquad, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

// Cascade of second-order sections realizing one IIR filter.
struct SosCascade {
    std::vector<Biquad> sections;
    double design_fs = 0.0;

    bool stable() const {
        for (const Biquad& s : sections) {
            // roots of z^2 + a1 z + a2; |roots| < 1 iff |a2| < 1 and |a1| < 1 + a2
            if (std::abs(s.a2) >= 1.0 || std::abs(s.a1) >= 1.0 + s.a2) return false;
        }
        return true;
    }
};

struct FilterBank {
    std::vector<std::pair<BandSpec, SosCascade>> bands;
};

namespace detail {

using cd = std::complex<double>;

struct Zpk {
    std::vector<cd> zeros;
    std::vector<cd> poles;
    double gain;
};

// Analog Chebyshev Type II lowpass prototype, stopband edge at w = 1.
inline Zpk cheb2_prototype(int order, double stop_atten_db) {
    const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * stop_atten_db) - 1.0);
    const double mu = std::asinh(1.0 / de) / order;
    Zpk out;
    out.gain = 1.0;
    cd num(1.0, 0.0), den(1.0, 0.0);
    for (int m = -order + 1; m < order; m += 2) {
        const double angle = m * 3.14159265358979323846 / (2.0 * order);
        if (order % 2 == 0 || m != 0) {
            // zero: -conj(j / sin(angle)); skip the infinite zero of odd orders
            const cd z = -std::conj(cd(0.0, 1.0) / std::sin(angle));
            out.zeros.push_back(z);
            num *= -z;
        }
        cd p = -std::exp(cd(0.0, 1.0) * angle);
        p = cd(std::sinh(mu) * p.real(), std::cosh(mu) * p.imag());
        p = 1.0 / p;
        out.poles.push_back(p);
        den *= -p;
    }
    out.gain = (den / num).real();
    return out;
}

inline Zpk lp2bp(const Zpk& in, double w0, double bw) {
    const std::size_t degree = in.poles.size() - in.zeros.size();
    Zpk out;
    auto transform = [&](const std::vector<cd>& roots, std::vector<cd>& dst) {
        for (const cd& r : roots) {
            const cd s = r * (bw / 2.0);
            const cd d = std::sqrt(s * s - w0 * w0);
            dst.push_back(s + d);
            dst.push_back(s - d);
        }
    };
    transform(in.zeros, out.zeros);
    transform(in.poles, out.poles);
    for (std::size_t i = 0; i < degree; ++i) out.zeros.push_back(cd(0.0, 0.0));
    out.gain = in.gain * std::pow(bw, static_cast<double>(degree));
    return out;
}

inline Zpk lp2lp(const Zpk& in, double w0) {
    const std::size_t degree = in.poles.size() - in.zeros.size();
    Zpk out;
    for (const cd& z : in.zeros) out.zeros.push_back(z * w0);
    for (const cd& p : in.poles) out.poles.push_back(p * w0);
    out.gain = in.gain * std::pow(w0, static_cast<double>(degree));
    return out;
}

inline Zpk bilinear(const Zpk& in, double fs) {
    const double fs2 = 2.0 * fs;
    const std::size_t degree = in.poles.size() - in.zeros.size();
    Zpk out;
    cd num(1.0, 0.0), den(1.0, 0.0);
    for (const cd& z : in.zeros) {
        out.zeros.push_back((fs2 + z) / (fs2 - z));
        num *= (fs2 - z);
    }
    for (const cd& p : in.poles) {
        out.poles.push_back((fs2 + p) / (fs2 - p));
        den *= (fs2 - p);
    }
    for (std::size_t i = 0; i < degree; ++i) out.zeros.push_back(cd(-1.0, 0.0));
    out.gain = in.gain * (num / den).real();
    return out;
}

// Split roots into conjugate pairs (plus pairs of reals). Throws if a
// lone complex root remains; even-order designs never produce one.
inline std::vector<std::pair<cd, cd>> conjugate_pairs(std::vector<cd> roots) {
    std::vector<std::pair<cd, cd>> pairs;
    std::vector<cd> reals;
    std::vector<cd> upper;
    for (const cd& r : roots) {
        if (std::abs(r.imag()) < 1e-10 * std::max(1.0, std::abs(r.real())))
            reals.push_back(cd(r.real(), 0.0));
        else if (r.imag() > 0.0)
            upper.push_back(r);
    }
    for (const cd& u : upper) pairs.push_back({u, std::conj(u)});
    if (reals.size() % 2 != 0) throw DesignError("odd number of real roots in SOS pairing");
    std::sort(reals.begin(), reals.end(), [](const cd& a, const cd& b) { return a.real() < b.real(); });
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2) pairs.push_back({reals[i], reals[i + 1]});
    return pairs;
}

// Pair pole pairs (closest to unit circle first) with the nearest zero pair.
inline SosCascade zpk_to_sos(const Zpk& zpk, double fs) {
    if (zpk.zeros.size() != zpk.poles.size())
        throw DesignError("zpk_to_sos expects equal zero and pole counts");
    auto zp = conjugate_pairs(zpk.zeros);
    auto pp = conjugate_pairs(zpk.poles);
    if (zp.size() != pp.size()) throw DesignError("zero/pole pair count mismatch");
    std::sort(pp.begin(), pp.end(),
              [](const auto& a, const auto& b) { return std::abs(a.first) > std::abs(b.first); });

    SosCascade cascade;
    cascade.design_fs = fs;
    const double section_gain = std::pow(std::abs(zpk.gain), 1.0 / static_cast<double>(pp.size()));
    const double gain_sign = zpk.gain < 0.0 ? -1.0 : 1.0;
    std::vector<bool> used(zp.size(), false);
    for (std::size_t i = 0; i < pp.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t j = 0; j < zp.size(); ++j) {
            if (used[j]) continue;
            const double d = std::abs(pp[i].first - zp[j].first);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        used[best] = true;
        const cd& z1 = zp[best].first;
        const cd& z2 = zp[best].second;
        const cd& p1 = pp[i].first;
        const cd& p2 = pp[i].second;
        Biquad s;
        const double g = (i == 0) ? section_gain * gain_sign : section_gain;
        s.b0 = g;
        s.b1 = g * (-(z1 + z2)).real();
        s.b2 = g * (z1 * z2).real();
        s.a1 = (-(p1 + p2)).real();
        s.a2 = (p1 * p2).real();
        cascade.sections.push_back(s);
    }
    return cascade;
}

inline double prewarp(double f_hz, double fs) {
    return 2.0 * fs * std::tan(3.14159265358979323846 * f_hz / fs);
}

}  // namespace detail

// Chebyshev Type II band-pass as a stable SOS cascade. Stopband edges sit at
// low_hz - trans_hz and high_hz + trans_hz with equiripple attenuation
// stop_atten_db; the passband is monotone and flat near the geometric center.
inline SosCascade design_cheby2_bandpass(const BandSpec& spec, double fs) {
    spec.validate(fs);
    const double ws1 = detail::prewarp(spec.low_hz - spec.trans_hz, fs);
    const double ws2 = detail::prewarp(spec.high_hz + spec.trans_hz, fs);
    detail::Zpk zpk = detail::cheb2_prototype(spec.order, spec.stop_atten_db);
    zpk = detail::lp2bp(zpk, std::sqrt(ws1 * ws2), ws2 - ws1);
    zpk = detail::bilinear(zpk, fs);
    SosCascade c = detail::zpk_to_sos(zpk, fs);
    if (!c.stable())
        throw DesignError("designed band [" + std::to_string(spec.low_hz) + ", " +
                          std::to_string(spec.high_hz) + "] Hz is unstable at fs=" + std::to_string(fs));
    return c;
}

// Chebyshev Type II lowpass with stopband edge stop_hz (used by decimate).
inline SosCascade design_cheby2_lowpass(int order, double stop_atten_db, double stop_hz, double fs) {
    if (order < 2 || order % 2 != 0)
        throw DesignError("lowpass order must be even and >= 2, got " + std::to_string(order));
    if (stop_hz <= 0.0 || stop_hz > fs / 2.0)
        throw DesignError("lowpass stopband edge " + std::to_string(stop_hz) +
                          " outside (0, Nyquist] at fs=" + std::to_string(fs));
    detail::Zpk zpk = detail::cheb2_prototype(order, stop_atten_db);
    zpk = detail::lp2lp(zpk, detail::prewarp(stop_hz, fs));
    zpk = detail::bilinear(zpk, fs);
    SosCascade c = detail::zpk_to_sos(zpk, fs);
    if (!c.stable()) throw DesignError("designed lowpass is unstable");
    return c;
}

// Magnitude response in dB at the given frequencies.
inline std::vector<double> frequency_response(const SosCascade& c, const std::vector<double>& freqs) {
    std::vector<double> out;
    out.reserve(freqs.size());
    for (double f : freqs) {
        if (f < 0.0 || f > c.design_fs / 2.0)
            throw DomainError("frequency " + std::to_string(f) + " outside [0, " +
                              std::to_string(c.design_fs / 2.0) + "]");
        const double w = 2.0 * 3.14159265358979323846 * f / c.design_fs;
        const detail::cd e1 = std::exp(detail::cd(0.0, -w));
        const detail::cd e2 = e1 * e1;
        detail::cd h(1.0, 0.0);
        for (const Biquad& s : c.sections)
            h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2);
        out.push_back(20.0 * std::log10(std::max(std::abs(h), 1e-300)));
    }
    return out;
}

namespace detail {

// Steady-state DF2T initial conditions for a unit-step input (lfilter_zi).
inline std::pair<double, double> steady_state(const Biquad& s) {
    const double denom = 1.0 + s.a1 + s.a2;
    const double s1 = (s.b1 + s.b2 - (s.a1 + s.a2) * s.b0) / denom;
    const double s2 = s.b2 - s.a2 * (s.b0 + s1);
    return {s1, s2};
}

inline void sos_filter_inplace(std::vector<double>& x, const SosCascade& c) {
    for (const Biquad& s : c.sections) {
        auto [zi1, zi2] = steady_state(s);
        double s1 = x.empty() ? 0.0 : zi1 * x.front();
        double s2 = x.empty() ? 0.0 : zi2 * x.front();
        for (double& v : x) {
            const double in = v;
            const double y = s.b0 * in + s1;
            s1 = s.b1 * in - s.a1 * y + s2;
            s2 = s.b2 * in - s.a2 * y;
            v = y;
        }
    }
}

}  // namespace detail

inline std::size_t filtfilt_pad_len(const SosCascade& c) {
    return 3 * std::max<std::size_t>(c.sections.size() * 2, 24);
}

// Zero-phase filtering: odd-symmetric edge padding, forward pass, reverse,
// second pass, reverse, unpad. Magnitude response is squared, phase cancels.
inline std::vector<double> filtfilt(const std::vector<double>& signal, const SosCascade& c) {
    const std::size_t pad = filtfilt_pad_len(c);
    const std::size_t t = signal.size();
    if (t <= pad)
        throw ShapeError("filtfilt: signal length " + std::to_string(t) +
                         " must exceed padding " + std::to_string(pad));
    std::vector<double> ext(t + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i)
        ext[i] = 2.0 * signal[0] - signal[pad - i];
    std::copy(signal.begin(), signal.end(), ext.begin() + pad);
    for (std::size_t i = 0; i < pad; ++i)
        ext[pad + t + i] = 2.0 * signal[t - 1] - signal[t - 2 - i];

    detail::sos_filter_inplace(ext, c);
    std::reverse(ext.begin(), ext.end());
    detail::sos_filter_inplace(ext, c);
    std::reverse(ext.begin(), ext.end());
    return std::vector<double>(ext.begin() + pad, ext.begin() + pad + t);
}

inline Tensor filtfilt(const Tensor& signal, const SosCascade& c) {
    if (signal.ndim() != 1) throw ShapeError("filtfilt expects a [T] tensor, got " + shape_str(signal.shape()));
    return Tensor(signal.shape(), filtfilt(signal.values(), c));
}

// Default FBCSP-style layout: 9 contiguous 4 Hz bands spanning 4-40 Hz.
inline std::vector<BandSpec> default_band_layout() {
    std::vector<BandSpec> bands;
    for (int i = 0; i < 9; ++i) {
        BandSpec s;
        s.low_hz = 4.0 + 4.0 * i;
        s.high_hz = s.low_hz + 4.0;
        bands.push_back(s);
    }
    return bands;
}

inline FilterBank make_filter_bank(std::vector<BandSpec> specs, double fs) {
    if (specs.empty()) throw DesignError("filter bank needs at least one band");
    std::sort(specs.begin(), specs.end(),
              [](const BandSpec& a, const BandSpec& b) { return a.low_hz < b.low_hz; });
    FilterBank bank;
    for (const BandSpec& s : specs) bank.bands.push_back({s, design_cheby2_bandpass(s, fs)});
    return bank;
}

// X_MB: every channel of a [C x T] trial through every band, -> [N_b x C x T].
inline Tensor split_bands(const Tensor& trial, const FilterBank& bank) {
    if (trial.ndim() != 2) throw ShapeError("split_bands expects [C x T], got " + shape_str(trial.shape()));
    const std::size_t c = trial.dim(0), t = trial.dim(1);
    const std::size_t nb = bank.bands.size();
    Tensor out({nb, c, t});
    std::vector<double> chan(t);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < c; ++i) {
            std::copy(trial.values().begin() + i * t, trial.values().begin() + (i + 1) * t,
                      chan.begin());
            std::vector<double> filtered;
            try {
                filtered = filtfilt(chan, bank.bands[b].second);
            } catch (const ShapeError& e) {
                throw ShapeError("band " + std::to_string(b) + ": " + e.what());
            }
            std::copy(filtered.begin(), filtered.end(), out.values().begin() + (b * c + i) * t);
        }
    }
    return out;
}

// Per-band [C x T] views of X_MB as independent tensors.
inline std::vector<Tensor> split_bands_list(const Tensor& trial, const FilterBank& bank) {
    Tensor mb = split_bands(trial, bank);
    const std::size_t nb = mb.dim(0), c = mb.dim(1), t = mb.dim(2);
    std::vector<Tensor> out;
    out.reserve(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        std::vector<double> vals(mb.values().begin() + b * c * t,
                                 mb.values().begin() + (b + 1) * c * t);
        out.emplace_back(Shape{c, t}, std::move(vals));
    }
    return out;
}

}  // namespace faconf
