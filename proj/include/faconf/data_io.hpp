#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "faconf/errors.hpp"
#include "faconf/filterbank.hpp"
#include "faconf/tensor.hpp"

namespace faconf {

// Paired EEG/EMG trials with labels and sampling metadata. Samples are held
// in f64 trial-major [n_trials][channels][time] buffers.
struct TrialSet {
    std::size_t n_trials = 0;
    std::size_t eeg_channels = 0;
    std::size_t emg_channels = 0;
    std::size_t time_points = 0;
    double fs_hz = 0.0;
    std::size_t n_classes = 0;
    std::vector<double> eeg;
    std::vector<double> emg;
    std::vector<std::uint16_t> labels;
    std::vector<std::string> class_names;
    std::string subject_id;

    void validate() const {
        if (eeg.size() != n_trials * eeg_channels * time_points)
            throw DataError("TrialSet: EEG buffer size mismatch");
        if (emg.size() != n_trials * emg_channels * time_points)
            throw DataError("TrialSet: EMG buffer size mismatch");
        if (labels.size() != n_trials)
            throw DataError("TrialSet: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(n_trials) + " trials");
        if (fs_hz <= 0.0) throw DataError("TrialSet: fs must be positive");
        for (std::uint16_t l : labels)
            if (l >= n_classes) throw DataError("TrialSet: label " + std::to_string(l) + " out of range");
    }

    Tensor trial_eeg(std::size_t i) const {
        const std::size_t stride = eeg_channels * time_points;
        return Tensor({eeg_channels, time_points},
                      std::vector<double>(eeg.begin() + i * stride, eeg.begin() + (i + 1) * stride));
    }
    Tensor trial_emg(std::size_t i) const {
        const std::size_t stride = emg_channels * time_points;
        return Tensor({emg_channels, time_points},
                      std::vector<double>(emg.begin() + i * stride, emg.begin() + (i + 1) * stride));
    }
};

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}
inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

constexpr std::uint16_t kContainerVersion = 1;

// "FACT" container: little-endian header (magic, version, n_trials, C,
// emg_channels, T, fs, n_classes), u16 labels, then f32 EEG and EMG samples
// in trial-major, channel-major, time-minor order.
inline void write_container(const TrialSet& set, const std::string& path) {
    set.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("FACT", 4);
    detail::put_u16(os, kContainerVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(set.n_trials));
    detail::put_u32(os, static_cast<std::uint32_t>(set.eeg_channels));
    detail::put_u32(os, static_cast<std::uint32_t>(set.emg_channels));
    detail::put_u32(os, static_cast<std::uint32_t>(set.time_points));
    detail::put_f32(os, static_cast<float>(set.fs_hz));
    detail::put_u16(os, static_cast<std::uint16_t>(set.n_classes));
    for (std::uint16_t l : set.labels) detail::put_u16(os, l);
    for (double v : set.eeg) detail::put_f32(os, static_cast<float>(v));
    for (double v : set.emg) detail::put_f32(os, static_cast<float>(v));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::size_t container_file_size(std::size_t n_trials, std::size_t c, std::size_t emg_c,
                                       std::size_t t) {
    return 4 + 2 + 4 * 4 + 4 + 2 + 2 * n_trials + 4 * n_trials * t * (c + emg_c);
}

inline TrialSet read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    is.seekg(0, std::ios::end);
    const std::size_t file_size = static_cast<std::size_t>(is.tellg());
    is.seekg(0);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FACT", 4) != 0)
        throw FormatError(path + ": bad magic, not a FACT container");
    const std::uint16_t version = detail::get_u16(is);
    if (version != kContainerVersion)
        throw FormatError(path + ": unsupported container version " + std::to_string(version));
    TrialSet set;
    set.n_trials = detail::get_u32(is);
    set.eeg_channels = detail::get_u32(is);
    set.emg_channels = detail::get_u32(is);
    set.time_points = detail::get_u32(is);
    set.fs_hz = detail::get_f32(is);
    set.n_classes = detail::get_u16(is);
    const std::size_t expected =
        container_file_size(set.n_trials, set.eeg_channels, set.emg_channels, set.time_points);
    if (file_size != expected)
        throw FormatError(path + ": payload truncated or oversized, expected " +
                          std::to_string(expected) + " bytes, found " + std::to_string(file_size));
    set.labels.resize(set.n_trials);
    for (auto& l : set.labels) l = detail::get_u16(is);
    set.eeg.resize(set.n_trials * set.eeg_channels * set.time_points);
    for (auto& v : set.eeg) v = detail::get_f32(is);
    set.emg.resize(set.n_trials * set.emg_channels * set.time_points);
    for (auto& v : set.emg) v = detail::get_f32(is);
    if (!is) throw FormatError(path + ": read failed mid-payload");
    set.validate();
    return set;
}

// CSV layout: one row per (trial, channel) in trial-major order, columns are
// time samples. The labels file holds one class id per line.
inline TrialSet import_csv(const std::string& eeg_path, const std::string& emg_path,
                           const std::string& labels_path, double fs) {
    auto read_matrix = [](const std::string& path, std::size_t& n_cols) {
        std::ifstream is(path);
        if (!is) throw FormatError("cannot open: " + path);
        std::vector<std::vector<double>> rows;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::vector<double> row;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                try {
                    std::size_t pos = 0;
                    row.push_back(std::stod(cell, &pos));
                    if (pos != cell.size()) throw std::invalid_argument(cell);
                } catch (const std::exception&) {
                    throw FormatError(path + ": line " + std::to_string(line_no) +
                                      ": cannot parse cell '" + cell + "'");
                }
            }
            if (!rows.empty() && row.size() != rows.front().size())
                throw FormatError(path + ": line " + std::to_string(line_no) + ": ragged row (" +
                                  std::to_string(row.size()) + " vs " +
                                  std::to_string(rows.front().size()) + " columns)");
            rows.push_back(std::move(row));
        }
        n_cols = rows.empty() ? 0 : rows.front().size();
        return rows;
    };

    std::size_t t_eeg = 0, t_emg = 0;
    auto eeg_rows = read_matrix(eeg_path, t_eeg);
    auto emg_rows = read_matrix(emg_path, t_emg);
    if (t_eeg != t_emg)
        throw FormatError("EEG and EMG CSVs disagree on time samples (" + std::to_string(t_eeg) +
                          " vs " + std::to_string(t_emg) + ")");

    std::vector<std::uint16_t> labels;
    {
        std::ifstream is(labels_path);
        if (!is) throw FormatError("cannot open: " + labels_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                labels.push_back(static_cast<std::uint16_t>(std::stoul(line)));
            } catch (const std::exception&) {
                throw FormatError(labels_path + ": line " + std::to_string(line_no) +
                                  ": cannot parse label '" + line + "'");
            }
        }
    }
    const std::size_t n_trials = labels.size();
    if (n_trials == 0) throw FormatError(labels_path + ": no labels");
    if (eeg_rows.size() % n_trials != 0)
        throw FormatError(eeg_path + ": " + std::to_string(eeg_rows.size()) +
                          " rows not divisible by " + std::to_string(n_trials) + " trials");
    if (emg_rows.size() % n_trials != 0)
        throw FormatError(emg_path + ": " + std::to_string(emg_rows.size()) +
                          " rows not divisible by " + std::to_string(n_trials) + " trials");

    TrialSet set;
    set.n_trials = n_trials;
    set.eeg_channels = eeg_rows.size() / n_trials;
    set.emg_channels = emg_rows.size() / n_trials;
    set.time_points = t_eeg;
    set.fs_hz = fs;
    set.labels = labels;
    set.n_classes = 0;
    for (std::uint16_t l : labels) set.n_classes = std::max<std::size_t>(set.n_classes, l + 1);
    for (const auto& row : eeg_rows) set.eeg.insert(set.eeg.end(), row.begin(), row.end());
    for (const auto& row : emg_rows) set.emg.insert(set.emg.end(), row.begin(), row.end());
    set.validate();
    return set;
}

inline void export_csv(const TrialSet& set, const std::string& eeg_path, const std::string& emg_path,
                       const std::string& labels_path) {
    auto write_matrix = [&](const std::string& path, const std::vector<double>& buf,
                            std::size_t rows, std::size_t cols) {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot open for writing: " + path);
        os.precision(9);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                if (c) os << ',';
                os << static_cast<float>(buf[r * cols + c]);
            }
            os << '\n';
        }
    };
    write_matrix(eeg_path, set.eeg, set.n_trials * set.eeg_channels, set.time_points);
    write_matrix(emg_path, set.emg, set.n_trials * set.emg_channels, set.time_points);
    std::ofstream os(labels_path);
    if (!os) throw std::runtime_error("cannot open for writing: " + labels_path);
    for (std::uint16_t l : set.labels) os << l << '\n';
}

// Anti-alias lowpass (Chebyshev II, order 10, 30 dB, stopband edge at the new
// Nyquist) applied zero-phase, then every factor-th sample kept.
inline TrialSet decimate(const TrialSet& set, std::size_t factor) {
    if (factor == 0) throw ConfigError("decimate: factor must be >= 1");
    if (set.time_points % factor != 0)
        throw ShapeError("decimate: T=" + std::to_string(set.time_points) + " not divisible by " +
                         std::to_string(factor));
    TrialSet out = set;
    const double new_fs = set.fs_hz / static_cast<double>(factor);
    // factor 1 keeps only a benign lowpass; the bilinear transform needs the
    // stopband edge strictly below Nyquist
    const double stop_hz = std::min(new_fs / 2.0, 0.49 * set.fs_hz);
    const SosCascade lp = design_cheby2_lowpass(10, 30.0, stop_hz, set.fs_hz);
    const std::size_t t = set.time_points;
    const std::size_t t_out = t / factor;

    auto process = [&](const std::vector<double>& src, std::size_t channels) {
        std::vector<double> dst(set.n_trials * channels * t_out);
        std::vector<double> chan(t);
        for (std::size_t row = 0; row < set.n_trials * channels; ++row) {
            std::copy(src.begin() + row * t, src.begin() + (row + 1) * t, chan.begin());
            const std::vector<double> filtered = filtfilt(chan, lp);
            for (std::size_t j = 0; j < t_out; ++j) dst[row * t_out + j] = filtered[j * factor];
        }
        return dst;
    };
    out.eeg = process(set.eeg, set.eeg_channels);
    out.emg = process(set.emg, set.emg_channels);
    out.time_points = t_out;
    out.fs_hz = new_fs;
    out.validate();
    return out;
}

}  // namespace faconf
