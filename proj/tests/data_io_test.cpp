#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "faconf/data_io.hpp"
#include "faconf/rng.hpp"

using namespace faconf;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("faconf_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

TrialSet sample_set(std::size_t n_trials = 4, std::size_t c = 3, std::size_t e = 2,
                    std::size_t t = 16) {
    TrialSet s;
    s.n_trials = n_trials;
    s.eeg_channels = c;
    s.emg_channels = e;
    s.time_points = t;
    s.fs_hz = 250.0;
    s.n_classes = 2;
    RngState rng(101);
    s.eeg.resize(n_trials * c * t);
    s.emg.resize(n_trials * e * t);
    for (auto& v : s.eeg) v = rng.normal();
    for (auto& v : s.emg) v = rng.normal();
    for (std::size_t i = 0; i < n_trials; ++i) s.labels.push_back(i % 2);
    return s;
}

}  // namespace

TEST_CASE("container round trip preserves everything up to f32 precision") {
    TempDir dir;
    const TrialSet a = sample_set();
    const std::string path = dir.file("trials.fact");
    write_container(a, path);
    CHECK(std::filesystem::file_size(path) ==
          container_file_size(a.n_trials, a.eeg_channels, a.emg_channels, a.time_points));

    const TrialSet b = read_container(path);
    CHECK(b.n_trials == a.n_trials);
    CHECK(b.eeg_channels == a.eeg_channels);
    CHECK(b.emg_channels == a.emg_channels);
    CHECK(b.time_points == a.time_points);
    CHECK(b.fs_hz == Catch::Approx(a.fs_hz));
    CHECK(b.n_classes == a.n_classes);
    CHECK(b.labels == a.labels);
    REQUIRE(b.eeg.size() == a.eeg.size());
    for (std::size_t i = 0; i < a.eeg.size(); ++i)
        CHECK(b.eeg[i] == Catch::Approx(a.eeg[i]).margin(1e-6));
    for (std::size_t i = 0; i < a.emg.size(); ++i)
        CHECK(b.emg[i] == Catch::Approx(a.emg[i]).margin(1e-6));
}

TEST_CASE("container header is stable byte-for-byte") {
    TempDir dir;
    TrialSet s = sample_set(1, 1, 1, 2);
    s.eeg = {0.0, 1.0};
    s.emg = {2.0, -1.0};
    s.labels = {1};
    const std::string path = dir.file("one.fact");
    write_container(s, path);
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == container_file_size(1, 1, 1, 2));
    CHECK(bytes.substr(0, 4) == "FACT");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version lo byte
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);  // version hi byte
    CHECK(static_cast<unsigned char>(bytes[6]) == 1);  // n_trials lo byte
}

TEST_CASE("container read rejects malformed files") {
    TempDir dir;
    SECTION("bad magic") {
        const std::string path = dir.file("bad.fact");
        std::ofstream(path, std::ios::binary) << "NOPE garbage";
        CHECK_THROWS_AS(read_container(path), FormatError);
    }
    SECTION("truncated payload") {
        const TrialSet s = sample_set();
        const std::string path = dir.file("trunc.fact");
        write_container(s, path);
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
        try {
            read_container(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
    SECTION("wrong version") {
        const TrialSet s = sample_set();
        const std::string path = dir.file("ver.fact");
        write_container(s, path);
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(4);
        f.put(static_cast<char>(9));
        f.close();
        CHECK_THROWS_AS(read_container(path), FormatError);
    }
    SECTION("missing file") { CHECK_THROWS_AS(read_container(dir.file("nope.fact")), FormatError); }
}

TEST_CASE("csv export then import round trips") {
    TempDir dir;
    const TrialSet a = sample_set();
    export_csv(a, dir.file("eeg.csv"), dir.file("emg.csv"), dir.file("labels.csv"));
    const TrialSet b = import_csv(dir.file("eeg.csv"), dir.file("emg.csv"), dir.file("labels.csv"),
                                  a.fs_hz);
    CHECK(b.n_trials == a.n_trials);
    CHECK(b.eeg_channels == a.eeg_channels);
    CHECK(b.emg_channels == a.emg_channels);
    CHECK(b.time_points == a.time_points);
    CHECK(b.labels == a.labels);
    CHECK(b.n_classes == a.n_classes);
    for (std::size_t i = 0; i < a.eeg.size(); ++i)
        CHECK(b.eeg[i] == Catch::Approx(a.eeg[i]).margin(1e-5));
}

TEST_CASE("csv import diagnoses errors with line numbers") {
    TempDir dir;
    std::ofstream(dir.file("labels.csv")) << "0\n1\n";
    SECTION("unparseable cell") {
        std::ofstream(dir.file("eeg.csv")) << "1,2,3\n1,oops,3\n";
        std::ofstream(dir.file("emg.csv")) << "1,2,3\n4,5,6\n";
        try {
            import_csv(dir.file("eeg.csv"), dir.file("emg.csv"), dir.file("labels.csv"), 250.0);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("line 2") != std::string::npos);
            CHECK(msg.find("oops") != std::string::npos);
        }
    }
    SECTION("ragged row") {
        std::ofstream(dir.file("eeg.csv")) << "1,2,3\n1,2\n";
        std::ofstream(dir.file("emg.csv")) << "1,2,3\n4,5,6\n";
        try {
            import_csv(dir.file("eeg.csv"), dir.file("emg.csv"), dir.file("labels.csv"), 250.0);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("row count not divisible by trials") {
        std::ofstream(dir.file("eeg.csv")) << "1,2\n3,4\n5,6\n";
        std::ofstream(dir.file("emg.csv")) << "1,2\n3,4\n";
        CHECK_THROWS_AS(
            import_csv(dir.file("eeg.csv"), dir.file("emg.csv"), dir.file("labels.csv"), 250.0),
            FormatError);
    }
    SECTION("eeg and emg column mismatch") {
        std::ofstream(dir.file("eeg.csv")) << "1,2,3\n1,2,3\n";
        std::ofstream(dir.file("emg.csv")) << "1,2\n3,4\n";
        CHECK_THROWS_AS(
            import_csv(dir.file("eeg.csv"), dir.file("emg.csv"), dir.file("labels.csv"), 250.0),
            FormatError);
    }
}

TEST_CASE("TrialSet::validate catches inconsistencies") {
    TrialSet s = sample_set();
    SECTION("short eeg buffer") {
        s.eeg.pop_back();
        CHECK_THROWS_AS(s.validate(), DataError);
    }
    SECTION("label count mismatch") {
        s.labels.pop_back();
        CHECK_THROWS_AS(s.validate(), DataError);
    }
    SECTION("label out of range") {
        s.labels[0] = 9;
        CHECK_THROWS_AS(s.validate(), DataError);
    }
    SECTION("bad fs") {
        s.fs_hz = 0.0;
        CHECK_THROWS_AS(s.validate(), DataError);
    }
}

TEST_CASE("decimate preserves slow tones and removes fast ones") {
    const std::size_t t = 2000;
    const double fs = 1000.0;
    const std::size_t factor = 4;  // new fs 250, new Nyquist 125
    TrialSet s;
    s.n_trials = 1;
    s.eeg_channels = 2;
    s.emg_channels = 1;
    s.time_points = t;
    s.fs_hz = fs;
    s.n_classes = 1;
    s.labels = {0};
    s.eeg.resize(2 * t);
    s.emg.resize(t);
    // channel 0: 40 Hz tone (below 0.4 * new_fs = 100 Hz); channel 1: 200 Hz tone (above new Nyquist)
    for (std::size_t i = 0; i < t; ++i) {
        s.eeg[i] = std::sin(2 * kPi * 40.0 * i / fs);
        s.eeg[t + i] = std::sin(2 * kPi * 200.0 * i / fs);
        s.emg[i] = std::sin(2 * kPi * 40.0 * i / fs);
    }
    const TrialSet d = decimate(s, factor);
    CHECK(d.time_points == t / factor);
    CHECK(d.fs_hz == Catch::Approx(250.0));

    auto rms_amp = [&](const std::vector<double>& buf, std::size_t row) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 50; i + 50 < d.time_points; ++i) {
            const double v = buf[row * d.time_points + i];
            acc += v * v;
            ++n;
        }
        return std::sqrt(2.0 * acc / n);
    };
    CHECK(rms_amp(d.eeg, 0) == Catch::Approx(1.0).epsilon(0.02));  // in-band tone within 2%
    CHECK(rms_amp(d.emg, 0) == Catch::Approx(1.0).epsilon(0.02));
    // tone above the new Nyquist is suppressed by at least 60 dB
    CHECK(rms_amp(d.eeg, 1) < 1e-3);
}

TEST_CASE("decimate rejects bad factors") {
    TrialSet s = sample_set(1, 1, 1, 10);
    CHECK_THROWS_AS(decimate(s, 0), ConfigError);
    CHECK_THROWS_AS(decimate(s, 3), ShapeError);
}

TEST_CASE("decimate by 1 is a benign lowpass") {
    TrialSet s = sample_set(2, 2, 1, 128);
    const TrialSet d = decimate(s, 1);
    CHECK(d.time_points == s.time_points);
    CHECK(d.fs_hz == s.fs_hz);
}
