#pragma once

#include "streamdiar/matrix.hpp"
#include "streamdiar/rng.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testutil {

using streamdiar::index_t;

template <typename T>
streamdiar::Matrix<T> random_matrix(streamdiar::Rng& rng, index_t rows, index_t cols,
                                    double scale = 1.0) {
    streamdiar::Matrix<T> m(rows, cols);
    for (auto& v : m.storage()) v = static_cast<T>(rng.normal() * scale);
    return m;
}

template <typename T>
streamdiar::Matrix<T> random_uniform(streamdiar::Rng& rng, index_t rows, index_t cols, double lo,
                                     double hi) {
    streamdiar::Matrix<T> m(rows, cols);
    for (auto& v : m.storage()) v = static_cast<T>(rng.uniform(lo, hi));
    return m;
}

template <typename T>
double max_abs_diff(const streamdiar::Matrix<T>& a, const streamdiar::Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e30;
    double worst = 0.0;
    for (index_t r = 0; r < a.rows(); ++r) {
        for (index_t c = 0; c < a.cols(); ++c) {
            double d = std::abs(static_cast<double>(a.at(r, c)) - static_cast<double>(b.at(r, c)));
            worst = std::max(worst, d);
        }
    }
    return worst;
}

// Self-deleting scratch directory for file round-trip tests.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path()
               / ("streamdiar_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file(const std::string& path) {
    std::string data;
    std::ifstream in(path, std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return data;
}

} // namespace testutil
