#pragma once

// Independent reference implementations used as test oracles. Everything here
// is written as plain double-precision loops, deliberately sharing no kernels
// with the library under test.

#include "streamdiar/matrix.hpp"
#include "streamdiar/model.hpp"
#include "streamdiar/rttm.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace refimpl {

using streamdiar::index_t;

// Dense row-major double matrix with none of the library's machinery.
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

template <typename T>
Mat to_mat(const streamdiar::Matrix<T>& m) {
    Mat out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (index_t r = 0; r < m.rows(); ++r) {
        for (index_t c = 0; c < m.cols(); ++c) {
            out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                static_cast<double>(m.at(r, c));
        }
    }
    return out;
}

Mat matmul(const Mat& a, const Mat& b);
Mat matmul_nt(const Mat& a, const Mat& b); // a * b^T
Mat add(const Mat& a, const Mat& b);
Mat softmax_rows(const Mat& a);
Mat layer_norm_rows(const Mat& a, const Mat& gain, const Mat& bias, double eps = 1e-5);
Mat relu(const Mat& a);
Mat sigmoid(const Mat& a);
Mat tanh_mat(const Mat& a);
Mat concat_rows(const std::vector<Mat>& parts);
Mat add_rowvec(const Mat& a, const Mat& row);

// ---------------------------------------------------------------------------
// Transformer encoder oracle: recomputes every block's embeddings from the
// whole prefix using the window definition directly. For layer i, block j
// attends over the concatenation of that layer's inputs for blocks
// max(0, j - context)..j; block j's layer-(i+1) input is the result.
// ---------------------------------------------------------------------------

struct EncoderOracle {
    explicit EncoderOracle(const streamdiar::ModelParamsF& params);

    // Feature blocks in stream order; returns one embedding matrix per block.
    std::vector<Mat> encode(const std::vector<Mat>& blocks) const;

    streamdiar::EncoderConfig config;
    // double copies of the parameter tensors, keyed by name
    std::vector<std::pair<std::string, Mat>> tensors;
    const Mat& find(const std::string& name) const;
};

// ---------------------------------------------------------------------------
// LSTM oracle: scalar loops over gates.
// ---------------------------------------------------------------------------

struct LstmOracleState {
    std::vector<double> h, c;
};

// One step of a standard LSTM cell: pre = x*wx + h*wh + b laid out as four
// d-wide gate slabs (input, forget, cell, output).
LstmOracleState lstm_step(const std::vector<double>& x, const LstmOracleState& state,
                          const Mat& wx, const Mat& wh, const Mat& bias);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean binary cross-entropy between pred (T x S) and each column permutation
// of target, minimised over permutations. Probabilities are clipped to
// [clip, 1 - clip].
double pit_bce_oracle(const Mat& pred, const Mat& target, double clip = 1e-7);

// ---------------------------------------------------------------------------
// Diarization error rate oracle on a 1 ms grid.
//
// Builds per-speaker activity grids, drops frames within the collar of any
// reference segment boundary, and minimises the total error over every
// one-to-one speaker mapping by exhaustive enumeration. Frame t covers
// [t, t+1) ms; a segment [on, off) activates the frames with
// round(on*1000) <= t < round(off*1000).
// ---------------------------------------------------------------------------

struct DerOracleResult {
    double missed = 0.0;
    double false_alarm = 0.0;
    double confusion = 0.0;
    double scored_speech = 0.0;
    bool empty = false; // no scored reference speech anywhere
};

DerOracleResult der_oracle(const streamdiar::SegmentList& ref,
                           const streamdiar::SegmentList& hyp, double collar);

// ---------------------------------------------------------------------------
// Discrete Fourier transform oracle (naive O(n^2) sum).
// ---------------------------------------------------------------------------

void dft(const std::vector<double>& re_in, std::vector<double>& re_out,
         std::vector<double>& im_out);

// ---------------------------------------------------------------------------
// Label statistics oracle: run lengths per column plus silence/overlap
// fractions, written as direct scans.
// ---------------------------------------------------------------------------

struct LabelStats {
    std::vector<long long> turns_per_speaker;
    double silence_fraction = 0.0;
    double overlap_fraction = 0.0;
};

LabelStats label_stats(const streamdiar::MatrixF& labels);

} // namespace refimpl
