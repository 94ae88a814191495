#pragma once

#include "streamdiar/matrix.hpp"

#include <complex>
#include <string>
#include <vector>

namespace streamdiar {

struct AudioBuffer {
    std::vector<float> samples; // mono, in [-1, 1]
    int sample_rate = 8000;
};

// 16-bit PCM mono RIFF/WAVE at 8 kHz; anything else is rejected with a
// message naming the offending field.
AudioBuffer read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioBuffer& audio);

enum class FeatureKind { logmel23, spliced345, synthetic };

struct FeatureMatrix {
    MatrixF frames;       // T x F, row-major
    double frame_period = 0.01; // seconds between rows
    FeatureKind kind = FeatureKind::logmel23;
};

// In-place radix-2 complex FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& buf);

// 23-dimensional log-Mel filterbank: 25 ms frames every 10 ms, Hann window,
// 256-point FFT, triangular Mel filters spanning 0..4000 Hz, natural log with
// a 1e-10 floor. Requires at least one full frame of audio.
FeatureMatrix logmel(const AudioBuffer& audio);

// Concatenates each frame with +-context neighbours (edges replicated);
// 23 dims with the default context of 7 become 345.
FeatureMatrix splice(const FeatureMatrix& features, index_t context = 7);

// Keeps rows 0, factor, 2*factor, ... and scales the frame period to match.
FeatureMatrix subsample(const FeatureMatrix& features, index_t factor = 10);

// Wraps simulator-made frames so they flow through the same pipeline type.
FeatureMatrix synthetic_features(MatrixF frames, double frame_period = 0.1);

// Feature dump: tensors "features" plus 1x1 "frame_period" and "kind".
void save_features(const std::string& path, const FeatureMatrix& features);
FeatureMatrix load_features(const std::string& path);

} // namespace streamdiar
