#include "streamdiar/features.hpp"

#include "streamdiar/tensor_file.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace streamdiar {

namespace {

constexpr index_t kFrameLen = 200; // 25 ms at 8 kHz
constexpr index_t kFrameHop = 80;  // 10 ms at 8 kHz
constexpr index_t kFftSize = 256;
constexpr index_t kNumBins = kFftSize / 2 + 1;
constexpr index_t kNumMels = 23;
constexpr double kSampleRate = 8000.0;
constexpr double kPowerFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// filters[m][k] = triangular weight of Mel band m at FFT bin k.
std::vector<std::vector<double>> mel_filterbank() {
    const double mel_max = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kNumMels + 2);
    for (index_t i = 0; i < kNumMels + 2; ++i)
        edges[static_cast<std::size_t>(i)] =
            mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(kNumMels + 1));

    std::vector<std::vector<double>> filters(
        kNumMels, std::vector<double>(static_cast<std::size_t>(kNumBins), 0.0));
    for (index_t m = 0; m < kNumMels; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double mid = edges[static_cast<std::size_t>(m + 1)];
        const double hi = edges[static_cast<std::size_t>(m + 2)];
        for (index_t k = 0; k < kNumBins; ++k) {
            const double f = static_cast<double>(k) * kSampleRate / static_cast<double>(kFftSize);
            double w = 0.0;
            if (f >= lo && f <= mid && mid > lo)
                w = (f - lo) / (mid - lo);
            else if (f > mid && f <= hi && hi > mid)
                w = (hi - f) / (hi - mid);
            filters[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] = w;
        }
    }
    return filters;
}

} // namespace

void fft_inplace(std::vector<std::complex<double>>& buf) {
    const std::size_t n = buf.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(buf[i], buf[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = buf[i + k];
                const std::complex<double> v = buf[i + k + len / 2] * w;
                buf[i + k] = u + v;
                buf[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

FeatureMatrix logmel(const AudioBuffer& audio) {
    if (audio.sample_rate != 8000)
        throw std::invalid_argument("logmel: expects 8000 Hz audio");
    const index_t n = static_cast<index_t>(audio.samples.size());
    if (n < kFrameLen)
        throw std::invalid_argument("logmel: audio shorter than one 25 ms frame");
    const index_t n_frames = (n - kFrameLen) / kFrameHop + 1;

    std::vector<double> window(static_cast<std::size_t>(kFrameLen));
    for (index_t i = 0; i < kFrameLen; ++i)
        window[static_cast<std::size_t>(i)] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(kFrameLen)));

    static const std::vector<std::vector<double>> filters = mel_filterbank();

    FeatureMatrix out;
    out.frames = MatrixF(n_frames, kNumMels);
    out.frame_period = 0.01;
    out.kind = FeatureKind::logmel23;

    std::vector<std::complex<double>> buf(static_cast<std::size_t>(kFftSize));
    for (index_t t = 0; t < n_frames; ++t) {
        const index_t start = t * kFrameHop;
        for (index_t i = 0; i < kFrameLen; ++i)
            buf[static_cast<std::size_t>(i)] = {
                static_cast<double>(audio.samples[static_cast<std::size_t>(start + i)]) *
                    window[static_cast<std::size_t>(i)],
                0.0};
        for (index_t i = kFrameLen; i < kFftSize; ++i) buf[static_cast<std::size_t>(i)] = {0.0, 0.0};
        fft_inplace(buf);

        for (index_t m = 0; m < kNumMels; ++m) {
            double acc = 0.0;
            const auto& fw = filters[static_cast<std::size_t>(m)];
            for (index_t k = 0; k < kNumBins; ++k) {
                const auto& c = buf[static_cast<std::size_t>(k)];
                acc += fw[static_cast<std::size_t>(k)] *
                       (c.real() * c.real() + c.imag() * c.imag());
            }
            out.frames.at(t, m) = static_cast<float>(std::log(std::max(acc, kPowerFloor)));
        }
    }
    return out;
}

FeatureMatrix splice(const FeatureMatrix& features, index_t context) {
    if (context < 0) throw std::invalid_argument("splice: context must be >= 0");
    const MatrixF& x = features.frames;
    const index_t t_total = x.rows();
    const index_t dim = x.cols();
    if (t_total < 1) throw std::invalid_argument("splice: empty feature matrix");

    FeatureMatrix out;
    out.frames = MatrixF(t_total, dim * (2 * context + 1));
    out.frame_period = features.frame_period;
    out.kind = (features.kind == FeatureKind::logmel23 && context == 7)
                   ? FeatureKind::spliced345
                   : features.kind;
    for (index_t t = 0; t < t_total; ++t) {
        index_t col = 0;
        for (index_t off = -context; off <= context; ++off) {
            const index_t src = std::clamp<index_t>(t + off, 0, t_total - 1);
            for (index_t d = 0; d < dim; ++d) out.frames.at(t, col++) = x.at(src, d);
        }
    }
    return out;
}

FeatureMatrix subsample(const FeatureMatrix& features, index_t factor) {
    if (factor < 1) throw std::invalid_argument("subsample: factor must be >= 1");
    const MatrixF& x = features.frames;
    const index_t t_total = x.rows();
    const index_t kept = (t_total + factor - 1) / factor;

    FeatureMatrix out;
    out.frames = MatrixF(kept, x.cols());
    out.frame_period = features.frame_period * static_cast<double>(factor);
    out.kind = features.kind;
    for (index_t i = 0; i < kept; ++i)
        for (index_t d = 0; d < x.cols(); ++d) out.frames.at(i, d) = x.at(i * factor, d);
    return out;
}

FeatureMatrix synthetic_features(MatrixF frames, double frame_period) {
    FeatureMatrix out;
    out.frames = std::move(frames);
    out.frame_period = frame_period;
    out.kind = FeatureKind::synthetic;
    return out;
}

void save_features(const std::string& path, const FeatureMatrix& features) {
    NamedTensors t;
    t.put("features", features.frames);
    t.put_scalar("frame_period", static_cast<float>(features.frame_period));
    t.put_scalar("kind", static_cast<float>(static_cast<int>(features.kind)));
    save_tensors(path, t);
}

FeatureMatrix load_features(const std::string& path) {
    NamedTensors t = load_tensors(path);
    FeatureMatrix out;
    out.frames = t.get("features");
    out.frame_period = static_cast<double>(t.get_scalar("frame_period"));
    const int kind = static_cast<int>(t.get_scalar("kind"));
    if (kind < 0 || kind > 2) throw std::runtime_error("feature file: bad kind code");
    out.kind = static_cast<FeatureKind>(kind);
    return out;
}

} // namespace streamdiar
