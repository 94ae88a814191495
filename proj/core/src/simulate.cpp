#include "streamdiar/simulate.hpp"

#include "streamdiar/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace streamdiar {

void ConversationSpec::validate() const {
    if (n_speakers < 1) throw std::invalid_argument("simulate: n_speakers must be >= 1");
    if (total_frames < 1) throw std::invalid_argument("simulate: total_frames must be >= 1");
    if (mean_turn_frames < 1.0)
        throw std::invalid_argument("simulate: mean_turn_frames must be >= 1");
    if (pause_ratio < 0.0 || pause_ratio >= 1.0)
        throw std::invalid_argument("simulate: pause_ratio must be in [0, 1)");
    if (overlap_ratio < 0.0 || overlap_ratio >= 1.0)
        throw std::invalid_argument("simulate: overlap_ratio must be in [0, 1)");
    if (overlap_ratio > 0.0 && n_speakers < 2)
        throw std::invalid_argument("simulate: overlap needs at least two speakers");
    if (feature_dim < 1) throw std::invalid_argument("simulate: feature_dim must be >= 1");
    if (noise_sigma < 0.0) throw std::invalid_argument("simulate: noise_sigma must be >= 0");
}

namespace {

struct Timeline {
    double q_overlap = 0.0;
    double q_pause = 0.0;
    double mean_overlap = 0.0;
    double mean_pause = 0.0;
};

// Per turn, expected overlap is q_ov * E[O] and expected added speech is
// E[turn] - q_ov * E[O], where O is the overlap length after capping at both
// neighbouring turn lengths; with geometric lengths E[O] has a closed form.
// Solving the overlap and pause targets for the two probabilities; targets
// outside what probabilities can reach are an error.
Timeline calibrate(const ConversationSpec& spec) {
    Timeline t;
    t.mean_overlap = std::max(1.0, spec.mean_turn_frames / 2.0);
    const double e_turn = spec.mean_turn_frames;

    // E[min(O, L1 - 1, L2 - 1)] for O ~ Geom(1/mean_overlap), L ~ Geom(1/e_turn):
    // sum_k P(O >= k) P(L - 1 >= k)^2.
    const double p_turn = 1.0 / e_turn;
    const double p_ov = 1.0 / t.mean_overlap;
    const double survive = (1.0 - p_ov) * (1.0 - p_turn) * (1.0 - p_turn);
    const double e_capped = (1.0 - p_turn) * (1.0 - p_turn) / (1.0 - survive);

    t.q_overlap = e_capped > 0.0
                      ? spec.overlap_ratio * e_turn / ((1.0 + spec.overlap_ratio) * e_capped)
                      : (spec.overlap_ratio > 0.0 ? 2.0 : 0.0);
    if (t.q_overlap > 1.0)
        throw std::invalid_argument("simulate: overlap target infeasible for this turn length");

    // Pauses are never capped, so any silence target below 1 is reachable by
    // stretching the pause length once the per-boundary budget is exhausted.
    const double speech_per_turn = e_turn - t.q_overlap * e_capped;
    const double pause_per_turn =
        spec.pause_ratio > 0.0 ? spec.pause_ratio * speech_per_turn / (1.0 - spec.pause_ratio)
                               : 0.0;
    t.mean_pause = std::max(1.0, spec.mean_turn_frames / 2.0);
    t.q_pause = pause_per_turn / t.mean_pause;
    if (t.q_pause > 1.0 - t.q_overlap) {
        if (t.q_overlap >= 1.0)
            throw std::invalid_argument(
                "simulate: pause and overlap targets infeasible together");
        t.q_pause = 1.0 - t.q_overlap;
        t.mean_pause = pause_per_turn / t.q_pause;
    }
    return t;
}

MatrixF make_labels(const ConversationSpec& spec, Rng& rng) {
    const Timeline tl = calibrate(spec);
    MatrixF labels = MatrixF::zeros(spec.total_frames, spec.n_speakers);

    index_t prev_end = 0;
    index_t prev_len = 0;
    int prev_speaker = -1;
    bool first = true;
    while (prev_end < spec.total_frames) {
        int speaker = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(spec.n_speakers)));
        if (spec.n_speakers > 1 && speaker == prev_speaker)
            speaker = (speaker + 1) % spec.n_speakers;
        const index_t len = rng.geometric_length(spec.mean_turn_frames);

        index_t start = prev_end;
        if (!first) {
            const double r = rng.uniform();
            if (r < tl.q_overlap) {
                index_t ov = rng.geometric_length(tl.mean_overlap);
                ov = std::min({ov, prev_len - 1, len - 1});
                if (ov > 0) start = prev_end - ov;
            } else if (r < tl.q_overlap + tl.q_pause) {
                start = prev_end + rng.geometric_length(tl.mean_pause);
            }
        }
        for (index_t f = start; f < std::min(start + len, spec.total_frames); ++f)
            labels.at(f, speaker) = 1.0f;
        prev_end = start + len;
        prev_len = len;
        prev_speaker = speaker;
        first = false;
    }
    return labels;
}

} // namespace

MatrixF speaker_directions(int n_speakers, index_t feature_dim, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x64697273)); // direction stream
    MatrixF dirs(n_speakers, feature_dim);
    for (int k = 0; k < n_speakers; ++k) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (index_t d = 0; d < feature_dim; ++d) {
                const double v = rng.normal();
                dirs.at(k, d) = static_cast<float>(v);
                norm2 += v * v;
            }
        } while (norm2 < 1e-12);
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (index_t d = 0; d < feature_dim; ++d) dirs.at(k, d) *= inv;
    }
    return dirs;
}

Conversation simulate(const ConversationSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Conversation out;
    out.labels = make_labels(spec, rng);

    const MatrixF dirs = speaker_directions(spec.n_speakers, spec.feature_dim, spec.seed);
    MatrixF frames(spec.total_frames, spec.feature_dim);
    for (index_t t = 0; t < spec.total_frames; ++t) {
        for (index_t d = 0; d < spec.feature_dim; ++d)
            frames.at(t, d) = static_cast<float>(spec.noise_sigma * rng.normal());
        for (int k = 0; k < spec.n_speakers; ++k) {
            if (out.labels.at(t, k) > 0.5f) {
                for (index_t d = 0; d < spec.feature_dim; ++d)
                    frames.at(t, d) += static_cast<float>(spec.emission_gain) * dirs.at(k, d);
            }
        }
    }
    out.features = synthetic_features(std::move(frames), 0.1);
    return out;
}

AudioConversation simulate_audio(const ConversationSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    AudioConversation out;
    out.labels = make_labels(spec, rng);

    constexpr index_t kSamplesPerFrame = 800; // 0.1 s at 8 kHz
    out.audio.sample_rate = 8000;
    out.audio.samples.assign(static_cast<std::size_t>(spec.total_frames * kSamplesPerFrame), 0.0f);
    const double amp = 0.8 / static_cast<double>(spec.n_speakers);
    for (int k = 0; k < spec.n_speakers; ++k) {
        const double freq = 400.0 + 300.0 * static_cast<double>(k);
        for (index_t t = 0; t < spec.total_frames; ++t) {
            if (out.labels.at(t, k) < 0.5f) continue;
            for (index_t i = 0; i < kSamplesPerFrame; ++i) {
                const index_t s = t * kSamplesPerFrame + i;
                out.audio.samples[static_cast<std::size_t>(s)] += static_cast<float>(
                    amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(s) / 8000.0));
            }
        }
    }
    return out;
}

TurnStats turn_stats(const MatrixF& labels) {
    TurnStats st;
    st.turns_per_speaker.assign(static_cast<std::size_t>(labels.cols()), 0);
    index_t silent = 0, speech = 0, overlapped = 0;
    for (index_t t = 0; t < labels.rows(); ++t) {
        index_t active = 0;
        for (index_t k = 0; k < labels.cols(); ++k) {
            const bool on = labels.at(t, k) > 0.5f;
            if (on) ++active;
            const bool was_on = t > 0 && labels.at(t - 1, k) > 0.5f;
            if (on && !was_on) ++st.turns_per_speaker[static_cast<std::size_t>(k)];
        }
        if (active == 0) ++silent;
        if (active >= 1) ++speech;
        if (active >= 2) ++overlapped;
    }
    const index_t total = labels.rows();
    st.silence_fraction = total > 0 ? static_cast<double>(silent) / static_cast<double>(total) : 0.0;
    st.overlap_fraction =
        speech > 0 ? static_cast<double>(overlapped) / static_cast<double>(speech) : 0.0;
    return st;
}

} // namespace streamdiar
