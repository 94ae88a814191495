#pragma once

#include "streamdiar/features.hpp"
#include "streamdiar/matrix.hpp"

#include <cstdint>
#include <vector>

namespace streamdiar {

struct ConversationSpec {
    int n_speakers = 2;
    index_t total_frames = 100;
    double mean_turn_frames = 15.0;  // geometric turn-length mean
    double pause_ratio = 0.1;        // target fraction of silent frames
    double overlap_ratio = 0.1;      // target overlapped fraction of speech
    index_t feature_dim = 16;
    double emission_gain = 1.0;      // speech pushes features along a speaker direction
    double noise_sigma = 0.3;        // isotropic noise on every frame
    std::uint64_t seed = 0;

    void validate() const;
};

struct Conversation {
    FeatureMatrix features; // total_frames x feature_dim, kind synthetic
    MatrixF labels;         // total_frames x n_speakers, entries 0 or 1
};

// Feature-space conversation: alternating speaker turns with geometric
// lengths, occasional overlaps and pauses calibrated to the requested ratios,
// frames emitted as gain * direction(speaker) + noise.
Conversation simulate(const ConversationSpec& spec);

// Audio-space variant: each speaker is a fixed sinusoid; a frame lasts 800
// samples at 8 kHz, so total_frames maps to total_frames * 0.1 seconds.
struct AudioConversation {
    AudioBuffer audio;
    MatrixF labels; // total_frames x n_speakers at 0.1 s per frame
};
AudioConversation simulate_audio(const ConversationSpec& spec);

// Per-speaker unit directions used by the feature emitter, one row each.
MatrixF speaker_directions(int n_speakers, index_t feature_dim, std::uint64_t seed);

struct TurnStats {
    std::vector<index_t> turns_per_speaker; // maximal active runs per column
    double silence_fraction = 0.0;          // frames with no active speaker / T
    double overlap_fraction = 0.0;          // frames with >= 2 active / frames with >= 1
};
TurnStats turn_stats(const MatrixF& labels);

} // namespace streamdiar
