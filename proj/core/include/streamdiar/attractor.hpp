#pragma once

#include "streamdiar/model.hpp"

#include <vector>

namespace streamdiar {

template <typename T>
struct LstmStateVar {
    Var<T> h, c; // each 1 x d_model
};

template <typename T>
struct LstmState {
    Matrix<T> h, c;
    static LstmState zeros(index_t d) { return {Matrix<T>::zeros(1, d), Matrix<T>::zeros(1, d)}; }
};

using LstmStateF = LstmState<float>;

// Gate order in the packed [d x 4d] weights: input, forget, cell, output.
template <typename T>
LstmStateVar<T> lstm_step(Tape<T>& tape, const BoundModel<T>& model, Var<T> x,
                          const LstmStateVar<T>& state);

// Runs the encoder LSTM over the given rows of `inputs` in `order`; an empty
// order means natural row order. Returns the final state.
template <typename T>
LstmStateVar<T> lstm_encode(Tape<T>& tape, const BoundModel<T>& model, Var<T> inputs,
                            const LstmStateVar<T>& init,
                            const std::vector<index_t>& order = {});

// One decoder step: a zero-input LSTM step from `state`; the new hidden state
// is the attractor.
template <typename T>
LstmStateVar<T> decoder_step(Tape<T>& tape, const BoundModel<T>& model,
                             const LstmStateVar<T>& state);

// Existence probability of one attractor: sigmoid(a . w + b), a 1 x 1 value.
template <typename T>
Var<T> existence_prob(Tape<T>& tape, const BoundModel<T>& model, Var<T> attractor);

template <typename T>
struct DecodedAttractors {
    std::vector<Var<T>> attractors; // each 1 x d_model
    std::vector<Var<T>> probs;      // each 1 x 1
};

// Decodes attractors until the existence probability drops below tau, subject
// to a floor on the count and a hard cap. With steps >= 0 decodes exactly that
// many attractors and ignores the threshold (teacher forcing).
template <typename T>
DecodedAttractors<T> decode_attractors(Tape<T>& tape, const BoundModel<T>& model,
                                       const LstmStateVar<T>& init, index_t max_speakers,
                                       T tau, index_t min_count = 0, index_t steps = -1);

// Length of the initial run of probabilities >= tau, raised to at least
// `floor` and capped at max_speakers.
index_t count_speakers(const std::vector<double>& probs, double tau, index_t floor,
                       index_t max_speakers);

// Frame-wise speaker posteriors: sigmoid(E A^T), one column per attractor.
template <typename T>
Var<T> frame_posteriors(Tape<T>& tape, Var<T> embeddings, const std::vector<Var<T>>& attractors);

// Attractors for one block or stream, in emission-column order.
struct AttractorSet {
    std::vector<MatrixF> attractors; // each 1 x d_model
    std::vector<float> probs;        // matching existence probabilities
    std::vector<int> speaker_ids;    // global ids, unique within the set
    index_t counted = 0;             // leading attractors that count as speakers
};

// Plain-matrix wrappers running on private evaluation tapes.
LstmStateF lstm_encode_values(const ModelParamsF& params, const MatrixF& inputs,
                              const LstmStateF& init, const std::vector<index_t>& order = {});
AttractorSet decode_attractors_values(const ModelParamsF& params, const LstmStateF& init,
                                      index_t max_speakers, float tau, index_t min_count = 0);

} // namespace streamdiar
