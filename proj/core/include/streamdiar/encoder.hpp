#pragma once

#include "streamdiar/model.hpp"
#include "streamdiar/rng.hpp"

#include <deque>
#include <vector>

namespace streamdiar {

// Per-layer cache of hidden states from previous blocks, oldest first.
// cache[i] holds the detached inputs to layer i (outputs of layer i-1).
template <typename T>
struct EncoderState {
    std::vector<std::deque<Matrix<T>>> cache;
    index_t blocks_seen = 0;

    void reset() {
        cache.clear();
        blocks_seen = 0;
    }
    // Total cached scalars; bounded by n_layers * L * W * d_model for finite L.
    index_t cached_values() const {
        index_t n = 0;
        for (const auto& layer : cache)
            for (const auto& m : layer) n += m.size();
        return n;
    }
};

// Detached per-block, per-layer hidden states. Recorded during one forward
// pass so a later pass can be evaluated with those cache entries pinned;
// finite differencing against a pinned trace matches the analytic gradients,
// which do not flow into the cache.
template <typename T>
struct CacheTrace {
    // blocks[b][i] = input to layer i for block b.
    std::vector<std::vector<Matrix<T>>> blocks;
};

template <typename T>
struct ForwardOptions {
    bool training = false;
    T dropout_rate = T(0.1);
    Rng* rng = nullptr;                      // required when training with dropout > 0
    CacheTrace<T>* record_trace = nullptr;   // store this block's cache entries
    const CacheTrace<T>* replay_trace = nullptr; // substitute recorded entries
};

// One streaming step: consumes the feature rows of a block, returns the taped
// embeddings for those rows, and advances the cache. Queries come from the
// current block only; keys and values cover the cached blocks plus the
// current one. Cached blocks enter as constants, so no gradient crosses the
// block boundary.
template <typename T>
Var<T> encode_block(Tape<T>& tape, const BoundModel<T>& model, EncoderState<T>& state,
                    const Matrix<T>& x_block, const ForwardOptions<T>& opt = {});

// Whole-utterance encoding with full self-attention (single block).
template <typename T>
Var<T> encode_offline(Tape<T>& tape, const BoundModel<T>& model, const Matrix<T>& x,
                      const ForwardOptions<T>& opt = {});

// Plain-matrix convenience wrappers that run on a private evaluation tape.
template <typename T>
Matrix<T> encode_block_values(const ModelParams<T>& params, EncoderState<T>& state,
                              const Matrix<T>& x_block);
template <typename T>
Matrix<T> encode_offline_values(const ModelParams<T>& params, const Matrix<T>& x);

// Splits [T x F] features into consecutive blocks of block_frames rows; the
// final block may be shorter. T = 0 yields no blocks.
template <typename T>
std::vector<Matrix<T>> split_blocks(const Matrix<T>& features, index_t block_frames);

} // namespace streamdiar
