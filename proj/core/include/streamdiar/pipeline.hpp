#pragma once

#include "streamdiar/attractor.hpp"
#include "streamdiar/encoder.hpp"
#include "streamdiar/features.hpp"
#include "streamdiar/model.hpp"

#include <vector>

namespace streamdiar {

enum class Variant { ul, ll, offline };

enum class ShuffleMode { none, within_block, across_blocks };

struct HeuristicConfig {
    bool reorder = false;        // align per-block attractors to the previous block
    bool average = false;        // running average of aligned attractors
    ShuffleMode shuffle = ShuffleMode::none;
};

struct InferenceConfig {
    Variant variant = Variant::offline;
    float tau = 0.5f;                 // attractor existence threshold
    float activity_threshold = 0.5f;  // posterior threshold for segments
    index_t max_speakers = 10;
    HeuristicConfig heuristics;
    std::uint64_t shuffle_seed = 0;
    // Overrides for the model's block size and left context; 0 / -1 keep them.
    index_t block_frames = 0;
    index_t context_blocks = -1;
};

struct EmbeddingBlock {
    index_t block_index = 0;
    MatrixF embeddings; // W' x d_model
};

struct BlockEmission {
    index_t block_index = 0;
    MatrixF posterior;            // W' x speaker_count
    std::vector<int> speaker_ids; // global id per posterior column
    index_t speaker_count = 0;
};

struct Segment {
    int speaker_id = 0;
    double onset = 0.0;    // seconds
    double duration = 0.0; // seconds
};

struct DiarizationResult {
    MatrixF posterior;               // T x S_final
    std::vector<int> speaker_ids;    // global id per posterior column
    std::vector<Segment> segments;
    std::vector<index_t> speakers_per_block; // ll only, non-decreasing
    std::vector<BlockEmission> emissions;    // ll only
    double frame_period = 0.1;
};

DiarizationResult run_inference(const FeatureMatrix& features, const ModelParamsF& params,
                                const InferenceConfig& cfg);

// Greedy cosine alignment of the current block's attractors to the previous
// block's: previous attractors claim, in their stored order, the most similar
// unclaimed current attractor (ties toward the lower current index,
// zero-norm vectors score 0). Matched attractors keep the previous id and
// position; leftovers follow in current order with ids from next_free_id.
AttractorSet reorder_attractors(const AttractorSet& prev, const AttractorSet& cur,
                                int& next_free_id);

// Halves toward the new estimate: ids present in both sets get
// (prev + cur) / 2; ids only in cur stay as they are.
AttractorSet average_attractors(const AttractorSet& prev, const AttractorSet& cur);

// Row order for feeding blocks to the attractor LSTM: natural order, each
// block permuted internally, or one permutation across all rows. Indices
// address the row-concatenation of the blocks. Deterministic per seed.
std::vector<index_t> shuffle_order(const std::vector<EmbeddingBlock>& blocks, ShuffleMode mode,
                                   std::uint64_t seed);

MatrixF concat_blocks(const std::vector<EmbeddingBlock>& blocks);

// Thresholds each speaker column and converts maximal active runs to
// segments, ordered by onset then speaker id.
std::vector<Segment> posterior_to_segments(const MatrixF& posterior,
                                           const std::vector<int>& speaker_ids, float threshold,
                                           double frame_period);

double cosine_similarity(const MatrixF& a, const MatrixF& b);

} // namespace streamdiar
