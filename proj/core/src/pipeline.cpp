#include "streamdiar/pipeline.hpp"

#include "streamdiar/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace streamdiar {

namespace {

constexpr std::uint64_t kAcrossStream = 0xa5555aULL;

// With infinite context the attractor LSTM consumes blocks as they arrive, so
// only the current block's rows can be permuted.
ShuffleMode effective_mode(ShuffleMode mode, index_t context_blocks) {
    if (context_blocks == kInfiniteContext && mode == ShuffleMode::across_blocks)
        return ShuffleMode::within_block;
    return mode;
}

LstmStateF zero_state(index_t d) { return LstmStateF::zeros(d); }

struct DecodedValues {
    std::vector<MatrixF> attractors;
    std::vector<double> probs;
};

DecodedValues extract_decoded(Tape<float>& tape, const DecodedAttractors<float>& dec) {
    DecodedValues out;
    for (std::size_t i = 0; i < dec.attractors.size(); ++i) {
        out.attractors.push_back(tape.value(dec.attractors[i]));
        out.probs.push_back(static_cast<double>(tape.value(dec.probs[i]).at(0, 0)));
    }
    return out;
}

AttractorSet take_counted(const DecodedValues& dec, index_t s) {
    AttractorSet set;
    for (index_t i = 0; i < s; ++i) {
        set.attractors.push_back(dec.attractors[static_cast<std::size_t>(i)]);
        set.probs.push_back(static_cast<float>(dec.probs[static_cast<std::size_t>(i)]));
        set.speaker_ids.push_back(static_cast<int>(i));
    }
    set.counted = s;
    return set;
}

MatrixF posterior_values(Tape<float>& tape, Var<float> embeddings, const AttractorSet& set) {
    std::vector<Var<float>> attrs;
    attrs.reserve(set.attractors.size());
    for (const auto& a : set.attractors) attrs.push_back(tape.constant(a));
    return tape.value(frame_posteriors(tape, embeddings, attrs));
}

void validate_config(const FeatureMatrix& features, const InferenceConfig& cfg) {
    if (features.frames.rows() < 1) throw std::invalid_argument("inference: empty features");
    if (!(cfg.tau > 0.0f && cfg.tau < 1.0f))
        throw std::invalid_argument("inference: tau must be in (0, 1)");
    if (!(cfg.activity_threshold > 0.0f && cfg.activity_threshold < 1.0f))
        throw std::invalid_argument("inference: activity_threshold must be in (0, 1)");
    if (cfg.max_speakers < 1) throw std::invalid_argument("inference: max_speakers must be >= 1");
}

DiarizationResult finish_single_window(Tape<float>& tape, const BoundModel<float>& model,
                                       const std::vector<EmbeddingBlock>& blocks,
                                       LstmStateVar<float> init, const InferenceConfig& cfg,
                                       double frame_period) {
    DecodedAttractors<float> dec =
        decode_attractors(tape, model, init, cfg.max_speakers, cfg.tau, 0);
    DecodedValues vals = extract_decoded(tape, dec);
    const index_t s = count_speakers(vals.probs, static_cast<double>(cfg.tau), 0, cfg.max_speakers);

    const MatrixF all_e = concat_blocks(blocks);
    DiarizationResult res;
    res.frame_period = frame_period;
    if (s == 0) {
        res.posterior = MatrixF(all_e.rows(), 0);
    } else {
        AttractorSet set = take_counted(vals, s);
        res.posterior = posterior_values(tape, tape.constant(all_e), set);
        res.speaker_ids = set.speaker_ids;
    }
    res.segments = posterior_to_segments(res.posterior, res.speaker_ids, cfg.activity_threshold,
                                         frame_period);
    return res;
}

DiarizationResult run_offline(const FeatureMatrix& features, const ModelParamsF& params,
                              const EncoderConfig& enc_cfg, const InferenceConfig& cfg) {
    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);
    model.config = enc_cfg;

    Var<float> e_var = encode_offline(tape, model, features.frames);
    std::vector<EmbeddingBlock> blocks{{0, tape.value(e_var)}};

    const ShuffleMode mode = (cfg.heuristics.shuffle == ShuffleMode::none)
                                 ? ShuffleMode::none
                                 : ShuffleMode::within_block; // one block covers everything
    const std::vector<index_t> order = shuffle_order(blocks, mode, Rng::derive(cfg.shuffle_seed, 0));
    const index_t d = enc_cfg.d_model;
    LstmStateVar<float> init{tape.constant(zero_state(d).h), tape.constant(zero_state(d).c)};
    LstmStateVar<float> fin = lstm_encode(tape, model, e_var, init, order);
    return finish_single_window(tape, model, blocks, fin, cfg, features.frame_period);
}

DiarizationResult run_ul(const FeatureMatrix& features, const ModelParamsF& params,
                         const EncoderConfig& enc_cfg, const InferenceConfig& cfg) {
    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);
    model.config = enc_cfg;
    const index_t d = enc_cfg.d_model;
    const bool infinite = enc_cfg.context_blocks == kInfiniteContext;
    const ShuffleMode mode = effective_mode(cfg.heuristics.shuffle, enc_cfg.context_blocks);

    const std::vector<MatrixF> raw_blocks = split_blocks(features.frames, enc_cfg.block_frames);
    const index_t base = tape.mark();

    EncoderState<float> enc_state;
    std::vector<EmbeddingBlock> blocks;
    LstmStateF carry = zero_state(d);
    for (index_t k = 0; k < static_cast<index_t>(raw_blocks.size()); ++k) {
        Var<float> e_var =
            encode_block(tape, model, enc_state, raw_blocks[static_cast<std::size_t>(k)]);
        EmbeddingBlock eb{k, tape.value(e_var)};
        if (infinite) {
            // The state carries all previous blocks; feed only the new rows.
            std::vector<EmbeddingBlock> one{eb};
            const std::vector<index_t> order =
                shuffle_order(one, mode, Rng::derive(cfg.shuffle_seed, static_cast<std::uint64_t>(k)));
            LstmStateVar<float> sv{tape.constant(carry.h), tape.constant(carry.c)};
            sv = lstm_encode(tape, model, e_var, sv, order);
            carry = {tape.value(sv.h), tape.value(sv.c)};
        }
        blocks.push_back(std::move(eb));
        tape.rewind(base);
    }

    LstmStateVar<float> fin;
    if (infinite) {
        fin = {tape.constant(carry.h), tape.constant(carry.c)};
    } else {
        // Finite context: the attractor pass at stream end reads every
        // retained block, so the shuffle window spans the whole stream.
        const std::vector<index_t> order =
            shuffle_order(blocks, mode, Rng::derive(cfg.shuffle_seed, 0));
        LstmStateVar<float> init{tape.constant(zero_state(d).h), tape.constant(zero_state(d).c)};
        fin = lstm_encode(tape, model, tape.constant(concat_blocks(blocks)), init, order);
    }
    return finish_single_window(tape, model, blocks, fin, cfg, features.frame_period);
}

DiarizationResult run_ll(const FeatureMatrix& features, const ModelParamsF& params,
                         const EncoderConfig& enc_cfg, const InferenceConfig& cfg) {
    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);
    model.config = enc_cfg;
    const index_t d = enc_cfg.d_model;
    const index_t ctx = enc_cfg.context_blocks;
    const bool infinite = ctx == kInfiniteContext;
    const ShuffleMode mode = effective_mode(cfg.heuristics.shuffle, ctx);

    const std::vector<MatrixF> raw_blocks = split_blocks(features.frames, enc_cfg.block_frames);
    const index_t base = tape.mark();

    EncoderState<float> enc_state;
    std::deque<EmbeddingBlock> window;     // blocks max(0, k-ctx) .. k
    std::vector<LstmStateF> state_after;   // attractor LSTM state after each block
    AttractorSet prev_set;
    int next_free_id = 0;
    index_t prev_s = 0;

    DiarizationResult res;
    res.frame_period = features.frame_period;

    for (index_t k = 0; k < static_cast<index_t>(raw_blocks.size()); ++k) {
        Var<float> e_var =
            encode_block(tape, model, enc_state, raw_blocks[static_cast<std::size_t>(k)]);
        window.push_back({k, tape.value(e_var)});
        if (!infinite) {
            while (static_cast<index_t>(window.size()) > ctx + 1) window.pop_front();
        }

        LstmStateF init = zero_state(d);
        std::vector<EmbeddingBlock> win_vec;
        if (infinite) {
            if (k > 0) init = state_after[static_cast<std::size_t>(k - 1)];
            win_vec.push_back(window.back());
            window.pop_front(); // only the current block is ever re-read
        } else {
            if (k >= ctx + 1) init = state_after[static_cast<std::size_t>(k - ctx - 1)];
            win_vec.assign(window.begin(), window.end());
        }

        const std::vector<index_t> order =
            shuffle_order(win_vec, mode, Rng::derive(cfg.shuffle_seed, static_cast<std::uint64_t>(k)));
        LstmStateVar<float> sv{tape.constant(init.h), tape.constant(init.c)};
        LstmStateVar<float> fin =
            lstm_encode(tape, model, tape.constant(concat_blocks(win_vec)), sv, order);
        state_after.push_back({tape.value(fin.h), tape.value(fin.c)});

        DecodedAttractors<float> dec =
            decode_attractors(tape, model, fin, cfg.max_speakers, cfg.tau, prev_s);
        DecodedValues vals = extract_decoded(tape, dec);
        const index_t s_k =
            count_speakers(vals.probs, static_cast<double>(cfg.tau), prev_s, cfg.max_speakers);
        if (s_k < prev_s) throw std::logic_error("inference: speaker count decreased");

        AttractorSet cur = take_counted(vals, s_k);
        if (cfg.heuristics.reorder) {
            cur = reorder_attractors(prev_set, cur, next_free_id);
        } else {
            next_free_id = std::max<int>(next_free_id, static_cast<int>(s_k));
        }
        if (cfg.heuristics.average) cur = average_attractors(prev_set, cur);

        BlockEmission em;
        em.block_index = k;
        em.speaker_count = s_k;
        em.speaker_ids = cur.speaker_ids;
        em.posterior = (s_k > 0) ? posterior_values(tape, e_var, cur)
                                 : MatrixF(raw_blocks[static_cast<std::size_t>(k)].rows(), 0);
        res.emissions.push_back(std::move(em));
        res.speakers_per_block.push_back(s_k);

        prev_set = std::move(cur);
        prev_s = s_k;
        tape.rewind(base);
    }

    // Assemble the stream posterior from the per-block emissions.
    const index_t t_total = features.frames.rows();
    const index_t s_final = next_free_id;
    res.posterior = MatrixF::zeros(t_total, s_final);
    res.speaker_ids.resize(static_cast<std::size_t>(s_final));
    std::iota(res.speaker_ids.begin(), res.speaker_ids.end(), 0);
    index_t row = 0;
    for (const BlockEmission& em : res.emissions) {
        for (index_t r = 0; r < em.posterior.rows(); ++r)
            for (index_t j = 0; j < em.posterior.cols(); ++j)
                res.posterior.at(row + r, em.speaker_ids[static_cast<std::size_t>(j)]) =
                    em.posterior.at(r, j);
        row += em.posterior.rows();
    }
    res.segments = posterior_to_segments(res.posterior, res.speaker_ids, cfg.activity_threshold,
                                         res.frame_period);
    return res;
}

} // namespace

DiarizationResult run_inference(const FeatureMatrix& features, const ModelParamsF& params,
                                const InferenceConfig& cfg) {
    validate_config(features, cfg);
    EncoderConfig enc_cfg = params.config;
    if (cfg.block_frames > 0) enc_cfg.block_frames = cfg.block_frames;
    if (cfg.context_blocks >= 0) enc_cfg.context_blocks = cfg.context_blocks;
    enc_cfg.validate();
    if (features.frames.cols() != enc_cfg.input_dim)
        throw std::invalid_argument("inference: feature dimension does not match the model");

    switch (cfg.variant) {
    case Variant::offline: return run_offline(features, params, enc_cfg, cfg);
    case Variant::ul: return run_ul(features, params, enc_cfg, cfg);
    case Variant::ll: return run_ll(features, params, enc_cfg, cfg);
    }
    throw std::logic_error("inference: unknown variant");
}

double cosine_similarity(const MatrixF& a, const MatrixF& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (index_t i = 0; i < a.size(); ++i) {
        const double x = a.storage()[static_cast<std::size_t>(i)];
        const double y = b.storage()[static_cast<std::size_t>(i)];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

AttractorSet reorder_attractors(const AttractorSet& prev, const AttractorSet& cur,
                                int& next_free_id) {
    const std::size_t n = cur.attractors.size();
    std::vector<char> used(n, 0);
    AttractorSet out;

    for (std::size_t p = 0; p < prev.attractors.size(); ++p) {
        int best = -1;
        double best_cos = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            if (used[c]) continue;
            const double cos = cosine_similarity(prev.attractors[p], cur.attractors[c]);
            if (cos > best_cos) { // strict: ties keep the lower current index
                best_cos = cos;
                best = static_cast<int>(c);
            }
        }
        if (best < 0) continue; // previous speaker has no counterpart this block
        used[static_cast<std::size_t>(best)] = 1;
        out.attractors.push_back(cur.attractors[static_cast<std::size_t>(best)]);
        out.probs.push_back(cur.probs[static_cast<std::size_t>(best)]);
        out.speaker_ids.push_back(prev.speaker_ids[p]);
    }
    for (std::size_t c = 0; c < n; ++c) {
        if (used[c]) continue;
        out.attractors.push_back(cur.attractors[c]);
        out.probs.push_back(cur.probs[c]);
        out.speaker_ids.push_back(next_free_id++);
    }
    out.counted = static_cast<index_t>(out.attractors.size());
    return out;
}

AttractorSet average_attractors(const AttractorSet& prev, const AttractorSet& cur) {
    AttractorSet out = cur;
    for (std::size_t j = 0; j < out.attractors.size(); ++j) {
        for (std::size_t i = 0; i < prev.attractors.size(); ++i) {
            if (prev.speaker_ids[i] != out.speaker_ids[j]) continue;
            out.attractors[j] = scale(add(prev.attractors[i], out.attractors[j]), 0.5f);
            break;
        }
    }
    return out;
}

std::vector<index_t> shuffle_order(const std::vector<EmbeddingBlock>& blocks, ShuffleMode mode,
                                   std::uint64_t seed) {
    index_t total = 0;
    for (const auto& b : blocks) total += b.embeddings.rows();
    std::vector<index_t> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), index_t{0});
    if (mode == ShuffleMode::none) return order;

    if (mode == ShuffleMode::within_block) {
        index_t offset = 0;
        for (const auto& b : blocks) {
            std::vector<index_t> local(static_cast<std::size_t>(b.embeddings.rows()));
            std::iota(local.begin(), local.end(), index_t{0});
            Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(b.block_index)));
            rng.shuffle(local);
            for (index_t i = 0; i < b.embeddings.rows(); ++i)
                order[static_cast<std::size_t>(offset + i)] =
                    offset + local[static_cast<std::size_t>(i)];
            offset += b.embeddings.rows();
        }
        return order;
    }

    Rng rng(Rng::derive(seed, kAcrossStream));
    rng.shuffle(order);
    return order;
}

MatrixF concat_blocks(const std::vector<EmbeddingBlock>& blocks) {
    std::vector<MatrixF> parts;
    parts.reserve(blocks.size());
    for (const auto& b : blocks) parts.push_back(b.embeddings);
    return concat_rows(parts);
}

std::vector<Segment> posterior_to_segments(const MatrixF& posterior,
                                           const std::vector<int>& speaker_ids, float threshold,
                                           double frame_period) {
    if (static_cast<index_t>(speaker_ids.size()) != posterior.cols())
        throw std::invalid_argument("segments: id count must match posterior columns");
    std::vector<Segment> segs;
    for (index_t j = 0; j < posterior.cols(); ++j) {
        index_t run_start = -1;
        for (index_t t = 0; t <= posterior.rows(); ++t) {
            const bool on = t < posterior.rows() && posterior.at(t, j) >= threshold;
            if (on && run_start < 0) run_start = t;
            if (!on && run_start >= 0) {
                segs.push_back({speaker_ids[static_cast<std::size_t>(j)],
                                static_cast<double>(run_start) * frame_period,
                                static_cast<double>(t - run_start) * frame_period});
                run_start = -1;
            }
        }
    }
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
        if (a.onset != b.onset) return a.onset < b.onset;
        return a.speaker_id < b.speaker_id;
    });
    return segs;
}

} // namespace streamdiar
