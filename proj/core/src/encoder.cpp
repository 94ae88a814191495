#include "streamdiar/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace streamdiar {

namespace {

template <typename T>
Var<T> multi_head_attention(Tape<T>& tape, const typename BoundModel<T>::LayerVars& L,
                            index_t n_heads, Var<T> query_in, Var<T> kv_in,
                            const ForwardOptions<T>& opt) {
    const index_t d = tape.value(query_in).cols();
    const index_t dh = d / n_heads;
    const T inv_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));

    Var<T> q = tape.add_rowvec(tape.matmul(query_in, L.q_w), L.q_b);
    Var<T> k = tape.add_rowvec(tape.matmul(kv_in, L.k_w), L.k_b);
    Var<T> v = tape.add_rowvec(tape.matmul(kv_in, L.v_w), L.v_b);

    Var<T> out{};
    for (index_t h = 0; h < n_heads; ++h) {
        Var<T> qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Var<T> kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Var<T> vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        Var<T> probs = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_scale));
        if (opt.training && opt.dropout_rate > T(0))
            probs = tape.dropout(probs, opt.dropout_rate, *opt.rng);
        Var<T> head = tape.matmul(probs, vh);
        Var<T> contrib = tape.matmul(head, tape.slice_rows(L.o_w, h * dh, (h + 1) * dh));
        out = (h == 0) ? contrib : tape.add(out, contrib);
    }
    return tape.add_rowvec(out, L.o_b);
}

} // namespace

template <typename T>
Var<T> encode_block(Tape<T>& tape, const BoundModel<T>& model, EncoderState<T>& state,
                    const Matrix<T>& x_block, const ForwardOptions<T>& opt) {
    const EncoderConfig& cfg = model.config;
    if (x_block.cols() != cfg.input_dim)
        throw std::invalid_argument("encode_block: feature dimension mismatch");
    if (x_block.rows() < 1) throw std::invalid_argument("encode_block: empty block");
    if (opt.training && opt.dropout_rate > T(0) && opt.rng == nullptr)
        throw std::invalid_argument("encode_block: dropout requires an rng");
    if (state.cache.empty()) state.cache.resize(static_cast<std::size_t>(cfg.n_layers));

    const index_t block_index = state.blocks_seen;
    if (opt.record_trace) {
        auto& blocks = opt.record_trace->blocks;
        if (static_cast<index_t>(blocks.size()) != block_index)
            throw std::logic_error("encode_block: trace recording out of sequence");
        blocks.emplace_back();
    }
    auto cache_entry = [&](index_t layer, const Var<T>& cur) -> Matrix<T> {
        if (opt.replay_trace)
            return opt.replay_trace->blocks.at(static_cast<std::size_t>(block_index))
                .at(static_cast<std::size_t>(layer));
        return tape.value(cur);
    };

    Var<T> x = tape.constant(x_block);
    Var<T> cur = tape.layer_norm_rows(tape.add_rowvec(tape.matmul(x, model.proj_w), model.proj_b),
                                      model.proj_ng, model.proj_nb);

    std::vector<Matrix<T>> new_entries;
    new_entries.reserve(static_cast<std::size_t>(cfg.n_layers));
    for (index_t i = 0; i < cfg.n_layers; ++i) {
        auto& layer_cache = state.cache[static_cast<std::size_t>(i)];
        new_entries.push_back(cache_entry(i, cur));
        if (opt.record_trace)
            opt.record_trace->blocks.back().push_back(new_entries.back());

        Var<T> kv = cur;
        if (!layer_cache.empty()) {
            std::vector<Var<T>> parts;
            parts.reserve(layer_cache.size() + 1);
            for (const auto& m : layer_cache) parts.push_back(tape.constant(m));
            parts.push_back(cur);
            kv = tape.concat_rows(parts);
        }

        const auto& L = model.layers[static_cast<std::size_t>(i)];
        Var<T> attn = multi_head_attention(tape, L, cfg.n_heads, cur, kv, opt);
        Var<T> h1 = tape.layer_norm_rows(tape.add(cur, attn), L.n1_g, L.n1_b);
        Var<T> ff = tape.matmul(tape.relu(tape.add_rowvec(tape.matmul(h1, L.ff1_w), L.ff1_b)),
                                L.ff2_w);
        ff = tape.add_rowvec(ff, L.ff2_b);
        if (opt.training && opt.dropout_rate > T(0))
            ff = tape.dropout(ff, opt.dropout_rate, *opt.rng);
        cur = tape.layer_norm_rows(tape.add(h1, ff), L.n2_g, L.n2_b);
    }

    for (index_t i = 0; i < cfg.n_layers; ++i) {
        auto& layer_cache = state.cache[static_cast<std::size_t>(i)];
        layer_cache.push_back(std::move(new_entries[static_cast<std::size_t>(i)]));
        if (cfg.context_blocks != kInfiniteContext) {
            while (static_cast<index_t>(layer_cache.size()) > cfg.context_blocks)
                layer_cache.pop_front();
        }
    }
    state.blocks_seen += 1;
    return cur;
}

template <typename T>
Var<T> encode_offline(Tape<T>& tape, const BoundModel<T>& model, const Matrix<T>& x,
                      const ForwardOptions<T>& opt) {
    EncoderState<T> state;
    return encode_block(tape, model, state, x, opt);
}

template <typename T>
Matrix<T> encode_block_values(const ModelParams<T>& params, EncoderState<T>& state,
                              const Matrix<T>& x_block) {
    Tape<T> tape(false);
    BoundModel<T> model = bind_model(tape, params);
    return tape.value(encode_block(tape, model, state, x_block));
}

template <typename T>
Matrix<T> encode_offline_values(const ModelParams<T>& params, const Matrix<T>& x) {
    EncoderState<T> state;
    return encode_block_values(params, state, x);
}

template <typename T>
std::vector<Matrix<T>> split_blocks(const Matrix<T>& features, index_t block_frames) {
    if (block_frames < 1) throw std::invalid_argument("split_blocks: block_frames must be >= 1");
    std::vector<Matrix<T>> blocks;
    for (index_t start = 0; start < features.rows(); start += block_frames) {
        const index_t end = std::min(features.rows(), start + block_frames);
        blocks.push_back(slice_rows(features, start, end));
    }
    return blocks;
}

#define STREAMDIAR_ENCODER_INSTANTIATE(T)                                                  \
    template Var<T> encode_block(Tape<T>&, const BoundModel<T>&, EncoderState<T>&,         \
                                 const Matrix<T>&, const ForwardOptions<T>&);              \
    template Var<T> encode_offline(Tape<T>&, const BoundModel<T>&, const Matrix<T>&,       \
                                   const ForwardOptions<T>&);                              \
    template Matrix<T> encode_block_values(const ModelParams<T>&, EncoderState<T>&,        \
                                           const Matrix<T>&);                              \
    template Matrix<T> encode_offline_values(const ModelParams<T>&, const Matrix<T>&);     \
    template std::vector<Matrix<T>> split_blocks(const Matrix<T>&, index_t);

STREAMDIAR_ENCODER_INSTANTIATE(float)
STREAMDIAR_ENCODER_INSTANTIATE(double)

} // namespace streamdiar
