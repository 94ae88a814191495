#include "streamdiar/attractor.hpp"

#include <stdexcept>

namespace streamdiar {

template <typename T>
LstmStateVar<T> lstm_step(Tape<T>& tape, const BoundModel<T>& model, Var<T> x,
                          const LstmStateVar<T>& state) {
    const index_t d = model.config.d_model;
    Var<T> pre = tape.add(tape.add(tape.matmul(x, model.enc_wx), tape.matmul(state.h, model.enc_wh)),
                          model.enc_b);
    Var<T> i = tape.sigmoid(tape.slice_cols(pre, 0, d));
    Var<T> f = tape.sigmoid(tape.slice_cols(pre, d, 2 * d));
    Var<T> g = tape.tanh_op(tape.slice_cols(pre, 2 * d, 3 * d));
    Var<T> o = tape.sigmoid(tape.slice_cols(pre, 3 * d, 4 * d));
    LstmStateVar<T> out;
    out.c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
    out.h = tape.mul(o, tape.tanh_op(out.c));
    return out;
}

template <typename T>
LstmStateVar<T> lstm_encode(Tape<T>& tape, const BoundModel<T>& model, Var<T> inputs,
                            const LstmStateVar<T>& init, const std::vector<index_t>& order) {
    const index_t rows = tape.value(inputs).rows();
    if (!order.empty() && static_cast<index_t>(order.size()) != rows)
        throw std::invalid_argument("lstm_encode: order must cover every input row");
    LstmStateVar<T> state = init;
    for (index_t t = 0; t < rows; ++t) {
        const index_t r = order.empty() ? t : order[static_cast<std::size_t>(t)];
        state = lstm_step(tape, model, tape.row(inputs, r), state);
    }
    return state;
}

template <typename T>
LstmStateVar<T> decoder_step(Tape<T>& tape, const BoundModel<T>& model,
                             const LstmStateVar<T>& state) {
    const index_t d = model.config.d_model;
    Var<T> pre = tape.add(tape.matmul(state.h, model.dec_wh), model.dec_b);
    Var<T> i = tape.sigmoid(tape.slice_cols(pre, 0, d));
    Var<T> f = tape.sigmoid(tape.slice_cols(pre, d, 2 * d));
    Var<T> g = tape.tanh_op(tape.slice_cols(pre, 2 * d, 3 * d));
    Var<T> o = tape.sigmoid(tape.slice_cols(pre, 3 * d, 4 * d));
    LstmStateVar<T> out;
    out.c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
    out.h = tape.mul(o, tape.tanh_op(out.c));
    return out;
}

template <typename T>
Var<T> existence_prob(Tape<T>& tape, const BoundModel<T>& model, Var<T> attractor) {
    return tape.sigmoid(tape.add(tape.matmul(attractor, model.exist_w), model.exist_b));
}

template <typename T>
DecodedAttractors<T> decode_attractors(Tape<T>& tape, const BoundModel<T>& model,
                                       const LstmStateVar<T>& init, index_t max_speakers,
                                       T tau, index_t min_count, index_t steps) {
    if (max_speakers < 1) throw std::invalid_argument("decode_attractors: max_speakers must be >= 1");
    DecodedAttractors<T> out;
    LstmStateVar<T> state = init;
    const index_t limit = (steps >= 0) ? steps : max_speakers + 1;
    for (index_t s = 1; s <= limit; ++s) {
        state = decoder_step(tape, model, state);
        Var<T> p = existence_prob(tape, model, state.h);
        out.attractors.push_back(state.h);
        out.probs.push_back(p);
        if (steps < 0) {
            const double pv = static_cast<double>(tape.value(p).at(0, 0));
            if (pv < static_cast<double>(tau) && s > min_count) break;
        }
    }
    return out;
}

index_t count_speakers(const std::vector<double>& probs, double tau, index_t floor,
                       index_t max_speakers) {
    index_t run = 0;
    while (run < static_cast<index_t>(probs.size()) &&
           probs[static_cast<std::size_t>(run)] >= tau)
        ++run;
    index_t s = std::max(run, floor);
    return std::min(s, max_speakers);
}

template <typename T>
Var<T> frame_posteriors(Tape<T>& tape, Var<T> embeddings, const std::vector<Var<T>>& attractors) {
    if (attractors.empty())
        throw std::invalid_argument("frame_posteriors: needs at least one attractor");
    Var<T> a = (attractors.size() == 1) ? attractors.front() : tape.concat_rows(attractors);
    return tape.sigmoid(tape.matmul_nt(embeddings, a));
}

LstmStateF lstm_encode_values(const ModelParamsF& params, const MatrixF& inputs,
                              const LstmStateF& init, const std::vector<index_t>& order) {
    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);
    LstmStateVar<float> init_v{tape.constant(init.h), tape.constant(init.c)};
    LstmStateVar<float> fin = lstm_encode(tape, model, tape.constant(inputs), init_v, order);
    return {tape.value(fin.h), tape.value(fin.c)};
}

AttractorSet decode_attractors_values(const ModelParamsF& params, const LstmStateF& init,
                                      index_t max_speakers, float tau, index_t min_count) {
    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);
    LstmStateVar<float> init_v{tape.constant(init.h), tape.constant(init.c)};
    DecodedAttractors<float> dec =
        decode_attractors(tape, model, init_v, max_speakers, tau, min_count);
    AttractorSet set;
    std::vector<double> probs;
    for (std::size_t i = 0; i < dec.attractors.size(); ++i) {
        set.attractors.push_back(tape.value(dec.attractors[i]));
        const float p = tape.value(dec.probs[i]).at(0, 0);
        set.probs.push_back(p);
        set.speaker_ids.push_back(static_cast<int>(i));
        probs.push_back(static_cast<double>(p));
    }
    set.counted = count_speakers(probs, static_cast<double>(tau), min_count, max_speakers);
    return set;
}

#define STREAMDIAR_ATTRACTOR_INSTANTIATE(T)                                                   \
    template LstmStateVar<T> lstm_step(Tape<T>&, const BoundModel<T>&, Var<T>,                \
                                       const LstmStateVar<T>&);                               \
    template LstmStateVar<T> lstm_encode(Tape<T>&, const BoundModel<T>&, Var<T>,              \
                                         const LstmStateVar<T>&, const std::vector<index_t>&); \
    template LstmStateVar<T> decoder_step(Tape<T>&, const BoundModel<T>&,                     \
                                          const LstmStateVar<T>&);                            \
    template Var<T> existence_prob(Tape<T>&, const BoundModel<T>&, Var<T>);                   \
    template DecodedAttractors<T> decode_attractors(Tape<T>&, const BoundModel<T>&,           \
                                                    const LstmStateVar<T>&, index_t, T,       \
                                                    index_t, index_t);                        \
    template Var<T> frame_posteriors(Tape<T>&, Var<T>, const std::vector<Var<T>>&);

STREAMDIAR_ATTRACTOR_INSTANTIATE(float)
STREAMDIAR_ATTRACTOR_INSTANTIATE(double)

} // namespace streamdiar
