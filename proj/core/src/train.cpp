#include "streamdiar/train.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace streamdiar {

namespace {

constexpr std::uint64_t kDataStream = 0x64617461;   // dataset item seeds
constexpr std::uint64_t kInitStream = 0x696e6974;   // parameter init seed
constexpr std::uint64_t kStepStream = 0x73746570;   // per-step shuffle/dropout

// Keeps reference columns whose speaker is ever active; silent speakers have
// no attractor to learn against.
template <typename T>
std::pair<Matrix<T>, index_t> active_targets(const Matrix<T>& labels) {
    std::vector<index_t> active;
    for (index_t j = 0; j < labels.cols(); ++j) {
        for (index_t t = 0; t < labels.rows(); ++t) {
            if (labels.at(t, j) > T(0.5)) {
                active.push_back(j);
                break;
            }
        }
    }
    Matrix<T> compact(labels.rows(), static_cast<index_t>(active.size()));
    for (index_t j = 0; j < compact.cols(); ++j)
        for (index_t t = 0; t < labels.rows(); ++t)
            compact.at(t, j) = labels.at(t, active[static_cast<std::size_t>(j)]);
    return {compact, static_cast<index_t>(active.size())};
}

} // namespace

double noam_lr(index_t step, index_t d_model, index_t warmup, double scale) {
    if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
    if (warmup < 1) throw std::invalid_argument("noam_lr: warmup must be >= 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    return scale / std::sqrt(static_cast<double>(d_model)) *
           std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

template <typename T>
AdamState<T> AdamState<T>::init(const ModelParams<T>& params) {
    AdamState<T> st;
    st.m.reserve(params.tensors.size());
    st.v.reserve(params.tensors.size());
    for (const auto& [name, m] : params.tensors) {
        st.m.push_back(Matrix<T>::zeros(m.rows(), m.cols()));
        st.v.push_back(Matrix<T>::zeros(m.rows(), m.cols()));
    }
    return st;
}

template <typename T>
LossVars<T> forward_loss(Tape<T>& tape, const BoundModel<T>& model, const TrainItem<T>& item,
                         const ForwardLossOptions<T>& opt) {
    if (item.features.rows() != item.labels.rows())
        throw std::invalid_argument("forward_loss: features and labels disagree on frames");

    ForwardOptions<T> enc_opt;
    enc_opt.training = opt.dropout > T(0);
    enc_opt.dropout_rate = opt.dropout;
    enc_opt.rng = opt.rng;
    enc_opt.record_trace = opt.record_trace;
    enc_opt.replay_trace = opt.replay_trace;

    Var<T> all_e{};
    if (opt.mode == TrainMode::offline) {
        all_e = encode_offline(tape, model, item.features, enc_opt);
    } else {
        EncoderState<T> state;
        std::vector<Var<T>> parts;
        for (const Matrix<T>& blk : split_blocks(item.features, model.config.block_frames))
            parts.push_back(encode_block(tape, model, state, blk, enc_opt));
        all_e = (parts.size() == 1) ? parts.front() : tape.concat_rows(parts);
    }

    auto [targets, s_true] = active_targets(item.labels);

    const index_t d = model.config.d_model;
    LstmStateVar<T> init{tape.constant(Matrix<T>::zeros(1, d)), tape.constant(Matrix<T>::zeros(1, d))};
    LstmStateVar<T> fin = lstm_encode(tape, model, all_e, init, opt.lstm_order);
    DecodedAttractors<T> dec = decode_attractors(tape, model, fin, std::max<index_t>(s_true, 1),
                                                 T(0.5), 0, s_true + 1);

    LossVars<T> out;
    out.s_true = s_true;
    out.exist = existence_bce(tape, dec.probs, s_true, opt.bce_clip);
    if (s_true > 0) {
        std::vector<Var<T>> attrs(dec.attractors.begin(),
                                  dec.attractors.begin() + static_cast<std::ptrdiff_t>(s_true));
        Var<T> post = frame_posteriors(tape, all_e, attrs);
        out.pit = pit_bce(tape, post, targets, opt.bce_clip).first;
    } else {
        out.pit = tape.constant(Matrix<T>::zeros(1, 1));
    }
    out.total = tape.add(out.pit, tape.scale(out.exist, opt.existence_weight));
    return out;
}

StepMetrics train_step(ModelParamsF& params, AdamState<float>& adam,
                       const std::vector<TrainItem<float>>& batch, const TrainConfig& cfg,
                       index_t step_index) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

    Tape<float> tape(true);
    BoundModel<float> model = bind_model(tape, params);
    Rng rng(Rng::derive(cfg.seed, kStepStream + static_cast<std::uint64_t>(step_index)));

    std::vector<Var<float>> totals;
    double pit_sum = 0.0, exist_sum = 0.0;
    for (const auto& item : batch) {
        ForwardLossOptions<float> opt;
        opt.mode = cfg.mode;
        if (cfg.shuffle) {
            std::vector<index_t> order(static_cast<std::size_t>(item.features.rows()));
            std::iota(order.begin(), order.end(), index_t{0});
            rng.shuffle(order);
            opt.lstm_order = std::move(order);
        }
        opt.dropout = static_cast<float>(cfg.dropout);
        opt.rng = &rng;
        opt.existence_weight = static_cast<float>(cfg.existence_weight);
        opt.bce_clip = static_cast<float>(cfg.bce_clip);
        LossVars<float> lv = forward_loss(tape, model, item, opt);
        totals.push_back(lv.total);
        pit_sum += static_cast<double>(tape.value(lv.pit).at(0, 0));
        exist_sum += static_cast<double>(tape.value(lv.exist).at(0, 0));
    }
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    Var<float> total = tape.scale(tape.add_scalars(totals), inv_b);

    const double loss = static_cast<double>(tape.value(total).at(0, 0));
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at step " << step_index
            << " (pit=" << pit_sum * inv_b << ", exist=" << exist_sum * inv_b << ")";
        throw std::runtime_error(msg.str());
    }

    tape.backward(total);

    adam.step += 1;
    const double lr = noam_lr(adam.step, params.config.d_model, cfg.warmup_steps, cfg.lr_scale);
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const Matrix<float> g = tape.grad(model.vars[i].second);
        auto& theta = params.tensors[i].second.storage();
        auto& m = adam.m[i].storage();
        auto& v = adam.v[i].storage();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = static_cast<double>(g.storage()[j]);
            m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * gj);
            v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * gj * gj);
            const double mhat = static_cast<double>(m[j]) / bc1;
            const double vhat = static_cast<double>(v[j]) / bc2;
            theta[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
    }

    StepMetrics metrics;
    metrics.step = adam.step;
    metrics.lr = lr;
    metrics.loss = loss;
    metrics.pit = pit_sum * inv_b;
    metrics.exist = exist_sum * inv_b;
    return metrics;
}

TrainResult train(const EncoderConfig& config, const TrainConfig& cfg, const TrainDataConfig& data,
                  std::ostream* log) {
    config.validate();
    if (data.n_conversations < 1) throw std::invalid_argument("train: need at least one conversation");

    std::vector<TrainItem<float>> items;
    items.reserve(static_cast<std::size_t>(data.n_conversations));
    for (index_t i = 0; i < data.n_conversations; ++i) {
        ConversationSpec spec = data.conversation;
        spec.seed = Rng::derive(cfg.seed, kDataStream + static_cast<std::uint64_t>(i));
        Conversation conv = simulate(spec);
        items.push_back({std::move(conv.features.frames), std::move(conv.labels)});
    }

    TrainResult result;
    result.params = ModelParamsF::init(config, Rng::derive(cfg.seed, kInitStream));
    AdamState<float> adam = AdamState<float>::init(result.params);

    for (index_t step = 0; step < cfg.steps; ++step) {
        std::vector<TrainItem<float>> batch;
        for (index_t j = 0; j < cfg.batch_size; ++j) {
            const std::size_t idx = static_cast<std::size_t>(
                (step * cfg.batch_size + j) % data.n_conversations);
            batch.push_back(items[idx]);
        }
        StepMetrics m = train_step(result.params, adam, batch, cfg, step);
        if (log) *log << format_metrics(m) << '\n';
        result.history.push_back(m);
    }
    return result;
}

std::string format_metrics(const StepMetrics& m) {
    std::ostringstream os;
    os << "step=" << m.step << " lr=" << m.lr << " loss=" << m.loss << " pit=" << m.pit
       << " exist=" << m.exist;
    return os.str();
}

GradCheckReport grad_check(std::uint64_t seed, index_t n_samples, double step) {
    EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.input_dim = 5;
    cfg.block_frames = 3;
    cfg.context_blocks = 1;

    ModelParamsD params = ModelParamsD::init(cfg, seed);

    Rng rng(Rng::derive(seed, 0x66656174)); // feature noise
    TrainItem<double> item;
    item.features = Matrix<double>(9, cfg.input_dim);
    for (auto& v : item.features.storage()) v = rng.normal();
    item.labels = Matrix<double>::zeros(9, 2);
    for (index_t t = 0; t < 6; ++t) item.labels.at(t, 0) = 1.0;
    for (index_t t = 3; t < 9; ++t) item.labels.at(t, 1) = 1.0;

    // Analytic pass, recording the cache entries it pushes.
    CacheTrace<double> trace;
    Tape<double> tape(true);
    BoundModel<double> model = bind_model(tape, params);
    ForwardLossOptions<double> opt;
    opt.mode = TrainMode::causal;
    opt.dropout = 0.0;
    opt.record_trace = &trace;
    LossVars<double> lv = forward_loss(tape, model, item, opt);
    tape.backward(lv.total);

    std::vector<Matrix<double>> grads;
    grads.reserve(params.tensors.size());
    for (const auto& [name, var] : model.vars) grads.push_back(tape.grad(var));

    const index_t total_params = params.parameter_count();
    auto eval_at = [&](const ModelParamsD& p) {
        Tape<double> t2(false);
        BoundModel<double> m2 = bind_model(t2, p);
        ForwardLossOptions<double> o2;
        o2.mode = TrainMode::causal;
        o2.dropout = 0.0;
        o2.replay_trace = &trace;
        return t2.value(forward_loss(t2, m2, item, o2).total).at(0, 0);
    };

    Rng pick(Rng::derive(seed, 0x7069636b));
    GradCheckReport report;
    for (index_t s = 0; s < n_samples; ++s) {
        index_t flat = static_cast<index_t>(pick.bounded(static_cast<std::uint64_t>(total_params)));
        std::size_t ti = 0;
        while (flat >= params.tensors[ti].second.size()) {
            flat -= params.tensors[ti].second.size();
            ++ti;
        }
        ModelParamsD p2 = params;
        auto& slot = p2.tensors[ti].second.storage()[static_cast<std::size_t>(flat)];
        const double original = slot;
        slot = original + step;
        const double f_plus = eval_at(p2);
        slot = original - step;
        const double f_minus = eval_at(p2);
        const double fd = (f_plus - f_minus) / (2.0 * step);
        const double an = grads[ti].storage()[static_cast<std::size_t>(flat)];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        report.checked += 1;
    }
    return report;
}

template struct AdamState<float>;
template struct AdamState<double>;

#define STREAMDIAR_TRAIN_INSTANTIATE(T)                                                      \
    template LossVars<T> forward_loss(Tape<T>&, const BoundModel<T>&, const TrainItem<T>&,   \
                                      const ForwardLossOptions<T>&);

STREAMDIAR_TRAIN_INSTANTIATE(float)
STREAMDIAR_TRAIN_INSTANTIATE(double)

} // namespace streamdiar
