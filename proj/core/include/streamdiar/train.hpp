#pragma once

#include "streamdiar/attractor.hpp"
#include "streamdiar/encoder.hpp"
#include "streamdiar/loss.hpp"
#include "streamdiar/model.hpp"
#include "streamdiar/simulate.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace streamdiar {

enum class TrainMode { offline, causal };

struct TrainConfig {
    TrainMode mode = TrainMode::causal;
    index_t steps = 500;
    index_t batch_size = 1;
    index_t warmup_steps = 1000; // desk-scale default; full-scale runs use 100k
    double lr_scale = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-9;
    double existence_weight = 1.0;
    double dropout = 0.1;
    bool shuffle = true; // shuffle embedding order fed to the attractor LSTM
    double bce_clip = 1e-7;
    std::uint64_t seed = 0;
};

// lr = scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), step >= 1.
double noam_lr(index_t step, index_t d_model, index_t warmup, double scale);

template <typename T>
struct AdamState {
    std::vector<Matrix<T>> m, v; // aligned with ModelParams::tensors
    index_t step = 0;

    static AdamState init(const ModelParams<T>& params);
};

struct StepMetrics {
    index_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double pit = 0.0;
    double exist = 0.0;
};

template <typename T>
struct TrainItem {
    Matrix<T> features; // T x input_dim
    Matrix<T> labels;   // T x n_speakers, 0/1
};

template <typename T>
struct ForwardLossOptions {
    TrainMode mode = TrainMode::causal;
    std::vector<index_t> lstm_order; // empty = natural frame order
    T dropout = T(0);
    Rng* rng = nullptr;
    T existence_weight = T(1);
    T bce_clip = T(1e-7);
    CacheTrace<T>* record_trace = nullptr;
    const CacheTrace<T>* replay_trace = nullptr;
};

template <typename T>
struct LossVars {
    Var<T> total, pit, exist;
    index_t s_true = 0;
};

// Teacher-forced training forward for one conversation: encode (blockwise and
// cached in causal mode, full attention offline), run the attractor LSTM over
// the embeddings in lstm_order, decode s_true + 1 attractors, and score
// permutation-invariant frame BCE plus the existence term. Silent reference
// speakers are dropped from the targets.
template <typename T>
LossVars<T> forward_loss(Tape<T>& tape, const BoundModel<T>& model, const TrainItem<T>& item,
                         const ForwardLossOptions<T>& opt);

// One optimiser step over a batch; throws if the loss is not finite.
StepMetrics train_step(ModelParamsF& params, AdamState<float>& adam,
                       const std::vector<TrainItem<float>>& batch, const TrainConfig& cfg,
                       index_t step_index);

struct TrainDataConfig {
    ConversationSpec conversation;  // per-item seeds derive from cfg.seed
    index_t n_conversations = 50;
};

struct TrainResult {
    ModelParamsF params;
    std::vector<StepMetrics> history;
};

// Full desk-scale loop: simulate the dataset, iterate train_step, append one
// plain-text record per step to `log` when given.
TrainResult train(const EncoderConfig& config, const TrainConfig& cfg,
                  const TrainDataConfig& data, std::ostream* log = nullptr);

std::string format_metrics(const StepMetrics& m);

struct GradCheckReport {
    double max_rel_err = 0.0;
    index_t checked = 0;
};

// Compares analytic gradients of the causal training forward against central
// finite differences at 64-bit precision on a tiny model. The cache entries
// recorded by the analytic pass are pinned during the perturbed evaluations,
// because gradients do not flow through the cache.
GradCheckReport grad_check(std::uint64_t seed, index_t n_samples = 50, double step = 1e-5);

} // namespace streamdiar
