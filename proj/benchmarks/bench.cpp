// Microbenchmarks for the hot paths of the streaming diarization engine:
// the audio frontend, a single cached encoder block at varying left context,
// attractor extraction, end-to-end limited-latency inference as the stream
// grows (the per-stream cost should scale linearly), the interval scorer,
// and one training step.

#include "streamdiar/attractor.hpp"
#include "streamdiar/der.hpp"
#include "streamdiar/encoder.hpp"
#include "streamdiar/features.hpp"
#include "streamdiar/model.hpp"
#include "streamdiar/pipeline.hpp"
#include "streamdiar/rng.hpp"
#include "streamdiar/rttm.hpp"
#include "streamdiar/simulate.hpp"
#include "streamdiar/train.hpp"

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

namespace {

using namespace streamdiar;

EncoderConfig desk_config() {
    EncoderConfig config;
    config.n_layers = 2;
    config.d_model = 32;
    config.n_heads = 4;
    config.d_ff = 64;
    config.input_dim = 16;
    config.block_frames = 100;
    config.context_blocks = 1;
    return config;
}

MatrixF random_frames(index_t rows, index_t cols, std::uint64_t seed) {
    Rng rng(seed);
    MatrixF m(rows, cols);
    for (auto& v : m.storage()) v = static_cast<float>(rng.normal());
    return m;
}

void bm_frontend(benchmark::State& state) {
    const double seconds = static_cast<double>(state.range(0));
    AudioBuffer audio;
    audio.samples.resize(static_cast<std::size_t>(seconds * audio.sample_rate));
    Rng rng(42);
    for (auto& s : audio.samples) s = static_cast<float>(rng.uniform(-0.5, 0.5));
    for (auto _ : state) {
        FeatureMatrix out = subsample(splice(logmel(audio)));
        benchmark::DoNotOptimize(out.frames.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seconds));
}
BENCHMARK(bm_frontend)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

void bm_encoder_block(benchmark::State& state) {
    EncoderConfig config = desk_config();
    config.context_blocks = state.range(0) < 0 ? kInfiniteContext : state.range(0);
    ModelParamsF params = ModelParamsF::init(config, 1);
    std::vector<MatrixF> blocks =
        split_blocks(random_frames(config.block_frames * 12, config.input_dim, 7),
                     config.block_frames);
    for (auto _ : state) {
        EncoderState<float> enc_state;
        for (const auto& block : blocks) {
            MatrixF out = encode_block_values(params, enc_state, block);
            benchmark::DoNotOptimize(out.data());
        }
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(blocks.size()));
}
BENCHMARK(bm_encoder_block)->Arg(0)->Arg(1)->Arg(2)->Arg(-1)->Unit(benchmark::kMillisecond);

void bm_attractors(benchmark::State& state) {
    EncoderConfig config = desk_config();
    ModelParamsF params = ModelParamsF::init(config, 2);
    MatrixF embeddings = random_frames(config.block_frames, config.d_model, 9);
    for (auto _ : state) {
        LstmStateF encoded =
            lstm_encode_values(params, embeddings, LstmStateF::zeros(config.d_model));
        AttractorSet out = decode_attractors_values(params, encoded, 10, 0.5f);
        benchmark::DoNotOptimize(out.attractors.data());
    }
}
BENCHMARK(bm_attractors)->Unit(benchmark::kMillisecond);

void bm_ll_inference(benchmark::State& state) {
    EncoderConfig config = desk_config();
    ModelParamsF params = ModelParamsF::init(config, 3);
    FeatureMatrix features =
        synthetic_features(random_frames(state.range(0), config.input_dim, 11));
    InferenceConfig cfg;
    cfg.variant = Variant::ll;
    cfg.heuristics.reorder = true;
    cfg.heuristics.average = true;
    for (auto _ : state) {
        DiarizationResult result = run_inference(features, params, cfg);
        benchmark::DoNotOptimize(result.posterior.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_ll_inference)
    ->RangeMultiplier(2)
    ->Range(500, 4000)
    ->Unit(benchmark::kMillisecond)
    ->Complexity(benchmark::oN);

void bm_scorer(benchmark::State& state) {
    Rng rng(13);
    auto make_list = [&](int n_segments) {
        SegmentList list;
        list.recording_id = "rec";
        for (int i = 0; i < n_segments; ++i) {
            RttmSegment seg;
            seg.speaker = "spk" + std::to_string(rng.bounded(4));
            seg.onset = rng.uniform(0.0, 590.0);
            seg.duration = rng.uniform(0.5, 10.0);
            list.segments.push_back(seg);
        }
        return list;
    };
    SegmentList ref = make_list(200);
    SegmentList hyp = make_list(200);
    for (auto _ : state) {
        DerBreakdown out = der(ref, hyp, 0.25);
        benchmark::DoNotOptimize(out.missed);
    }
}
BENCHMARK(bm_scorer)->Unit(benchmark::kMillisecond);

void bm_train_step(benchmark::State& state) {
    EncoderConfig config = desk_config();
    config.block_frames = 10;
    TrainConfig tc;
    tc.steps = 1;
    tc.warmup_steps = 200;
    tc.seed = 5;
    TrainDataConfig data;
    data.conversation.total_frames = 200;
    data.conversation.feature_dim = config.input_dim;
    data.n_conversations = 2;
    for (auto _ : state) {
        TrainResult out = train(config, tc, data);
        benchmark::DoNotOptimize(out.params.tensors.data());
    }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
