// Training loop: learning-rate schedule, the teacher-forced forward pass
// (checked end to end against the double-precision reference pieces), the
// optimiser step, the desk-scale loop, and the finite-difference gradient
// audit.
#include "doctest.h"

#include "streamdiar/train.hpp"

#include "helpers.hpp"
#include "reference.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace streamdiar;
using testutil::random_matrix;

namespace {

EncoderConfig train_config(index_t block_frames, index_t context) {
    EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.input_dim = 6;
    cfg.block_frames = block_frames;
    cfg.context_blocks = context;
    cfg.validate();
    return cfg;
}

// Two speakers with an overlapping stretch in the middle; both are active,
// so no reference column is dropped unless the test silences one.
TrainItem<float> two_speaker_item(Rng& rng, index_t frames, index_t dim) {
    TrainItem<float> item;
    item.features = random_matrix<float>(rng, frames, dim);
    item.labels = MatrixF::zeros(frames, 2);
    for (index_t t = 0; t < frames; ++t) {
        if (t < 2 * frames / 3) item.labels.at(t, 0) = 1.0f;
        if (t >= frames / 3) item.labels.at(t, 1) = 1.0f;
    }
    return item;
}

bool params_equal(const ModelParamsF& a, const ModelParamsF& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        if (a.tensors[i].first != b.tensors[i].first) return false;
        if (!bitwise_equal(a.tensors[i].second, b.tensors[i].second)) return false;
    }
    return true;
}

double params_max_diff(const ModelParamsF& a, const ModelParamsF& b) {
    REQUIRE(a.tensors.size() == b.tensors.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
        worst = std::max(worst, testutil::max_abs_diff(a.tensors[i].second, b.tensors[i].second));
    return worst;
}

double clip_prob(double p, double clip) { return std::min(std::max(p, clip), 1.0 - clip); }

// The whole teacher-forced training forward recomputed from the reference
// pieces: encoder oracle, scalar LSTM chain over the embeddings, attractor
// decode with zero decoder input, frame posteriors, permutation-minimised
// frame BCE plus the existence term.
double forward_loss_oracle(const ModelParamsF& params, const TrainItem<float>& item,
                           TrainMode mode, double existence_weight, double clip = 1e-7) {
    refimpl::EncoderOracle enc(params);
    std::vector<refimpl::Mat> blocks;
    if (mode == TrainMode::offline) {
        blocks.push_back(refimpl::to_mat(item.features));
    } else {
        for (const MatrixF& b : split_blocks(item.features, params.config.block_frames))
            blocks.push_back(refimpl::to_mat(b));
    }
    const refimpl::Mat e = refimpl::concat_rows(enc.encode(blocks));

    const std::size_t d = static_cast<std::size_t>(params.config.d_model);
    const refimpl::Mat enc_wx = refimpl::to_mat(params.find("eda.enc.wx"));
    const refimpl::Mat enc_wh = refimpl::to_mat(params.find("eda.enc.wh"));
    const refimpl::Mat enc_b = refimpl::to_mat(params.find("eda.enc.b"));
    const refimpl::Mat dec_wh = refimpl::to_mat(params.find("eda.dec.wh"));
    const refimpl::Mat dec_b = refimpl::to_mat(params.find("eda.dec.b"));
    const refimpl::Mat exist_w = refimpl::to_mat(params.find("eda.exist.w"));
    const refimpl::Mat exist_b = refimpl::to_mat(params.find("eda.exist.b"));

    refimpl::LstmOracleState st;
    st.h.assign(d, 0.0);
    st.c.assign(d, 0.0);
    for (std::size_t t = 0; t < e.rows; ++t) {
        std::vector<double> x(e.cols);
        for (std::size_t j = 0; j < e.cols; ++j) x[j] = e.at(t, j);
        st = refimpl::lstm_step(x, st, enc_wx, enc_wh, enc_b);
    }

    std::vector<std::size_t> active;
    for (index_t j = 0; j < item.labels.cols(); ++j)
        for (index_t t = 0; t < item.labels.rows(); ++t)
            if (item.labels.at(t, j) > 0.5f) {
                active.push_back(static_cast<std::size_t>(j));
                break;
            }
    const std::size_t s_true = active.size();

    // The decoder cell sees no input; feeding zeros through any weight
    // matrix of the right height contributes nothing.
    const std::vector<double> zero(d, 0.0);
    std::vector<std::vector<double>> attractors;
    std::vector<double> probs;
    for (std::size_t s = 0; s < s_true + 1; ++s) {
        st = refimpl::lstm_step(zero, st, enc_wx, dec_wh, dec_b);
        attractors.push_back(st.h);
        double pre = exist_b.at(0, 0);
        for (std::size_t j = 0; j < d; ++j) pre += st.h[j] * exist_w.at(j, 0);
        probs.push_back(1.0 / (1.0 + std::exp(-pre)));
    }

    double exist = 0.0;
    for (std::size_t s = 0; s < s_true; ++s) exist -= std::log(clip_prob(probs[s], clip));
    exist -= std::log(clip_prob(1.0 - probs[s_true], clip));
    exist /= static_cast<double>(s_true + 1);

    double pit = 0.0;
    if (s_true > 0) {
        refimpl::Mat post(e.rows, s_true);
        for (std::size_t t = 0; t < e.rows; ++t)
            for (std::size_t s = 0; s < s_true; ++s) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += e.at(t, j) * attractors[s][j];
                post.at(t, s) = 1.0 / (1.0 + std::exp(-dot));
            }
        refimpl::Mat target(static_cast<std::size_t>(item.labels.rows()), s_true);
        for (std::size_t t = 0; t < target.rows; ++t)
            for (std::size_t s = 0; s < s_true; ++s)
                target.at(t, s) = static_cast<double>(item.labels.at(
                    static_cast<index_t>(t), static_cast<index_t>(active[s])));
        pit = refimpl::pit_bce_oracle(post, target, clip);
    }
    return pit + existence_weight * exist;
}

struct LossParts {
    double total = 0.0, pit = 0.0, exist = 0.0;
    index_t s_true = 0;
};

LossParts eval_loss(const ModelParamsF& params, const TrainItem<float>& item,
                    const ForwardLossOptions<float>& opt) {
    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);
    LossVars<float> lv = forward_loss(tape, model, item, opt);
    LossParts out;
    out.total = static_cast<double>(tape.value(lv.total).at(0, 0));
    out.pit = static_cast<double>(tape.value(lv.pit).at(0, 0));
    out.exist = static_cast<double>(tape.value(lv.exist).at(0, 0));
    out.s_true = lv.s_true;
    return out;
}

} // namespace

TEST_SUITE("train") {

TEST_CASE("learning-rate schedule matches its closed form and peaks at warmup") {
    const index_t d = 64;
    const index_t warmup = 100;
    const double scale = 1.5;
    for (index_t step : {index_t{1}, index_t{7}, index_t{50}, index_t{100}, index_t{101},
                         index_t{400}, index_t{10000}}) {
        const double s = static_cast<double>(step);
        const double w = static_cast<double>(warmup);
        const double want = scale / std::sqrt(static_cast<double>(d)) *
                            std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
        CHECK(noam_lr(step, d, warmup, scale) == doctest::Approx(want).epsilon(1e-12));
    }

    const double peak = noam_lr(warmup, d, warmup, scale);
    for (index_t step : {index_t{1}, index_t{40}, index_t{99}, index_t{101}, index_t{250}})
        CHECK(noam_lr(step, d, warmup, scale) < peak);
    CHECK(noam_lr(10, d, warmup, scale) < noam_lr(20, d, warmup, scale)); // ramp up
    CHECK(noam_lr(300, d, warmup, scale) > noam_lr(600, d, warmup, scale)); // decay

    CHECK_THROWS_AS(noam_lr(0, d, warmup, scale), std::invalid_argument);
    CHECK_THROWS_AS(noam_lr(5, d, 0, scale), std::invalid_argument);
}

TEST_CASE("optimiser state starts at zero, aligned with the parameter tensors") {
    ModelParamsF params = ModelParamsF::init(train_config(4, 1), 3);
    AdamState<float> adam = AdamState<float>::init(params);
    CHECK(adam.step == 0);
    REQUIRE(adam.m.size() == params.tensors.size());
    REQUIRE(adam.v.size() == params.tensors.size());
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
        CHECK(bitwise_equal(adam.m[i], MatrixF::zeros(params.tensors[i].second.rows(),
                                                      params.tensors[i].second.cols())));
        CHECK(bitwise_equal(adam.v[i], MatrixF::zeros(params.tensors[i].second.rows(),
                                                      params.tensors[i].second.cols())));
    }
}

TEST_CASE("training forward matches the reference recomputation in both modes") {
    Rng rng(501);
    for (int trial = 0; trial < 5; ++trial) {
        ModelParamsF params = ModelParamsF::init(train_config(3, 1), rng.next_u64());
        TrainItem<float> item = two_speaker_item(rng, 9, 6);

        for (TrainMode mode : {TrainMode::offline, TrainMode::causal}) {
            CAPTURE(static_cast<int>(mode));
            ForwardLossOptions<float> opt;
            opt.mode = mode;
            opt.existence_weight = 2.5f;
            LossParts got = eval_loss(params, item, opt);
            const double want = forward_loss_oracle(params, item, mode, 2.5);
            REQUIRE(want > 0.1); // keep the relative comparison meaningful
            CHECK(std::abs(got.total - want) / want < 2e-3);
            CHECK(got.s_true == 2);
            CHECK(got.total ==
                  doctest::Approx(got.pit + 2.5 * got.exist).epsilon(1e-5));
        }
    }
}

TEST_CASE("a block wider than the stream makes the causal forward offline") {
    Rng rng(502);
    ModelParamsF params = ModelParamsF::init(train_config(32, 1), rng.next_u64());
    TrainItem<float> item = two_speaker_item(rng, 12, 6);

    ForwardLossOptions<float> opt;
    opt.mode = TrainMode::causal;
    LossParts causal = eval_loss(params, item, opt);
    opt.mode = TrainMode::offline;
    LossParts offline = eval_loss(params, item, opt);

    CHECK(causal.total == offline.total); // bit-for-bit: same operations
    CHECK(causal.pit == offline.pit);
    CHECK(causal.exist == offline.exist);
}

TEST_CASE("silent reference speakers are dropped from the targets") {
    Rng rng(503);
    ModelParamsF params = ModelParamsF::init(train_config(4, 1), rng.next_u64());
    TrainItem<float> item = two_speaker_item(rng, 12, 6);

    // The same conversation with an always-silent column wedged in between.
    TrainItem<float> padded;
    padded.features = item.features;
    padded.labels = MatrixF::zeros(12, 3);
    for (index_t t = 0; t < 12; ++t) {
        padded.labels.at(t, 0) = item.labels.at(t, 0);
        padded.labels.at(t, 2) = item.labels.at(t, 1);
    }

    ForwardLossOptions<float> opt;
    LossParts a = eval_loss(params, item, opt);
    LossParts b = eval_loss(params, padded, opt);
    CHECK(a.s_true == 2);
    CHECK(b.s_true == 2);
    CHECK(a.total == b.total); // compacted targets are identical

    SUBCASE("an entirely silent conversation scores only the existence term") {
        TrainItem<float> silent;
        silent.features = item.features;
        silent.labels = MatrixF::zeros(12, 2);
        LossParts s = eval_loss(params, silent, opt);
        CHECK(s.s_true == 0);
        CHECK(s.pit == 0.0);
        CHECK(s.total == doctest::Approx(s.exist).epsilon(1e-7));
    }
}

TEST_CASE("training forward input guards") {
    Rng rng(504);
    ModelParamsF params = ModelParamsF::init(train_config(4, 1), rng.next_u64());
    TrainItem<float> item = two_speaker_item(rng, 12, 6);

    Tape<float> tape(false);
    BoundModel<float> model = bind_model(tape, params);

    TrainItem<float> mismatched = item;
    mismatched.labels = MatrixF::zeros(11, 2);
    ForwardLossOptions<float> opt;
    CHECK_THROWS_AS(forward_loss(tape, model, mismatched, opt), std::invalid_argument);

    ForwardLossOptions<float> dropout_no_rng;
    dropout_no_rng.dropout = 0.1f;
    CHECK_THROWS_AS(forward_loss(tape, model, item, dropout_no_rng), std::invalid_argument);
}

TEST_CASE("one optimiser step: metrics, zero-scale freeze, determinism, batching") {
    Rng rng(505);
    ModelParamsF init = ModelParamsF::init(train_config(4, 1), rng.next_u64());
    TrainItem<float> item = two_speaker_item(rng, 12, 6);

    TrainConfig cfg;
    cfg.warmup_steps = 50;
    cfg.lr_scale = 0.5;
    cfg.existence_weight = 1.0;
    cfg.seed = 11;

    SUBCASE("metrics are consistent and the step advances the optimiser clock") {
        ModelParamsF params = init;
        AdamState<float> adam = AdamState<float>::init(params);
        StepMetrics m = train_step(params, adam, {item}, cfg, 0);
        CHECK(m.step == 1);
        CHECK(adam.step == 1);
        CHECK(m.lr == doctest::Approx(noam_lr(1, 8, cfg.warmup_steps, cfg.lr_scale)).epsilon(1e-12));
        CHECK(std::isfinite(m.loss));
        CHECK(m.loss == doctest::Approx(m.pit + m.exist).epsilon(1e-5));
        CHECK(!params_equal(params, init)); // something moved
    }

    SUBCASE("zero learning-rate scale leaves every tensor untouched") {
        ModelParamsF params = init;
        AdamState<float> adam = AdamState<float>::init(params);
        TrainConfig frozen = cfg;
        frozen.lr_scale = 0.0;
        StepMetrics m = train_step(params, adam, {item}, frozen, 0);
        CHECK(m.lr == 0.0);
        CHECK(params_equal(params, init));
        CHECK(adam.step == 1); // the clock still ticks
    }

    SUBCASE("identical inputs give bitwise identical updates") {
        ModelParamsF p1 = init, p2 = init;
        AdamState<float> a1 = AdamState<float>::init(p1), a2 = AdamState<float>::init(p2);
        StepMetrics m1 = train_step(p1, a1, {item}, cfg, 0);
        StepMetrics m2 = train_step(p2, a2, {item}, cfg, 0);
        CHECK(m1.loss == m2.loss);
        CHECK(params_equal(p1, p2));
    }

    SUBCASE("a batch of duplicates equals the single-item step") {
        // With the per-item randomness disabled the two forwards are
        // identical, so the mean loss is exactly the single-item one. The
        // mean gradient matches only up to summation order, so the updated
        // tensors agree to rounding.
        TrainConfig plain = cfg;
        plain.shuffle = false;
        plain.dropout = 0.0;
        ModelParamsF p1 = init, p2 = init;
        AdamState<float> a1 = AdamState<float>::init(p1), a2 = AdamState<float>::init(p2);
        StepMetrics m1 = train_step(p1, a1, {item}, plain, 0);
        StepMetrics m2 = train_step(p2, a2, {item, item}, plain, 0);
        CHECK(m1.loss == m2.loss);
        CHECK(params_max_diff(p1, p2) < 1e-6);
    }

    SUBCASE("an empty batch is rejected") {
        ModelParamsF params = init;
        AdamState<float> adam = AdamState<float>::init(params);
        CHECK_THROWS_AS(train_step(params, adam, {}, cfg, 0), std::invalid_argument);
    }

    SUBCASE("poisoned parameters saturate to the clipped worst case, not NaN") {
        // Probabilities are clipped before the logs, and the clip maps NaN to
        // its floor, so even a NaN-riddled model reports a finite loss: every
        // active frame scores -log(clip), every inactive frame -log(1-clip).
        ModelParamsF params = init;
        for (auto& v : params.find("proj.w").storage())
            v = std::numeric_limits<float>::quiet_NaN();
        AdamState<float> adam = AdamState<float>::init(params);
        TrainConfig plain = cfg;
        plain.dropout = 0.0;
        StepMetrics m = train_step(params, adam, {item}, plain, 0);
        const double clip = plain.bce_clip;
        const double active = -std::log(clip), inactive = -std::log(1.0 - clip);
        // Labels: 16 active and 8 inactive frame terms; existence: two real
        // speakers and one stop probe.
        const double want_pit = (16.0 * active + 8.0 * inactive) / 24.0;
        const double want_exist = (2.0 * active + 1.0 * inactive) / 3.0;
        CHECK(m.pit == doctest::Approx(want_pit).epsilon(1e-6));
        CHECK(m.exist == doctest::Approx(want_exist).epsilon(1e-6));
        CHECK(std::isfinite(m.loss));
    }

    SUBCASE("a non-finite loss aborts the step loudly") {
        ModelParamsF params = init;
        AdamState<float> adam = AdamState<float>::init(params);
        TrainConfig diverged = cfg;
        diverged.existence_weight = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(train_step(params, adam, {item}, diverged, 0), std::runtime_error);
    }
}

TEST_CASE("the desk-scale loop is reproducible and actually learns") {
    EncoderConfig enc = train_config(10, 1);

    TrainDataConfig data;
    data.conversation.n_speakers = 2;
    data.conversation.total_frames = 80;
    data.conversation.mean_turn_frames = 12.0;
    data.conversation.feature_dim = 6;
    data.n_conversations = 4;

    TrainConfig cfg;
    cfg.steps = 80;
    cfg.warmup_steps = 30;
    cfg.lr_scale = 0.2;
    cfg.seed = 9;

    std::ostringstream log;
    TrainResult run = train(enc, cfg, data, &log);
    REQUIRE(run.history.size() == 80);

    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) {
        early += run.history[static_cast<std::size_t>(i)].loss;
        late += run.history[run.history.size() - 10 + static_cast<std::size_t>(i)].loss;
    }
    CHECK(late < early); // the loss comes down over the run

    for (std::size_t k = 0; k < run.history.size(); ++k) {
        CHECK(run.history[k].step == static_cast<index_t>(k + 1));
        CHECK(run.history[k].lr ==
              doctest::Approx(noam_lr(static_cast<index_t>(k + 1), enc.d_model, cfg.warmup_steps,
                                      cfg.lr_scale))
                  .epsilon(1e-12));
        CHECK(std::isfinite(run.history[k].loss));
    }

    // One log line per step, formatted by the shared formatter.
    std::istringstream lines(log.str());
    std::string line;
    std::size_t n_lines = 0;
    while (std::getline(lines, line)) {
        CHECK(line == format_metrics(run.history[n_lines]));
        ++n_lines;
    }
    CHECK(n_lines == run.history.size());

    SUBCASE("a second run with the same seed reproduces every tensor") {
        TrainResult again = train(enc, cfg, data, nullptr);
        CHECK(params_equal(run.params, again.params));
        REQUIRE(again.history.size() == run.history.size());
        for (std::size_t k = 0; k < run.history.size(); ++k)
            CHECK(run.history[k].loss == again.history[k].loss);
    }

    SUBCASE("the dataset must not be empty") {
        TrainDataConfig none = data;
        none.n_conversations = 0;
        CHECK_THROWS_AS(train(enc, cfg, none, nullptr), std::invalid_argument);
    }
}

TEST_CASE("metric lines carry every field") {
    StepMetrics m;
    m.step = 3;
    m.lr = 0.001;
    m.loss = 2.5;
    m.pit = 2.0;
    m.exist = 0.5;
    CHECK(format_metrics(m) == "step=3 lr=0.001 loss=2.5 pit=2 exist=0.5");
}

TEST_CASE("analytic gradients of the causal forward agree with finite differences") {
    GradCheckReport report = grad_check(77, 30);
    CHECK(report.checked == 30);
    CHECK(report.max_rel_err < 1e-4);
}

} // TEST_SUITE("train")
