#include "doctest.h"
#include "helpers.hpp"
#include "reference.hpp"

#include "streamdiar/loss.hpp"
#include "streamdiar/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

using namespace streamdiar;
using testutil::random_uniform;

namespace {

MatrixD random_targets(Rng& rng, index_t t, index_t s) {
    MatrixD m(t, s);
    for (auto& v : m.storage()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return m;
}

double plain_mean_bce(const MatrixD& pred, const MatrixD& target, double clip) {
    double acc = 0.0;
    for (index_t i = 0; i < pred.rows(); ++i) {
        for (index_t j = 0; j < pred.cols(); ++j) {
            double p = std::clamp(pred.at(i, j), clip, 1.0 - clip);
            double y = target.at(i, j);
            acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        }
    }
    return acc / static_cast<double>(pred.rows() * pred.cols());
}

} // namespace

TEST_SUITE("loss") {

TEST_CASE("permutation-seeking BCE matches the exhaustive oracle") {
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng(Rng::derive(0x10550, static_cast<std::uint64_t>(trial)));
        index_t s = 1 + static_cast<index_t>(rng.bounded(4));
        index_t t = 3 + static_cast<index_t>(rng.bounded(8));
        MatrixD pred = random_uniform<double>(rng, t, s, 0.02, 0.98);
        MatrixD target = random_targets(rng, t, s);

        auto [loss, perm] = pit_bce_value(pred, target);
        double want = refimpl::pit_bce_oracle(refimpl::to_mat(pred), refimpl::to_mat(target));
        CHECK(loss == doctest::Approx(want).epsilon(1e-12));

        // the returned assignment is a permutation and realises the loss
        std::vector<index_t> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        for (index_t i = 0; i < s; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
        MatrixD matched = permute_columns(target, perm);
        CHECK(loss == doctest::Approx(plain_mean_bce(pred, matched, 1e-7)).epsilon(1e-12));
    }
}

TEST_CASE("the loss is exactly invariant under reference column permutations") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(Rng::derive(0x1e5b, static_cast<std::uint64_t>(trial)));
        index_t s = 2 + static_cast<index_t>(rng.bounded(3)); // 2..4
        index_t t = 4 + static_cast<index_t>(rng.bounded(6));
        MatrixF pred = random_uniform<float>(rng, t, s, 0.02, 0.98);
        MatrixF target(t, s);
        for (auto& v : target.storage()) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;

        const float base = pit_bce_value(pred, target).first;
        std::vector<index_t> perm(static_cast<std::size_t>(s));
        std::iota(perm.begin(), perm.end(), index_t{0});
        do {
            MatrixF shuffled = permute_columns(target, perm);
            CHECK(pit_bce_value(pred, shuffled).first == base); // exact, not approximate
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
}

TEST_CASE("ties break toward the lexicographically smallest assignment") {
    // two identical reference columns make every assignment of them a tie
    MatrixD pred(4, 3);
    MatrixD target(4, 3);
    Rng rng(0x7ae);
    for (auto& v : pred.storage()) v = rng.uniform(0.1, 0.9);
    for (index_t i = 0; i < 4; ++i) {
        target.at(i, 0) = (i < 2) ? 1.0 : 0.0;
        target.at(i, 1) = (i < 2) ? 1.0 : 0.0; // duplicate of column 0
        target.at(i, 2) = (i % 2 == 0) ? 1.0 : 0.0;
    }
    auto [loss, perm] = pit_bce_value(pred, target);
    (void)loss;

    // oracle: first minimiser in lexicographic enumeration order
    std::vector<index_t> lex = {0, 1, 2};
    std::vector<index_t> best;
    double best_cost = 1e300;
    do {
        MatrixD matched = permute_columns(target, lex);
        double c = plain_mean_bce(pred, matched, 1e-7);
        if (c < best_cost - 1e-15) {
            best_cost = c;
            best = lex;
        }
    } while (std::next_permutation(lex.begin(), lex.end()));
    CHECK(perm == best);
}

TEST_CASE("shape and size limits are enforced") {
    MatrixD pred(4, 2);
    MatrixD target(4, 3);
    CHECK_THROWS_AS(pit_bce_value(pred, target), std::invalid_argument);

    MatrixD nine_pred = MatrixD::full(2, 9, 0.5);
    MatrixD nine_target(2, 9);
    CHECK_THROWS_AS(pit_bce_value(nine_pred, nine_target), std::invalid_argument);

    CHECK_THROWS_AS(pit_bce_value(MatrixD(0, 2), MatrixD(0, 2)), std::invalid_argument);
}

TEST_CASE("taped loss carries useful gradients toward the matched targets") {
    Rng rng(0x97ab);
    MatrixD pred_init = random_uniform<double>(rng, 5, 3, 0.2, 0.8);
    MatrixD target = random_targets(rng, 5, 3);

    Tape<double> tape;
    VarD pred = tape.param(pred_init);
    auto [loss, perm] = pit_bce(tape, pred, target);
    tape.backward(loss);
    MatrixD g = tape.grad(pred);
    MatrixD matched = permute_columns(target, perm);

    // d/dp of mean clipped BCE: (p - y) / (p (1 - p) T S)
    for (index_t i = 0; i < 5; ++i) {
        for (index_t j = 0; j < 3; ++j) {
            double p = pred_init.at(i, j);
            double y = matched.at(i, j);
            double want = (p - y) / (p * (1.0 - p) * 15.0);
            CHECK(g.at(i, j) == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("attractor existence loss follows its closed form") {
    // -mean(log p_0, log p_1, log(1 - p_2)) for two true speakers
    std::vector<double> probs = {0.9, 0.8, 0.3};
    double want = -(std::log(0.9) + std::log(0.8) + std::log(0.7)) / 3.0;
    CHECK(existence_bce_value<double>(probs, 2) == doctest::Approx(want).epsilon(1e-12));

    // zero true speakers: only the stop term
    CHECK(existence_bce_value<double>({0.25}, 0)
          == doctest::Approx(-std::log(0.75)).epsilon(1e-12));

    // saturated probabilities are clipped, never infinite
    double sat = existence_bce_value<double>({1.0, 0.0, 1.0}, 2);
    CHECK(std::isfinite(sat));
    CHECK(sat > 10.0); // the wrong stop probability is heavily penalised

    // the taped version agrees with the plain one
    Tape<double> tape(false);
    std::vector<VarD> taped;
    for (double p : probs) taped.push_back(tape.constant(MatrixD::full(1, 1, p)));
    CHECK(tape.value(existence_bce(tape, taped, 2)).at(0, 0)
          == doctest::Approx(want).epsilon(1e-12));

    // exactly s_true + 1 probabilities are required
    CHECK_THROWS_AS(existence_bce_value<double>({0.9, 0.8}, 2), std::invalid_argument);
    CHECK_THROWS_AS(existence_bce_value<double>({0.9, 0.8, 0.3, 0.2}, 2),
                    std::invalid_argument);
}

TEST_CASE("column permutation is a gather by index") {
    MatrixD m(2, 3);
    m.at(0, 0) = 1;
    m.at(0, 1) = 2;
    m.at(0, 2) = 3;
    m.at(1, 0) = 4;
    m.at(1, 1) = 5;
    m.at(1, 2) = 6;
    MatrixD out = permute_columns(m, {2, 0, 1});
    CHECK(out.at(0, 0) == 3);
    CHECK(out.at(0, 1) == 1);
    CHECK(out.at(0, 2) == 2);
    CHECK(out.at(1, 0) == 6);
    CHECK(out.at(1, 1) == 4);
    CHECK(out.at(1, 2) == 5);

    CHECK(bitwise_equal(permute_columns(m, {0, 1, 2}), m));
    CHECK_THROWS_AS(permute_columns(m, {0, 1}), std::invalid_argument);
}

} // TEST_SUITE
