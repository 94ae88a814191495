#include "streamdiar/loss.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace streamdiar {

namespace {

constexpr index_t kMaxExhaustive = 8;

// Sum of clipped binary cross-entropy terms, plain values.
template <typename T>
double bce_sum_value(const Matrix<T>& pred, const Matrix<T>& target, T clip) {
    double acc = 0.0;
    const T lo = clip, hi = T(1) - clip;
    for (index_t i = 0; i < pred.rows(); ++i)
        for (index_t j = 0; j < pred.cols(); ++j) {
            const T p = std::min(hi, std::max(lo, pred.at(i, j)));
            const T y = target.at(i, j);
            acc += -(static_cast<double>(y) * std::log(static_cast<double>(p)) +
                     (1.0 - static_cast<double>(y)) * std::log(1.0 - static_cast<double>(p)));
        }
    return acc;
}

template <typename T>
std::vector<index_t> best_permutation(const std::vector<std::vector<double>>& cost, index_t s) {
    std::vector<index_t> perm(static_cast<std::size_t>(s));
    std::iota(perm.begin(), perm.end(), index_t{0});
    std::vector<index_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (index_t i = 0; i < s; ++i)
            c += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        if (c < best_cost) { // strict: keeps the lexicographically smallest tie
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

template <typename T>
std::pair<Var<T>, std::vector<index_t>> pit_bce(Tape<T>& tape, Var<T> pred,
                                                const Matrix<T>& target, T clip) {
    const Matrix<T>& pv = tape.value(pred);
    if (pv.rows() != target.rows() || pv.cols() != target.cols())
        throw std::invalid_argument("pit_bce: prediction and target shapes differ");
    const index_t s = target.cols();
    const index_t t_frames = target.rows();
    if (s < 1 || t_frames < 1) throw std::invalid_argument("pit_bce: empty input");
    if (s > kMaxExhaustive) throw std::invalid_argument("pit_bce: more than 8 speakers");

    // Pairwise summed BCE of prediction column i against target column j.
    std::vector<std::vector<Var<T>>> pair_loss(static_cast<std::size_t>(s));
    std::vector<std::vector<double>> pair_cost(static_cast<std::size_t>(s),
                                               std::vector<double>(static_cast<std::size_t>(s)));
    for (index_t i = 0; i < s; ++i) {
        Var<T> pi = tape.slice_cols(pred, i, i + 1);
        for (index_t j = 0; j < s; ++j) {
            Var<T> l = tape.bce_sum(pi, slice_cols(target, j, j + 1), clip);
            pair_loss[static_cast<std::size_t>(i)].push_back(l);
            pair_cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                static_cast<double>(tape.value(l).at(0, 0));
        }
    }

    const std::vector<index_t> best = best_permutation<T>(pair_cost, s);
    std::vector<Var<T>> terms;
    terms.reserve(static_cast<std::size_t>(s));
    for (index_t i = 0; i < s; ++i)
        terms.push_back(pair_loss[static_cast<std::size_t>(i)]
                                 [static_cast<std::size_t>(best[static_cast<std::size_t>(i)])]);
    Var<T> loss = tape.scale(tape.add_scalars(terms), T(1) / static_cast<T>(t_frames * s));
    return {loss, best};
}

template <typename T>
std::pair<T, std::vector<index_t>> pit_bce_value(const Matrix<T>& pred, const Matrix<T>& target,
                                                 T clip) {
    Tape<T> tape(false);
    auto [loss, perm] = pit_bce(tape, tape.constant(pred), target, clip);
    return {tape.value(loss).at(0, 0), perm};
}

template <typename T>
Var<T> existence_bce(Tape<T>& tape, const std::vector<Var<T>>& probs, index_t s_true, T clip) {
    if (static_cast<index_t>(probs.size()) != s_true + 1)
        throw std::invalid_argument("existence_bce: needs s_true + 1 probabilities");
    Var<T> stacked = (probs.size() == 1) ? probs.front() : tape.concat_rows(probs);
    Matrix<T> target = Matrix<T>::full(s_true + 1, 1, T(1));
    target.at(s_true, 0) = T(0);
    return tape.scale(tape.bce_sum(stacked, target, clip), T(1) / static_cast<T>(s_true + 1));
}

template <typename T>
T existence_bce_value(const std::vector<T>& probs, index_t s_true, T clip) {
    if (static_cast<index_t>(probs.size()) != s_true + 1)
        throw std::invalid_argument("existence_bce: needs s_true + 1 probabilities");
    Matrix<T> p(static_cast<index_t>(probs.size()), 1);
    for (std::size_t i = 0; i < probs.size(); ++i) p.at(static_cast<index_t>(i), 0) = probs[i];
    Matrix<T> target = Matrix<T>::full(s_true + 1, 1, T(1));
    target.at(s_true, 0) = T(0);
    return static_cast<T>(bce_sum_value(p, target, clip) / static_cast<double>(s_true + 1));
}

template <typename T>
Matrix<T> permute_columns(const Matrix<T>& m, const std::vector<index_t>& perm) {
    if (static_cast<index_t>(perm.size()) != m.cols())
        throw std::invalid_argument("permute_columns: permutation size mismatch");
    Matrix<T> out(m.rows(), m.cols());
    for (index_t j = 0; j < m.cols(); ++j) {
        const index_t src = perm[static_cast<std::size_t>(j)];
        for (index_t i = 0; i < m.rows(); ++i) out.at(i, j) = m.at(i, src);
    }
    return out;
}

#define STREAMDIAR_LOSS_INSTANTIATE(T)                                                        \
    template std::pair<Var<T>, std::vector<index_t>> pit_bce(Tape<T>&, Var<T>,                \
                                                             const Matrix<T>&, T);            \
    template std::pair<T, std::vector<index_t>> pit_bce_value(const Matrix<T>&,               \
                                                              const Matrix<T>&, T);           \
    template Var<T> existence_bce(Tape<T>&, const std::vector<Var<T>>&, index_t, T);          \
    template T existence_bce_value(const std::vector<T>&, index_t, T);                        \
    template Matrix<T> permute_columns(const Matrix<T>&, const std::vector<index_t>&);

STREAMDIAR_LOSS_INSTANTIATE(float)
STREAMDIAR_LOSS_INSTANTIATE(double)

} // namespace streamdiar
