#pragma once

#include "streamdiar/autodiff.hpp"
#include "streamdiar/matrix.hpp"

#include <utility>
#include <vector>

namespace streamdiar {

// Permutation-invariant BCE between frame posteriors [T x S] and 0/1 targets
// [T x S]: the reference columns are permuted to minimise the mean BCE, ties
// broken toward the lexicographically smallest permutation. Returns the loss
// and the chosen permutation (pred column s scores against target column
// perm[s]). Exhaustive search; S above 8 is rejected.
template <typename T>
std::pair<Var<T>, std::vector<index_t>> pit_bce(Tape<T>& tape, Var<T> pred,
                                                const Matrix<T>& target, T clip = T(1e-7));

// Plain-value variant for tests and metrics.
template <typename T>
std::pair<T, std::vector<index_t>> pit_bce_value(const Matrix<T>& pred, const Matrix<T>& target,
                                                 T clip = T(1e-7));

// Mean BCE of the existence probabilities of s_true + 1 decoded attractors
// against [1, ..., 1, 0]: every true speaker should exist, the next one not.
template <typename T>
Var<T> existence_bce(Tape<T>& tape, const std::vector<Var<T>>& probs, index_t s_true,
                     T clip = T(1e-7));

template <typename T>
T existence_bce_value(const std::vector<T>& probs, index_t s_true, T clip = T(1e-7));

// Reorders columns: out column j = m column perm[j].
template <typename T>
Matrix<T> permute_columns(const Matrix<T>& m, const std::vector<index_t>& perm);

} // namespace streamdiar
