#pragma once

#include "streamdiar/matrix.hpp"
#include "streamdiar/rng.hpp"

#include <deque>
#include <functional>
#include <vector>

namespace streamdiar {

// Handle into a Tape. Only meaningful for the tape that produced it.
template <typename T>
struct Var {
    index_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Records primitive ops in topological order (inputs are
// created before outputs, by construction); backward() walks the records once
// in reverse. With gradients disabled the tape still evaluates every op with
// the exact same kernels, so eval and train forward passes are bitwise equal.
template <typename T>
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    index_t node_count() const { return static_cast<index_t>(nodes_.size()); }

    // Leaves.
    Var<T> constant(Matrix<T> value);
    Var<T> param(Matrix<T> value);

    const Matrix<T>& value(Var<T> v) const { return nodes_[check(v)].value; }
    // Zero-filled if the node received no gradient.
    Matrix<T> grad(Var<T> v) const;

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // recorded ancestor. The loss must be 1x1.
    void backward(Var<T> loss);

    // Frees every node recorded after `mark`. Eval mode only: with gradients
    // enabled the freed nodes would still be needed by backward().
    index_t mark() const { return node_count(); }
    void rewind(index_t mark);

    // --- primitive ops ------------------------------------------------------
    Var<T> matmul(Var<T> a, Var<T> b);
    Var<T> matmul_nt(Var<T> a, Var<T> b); // a * b^T
    Var<T> add(Var<T> a, Var<T> b);
    Var<T> sub(Var<T> a, Var<T> b);
    Var<T> mul(Var<T> a, Var<T> b);
    Var<T> scale(Var<T> a, T factor);
    Var<T> add_rowvec(Var<T> a, Var<T> v);
    Var<T> sigmoid(Var<T> a);
    Var<T> tanh_op(Var<T> a);
    Var<T> relu(Var<T> a);
    Var<T> softmax_rows(Var<T> a);
    Var<T> layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
    Var<T> concat_rows(const std::vector<Var<T>>& parts);
    Var<T> slice_rows(Var<T> a, index_t r0, index_t r1);
    Var<T> slice_cols(Var<T> a, index_t c0, index_t c1);
    Var<T> row(Var<T> a, index_t r) { return slice_rows(a, r, r + 1); }
    // Inverted dropout; identity when rate == 0.
    Var<T> dropout(Var<T> a, T rate, Rng& rng);
    // Summed binary cross-entropy against a constant target, with probability
    // clipping at clip_eps. Output is 1x1.
    Var<T> bce_sum(Var<T> pred, Matrix<T> target, T clip_eps);
    Var<T> add_scalars(const std::vector<Var<T>>& scalars);
    Var<T> mean_all(Var<T> a);

private:
    struct Node {
        Matrix<T> value;
        Matrix<T> grad;
        bool requires_grad = false;
        bool has_grad = false;
        std::function<void(Tape&, index_t)> backfn;
    };

    index_t check(Var<T> v) const {
        if (!v.valid() || v.id >= node_count())
            throw std::invalid_argument("tape: invalid var handle");
        return v.id;
    }

    Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> inputs,
                  std::function<void(Tape&, index_t)> backfn);
    void accumulate(index_t id, const Matrix<T>& g);
    bool any_requires(std::initializer_list<Var<T>> inputs) const;

    bool grad_enabled_;
    std::deque<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;
using VarF = Var<float>;
using VarD = Var<double>;

} // namespace streamdiar
