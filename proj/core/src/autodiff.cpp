#include "streamdiar/autodiff.hpp"

#include <cmath>

namespace streamdiar {

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = false;
    nodes_.push_back(std::move(n));
    return Var<T>{node_count() - 1};
}

template <typename T>
Var<T> Tape<T>::param(Matrix<T> value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var<T>{node_count() - 1};
}

template <typename T>
Matrix<T> Tape<T>::grad(Var<T> v) const {
    const Node& n = nodes_[check(v)];
    if (n.has_grad) return n.grad;
    return Matrix<T>(n.value.rows(), n.value.cols());
}

template <typename T>
bool Tape<T>::any_requires(std::initializer_list<Var<T>> inputs) const {
    for (Var<T> v : inputs)
        if (nodes_[check(v)].requires_grad) return true;
    return false;
}

template <typename T>
Var<T> Tape<T>::record(Matrix<T> value, std::initializer_list<Var<T>> inputs,
                       std::function<void(Tape&, index_t)> backfn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && any_requires(inputs);
    if (n.requires_grad) n.backfn = std::move(backfn);
    nodes_.push_back(std::move(n));
    return Var<T>{node_count() - 1};
}

template <typename T>
void Tape<T>::accumulate(index_t id, const Matrix<T>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        for (index_t i = 0; i < g.size(); ++i) n.grad.data()[i] += g.data()[i];
    }
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (!grad_enabled_)
        throw std::logic_error("tape: backward on a gradient-disabled tape");
    const index_t lid = check(loss);
    if (nodes_[lid].value.rows() != 1 || nodes_[lid].value.cols() != 1)
        throw std::invalid_argument("tape: loss node is not scalar");
    accumulate(lid, Matrix<T>::full(1, 1, T(1)));
    for (index_t id = lid; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.has_grad && n.backfn) n.backfn(*this, id);
    }
}

template <typename T>
void Tape<T>::rewind(index_t mark) {
    if (grad_enabled_)
        throw std::logic_error("tape: rewind with gradients enabled");
    if (mark < 0 || mark > node_count())
        throw std::invalid_argument("tape: bad rewind mark");
    nodes_.resize(static_cast<size_t>(mark));
}

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::matmul(Var<T> a, Var<T> b) {
    Matrix<T> out = streamdiar::matmul(value(a), value(b));
    return record(std::move(out), {a, b}, [a, b](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        if (t.nodes_[a.id].requires_grad)
            t.accumulate(a.id, streamdiar::matmul_nt(g, t.value(b)));
        if (t.nodes_[b.id].requires_grad)
            t.accumulate(b.id, streamdiar::matmul_tn(t.value(a), g));
    });
}

template <typename T>
Var<T> Tape<T>::matmul_nt(Var<T> a, Var<T> b) {
    Matrix<T> out = streamdiar::matmul_nt(value(a), value(b));
    return record(std::move(out), {a, b}, [a, b](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        if (t.nodes_[a.id].requires_grad)
            t.accumulate(a.id, streamdiar::matmul(g, t.value(b)));
        if (t.nodes_[b.id].requires_grad)
            t.accumulate(b.id, streamdiar::matmul_tn(g, t.value(a)));
    });
}

template <typename T>
Var<T> Tape<T>::add(Var<T> a, Var<T> b) {
    return record(streamdiar::add(value(a), value(b)), {a, b},
                  [a, b](Tape& t, index_t self) {
                      const Matrix<T>& g = t.nodes_[self].grad;
                      t.accumulate(a.id, g);
                      t.accumulate(b.id, g);
                  });
}

template <typename T>
Var<T> Tape<T>::sub(Var<T> a, Var<T> b) {
    return record(streamdiar::sub(value(a), value(b)), {a, b},
                  [a, b](Tape& t, index_t self) {
                      const Matrix<T>& g = t.nodes_[self].grad;
                      t.accumulate(a.id, g);
                      t.accumulate(b.id, streamdiar::scale(g, T(-1)));
                  });
}

template <typename T>
Var<T> Tape<T>::mul(Var<T> a, Var<T> b) {
    return record(streamdiar::mul(value(a), value(b)), {a, b},
                  [a, b](Tape& t, index_t self) {
                      const Matrix<T>& g = t.nodes_[self].grad;
                      if (t.nodes_[a.id].requires_grad)
                          t.accumulate(a.id, streamdiar::mul(g, t.value(b)));
                      if (t.nodes_[b.id].requires_grad)
                          t.accumulate(b.id, streamdiar::mul(g, t.value(a)));
                  });
}

template <typename T>
Var<T> Tape<T>::scale(Var<T> a, T factor) {
    return record(streamdiar::scale(value(a), factor), {a},
                  [a, factor](Tape& t, index_t self) {
                      t.accumulate(a.id, streamdiar::scale(t.nodes_[self].grad, factor));
                  });
}

template <typename T>
Var<T> Tape<T>::add_rowvec(Var<T> a, Var<T> v) {
    return record(streamdiar::add_rowvec(value(a), value(v)), {a, v},
                  [a, v](Tape& t, index_t self) {
                      const Matrix<T>& g = t.nodes_[self].grad;
                      t.accumulate(a.id, g);
                      if (t.nodes_[v.id].requires_grad) {
                          Matrix<T> gv(1, g.cols());
                          for (index_t i = 0; i < g.rows(); ++i)
                              for (index_t j = 0; j < g.cols(); ++j)
                                  gv.data()[j] += g.at(i, j);
                          t.accumulate(v.id, gv);
                      }
                  });
}

template <typename T>
Var<T> Tape<T>::sigmoid(Var<T> a) {
    return record(streamdiar::sigmoid(value(a)), {a}, [a](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        const Matrix<T>& s = t.nodes_[self].value;
        Matrix<T> ga(s.rows(), s.cols());
        for (index_t i = 0; i < s.size(); ++i)
            ga.data()[i] = g.data()[i] * s.data()[i] * (T(1) - s.data()[i]);
        t.accumulate(a.id, ga);
    });
}

template <typename T>
Var<T> Tape<T>::tanh_op(Var<T> a) {
    return record(streamdiar::tanh_map(value(a)), {a}, [a](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        const Matrix<T>& y = t.nodes_[self].value;
        Matrix<T> ga(y.rows(), y.cols());
        for (index_t i = 0; i < y.size(); ++i)
            ga.data()[i] = g.data()[i] * (T(1) - y.data()[i] * y.data()[i]);
        t.accumulate(a.id, ga);
    });
}

template <typename T>
Var<T> Tape<T>::relu(Var<T> a) {
    return record(streamdiar::relu(value(a)), {a}, [a](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        const Matrix<T>& x = t.value(a);
        Matrix<T> ga(x.rows(), x.cols());
        for (index_t i = 0; i < x.size(); ++i)
            ga.data()[i] = x.data()[i] > T(0) ? g.data()[i] : T(0);
        t.accumulate(a.id, ga);
    });
}

template <typename T>
Var<T> Tape<T>::softmax_rows(Var<T> a) {
    return record(streamdiar::softmax_rows(value(a)), {a}, [a](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        const Matrix<T>& p = t.nodes_[self].value;
        Matrix<T> ga(p.rows(), p.cols());
        for (index_t i = 0; i < p.rows(); ++i) {
            T dot = 0;
            for (index_t j = 0; j < p.cols(); ++j) dot += g.at(i, j) * p.at(i, j);
            for (index_t j = 0; j < p.cols(); ++j)
                ga.at(i, j) = p.at(i, j) * (g.at(i, j) - dot);
        }
        t.accumulate(a.id, ga);
    });
}

template <typename T>
Var<T> Tape<T>::layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
    Matrix<T> out = streamdiar::layer_norm_rows(value(x), value(gain), value(bias), eps);
    return record(std::move(out), {x, gain, bias},
                  [x, gain, bias, eps](Tape& t, index_t self) {
        const Matrix<T>& g = t.nodes_[self].grad;
        const Matrix<T>& xv = t.value(x);
        const Matrix<T>& gv = t.value(gain);
        const index_t d = xv.cols();
        Matrix<T> gx(xv.rows(), d);
        Matrix<T> ggain(1, d);
        Matrix<T> gbias(1, d);
        for (index_t i = 0; i < xv.rows(); ++i) {
            const T* xr = xv.row_ptr(i);
            const T* gr = g.row_ptr(i);
            T mean = 0;
            for (index_t j = 0; j < d; ++j) mean += xr[j];
            mean /= T(d);
            T var = 0;
            for (index_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= T(d);
            const T inv = T(1) / std::sqrt(var + eps);
            // dy = g .* gain; dx = inv * (dy - mean(dy) - xhat * mean(dy .* xhat))
            T mean_dy = 0, mean_dyx = 0;
            for (index_t j = 0; j < d; ++j) {
                const T xhat = (xr[j] - mean) * inv;
                const T dy = gr[j] * gv.data()[j];
                mean_dy += dy;
                mean_dyx += dy * xhat;
                ggain.data()[j] += gr[j] * xhat;
                gbias.data()[j] += gr[j];
            }
            mean_dy /= T(d);
            mean_dyx /= T(d);
            for (index_t j = 0; j < d; ++j) {
                const T xhat = (xr[j] - mean) * inv;
                const T dy = gr[j] * gv.data()[j];
                gx.at(i, j) = inv * (dy - mean_dy - xhat * mean_dyx);
            }
        }
        t.accumulate(x.id, gx);
        if (t.nodes_[gain.id].requires_grad) t.accumulate(gain.id, ggain);
        if (t.nodes_[bias.id].requires_grad) t.accumulate(bias.id, gbias);
    });
}

template <typename T>
Var<T> Tape<T>::concat_rows(const std::vector<Var<T>>& parts) {
    std::vector<Matrix<T>> values;
    values.reserve(parts.size());
    bool needs_grad = false;
    for (Var<T> p : parts) {
        values.push_back(value(p));
        needs_grad = needs_grad || nodes_[check(p)].requires_grad;
    }
    Matrix<T> out = streamdiar::concat_rows(values);
    Node n;
    n.value = std::move(out);
    n.requires_grad = grad_enabled_ && needs_grad;
    if (n.requires_grad) {
        std::vector<Var<T>> ps = parts;
        n.backfn = [ps](Tape& t, index_t self) {
            const Matrix<T>& g = t.nodes_[self].grad;
            index_t r = 0;
            for (Var<T> p : ps) {
                const index_t pr = t.value(p).rows();
                t.accumulate(p.id, streamdiar::slice_rows(g, r, r + pr));
                r += pr;
            }
        };
    }
    nodes_.push_back(std::move(n));
    return Var<T>{node_count() - 1};
}

template <typename T>
Var<T> Tape<T>::slice_rows(Var<T> a, index_t r0, index_t r1) {
    return record(streamdiar::slice_rows(value(a), r0, r1), {a},
                  [a, r0, r1](Tape& t, index_t self) {
                      const Matrix<T>& g = t.nodes_[self].grad;
                      const Matrix<T>& av = t.value(a);
                      Matrix<T> ga(av.rows(), av.cols());
                      for (index_t i = r0; i < r1; ++i)
                          for (index_t j = 0; j < av.cols(); ++j)
                              ga.at(i, j) = g.at(i - r0, j);
                      t.accumulate(a.id, ga);
                  });
}

template <typename T>
Var<T> Tape<T>::slice_cols(Var<T> a, index_t c0, index_t c1) {
    return record(streamdiar::slice_cols(value(a), c0, c1), {a},
                  [a, c0, c1](Tape& t, index_t self) {
                      const Matrix<T>& g = t.nodes_[self].grad;
                      const Matrix<T>& av = t.value(a);
                      Matrix<T> ga(av.rows(), av.cols());
                      for (index_t i = 0; i < av.rows(); ++i)
                          for (index_t j = c0; j < c1; ++j)
                              ga.at(i, j) = g.at(i, j - c0);
                      t.accumulate(a.id, ga);
                  });
}

template <typename T>
Var<T> Tape<T>::dropout(Var<T> a, T rate, Rng& rng) {
    if (rate <= T(0)) return a;
    if (rate >= T(1)) throw std::invalid_argument("dropout: rate must be < 1");
    const Matrix<T>& av = value(a);
    const T keep = T(1) - rate;
    Matrix<T> mask(av.rows(), av.cols());
    for (index_t i = 0; i < av.size(); ++i)
        mask.data()[i] = rng.uniform() < static_cast<double>(rate) ? T(0) : T(1) / keep;
    Matrix<T> out = streamdiar::mul(av, mask);
    return record(std::move(out), {a},
                  [a, mask = std::move(mask)](Tape& t, index_t self) {
                      t.accumulate(a.id, streamdiar::mul(t.nodes_[self].grad, mask));
                  });
}

template <typename T>
Var<T> Tape<T>::bce_sum(Var<T> pred, Matrix<T> target, T clip_eps) {
    const Matrix<T>& p = value(pred);
    if (!p.same_shape(target)) throw_shape_error("bce_sum: shape mismatch");
    const T lo = clip_eps, hi = T(1) - clip_eps;
    T loss = 0;
    for (index_t i = 0; i < p.size(); ++i) {
        const T pc = std::min(hi, std::max(lo, p.data()[i]));
        const T y = target.data()[i];
        loss -= y * std::log(pc) + (T(1) - y) * std::log(T(1) - pc);
    }
    return record(Matrix<T>::full(1, 1, loss), {pred},
                  [pred, target = std::move(target), lo, hi](Tape& t, index_t self) {
                      const T g = t.nodes_[self].grad.at(0, 0);
                      const Matrix<T>& p = t.value(pred);
                      Matrix<T> gp(p.rows(), p.cols());
                      for (index_t i = 0; i < p.size(); ++i) {
                          const T pv = p.data()[i];
                          if (pv <= lo || pv >= hi) continue; // clipped: flat
                          gp.data()[i] = g * (pv - target.data()[i]) / (pv * (T(1) - pv));
                      }
                      t.accumulate(pred.id, gp);
                  });
}

template <typename T>
Var<T> Tape<T>::add_scalars(const std::vector<Var<T>>& scalars) {
    if (scalars.empty()) throw std::invalid_argument("add_scalars: empty");
    T s = 0;
    bool needs_grad = false;
    for (Var<T> v : scalars) {
        const Matrix<T>& m = value(v);
        if (m.rows() != 1 || m.cols() != 1)
            throw_shape_error("add_scalars: non-scalar input");
        s += m.at(0, 0);
        needs_grad = needs_grad || nodes_[v.id].requires_grad;
    }
    Node n;
    n.value = Matrix<T>::full(1, 1, s);
    n.requires_grad = grad_enabled_ && needs_grad;
    if (n.requires_grad) {
        std::vector<Var<T>> vs = scalars;
        n.backfn = [vs](Tape& t, index_t self) {
            const Matrix<T>& g = t.nodes_[self].grad;
            for (Var<T> v : vs) t.accumulate(v.id, g);
        };
    }
    nodes_.push_back(std::move(n));
    return Var<T>{node_count() - 1};
}

template <typename T>
Var<T> Tape<T>::mean_all(Var<T> a) {
    const Matrix<T>& av = value(a);
    if (av.size() == 0) throw_shape_error("mean_all: empty matrix");
    const T inv = T(1) / T(av.size());
    return record(Matrix<T>::full(1, 1, sum_all(av) * inv), {a},
                  [a, inv](Tape& t, index_t self) {
                      const T g = t.nodes_[self].grad.at(0, 0) * inv;
                      const Matrix<T>& av2 = t.value(a);
                      t.accumulate(a.id, Matrix<T>::full(av2.rows(), av2.cols(), g));
                  });
}

template class Tape<float>;
template class Tape<double>;

} // namespace streamdiar
