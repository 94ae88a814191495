#include "streamdiar/matrix.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace streamdiar {

namespace {
std::atomic<bool> g_checked{false};
}

void set_checked_mode(bool enabled) { g_checked.store(enabled); }
bool checked_mode() { return g_checked.load(); }

void throw_shape_error(const std::string& what) {
    throw std::invalid_argument(what);
}

template <typename T>
Matrix<T>::Matrix(index_t rows, index_t cols)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows * cols), T(0)) {
    if (rows < 0 || cols < 0) throw_shape_error("matrix: negative dimension");
}

template <typename T>
Matrix<T>::Matrix(index_t rows, index_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 0 || cols < 0) throw_shape_error("matrix: negative dimension");
    if (static_cast<size_t>(rows * cols) != data_.size())
        throw_shape_error("matrix: rows*cols != data length");
    if (checked_mode()) check_finite("matrix constructor");
}

template <typename T>
Matrix<T> Matrix<T>::full(index_t rows, index_t cols, T value) {
    Matrix m(rows, cols);
    for (auto& v : m.data_) v = value;
    return m;
}

template <typename T>
Matrix<T> Matrix<T>::identity(index_t n) {
    Matrix m(n, n);
    for (index_t i = 0; i < n; ++i) m.at(i, i) = T(1);
    return m;
}

template <typename T>
Matrix<T> Matrix<T>::row_vector(std::vector<T> data) {
    index_t n = static_cast<index_t>(data.size());
    return Matrix(1, n, std::move(data));
}

template <typename T>
void Matrix<T>::check_finite(const char* what) const {
    for (const T& v : data_) {
        if (!std::isfinite(v))
            throw std::invalid_argument(std::string(what) + ": non-finite value");
    }
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows())
        throw_shape_error("matmul: inner dimensions disagree (" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
    Matrix<T> c(a.rows(), b.cols());
    const index_t m = a.rows(), k = a.cols(), n = b.cols();
    for (index_t i = 0; i < m; ++i) {
        T* crow = c.row_ptr(i);
        const T* arow = a.row_ptr(i);
        for (index_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b.row_ptr(p);
            for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.cols())
        throw_shape_error("matmul_nt: inner dimensions disagree");
    Matrix<T> c(a.rows(), b.rows());
    for (index_t i = 0; i < a.rows(); ++i) {
        const T* arow = a.row_ptr(i);
        T* crow = c.row_ptr(i);
        for (index_t j = 0; j < b.rows(); ++j) {
            const T* brow = b.row_ptr(j);
            T acc = 0;
            for (index_t p = 0; p < a.cols(); ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    return c;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows())
        throw_shape_error("matmul_tn: inner dimensions disagree");
    Matrix<T> c(a.cols(), b.cols());
    for (index_t p = 0; p < a.rows(); ++p) {
        const T* arow = a.row_ptr(p);
        const T* brow = b.row_ptr(p);
        for (index_t i = 0; i < a.cols(); ++i) {
            T* crow = c.row_ptr(i);
            const T av = arow[i];
            for (index_t j = 0; j < b.cols(); ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> t(a.cols(), a.rows());
    for (index_t i = 0; i < a.rows(); ++i)
        for (index_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

template <typename T>
static void check_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
    if (!a.same_shape(b)) throw_shape_error(std::string(op) + ": shape mismatch");
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
    check_same_shape(a, b, "add");
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    return c;
}

template <typename T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b) {
    check_same_shape(a, b, "sub");
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
    return c;
}

template <typename T>
Matrix<T> mul(const Matrix<T>& a, const Matrix<T>& b) {
    check_same_shape(a, b, "mul");
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
    return c;
}

template <typename T>
Matrix<T> scale(const Matrix<T>& a, T factor) {
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * factor;
    return c;
}

template <typename T>
Matrix<T> add_rowvec(const Matrix<T>& a, const Matrix<T>& v) {
    if (v.rows() != 1 || v.cols() != a.cols())
        throw_shape_error("add_rowvec: expected 1 x cols vector");
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.rows(); ++i) {
        const T* arow = a.row_ptr(i);
        T* crow = c.row_ptr(i);
        for (index_t j = 0; j < a.cols(); ++j) crow[j] = arow[j] + v.data()[j];
    }
    return c;
}

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& a) {
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) {
        const T x = a.data()[i];
        // Split by sign to avoid overflow in exp.
        if (x >= 0) {
            const T e = std::exp(-x);
            c.data()[i] = T(1) / (T(1) + e);
        } else {
            const T e = std::exp(x);
            c.data()[i] = e / (T(1) + e);
        }
    }
    return c;
}

template <typename T>
Matrix<T> tanh_map(const Matrix<T>& a) {
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) c.data()[i] = std::tanh(a.data()[i]);
    return c;
}

template <typename T>
Matrix<T> relu(const Matrix<T>& a) {
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    return c;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& a) {
    Matrix<T> c(a.rows(), a.cols());
    for (index_t i = 0; i < a.rows(); ++i) {
        const T* arow = a.row_ptr(i);
        T* crow = c.row_ptr(i);
        T mx = arow[0];
        for (index_t j = 1; j < a.cols(); ++j) mx = std::max(mx, arow[j]);
        T denom = 0;
        for (index_t j = 0; j < a.cols(); ++j) {
            crow[j] = std::exp(arow[j] - mx);
            denom += crow[j];
        }
        for (index_t j = 0; j < a.cols(); ++j) crow[j] /= denom;
    }
    return c;
}

template <typename T>
Matrix<T> layer_norm_rows(const Matrix<T>& x, const Matrix<T>& gain,
                          const Matrix<T>& bias, T eps) {
    if (gain.rows() != 1 || bias.rows() != 1 || gain.cols() != x.cols() ||
        bias.cols() != x.cols())
        throw_shape_error("layer_norm_rows: gain/bias must be 1 x cols");
    if (x.cols() < 1) throw_shape_error("layer_norm_rows: empty rows");
    Matrix<T> c(x.rows(), x.cols());
    const index_t d = x.cols();
    for (index_t i = 0; i < x.rows(); ++i) {
        const T* row = x.row_ptr(i);
        T* out = c.row_ptr(i);
        T mean = 0;
        for (index_t j = 0; j < d; ++j) mean += row[j];
        mean /= T(d);
        T var = 0;
        for (index_t j = 0; j < d; ++j) {
            const T dv = row[j] - mean;
            var += dv * dv;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (index_t j = 0; j < d; ++j)
            out[j] = gain.data()[j] * (row[j] - mean) * inv + bias.data()[j];
    }
    return c;
}

template <typename T>
Matrix<T> concat_rows(const std::vector<Matrix<T>>& parts) {
    if (parts.empty()) return Matrix<T>();
    index_t cols = parts[0].cols(), rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw_shape_error("concat_rows: column mismatch");
        rows += p.rows();
    }
    Matrix<T> c(rows, cols);
    index_t r = 0;
    for (const auto& p : parts) {
        std::memcpy(c.row_ptr(r), p.data(), sizeof(T) * static_cast<size_t>(p.size()));
        r += p.rows();
    }
    return c;
}

template <typename T>
Matrix<T> concat_cols(const std::vector<Matrix<T>>& parts) {
    if (parts.empty()) return Matrix<T>();
    index_t rows = parts[0].rows(), cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw_shape_error("concat_cols: row mismatch");
        cols += p.cols();
    }
    Matrix<T> c(rows, cols);
    for (index_t i = 0; i < rows; ++i) {
        index_t off = 0;
        for (const auto& p : parts) {
            std::memcpy(c.row_ptr(i) + off, p.row_ptr(i),
                        sizeof(T) * static_cast<size_t>(p.cols()));
            off += p.cols();
        }
    }
    return c;
}

template <typename T>
Matrix<T> slice_rows(const Matrix<T>& a, index_t r0, index_t r1) {
    if (r0 < 0 || r1 < r0 || r1 > a.rows()) throw_shape_error("slice_rows: bad range");
    Matrix<T> c(r1 - r0, a.cols());
    std::memcpy(c.data(), a.row_ptr(r0), sizeof(T) * static_cast<size_t>(c.size()));
    return c;
}

template <typename T>
Matrix<T> slice_cols(const Matrix<T>& a, index_t c0, index_t c1) {
    if (c0 < 0 || c1 < c0 || c1 > a.cols()) throw_shape_error("slice_cols: bad range");
    Matrix<T> c(a.rows(), c1 - c0);
    for (index_t i = 0; i < a.rows(); ++i)
        std::memcpy(c.row_ptr(i), a.row_ptr(i) + c0,
                    sizeof(T) * static_cast<size_t>(c1 - c0));
    return c;
}

template <typename T>
T sum_all(const Matrix<T>& a) {
    T s = 0;
    for (index_t i = 0; i < a.size(); ++i) s += a.data()[i];
    return s;
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    check_same_shape(a, b, "max_abs_diff");
    T m = 0;
    for (index_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

template <typename T>
bool bitwise_equal(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<size_t>(a.size())) == 0;
}

template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& a) {
    std::vector<To> data(static_cast<size_t>(a.size()));
    for (index_t i = 0; i < a.size(); ++i) data[static_cast<size_t>(i)] = static_cast<To>(a.data()[i]);
    return Matrix<To>(a.rows(), a.cols(), std::move(data));
}

#define STREAMDIAR_INSTANTIATE(T)                                                    \
    template class Matrix<T>;                                                        \
    template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                   \
    template Matrix<T> matmul_nt(const Matrix<T>&, const Matrix<T>&);                \
    template Matrix<T> matmul_tn(const Matrix<T>&, const Matrix<T>&);                \
    template Matrix<T> transpose(const Matrix<T>&);                                  \
    template Matrix<T> add(const Matrix<T>&, const Matrix<T>&);                      \
    template Matrix<T> sub(const Matrix<T>&, const Matrix<T>&);                      \
    template Matrix<T> mul(const Matrix<T>&, const Matrix<T>&);                      \
    template Matrix<T> scale(const Matrix<T>&, T);                                   \
    template Matrix<T> add_rowvec(const Matrix<T>&, const Matrix<T>&);               \
    template Matrix<T> sigmoid(const Matrix<T>&);                                    \
    template Matrix<T> tanh_map(const Matrix<T>&);                                   \
    template Matrix<T> relu(const Matrix<T>&);                                       \
    template Matrix<T> softmax_rows(const Matrix<T>&);                               \
    template Matrix<T> layer_norm_rows(const Matrix<T>&, const Matrix<T>&,           \
                                       const Matrix<T>&, T);                         \
    template Matrix<T> concat_rows(const std::vector<Matrix<T>>&);                   \
    template Matrix<T> concat_cols(const std::vector<Matrix<T>>&);                   \
    template Matrix<T> slice_rows(const Matrix<T>&, index_t, index_t);               \
    template Matrix<T> slice_cols(const Matrix<T>&, index_t, index_t);               \
    template T sum_all(const Matrix<T>&);                                            \
    template T max_abs_diff(const Matrix<T>&, const Matrix<T>&);                     \
    template bool bitwise_equal(const Matrix<T>&, const Matrix<T>&);

STREAMDIAR_INSTANTIATE(float)
STREAMDIAR_INSTANTIATE(double)
#undef STREAMDIAR_INSTANTIATE

template Matrix<float> cast_matrix<float, double>(const Matrix<double>&);
template Matrix<double> cast_matrix<double, float>(const Matrix<float>&);
template Matrix<float> cast_matrix<float, float>(const Matrix<float>&);
template Matrix<double> cast_matrix<double, double>(const Matrix<double>&);

} // namespace streamdiar
