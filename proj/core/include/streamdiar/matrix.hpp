#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamdiar {

using index_t = std::int64_t;

// When enabled, matrix constructors reject NaN/Inf payloads. Off by default;
// tests and the gradient checker turn it on.
void set_checked_mode(bool enabled);
bool checked_mode();

// Dense row-major matrix. Immutable-by-convention after construction: the
// neural modules never mutate a matrix they did not create.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(index_t rows, index_t cols);
    Matrix(index_t rows, index_t cols, std::vector<T> data);

    static Matrix zeros(index_t rows, index_t cols) { return Matrix(rows, cols); }
    static Matrix full(index_t rows, index_t cols, T value);
    static Matrix identity(index_t n);
    static Matrix row_vector(std::vector<T> data);

    index_t rows() const { return rows_; }
    index_t cols() const { return cols_; }
    index_t size() const { return rows_ * cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    T& at(index_t r, index_t c) { return data_[r * cols_ + c]; }
    T at(index_t r, index_t c) const { return data_[r * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* row_ptr(index_t r) { return data_.data() + r * cols_; }
    const T* row_ptr(index_t r) const { return data_.data() + r * cols_; }

    const std::vector<T>& storage() const { return data_; }
    std::vector<T>& storage() { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    void check_finite(const char* what) const;

private:
    index_t rows_ = 0;
    index_t cols_ = 0;
    std::vector<T> data_;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

// ---------------------------------------------------------------------------
// Kernels. These are the only places the arithmetic lives; the autodiff tape
// wraps the same functions, so taped and plain paths are bitwise identical.
// ---------------------------------------------------------------------------

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

// a * b^T without materializing the transpose.
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);

// a^T * b.
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> transpose(const Matrix<T>& a);

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> mul(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> scale(const Matrix<T>& a, T factor);

// Adds a 1 x C row vector to every row of a T x C matrix.
template <typename T>
Matrix<T> add_rowvec(const Matrix<T>& a, const Matrix<T>& v);

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& a);

template <typename T>
Matrix<T> tanh_map(const Matrix<T>& a);

template <typename T>
Matrix<T> relu(const Matrix<T>& a);

// Row-wise softmax with per-row max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& a);

// Per-row layer norm with population variance: gain, bias are 1 x C.
template <typename T>
Matrix<T> layer_norm_rows(const Matrix<T>& x, const Matrix<T>& gain,
                          const Matrix<T>& bias, T eps = T(1e-5));

template <typename T>
Matrix<T> concat_rows(const std::vector<Matrix<T>>& parts);

template <typename T>
Matrix<T> concat_cols(const std::vector<Matrix<T>>& parts);

// Rows [r0, r1), columns [c0, c1).
template <typename T>
Matrix<T> slice_rows(const Matrix<T>& a, index_t r0, index_t r1);

template <typename T>
Matrix<T> slice_cols(const Matrix<T>& a, index_t c0, index_t c1);

template <typename T>
T sum_all(const Matrix<T>& a);

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
bool bitwise_equal(const Matrix<T>& a, const Matrix<T>& b);

template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& a);

[[noreturn]] void throw_shape_error(const std::string& what);

} // namespace streamdiar
