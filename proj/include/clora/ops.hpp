#pragma once

// Matrix-level operations over the active kernel table.

#include <span>

#include "clora/matrix.hpp"

namespace clora {

/// a[m x k] * b[k x n]. Each entry accumulates p = 0..k-1 in ascending order.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix relu(const Matrix& a);
/// Gradient through ReLU given the pre-activation: grad where pre > 0, else 0.
Matrix relu_backward(const Matrix& pre, const Matrix& grad);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double alpha);
/// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y);
void add_inplace(Matrix& y, const Matrix& x);

/// Adds the 1 x cols row vector `bias` to every row of `a`.
Matrix add_row_bias(const Matrix& a, const Matrix& bias);
/// Adds the rows x 1 column vector `bias` to every column of `a`.
Matrix add_col_bias(const Matrix& a, const Matrix& bias);
/// 1 x cols matrix of column sums (rows summed in ascending order).
Matrix col_sums(const Matrix& a);
/// rows x 1 matrix of row sums.
Matrix row_sums(const Matrix& a);

/// [a | b], row counts must match.
Matrix concat_cols(const Matrix& a, const Matrix& b);
/// Columns [begin, end).
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& a);

double sum_squares(const Matrix& a);

}  // namespace clora
