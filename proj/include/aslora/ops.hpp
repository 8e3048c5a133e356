#pragma once

#include "aslora/tensor.hpp"

#include <vector>

namespace aslora {

/// a:[...,k] times b:[k,n] -> [...,n]; leading axes of a are batched rows.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x:[...,in] times w:[out,in]^T -> [...,out]. Row-major weight layout with
/// out rows keeps both forward and backward on contiguous gemm paths.
Tensor linear(const Tensor& x, const Tensor& w);

/// a:[N,m,k] times b:[N,k,n] -> [N,m,n], independent slices.
Tensor bmm(const Tensor& a, const Tensor& b);

/// Elementwise a+b. b may also be a suffix of a's shape (bias broadcast);
/// the gradient to b then sums over the broadcast leading axes.
Tensor add(const Tensor& a, const Tensor& b);

Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);

/// Exact erf-based gelu (smooth, so finite-difference checks stay clean).
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

/// Softmax along the last axis, max-subtracted for stability.
Tensor softmax(const Tensor& x);

/// Normalizes the last axis to zero mean / unit variance (biased variance),
/// then applies elementwise affine gamma,beta of that axis length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps = real(1e-5));

/// table:[V,d] gathered by ids (length batch*seq) -> [batch,seq,d].
Tensor embedding(const Tensor& table, const std::vector<int>& ids,
                 int batch, int seq);

/// Mean cross-entropy of logits:[N,C] against integer labels, log-sum-exp
/// stabilized. Pre: labels non-empty, each in [0,C).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Mean squared error between same-shape tensors -> scalar.
Tensor mse(const Tensor& pred, const Tensor& target);

Tensor sum(const Tensor& x);

/// x:[B,S,d] -> [B,d], mean over the sequence axis.
Tensor mean_pool(const Tensor& x);

Tensor reshape(const Tensor& x, Shape new_shape);

/// Axis permutation (copying); axes is a permutation of 0..ndim-1.
Tensor permute(const Tensor& x, const std::vector<int>& axes);

/// 2-D transpose.
Tensor transpose(const Tensor& x);

} // namespace aslora
