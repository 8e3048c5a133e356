#include "aslora/ops.hpp"

#include "aslora/kernels.hpp"

#include <cmath>
#include <utility>

namespace aslora {
namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

std::vector<real>& grad_of(const ImplPtr& t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), real(0));
  return t->grad;
}

int checked_int(int64_t v, const char* what) {
  if (v > INT32_MAX) throw ShapeError(std::string(what) + " too large");
  return static_cast<int>(v);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() != 2)
    throw ShapeError("matmul: need [...,k] x [k,n], got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int k = a.dim(a.ndim() - 1);
  if (k != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int n = b.dim(1);
  const int rows = checked_int(a.numel() / k, "matmul rows");

  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out = Tensor::zeros(std::move(out_shape));
  kernels::gemm(false, false, rows, n, k, a.data(), b.data(), out.data());

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record(oi, [ai, bi, oi, rows, n, k]() {
      const real* g = oi->grad.data();
      if (ai->requires_grad)
        kernels::gemm(false, true, rows, k, n, g, bi->data.data(),
                      grad_of(ai).data(), true);
      if (bi->requires_grad)
        kernels::gemm(true, false, k, n, rows, ai->data.data(), g,
                      grad_of(bi).data(), true);
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w) {
  if (x.ndim() < 1 || w.ndim() != 2)
    throw ShapeError("linear: need x:[...,in], w:[out,in], got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int in = x.dim(x.ndim() - 1);
  if (in != w.dim(1))
    throw ShapeError("linear: input width disagrees: x " + shape_str(x.shape()) +
                     " vs w " + shape_str(w.shape()));
  const int out_dim = w.dim(0);
  const int rows = checked_int(x.numel() / in, "linear rows");

  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out = Tensor::zeros(std::move(out_shape));
  kernels::gemm(false, true, rows, out_dim, in, x.data(), w.data(), out.data());

  if (recording({&x, &w})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), wi = w.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, wi, oi, rows, in, out_dim]() {
      const real* g = oi->grad.data();
      if (xi->requires_grad)
        kernels::gemm(false, false, rows, in, out_dim, g, wi->data.data(),
                      grad_of(xi).data(), true);
      if (wi->requires_grad)
        kernels::gemm(true, false, out_dim, in, rows, g, xi->data.data(),
                      grad_of(wi).data(), true);
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm: need [N,m,k] x [N,k,n], got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor out = Tensor::zeros({batch, m, n});
  for (int s = 0; s < batch; ++s)
    kernels::gemm(false, false, m, n, k, a.data() + static_cast<size_t>(s) * m * k,
                  b.data() + static_cast<size_t>(s) * k * n,
                  out.data() + static_cast<size_t>(s) * m * n);

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record(oi, [ai, bi, oi, batch, m, k, n]() {
      const real* g = oi->grad.data();
      for (int s = 0; s < batch; ++s) {
        const real* gs = g + static_cast<size_t>(s) * m * n;
        if (ai->requires_grad)
          kernels::gemm(false, true, m, k, n, gs,
                        bi->data.data() + static_cast<size_t>(s) * k * n,
                        grad_of(ai).data() + static_cast<size_t>(s) * m * k, true);
        if (bi->requires_grad)
          kernels::gemm(true, false, k, n, m,
                        ai->data.data() + static_cast<size_t>(s) * m * k, gs,
                        grad_of(bi).data() + static_cast<size_t>(s) * k * n, true);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  if (!same) {
    // Suffix broadcast: b must match the trailing axes of a.
    const int an = a.ndim(), bn = b.ndim();
    bool suffix = bn <= an;
    for (int i = 0; suffix && i < bn; ++i)
      suffix = a.dim(an - bn + i) == b.dim(i);
    if (!suffix)
      throw ShapeError("add: shapes disagree: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  }
  const int64_t total = a.numel(), nb = b.numel();
  Tensor out = Tensor::zeros(a.shape());
  {
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    if (same) {
      for (int64_t i = 0; i < total; ++i) po[i] = pa[i] + pb[i];
    } else {
      for (int64_t i = 0; i < total; ++i) po[i] = pa[i] + pb[i % nb];
    }
  }

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record(oi, [ai, bi, oi, total, nb]() {
      const real* g = oi->grad.data();
      if (ai->requires_grad) {
        real* da = grad_of(ai).data();
        for (int64_t i = 0; i < total; ++i) da[i] += g[i];
      }
      if (bi->requires_grad) {
        real* db = grad_of(bi).data();
        for (int64_t i = 0; i < total; ++i) db[i % nb] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const int64_t total = a.numel();
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] - b.data()[i];

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record(oi, [ai, bi, oi, total]() {
      const real* g = oi->grad.data();
      if (ai->requires_grad) {
        real* da = grad_of(ai).data();
        for (int64_t i = 0; i < total; ++i) da[i] += g[i];
      }
      if (bi->requires_grad) {
        real* db = grad_of(bi).data();
        for (int64_t i = 0; i < total; ++i) db[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const int64_t total = a.numel();
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] * b.data()[i];

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record(oi, [ai, bi, oi, total]() {
      const real* g = oi->grad.data();
      if (ai->requires_grad) {
        real* da = grad_of(ai).data();
        for (int64_t i = 0; i < total; ++i) da[i] += g[i] * bi->data[static_cast<size_t>(i)];
      }
      if (bi->requires_grad) {
        real* db = grad_of(bi).data();
        for (int64_t i = 0; i < total; ++i) db[i] += g[i] * ai->data[static_cast<size_t>(i)];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, real c) {
  const int64_t total = a.numel();
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < total; ++i) out.data()[i] = c * a.data()[i];

  if (recording({&a})) {
    out.set_requires_grad(true);
    ImplPtr ai = a.handle(), oi = out.handle();
    Tape::active()->record(oi, [ai, oi, total, c]() {
      real* da = grad_of(ai).data();
      const real* g = oi->grad.data();
      for (int64_t i = 0; i < total; ++i) da[i] += c * g[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  const int64_t total = x.numel();
  Tensor out = Tensor::zeros(x.shape());
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (int64_t i = 0; i < total; ++i) {
    const double v = static_cast<double>(x.data()[i]);
    out.data()[i] = static_cast<real>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, oi, total]() {
      constexpr double kInvSqrt2Pi = 0.39894228040143267794;
      real* dx = grad_of(xi).data();
      const real* g = oi->grad.data();
      for (int64_t i = 0; i < total; ++i) {
        const double v = static_cast<double>(xi->data[static_cast<size_t>(i)]);
        const double cdf = 0.5 * (1.0 + std::erf(v * 0.70710678118654752440));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] += g[i] * static_cast<real>(cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const int64_t total = x.numel();
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < total; ++i)
    out.data()[i] = x.data()[i] > real(0) ? x.data()[i] : real(0);

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, oi, total]() {
      real* dx = grad_of(xi).data();
      const real* g = oi->grad.data();
      for (int64_t i = 0; i < total; ++i)
        if (xi->data[static_cast<size_t>(i)] > real(0)) dx[i] += g[i];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  const int cols = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / cols;
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = x.data() + r * cols;
    real* yr = out.data() + r * cols;
    real m = xr[0];
    for (int j = 1; j < cols; ++j)
      if (xr[j] > m) m = xr[j];
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp(static_cast<double>(xr[j] - m));
      yr[j] = static_cast<real>(e);
      denom += e;
    }
    const real inv = static_cast<real>(1.0 / denom);
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, oi, rows, cols]() {
      real* dx = grad_of(xi).data();
      const real* g = oi->grad.data();
      const real* y = oi->data.data();
      for (int64_t r = 0; r < rows; ++r) {
        const real* gr = g + r * cols;
        const real* yr = y + r * cols;
        real* dr = dx + r * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += static_cast<double>(gr[j]) * yr[j];
        const real d = static_cast<real>(dot);
        for (int j = 0; j < cols; ++j) dr[j] += (gr[j] - d) * yr[j];
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  const int cols = x.dim(x.ndim() - 1);
  if (gamma.ndim() != 1 || beta.ndim() != 1 || gamma.dim(0) != cols || beta.dim(0) != cols)
    throw ShapeError("layer_norm: affine params must be [" + std::to_string(cols) +
                     "], got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  const int64_t rows = x.numel() / cols;
  Tensor out = Tensor::zeros(x.shape());

  // Normalized activations and per-row inverse stddev are cached for the
  // backward closure.
  auto xhat = std::make_shared<std::vector<real>>(static_cast<size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<real>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = x.data() + r * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += xr[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= cols;
    const real inv = static_cast<real>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*inv_std)[static_cast<size_t>(r)] = inv;
    real* hr = xhat->data() + r * cols;
    real* yr = out.data() + r * cols;
    for (int j = 0; j < cols; ++j) {
      hr[j] = static_cast<real>((xr[j] - mean)) * inv;
      yr[j] = gamma.data()[j] * hr[j] + beta.data()[j];
    }
  }

  if (recording({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), gi = gamma.handle(), bi = beta.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, gi, bi, oi, xhat, inv_std, rows, cols]() {
      const real* g = oi->grad.data();
      if (bi->requires_grad) {
        real* db = grad_of(bi).data();
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < cols; ++j) db[j] += g[r * cols + j];
      }
      if (gi->requires_grad) {
        real* dg = grad_of(gi).data();
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < cols; ++j)
            dg[j] += g[r * cols + j] * (*xhat)[static_cast<size_t>(r * cols + j)];
      }
      if (xi->requires_grad) {
        real* dx = grad_of(xi).data();
        const real* gm = gi->data.data();
        for (int64_t r = 0; r < rows; ++r) {
          const real* gr = g + r * cols;
          const real* hr = xhat->data() + r * cols;
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < cols; ++j) {
            const double gy = static_cast<double>(gr[j]) * gm[j];
            m1 += gy;
            m2 += gy * hr[j];
          }
          m1 /= cols;
          m2 /= cols;
          const real inv = (*inv_std)[static_cast<size_t>(r)];
          for (int j = 0; j < cols; ++j) {
            const double gy = static_cast<double>(gr[j]) * gm[j];
            dx[r * cols + j] += static_cast<real>((gy - m1 - hr[j] * m2)) * inv;
          }
        }
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids, int batch, int seq) {
  if (table.ndim() != 2)
    throw ShapeError("embedding: table must be [V,d], got " + shape_str(table.shape()));
  if (batch <= 0 || seq <= 0 || ids.size() != static_cast<size_t>(batch) * seq)
    throw ShapeError("embedding: ids length " + std::to_string(ids.size()) +
                     " does not match batch " + std::to_string(batch) + " x seq " +
                     std::to_string(seq));
  const int vocab = table.dim(0), width = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw InputError("embedding: token id " + std::to_string(id) +
                       " out of vocabulary " + std::to_string(vocab));

  Tensor out = Tensor::zeros({batch, seq, width});
  for (size_t i = 0; i < ids.size(); ++i) {
    const real* src = table.data() + static_cast<size_t>(ids[i]) * width;
    real* dst = out.data() + i * width;
    std::copy(src, src + width, dst);
  }

  if (recording({&table})) {
    out.set_requires_grad(true);
    ImplPtr ti = table.handle(), oi = out.handle();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    Tape::active()->record(oi, [ti, oi, ids_copy, width]() {
      real* dt = grad_of(ti).data();
      const real* g = oi->grad.data();
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        real* row = dt + static_cast<size_t>((*ids_copy)[i]) * width;
        const real* gr = g + i * width;
        for (int j = 0; j < width; ++j) row[j] += gr[j];
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw ShapeError("cross_entropy: logits must be [N,C], got " + shape_str(logits.shape()));
  if (labels.empty()) throw ContractError("cross_entropy: empty labels");
  const int n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != static_cast<size_t>(n))
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_str(logits.shape()));
  for (int y : labels)
    if (y < 0 || y >= c)
      throw InputError("cross_entropy: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(c) + ")");

  // Softmax probabilities are cached for the backward closure.
  auto probs = std::make_shared<std::vector<real>>(static_cast<size_t>(n) * c);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const real* zr = logits.data() + static_cast<size_t>(r) * c;
    real m = zr[0];
    for (int j = 1; j < c; ++j)
      if (zr[j] > m) m = zr[j];
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(zr[j] - m));
    const double lse = static_cast<double>(m) + std::log(denom);
    total += lse - static_cast<double>(zr[labels[static_cast<size_t>(r)]]);
    real* pr = probs->data() + static_cast<size_t>(r) * c;
    for (int j = 0; j < c; ++j)
      pr[j] = static_cast<real>(std::exp(static_cast<double>(zr[j]) - lse));
  }
  Tensor out = Tensor::scalar(static_cast<real>(total / n));

  if (recording({&logits})) {
    out.set_requires_grad(true);
    ImplPtr zi = logits.handle(), oi = out.handle();
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    Tape::active()->record(oi, [zi, oi, probs, labels_copy, n, c]() {
      const real gscale = oi->grad[0] / static_cast<real>(n);
      real* dz = grad_of(zi).data();
      for (int r = 0; r < n; ++r) {
        const real* pr = probs->data() + static_cast<size_t>(r) * c;
        real* dr = dz + static_cast<size_t>(r) * c;
        const int y = (*labels_copy)[static_cast<size_t>(r)];
        for (int j = 0; j < c; ++j)
          dr[j] += gscale * (pr[j] - (j == y ? real(1) : real(0)));
      }
    });
  }
  return out;
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const int64_t total = pred.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < total; ++i) {
    const double d = static_cast<double>(pred.data()[i]) - target.data()[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<real>(acc / static_cast<double>(total)));

  if (recording({&pred, &target})) {
    out.set_requires_grad(true);
    ImplPtr pi = pred.handle(), ti = target.handle(), oi = out.handle();
    Tape::active()->record(oi, [pi, ti, oi, total]() {
      const real gscale = oi->grad[0] * real(2) / static_cast<real>(total);
      for (int64_t i = 0; i < total; ++i) {
        const real d = pi->data[static_cast<size_t>(i)] - ti->data[static_cast<size_t>(i)];
        if (pi->requires_grad) grad_of(pi)[static_cast<size_t>(i)] += gscale * d;
        if (ti->requires_grad) grad_of(ti)[static_cast<size_t>(i)] -= gscale * d;
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(static_cast<real>(acc));

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, oi]() {
      const real g = oi->grad[0];
      real* dx = grad_of(xi).data();
      for (size_t i = 0; i < xi->data.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

Tensor mean_pool(const Tensor& x) {
  if (x.ndim() != 3)
    throw ShapeError("mean_pool: need [B,S,d], got " + shape_str(x.shape()));
  const int batch = x.dim(0), seq = x.dim(1), width = x.dim(2);
  Tensor out = Tensor::zeros({batch, width});
  const real inv = real(1) / static_cast<real>(seq);
  for (int b = 0; b < batch; ++b) {
    real* orow = out.data() + static_cast<size_t>(b) * width;
    for (int s = 0; s < seq; ++s) {
      const real* xr = x.data() + (static_cast<size_t>(b) * seq + s) * width;
      for (int j = 0; j < width; ++j) orow[j] += xr[j];
    }
    for (int j = 0; j < width; ++j) orow[j] *= inv;
  }

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, oi, batch, seq, width, inv]() {
      real* dx = grad_of(xi).data();
      const real* g = oi->grad.data();
      for (int b = 0; b < batch; ++b) {
        const real* gr = g + static_cast<size_t>(b) * width;
        for (int s = 0; s < seq; ++s) {
          real* dr = dx + (static_cast<size_t>(b) * seq + s) * width;
          for (int j = 0; j < width; ++j) dr[j] += gr[j] * inv;
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel_of(new_shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  Tensor out = Tensor::from_values(std::move(new_shape), x.values());

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    Tape::active()->record(oi, [xi, oi]() {
      real* dx = grad_of(xi).data();
      const real* g = oi->grad.data();
      for (size_t i = 0; i < xi->data.size(); ++i) dx[i] += g[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int nd = x.ndim();
  if (axes.size() != static_cast<size_t>(nd))
    throw ShapeError("permute: axes size " + std::to_string(axes.size()) +
                     " for tensor " + shape_str(x.shape()));
  std::vector<bool> seen(static_cast<size_t>(nd), false);
  for (int a : axes) {
    if (a < 0 || a >= nd || seen[static_cast<size_t>(a)])
      throw ShapeError("permute: axes must be a permutation of 0.." +
                       std::to_string(nd - 1));
    seen[static_cast<size_t>(a)] = true;
  }

  Shape out_shape(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i)
    out_shape[static_cast<size_t>(i)] = x.dim(axes[static_cast<size_t>(i)]);
  const auto in_strides = row_major_strides(x.shape());
  // Stride of output axis i in the input buffer.
  auto src_strides = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i)
    (*src_strides)[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(axes[static_cast<size_t>(i)])];

  Tensor out = Tensor::zeros(out_shape);
  const int64_t total = x.numel();
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  int64_t src = 0;
  for (int64_t dst = 0; dst < total; ++dst) {
    out.data()[dst] = x.data()[src];
    for (int ax = nd - 1; ax >= 0; --ax) {
      idx[static_cast<size_t>(ax)]++;
      src += (*src_strides)[static_cast<size_t>(ax)];
      if (idx[static_cast<size_t>(ax)] < out_shape[static_cast<size_t>(ax)]) break;
      src -= (*src_strides)[static_cast<size_t>(ax)] * out_shape[static_cast<size_t>(ax)];
      idx[static_cast<size_t>(ax)] = 0;
    }
  }

  if (recording({&x})) {
    out.set_requires_grad(true);
    ImplPtr xi = x.handle(), oi = out.handle();
    auto oshape = std::make_shared<Shape>(out_shape);
    Tape::active()->record(oi, [xi, oi, src_strides, oshape, total, nd]() {
      real* dx = grad_of(xi).data();
      const real* g = oi->grad.data();
      std::vector<int64_t> it(static_cast<size_t>(nd), 0);
      int64_t s = 0;
      for (int64_t dst = 0; dst < total; ++dst) {
        dx[s] += g[dst];
        for (int ax = nd - 1; ax >= 0; --ax) {
          it[static_cast<size_t>(ax)]++;
          s += (*src_strides)[static_cast<size_t>(ax)];
          if (it[static_cast<size_t>(ax)] < (*oshape)[static_cast<size_t>(ax)]) break;
          s -= (*src_strides)[static_cast<size_t>(ax)] * (*oshape)[static_cast<size_t>(ax)];
          it[static_cast<size_t>(ax)] = 0;
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.ndim() != 2)
    throw ShapeError("transpose: need 2-D tensor, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

} // namespace aslora
