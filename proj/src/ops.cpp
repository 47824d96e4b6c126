#include "csvqa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace csvqa {

namespace detail {

void gemm(const float* a, const float* b, float* c, int r, int k, int n, bool accumulate) {
  for (int i = 0; i < r; ++i) {
    float* ci = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::memset(ci, 0, sizeof(float) * static_cast<std::size_t>(n));
    const float* ai = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const float av = ai[kk];
      const float* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void gemm_nt(const float* a, const float* b, float* c, int r, int k, int n, bool accumulate) {
  // c[i,j] = sum_t a[i,t] * b[j,t]
  for (int i = 0; i < r; ++i) {
    const float* ai = a + static_cast<std::size_t>(i) * k;
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* bj = b + static_cast<std::size_t>(j) * k;
      float acc = accumulate ? ci[j] : 0.0f;
      for (int t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] = acc;
    }
  }
}

void gemm_tn(const float* a, const float* b, float* c, int r, int k, int n, bool accumulate) {
  // c[i,j] = sum_t a[t,i] * b[t,j]
  if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(r) * n);
  for (int t = 0; t < k; ++t) {
    const float* at = a + static_cast<std::size_t>(t) * r;
    const float* bt = b + static_cast<std::size_t>(t) * n;
    for (int i = 0; i < r; ++i) {
      const float av = at[i];
      float* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

namespace {

using csvqa::detail::GradNode;
using csvqa::detail::TensorImpl;

bool track(const std::initializer_list<Tensor>& inputs) {
  if (!grad_enabled()) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

Tensor make_result(std::vector<int> shape, std::vector<float> data,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(const TensorImpl&)> backward_fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  if (track(inputs)) {
    out.set_requires_grad(true);
    auto node = std::make_shared<GradNode>();
    for (const auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward_fn);
    out.impl()->node = std::move(node);
  }
  return out;
}

void accumulate(const std::shared_ptr<TensorImpl>& target, const float* g, std::size_t count,
                float factor = 1.0f) {
  if (!target->requires_grad && !target->node) return;
  target->ensure_grad();
  float* dst = target->grad.data();
  if (factor == 1.0f) {
    for (std::size_t i = 0; i < count; ++i) dst[i] += g[i];
  } else {
    for (std::size_t i = 0; i < count; ++i) dst[i] += factor * g[i];
  }
}

bool wants_grad(const std::shared_ptr<TensorImpl>& t) { return t->requires_grad || t->node; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), Error::Kind::invalid_dimensions,
          std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
              shape_to_string(b.shape()));
}

}  // namespace
}  // namespace detail

using detail::accumulate;
using detail::check_same_shape;
using detail::make_result;
using detail::wants_grad;

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const detail::TensorImpl& o) {
    accumulate(o.node->inputs[0], o.grad.data(), o.grad.size());
    accumulate(o.node->inputs[1], o.grad.data(), o.grad.size());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const detail::TensorImpl& o) {
    accumulate(o.node->inputs[0], o.grad.data(), o.grad.size());
    accumulate(o.node->inputs[1], o.grad.data(), o.grad.size(), -1.0f);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const detail::TensorImpl& o) {
    const auto& ia = o.node->inputs[0];
    const auto& ib = o.node->inputs[1];
    if (wants_grad(ia)) {
      ia->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ia->grad[i] += o.grad[i] * ib->data[i];
    }
    if (wants_grad(ib)) {
      ib->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ib->grad[i] += o.grad[i] * ia->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<float> out(a.size());
  const auto da = a.data();
  const float f = static_cast<float>(factor);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * f;
  return make_result(a.shape(), std::move(out), {a}, [f](const detail::TensorImpl& o) {
    accumulate(o.node->inputs[0], o.grad.data(), o.grad.size(), f);
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<float> out(a.size());
  const auto da = a.data();
  const float v = static_cast<float>(value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + v;
  return make_result(a.shape(), std::move(out), {a}, [](const detail::TensorImpl& o) {
    accumulate(o.node->inputs[0], o.grad.data(), o.grad.size());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, Error::Kind::invalid_dimensions,
          "matmul: operands must be rank 2");
  require(a.dim(1) == b.dim(0), Error::Kind::invalid_dimensions,
          "matmul: inner dimensions disagree: " + shape_to_string(a.shape()) + " x " +
              shape_to_string(b.shape()));
  const int r = a.dim(0), k = a.dim(1), c = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(r) * c);
  detail::gemm(a.data().data(), b.data().data(), out.data(), r, k, c, false);
  return make_result({r, c}, std::move(out), {a, b}, [r, k, c](const detail::TensorImpl& o) {
    const auto& ia = o.node->inputs[0];
    const auto& ib = o.node->inputs[1];
    if (wants_grad(ia)) {
      ia->ensure_grad();
      detail::gemm_nt(o.grad.data(), ib->data.data(), ia->grad.data(), r, c, k, true);
    }
    if (wants_grad(ib)) {
      ib->ensure_grad();
      detail::gemm_tn(ia->data.data(), o.grad.data(), ib->grad.data(), k, r, c, true);
    }
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require(x.rank() == 2 && bias.rank() == 1 && x.dim(1) == bias.dim(0),
          Error::Kind::invalid_dimensions, "add_row_bias: need [N,F] and [F]");
  const int n = x.dim(0), f = x.dim(1);
  std::vector<float> out(x.size());
  const auto dx = x.data(), db = bias.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j)
      out[static_cast<std::size_t>(i) * f + j] = dx[static_cast<std::size_t>(i) * f + j] + db[j];
  return make_result(x.shape(), std::move(out), {x, bias}, [n, f](const detail::TensorImpl& o) {
    const auto& ix = o.node->inputs[0];
    const auto& ib = o.node->inputs[1];
    if (wants_grad(ix)) accumulate(ix, o.grad.data(), o.grad.size());
    if (wants_grad(ib)) {
      ib->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) ib->grad[j] += o.grad[static_cast<std::size_t>(i) * f + j];
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require(x.rank() == 4 && bias.rank() == 1 && x.dim(1) == bias.dim(0),
          Error::Kind::invalid_dimensions, "add_channel_bias: need [N,C,H,W] and [C]");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<float> out(x.size());
  const auto dx = x.data(), db = bias.data();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
      const float b = db[ch];
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = dx[base + p] + b;
    }
  return make_result(x.shape(), std::move(out), {x, bias},
                     [n, c, plane](const detail::TensorImpl& o) {
                       const auto& ix = o.node->inputs[0];
                       const auto& ib = o.node->inputs[1];
                       if (wants_grad(ix)) accumulate(ix, o.grad.data(), o.grad.size());
                       if (wants_grad(ib)) {
                         ib->ensure_grad();
                         for (int i = 0; i < n; ++i)
                           for (int ch = 0; ch < c; ++ch) {
                             const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
                             float acc = 0.0f;
                             for (std::size_t p = 0; p < plane; ++p) acc += o.grad[base + p];
                             ib->grad[static_cast<std::size_t>(ch)] += acc;
                           }
                       }
                     });
}

namespace {

struct ConvDims {
  int batch, c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  bool batched_input;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, int stride, int pad) {
  require(input.rank() == 3 || input.rank() == 4, Error::Kind::invalid_dimensions,
          "conv2d: input must be [C,H,W] or [N,C,H,W]");
  require(kernels.rank() == 4, Error::Kind::invalid_dimensions,
          "conv2d: kernels must be [C_out,C_in,k,k]");
  require(stride >= 1 && pad >= 0, Error::Kind::invalid_argument,
          "conv2d: stride >= 1 and pad >= 0 required");
  ConvDims d;
  d.batched_input = input.rank() == 4;
  d.batch = d.batched_input ? input.dim(0) : 1;
  d.c_in = input.dim(d.batched_input ? 1 : 0);
  d.h = input.dim(d.batched_input ? 2 : 1);
  d.w = input.dim(d.batched_input ? 3 : 2);
  d.c_out = kernels.dim(0);
  d.k = kernels.dim(2);
  require(kernels.dim(1) == d.c_in && kernels.dim(3) == d.k, Error::Kind::invalid_dimensions,
          "conv2d: kernel shape does not match input channels");
  d.stride = stride;
  d.pad = pad;
  // Output size floor((h + 2p - k) / s) + 1; windows that would overhang the
  // padded input are dropped, the usual convolution arithmetic.
  const int eh = d.h + 2 * pad - d.k;
  const int ew = d.w + 2 * pad - d.k;
  require(eh >= 0 && ew >= 0, Error::Kind::invalid_dimensions,
          "conv2d: kernel larger than padded input");
  d.h_out = eh / stride + 1;
  d.w_out = ew / stride + 1;
  return d;
}

// cols is [C_in*k*k, h_out*w_out] for one item.
void im2col(const float* src, const ConvDims& d, float* cols) {
  const int positions = d.h_out * d.w_out;
  for (int c = 0; c < d.c_in; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        float* row = cols + (static_cast<std::size_t>(c) * d.k * d.k + ky * d.k + kx) * positions;
        int p = 0;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          for (int ox = 0; ox < d.w_out; ++ox, ++p) {
            const int ix = ox * d.stride + kx - d.pad;
            row[p] = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                         ? plane[static_cast<std::size_t>(iy) * d.w + ix]
                         : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_accumulate(const float* cols, const ConvDims& d, float* dst) {
  const int positions = d.h_out * d.w_out;
  for (int c = 0; c < d.c_in; ++c) {
    float* plane = dst + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const float* row =
            cols + (static_cast<std::size_t>(c) * d.k * d.k + ky * d.k + kx) * positions;
        int p = 0;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          for (int ox = 0; ox < d.w_out; ++ox, ++p) {
            const int ix = ox * d.stride + kx - d.pad;
            if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
              plane[static_cast<std::size_t>(iy) * d.w + ix] += row[p];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int pad) {
  const ConvDims d = conv_dims(input, kernels, stride, pad);
  const int positions = d.h_out * d.w_out;
  const int patch = d.c_in * d.k * d.k;
  const std::size_t in_item = static_cast<std::size_t>(d.c_in) * d.h * d.w;
  const std::size_t out_item = static_cast<std::size_t>(d.c_out) * positions;

  std::vector<float> out(static_cast<std::size_t>(d.batch) * out_item);
  std::vector<float> cols(static_cast<std::size_t>(patch) * positions);
  for (int item = 0; item < d.batch; ++item) {
    im2col(input.data().data() + item * in_item, d, cols.data());
    detail::gemm(kernels.data().data(), cols.data(), out.data() + item * out_item, d.c_out, patch,
                 positions, false);
  }

  std::vector<int> out_shape = d.batched_input
                                   ? std::vector<int>{d.batch, d.c_out, d.h_out, d.w_out}
                                   : std::vector<int>{d.c_out, d.h_out, d.w_out};
  return make_result(
      std::move(out_shape), std::move(out), {input, kernels}, [d](const detail::TensorImpl& o) {
        const auto& iin = o.node->inputs[0];
        const auto& iker = o.node->inputs[1];
        const int positions = d.h_out * d.w_out;
        const int patch = d.c_in * d.k * d.k;
        const std::size_t in_item = static_cast<std::size_t>(d.c_in) * d.h * d.w;
        const std::size_t out_item = static_cast<std::size_t>(d.c_out) * positions;
        const bool want_in = wants_grad(iin);
        const bool want_ker = wants_grad(iker);
        if (want_in) iin->ensure_grad();
        if (want_ker) iker->ensure_grad();
        std::vector<float> cols(static_cast<std::size_t>(patch) * positions);
        std::vector<float> dcols(static_cast<std::size_t>(patch) * positions);
        for (int item = 0; item < d.batch; ++item) {
          const float* g = o.grad.data() + item * out_item;
          if (want_ker) {
            im2col(iin->data.data() + item * in_item, d, cols.data());
            // dK[f, t] += sum_p g[f, p] * cols[t, p]
            detail::gemm_nt(g, cols.data(), iker->grad.data(), d.c_out, positions, patch, true);
          }
          if (want_in) {
            // dcols = K^T g
            detail::gemm_tn(iker->data.data(), g, dcols.data(), patch, d.c_out, positions, false);
            col2im_accumulate(dcols.data(), d, iin->grad.data() + item * in_item);
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.size());
  const auto dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] > 0.0f ? dx[i] : 0.0f;
  return make_result(x.shape(), std::move(out), {x}, [](const detail::TensorImpl& o) {
    const auto& ix = o.node->inputs[0];
    if (!wants_grad(ix)) return;
    ix->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (ix->data[i] > 0.0f) ix->grad[i] += o.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<float> out(x.size());
  const auto dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-dx[i]));
  return make_result(x.shape(), std::move(out), {x}, [](const detail::TensorImpl& o) {
    const auto& ix = o.node->inputs[0];
    if (!wants_grad(ix)) return;
    ix->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const float s = o.data[i];
      ix->grad[i] += o.grad[i] * s * (1.0f - s);
    }
  });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  require(shape_product(shape) == x.size(), Error::Kind::invalid_dimensions,
          "reshape: element count mismatch for " + shape_to_string(shape));
  std::vector<float> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](const detail::TensorImpl& o) {
    accumulate(o.node->inputs[0], o.grad.data(), o.grad.size());
  });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  require(a.rank() == b.rank(), Error::Kind::invalid_dimensions, "concat: rank mismatch");
  require(axis >= 0 && axis < a.rank(), Error::Kind::invalid_dimensions, "concat: bad axis");
  for (int i = 0; i < a.rank(); ++i)
    require(i == axis || a.dim(i) == b.dim(i), Error::Kind::invalid_dimensions,
            "concat: non-axis dimensions must match");

  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.dim(i));
  for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<std::size_t>(a.dim(i));
  const std::size_t slab_a = static_cast<std::size_t>(a.dim(axis)) * inner;
  const std::size_t slab_b = static_cast<std::size_t>(b.dim(axis)) * inner;

  std::vector<int> shape = a.shape();
  shape[static_cast<std::size_t>(axis)] = a.dim(axis) + b.dim(axis);
  std::vector<float> out(a.size() + b.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(da.data() + o * slab_a, slab_a, out.data() + o * (slab_a + slab_b));
    std::copy_n(db.data() + o * slab_b, slab_b, out.data() + o * (slab_a + slab_b) + slab_a);
  }
  return make_result(std::move(shape), std::move(out), {a, b},
                     [outer, slab_a, slab_b](const detail::TensorImpl& o) {
                       const auto& ia = o.node->inputs[0];
                       const auto& ib = o.node->inputs[1];
                       const std::size_t slab = slab_a + slab_b;
                       if (wants_grad(ia)) {
                         ia->ensure_grad();
                         for (std::size_t ot = 0; ot < outer; ++ot)
                           for (std::size_t i = 0; i < slab_a; ++i)
                             ia->grad[ot * slab_a + i] += o.grad[ot * slab + i];
                       }
                       if (wants_grad(ib)) {
                         ib->ensure_grad();
                         for (std::size_t ot = 0; ot < outer; ++ot)
                           for (std::size_t i = 0; i < slab_b; ++i)
                             ib->grad[ot * slab_b + i] += o.grad[ot * slab + slab_a + i];
                       }
                     });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  std::vector<float> out{static_cast<float>(acc * inv)};
  return make_result({1}, std::move(out), {x}, [inv](const detail::TensorImpl& o) {
    const auto& ix = o.node->inputs[0];
    if (!wants_grad(ix)) return;
    ix->ensure_grad();
    const float g = o.grad[0] * static_cast<float>(inv);
    for (std::size_t i = 0; i < ix->grad.size(); ++i) ix->grad[i] += g;
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2, Error::Kind::invalid_dimensions,
          "softmax_cross_entropy: logits must be [N,C]");
  const int n = logits.dim(0), c = logits.dim(1);
  require(static_cast<int>(labels.size()) == n, Error::Kind::invalid_dimensions,
          "softmax_cross_entropy: one label per row required");
  for (int i = 0; i < n; ++i)
    require(labels[i] >= 0 && labels[i] < c, Error::Kind::invalid_argument,
            "softmax_cross_entropy: label out of range at row " + std::to_string(i));

  const auto dl = logits.data();
  std::vector<float> probs(static_cast<std::size_t>(n) * c);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = dl.data() + static_cast<std::size_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double se = 0.0;
    for (int j = 0; j < c; ++j) se += std::exp(static_cast<double>(row[j]) - mx);
    const double log_se = std::log(se);
    loss += log_se + mx - row[labels[i]];
    float* prow = probs.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j)
      prow[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx - log_se));
  }
  std::vector<float> out{static_cast<float>(loss / n)};
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result({1}, std::move(out), {logits},
                     [probs = std::move(probs), lab = std::move(lab), n,
                      c](const detail::TensorImpl& o) {
                       const auto& il = o.node->inputs[0];
                       if (!wants_grad(il)) return;
                       il->ensure_grad();
                       const float g = o.grad[0] / static_cast<float>(n);
                       for (int i = 0; i < n; ++i) {
                         const float* prow = probs.data() + static_cast<std::size_t>(i) * c;
                         float* grow = il->grad.data() + static_cast<std::size_t>(i) * c;
                         for (int j = 0; j < c; ++j)
                           grow[j] += g * (prow[j] - (j == lab[static_cast<std::size_t>(i)] ? 1.0f : 0.0f));
                       }
                     });
}

std::vector<float> softmax_rows(const Tensor& logits) {
  require(logits.rank() == 2, Error::Kind::invalid_dimensions, "softmax_rows: need [N,C]");
  const int n = logits.dim(0), c = logits.dim(1);
  const auto dl = logits.data();
  std::vector<float> probs(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i) {
    const float* row = dl.data() + static_cast<std::size_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double se = 0.0;
    for (int j = 0; j < c; ++j) se += std::exp(static_cast<double>(row[j]) - mx);
    float* prow = probs.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j)
      prow[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / se);
  }
  return probs;
}

Tensor assemble_blocks(const Tensor& blocks, int channels, int grid_rows, int grid_cols,
                       int block_size) {
  const int nblocks = channels * grid_rows * grid_cols;
  const int npix = block_size * block_size;
  require(blocks.rank() == 3 && blocks.dim(1) == nblocks && blocks.dim(2) == npix,
          Error::Kind::invalid_dimensions,
          "assemble_blocks: expected [N," + std::to_string(nblocks) + "," + std::to_string(npix) +
              "], got " + shape_to_string(blocks.shape()));
  const int batch = blocks.dim(0);
  const int h = grid_rows * block_size, w = grid_cols * block_size;
  const std::size_t img = static_cast<std::size_t>(channels) * h * w;

  auto src_offset = [=](int blk, int p) {
    const int c = blk / (grid_rows * grid_cols);
    const int rem = blk % (grid_rows * grid_cols);
    const int by = rem / grid_cols, bx = rem % grid_cols;
    const int py = p / block_size, px = p % block_size;
    return (static_cast<std::size_t>(c) * h + (by * block_size + py)) * w + bx * block_size + px;
  };

  std::vector<float> out(static_cast<std::size_t>(batch) * img);
  const auto db = blocks.data();
  for (int item = 0; item < batch; ++item) {
    const float* s = db.data() + static_cast<std::size_t>(item) * nblocks * npix;
    float* dst = out.data() + item * img;
    for (int blk = 0; blk < nblocks; ++blk)
      for (int p = 0; p < npix; ++p) dst[src_offset(blk, p)] = s[static_cast<std::size_t>(blk) * npix + p];
  }
  return make_result({batch, channels, h, w}, std::move(out), {blocks},
                     [=](const detail::TensorImpl& o) {
                       const auto& ib = o.node->inputs[0];
                       if (!wants_grad(ib)) return;
                       ib->ensure_grad();
                       for (int item = 0; item < batch; ++item) {
                         const float* g = o.grad.data() + static_cast<std::size_t>(item) * img;
                         float* dst = ib->grad.data() + static_cast<std::size_t>(item) * nblocks * npix;
                         for (int blk = 0; blk < nblocks; ++blk)
                           for (int p = 0; p < npix; ++p)
                             dst[static_cast<std::size_t>(blk) * npix + p] += g[src_offset(blk, p)];
                       }
                     });
}

}  // namespace csvqa
