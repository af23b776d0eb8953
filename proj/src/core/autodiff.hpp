#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "core/gemm.hpp"
#include "core/tensor.hpp"
#include "core/threadpool.hpp"

namespace stnet::ad {

// Define-by-run reverse-mode tape. Nodes are created in topological order;
// backward walks them by descending creation id. Nodes that do not require
// gradients drop their parent links, so inference builds no graph.

template <typename T>
struct Node;
template <typename T>
using NodeP = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first contribution
  bool requires_grad = false;
  int64_t id = 0;
  std::vector<NodeP<T>> parents;
  std::function<void(Node<T>&)> backward_fn;

  bool has_grad() const { return grad.numel() != 0; }
  Tensor<T>& g() {
    if (!has_grad()) grad = Tensor<T>(value.shape);
    return grad;
  }
};

inline int64_t next_node_id() {
  static std::atomic<int64_t> counter{0};
  return ++counter;
}

template <typename T>
NodeP<T> make_leaf(Tensor<T> v, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->id = next_node_id();
  return n;
}

template <typename T>
NodeP<T> make_op(Tensor<T> v, std::vector<NodeP<T>> parents, std::function<void(Node<T>&)> bw) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  for (const auto& p : parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  n->id = next_node_id();
  return n;
}

template <typename T>
void backward(const NodeP<T>& root) {
  if (!root->requires_grad) data_error("backward: root does not require gradients");
  if (root->value.numel() != 1) data_error("backward: root must be a scalar");
  // Reachable grad-requiring subgraph, then reverse creation order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node<T>* a, Node<T>* b) { return a->id > b->id; });
  root->g()[0] = T(1);
  for (Node<T>* n : order) {
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// element-wise ops

template <typename T>
NodeP<T> add(NodeP<T> a, NodeP<T> b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> out(a->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    const int64_t m = self.value.numel();
    if (a->requires_grad) {
      Tensor<T>& ga = a->g();
      for (int64_t i = 0; i < m; ++i) ga[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor<T>& gb = b->g();
      for (int64_t i = 0; i < m; ++i) gb[i] += self.grad[i];
    }
  });
}

template <typename T>
NodeP<T> sub(NodeP<T> a, NodeP<T> b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<T> out(a->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    const int64_t m = self.value.numel();
    if (a->requires_grad) {
      Tensor<T>& ga = a->g();
      for (int64_t i = 0; i < m; ++i) ga[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor<T>& gb = b->g();
      for (int64_t i = 0; i < m; ++i) gb[i] -= self.grad[i];
    }
  });
}

template <typename T>
NodeP<T> mul(NodeP<T> a, NodeP<T> b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> out(a->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    const int64_t m = self.value.numel();
    if (a->requires_grad) {
      Tensor<T>& ga = a->g();
      for (int64_t i = 0; i < m; ++i) ga[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& gb = b->g();
      for (int64_t i = 0; i < m; ++i) gb[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename T>
NodeP<T> div(NodeP<T> a, NodeP<T> b) {
  check_same_shape(a->value, b->value, "div");
  Tensor<T> out(a->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] / b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    const int64_t m = self.value.numel();
    if (a->requires_grad) {
      Tensor<T>& ga = a->g();
      for (int64_t i = 0; i < m; ++i) ga[i] += self.grad[i] / b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& gb = b->g();
      for (int64_t i = 0; i < m; ++i)
        gb[i] -= self.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
    }
  });
}

// y = s*x + c
template <typename T>
NodeP<T> affine(NodeP<T> x, T s, T c) {
  Tensor<T> out(x->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = s * x->value[i] + c;
  return make_op<T>(std::move(out), {x}, [x, s](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t m = self.value.numel();
    for (int64_t i = 0; i < m; ++i) gx[i] += s * self.grad[i];
  });
}

template <typename T>
NodeP<T> scale(NodeP<T> x, T s) {
  return affine(x, s, T(0));
}

template <typename T>
NodeP<T> relu(NodeP<T> x) {
  Tensor<T> out(x->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
  return make_op<T>(std::move(out), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t m = self.value.numel();
    for (int64_t i = 0; i < m; ++i)
      if (x->value[i] > T(0)) gx[i] += self.grad[i];
  });
}

template <typename T>
NodeP<T> sigmoid(NodeP<T> x) {
  Tensor<T> out(x->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-x->value[i]));
  return make_op<T>(std::move(out), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t m = self.value.numel();
    for (int64_t i = 0; i < m; ++i) {
      T y = self.value[i];
      gx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
NodeP<T> log_op(NodeP<T> x) {
  Tensor<T> out(x->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::log(x->value[i]);
  return make_op<T>(std::move(out), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t m = self.value.numel();
    for (int64_t i = 0; i < m; ++i) gx[i] += self.grad[i] / x->value[i];
  });
}

template <typename T>
NodeP<T> pow_const(NodeP<T> x, T p) {
  Tensor<T> out(x->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::pow(x->value[i], p);
  return make_op<T>(std::move(out), {x}, [x, p](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t m = self.value.numel();
    for (int64_t i = 0; i < m; ++i)
      gx[i] += self.grad[i] * p * std::pow(x->value[i], p - T(1));
  });
}

// gradient passes only strictly inside [lo, hi]
template <typename T>
NodeP<T> clamp_op(NodeP<T> x, T lo, T hi) {
  Tensor<T> out(x->value.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::min(hi, std::max(lo, x->value[i]));
  return make_op<T>(std::move(out), {x}, [x, lo, hi](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t m = self.value.numel();
    for (int64_t i = 0; i < m; ++i)
      if (x->value[i] > lo && x->value[i] < hi) gx[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
NodeP<T> concat_channels(const std::vector<NodeP<T>>& xs) {
  if (xs.empty()) data_error("concat: no inputs");
  int N = xs[0]->value.dim(0), H = xs[0]->value.dim(2), W = xs[0]->value.dim(3);
  int C = 0;
  for (const auto& x : xs) {
    if (x->value.ndim() != 4 || x->value.dim(0) != N || x->value.dim(2) != H || x->value.dim(3) != W)
      data_error("concat: incompatible shapes");
    C += x->value.dim(1);
  }
  Tensor<T> out({N, C, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    int64_t coff = 0;
    for (const auto& x : xs) {
      int xc = x->value.dim(1);
      std::memcpy(out.ptr() + (static_cast<int64_t>(n) * C + coff) * plane,
                  x->value.ptr() + static_cast<int64_t>(n) * xc * plane,
                  sizeof(T) * static_cast<size_t>(xc * plane));
      coff += xc;
    }
  }
  std::vector<NodeP<T>> parents(xs.begin(), xs.end());
  return make_op<T>(std::move(out), parents, [xs, N, C, plane](Node<T>& self) {
    for (int n = 0; n < N; ++n) {
      int64_t coff = 0;
      for (const auto& x : xs) {
        int xc = x->value.dim(1);
        if (x->requires_grad) {
          Tensor<T>& gx = x->g();
          const T* src = self.grad.ptr() + (static_cast<int64_t>(n) * C + coff) * plane;
          T* dst = gx.ptr() + static_cast<int64_t>(n) * xc * plane;
          for (int64_t i = 0; i < xc * plane; ++i) dst[i] += src[i];
        }
        coff += xc;
      }
    }
  });
}

template <typename T>
NodeP<T> slice_channels(NodeP<T> x, int c0, int c1) {
  int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1) data_error("slice: bad channel range");
  Tensor<T> out({N, c1 - c0, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n)
    std::memcpy(out.ptr() + static_cast<int64_t>(n) * (c1 - c0) * plane,
                x->value.ptr() + (static_cast<int64_t>(n) * C + c0) * plane,
                sizeof(T) * static_cast<size_t>((c1 - c0) * plane));
  return make_op<T>(std::move(out), {x}, [x, c0, c1, C, plane](Node<T>& self) {
    Tensor<T>& gx = x->g();
    int N = self.value.dim(0);
    for (int n = 0; n < N; ++n) {
      const T* src = self.grad.ptr() + static_cast<int64_t>(n) * (c1 - c0) * plane;
      T* dst = gx.ptr() + (static_cast<int64_t>(n) * C + c0) * plane;
      for (int64_t i = 0; i < (c1 - c0) * plane; ++i) dst[i] += src[i];
    }
  });
}

// {N,C,H,W} -> {N, H*W, C}
template <typename T>
NodeP<T> tokens_from_nchw(NodeP<T> x) {
  int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int64_t L = static_cast<int64_t>(H) * W;
  Tensor<T> out({N, static_cast<int>(L), C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* src = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * L;
      T* dst = out.ptr() + static_cast<int64_t>(n) * L * C + c;
      for (int64_t t = 0; t < L; ++t) dst[t * C] = src[t];
    }
  return make_op<T>(std::move(out), {x}, [x, N, C, L](Node<T>& self) {
    Tensor<T>& gx = x->g();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T* dst = gx.ptr() + (static_cast<int64_t>(n) * C + c) * L;
        const T* src = self.grad.ptr() + static_cast<int64_t>(n) * L * C + c;
        for (int64_t t = 0; t < L; ++t) dst[t] += src[t * C];
      }
  });
}

// {N, H*W, C} -> {N,C,H,W}
template <typename T>
NodeP<T> nchw_from_tokens(NodeP<T> x, int H, int W) {
  int N = x->value.dim(0), C = x->value.dim(2);
  const int64_t L = static_cast<int64_t>(H) * W;
  if (x->value.dim(1) != H * W) data_error("nchw_from_tokens: token count mismatch");
  Tensor<T> out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      T* dst = out.ptr() + (static_cast<int64_t>(n) * C + c) * L;
      const T* src = x->value.ptr() + static_cast<int64_t>(n) * L * C + c;
      for (int64_t t = 0; t < L; ++t) dst[t] = src[t * C];
    }
  return make_op<T>(std::move(out), {x}, [x, N, C, L](Node<T>& self) {
    Tensor<T>& gx = x->g();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* src = self.grad.ptr() + (static_cast<int64_t>(n) * C + c) * L;
        T* dst = gx.ptr() + static_cast<int64_t>(n) * L * C + c;
        for (int64_t t = 0; t < L; ++t) dst[t * C] += src[t];
      }
  });
}

// ---------------------------------------------------------------------------
// convolution

template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH, int OW,
            T* col) {
  const int64_t ohw = static_cast<int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = col + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * ohw;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + OW, T(0));
            dst += OW;
            continue;
          }
          const T* src = x + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
          dst += OW;
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
                int OW, T* x) {
  const int64_t ohw = static_cast<int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = col + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * ohw;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            src += OW;
            continue;
          }
          T* dst = x + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
          src += OW;
        }
      }
    }
  }
}

// x {N,Cin,H,W}, w {Cout,Cin/groups,kh,kw}, b {Cout} or null
template <typename T>
NodeP<T> conv2d(NodeP<T> x, NodeP<T> w, NodeP<T> b, int stride, int pad, int groups) {
  const int N = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (Cin % groups != 0 || Cout % groups != 0) data_error("conv2d: channels not divisible by groups");
  if (w->value.dim(1) != Cin / groups)
    data_error("conv2d: weight expects " + std::to_string(w->value.dim(1) * groups) +
               " input channels, got " + std::to_string(Cin));
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) data_error("conv2d: output would be empty");
  const int cg = Cin / groups, og = Cout / groups;
  const int64_t K = static_cast<int64_t>(cg) * kh * kw;
  const int64_t ohw = static_cast<int64_t>(OH) * OW;

  Tensor<T> out({N, Cout, OH, OW});
  {
    std::vector<T> col(static_cast<size_t>(K * ohw));
    for (int n = 0; n < N; ++n) {
      for (int g = 0; g < groups; ++g) {
        const T* xg = x->value.ptr() + (static_cast<int64_t>(n) * Cin + g * cg) * H * W;
        im2col(xg, cg, H, W, kh, kw, stride, pad, OH, OW, col.data());
        T* yg = out.ptr() + (static_cast<int64_t>(n) * Cout + g * og) * ohw;
        gemm_nn<T>(og, ohw, K, w->value.ptr() + static_cast<int64_t>(g) * og * K, col.data(), yg,
                   false);
      }
    }
    if (b) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) {
          T bv = b->value[c];
          T* yc = out.ptr() + (static_cast<int64_t>(n) * Cout + c) * ohw;
          for (int64_t i = 0; i < ohw; ++i) yc[i] += bv;
        }
    }
  }

  std::vector<NodeP<T>> parents = b ? std::vector<NodeP<T>>{x, w, b} : std::vector<NodeP<T>>{x, w};
  return make_op<T>(
      std::move(out), parents,
      [x, w, b, stride, pad, groups, N, Cin, H, W, Cout, kh, kw, OH, OW, cg, og, K,
       ohw](Node<T>& self) {
        const Tensor<T>& gy = self.grad;
        std::vector<T> col(static_cast<size_t>(K * ohw));
        std::vector<T> dcol;
        if (x->requires_grad) dcol.resize(static_cast<size_t>(K * ohw));
        Tensor<T>* gw = w->requires_grad ? &w->g() : nullptr;
        Tensor<T>* gx = x->requires_grad ? &x->g() : nullptr;
        for (int n = 0; n < N; ++n) {
          for (int g = 0; g < groups; ++g) {
            const T* gyg = gy.ptr() + (static_cast<int64_t>(n) * Cout + g * og) * ohw;
            if (gw || gx) {
              if (gw) {
                const T* xg = x->value.ptr() + (static_cast<int64_t>(n) * Cin + g * cg) * H * W;
                im2col(xg, cg, H, W, kh, kw, stride, pad, OH, OW, col.data());
                gemm_nt<T>(og, K, ohw, gyg, col.data(),
                           gw->ptr() + static_cast<int64_t>(g) * og * K, true);
              }
              if (gx) {
                gemm_tn<T>(K, ohw, og, w->value.ptr() + static_cast<int64_t>(g) * og * K, gyg,
                           dcol.data(), false);
                T* gxg = gx->ptr() + (static_cast<int64_t>(n) * Cin + g * cg) * H * W;
                col2im_add(dcol.data(), cg, H, W, kh, kw, stride, pad, OH, OW, gxg);
              }
            }
          }
        }
        if (b && b->requires_grad) {
          Tensor<T>& gb = b->g();
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) {
              const T* gyc = gy.ptr() + (static_cast<int64_t>(n) * Cout + c) * ohw;
              T acc = T(0);
              for (int64_t i = 0; i < ohw; ++i) acc += gyc[i];
              gb[c] += acc;
            }
        }
      });
}

// ---------------------------------------------------------------------------
// normalization

// Training mode normalizes with batch statistics (biased variance) and
// updates running stats in place; eval mode uses the running stats.
template <typename T>
NodeP<T> batchnorm2d(NodeP<T> x, NodeP<T> gamma, NodeP<T> beta, Tensor<T>* running_mean,
                     Tensor<T>* running_var, bool training, T momentum, T eps) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(N) * plane;
  Tensor<T> mean({C}), invstd({C});
  if (training) {
    for (int c = 0; c < C; ++c) {
      T s = T(0);
      for (int n = 0; n < N; ++n) {
        const T* p = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
      }
      T mu = s / static_cast<T>(m);
      T v = T(0);
      for (int n = 0; n < N; ++n) {
        const T* p = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          T d = p[i] - mu;
          v += d * d;
        }
      }
      v /= static_cast<T>(m);
      mean[c] = mu;
      invstd[c] = T(1) / std::sqrt(v + eps);
      if (running_mean) {
        (*running_mean)[c] = (T(1) - momentum) * (*running_mean)[c] + momentum * mu;
        T unbiased = m > 1 ? v * static_cast<T>(m) / static_cast<T>(m - 1) : v;
        (*running_var)[c] = (T(1) - momentum) * (*running_var)[c] + momentum * unbiased;
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[c];
      invstd[c] = T(1) / std::sqrt((*running_var)[c] + eps);
    }
  }

  Tensor<T> out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T* q = out.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T mu = mean[c], is = invstd[c], ga = gamma->value[c], be = beta->value[c];
      for (int64_t i = 0; i < plane; ++i) q[i] = (p[i] - mu) * is * ga + be;
    }

  return make_op<T>(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean, invstd, training, N, C, plane, m](Node<T>& self) {
        const Tensor<T>& gy = self.grad;
        for (int c = 0; c < C; ++c) {
          T mu = mean[c], is = invstd[c], ga = gamma->value[c];
          // per-channel reductions
          T sum_gy = T(0), sum_gy_xhat = T(0);
          for (int n = 0; n < N; ++n) {
            const T* gp = gy.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
            const T* xp = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
              sum_gy += gp[i];
              sum_gy_xhat += gp[i] * (xp[i] - mu) * is;
            }
          }
          if (gamma->requires_grad) gamma->g()[c] += sum_gy_xhat;
          if (beta->requires_grad) beta->g()[c] += sum_gy;
          if (x->requires_grad) {
            Tensor<T>& gx = x->g();
            if (training) {
              T k1 = sum_gy / static_cast<T>(m);
              T k2 = sum_gy_xhat / static_cast<T>(m);
              for (int n = 0; n < N; ++n) {
                const T* gp = gy.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
                const T* xp = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
                T* op = gx.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                  T xhat = (xp[i] - mu) * is;
                  op[i] += ga * is * (gp[i] - k1 - xhat * k2);
                }
              }
            } else {
              for (int n = 0; n < N; ++n) {
                const T* gp = gy.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
                T* op = gx.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) op[i] += gp[i] * ga * is;
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// pooling / resampling

template <typename T>
NodeP<T> maxpool2d(NodeP<T> x, int k, int stride, int pad) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int OH = (H + 2 * pad - k) / stride + 1;
  const int OW = (W + 2 * pad - k) / stride + 1;
  Tensor<T> out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xp = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t bi = -1;
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              T v = xp[static_cast<int64_t>(iy) * W + ix];
              if (v > best) {
                best = v;
                bi = (static_cast<int64_t>(n) * C + c) * H * W + static_cast<int64_t>(iy) * W + ix;
              }
            }
          }
          out[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = bi;
          ++oi;
        }
    }
  return make_op<T>(std::move(out), {x}, [x, argmax](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int64_t n = self.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      int64_t bi = (*argmax)[static_cast<size_t>(i)];
      if (bi >= 0) gx[bi] += self.grad[i];
    }
  });
}

// Non-overlapping s x s window average; edge windows are clipped and divide
// by their actual element count.
template <typename T>
NodeP<T> avgpool_window(NodeP<T> x, int s) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int OH = (H + s - 1) / s, OW = (W + s - 1) / s;
  Tensor<T> out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xp = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
      T* op = out.ptr() + (static_cast<int64_t>(n) * C + c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          int y1 = std::min(H, (oy + 1) * s), x1 = std::min(W, (ox + 1) * s);
          T acc = T(0);
          for (int iy = oy * s; iy < y1; ++iy)
            for (int ix = ox * s; ix < x1; ++ix) acc += xp[static_cast<int64_t>(iy) * W + ix];
          op[static_cast<int64_t>(oy) * OW + ox] =
              acc / static_cast<T>((y1 - oy * s) * (x1 - ox * s));
        }
    }
  return make_op<T>(std::move(out), {x}, [x, s, N, C, H, W, OH, OW](Node<T>& self) {
    Tensor<T>& gx = x->g();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T* gp = gx.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
        const T* sp = self.grad.ptr() + (static_cast<int64_t>(n) * C + c) * OH * OW;
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox) {
            int y1 = std::min(H, (oy + 1) * s), x1 = std::min(W, (ox + 1) * s);
            T g = sp[static_cast<int64_t>(oy) * OW + ox] /
                  static_cast<T>((y1 - oy * s) * (x1 - ox * s));
            for (int iy = oy * s; iy < y1; ++iy)
              for (int ix = ox * s; ix < x1; ++ix) gp[static_cast<int64_t>(iy) * W + ix] += g;
          }
      }
  });
}

template <typename T>
NodeP<T> global_avgpool(NodeP<T> x) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T acc = T(0);
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
      out[static_cast<int64_t>(n) * C + c] = acc / static_cast<T>(plane);
    }
  return make_op<T>(std::move(out), {x}, [x, N, C, plane](Node<T>& self) {
    Tensor<T>& gx = x->g();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T g = self.grad[static_cast<int64_t>(n) * C + c] / static_cast<T>(plane);
        T* p = gx.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] += g;
      }
  });
}

struct BilinearAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

inline BilinearAxis bilinear_axis(int in, int out) {
  BilinearAxis a;
  a.i0.resize(static_cast<size_t>(out));
  a.i1.resize(static_cast<size_t>(out));
  a.w1.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > in - 1) s = in - 1;
    int lo = static_cast<int>(s);
    a.i0[static_cast<size_t>(o)] = lo;
    a.i1[static_cast<size_t>(o)] = std::min(lo + 1, in - 1);
    a.w1[static_cast<size_t>(o)] = s - lo;
  }
  return a;
}

// Half-pixel (pixel-center) bilinear interpolation.
template <typename T>
NodeP<T> upsample_bilinear(NodeP<T> x, int oh, int ow) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (oh <= 0 || ow <= 0) data_error("upsample: non-positive target size");
  if (oh < H || ow < W) data_error("upsample: target smaller than input");
  BilinearAxis ay = bilinear_axis(H, oh), ax = bilinear_axis(W, ow);
  Tensor<T> out({N, C, oh, ow});
  const int64_t nc = static_cast<int64_t>(N) * C;
  auto body = [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const T* src = x->value.ptr() + p * H * W;
      T* dst = out.ptr() + p * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        int y0 = ay.i0[static_cast<size_t>(oy)], y1 = ay.i1[static_cast<size_t>(oy)];
        T wy1 = static_cast<T>(ay.w1[static_cast<size_t>(oy)]), wy0 = T(1) - wy1;
        const T* r0 = src + static_cast<int64_t>(y0) * W;
        const T* r1 = src + static_cast<int64_t>(y1) * W;
        for (int ox = 0; ox < ow; ++ox) {
          int x0 = ax.i0[static_cast<size_t>(ox)], x1 = ax.i1[static_cast<size_t>(ox)];
          T wx1 = static_cast<T>(ax.w1[static_cast<size_t>(ox)]), wx0 = T(1) - wx1;
          dst[static_cast<int64_t>(oy) * ow + ox] =
              wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
        }
      }
    }
  };
  maybe_parallel_for(nc, 8LL * oh * ow, body);
  return make_op<T>(std::move(out), {x}, [x, ay, ax, H, W, nc](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const int oh = self.value.dim(2), ow = self.value.dim(3);
    for (int64_t p = 0; p < nc; ++p) {
      T* dst = gx.ptr() + p * H * W;
      const T* src = self.grad.ptr() + p * static_cast<int64_t>(oh) * ow;
      for (int oy = 0; oy < oh; ++oy) {
        int y0 = ay.i0[static_cast<size_t>(oy)], y1 = ay.i1[static_cast<size_t>(oy)];
        T wy1 = static_cast<T>(ay.w1[static_cast<size_t>(oy)]), wy0 = T(1) - wy1;
        for (int ox = 0; ox < ow; ++ox) {
          int x0 = ax.i0[static_cast<size_t>(ox)], x1 = ax.i1[static_cast<size_t>(ox)];
          T wx1 = static_cast<T>(ax.w1[static_cast<size_t>(ox)]), wx0 = T(1) - wx1;
          T g = src[static_cast<int64_t>(oy) * ow + ox];
          dst[static_cast<int64_t>(y0) * W + x0] += wy0 * wx0 * g;
          dst[static_cast<int64_t>(y0) * W + x1] += wy0 * wx1 * g;
          dst[static_cast<int64_t>(y1) * W + x0] += wy1 * wx0 * g;
          dst[static_cast<int64_t>(y1) * W + x1] += wy1 * wx1 * g;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// linear / matmul / softmax

// x {N,F}, w {O,F}, b {O} or null -> {N,O}
template <typename T>
NodeP<T> linear(NodeP<T> x, NodeP<T> w, NodeP<T> b) {
  const int N = x->value.dim(0), F = x->value.dim(1), O = w->value.dim(0);
  if (w->value.dim(1) != F) data_error("linear: feature mismatch");
  Tensor<T> out({N, O});
  gemm_nt<T>(N, O, F, x->value.ptr(), w->value.ptr(), out.ptr(), false);
  if (b)
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) out[static_cast<int64_t>(n) * O + o] += b->value[o];
  std::vector<NodeP<T>> parents = b ? std::vector<NodeP<T>>{x, w, b} : std::vector<NodeP<T>>{x, w};
  return make_op<T>(std::move(out), parents, [x, w, b, N, F, O](Node<T>& self) {
    const Tensor<T>& gy = self.grad;
    if (x->requires_grad) gemm_nn<T>(N, F, O, gy.ptr(), w->value.ptr(), x->g().ptr(), true);
    if (w->requires_grad) gemm_tn<T>(O, F, N, gy.ptr(), x->value.ptr(), w->g().ptr(), true);
    if (b && b->requires_grad) {
      Tensor<T>& gb = b->g();
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) gb[o] += gy[static_cast<int64_t>(n) * O + o];
    }
  });
}

// x {N,C,H,W} * gate {N,C} broadcast over space
template <typename T>
NodeP<T> mul_channel(NodeP<T> x, NodeP<T> gate) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (gate->value.ndim() != 2 || gate->value.dim(0) != N || gate->value.dim(1) != C)
    data_error("mul_channel: gate shape mismatch");
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      T g = gate->value[static_cast<int64_t>(n) * C + c];
      const T* p = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T* q = out.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) q[i] = p[i] * g;
    }
  return make_op<T>(std::move(out), {x, gate}, [x, gate, N, C, plane](Node<T>& self) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* gp = self.grad.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
        if (x->requires_grad) {
          T g = gate->value[static_cast<int64_t>(n) * C + c];
          T* xp = x->g().ptr() + (static_cast<int64_t>(n) * C + c) * plane;
          for (int64_t i = 0; i < plane; ++i) xp[i] += gp[i] * g;
        }
        if (gate->requires_grad) {
          const T* xp = x->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
          T acc = T(0);
          for (int64_t i = 0; i < plane; ++i) acc += gp[i] * xp[i];
          gate->g()[static_cast<int64_t>(n) * C + c] += acc;
        }
      }
  });
}

// a {B,M,K} x b {B,K,N} -> {B,M,N}
template <typename T>
NodeP<T> bmm(NodeP<T> a, NodeP<T> b) {
  const int B = a->value.dim(0), M = a->value.dim(1), K = a->value.dim(2), N = b->value.dim(2);
  if (b->value.dim(0) != B || b->value.dim(1) != K) data_error("bmm: shape mismatch");
  Tensor<T> out({B, M, N});
  for (int i = 0; i < B; ++i)
    gemm_nn<T>(M, N, K, a->value.ptr() + static_cast<int64_t>(i) * M * K,
               b->value.ptr() + static_cast<int64_t>(i) * K * N,
               out.ptr() + static_cast<int64_t>(i) * M * N, false);
  return make_op<T>(std::move(out), {a, b}, [a, b, B, M, K, N](Node<T>& self) {
    for (int i = 0; i < B; ++i) {
      const T* gy = self.grad.ptr() + static_cast<int64_t>(i) * M * N;
      if (a->requires_grad)
        gemm_nt<T>(M, K, N, gy, b->value.ptr() + static_cast<int64_t>(i) * K * N,
                   a->g().ptr() + static_cast<int64_t>(i) * M * K, true);
      if (b->requires_grad)
        gemm_tn<T>(K, N, M, a->value.ptr() + static_cast<int64_t>(i) * M * K, gy,
                   b->g().ptr() + static_cast<int64_t>(i) * K * N, true);
    }
  });
}

// a {B,M,K} x b {B,N,K}^T -> {B,M,N}
template <typename T>
NodeP<T> bmm_nt(NodeP<T> a, NodeP<T> b) {
  const int B = a->value.dim(0), M = a->value.dim(1), K = a->value.dim(2), N = b->value.dim(1);
  if (b->value.dim(0) != B || b->value.dim(2) != K) data_error("bmm_nt: shape mismatch");
  Tensor<T> out({B, M, N});
  for (int i = 0; i < B; ++i)
    gemm_nt<T>(M, N, K, a->value.ptr() + static_cast<int64_t>(i) * M * K,
               b->value.ptr() + static_cast<int64_t>(i) * N * K,
               out.ptr() + static_cast<int64_t>(i) * M * N, false);
  return make_op<T>(std::move(out), {a, b}, [a, b, B, M, K, N](Node<T>& self) {
    for (int i = 0; i < B; ++i) {
      const T* gy = self.grad.ptr() + static_cast<int64_t>(i) * M * N;
      if (a->requires_grad)
        gemm_nn<T>(M, K, N, gy, b->value.ptr() + static_cast<int64_t>(i) * N * K,
                   a->g().ptr() + static_cast<int64_t>(i) * M * K, true);
      if (b->requires_grad)
        gemm_tn<T>(N, K, M, gy, a->value.ptr() + static_cast<int64_t>(i) * M * K,
                   b->g().ptr() + static_cast<int64_t>(i) * N * K, true);
    }
  });
}

// softmax over the last dimension
template <typename T>
NodeP<T> softmax_lastdim(NodeP<T> x) {
  const int L = x->value.dim(x->value.ndim() - 1);
  const int64_t rows = x->value.numel() / L;
  Tensor<T> out(x->value.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T* p = x->value.ptr() + r * L;
    T* q = out.ptr() + r * L;
    T mx = p[0];
    for (int i = 1; i < L; ++i) mx = std::max(mx, p[i]);
    T s = T(0);
    for (int i = 0; i < L; ++i) {
      q[i] = std::exp(p[i] - mx);
      s += q[i];
    }
    T inv = T(1) / s;
    for (int i = 0; i < L; ++i) q[i] *= inv;
  }
  return make_op<T>(std::move(out), {x}, [x, L, rows](Node<T>& self) {
    Tensor<T>& gx = x->g();
    for (int64_t rr = 0; rr < rows; ++rr) {
      const T* s = self.value.ptr() + rr * L;
      const T* gy = self.grad.ptr() + rr * L;
      T* gxp = gx.ptr() + rr * L;
      T dot = T(0);
      for (int i = 0; i < L; ++i) dot += gy[i] * s[i];
      for (int i = 0; i < L; ++i) gxp[i] += s[i] * (gy[i] - dot);
    }
  });
}

// softmax over the channel dimension of NCHW
template <typename T>
NodeP<T> softmax_channel(NodeP<T> x) {
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> out({N, C, H, W});
  for (int n = 0; n < N; ++n) {
    const T* xp = x->value.ptr() + static_cast<int64_t>(n) * C * plane;
    T* op = out.ptr() + static_cast<int64_t>(n) * C * plane;
    for (int64_t i = 0; i < plane; ++i) {
      T mx = xp[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, xp[c * plane + i]);
      T s = T(0);
      for (int c = 0; c < C; ++c) {
        T e = std::exp(xp[c * plane + i] - mx);
        op[c * plane + i] = e;
        s += e;
      }
      T inv = T(1) / s;
      for (int c = 0; c < C; ++c) op[c * plane + i] *= inv;
    }
  }
  return make_op<T>(std::move(out), {x}, [x, N, C, plane](Node<T>& self) {
    Tensor<T>& gx = x->g();
    for (int n = 0; n < N; ++n) {
      const T* s = self.value.ptr() + static_cast<int64_t>(n) * C * plane;
      const T* gy = self.grad.ptr() + static_cast<int64_t>(n) * C * plane;
      T* gxp = gx.ptr() + static_cast<int64_t>(n) * C * plane;
      for (int64_t i = 0; i < plane; ++i) {
        T dot = T(0);
        for (int c = 0; c < C; ++c) dot += gy[c * plane + i] * s[c * plane + i];
        for (int c = 0; c < C; ++c)
          gxp[c * plane + i] += s[c * plane + i] * (gy[c * plane + i] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
NodeP<T> sum_all(NodeP<T> x) {
  T acc = T(0);
  const int64_t n = x->value.numel();
  for (int64_t i = 0; i < n; ++i) acc += x->value[i];
  Tensor<T> out({1});
  out[0] = acc;
  return make_op<T>(std::move(out), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const T g = self.grad[0];
    const int64_t m = gx.numel();
    for (int64_t i = 0; i < m; ++i) gx[i] += g;
  });
}

template <typename T>
NodeP<T> mean_all(NodeP<T> x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x->value.numel()));
}

// sum(x * w) with constant weights
template <typename T>
NodeP<T> weighted_sum(NodeP<T> x, Tensor<T> w) {
  check_same_shape(x->value, w, "weighted_sum");
  T acc = T(0);
  const int64_t n = x->value.numel();
  for (int64_t i = 0; i < n; ++i) acc += x->value[i] * w[i];
  Tensor<T> out({1});
  out[0] = acc;
  auto wp = std::make_shared<Tensor<T>>(std::move(w));
  return make_op<T>(std::move(out), {x}, [x, wp](Node<T>& self) {
    Tensor<T>& gx = x->g();
    const T g = self.grad[0];
    const int64_t m = gx.numel();
    for (int64_t i = 0; i < m; ++i) gx[i] += g * (*wp)[i];
  });
}

}  // namespace stnet::ad
