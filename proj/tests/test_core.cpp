#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/autodiff.hpp"
#include "core/rng.hpp"
#include "model/gradcheck.hpp"

using namespace stnet;
using D = double;

namespace {

Tensor<D> randt(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// direct 6-loop convolution
Tensor<D> conv_ref(const Tensor<D>& x, const Tensor<D>& w, const Tensor<D>* b, int stride, int pad,
                   int groups) {
  int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int OH = (H + 2 * pad - kh) / stride + 1, OW = (W + 2 * pad - kw) / stride + 1;
  int cg = Cin / groups, og = Cout / groups;
  Tensor<D> y({N, Cout, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      int g = co / og;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = b ? (*b)[co] : 0.0;
          for (int ci = 0; ci < cg; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.at4(n, g * cg + ci, iy, ix) * w.at4(co, ci, ky, kx);
              }
          y.at4(n, co, oy, ox) = acc;
        }
    }
  return y;
}

// one-tensor-input gradient check helper
double check_unary(std::vector<int> shape, const std::function<ad::NodeP<D>(ad::NodeP<D>)>& f,
                   uint64_t seed = 7, double lo = -1, double hi = 1) {
  Rng rng(seed);
  Tensor<D> x = randt(shape, rng, lo, hi);
  GradCheckSpec<D> spec;
  spec.wrt = {&x};
  spec.build = [&]() {
    auto leaf = ad::make_leaf(x, true);
    auto out = f(leaf);
    auto s = ad::weighted_sum(out, reduction_weights<D>(out->value.shape));
    return std::make_pair(s, std::vector<ad::NodeP<D>>{leaf});
  };
  return gradcheck_max_rel_error(spec);
}

}  // namespace

TEST_CASE("gemm kernels match naive loops") {
  Rng rng(1);
  int M = 7, N = 13, K = 9;
  Tensor<D> a = randt({M, K}, rng), b = randt({K, N}, rng), bt = randt({N, K}, rng);
  Tensor<D> c1({M, N}), c2({M, N}), c3({M, N});
  gemm_nn<D>(M, N, K, a.ptr(), b.ptr(), c1.ptr(), false);
  gemm_nt<D>(M, N, K, a.ptr(), bt.ptr(), c2.ptr(), false);
  gemm_tn<D>(N, M, K, b.ptr(), a.ptr(), c3.ptr(), false);  // b^T {N,K} * a {K,M}... see below
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      double s = 0, st = 0;
      for (int k = 0; k < K; ++k) {
        s += a[i * K + k] * b[k * N + j];
        st += a[i * K + k] * bt[j * K + k];
      }
      CHECK(c1[i * N + j] == doctest::Approx(s).epsilon(1e-12));
      CHECK(c2[i * N + j] == doctest::Approx(st).epsilon(1e-12));
    }
  // gemm_tn: C[i,j] = sum_k A[k,i]*B[k,j] with A {K,M}=b? use b {K,N} as A -> C {N,M}
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < M; ++j) {
      double s = 0;
      for (int k = 0; k < K; ++k) s += b[k * N + i] * a[k * M + j];
      CHECK(c3[i * M + j] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("conv2d forward matches direct convolution") {
  Rng rng(2);
  struct Case {
    int cin, cout, k, stride, pad, groups;
  };
  for (auto [cin, cout, k, stride, pad, groups] :
       {Case{3, 8, 3, 1, 1, 1}, Case{4, 6, 3, 2, 1, 2}, Case{6, 6, 3, 1, 1, 6},
        Case{5, 7, 1, 1, 0, 1}, Case{3, 4, 7, 2, 3, 1}}) {
    Tensor<D> x = randt({2, cin, 9, 11}, rng);
    Tensor<D> w = randt({cout, cin / groups, k, k}, rng);
    Tensor<D> b = randt({cout}, rng);
    auto out = ad::conv2d(ad::make_leaf(x, false), ad::make_leaf(w, false),
                          ad::make_leaf(b, false), stride, pad, groups);
    Tensor<D> ref = conv_ref(x, w, &b, stride, pad, groups);
    REQUIRE(out->value.shape == ref.shape);
    for (int64_t i = 0; i < ref.numel(); ++i)
      CHECK(out->value[i] == doctest::Approx(ref[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d is deterministic across repeated calls") {
  Rng rng(3);
  Tensor<D> x = randt({2, 16, 16, 16}, rng);
  Tensor<D> w = randt({32, 16, 3, 3}, rng);
  auto a = ad::conv2d(ad::make_leaf(x, false), ad::make_leaf(w, false), ad::NodeP<D>{}, 1, 1, 1);
  auto b = ad::conv2d(ad::make_leaf(x, false), ad::make_leaf(w, false), ad::NodeP<D>{}, 1, 1, 1);
  CHECK(a->value.data == b->value.data);
}

TEST_CASE("gradients: conv2d w.r.t. input, weight, bias") {
  Rng rng(4);
  Tensor<D> x = randt({2, 4, 6, 5}, rng);
  Tensor<D> w = randt({6, 2, 3, 3}, rng);
  Tensor<D> b = randt({6}, rng);
  GradCheckSpec<D> spec;
  spec.wrt = {&x, &w, &b};
  spec.build = [&]() {
    auto lx = ad::make_leaf(x, true), lw = ad::make_leaf(w, true), lb = ad::make_leaf(b, true);
    auto out = ad::conv2d(lx, lw, lb, 2, 1, 2);
    auto s = ad::weighted_sum(out, reduction_weights<D>(out->value.shape));
    return std::make_pair(s, std::vector<ad::NodeP<D>>{lx, lw, lb});
  };
  CHECK(gradcheck_max_rel_error(spec) < 1e-7);
}

TEST_CASE("gradients: batchnorm training and eval modes") {
  Rng rng(5);
  Tensor<D> x = randt({3, 4, 5, 5}, rng);
  Tensor<D> gamma = randt({4}, rng, 0.5, 1.5), beta = randt({4}, rng);
  Tensor<D> rm = randt({4}, rng), rv = randt({4}, rng, 0.5, 1.5);
  for (bool training : {true, false}) {
    GradCheckSpec<D> spec;
    spec.wrt = {&x, &gamma, &beta};
    spec.build = [&]() {
      auto lx = ad::make_leaf(x, true), lg = ad::make_leaf(gamma, true), lb = ad::make_leaf(beta, true);
      Tensor<D> rmc = rm, rvc = rv;  // keep the originals untouched across rebuilds
      auto out = ad::batchnorm2d(lx, lg, lb, &rmc, &rvc, training, 0.1, 1e-5);
      auto s = ad::weighted_sum(out, reduction_weights<D>(out->value.shape));
      return std::make_pair(s, std::vector<ad::NodeP<D>>{lx, lg, lb});
    };
    CHECK(gradcheck_max_rel_error(spec) < 1e-6);
  }
}

TEST_CASE("gradients: pooling and resampling") {
  CHECK(check_unary({2, 3, 7, 7}, [](ad::NodeP<D> x) { return ad::maxpool2d(x, 3, 2, 1); }) < 1e-6);
  CHECK(check_unary({2, 3, 7, 5}, [](ad::NodeP<D> x) { return ad::avgpool_window(x, 2); }) < 1e-6);
  CHECK(check_unary({2, 3, 4, 4}, [](ad::NodeP<D> x) { return ad::global_avgpool(x); }) < 1e-6);
  CHECK(check_unary({1, 2, 3, 4}, [](ad::NodeP<D> x) { return ad::upsample_bilinear(x, 7, 9); }) < 1e-6);
}

TEST_CASE("gradients: elementwise and shape ops") {
  CHECK(check_unary({2, 3, 4, 4}, [](ad::NodeP<D> x) { return ad::relu(x); }) < 1e-6);
  CHECK(check_unary({2, 3, 4, 4}, [](ad::NodeP<D> x) { return ad::sigmoid(x); }) < 1e-6);
  CHECK(check_unary({2, 2, 3, 3}, [](ad::NodeP<D> x) { return ad::log_op(x); }, 11, 0.2, 2.0) < 1e-6);
  CHECK(check_unary({2, 2, 3, 3}, [](ad::NodeP<D> x) { return ad::pow_const(x, 2.5); }, 12, 0.2, 2.0) < 1e-6);
  CHECK(check_unary({2, 2, 3, 3}, [](ad::NodeP<D> x) { return ad::clamp_op(x, -0.5, 0.5); }, 13, -2.0, 2.0) < 1e-6);
  CHECK(check_unary({2, 6, 4, 4}, [](ad::NodeP<D> x) { return ad::slice_channels(x, 1, 4); }) < 1e-6);
  CHECK(check_unary({2, 3, 4, 4}, [](ad::NodeP<D> x) {
          return ad::nchw_from_tokens(ad::tokens_from_nchw(x), 4, 4);
        }) < 1e-6);
  CHECK(check_unary({2, 3, 4, 4}, [](ad::NodeP<D> x) { return ad::softmax_channel(x); }) < 1e-6);
  CHECK(check_unary({2, 5, 6}, [](ad::NodeP<D> x) { return ad::softmax_lastdim(x); }) < 1e-6);
}

TEST_CASE("gradients: binary ops and shared subexpressions") {
  Rng rng(6);
  Tensor<D> a = randt({3, 4}, rng), b = randt({3, 4}, rng, 0.5, 1.5);
  GradCheckSpec<D> spec;
  spec.wrt = {&a, &b};
  spec.build = [&]() {
    auto la = ad::make_leaf(a, true), lb = ad::make_leaf(b, true);
    // mixes add/sub/mul/div and reuses la twice to exercise accumulation
    auto out = ad::add(ad::mul(la, lb), ad::div(ad::sub(la, lb), lb));
    auto s = ad::weighted_sum(out, reduction_weights<D>(out->value.shape));
    return std::make_pair(s, std::vector<ad::NodeP<D>>{la, lb});
  };
  CHECK(gradcheck_max_rel_error(spec) < 1e-7);
}

TEST_CASE("shared leaf accumulates gradients from both uses") {
  Tensor<D> x({2, 2}, 1.5);
  auto lx = ad::make_leaf(x, true);
  auto s = ad::sum_all(ad::add(lx, lx));
  ad::backward(s);
  for (int64_t i = 0; i < 4; ++i) CHECK(lx->grad[i] == doctest::Approx(2.0));
}

TEST_CASE("gradients: linear, mul_channel, concat, matmuls") {
  Rng rng(7);
  Tensor<D> x = randt({3, 5}, rng), w = randt({4, 5}, rng), b = randt({4}, rng);
  GradCheckSpec<D> lin;
  lin.wrt = {&x, &w, &b};
  lin.build = [&]() {
    auto lx = ad::make_leaf(x, true), lw = ad::make_leaf(w, true), lb = ad::make_leaf(b, true);
    auto out = ad::linear(lx, lw, lb);
    return std::make_pair(ad::weighted_sum(out, reduction_weights<D>(out->value.shape)),
                          std::vector<ad::NodeP<D>>{lx, lw, lb});
  };
  CHECK(gradcheck_max_rel_error(lin) < 1e-7);

  Tensor<D> f = randt({2, 3, 4, 4}, rng), g = randt({2, 3}, rng);
  GradCheckSpec<D> mc;
  mc.wrt = {&f, &g};
  mc.build = [&]() {
    auto lf = ad::make_leaf(f, true), lg = ad::make_leaf(g, true);
    auto out = ad::mul_channel(lf, lg);
    return std::make_pair(ad::weighted_sum(out, reduction_weights<D>(out->value.shape)),
                          std::vector<ad::NodeP<D>>{lf, lg});
  };
  CHECK(gradcheck_max_rel_error(mc) < 1e-7);

  Tensor<D> c1t = randt({2, 2, 3, 3}, rng), c2t = randt({2, 4, 3, 3}, rng);
  GradCheckSpec<D> cc;
  cc.wrt = {&c1t, &c2t};
  cc.build = [&]() {
    auto l1 = ad::make_leaf(c1t, true), l2 = ad::make_leaf(c2t, true);
    auto out = ad::concat_channels<D>({l1, l2});
    return std::make_pair(ad::weighted_sum(out, reduction_weights<D>(out->value.shape)),
                          std::vector<ad::NodeP<D>>{l1, l2});
  };
  CHECK(gradcheck_max_rel_error(cc) < 1e-7);

  Tensor<D> q = randt({2, 4, 3}, rng), k = randt({2, 5, 3}, rng), v = randt({2, 5, 6}, rng);
  GradCheckSpec<D> at;
  at.wrt = {&q, &k, &v};
  at.build = [&]() {
    auto lq = ad::make_leaf(q, true), lk = ad::make_leaf(k, true), lv = ad::make_leaf(v, true);
    auto alpha = ad::softmax_lastdim(ad::scale(ad::bmm_nt(lq, lk), 1.0 / std::sqrt(3.0)));
    auto out = ad::bmm(alpha, lv);
    return std::make_pair(ad::weighted_sum(out, reduction_weights<D>(out->value.shape)),
                          std::vector<ad::NodeP<D>>{lq, lk, lv});
  };
  CHECK(gradcheck_max_rel_error(at) < 1e-6);
}

TEST_CASE("inference leaves build no graph") {
  Rng rng(8);
  Tensor<D> x = randt({1, 2, 4, 4}, rng);
  auto lx = ad::make_leaf(x, false);
  auto y = ad::relu(ad::affine(lx, 2.0, 0.5));
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
}
