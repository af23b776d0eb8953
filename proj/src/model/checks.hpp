#pragma once

#include "model/gradcheck.hpp"
#include "model/loss.hpp"
#include "model/sff.hpp"
#include "model/stnet_model.hpp"
#include "model/tff.hpp"

namespace stnet {

// Finite-difference verification of the TFF block: analytic gradients of a
// fixed scalar reduction of tff_forward w.r.t. both inputs and every
// parameter, against central differences with step epsilon.
template <typename T>
T tff_backward_check(TffBlock<T>& block, Tensor<T> r1, Tensor<T> r2, T epsilon) {
  if (r1.ndim() != 3) data_error("tff_backward_check: expected CxHxW inputs");
  check_same_shape(r1, r2, "tff_backward_check");
  std::vector<ParamRef<T>> params;
  std::vector<BufferRef<T>> buffers;
  block.reg("tff", params, buffers);

  GradCheckSpec<T> spec;
  spec.epsilon = epsilon;
  spec.wrt = {&r1, &r2};
  for (auto& p : params) spec.wrt.push_back(p.value);
  spec.build = [&block, &params, &r1, &r2]() {
    ParamBind<T> pb;
    pb.train = true;
    pb.grads = true;
    Tensor<T> b1({1, r1.dim(0), r1.dim(1), r1.dim(2)});
    b1.data = r1.data;
    Tensor<T> b2(b1.shape);
    b2.data = r2.data;
    auto n1 = ad::make_leaf(std::move(b1), true);
    auto n2 = ad::make_leaf(std::move(b2), true);
    auto out = block.forward(pb, n1, n2);
    auto s = ad::weighted_sum(out, reduction_weights<T>(out->value.shape));
    std::vector<ad::NodeP<T>> leaves = {n1, n2};
    for (auto& p : params) leaves.push_back(pb.leaf(*p.value));
    return std::make_pair(s, leaves);
  };
  return gradcheck_max_rel_error(spec);
}

// Finite-difference check of the assembled network: encoder, fusion,
// attention, decoder and the hybrid loss in one graph. Coordinates are
// subsampled per tensor; inputs and every parameter tensor participate.
template <typename T>
T full_network_backward_check(StNet<T>& model, Tensor<T> t1, Tensor<T> t2, const Tensor<T>& target,
                              const FocalConfig& fcfg, const DiceConfig& dcfg, T epsilon,
                              int max_coords_per_tensor) {
  GradCheckSpec<T> spec;
  spec.epsilon = epsilon;
  spec.max_coords_per_tensor = max_coords_per_tensor;
  spec.wrt = {&t1, &t2};
  for (auto& p : model.params) spec.wrt.push_back(p.value);
  spec.build = [&model, &t1, &t2, &target, &fcfg, &dcfg]() {
    ParamBind<T> pb;
    pb.train = true;
    pb.grads = true;
    auto n1 = ad::make_leaf(t1, true);
    auto n2 = ad::make_leaf(t2, true);
    auto logits = model.forward(pb, n1, n2);
    auto loss = hybrid_loss_node(logits, target, fcfg, dcfg);
    std::vector<ad::NodeP<T>> leaves = {n1, n2};
    for (auto& p : model.params) leaves.push_back(pb.leaf(*p.value));
    return std::make_pair(loss, leaves);
  };
  return gradcheck_max_rel_error(spec);
}

// Same check over sff_forward.
template <typename T>
T sff_backward_check(SffBlock<T>& block, Tensor<T> low, Tensor<T> high, T epsilon) {
  if (low.ndim() != 3 || high.ndim() != 3) data_error("sff_backward_check: expected CxHxW inputs");
  std::vector<ParamRef<T>> params;
  block.reg("sff", params);

  GradCheckSpec<T> spec;
  spec.epsilon = epsilon;
  spec.wrt = {&low, &high};
  for (auto& p : params) spec.wrt.push_back(p.value);
  spec.build = [&block, &params, &low, &high]() {
    ParamBind<T> pb;
    pb.train = true;
    pb.grads = true;
    Tensor<T> bl({1, low.dim(0), low.dim(1), low.dim(2)});
    bl.data = low.data;
    Tensor<T> bh({1, high.dim(0), high.dim(1), high.dim(2)});
    bh.data = high.data;
    auto nl = ad::make_leaf(std::move(bl), true);
    auto nh = ad::make_leaf(std::move(bh), true);
    auto out = block.forward(pb, nl, nh);
    auto s = ad::weighted_sum(out, reduction_weights<T>(out->value.shape));
    std::vector<ad::NodeP<T>> leaves = {nl, nh};
    for (auto& p : params) leaves.push_back(pb.leaf(*p.value));
    return std::make_pair(s, leaves);
  };
  return gradcheck_max_rel_error(spec);
}

}  // namespace stnet
