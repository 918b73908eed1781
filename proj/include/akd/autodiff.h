// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal reverse-mode automatic differentiation on dense row-major matrices.
// Every value is a [rows x cols] matrix; scalars are 1x1. A Var is a cheap
// handle onto a shared graph node. Nodes only retain their parents (and a
// backward closure) when gradients can actually flow, so frozen forward
// passes build no graph and hold no memory beyond the live values.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "akd/common.h"

namespace akd::ad {

struct Node;
using NodeRef = std::shared_ptr<Node>;

struct Node {
  Mat val;
  Mat grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<NodeRef> parents;            // empty unless requires_grad
  std::function<void(Node&)> backward_fn;  // unset for leaves

  void accumulate(const Mat& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodeRef n) : n_(std::move(n)) {}

  static Var constant(Mat v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    return Var(n);
  }

  static Var param(Mat v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = true;
    return Var(n);
  }

  bool defined() const { return n_ != nullptr; }
  const Mat& val() const { return n_->val; }
  Mat& mutable_val() { return n_->val; }
  const Mat& grad() const { return n_->grad; }
  bool has_grad() const { return n_->grad.size() != 0; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  Eigen::Index rows() const { return n_->val.rows(); }
  Eigen::Index cols() const { return n_->val.cols(); }
  NodeRef node() const { return n_; }

  void zero_grad() { n_->grad.resize(0, 0); }

 private:
  NodeRef n_;
};

// Runs reverse-mode accumulation from a 1x1 root. Parameter gradients are
// left in place (accumulating across repeated calls until zero_grad);
// intermediate values and gradients are released as soon as they are no
// longer needed so peak memory stays close to the forward pass.
void backward(const Var& root);

// While a guard is alive, ops record no parents and no backward closures,
// so forward passes over trainable parameters behave as frozen inference.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- op library ----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& row);          // a: [T x d], row: [1 x d]
Var mul_colvec(const Var& a, const Mat& col);          // scale rows by constants
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_constmat(const Var& a, const Mat& c);
Var sub_constmat(const Var& a, const Mat& c);
Var matmul(const Var& a, const Var& b);                // [m x k] * [k x n]
Var matmul_nt(const Var& a, const Var& b);             // [m x k] * [n x k]^T
Var mul_scalar_var(const Var& a, const Var& s);        // s: 1x1
Var relu(const Var& a);
Var gelu(const Var& a);                                // exact erf form
Var abs_val(const Var& a);
Var log_sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var layernorm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& a, const std::vector<Eigen::Index>& rows);
Var top_rows(const Var& a, Eigen::Index n);            // first n rows
Var mean_pool_rows2(const Var& a);                     // kernel 2, stride 2, floor(T/2)
Var row_sum(const Var& a);                             // [T x d] -> [T x 1]
Var sum_all(const Var& a);                             // -> 1x1
Var mean_all(const Var& a);                            // -> 1x1
// Replace the given rows of `a` with the (learned) row vector `fill`.
Var replace_rows(const Var& a, const std::vector<Eigen::Index>& rows, const Var& fill);
// Inverted dropout with keep-prob 1-p; identity when p == 0.
Var dropout(const Var& a, double p, Rng& rng);

// Relative-position attention bias. proj = Q * R^T with R holding embeddings
// for clipped signed distances -max_dist..max_dist (2*max_dist+1 rows).
// Output B is [T x T] with B(i,j) = proj(i, clamp(j-i) + max_dist).
Var rel_pos_bias(const Var& proj, Eigen::Index seq_len, int max_dist);

// Grouped temporal convolution. x is [T x Cin]; weight is [K*Cin/G x Cout]
// where rows are ordered (tap k, in-channel-within-group c); bias is
// [1 x Cout]. Input channel block g maps to output column block g.
Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel,
           int stride, int pad, int groups);

// Per-row cosine similarity against a constant target, -> [T x 1].
// Rows where either side has zero norm yield 0; each such row increments
// *degenerate_count when provided.
Var row_cosine(const Var& a, const Mat& target, long* degenerate_count = nullptr);

// Mean softmax cross-entropy of logits [N x C] against integer labels.
Var softmax_xent(const Var& logits, const std::vector<int>& labels);

// Per-row InfoNCE against constant targets with negatives drawn from a
// constant pool: -> [T x 1]. neg_idx[t] lists pool rows used as negatives
// for row t. Gradients flow into `pred` only.
Var infonce_rows(const Var& pred, const Mat& target, const Mat& pool,
                 const std::vector<std::vector<Eigen::Index>>& neg_idx,
                 double temperature);

// ---- parameter bookkeeping ------------------------------------------------

struct NamedParam {
  std::string name;
  Var var;
};

class ParamStore {
 public:
  Var add(const std::string& name, Mat init) {
    for (const auto& p : params_) {
      AKD_CHECK(p.name != name, "duplicate parameter name: ", name);
    }
    Var v = Var::param(std::move(init));
    params_.push_back({name, v});
    return v;
  }

  const std::vector<NamedParam>& all() const { return params_; }
  std::vector<NamedParam>& all() { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  void freeze() {
    for (auto& p : params_) p.var.node()->requires_grad = false;
  }

  size_t count_scalars() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p.var.val().size());
    return n;
  }

  Var find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.var;
    throw Error(str("parameter not found: ", name));
  }

  uint64_t content_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
      h = fnv1a(p.name.data(), p.name.size(), h);
      h = fnv1a(p.var.val().data(), sizeof(double) * p.var.val().size(), h);
    }
    return h;
  }

 private:
  std::vector<NamedParam> params_;
};

}  // namespace akd::ad
