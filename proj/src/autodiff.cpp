// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/autodiff.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace akd::ad {

namespace {

thread_local bool g_grad_enabled = true;

Var make_op(Mat val, const std::vector<Var>& parents,
            std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  bool rg = false;
  if (g_grad_enabled)
    for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(bw);
  }
  return Var(n);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  AKD_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), op,
            ": shape mismatch ", a.rows(), "x", a.cols(), " vs ", b.rows(),
            "x", b.cols());
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

constexpr double kZeroNorm = 1e-30;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Var& root) {
  AKD_CHECK(root.defined() && root.rows() == 1 && root.cols() == 1,
            "backward: root must be a 1x1 scalar");
  if (!root.requires_grad()) return;

  // Post-order DFS; `order` owns the nodes so graph edges can be torn down
  // while iterating.
  std::vector<NodeRef> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    NodeRef n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      NodeRef p = f.n->parents[f.next++];
      if (p->requires_grad && !visited.count(p.get())) {
        visited.insert(p.get());
        stack.push_back({std::move(p), 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root.node()->grad = Mat::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (!n->backward_fn) continue;  // leaf
    if (n->grad.size() == 0) n->grad = Mat::Zero(n->val.rows(), n->val.cols());
    n->backward_fn(*n);
    n->grad.resize(0, 0);
    if (n != root.node().get()) n->val.resize(0, 0);
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.val() + b.val(), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.val() - b.val(), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(-self.grad);
  });
}

Var add_rowvec(const Var& a, const Var& row) {
  AKD_CHECK(row.rows() == 1 && row.cols() == a.cols(),
            "add_rowvec: expected 1x", a.cols(), ", got ", row.rows(), "x",
            row.cols());
  Mat v = a.val();
  v.rowwise() += row.val().row(0);
  return make_op(std::move(v), {a, row}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad)
      self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Var mul_colvec(const Var& a, const Mat& col) {
  AKD_CHECK(col.rows() == a.rows() && col.cols() == 1, "mul_colvec: bad shape");
  Mat v = a.val().array().colwise() * col.col(0).array();
  Mat col_copy = col;
  return make_op(std::move(v), {a}, [col_copy](Node& self) {
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(
          (self.grad.array().colwise() * col_copy.col(0).array()).matrix());
  });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_shape(a, b, "hadamard");
  return make_op(a.val().cwiseProduct(b.val()), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(self.grad.cwiseProduct(self.parents[1]->val));
    if (self.parents[1]->requires_grad)
      self.parents[1]->accumulate(self.grad.cwiseProduct(self.parents[0]->val));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.val() * s, {a}, [s](Node& self) {
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(self.grad * s);
  });
}

Var add_constmat(const Var& a, const Mat& c) {
  AKD_CHECK(a.rows() == c.rows() && a.cols() == c.cols(),
            "add_constmat: shape mismatch");
  return make_op(a.val() + c, {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
  });
}

Var sub_constmat(const Var& a, const Mat& c) {
  AKD_CHECK(a.rows() == c.rows() && a.cols() == c.cols(),
            "sub_constmat: shape mismatch");
  return make_op(a.val() - c, {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
  });
}

Var matmul(const Var& a, const Var& b) {
  AKD_CHECK(a.cols() == b.rows(), "matmul: inner dims ", a.cols(), " vs ",
            b.rows());
  return make_op(a.val() * b.val(), {a, b}, [](Node& self) {
    const Mat& g = self.grad;
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(g * self.parents[1]->val.transpose());
    if (self.parents[1]->requires_grad)
      self.parents[1]->accumulate(self.parents[0]->val.transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  AKD_CHECK(a.cols() == b.cols(), "matmul_nt: inner dims ", a.cols(), " vs ",
            b.cols());
  return make_op(a.val() * b.val().transpose(), {a, b}, [](Node& self) {
    const Mat& g = self.grad;
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(g * self.parents[1]->val);
    if (self.parents[1]->requires_grad)
      self.parents[1]->accumulate(g.transpose() * self.parents[0]->val);
  });
}

Var mul_scalar_var(const Var& a, const Var& s) {
  AKD_CHECK(s.rows() == 1 && s.cols() == 1, "mul_scalar_var: s must be 1x1");
  return make_op(a.val() * s.val()(0, 0), {a, s}, [](Node& self) {
    const Mat& g = self.grad;
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(g * self.parents[1]->val(0, 0));
    if (self.parents[1]->requires_grad) {
      Mat gs(1, 1);
      gs(0, 0) = g.cwiseProduct(self.parents[0]->val).sum();
      self.parents[1]->accumulate(gs);
    }
  });
}

Var relu(const Var& a) {
  return make_op(a.val().cwiseMax(0.0), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat mask = (self.parents[0]->val.array() > 0.0).cast<double>();
    self.parents[0]->accumulate(self.grad.cwiseProduct(mask));
  });
}

Var gelu(const Var& a) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Mat v = a.val().unaryExpr(
      [inv_sqrt2](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return make_op(std::move(v), {a}, [inv_sqrt2](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    Mat d = self.parents[0]->val.unaryExpr([&](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
             x * inv_sqrt2pi * std::exp(-0.5 * x * x);
    });
    self.parents[0]->accumulate(self.grad.cwiseProduct(d));
  });
}

Var abs_val(const Var& a) {
  return make_op(a.val().cwiseAbs(), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat s = self.parents[0]->val.unaryExpr(
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    self.parents[0]->accumulate(self.grad.cwiseProduct(s));
  });
}

Var log_sigmoid(const Var& a) {
  Mat v = a.val().unaryExpr([](double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  });
  return make_op(std::move(v), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat d = self.parents[0]->val.unaryExpr([](double x) { return sigmoid(-x); });
    self.parents[0]->accumulate(self.grad.cwiseProduct(d));
  });
}

Var softmax_rows(const Var& a) {
  Mat p = a.val();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  Mat p_cache = p;
  return make_op(std::move(p), {a}, [p_cache](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat gx(p_cache.rows(), p_cache.cols());
    for (Eigen::Index i = 0; i < p_cache.rows(); ++i) {
      const double dot = self.grad.row(i).dot(p_cache.row(i));
      gx.row(i) =
          p_cache.row(i).cwiseProduct(self.grad.row(i).array().matrix()) -
          p_cache.row(i) * dot;
    }
    self.parents[0]->accumulate(gx);
  });
}

Var layernorm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index T = x.rows(), d = x.cols();
  AKD_CHECK(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 &&
                bias.cols() == d,
            "layernorm: gain/bias must be 1x", d);
  Mat xhat(T, d);
  Vec inv_std(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double mu = x.val().row(i).mean();
    const double var = (x.val().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.val().row(i).array() - mu) * inv_std(i);
  }
  Mat y = xhat.array().rowwise() * gain.val().row(0).array();
  y.rowwise() += bias.val().row(0);
  return make_op(std::move(y), {x, gain, bias},
                 [xhat, inv_std](Node& self) {
                   const Mat& g = self.grad;
                   if (self.parents[1]->requires_grad)
                     self.parents[1]->accumulate(
                         g.cwiseProduct(xhat).colwise().sum());
                   if (self.parents[2]->requires_grad)
                     self.parents[2]->accumulate(g.colwise().sum());
                   if (!self.parents[0]->requires_grad) return;
                   const Mat& gamma = self.parents[1]->val;
                   Mat gxhat = g.array().rowwise() * gamma.row(0).array();
                   Mat gx(xhat.rows(), xhat.cols());
                   for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                     const double m1 = gxhat.row(i).mean();
                     const double m2 = gxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                     gx.row(i) = inv_std(i) * (gxhat.row(i).array() - m1 -
                                               xhat.row(i).array() * m2);
                   }
                   self.parents[0]->accumulate(gx);
                 });
}

Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n) {
  AKD_CHECK(c0 >= 0 && n > 0 && c0 + n <= a.cols(), "slice_cols: out of range");
  return make_op(a.val().middleCols(c0, n), {a}, [c0, n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat g = Mat::Zero(self.parents[0]->val.rows(), self.parents[0]->val.cols());
    g.middleCols(c0, n) = self.grad;
    self.parents[0]->accumulate(g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  AKD_CHECK(!parts.empty(), "concat_cols: empty");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    AKD_CHECK(p.rows() == parts[0].rows(), "concat_cols: row mismatch");
    total += p.cols();
  }
  Mat v(parts[0].rows(), total);
  std::vector<Eigen::Index> offs;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.val();
    offs.push_back(off);
    off += p.cols();
  }
  return make_op(std::move(v), parts, [offs](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      if (!self.parents[i]->requires_grad) continue;
      self.parents[i]->accumulate(
          self.grad.middleCols(offs[i], self.parents[i]->val.cols()));
    }
  });
}

Var gather_rows(const Var& a, const std::vector<Eigen::Index>& rows) {
  Mat v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    AKD_CHECK(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows: out of range");
    v.row(static_cast<Eigen::Index>(i)) = a.val().row(rows[i]);
  }
  return make_op(std::move(v), {a}, [rows](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat g = Mat::Zero(self.parents[0]->val.rows(), self.parents[0]->val.cols());
    for (size_t i = 0; i < rows.size(); ++i)
      g.row(rows[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    self.parents[0]->accumulate(g);
  });
}

Var top_rows(const Var& a, Eigen::Index n) {
  AKD_CHECK(n > 0 && n <= a.rows(), "top_rows: bad row count ", n, " of ",
            a.rows());
  if (n == a.rows()) return a;
  return make_op(a.val().topRows(n), {a}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat g = Mat::Zero(self.parents[0]->val.rows(), self.parents[0]->val.cols());
    g.topRows(n) = self.grad;
    self.parents[0]->accumulate(g);
  });
}

Var mean_pool_rows2(const Var& a) {
  AKD_CHECK(a.rows() >= 2, "mean_pool_rows2: need at least 2 rows");
  const Eigen::Index To = a.rows() / 2;
  Mat v(To, a.cols());
  for (Eigen::Index i = 0; i < To; ++i)
    v.row(i) = 0.5 * (a.val().row(2 * i) + a.val().row(2 * i + 1));
  return make_op(std::move(v), {a}, [To](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat g = Mat::Zero(self.parents[0]->val.rows(), self.parents[0]->val.cols());
    for (Eigen::Index i = 0; i < To; ++i) {
      g.row(2 * i) = 0.5 * self.grad.row(i);
      g.row(2 * i + 1) = 0.5 * self.grad.row(i);
    }
    self.parents[0]->accumulate(g);
  });
}

Var row_sum(const Var& a) {
  Mat v = a.val().rowwise().sum();
  return make_op(std::move(v), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    self.parents[0]->accumulate(
        self.grad.col(0).replicate(1, self.parents[0]->val.cols()));
  });
}

Var sum_all(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.val().sum();
  return make_op(std::move(v), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    self.parents[0]->accumulate(Mat::Constant(self.parents[0]->val.rows(),
                                              self.parents[0]->val.cols(),
                                              self.grad(0, 0)));
  });
}

Var mean_all(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.val().mean();
  return make_op(std::move(v), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const double s =
        self.grad(0, 0) / static_cast<double>(self.parents[0]->val.size());
    self.parents[0]->accumulate(Mat::Constant(
        self.parents[0]->val.rows(), self.parents[0]->val.cols(), s));
  });
}

Var replace_rows(const Var& a, const std::vector<Eigen::Index>& rows,
                 const Var& fill) {
  AKD_CHECK(fill.rows() == 1 && fill.cols() == a.cols(),
            "replace_rows: fill must be 1x", a.cols());
  Mat v = a.val();
  for (Eigen::Index r : rows) {
    AKD_CHECK(r >= 0 && r < a.rows(), "replace_rows: row out of range");
    v.row(r) = fill.val().row(0);
  }
  return make_op(std::move(v), {a, fill}, [rows](Node& self) {
    if (self.parents[0]->requires_grad) {
      Mat g = self.grad;
      for (Eigen::Index r : rows) g.row(r).setZero();
      self.parents[0]->accumulate(g);
    }
    if (self.parents[1]->requires_grad) {
      Mat gf = Mat::Zero(1, self.grad.cols());
      for (Eigen::Index r : rows) gf.row(0) += self.grad.row(r);
      self.parents[1]->accumulate(gf);
    }
  });
}

Var dropout(const Var& a, double p, Rng& rng) {
  AKD_CHECK(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (p == 0.0) return a;
  const double scale = 1.0 / (1.0 - p);
  Mat mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = rng.uniform() >= p ? scale : 0.0;
  Mat v = a.val().cwiseProduct(mask);
  return make_op(std::move(v), {a}, [mask](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    self.parents[0]->accumulate(self.grad.cwiseProduct(mask));
  });
}

Var rel_pos_bias(const Var& proj, Eigen::Index seq_len, int max_dist) {
  AKD_CHECK(proj.cols() == 2 * max_dist + 1,
            "rel_pos_bias: proj must have 2*max_dist+1 columns");
  AKD_CHECK(proj.rows() == seq_len, "rel_pos_bias: proj rows must equal seq_len");
  const Eigen::Index T = seq_len;
  Mat v(T, T);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < T; ++j) {
      long rel = static_cast<long>(j - i);
      rel = std::clamp(rel, -static_cast<long>(max_dist),
                       static_cast<long>(max_dist));
      v(i, j) = proj.val()(i, rel + max_dist);
    }
  return make_op(std::move(v), {proj}, [T, max_dist](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat g = Mat::Zero(T, 2 * max_dist + 1);
    for (Eigen::Index i = 0; i < T; ++i)
      for (Eigen::Index j = 0; j < T; ++j) {
        long rel = std::clamp(static_cast<long>(j - i),
                              -static_cast<long>(max_dist),
                              static_cast<long>(max_dist));
        g(i, rel + max_dist) += self.grad(i, j);
      }
    self.parents[0]->accumulate(g);
  });
}

namespace {

// im2col for one channel group: rows are output steps, cols are (tap k,
// channel c) pairs. Out-of-range input rows contribute zeros.
Mat im2col_group(const Mat& x, Eigen::Index c0, Eigen::Index cg, int kernel,
                 int stride, int pad, Eigen::Index t_out) {
  Mat m = Mat::Zero(t_out, static_cast<Eigen::Index>(kernel) * cg);
  for (Eigen::Index t = 0; t < t_out; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t * stride + k - pad;
      if (src < 0 || src >= x.rows()) continue;
      m.block(t, static_cast<Eigen::Index>(k) * cg, 1, cg) =
          x.block(src, c0, 1, cg);
    }
  }
  return m;
}

}  // namespace

Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel,
           int stride, int pad, int groups) {
  const Eigen::Index T = x.rows(), cin = x.cols();
  AKD_CHECK(groups >= 1 && cin % groups == 0, "conv1d: cin ", cin,
            " not divisible by groups ", groups);
  const Eigen::Index cg = cin / groups;
  AKD_CHECK(weight.rows() == static_cast<Eigen::Index>(kernel) * cg,
            "conv1d: weight rows must be kernel*cin/groups");
  const Eigen::Index cout = weight.cols();
  AKD_CHECK(cout % groups == 0, "conv1d: cout not divisible by groups");
  const Eigen::Index cog = cout / groups;
  AKD_CHECK(bias.rows() == 1 && bias.cols() == cout, "conv1d: bad bias shape");
  const Eigen::Index t_out = (T + 2 * pad - kernel) / stride + 1;
  AKD_CHECK(t_out >= 1, "conv1d: input too short (", T, " rows, kernel ",
            kernel, ")");

  Mat v(t_out, cout);
  for (int g = 0; g < groups; ++g) {
    Mat cols = im2col_group(x.val(), g * cg, cg, kernel, stride, pad, t_out);
    v.middleCols(g * cog, cog) = cols * weight.val().middleCols(g * cog, cog);
  }
  v.rowwise() += bias.val().row(0);

  return make_op(
      std::move(v), {x, weight, bias},
      [kernel, stride, pad, groups, cg, cog, t_out](Node& self) {
        const Mat& g = self.grad;
        const Mat& xv = self.parents[0]->val;
        const Mat& wv = self.parents[1]->val;
        if (self.parents[2]->requires_grad)
          self.parents[2]->accumulate(g.colwise().sum());
        Mat gw, gx;
        const bool need_w = self.parents[1]->requires_grad;
        const bool need_x = self.parents[0]->requires_grad;
        if (need_w) gw = Mat::Zero(wv.rows(), wv.cols());
        if (need_x) gx = Mat::Zero(xv.rows(), xv.cols());
        for (int grp = 0; grp < groups; ++grp) {
          const Mat gout = g.middleCols(grp * cog, cog);
          if (need_w) {
            Mat cols =
                im2col_group(xv, grp * cg, cg, kernel, stride, pad, t_out);
            gw.middleCols(grp * cog, cog) = cols.transpose() * gout;
          }
          if (need_x) {
            // d x = col2im of gout * W^T
            Mat gcols = gout * wv.middleCols(grp * cog, cog).transpose();
            for (Eigen::Index t = 0; t < t_out; ++t)
              for (int k = 0; k < kernel; ++k) {
                const Eigen::Index src = t * stride + k - pad;
                if (src < 0 || src >= xv.rows()) continue;
                gx.block(src, grp * cg, 1, cg) +=
                    gcols.block(t, static_cast<Eigen::Index>(k) * cg, 1, cg);
              }
          }
        }
        if (need_w) self.parents[1]->accumulate(gw);
        if (need_x) self.parents[0]->accumulate(gx);
      });
}

Var row_cosine(const Var& a, const Mat& target, long* degenerate_count) {
  AKD_CHECK(a.rows() == target.rows() && a.cols() == target.cols(),
            "row_cosine: shape mismatch ", a.rows(), "x", a.cols(), " vs ",
            target.rows(), "x", target.cols());
  auto tgt = std::make_shared<const Mat>(target);
  const Eigen::Index T = a.rows();
  Mat v(T, 1);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double na = a.val().row(i).norm();
    const double nt = tgt->row(i).norm();
    if (na < kZeroNorm || nt < kZeroNorm) {
      v(i, 0) = 0.0;
      if (degenerate_count) ++(*degenerate_count);
    } else {
      v(i, 0) = a.val().row(i).dot(tgt->row(i)) / (na * nt);
    }
  }
  Mat cos_cache = v;
  return make_op(std::move(v), {a}, [tgt, cos_cache](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const Mat& av = self.parents[0]->val;
    Mat gx = Mat::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      const double na = av.row(i).norm();
      const double nt = tgt->row(i).norm();
      if (na < kZeroNorm || nt < kZeroNorm) continue;
      const double c = cos_cache(i, 0);
      gx.row(i) = self.grad(i, 0) *
                  (tgt->row(i) / (na * nt) - av.row(i) * (c / (na * na)));
    }
    self.parents[0]->accumulate(gx);
  });
}

Var softmax_xent(const Var& logits, const std::vector<int>& labels) {
  const Eigen::Index N = logits.rows(), C = logits.cols();
  AKD_CHECK(static_cast<Eigen::Index>(labels.size()) == N,
            "softmax_xent: label count mismatch");
  Mat p = logits.val();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    AKD_CHECK(labels[i] >= 0 && labels[i] < C, "softmax_xent: bad label");
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    const double z = p.row(i).sum();
    p.row(i) /= z;
    loss -= std::log(std::max(p(i, labels[i]), 1e-300));
  }
  loss /= static_cast<double>(N);
  Mat v(1, 1);
  v(0, 0) = loss;
  Mat p_cache = p;
  return make_op(std::move(v), {logits}, [p_cache, labels](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Mat g = p_cache;
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, labels[i]) -= 1.0;
    g *= self.grad(0, 0) / static_cast<double>(g.rows());
    self.parents[0]->accumulate(g);
  });
}

namespace {

double safe_cos(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

Var infonce_rows(const Var& pred, const Mat& target, const Mat& pool,
                 const std::vector<std::vector<Eigen::Index>>& neg_idx,
                 double temperature) {
  AKD_CHECK(temperature > 0.0, "infonce: temperature must be positive");
  AKD_CHECK(pred.rows() == target.rows() && pred.cols() == target.cols(),
            "infonce: pred/target shape mismatch");
  AKD_CHECK(pool.cols() == pred.cols(), "infonce: pool dim mismatch");
  AKD_CHECK(static_cast<Eigen::Index>(neg_idx.size()) == pred.rows(),
            "infonce: neg_idx rows mismatch");
  const Eigen::Index T = pred.rows();
  auto tgt = std::make_shared<const Mat>(target);
  auto pl = std::make_shared<const Mat>(pool);
  Mat v(T, 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    AKD_CHECK(!neg_idx[t].empty(), "infonce: empty negative set");
    std::vector<double> logits;
    logits.push_back(safe_cos(pred.val().row(t), tgt->row(t)) / temperature);
    for (Eigen::Index j : neg_idx[t]) {
      AKD_CHECK(j >= 0 && j < pl->rows(), "infonce: negative index out of range");
      logits.push_back(safe_cos(pred.val().row(t), pl->row(j)) / temperature);
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    v(t, 0) = std::log(z) + m - logits[0];
  }
  return make_op(
      std::move(v), {pred},
      [tgt, pl, neg_idx, temperature](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Mat& pv = self.parents[0]->val;
        Mat gx = Mat::Zero(pv.rows(), pv.cols());
        for (Eigen::Index t = 0; t < pv.rows(); ++t) {
          const Eigen::Index n = static_cast<Eigen::Index>(neg_idx[t].size());
          std::vector<double> logits(n + 1);
          logits[0] = safe_cos(pv.row(t), tgt->row(t)) / temperature;
          for (Eigen::Index i = 0; i < n; ++i)
            logits[i + 1] =
                safe_cos(pv.row(t), pl->row(neg_idx[t][i])) / temperature;
          const double m = *std::max_element(logits.begin(), logits.end());
          double z = 0.0;
          for (double l : logits) z += std::exp(l - m);
          // d loss / d logit_j = softmax_j - [j == 0]
          const double np = pv.row(t).norm();
          for (Eigen::Index j = 0; j <= n; ++j) {
            const double soft = std::exp(logits[j] - m) / z;
            const double coef =
                self.grad(t, 0) * (soft - (j == 0 ? 1.0 : 0.0)) / temperature;
            const Eigen::Ref<const Eigen::RowVectorXd> other =
                j == 0 ? tgt->row(t) : pl->row(neg_idx[t][j - 1]);
            const double no = other.norm();
            if (np < kZeroNorm || no < kZeroNorm) continue;
            const double c = pv.row(t).dot(other) / (np * no);
            gx.row(t) +=
                coef * (other / (np * no) - pv.row(t) * (c / (np * np)));
          }
        }
        self.parents[0]->accumulate(gx);
      });
}

}  // namespace akd::ad
