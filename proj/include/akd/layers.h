// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Small trainable building blocks shared by the frontend, encoder and
// prediction heads. Weights are truncated-normal, biases zero, layer norm
// gain one.

#pragma once

#include <string>

#include "akd/autodiff.h"
#include "akd/common.h"

namespace akd {

inline Mat trunc_normal_mat(Rng& rng, Eigen::Index r, Eigen::Index c,
                            double std_dev) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.trunc_normal(std_dev);
  return m;
}

class Linear {
 public:
  Linear() = default;
  Linear(ad::ParamStore& ps, const std::string& prefix, int in, int out,
         Rng& rng, double init_std) {
    W_ = ps.add(prefix + ".weight", trunc_normal_mat(rng, in, out, init_std));
    b_ = ps.add(prefix + ".bias", Mat::Zero(1, out));
  }

  ad::Var forward(const ad::Var& x) const {
    return ad::add_rowvec(ad::matmul(x, W_), b_);
  }

  const ad::Var& weight() const { return W_; }
  const ad::Var& bias() const { return b_; }

 private:
  ad::Var W_, b_;
};

class LayerNormP {
 public:
  LayerNormP() = default;
  LayerNormP(ad::ParamStore& ps, const std::string& prefix, int dim) {
    g_ = ps.add(prefix + ".gain", Mat::Ones(1, dim));
    b_ = ps.add(prefix + ".bias", Mat::Zero(1, dim));
  }

  ad::Var forward(const ad::Var& x) const { return ad::layernorm(x, g_, b_); }

 private:
  ad::Var g_, b_;
};

class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(ad::ParamStore& ps, const std::string& prefix, int cin, int cout,
            int kernel, int stride, int pad, int groups, Rng& rng,
            double init_std)
      : kernel_(kernel), stride_(stride), pad_(pad), groups_(groups) {
    AKD_CHECK(cin % groups == 0 && cout % groups == 0,
              "conv layer: channels not divisible by groups");
    W_ = ps.add(prefix + ".weight",
                trunc_normal_mat(rng, static_cast<Eigen::Index>(kernel) * (cin / groups),
                                 cout, init_std));
    b_ = ps.add(prefix + ".bias", Mat::Zero(1, cout));
  }

  ad::Var forward(const ad::Var& x) const {
    return ad::conv1d(x, W_, b_, kernel_, stride_, pad_, groups_);
  }

 private:
  ad::Var W_, b_;
  int kernel_ = 0, stride_ = 1, pad_ = 0, groups_ = 1;
};

}  // namespace akd
