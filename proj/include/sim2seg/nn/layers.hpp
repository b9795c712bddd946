#pragma once

#include <random>
#include <string>
#include <vector>

#include "sim2seg/nn/autograd.hpp"

namespace sim2seg::nn {

template <typename Scalar>
struct NamedParam {
  std::string name;
  Var<Scalar> var;
};

template <typename Scalar>
using ParamList = std::vector<NamedParam<Scalar>>;

struct ForwardOptions {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // required when train is set and dropout is used
};

/// Weights ~ N(0, std), biases zero.
template <typename Scalar>
Tensor<Scalar> gaussian_tensor(const typename Tensor<Scalar>::Shape& shape, double std,
                               std::mt19937_64& rng) {
  Tensor<Scalar> t(shape);
  std::normal_distribution<double> dist(0.0, std);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = static_cast<Scalar>(dist(rng));
  return t;
}

/// Convolution layer; `transpose` selects a fractionally strided conv.
template <typename Scalar>
struct Conv {
  Var<Scalar> weight;
  Var<Scalar> bias;
  int stride = 1;
  int pad = 0;
  int output_pad = 0;
  bool transpose = false;

  static Conv make(int in, int out, int k, int stride, int pad, std::mt19937_64& rng,
                   bool transpose = false, int output_pad = 0) {
    Conv c;
    const std::array<int, 4> shape = transpose ? std::array<int, 4>{in, out, k, k}
                                               : std::array<int, 4>{out, in, k, k};
    c.weight = parameter(gaussian_tensor<Scalar>(shape, 0.02, rng));
    c.bias = parameter(Tensor<Scalar>(1, out, 1, 1));
    c.stride = stride;
    c.pad = pad;
    c.transpose = transpose;
    c.output_pad = output_pad;
    return c;
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return transpose ? conv_transpose2d(x, weight, bias, stride, pad, output_pad)
                     : conv2d(x, weight, bias, stride, pad);
  }

  void collect(ParamList<Scalar>& out, const std::string& name) const {
    out.push_back({name + ".weight", weight});
    out.push_back({name + ".bias", bias});
  }
};

/// Residual encoder-decoder: 7x7 stem, two stride-2 downsamplings, `blocks`
/// residual blocks, two upsamplings, 7x7 head with tanh.
template <typename Scalar>
class ResnetGenerator {
 public:
  ResnetGenerator() = default;
  ResnetGenerator(int in_channels, int out_channels, int ngf, int blocks, std::mt19937_64& rng) {
    stem_ = Conv<Scalar>::make(in_channels, ngf, 7, 1, 0, rng);
    down1_ = Conv<Scalar>::make(ngf, 2 * ngf, 3, 2, 1, rng);
    down2_ = Conv<Scalar>::make(2 * ngf, 4 * ngf, 3, 2, 1, rng);
    for (int i = 0; i < blocks; ++i) {
      res_.push_back({Conv<Scalar>::make(4 * ngf, 4 * ngf, 3, 1, 0, rng),
                      Conv<Scalar>::make(4 * ngf, 4 * ngf, 3, 1, 0, rng)});
    }
    up1_ = Conv<Scalar>::make(4 * ngf, 2 * ngf, 3, 2, 1, rng, true, 1);
    up2_ = Conv<Scalar>::make(2 * ngf, ngf, 3, 2, 1, rng, true, 1);
    head_ = Conv<Scalar>::make(ngf, out_channels, 7, 1, 0, rng);
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    auto h = relu(instance_norm(stem_(reflect_pad(x, 3))));
    h = relu(instance_norm(down1_(h)));
    h = relu(instance_norm(down2_(h)));
    for (const auto& [a, b] : res_) {
      auto r = relu(instance_norm(a(reflect_pad(h, 1))));
      r = instance_norm(b(reflect_pad(r, 1)));
      h = add(h, r);
    }
    h = relu(instance_norm(up1_(h)));
    h = relu(instance_norm(up2_(h)));
    return tanh(head_(reflect_pad(h, 3)));
  }

  ParamList<Scalar> parameters() const {
    ParamList<Scalar> out;
    stem_.collect(out, "stem");
    down1_.collect(out, "down1");
    down2_.collect(out, "down2");
    for (std::size_t i = 0; i < res_.size(); ++i) {
      res_[i].first.collect(out, "res" + std::to_string(i) + ".a");
      res_[i].second.collect(out, "res" + std::to_string(i) + ".b");
    }
    up1_.collect(out, "up1");
    up2_.collect(out, "up2");
    head_.collect(out, "head");
    return out;
  }

 private:
  Conv<Scalar> stem_, down1_, down2_, up1_, up2_, head_;
  std::vector<std::pair<Conv<Scalar>, Conv<Scalar>>> res_;
};

/// Patch classifier: 4x4 convs, `layers` stride-2 stages then two stride-1
/// stages. With layers = 3 each logit sees a 70x70 input window.
template <typename Scalar>
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(int in_channels, int ndf, int layers, std::mt19937_64& rng) {
    int prev = ndf;
    convs_.push_back(Conv<Scalar>::make(in_channels, ndf, 4, 2, 1, rng));
    for (int i = 1; i < layers; ++i) {
      const int next = ndf * std::min(1 << i, 8);
      convs_.push_back(Conv<Scalar>::make(prev, next, 4, 2, 1, rng));
      prev = next;
    }
    const int next = ndf * std::min(1 << layers, 8);
    convs_.push_back(Conv<Scalar>::make(prev, next, 4, 1, 1, rng));
    convs_.push_back(Conv<Scalar>::make(next, 1, 4, 1, 1, rng));
  }

  /// Raw patch logits, [N,1,h,w].
  Var<Scalar> operator()(const Var<Scalar>& x) const {
    auto h = leaky_relu(convs_.front()(x), Scalar(0.2));
    for (std::size_t i = 1; i + 1 < convs_.size(); ++i) {
      h = leaky_relu(instance_norm(convs_[i](h)), Scalar(0.2));
    }
    return convs_.back()(h);
  }

  ParamList<Scalar> parameters() const {
    ParamList<Scalar> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(out, "conv" + std::to_string(i));
    return out;
  }

 private:
  std::vector<Conv<Scalar>> convs_;
};

/// Structural probes for the U-Net.
struct UNetAblation {
  bool zero_bottleneck = false;
  bool zero_first_skip = false;
};

/// Encoder-decoder with skip connections; `levels` stride-2 stages, so the
/// input side must be divisible by 2^levels.
template <typename Scalar>
class UNetGenerator {
 public:
  UNetGenerator() = default;
  UNetGenerator(int in_channels, int out_channels, int ngf, int levels, double dropout,
                std::mt19937_64& rng)
      : levels_(levels), dropout_(static_cast<Scalar>(dropout)) {
    if (levels < 2) throw Error(ErrorKind::kConfig, "U-Net needs at least 2 levels");
    auto ch = [ngf](int i) { return ngf * std::min(1 << i, 8); };
    enc_.push_back(Conv<Scalar>::make(in_channels, ch(0), 4, 2, 1, rng));
    for (int i = 1; i < levels; ++i) enc_.push_back(Conv<Scalar>::make(ch(i - 1), ch(i), 4, 2, 1, rng));
    // dec_[i] maps level i back to level i-1's resolution.
    dec_.resize(levels);
    for (int i = levels - 1; i >= 1; --i) {
      const int in = i == levels - 1 ? ch(i) : 2 * ch(i);
      dec_[i] = Conv<Scalar>::make(in, ch(i - 1), 4, 2, 1, rng, true);
    }
    dec_[0] = Conv<Scalar>::make(2 * ch(0), out_channels, 4, 2, 1, rng, true);
  }

  int levels() const { return levels_; }

  Var<Scalar> operator()(const Var<Scalar>& x, const ForwardOptions& opt = {},
                         const UNetAblation& ablation = {}) const {
    const int side = 1 << levels_;
    if (x->value.h() % side != 0 || x->value.w() % side != 0) {
      throw Error(ErrorKind::kShape, "U-Net input side must be divisible by " + std::to_string(side));
    }
    std::vector<Var<Scalar>> skips;
    auto h = enc_[0](x);
    skips.push_back(h);
    for (int i = 1; i < levels_; ++i) {
      h = enc_[i](leaky_relu(h, Scalar(0.2)));
      if (i < levels_ - 1) h = instance_norm(h);
      skips.push_back(h);
    }
    if (ablation.zero_bottleneck) h = scale(h, Scalar(0));
    for (int i = levels_ - 1; i >= 1; --i) {
      h = instance_norm(dec_[i](relu(h)));
      if (i < levels_ - 1 && i >= levels_ - 4 && opt.train && dropout_ > 0) {
        h = dropout(h, dropout_, true, *opt.rng);
      }
      auto skip = skips[i - 1];
      if (i == 1 && ablation.zero_first_skip) skip = scale(skip, Scalar(0));
      h = concat_channels(h, skip);
    }
    return tanh(dec_[0](relu(h)));
  }

  ParamList<Scalar> parameters() const {
    ParamList<Scalar> out;
    for (std::size_t i = 0; i < enc_.size(); ++i) enc_[i].collect(out, "enc" + std::to_string(i));
    for (std::size_t i = 0; i < dec_.size(); ++i) dec_[i].collect(out, "dec" + std::to_string(i));
    return out;
  }

 private:
  int levels_ = 0;
  Scalar dropout_ = 0;
  std::vector<Conv<Scalar>> enc_;
  std::vector<Conv<Scalar>> dec_;
};

}  // namespace sim2seg::nn
