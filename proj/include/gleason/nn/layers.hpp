#pragma once

// Dense building blocks for the segmentation network. Feature maps keep one
// column per pixel (channels x height*width, column index y*width + x) so a
// convolution is one GEMM against an im2col buffer.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gleason::nn {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct FeatureMap {
  Index height = 0;
  Index width = 0;
  Matrix<Scalar> values;  // channels x (height * width)

  FeatureMap() = default;
  FeatureMap(Index channels, Index h, Index w) : height(h), width(w), values(channels, h * w) {}
  FeatureMap(Index h, Index w, Matrix<Scalar> v) : height(h), width(w), values(std::move(v)) {
    if (values.cols() != h * w) throw std::invalid_argument("FeatureMap: column count mismatch");
  }

  Index channels() const { return values.rows(); }
  Index pixels() const { return height * width; }
};

/// A named trainable array and its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Index rows, Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)) {}
};

/// Fills `cols` (k*k*channels x h*w) with zero-padded dilated neighbourhoods.
template <typename Scalar>
void im2col(const Matrix<Scalar>& x, Index h, Index w, int kernel, int dilation,
            Matrix<Scalar>& cols) {
  const Index c = x.rows();
  const int half = kernel / 2;
  cols.setZero(kernel * kernel * c, h * w);
  for (int ky = 0; ky < kernel; ++ky)
    for (int kx = 0; kx < kernel; ++kx) {
      const Index dy = Index(ky - half) * dilation, dx = Index(kx - half) * dilation;
      const Index tap = Index(ky) * kernel + kx;
      const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
      if (x1 <= x0) continue;
      for (Index y = std::max<Index>(0, -dy); y < std::min<Index>(h, h - dy); ++y)
        cols.block(tap * c, y * w + x0, c, x1 - x0) = x.block(0, (y + dy) * w + x0 + dx, c, x1 - x0);
    }
}

/// Adjoint of im2col: scatters column gradients back onto the input grid.
template <typename Scalar>
void col2im(const Matrix<Scalar>& cols, Index channels, Index h, Index w, int kernel, int dilation,
            Matrix<Scalar>& x) {
  const int half = kernel / 2;
  x.setZero(channels, h * w);
  for (int ky = 0; ky < kernel; ++ky)
    for (int kx = 0; kx < kernel; ++kx) {
      const Index dy = Index(ky - half) * dilation, dx = Index(kx - half) * dilation;
      const Index tap = Index(ky) * kernel + kx;
      const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
      if (x1 <= x0) continue;
      for (Index y = std::max<Index>(0, -dy); y < std::min<Index>(h, h - dy); ++y)
        x.block(0, (y + dy) * w + x0 + dx, channels, x1 - x0) +=
            cols.block(tap * channels, y * w + x0, channels, x1 - x0);
    }
}

/// Same-padded square convolution with optional dilation (odd kernel).
template <typename Scalar>
class Conv2d {
 public:
  struct Cache {
    Matrix<Scalar> cols;  // im2col buffer, or the raw input for 1x1 kernels
    Index height = 0, width = 0;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, Index in_channels, Index out_channels, int kernel, int dilation = 1)
      : in_(in_channels), out_(out_channels), kernel_(kernel), dilation_(dilation),
        weight_(name + ".weight", out_channels, Index(kernel) * kernel * in_channels),
        bias_(name + ".bias", out_channels, 1) {
    if (in_channels < 1 || out_channels < 1) throw std::invalid_argument(name + ": empty channel count");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument(name + ": kernel must be odd");
    if (dilation < 1) throw std::invalid_argument(name + ": dilation must be >= 1");
  }

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int dilation() const { return dilation_; }
  /// Extent covered by one kernel application: k + (k - 1)(dilation - 1).
  int effective_extent() const { return kernel_ + (kernel_ - 1) * (dilation_ - 1); }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  const Parameter<Scalar>& bias() const { return bias_; }

  /// Uniform in +-sqrt(gain / fan_in); bias zero.
  void initialize(std::mt19937_64& rng, double gain = 6.0) {
    const double bound = std::sqrt(gain / double(weight_.value.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index j = 0; j < weight_.value.cols(); ++j)
      for (Index i = 0; i < weight_.value.rows(); ++i) weight_.value(i, j) = Scalar(dist(rng));
    bias_.value.setZero();
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache = nullptr) const {
    if (x.channels() != in_)
      throw std::invalid_argument(weight_.name + ": expected " + std::to_string(in_) +
                                  " input channels, got " + std::to_string(x.channels()));
    FeatureMap<Scalar> y(out_, x.height, x.width);
    if (kernel_ == 1) {
      y.values.noalias() = weight_.value * x.values;
      if (cache) cache->cols = x.values;
    } else {
      Matrix<Scalar> local;
      Matrix<Scalar>& cols = cache ? cache->cols : local;
      im2col(x.values, x.height, x.width, kernel_, dilation_, cols);
      y.values.noalias() = weight_.value * cols;
    }
    y.values.colwise() += bias_.value.col(0);
    if (cache) {
      cache->height = x.height;
      cache->width = x.width;
    }
    return y;
  }

  /// Accumulates parameter gradients and returns the input gradient.
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out, const Cache& cache) {
    weight_.grad.noalias() += grad_out.values * cache.cols.transpose();
    bias_.grad.col(0) += grad_out.values.rowwise().sum();
    FeatureMap<Scalar> grad_in(in_, cache.height, cache.width);
    if (kernel_ == 1) {
      grad_in.values.noalias() = weight_.value.transpose() * grad_out.values;
    } else {
      Matrix<Scalar> dcols = weight_.value.transpose() * grad_out.values;
      col2im(dcols, in_, cache.height, cache.width, kernel_, dilation_, grad_in.values);
    }
    return grad_in;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void collect(std::vector<const Parameter<Scalar>*>& out) const {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Index in_ = 0, out_ = 0;
  int kernel_ = 1, dilation_ = 1;
  Parameter<Scalar> weight_, bias_;
};

template <typename Scalar>
void relu_inplace(FeatureMap<Scalar>& x) {
  x.values = x.values.cwiseMax(Scalar(0));
}

/// Gradient through a ReLU given its output.
template <typename Scalar>
void relu_backward_inplace(FeatureMap<Scalar>& grad, const FeatureMap<Scalar>& output) {
  grad.values = (output.values.array() > Scalar(0)).select(grad.values, Scalar(0));
}

/// 2x2 max pooling with stride 2; even spatial sizes only.
template <typename Scalar>
class MaxPool2 {
 public:
  struct Cache {
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> argmax;  // source pixel per output entry
    Index height = 0, width = 0;
  };

  static FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache = nullptr) {
    if (x.height % 2 != 0 || x.width % 2 != 0)
      throw std::invalid_argument("max pool: spatial size must be even");
    const Index oh = x.height / 2, ow = x.width / 2, c = x.channels();
    FeatureMap<Scalar> y(c, oh, ow);
    if (cache) {
      cache->argmax.resize(c, oh * ow);
      cache->height = x.height;
      cache->width = x.width;
    }
    for (Index oy = 0; oy < oh; ++oy)
      for (Index ox = 0; ox < ow; ++ox) {
        const Index o = oy * ow + ox;
        const Index src[4] = {2 * oy * x.width + 2 * ox, 2 * oy * x.width + 2 * ox + 1,
                              (2 * oy + 1) * x.width + 2 * ox, (2 * oy + 1) * x.width + 2 * ox + 1};
        for (Index ch = 0; ch < c; ++ch) {
          Index best = src[0];
          Scalar v = x.values(ch, src[0]);
          for (int k = 1; k < 4; ++k)
            if (x.values(ch, src[k]) > v) {
              v = x.values(ch, src[k]);
              best = src[k];
            }
          y.values(ch, o) = v;
          if (cache) cache->argmax(ch, o) = best;
        }
      }
    return y;
  }

  static FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out, const Cache& cache) {
    FeatureMap<Scalar> g(grad_out.channels(), cache.height, cache.width);
    g.values.setZero();
    for (Index o = 0; o < grad_out.values.cols(); ++o)
      for (Index ch = 0; ch < grad_out.channels(); ++ch)
        g.values(ch, cache.argmax(ch, o)) += grad_out.values(ch, o);
    return g;
  }
};

/// Nearest-neighbour x2 upsampling.
template <typename Scalar>
FeatureMap<Scalar> upsample_nearest2(const FeatureMap<Scalar>& x) {
  const Index oh = 2 * x.height, ow = 2 * x.width;
  FeatureMap<Scalar> y(x.channels(), oh, ow);
  for (Index oy = 0; oy < oh; ++oy)
    for (Index ox = 0; ox < ow; ++ox) y.values.col(oy * ow + ox) = x.values.col((oy / 2) * x.width + ox / 2);
  return y;
}

template <typename Scalar>
FeatureMap<Scalar> upsample_nearest2_backward(const FeatureMap<Scalar>& grad_out) {
  const Index h = grad_out.height / 2, w = grad_out.width / 2;
  FeatureMap<Scalar> g(grad_out.channels(), h, w);
  g.values.setZero();
  for (Index oy = 0; oy < grad_out.height; ++oy)
    for (Index ox = 0; ox < grad_out.width; ++ox)
      g.values.col((oy / 2) * w + ox / 2) += grad_out.values.col(oy * grad_out.width + ox);
  return g;
}

/// Adaptive average pooling of an h x w grid onto s x s cells, as an
/// (s*s) x (h*w) averaging matrix. Cell i spans [floor(i h / s), ceil((i+1) h / s)).
template <typename Scalar>
Matrix<Scalar> adaptive_pool_matrix(Index h, Index w, Index s) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(s * s, h * w);
  for (Index i = 0; i < s; ++i) {
    const Index y0 = (i * h) / s, y1 = ((i + 1) * h + s - 1) / s;
    for (Index j = 0; j < s; ++j) {
      const Index x0 = (j * w) / s, x1 = ((j + 1) * w + s - 1) / s;
      const Scalar weight = Scalar(1) / Scalar((y1 - y0) * (x1 - x0));
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) m(i * s + j, y * w + x) = weight;
    }
  }
  return m;
}

/// Bilinear (half-pixel centres, edge-clamped) upsampling of an s x s grid
/// to h x w, as an (h*w) x (s*s) interpolation matrix.
template <typename Scalar>
Matrix<Scalar> bilinear_upsample_matrix(Index s, Index h, Index w) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(h * w, s * s);
  auto axis = [s](Index i, Index n, Index& lo, Index& hi, double& frac) {
    double src = (double(i) + 0.5) * double(s) / double(n) - 0.5;
    src = std::clamp(src, 0.0, double(s - 1));
    lo = static_cast<Index>(std::floor(src));
    hi = std::min(lo + 1, s - 1);
    frac = src - double(lo);
  };
  for (Index y = 0; y < h; ++y) {
    Index y0, y1;
    double fy;
    axis(y, h, y0, y1, fy);
    for (Index x = 0; x < w; ++x) {
      Index x0, x1;
      double fx;
      axis(x, w, x0, x1, fx);
      const Index row = y * w + x;
      m(row, y0 * s + x0) += Scalar((1 - fy) * (1 - fx));
      m(row, y0 * s + x1) += Scalar((1 - fy) * fx);
      m(row, y1 * s + x0) += Scalar(fy * (1 - fx));
      m(row, y1 * s + x1) += Scalar(fy * fx);
    }
  }
  return m;
}

}  // namespace gleason::nn
