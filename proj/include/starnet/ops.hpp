#pragma once

// The differentiable operator set used by the network: convolutions,
// activations, channel concatenation, elementwise arithmetic, padding and the
// reductions the losses are built from. Activations are N x C x H x W.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "starnet/tensor.hpp"

namespace starnet {

struct Conv2dGeometry {
  int stride = 1;
  int padding = 0;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col has (C*kh*kw) rows and (oh*ow) columns.
template <typename T>
void im2col(const T* img, int channels, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, T* col) {
  const int cols = oh * ow;
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = col + (static_cast<std::size_t>(c) * kh * kw + i * kw + j) * cols;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + i;
          T* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * stride - pad + j;
            dst[x] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im(const T* col, int channels, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, T* img) {
  const int cols = oh * ow;
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* row = col + (static_cast<std::size_t>(c) * kh * kw + i * kw + j) * cols;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + i;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * stride - pad + j;
            if (ix >= 0 && ix < w) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

inline void expect_rank4(const Shape& s, const char* what) {
  STARNET_EXPECT(s.size() == 4, std::string(what) + " must be rank 4 (NxCxHxW), got " + shape_str(s));
}

}  // namespace detail

// Cross-correlation with zero padding. weight is [Cout, Cin, kh, kw].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dGeometry geo = {}) {
  detail::expect_rank4(input.shape(), "conv2d input");
  detail::expect_rank4(weight.shape(), "conv2d weight");
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  STARNET_EXPECT(weight.dim(1) == cin, "conv2d: input has " + std::to_string(cin) + " channels but weight expects " +
                                           std::to_string(weight.dim(1)));
  STARNET_EXPECT(bias.numel() == static_cast<std::size_t>(cout), "conv2d: bias length must equal output channels");
  STARNET_EXPECT(geo.stride >= 1 && geo.padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
  STARNET_EXPECT(h + 2 * geo.padding >= kh && w + 2 * geo.padding >= kw, "conv2d: kernel larger than padded input");
  const int oh = detail::conv_out_size(h, kh, geo.stride, geo.padding);
  const int ow = detail::conv_out_size(w, kw, geo.stride, geo.padding);
  const int k = cin * kh * kw, p = oh * ow;

  std::vector<T> out(static_cast<std::size_t>(n) * cout * p);
  std::vector<T> col(static_cast<std::size_t>(k) * p);
  detail::ConstMatMap<T> wm(weight.data().data(), cout, k);
  for (int s = 0; s < n; ++s) {
    detail::im2col(input.data().data() + static_cast<std::size_t>(s) * cin * h * w, cin, h, w, kh, kw, geo.stride,
                   geo.padding, oh, ow, col.data());
    detail::MatMap<T> om(out.data() + static_cast<std::size_t>(s) * cout * p, cout, p);
    om.noalias() = wm * detail::ConstMatMap<T>(col.data(), k, p);
    for (int c = 0; c < cout; ++c) om.row(c).array() += bias.data()[c];
  }

  return make_result<T>(
      "conv2d", {n, cout, oh, ow}, std::move(out), {input.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [=](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        Node<T>& wt = *self.parents[1];
        Node<T>& b = *self.parents[2];
        std::vector<T> colbuf(static_cast<std::size_t>(k) * p);
        detail::ConstMatMap<T> wmat(wt.data.data(), cout, k);
        for (int s = 0; s < n; ++s) {
          detail::ConstMatMap<T> g(self.grad.data() + static_cast<std::size_t>(s) * cout * p, cout, p);
          if (wt.requires_grad) {
            detail::im2col(x.data.data() + static_cast<std::size_t>(s) * cin * h * w, cin, h, w, kh, kw, geo.stride,
                           geo.padding, oh, ow, colbuf.data());
            detail::MatMap<T> gw(wt.ensure_grad().data(), cout, k);
            gw.noalias() += wt.grad_scale * (g * detail::ConstMatMap<T>(colbuf.data(), k, p).transpose());
          }
          if (b.requires_grad) {
            auto& gb = b.ensure_grad();
            // plain loop: Eigen's vectorized sum depends on the buffer's alignment
            const T* gp = self.grad.data() + static_cast<std::size_t>(s) * cout * p;
            for (int c = 0; c < cout; ++c) {
              T acc = T(0);
              for (int i = 0; i < p; ++i) acc += gp[static_cast<std::size_t>(c) * p + i];
              gb[c] += b.grad_scale * acc;
            }
          }
          if (x.requires_grad) {
            detail::MatMap<T> cm(colbuf.data(), k, p);
            cm.noalias() = wmat.transpose() * g;
            detail::col2im(colbuf.data(), cin, h, w, kh, kw, geo.stride, geo.padding, oh, ow,
                           x.ensure_grad().data() + static_cast<std::size_t>(s) * cin * h * w);
          }
        }
      });
}

// Transposed convolution (the adjoint of conv2d w.r.t. its input). weight is
// [Cin, Cout, kh, kw]; output size is (H-1)*stride - 2*padding + kh.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                                Conv2dGeometry geo = {}) {
  detail::expect_rank4(input.shape(), "conv_transpose2d input");
  detail::expect_rank4(weight.shape(), "conv_transpose2d weight");
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  STARNET_EXPECT(weight.dim(0) == cin, "conv_transpose2d: input has " + std::to_string(cin) +
                                           " channels but weight expects " + std::to_string(weight.dim(0)));
  STARNET_EXPECT(bias.numel() == static_cast<std::size_t>(cout), "conv_transpose2d: bias length must equal output channels");
  STARNET_EXPECT(geo.stride >= 1 && geo.padding >= 0, "conv_transpose2d: stride must be >= 1 and padding >= 0");
  const int oh = (h - 1) * geo.stride - 2 * geo.padding + kh;
  const int ow = (w - 1) * geo.stride - 2 * geo.padding + kw;
  STARNET_EXPECT(oh > 0 && ow > 0, "conv_transpose2d: non-positive output size");
  const int k = cout * kh * kw, p = h * w;

  std::vector<T> out(static_cast<std::size_t>(n) * cout * oh * ow, T(0));
  std::vector<T> col(static_cast<std::size_t>(k) * p);
  detail::ConstMatMap<T> wm(weight.data().data(), cin, k);
  for (int s = 0; s < n; ++s) {
    detail::MatMap<T> cm(col.data(), k, p);
    cm.noalias() = wm.transpose() * detail::ConstMatMap<T>(input.data().data() + static_cast<std::size_t>(s) * cin * p, cin, p);
    T* dst = out.data() + static_cast<std::size_t>(s) * cout * oh * ow;
    detail::col2im(col.data(), cout, oh, ow, kh, kw, geo.stride, geo.padding, h, w, dst);
    for (int c = 0; c < cout; ++c) {
      T* plane = dst + static_cast<std::size_t>(c) * oh * ow;
      const T bv = bias.data()[c];
      for (int i = 0; i < oh * ow; ++i) plane[i] += bv;
    }
  }

  return make_result<T>(
      "conv_transpose2d", {n, cout, oh, ow}, std::move(out), {input.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [=](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        Node<T>& wt = *self.parents[1];
        Node<T>& b = *self.parents[2];
        std::vector<T> colbuf(static_cast<std::size_t>(k) * p);
        detail::ConstMatMap<T> wmat(wt.data.data(), cin, k);
        for (int s = 0; s < n; ++s) {
          const T* g = self.grad.data() + static_cast<std::size_t>(s) * cout * oh * ow;
          detail::im2col(g, cout, oh, ow, kh, kw, geo.stride, geo.padding, h, w, colbuf.data());
          detail::ConstMatMap<T> gc(colbuf.data(), k, p);
          if (wt.requires_grad) {
            detail::MatMap<T> gw(wt.ensure_grad().data(), cin, k);
            gw.noalias() += wt.grad_scale *
                            (detail::ConstMatMap<T>(x.data.data() + static_cast<std::size_t>(s) * cin * p, cin, p) *
                             gc.transpose());
          }
          if (b.requires_grad) {
            auto& gb = b.ensure_grad();
            for (int c = 0; c < cout; ++c) {
              T acc = T(0);
              for (int i = 0; i < oh * ow; ++i) acc += g[static_cast<std::size_t>(c) * oh * ow + i];
              gb[c] += b.grad_scale * acc;
            }
          }
          if (x.requires_grad) {
            detail::MatMap<T> gx(x.ensure_grad().data() + static_cast<std::size_t>(s) * cin * p, cin, p);
            gx.noalias() += wmat * gc;
          }
        }
      });
}

// Which side of the kink each element of a piecewise-linear op (relu,
// prelu, absolute error) falls on. With a tape installed the sides seen in a
// recording pass are replayed by later passes, so a perturbed evaluation
// stays on the same linear piece. Used by the gradient checker.
struct BranchTape {
  enum class Mode { Record, Replay };
  Mode mode = Mode::Record;
  std::vector<std::vector<signed char>> sides;
  std::size_t cursor = 0;
};

namespace detail {

inline BranchTape*& branch_tape() {
  thread_local BranchTape* tape = nullptr;
  return tape;
}

// Empty when no tape is installed; callers then use the plain sign.
template <typename T, typename F>
std::vector<signed char> branch_sides(std::size_t n, F&& value_at) {
  BranchTape* tape = branch_tape();
  if (!tape) return {};
  if (tape->mode == BranchTape::Mode::Replay) {
    STARNET_EXPECT(tape->cursor < tape->sides.size() && tape->sides[tape->cursor].size() == n,
                   "branch tape replay does not match the recorded graph");
    return tape->sides[tape->cursor++];
  }
  std::vector<signed char> sides(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T v = value_at(i);
    sides[i] = v > T(0) ? 1 : (v < T(0) ? -1 : 0);
  }
  tape->sides.push_back(sides);
  return sides;
}

}  // namespace detail

class BranchTapeScope {
 public:
  BranchTapeScope(BranchTape& tape, BranchTape::Mode mode) : prev_(detail::branch_tape()) {
    tape.mode = mode;
    tape.cursor = 0;
    if (mode == BranchTape::Mode::Record) tape.sides.clear();
    detail::branch_tape() = &tape;
  }
  ~BranchTapeScope() { detail::branch_tape() = prev_; }
  BranchTapeScope(const BranchTapeScope&) = delete;
  BranchTapeScope& operator=(const BranchTapeScope&) = delete;

 private:
  BranchTape* prev_;
};

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  const auto side = detail::branch_sides<T>(out.size(), [&](std::size_t i) { return in[i]; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (side.empty() ? in[i] > T(0) : side[i] > 0) ? in[i] : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    Node<T>& a = *self.parents[0];
    auto& ga = a.ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (a.data[i] > T(0)) ga[i] += self.grad[i];
  });
}

// slope is a single learned scalar shared by the whole tensor.
template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& x, const BasicTensor<T>& slope) {
  STARNET_EXPECT(slope.numel() == 1, "prelu: slope must be a single scalar");
  const T a = slope.data()[0];
  std::vector<T> out(x.numel());
  const auto in = x.data();
  const auto side = detail::branch_sides<T>(out.size(), [&](std::size_t i) { return in[i]; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (side.empty() ? in[i] > T(0) : side[i] > 0) ? in[i] : a * in[i];
  return make_result<T>("prelu", x.shape(), std::move(out), {x.node_ptr(), slope.node_ptr()}, [](Node<T>& self) {
    Node<T>& xin = *self.parents[0];
    Node<T>& sl = *self.parents[1];
    const T av = sl.data[0];
    if (xin.requires_grad) {
      auto& gx = xin.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xin.data[i] > T(0) ? self.grad[i] : av * self.grad[i];
    }
    if (sl.requires_grad) {
      T acc = T(0);
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xin.data[i] <= T(0)) acc += xin.data[i] * self.grad[i];
      sl.ensure_grad()[0] += sl.grad_scale * acc;
    }
  });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  STARNET_EXPECT(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  STARNET_EXPECT(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.data()[i];
  return make_result<T>("scale", a.shape(), std::move(out), {a.node_ptr()}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

// Channel concatenation in argument order. All inputs share N, H and W.
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs) {
  STARNET_EXPECT(!inputs.empty(), "concat_channels: no inputs");
  for (const auto& t : inputs) detail::expect_rank4(t.shape(), "concat_channels input");
  const int n = inputs[0].dim(0), h = inputs[0].dim(2), w = inputs[0].dim(3);
  int ctotal = 0;
  std::vector<int> channels;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& t : inputs) {
    STARNET_EXPECT(t.dim(0) == n && t.dim(2) == h && t.dim(3) == w,
                   "concat_channels: " + shape_str(t.shape()) + " does not match " + shape_str(inputs[0].shape()));
    channels.push_back(t.dim(1));
    ctotal += t.dim(1);
    parents.push_back(t.node_ptr());
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> out(static_cast<std::size_t>(n) * ctotal * plane);
  for (int s = 0; s < n; ++s) {
    std::size_t offset = static_cast<std::size_t>(s) * ctotal * plane;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::size_t len = channels[i] * plane;
      const T* src = inputs[i].data().data() + static_cast<std::size_t>(s) * len;
      std::copy(src, src + len, out.begin() + offset);
      offset += len;
    }
  }
  return make_result<T>("concat_channels", {n, ctotal, h, w}, std::move(out), std::move(parents),
                        [=](Node<T>& self) {
                          for (int s = 0; s < n; ++s) {
                            std::size_t offset = static_cast<std::size_t>(s) * ctotal * plane;
                            for (std::size_t i = 0; i < channels.size(); ++i) {
                              const std::size_t len = channels[i] * plane;
                              Node<T>& p = *self.parents[i];
                              if (p.requires_grad) {
                                T* dst = p.ensure_grad().data() + static_cast<std::size_t>(s) * len;
                                for (std::size_t j = 0; j < len; ++j) dst[j] += self.grad[offset + j];
                              }
                              offset += len;
                            }
                          }
                        });
}

// Reflect-pads the bottom and right edges (no edge repeat, like numpy "reflect").
template <typename T>
BasicTensor<T> pad_reflect(const BasicTensor<T>& x, int pad_bottom, int pad_right) {
  detail::expect_rank4(x.shape(), "pad_reflect input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  STARNET_EXPECT(pad_bottom >= 0 && pad_right >= 0 && pad_bottom < h && pad_right < w,
                 "pad_reflect: padding must be smaller than the input");
  if (pad_bottom == 0 && pad_right == 0) return x;
  const int oh = h + pad_bottom, ow = w + pad_right;
  auto src_index = [](int i, int len) { return i < len ? i : 2 * (len - 1) - i; };
  std::vector<T> out(static_cast<std::size_t>(n) * c * oh * ow);
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx)
        out[(static_cast<std::size_t>(p) * oh + y) * ow + xx] =
            x.data()[(static_cast<std::size_t>(p) * h + src_index(y, h)) * w + src_index(xx, w)];
  return make_result<T>("pad_reflect", {n, c, oh, ow}, std::move(out), {x.node_ptr()}, [=](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (int p = 0; p < n * c; ++p)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
          g[(static_cast<std::size_t>(p) * h + src_index(y, h)) * w + src_index(xx, w)] +=
              self.grad[(static_cast<std::size_t>(p) * oh + y) * ow + xx];
  });
}

// Keeps the top-left out_h x out_w window.
template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& x, int out_h, int out_w) {
  detail::expect_rank4(x.shape(), "crop input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  STARNET_EXPECT(out_h > 0 && out_w > 0 && out_h <= h && out_w <= w, "crop: window exceeds input");
  if (out_h == h && out_w == w) return x;
  std::vector<T> out(static_cast<std::size_t>(n) * c * out_h * out_w);
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < out_h; ++y)
      std::copy_n(x.data().data() + (static_cast<std::size_t>(p) * h + y) * w, out_w,
                  out.begin() + (static_cast<std::size_t>(p) * out_h + y) * out_w);
  return make_result<T>("crop", {n, c, out_h, out_w}, std::move(out), {x.node_ptr()}, [=](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (int p = 0; p < n * c; ++p)
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx)
          g[(static_cast<std::size_t>(p) * h + y) * w + xx] += self.grad[(static_cast<std::size_t>(p) * out_h + y) * out_w + xx];
  });
}

// sum(|a - b|) / normalizer.
template <typename T>
BasicTensor<T> abs_error_sum(const BasicTensor<T>& a, const BasicTensor<T>& b, T normalizer) {
  STARNET_EXPECT(a.shape() == b.shape(), "abs_error_sum: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto side = detail::branch_sides<T>(a.numel(), [&](std::size_t i) { return a.data()[i] - b.data()[i]; });
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += side.empty() ? std::abs(d) : side[i] * d;
  }
  return make_result<T>("abs_error_sum", {1}, {static_cast<T>(acc / normalizer)}, {a.node_ptr(), b.node_ptr()},
                        [normalizer](Node<T>& self) {
                          Node<T>& pa = *self.parents[0];
                          Node<T>& pb = *self.parents[1];
                          const T g = self.grad[0] / normalizer;
                          for (std::size_t i = 0; i < pa.data.size(); ++i) {
                            const T d = pa.data[i] - pb.data[i];
                            const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
                            if (pa.requires_grad) pa.ensure_grad()[i] += s;
                            if (pb.requires_grad) pb.ensure_grad()[i] -= s;
                          }
                        });
}

// sum((a - b)^2) / normalizer.
template <typename T>
BasicTensor<T> squared_error_sum(const BasicTensor<T>& a, const BasicTensor<T>& b, T normalizer) {
  STARNET_EXPECT(a.shape() == b.shape(),
                 "squared_error_sum: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  return make_result<T>("squared_error_sum", {1}, {static_cast<T>(acc / normalizer)}, {a.node_ptr(), b.node_ptr()},
                        [normalizer](Node<T>& self) {
                          Node<T>& pa = *self.parents[0];
                          Node<T>& pb = *self.parents[1];
                          const T g = T(2) * self.grad[0] / normalizer;
                          for (std::size_t i = 0; i < pa.data.size(); ++i) {
                            const T d = g * (pa.data[i] - pb.data[i]);
                            if (pa.requires_grad) pa.ensure_grad()[i] += d;
                            if (pb.requires_grad) pb.ensure_grad()[i] -= d;
                          }
                        });
}

// Sum of all elements (used to probe gradients in tests and to build losses).
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  double acc = 0;
  for (T v : a.data()) acc += v;
  return make_result<T>("sum", {1}, {static_cast<T>(acc)}, {a.node_ptr()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

// Inner product <a, w> with w a constant weight tensor.
template <typename T>
BasicTensor<T> dot_const(const BasicTensor<T>& a, const std::vector<T>& w) {
  STARNET_EXPECT(w.size() == a.numel(), "dot_const: length mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += static_cast<double>(a.data()[i]) * w[i];
  return make_result<T>("dot_const", {1}, {static_cast<T>(acc)}, {a.node_ptr()}, [w](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

}  // namespace starnet
