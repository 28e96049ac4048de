#include <Eigen/Core>

#include "au2av/autograd/ops.hpp"
#include "au2av/error.hpp"

namespace au2av::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  int channels, height, width;
  int kh, kw;
  int stride, padding;
  int out_h, out_w;

  int patch() const { return channels * kh * kw; }
  int out_plane() const { return out_h * out_w; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const int plane = g.out_plane();
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix < 0 || ix >= g.width) ? 0.0 : src[ix];
          }
        }
      }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
  const int plane = g.out_plane();
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          double* dst = x + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0))
    throw ValidationError("matmul shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  MapMat(out.ptr(), m, n).noalias() = ConstMapMat(a.value().ptr(), m, k) * ConstMapMat(b.value().ptr(), k, n);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    ConstMapMat g(self.grad.ptr(), m, n);
    if (na.requires_grad)
      MapMat(na.grad_buffer().ptr(), m, k).noalias() += g * ConstMapMat(nb.value.ptr(), k, n).transpose();
    if (nb.requires_grad)
      MapMat(nb.grad_buffer().ptr(), k, n).noalias() += ConstMapMat(na.value.ptr(), m, k).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.value().rank() != 2 || w.value().rank() != 2 || x.dim(1) != w.dim(1))
    throw ValidationError("linear shape mismatch " + shape_string(x.shape()) + " with weight " +
                          shape_string(w.shape()));
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  const bool has_bias = b.defined();
  if (has_bias && (b.value().rank() != 1 || b.dim(0) != out_dim)) throw ValidationError("linear bias shape mismatch");
  Tensor out(Shape{n, out_dim});
  MapMat y(out.ptr(), n, out_dim);
  y.noalias() = ConstMapMat(x.value().ptr(), n, in) * ConstMapMat(w.value().ptr(), out_dim, in).transpose();
  if (has_bias) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().ptr(), out_dim);
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(out), std::move(inputs), [n, in, out_dim, has_bias](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    ConstMapMat g(self.grad.ptr(), n, out_dim);
    if (nx.requires_grad)
      MapMat(nx.grad_buffer().ptr(), n, in).noalias() += g * ConstMapMat(nw.value.ptr(), out_dim, in);
    if (nw.requires_grad)
      MapMat(nw.grad_buffer().ptr(), out_dim, in).noalias() += g.transpose() * ConstMapMat(nx.value.ptr(), n, in);
    if (has_bias && self.inputs[2]->requires_grad)
      Eigen::Map<Eigen::RowVectorXd>(self.inputs[2]->grad_buffer().ptr(), out_dim) += g.colwise().sum();
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, ConvOptions opts) {
  if (x.value().rank() != 4 || w.value().rank() != 4)
    throw ValidationError("conv2d expects NCHW input and OCKK weight");
  if (x.dim(1) != w.dim(1))
    throw ValidationError("conv2d channel mismatch: input " + shape_string(x.shape()) + ", weight " +
                          shape_string(w.shape()));
  if (opts.stride < 1 || opts.padding < 0) throw ValidationError("conv2d invalid stride/padding");
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), opts.stride, opts.padding, 0, 0};
  g.out_h = (g.height + 2 * g.padding - g.kh) / g.stride + 1;
  g.out_w = (g.width + 2 * g.padding - g.kw) / g.stride + 1;
  if (g.out_h < 1 || g.out_w < 1) throw ValidationError("conv2d input smaller than kernel: " + shape_string(x.shape()));
  const int batch = x.dim(0), out_ch = w.dim(0);
  const bool has_bias = b.defined();
  if (has_bias && (b.value().rank() != 1 || b.dim(0) != out_ch)) throw ValidationError("conv2d bias shape mismatch");

  const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(out_ch) * g.out_plane();
  Tensor out(Shape{batch, out_ch, g.out_h, g.out_w});
  RowMat cols(g.patch(), g.out_plane());
  ConstMapMat wm(w.value().ptr(), out_ch, g.patch());
  for (int n = 0; n < batch; ++n) {
    im2col(x.value().ptr() + n * in_stride, g, cols.data());
    MapMat y(out.ptr() + n * out_stride, out_ch, g.out_plane());
    y.noalias() = wm * cols;
    if (has_bias) y.colwise() += Eigen::Map<const Eigen::VectorXd>(b.value().ptr(), out_ch);
  }

  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(out), std::move(inputs), [g, batch, out_ch, in_stride, out_stride, has_bias](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    Node* nb = has_bias ? self.inputs[2].get() : nullptr;
    ConstMapMat wm(nw.value.ptr(), out_ch, g.patch());
    RowMat cols(g.patch(), g.out_plane());
    RowMat dcols;
    for (int n = 0; n < batch; ++n) {
      ConstMapMat gy(self.grad.ptr() + n * out_stride, out_ch, g.out_plane());
      if (nw.requires_grad) {
        im2col(nx.value.ptr() + n * in_stride, g, cols.data());
        MapMat(nw.grad_buffer().ptr(), out_ch, g.patch()).noalias() += gy * cols.transpose();
      }
      if (nb && nb->requires_grad)
        Eigen::Map<Eigen::VectorXd>(nb->grad_buffer().ptr(), out_ch) += gy.rowwise().sum();
      if (nx.requires_grad) {
        dcols.noalias() = wm.transpose() * gy;
        col2im_add(dcols.data(), g, nx.grad_buffer().ptr() + n * in_stride);
      }
    }
  });
}

}  // namespace au2av::ag
