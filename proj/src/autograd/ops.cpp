#include "au2av/autograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "au2av/error.hpp"

namespace au2av::ag {
namespace {

using Strides = std::vector<std::size_t>;

struct BroadcastPlan {
  Shape out;
  Strides a_strides;
  Strides b_strides;
};

// Strides of `shape` left-padded to `rank`, zeroed on axes that broadcast.
Strides broadcast_strides(const Shape& shape, const Shape& out) {
  const int rank = static_cast<int>(out.size());
  const int offset = rank - static_cast<int>(shape.size());
  const Strides own = contiguous_strides(shape);
  Strides strides(rank, 0);
  for (int i = 0; i < rank; ++i) {
    const int j = i - offset;
    if (j >= 0 && shape[j] != 1) strides[i] = own[j];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  const int rank = static_cast<int>(std::max(a.size(), b.size()));
  Shape out(rank, 1);
  for (int i = 0; i < rank; ++i) {
    const int ia = i - (rank - static_cast<int>(a.size()));
    const int ib = i - (rank - static_cast<int>(b.size()));
    const int da = ia >= 0 ? a[ia] : 1;
    const int db = ib >= 0 ? b[ib] : 1;
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      throw ValidationError("shapes " + shape_string(a) + " and " + shape_string(b) + " do not broadcast");
    }
  }
  return {out, broadcast_strides(a, out), broadcast_strides(b, out)};
}

// Walks every index of `shape`, tracking two strided offsets.
template <class F>
void for_each_index(const Shape& shape, const Strides& sa, const Strides& sb, F&& f) {
  const std::size_t n = shape_numel(shape);
  const int rank = static_cast<int>(shape.size());
  if (rank == 0) {
    if (n == 1) f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<int> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, oa, ob);
    for (int d = rank - 1; d >= 0; --d) {
      if (++idx[d] < shape[d]) {
        oa += sa[d];
        ob += sb[d];
        break;
      }
      oa -= sa[d] * static_cast<std::size_t>(shape[d] - 1);
      ob -= sb[d] * static_cast<std::size_t>(shape[d] - 1);
      idx[d] = 0;
    }
  }
}

double* grad_ptr(Node& n) { return n.requires_grad ? n.grad_buffer().ptr() : nullptr; }

template <class Fwd, class DA, class DB>
Var binary(const Var& a, const Var& b, Fwd fwd, DA da, DB db) {
  const bool same = a.shape() == b.shape();
  BroadcastPlan plan = same ? BroadcastPlan{a.shape(), {}, {}} : plan_broadcast(a.shape(), b.shape());
  Tensor out(plan.out);
  const double* pa = a.value().ptr();
  const double* pb = b.value().ptr();
  double* po = out.ptr();
  if (same) {
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    for_each_index(plan.out, plan.a_strides, plan.b_strides,
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  }
  return make_result(std::move(out), {a, b}, [plan = std::move(plan), same, da, db](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* g = self.grad.ptr();
    const double* va = na.value.ptr();
    const double* vb = nb.value.ptr();
    double* ga = grad_ptr(na);
    double* gb = grad_ptr(nb);
    if (same) {
      for (std::size_t i = 0; i < self.value.numel(); ++i) {
        if (ga) ga[i] += g[i] * da(va[i], vb[i]);
        if (gb) gb[i] += g[i] * db(va[i], vb[i]);
      }
    } else {
      for_each_index(plan.out, plan.a_strides, plan.b_strides, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        if (ga) ga[ia] += g[i] * da(va[ia], vb[ib]);
        if (gb) gb[ib] += g[i] * db(va[ia], vb[ib]);
      });
    }
  });
}

// `deriv(x, y)` returns dy/dx given input x and output y.
template <class Fwd, class Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const double* px = x.value().ptr();
  double* po = out.ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = fwd(px[i]);
  return make_result(std::move(out), {x}, [deriv](Node& self) {
    Node& nx = *self.inputs[0];
    const double* g = self.grad.ptr();
    const double* vx = nx.value.ptr();
    const double* vy = self.value.ptr();
    double* gx = nx.grad_buffer().ptr();
    for (std::size_t i = 0; i < self.value.numel(); ++i) gx[i] += g[i] * deriv(vx[i], vy[i]);
  });
}

std::vector<int> normalize_axes(const std::vector<int>& axes, int rank) {
  std::vector<int> out;
  for (int a : axes) {
    const int n = a < 0 ? a + rank : a;
    if (n < 0 || n >= rank) throw ValidationError("reduction axis out of range");
    out.push_back(n);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct ReducePlan {
  Shape out;
  Strides in_strides;
  Strides out_strides;  // zero on reduced axes
  std::size_t count = 1;
};

ReducePlan plan_reduce(const Shape& in, const std::vector<int>& axes_raw) {
  const auto axes = normalize_axes(axes_raw, static_cast<int>(in.size()));
  ReducePlan plan;
  plan.out = in;
  for (int a : axes) {
    plan.count *= static_cast<std::size_t>(in[a]);
    plan.out[a] = 1;
  }
  plan.in_strides = contiguous_strides(in);
  plan.out_strides = contiguous_strides(plan.out);
  for (int a : axes) plan.out_strides[a] = 0;
  return plan;
}

void check_nchw(const Var& x, const char* op) {
  if (x.value().rank() != 4)
    throw ValidationError(std::string(op) + " expects an NCHW tensor, got " + shape_string(x.shape()));
}

}  // namespace

Var constant(Tensor value) { return Var(std::move(value), false); }
Var scalar(double v) { return Var(Tensor::scalar(v), false); }

Var operator+(const Var& a, const Var& b) {
  return binary(a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                [](double, double) { return 1.0; });
}

Var operator-(const Var& a, const Var& b) {
  return binary(a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                [](double, double) { return -1.0; });
}

Var operator*(const Var& a, const Var& b) {
  return binary(a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
                [](double x, double) { return x; });
}

Var operator/(const Var& a, const Var& b) {
  return binary(a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Var operator-(const Var& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator+(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) {
  return unary(a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}
Var operator*(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Var operator*(double s, const Var& a) { return a * s; }
Var operator/(const Var& a, double s) { return a * (1.0 / s); }

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(const Var& x) {
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var softplus(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var sum(const Var& x) {
  const auto& v = x.value().storage();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result(Tensor::scalar(total), {x}, [](Node& self) {
    Node& nx = *self.inputs[0];
    const double g = self.grad[0];
    for (double& gx : nx.grad_buffer().storage()) gx += g;
  });
}

Var mean(const Var& x) {
  if (x.numel() == 0) throw ValidationError("mean of an empty tensor");
  return sum(x) * (1.0 / static_cast<double>(x.numel()));
}

Var sum(const Var& x, const std::vector<int>& axes) {
  ReducePlan plan = plan_reduce(x.shape(), axes);
  Tensor out(plan.out, 0.0);
  const double* px = x.value().ptr();
  double* po = out.ptr();
  for_each_index(x.shape(), plan.in_strides, plan.out_strides,
                 [&](std::size_t, std::size_t ii, std::size_t io) { po[io] += px[ii]; });
  return make_result(std::move(out), {x}, [plan = std::move(plan)](Node& self) {
    Node& nx = *self.inputs[0];
    const double* g = self.grad.ptr();
    double* gx = nx.grad_buffer().ptr();
    for_each_index(nx.value.shape(), plan.in_strides, plan.out_strides,
                   [&](std::size_t, std::size_t ii, std::size_t io) { gx[ii] += g[io]; });
  });
}

Var mean(const Var& x, const std::vector<int>& axes) {
  const ReducePlan plan = plan_reduce(x.shape(), axes);
  if (plan.count == 0) throw ValidationError("mean over an empty axis");
  return sum(x, axes) * (1.0 / static_cast<double>(plan.count));
}

Var max(const Var& x, const std::vector<int>& axes) {
  ReducePlan plan = plan_reduce(x.shape(), axes);
  if (plan.count == 0) throw ValidationError("max over an empty axis");
  Tensor out(plan.out, 0.0);
  std::vector<std::size_t> arg(out.numel(), static_cast<std::size_t>(-1));
  const double* px = x.value().ptr();
  double* po = out.ptr();
  for_each_index(x.shape(), plan.in_strides, plan.out_strides, [&](std::size_t, std::size_t ii, std::size_t io) {
    if (arg[io] == static_cast<std::size_t>(-1) || px[ii] > po[io]) {
      po[io] = px[ii];
      arg[io] = ii;
    }
  });
  return make_result(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    Node& nx = *self.inputs[0];
    const double* g = self.grad.ptr();
    double* gx = nx.grad_buffer().ptr();
    for (std::size_t io = 0; io < arg.size(); ++io) gx[arg[io]] += g[io];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& nx = *self.inputs[0];
    double* gx = nx.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) gx[i] += g[i];
  });
}

Var permute(const Var& x, const std::vector<int>& order) {
  const Shape& in = x.shape();
  const int rank = static_cast<int>(in.size());
  if (static_cast<int>(order.size()) != rank) throw ValidationError("permute order has wrong length");
  std::vector<int> seen(rank, 0);
  Shape out_shape(rank);
  const Strides in_strides = contiguous_strides(in);
  Strides gathered(rank);
  for (int i = 0; i < rank; ++i) {
    const int src = order[i];
    if (src < 0 || src >= rank || seen[src]++) throw ValidationError("permute order is not a permutation");
    out_shape[i] = in[src];
    gathered[i] = in_strides[src];
  }
  Tensor out(out_shape);
  const double* px = x.value().ptr();
  double* po = out.ptr();
  const Strides unused(rank, 0);
  for_each_index(out_shape, gathered, unused, [&](std::size_t i, std::size_t ii, std::size_t) { po[i] = px[ii]; });
  return make_result(std::move(out), {x}, [out_shape, gathered, unused](Node& self) {
    Node& nx = *self.inputs[0];
    double* gx = nx.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    for_each_index(out_shape, gathered, unused, [&](std::size_t i, std::size_t ii, std::size_t) { gx[ii] += g[i]; });
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  const int rank = parts[0].value().rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ValidationError("concat axis out of range");
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != rank) throw ValidationError("concat rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && s[d] != parts[0].shape()[d])
        throw ValidationError("concat shape mismatch: " + shape_string(s) + " vs " + shape_string(parts[0].shape()));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(out_shape[d]);
  for (const auto& p : parts) widths.push_back(static_cast<std::size_t>(p.shape()[axis]) * inner);
  const std::size_t row = static_cast<std::size_t>(out_shape[axis]) * inner;

  Tensor out(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].value().ptr();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * widths[k], widths[k], out.ptr() + o * row + col);
    col += widths[k];
  }
  return make_result(std::move(out), parts, [widths, outer, row](Node& self) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& in = *self.inputs[k];
      if (in.requires_grad) {
        double* gi = in.grad_buffer().ptr();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < widths[k]; ++j) gi[o * widths[k] + j] += self.grad[o * row + col + j];
      }
      col += widths[k];
    }
  });
}

Var slice(const Var& x, int axis, int begin, int end) {
  const Shape& in = x.shape();
  const int rank = static_cast<int>(in.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank || begin < 0 || end > in[axis] || begin > end)
    throw ValidationError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                          shape_string(in));
  Shape out_shape = in;
  out_shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(in[d]);
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(in[d]);
  const std::size_t in_row = static_cast<std::size_t>(in[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(end - begin) * inner;
  const std::size_t start = static_cast<std::size_t>(begin) * inner;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.value().ptr() + o * in_row + start, out_row, out.ptr() + o * out_row);
  return make_result(std::move(out), {x}, [outer, in_row, out_row, start](Node& self) {
    Node& nx = *self.inputs[0];
    double* gx = nx.grad_buffer().ptr();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < out_row; ++j) gx[o * in_row + start + j] += self.grad[o * out_row + j];
  });
}

Var upsample_nearest2d(const Var& x, int factor) {
  check_nchw(x, "upsample_nearest2d");
  if (factor < 1) throw ValidationError("upsample factor must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{n, c, h * factor, w * factor});
  const Tensor& xv = x.value();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h * factor; ++y)
        for (int z = 0; z < w * factor; ++z) out.at(i, ch, y, z) = xv.at(i, ch, y / factor, z / factor);
  return make_result(std::move(out), {x}, [factor](Node& self) {
    Node& nx = *self.inputs[0];
    Tensor& gx = nx.grad_buffer();
    const Shape& s = self.value.shape();
    for (int i = 0; i < s[0]; ++i)
      for (int ch = 0; ch < s[1]; ++ch)
        for (int y = 0; y < s[2]; ++y)
          for (int z = 0; z < s[3]; ++z) gx.at(i, ch, y / factor, z / factor) += self.grad.at(i, ch, y, z);
  });
}

Var avg_pool2d(const Var& x, int factor) {
  check_nchw(x, "avg_pool2d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (factor < 1 || h % factor != 0 || w % factor != 0)
    throw ValidationError("avg_pool2d factor " + std::to_string(factor) + " does not divide " + shape_string(x.shape()));
  const int oh = h / factor, ow = w / factor;
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  Tensor out(Shape{n, c, oh, ow}, 0.0);
  const Tensor& xv = x.value();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int z = 0; z < w; ++z) out.at(i, ch, y / factor, z / factor) += xv.at(i, ch, y, z) * inv;
  return make_result(std::move(out), {x}, [factor, inv](Node& self) {
    Node& nx = *self.inputs[0];
    Tensor& gx = nx.grad_buffer();
    const Shape& s = nx.value.shape();
    for (int i = 0; i < s[0]; ++i)
      for (int ch = 0; ch < s[1]; ++ch)
        for (int y = 0; y < s[2]; ++y)
          for (int z = 0; z < s[3]; ++z) gx.at(i, ch, y, z) += self.grad.at(i, ch, y / factor, z / factor) * inv;
  });
}

namespace {

struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;
};

AxisTaps bilinear_taps(int in, int out) {
  AxisTaps taps;
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    taps.lo.push_back(lo);
    taps.hi.push_back(hi);
    taps.w_hi.push_back(src - lo);
  }
  return taps;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  check_nchw(x, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be positive");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  AxisTaps ty = bilinear_taps(h, out_h);
  AxisTaps tx = bilinear_taps(w, out_w);
  Tensor out(Shape{n, c, out_h, out_w});
  const Tensor& xv = x.value();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < out_h; ++y) {
        const double wy = ty.w_hi[y];
        for (int z = 0; z < out_w; ++z) {
          const double wx = tx.w_hi[z];
          const double top = xv.at(i, ch, ty.lo[y], tx.lo[z]) * (1 - wx) + xv.at(i, ch, ty.lo[y], tx.hi[z]) * wx;
          const double bot = xv.at(i, ch, ty.hi[y], tx.lo[z]) * (1 - wx) + xv.at(i, ch, ty.hi[y], tx.hi[z]) * wx;
          out.at(i, ch, y, z) = top * (1 - wy) + bot * wy;
        }
      }
  return make_result(std::move(out), {x}, [ty = std::move(ty), tx = std::move(tx)](Node& self) {
    Node& nx = *self.inputs[0];
    Tensor& gx = nx.grad_buffer();
    const Shape& s = self.value.shape();
    for (int i = 0; i < s[0]; ++i)
      for (int ch = 0; ch < s[1]; ++ch)
        for (int y = 0; y < s[2]; ++y) {
          const double wy = ty.w_hi[y];
          for (int z = 0; z < s[3]; ++z) {
            const double wx = tx.w_hi[z];
            const double g = self.grad.at(i, ch, y, z);
            gx.at(i, ch, ty.lo[y], tx.lo[z]) += g * (1 - wy) * (1 - wx);
            gx.at(i, ch, ty.lo[y], tx.hi[z]) += g * (1 - wy) * wx;
            gx.at(i, ch, ty.hi[y], tx.lo[z]) += g * wy * (1 - wx);
            gx.at(i, ch, ty.hi[y], tx.hi[z]) += g * wy * wx;
          }
        }
  });
}

}  // namespace au2av::ag
