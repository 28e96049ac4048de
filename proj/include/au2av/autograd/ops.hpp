#pragma once

#include <vector>

#include "au2av/autograd/var.hpp"

namespace au2av::ag {

Var constant(Tensor value);
Var scalar(double v);

// Elementwise arithmetic with numpy-style broadcasting.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope = 0.2);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
/// log(1 + e^x), computed stably.
Var softplus(const Var& x);
/// Gradient passes only where lo < x < hi.
Var clamp(const Var& x, double lo, double hi);

/// Sum / mean of every element, returned as a rank-0 scalar.
Var sum(const Var& x);
Var mean(const Var& x);
/// Reductions over `axes`; reduced axes are kept with size 1.
Var sum(const Var& x, const std::vector<int>& axes);
Var mean(const Var& x, const std::vector<int>& axes);
/// Maximum over `axes`; the gradient goes to the first maximal element.
Var max(const Var& x, const std::vector<int>& axes);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<int>& order);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& x, int axis, int begin, int end);

/// [m,k] x [k,n].
Var matmul(const Var& a, const Var& b);
/// x[N,in] * w[out,in]^T + b[out]. `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);

struct ConvOptions {
  int stride = 1;
  int padding = 0;
};

/// x[N,C,H,W] conv w[O,C,KH,KW] (+ b[O]); zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, ConvOptions opts = {});
/// Non-overlapping `factor` x `factor` mean pooling. H and W must be divisible.
Var avg_pool2d(const Var& x, int factor);
Var upsample_nearest2d(const Var& x, int factor);
/// Bilinear resize with half-pixel centres (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);

}  // namespace au2av::ag
