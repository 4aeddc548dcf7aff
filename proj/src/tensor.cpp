#include "gaitcontour/tensor.hpp"

#include <zlib.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "gaitcontour/errors.hpp"

namespace gaitcontour::nc {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeMismatch(msg);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a->shape == b->shape; }

}  // namespace

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeMismatch("non-positive dim in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor make_tensor(std::vector<int> shape, std::vector<double> value, bool requires_grad,
                   std::string name) {
  if (shape_numel(shape) != value.size())
    throw ShapeMismatch("value size " + std::to_string(value.size()) + " does not fill " +
                        shape_str(shape));
  auto t = std::make_shared<TensorNode>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->requires_grad = requires_grad;
  t->name = std::move(name);
  return t;
}

Tensor zeros(std::vector<int> shape, bool requires_grad, std::string name) {
  std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad,
                     std::move(name));
}

BnParams make_bn(int channels, const std::string& name) {
  BnParams bn;
  bn.gamma = make_tensor({channels}, std::vector<double>(channels, 1.0), true, name + ".gamma");
  bn.beta = make_tensor({channels}, std::vector<double>(channels, 0.0), true, name + ".beta");
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

Tensor Tape::record(std::vector<int> shape, std::vector<double> value,
                    const std::vector<Tensor>& inputs, std::function<void()> back) {
  Tensor out = make_tensor(std::move(shape), std::move(value));
  for (const Tensor& in : inputs)
    if (in->requires_grad) {
      out->requires_grad = true;
      break;
    }
  if (out->requires_grad) steps_.push_back({out, std::move(back)});
  return out;
}

// ---- elementwise / structural ------------------------------------------------

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require(same_shape(a, b), "add: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  std::vector<double> v(a->numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] + b->value[i];
  Tensor out = record(a->shape, std::move(v), {a, b}, nullptr);
  if (out->requires_grad) {
    steps_.back().back = [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
      }
    };
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require(same_shape(a, b), "sub: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  std::vector<double> v(a->numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] - b->value[i];
  Tensor out = record(a->shape, std::move(v), {a, b}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] -= out->grad[i];
      }
    };
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require(same_shape(a, b), "mul: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  std::vector<double> v(a->numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] * b->value[i];
  Tensor out = record(a->shape, std::move(v), {a, b}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->value[i];
      }
    };
  return out;
}

Tensor Tape::mul_scalar(const Tensor& a, double s) {
  std::vector<double> v(a->numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] * s;
  Tensor out = record(a->shape, std::move(v), {a}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [a, s, out]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * s;
    };
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a->numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] + s;
  Tensor out = record(a->shape, std::move(v), {a}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [a, out]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
    };
  return out;
}

Tensor Tape::add_channels(const Tensor& x, const Tensor& v) {
  require(v->shape.size() == 1, "add_channels: v must be rank 1");
  int c = v->shape[0];
  require(!x->shape.empty() && x->shape.back() == c,
          "add_channels: trailing dim of " + shape_str(x->shape) + " != " + std::to_string(c));
  std::vector<double> y(x->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x->value[i] + v->value[i % c];
  Tensor out = record(x->shape, std::move(y), {x, v}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, v, c, out]() {
      if (x->requires_grad) {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
      }
      if (v->requires_grad) {
        v->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) v->grad[i % c] += out->grad[i];
      }
    };
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> y(x->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
  Tensor out = record(x->shape, std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        if (x->value[i] > 0.0) x->grad[i] += out->grad[i];
    };
  return out;
}

Tensor Tape::sqrt_eps(const Tensor& x, double eps) {
  std::vector<double> y(x->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sqrt(x->value[i] + eps);
  Tensor out = record(x->shape, std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        x->grad[i] += out->grad[i] * 0.5 / out->value[i];
    };
  return out;
}

Tensor Tape::reshape(const Tensor& x, std::vector<int> shape) {
  require(shape_numel(shape) == x->numel(),
          "reshape: " + shape_str(x->shape) + " -> " + shape_str(shape));
  Tensor out = record(std::move(shape), x->value, {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
    };
  return out;
}

Tensor Tape::transpose_last2(const Tensor& x) {
  require(x->shape.size() >= 2, "transpose_last2: rank must be >= 2");
  std::vector<int> shape = x->shape;
  int m = shape[shape.size() - 2], n = shape[shape.size() - 1];
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::size_t batch = x->numel() / (static_cast<std::size_t>(m) * n);
  std::vector<double> y(x->numel());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = x->value.data() + b * m * n;
    double* dst = y.data() + b * m * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
  }
  Tensor out = record(std::move(shape), std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, m, n, batch, out]() {
      x->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* g = out->grad.data() + b * m * n;
        double* dst = x->grad.data() + b * m * n;
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < m; ++i) dst[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
      }
    };
  return out;
}

Tensor Tape::permute_0213(const Tensor& x) {
  require(x->shape.size() == 4, "permute_0213: rank must be 4");
  int a = x->shape[0], b = x->shape[1], c = x->shape[2], d = x->shape[3];
  std::vector<double> y(x->numel());
  auto src_idx = [b, c, d](int i, int j, int k, int l) {
    return ((static_cast<std::size_t>(i) * b + j) * c + k) * d + l;
  };
  auto dst_idx = [b, c, d](int i, int k, int j, int l) {
    return ((static_cast<std::size_t>(i) * c + k) * b + j) * d + l;
  };
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      for (int k = 0; k < c; ++k)
        for (int l = 0; l < d; ++l) y[dst_idx(i, k, j, l)] = x->value[src_idx(i, j, k, l)];
  Tensor out = record({a, c, b, d}, std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, a, b, c, d, src_idx, dst_idx, out]() {
      x->ensure_grad();
      for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
          for (int k = 0; k < c; ++k)
            for (int l = 0; l < d; ++l)
              x->grad[src_idx(i, j, k, l)] += out->grad[dst_idx(i, k, j, l)];
    };
  return out;
}

Tensor Tape::concat(const std::vector<Tensor>& xs, int dim) {
  require(!xs.empty(), "concat: empty input list");
  const std::vector<int>& s0 = xs[0]->shape;
  require(dim >= 0 && dim < static_cast<int>(s0.size()), "concat: bad dim");
  int total = 0;
  for (const Tensor& x : xs) {
    require(x->shape.size() == s0.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (static_cast<int>(i) != dim)
        require(x->shape[i] == s0[i], "concat: shape mismatch off-dim");
    total += x->shape[dim];
  }
  std::vector<int> shape = s0;
  shape[dim] = total;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= s0[i];
  for (std::size_t i = dim + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<double> y(shape_numel(shape));
  std::size_t row_out = static_cast<std::size_t>(total) * inner;
  std::size_t offset = 0;
  for (const Tensor& x : xs) {
    std::size_t chunk = static_cast<std::size_t>(x->shape[dim]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(y.data() + o * row_out + offset, x->value.data() + o * chunk,
                  chunk * sizeof(double));
    offset += chunk;
  }
  Tensor out = record(std::move(shape), std::move(y), xs, nullptr);
  if (out->requires_grad)
    steps_.back().back = [xs, outer, inner, row_out, out]() {
      std::size_t offset = 0;
      for (const Tensor& x : xs) {
        std::size_t c = x->numel() / outer;
        if (x->requires_grad) {
          x->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < c; ++i)
              x->grad[o * c + i] += out->grad[o * row_out + offset + i];
        }
        offset += c;
      }
    };
  return out;
}

Tensor Tape::narrow0(const Tensor& x, int start, int len) {
  require(!x->shape.empty(), "narrow0: rank must be >= 1");
  require(start >= 0 && len >= 1 && start + len <= x->shape[0], "narrow0: bad range");
  std::size_t inner = x->numel() / x->shape[0];
  std::vector<int> shape = x->shape;
  shape[0] = len;
  std::vector<double> y(x->value.begin() + start * inner,
                        x->value.begin() + (start + len) * inner);
  Tensor out = record(std::move(shape), std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, start, inner, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        x->grad[start * inner + i] += out->grad[i];
    };
  return out;
}

Tensor Tape::narrow1(const Tensor& x, int start, int len) {
  require(x->shape.size() >= 2, "narrow1: rank must be >= 2");
  int d0 = x->shape[0], d1 = x->shape[1];
  require(start >= 0 && len >= 1 && start + len <= d1, "narrow1: bad range");
  std::size_t inner = x->numel() / (static_cast<std::size_t>(d0) * d1);
  std::vector<int> shape = x->shape;
  shape[1] = len;
  std::vector<double> y(static_cast<std::size_t>(d0) * len * inner);
  for (int o = 0; o < d0; ++o)
    std::memcpy(y.data() + static_cast<std::size_t>(o) * len * inner,
                x->value.data() + (static_cast<std::size_t>(o) * d1 + start) * inner,
                static_cast<std::size_t>(len) * inner * sizeof(double));
  Tensor out = record(std::move(shape), std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, d0, d1, start, len, inner, out]() {
      x->ensure_grad();
      for (int o = 0; o < d0; ++o) {
        double* dst = x->grad.data() + (static_cast<std::size_t>(o) * d1 + start) * inner;
        const double* g = out->grad.data() + static_cast<std::size_t>(o) * len * inner;
        for (std::size_t i = 0; i < static_cast<std::size_t>(len) * inner; ++i) dst[i] += g[i];
      }
    };
  return out;
}

Tensor Tape::sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x->value) s += v;
  Tensor out = record({1}, {s}, {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0];
    };
  return out;
}

Tensor Tape::mean_axis0(const Tensor& x) {
  require(x->shape.size() >= 2, "mean_axis0: rank must be >= 2");
  int d0 = x->shape[0];
  std::vector<int> shape(x->shape.begin() + 1, x->shape.end());
  std::size_t rest = x->numel() / d0;
  std::vector<double> y(rest, 0.0);
  for (int d = 0; d < d0; ++d)
    for (std::size_t i = 0; i < rest; ++i) y[i] += x->value[d * rest + i];
  for (double& v : y) v /= d0;
  Tensor out = record(std::move(shape), std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, d0, rest, out]() {
      x->ensure_grad();
      for (int d = 0; d < d0; ++d)
        for (std::size_t i = 0; i < rest; ++i) x->grad[d * rest + i] += out->grad[i] / d0;
    };
  return out;
}

// ---- linear algebra ----------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require(a->shape.size() == 2 && b->shape.size() == 2, "matmul: both operands must be rank 2");
  int m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
  require(k == k2, "matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(k2));
  std::vector<double> y(static_cast<std::size_t>(m) * n);
  CMapM A(a->value.data(), m, k), B(b->value.data(), k, n);
  MapM(y.data(), m, n).noalias() = A * B;
  Tensor out = record({m, n}, std::move(y), {a, b}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [a, b, m, k, n, out]() {
      CMapM A(a->value.data(), m, k), B(b->value.data(), k, n), G(out->grad.data(), m, n);
      if (a->requires_grad) {
        a->ensure_grad();
        MapM(a->grad.data(), m, k).noalias() += G * B.transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        MapM(b->grad.data(), k, n).noalias() += A.transpose() * G;
      }
    };
  return out;
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(w->shape.size() == 2, "linear: weight must be rank 2");
  int k = w->shape[0], n = w->shape[1];
  require(!x->shape.empty() && x->shape.back() == k,
          "linear: " + shape_str(x->shape) + " x " + shape_str(w->shape));
  if (b) require(b->shape == std::vector<int>{n}, "linear: bias must be [" + std::to_string(n) + "]");
  std::size_t rows = x->numel() / k;
  std::vector<int> shape = x->shape;
  shape.back() = n;
  std::vector<double> y(rows * n);
  CMapM X(x->value.data(), rows, k), W(w->value.data(), k, n);
  MapM Y(y.data(), rows, n);
  Y.noalias() = X * W;
  if (b) {
    Eigen::Map<const Eigen::RowVectorXd> bias(b->value.data(), n);
    Y.rowwise() += bias;
  }
  std::vector<Tensor> ins = b ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  Tensor out = record(std::move(shape), std::move(y), ins, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, w, b, rows, k, n, out]() {
      CMapM X(x->value.data(), rows, k), W(w->value.data(), k, n), G(out->grad.data(), rows, n);
      if (x->requires_grad) {
        x->ensure_grad();
        MapM(x->grad.data(), rows, k).noalias() += G * W.transpose();
      }
      if (w->requires_grad) {
        w->ensure_grad();
        MapM(w->grad.data(), k, n).noalias() += X.transpose() * G;
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        Eigen::Map<Eigen::RowVectorXd>(b->grad.data(), n) += G.colwise().sum();
      }
    };
  return out;
}

Tensor Tape::bmm(const Tensor& a, const Tensor& b) {
  require(a->shape.size() == 3 && b->shape.size() == 3, "bmm: both operands must be rank 3");
  int bt = a->shape[0], m = a->shape[1], k = a->shape[2];
  require(b->shape[0] == bt && b->shape[1] == k,
          "bmm: " + shape_str(a->shape) + " x " + shape_str(b->shape));
  int n = b->shape[2];
  std::vector<double> y(static_cast<std::size_t>(bt) * m * n);
  for (int i = 0; i < bt; ++i) {
    CMapM A(a->value.data() + static_cast<std::size_t>(i) * m * k, m, k);
    CMapM B(b->value.data() + static_cast<std::size_t>(i) * k * n, k, n);
    MapM(y.data() + static_cast<std::size_t>(i) * m * n, m, n).noalias() = A * B;
  }
  Tensor out = record({bt, m, n}, std::move(y), {a, b}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [a, b, bt, m, k, n, out]() {
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int i = 0; i < bt; ++i) {
        CMapM A(a->value.data() + static_cast<std::size_t>(i) * m * k, m, k);
        CMapM B(b->value.data() + static_cast<std::size_t>(i) * k * n, k, n);
        CMapM G(out->grad.data() + static_cast<std::size_t>(i) * m * n, m, n);
        if (a->requires_grad)
          MapM(a->grad.data() + static_cast<std::size_t>(i) * m * k, m, k).noalias() +=
              G * B.transpose();
        if (b->requires_grad)
          MapM(b->grad.data() + static_cast<std::size_t>(i) * k * n, k, n).noalias() +=
              A.transpose() * G;
      }
    };
  return out;
}

// ---- neural ops ---------------------------------------------------------------

Tensor Tape::softmax(const Tensor& x, int dim) {
  require(dim >= 0 && dim < static_cast<int>(x->shape.size()), "softmax: bad dim");
  int d = x->shape[dim];
  std::size_t inner = 1, outer = 1;
  for (int i = 0; i < dim; ++i) outer *= x->shape[i];
  for (std::size_t i = dim + 1; i < x->shape.size(); ++i) inner *= x->shape[i];

  std::vector<double> y(x->numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * d * inner + in;
      double mx = x->value[base];
      for (int j = 1; j < d; ++j) mx = std::max(mx, x->value[base + j * inner]);
      double sum = 0.0;
      for (int j = 0; j < d; ++j) {
        double e = std::exp(x->value[base + j * inner] - mx);
        y[base + j * inner] = e;
        sum += e;
      }
      for (int j = 0; j < d; ++j) y[base + j * inner] /= sum;
    }
  }
  Tensor out = record(x->shape, std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, d, outer, inner, out]() {
      x->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t base = o * d * inner + in;
          double dot = 0.0;
          for (int j = 0; j < d; ++j)
            dot += out->grad[base + j * inner] * out->value[base + j * inner];
          for (int j = 0; j < d; ++j)
            x->grad[base + j * inner] +=
                out->value[base + j * inner] * (out->grad[base + j * inner] - dot);
        }
      }
    };
  return out;
}

Tensor Tape::temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x->shape.size() == 3, "temporal_conv: input must be [T,J,Cin]");
  require(w->shape.size() == 3, "temporal_conv: weights must be [k,Cin,Cout]");
  int t = x->shape[0], j = x->shape[1], cin = x->shape[2];
  int k = w->shape[0], wcin = w->shape[1], cout = w->shape[2];
  require(cin == wcin, "temporal_conv: channel mismatch");
  require(k % 2 == 1, "temporal_conv: kernel must be odd");
  require(!b || b->shape == std::vector<int>{cout}, "temporal_conv: bad bias shape");
  int pad = (k - 1) / 2;

  std::vector<double> y(static_cast<std::size_t>(t) * j * cout, 0.0);
  MapM Y(y.data(), static_cast<std::size_t>(t) * j, cout);
  if (b) {
    Eigen::Map<const Eigen::RowVectorXd> bias(b->value.data(), cout);
    Y.rowwise() = bias;
  }
  CMapM X(x->value.data(), static_cast<std::size_t>(t) * j, cin);
  for (int tap = 0; tap < k; ++tap) {
    int delta = tap - pad;  // out[t] += x[t+delta] * w[tap]
    int t0 = std::max(0, -delta);
    int count = t - std::abs(delta);
    if (count <= 0) continue;
    CMapM W(w->value.data() + static_cast<std::size_t>(tap) * cin * cout, cin, cout);
    Y.middleRows(static_cast<std::size_t>(t0) * j, static_cast<std::size_t>(count) * j)
        .noalias() +=
        X.middleRows(static_cast<std::size_t>(t0 + delta) * j,
                     static_cast<std::size_t>(count) * j) *
        W;
  }
  std::vector<Tensor> ins = b ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  Tensor out = record({t, j, cout}, std::move(y), ins, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, w, b, t, j, cin, cout, k, pad, out]() {
      CMapM X(x->value.data(), static_cast<std::size_t>(t) * j, cin);
      CMapM G(out->grad.data(), static_cast<std::size_t>(t) * j, cout);
      if (x->requires_grad) x->ensure_grad();
      if (w->requires_grad) w->ensure_grad();
      for (int tap = 0; tap < k; ++tap) {
        int delta = tap - pad;
        int t0 = std::max(0, -delta);
        int count = t - std::abs(delta);
        if (count <= 0) continue;
        std::size_t dst = static_cast<std::size_t>(t0) * j;
        std::size_t src = static_cast<std::size_t>(t0 + delta) * j;
        std::size_t rows = static_cast<std::size_t>(count) * j;
        CMapM W(w->value.data() + static_cast<std::size_t>(tap) * cin * cout, cin, cout);
        if (x->requires_grad)
          MapM(x->grad.data(), static_cast<std::size_t>(t) * j, cin)
              .middleRows(src, rows)
              .noalias() += G.middleRows(dst, rows) * W.transpose();
        if (w->requires_grad)
          MapM(w->grad.data() + static_cast<std::size_t>(tap) * cin * cout, cin, cout)
              .noalias() += X.middleRows(src, rows).transpose() * G.middleRows(dst, rows);
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        Eigen::Map<Eigen::RowVectorXd>(b->grad.data(), cout) += G.colwise().sum();
      }
    };
  return out;
}

Tensor Tape::batch_norm(const Tensor& x, BnParams& bn, bool train_mode) {
  require(!x->shape.empty(), "batch_norm: rank must be >= 1");
  int c = x->shape.back();
  require(bn.gamma->shape == std::vector<int>{c}, "batch_norm: channel mismatch");
  std::size_t rows = x->numel() / c;

  auto xhat = std::make_shared<std::vector<double>>(x->numel());
  auto inv = std::make_shared<std::vector<double>>(c);
  if (train_mode) {
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch) mean[ch] += x->value[r * c + ch];
    for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch) {
        double d = x->value[r * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    for (int ch = 0; ch < c; ++ch) var[ch] /= static_cast<double>(rows);
    for (int ch = 0; ch < c; ++ch) (*inv)[ch] = 1.0 / std::sqrt(var[ch] + bn.eps);
    for (std::size_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch)
        (*xhat)[r * c + ch] = (x->value[r * c + ch] - mean[ch]) * (*inv)[ch];
    double unbias = rows > 1 ? static_cast<double>(rows) / (rows - 1.0) : 1.0;
    for (int ch = 0; ch < c; ++ch) {
      bn.running_mean[ch] = (1.0 - bn.momentum) * bn.running_mean[ch] + bn.momentum * mean[ch];
      bn.running_var[ch] =
          (1.0 - bn.momentum) * bn.running_var[ch] + bn.momentum * var[ch] * unbias;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) (*inv)[ch] = 1.0 / std::sqrt(bn.running_var[ch] + bn.eps);
    for (std::size_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch)
        (*xhat)[r * c + ch] = (x->value[r * c + ch] - bn.running_mean[ch]) * (*inv)[ch];
  }
  std::vector<double> y(x->numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (int ch = 0; ch < c; ++ch)
      y[r * c + ch] = bn.gamma->value[ch] * (*xhat)[r * c + ch] + bn.beta->value[ch];

  Tensor gamma = bn.gamma, beta = bn.beta;
  Tensor out = record(x->shape, std::move(y), {x, gamma, beta}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, gamma, beta, xhat, inv, rows, c, train_mode, out]() {
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (int ch = 0; ch < c; ++ch)
            gamma->grad[ch] += out->grad[r * c + ch] * (*xhat)[r * c + ch];
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (int ch = 0; ch < c; ++ch) beta->grad[ch] += out->grad[r * c + ch];
      }
      if (!x->requires_grad) return;
      x->ensure_grad();
      if (train_mode) {
        // dL/dx = inv * gamma * (g - mean(g) - xhat * mean(g*xhat)) per channel
        std::vector<double> mean_g(c, 0.0), mean_gx(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (int ch = 0; ch < c; ++ch) {
            double g = out->grad[r * c + ch];
            mean_g[ch] += g;
            mean_gx[ch] += g * (*xhat)[r * c + ch];
          }
        for (int ch = 0; ch < c; ++ch) {
          mean_g[ch] /= static_cast<double>(rows);
          mean_gx[ch] /= static_cast<double>(rows);
        }
        for (std::size_t r = 0; r < rows; ++r)
          for (int ch = 0; ch < c; ++ch)
            x->grad[r * c + ch] += gamma->value[ch] * (*inv)[ch] *
                                   (out->grad[r * c + ch] - mean_g[ch] -
                                    (*xhat)[r * c + ch] * mean_gx[ch]);
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          for (int ch = 0; ch < c; ++ch)
            x->grad[r * c + ch] += out->grad[r * c + ch] * gamma->value[ch] * (*inv)[ch];
      }
    };
  return out;
}

Tensor Tape::avg_pool_points(const Tensor& x, int window) {
  require(x->shape.size() == 3, "avg_pool_points: input must be [T,J,C]");
  int t = x->shape[0], j = x->shape[1], c = x->shape[2];
  require(window >= 1 && j % window == 0,
          "avg_pool_points: J=" + std::to_string(j) + " not divisible by window " +
              std::to_string(window));
  int jo = j / window;
  std::vector<double> y(static_cast<std::size_t>(t) * jo * c, 0.0);
  for (int tt = 0; tt < t; ++tt)
    for (int g = 0; g < jo; ++g)
      for (int w = 0; w < window; ++w)
        for (int ch = 0; ch < c; ++ch)
          y[(static_cast<std::size_t>(tt) * jo + g) * c + ch] +=
              x->value[(static_cast<std::size_t>(tt) * j + g * window + w) * c + ch];
  for (double& v : y) v /= window;
  Tensor out = record({t, jo, c}, std::move(y), {x}, nullptr);
  if (out->requires_grad)
    steps_.back().back = [x, t, j, c, jo, window, out]() {
      x->ensure_grad();
      for (int tt = 0; tt < t; ++tt)
        for (int g = 0; g < jo; ++g)
          for (int w = 0; w < window; ++w)
            for (int ch = 0; ch < c; ++ch)
              x->grad[(static_cast<std::size_t>(tt) * j + g * window + w) * c + ch] +=
                  out->grad[(static_cast<std::size_t>(tt) * jo + g) * c + ch] / window;
    };
  return out;
}

Tensor Tape::multi_head_attention(const Tensor& x, const MhaParams& p) {
  require(x->shape.size() == 3, "multi_head_attention: input must be [T,J,C]");
  int t = x->shape[0], j = x->shape[1], c = x->shape[2];
  require(p.heads >= 1 && c % p.heads == 0,
          "multi_head_attention: channels " + std::to_string(c) + " not divisible by heads " +
              std::to_string(p.heads));
  int h = p.heads, dh = c / h;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = linear(x, p.wq, p.bq);
  Tensor kk = linear(x, p.wk, p.bk);
  Tensor v = linear(x, p.wv, p.bv);
  auto heads_view = [&](const Tensor& z) {
    return reshape(permute_0213(reshape(z, {t, j, h, dh})), {t * h, j, dh});
  };
  Tensor qh = heads_view(q), kh = heads_view(kk), vh = heads_view(v);
  Tensor scores = mul_scalar(bmm(qh, transpose_last2(kh)), scale);  // [t*h, j, j]
  Tensor attn = softmax(scores, 2);
  Tensor ctx = bmm(attn, vh);  // [t*h, j, dh]
  Tensor merged = reshape(permute_0213(reshape(ctx, {t, h, j, dh})), {t, j, c});
  return linear(merged, p.wo, p.bo);
}

void Tape::backward(const Tensor& loss) {
  require(loss->numel() == 1, "backward: loss must be scalar");
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (it->out->grad.empty()) continue;  // no downstream use
    it->back();
  }
}

// ---- gradient checking ---------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build,
                           const std::vector<Tensor>& leaves, const GradCheckConfig& cfg) {
  for (const Tensor& l : leaves) {
    l->requires_grad = true;
    l->grad.clear();
  }
  Tape tape;
  Tensor loss = build(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& l : leaves)
    analytic.push_back(l->grad.empty() ? std::vector<double>(l->numel(), 0.0) : l->grad);

  GradCheckReport rep;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor& l = leaves[li];
    std::size_t n = l->numel();
    std::set<std::size_t> coords;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    int want = std::min<std::size_t>(cfg.coords_per_tensor, n);
    while (static_cast<int>(coords.size()) < want) coords.insert(pick(rng));
    for (std::size_t idx : coords) {
      double saved = l->value[idx];
      l->value[idx] = saved + cfg.h;
      Tape tp;
      double fp = build(tp)->value[0];
      l->value[idx] = saved - cfg.h;
      Tape tm;
      double fm = build(tm)->value[0];
      l->value[idx] = saved;
      double fd = (fp - fm) / (2.0 * cfg.h);
      double an = analytic[li][idx];
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = l->name + "[" + std::to_string(idx) + "]: analytic " + std::to_string(an) +
                    " vs fd " + std::to_string(fd);
      }
    }
  }
  rep.ok = rep.max_rel_err <= cfg.tol;
  return rep;
}

// ---- checkpoint serialization ---------------------------------------------------

namespace {
void put_u32(std::string& s, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  s.append(b, 4);
}
std::uint32_t take_u32(const std::string& s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw IoError("truncated checkpoint field");
  std::uint32_t v = static_cast<std::uint8_t>(s[pos]) |
                    (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 1])) << 8) |
                    (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 2])) << 16) |
                    (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 3])) << 24);
  pos += 4;
  return v;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointEntry>& entries) {
  std::string out = "GCT1";
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const CheckpointEntry& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    std::size_t n = 1;
    for (int d : e.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    if (n != e.data.size())
      throw ShapeMismatch("checkpoint entry " + e.name + ": shape/data mismatch");
    std::size_t at = out.size();
    out.resize(at + e.data.size() * 8);
    std::memcpy(out.data() + at, e.data.data(), e.data.size() * 8);
  }
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  put_u32(out, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < 12 || data.compare(0, 4, "GCT1") != 0)
    throw IoError(path.string() + ": bad checkpoint magic (want GCT1)");
  std::uint32_t stored_crc;
  {
    std::size_t tail = data.size() - 4;
    stored_crc = static_cast<std::uint8_t>(data[tail]) |
                 (static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[tail + 1])) << 8) |
                 (static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[tail + 2])) << 16) |
                 (static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[tail + 3])) << 24);
  }
  std::uint32_t actual = static_cast<std::uint32_t>(crc32(
      0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size() - 4)));
  if (actual != stored_crc)
    throw ChecksumMismatch(path.string() + ": CRC32 " + std::to_string(actual) + " != stored " +
                           std::to_string(stored_crc));

  std::size_t pos = 4;
  std::uint32_t count = take_u32(data, pos);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  std::size_t limit = data.size() - 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    std::uint32_t name_len = take_u32(data, pos);
    if (pos + name_len > limit) throw IoError(path.string() + ": truncated entry name");
    e.name.assign(data, pos, name_len);
    pos += name_len;
    std::uint32_t rank = take_u32(data, pos);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t dim = take_u32(data, pos);
      e.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    if (pos + n * 8 > limit) throw IoError(path.string() + ": truncated entry data");
    e.data.resize(n);
    std::memcpy(e.data.data(), data.data() + pos, n * 8);
    pos += n * 8;
    entries.push_back(std::move(e));
  }
  if (pos != limit) throw IoError(path.string() + ": trailing bytes in checkpoint");
  return entries;
}

}  // namespace gaitcontour::nc
