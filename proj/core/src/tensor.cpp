#include "polybert/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace polybert::nn {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<bool> g_debug_checks{false};
std::atomic<std::uint64_t> g_seq{0};

void check_finite(const Node& n) {
  for (double v : n.value) {
    if (!std::isfinite(v)) {
      throw NumericFault("op '" + n.label + "' produced a non-finite value");
    }
  }
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value,
                                std::string label) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->label = std::move(label);
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

Tensor make_op(Shape shape, std::vector<double> value, std::string label,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
  auto n = make_node(std::move(shape), std::move(value), std::move(label));
  if (g_debug_checks.load(std::memory_order_relaxed)) check_finite(*n);
  if (t_grad_enabled) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, std::int64_t m,
           std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T. Goes through an explicit transpose of B so
// the inner loop is a vectorizable saxpy rather than a serial dot product.
void mm_nt(const double* a, const double* b, double* c, std::int64_t m,
           std::int64_t n, std::int64_t k) {
  std::vector<double> bt(static_cast<std::size_t>(n * k));
  for (std::int64_t p = 0; p < k; ++p) {
    for (std::int64_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  }
  mm_nn(a, bt.data(), c, m, n, k);
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, std::int64_t m,
           std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + i * n;
      double* crow = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct AxisSplit {
  std::int64_t outer, axis, inner;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) {
    r.inner *= s[i];
  }
  return r;
}

int normalize_axis(const std::string& op, int axis, int ndim) {
  if (axis < 0) axis += ndim;
  require(axis >= 0 && axis < ndim,
          op + ": axis " + std::to_string(axis) + " out of range for rank " +
              std::to_string(ndim));
  return axis;
}

}  // namespace

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return Tensor(make_node(std::move(shape),
                          std::vector<double>(static_cast<std::size_t>(n), 0.0),
                          "zeros"));
}

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return Tensor(make_node(
      std::move(shape),
      std::vector<double>(static_cast<std::size_t>(n), value), "full"));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values,
                        std::string label) {
  require(shape_numel(shape) == static_cast<std::int64_t>(values.size()),
          "constant: value count does not match shape " + shape_str(shape));
  return Tensor(make_node(std::move(shape), std::move(values), std::move(label)));
}

Tensor Tensor::scalar(double value) {
  return Tensor(make_node(Shape{}, {value}, "scalar"));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values,
                         std::string name) {
  require(shape_numel(shape) == static_cast<std::int64_t>(values.size()),
          "parameter: value count does not match shape " + shape_str(shape));
  auto n = make_node(std::move(shape), std::move(values), std::move(name));
  n->is_parameter = true;
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
std::int64_t Tensor::dim(int axis) const {
  return node_->shape[static_cast<std::size_t>(
      normalize_axis("dim", axis, ndim()))];
}
std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(node_->value.size());
}
const std::string& Tensor::label() const { return node_->label; }
bool Tensor::is_parameter() const { return node_->is_parameter; }

std::vector<double>& Tensor::values() { return node_->value; }
const std::vector<double>& Tensor::values() const { return node_->value; }

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}
std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}
const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) {
    throw std::runtime_error("tensor '" + node_->label + "' has no gradient");
  }
  return node_->grad;
}
void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  require(numel() == 1, "item: tensor " + shape_str(shape()) + " is not scalar");
  return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

void set_debug_checks(bool enabled) {
  g_debug_checks.store(enabled, std::memory_order_relaxed);
}
bool debug_checks() { return g_debug_checks.load(std::memory_order_relaxed); }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);

  const std::int64_t k = sa[sa.size() - 1];
  const std::int64_t m = sa[sa.size() - 2];

  if (sb.size() == 2) {
    // [..., m, k] x [k, n]
    if (sb[0] != k) shape_error("matmul", sa, sb);
    const std::int64_t n = sb[1];
    const std::int64_t rows = shape_numel(sa) / k;
    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(rows * n), 0.0);
    mm_nn(a.values().data(), b.values().data(), out.data(), rows, k, n);
    auto an = a.node();
    auto bn = b.node();
    return make_op(std::move(out_shape), std::move(out), "matmul", {a, b},
                   [an, bn, rows, k, n](Node& self) {
                     an->ensure_grad();
                     bn->ensure_grad();
                     mm_nt(self.grad.data(), bn->value.data(), an->grad.data(),
                           rows, n, k);
                     mm_tn(an->value.data(), self.grad.data(), bn->grad.data(),
                           rows, k, n);
                   });
  }

  // batched: [..., m, k] x [..., k, n] with identical leading dims
  if (sa.size() != sb.size()) shape_error("matmul", sa, sb);
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) {
    if (sa[i] != sb[i]) shape_error("matmul", sa, sb);
  }
  if (sb[sb.size() - 2] != k) shape_error("matmul", sa, sb);
  const std::int64_t n = sb[sb.size() - 1];
  std::int64_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<std::size_t>(batch * m * n), 0.0);
  for (std::int64_t g = 0; g < batch; ++g) {
    mm_nn(a.values().data() + g * m * k, b.values().data() + g * k * n,
          out.data() + g * m * n, m, k, n);
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out_shape), std::move(out), "matmul", {a, b},
                 [an, bn, batch, m, k, n](Node& self) {
                   an->ensure_grad();
                   bn->ensure_grad();
                   for (std::int64_t g = 0; g < batch; ++g) {
                     mm_nt(self.grad.data() + g * m * n,
                           bn->value.data() + g * k * n,
                           an->grad.data() + g * m * k, m, n, k);
                     mm_tn(an->value.data() + g * m * k,
                           self.grad.data() + g * m * n,
                           bn->grad.data() + g * k * n, m, k, n);
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(sa, std::move(out), "add", {a, b}, [an, bn](Node& self) {
      an->ensure_grad();
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        an->grad[i] += self.grad[i];
        bn->grad[i] += self.grad[i];
      }
    });
  }
  // trailing-axis bias: a [..., n] + b [n]
  if (sb.size() == 1 && !sa.empty() && sa.back() == sb[0]) {
    const std::int64_t n = sb[0];
    const std::int64_t rows = shape_numel(sa) / n;
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::int64_t r = 0; r < rows; ++r) {
      double* row = out.data() + r * n;
      for (std::int64_t j = 0; j < n; ++j) row[j] += bv[static_cast<std::size_t>(j)];
    }
    auto an = a.node();
    auto bn = b.node();
    return make_op(sa, std::move(out), "add_bias", {a, b},
                   [an, bn, rows, n](Node& self) {
                     an->ensure_grad();
                     bn->ensure_grad();
                     for (std::int64_t r = 0; r < rows; ++r) {
                       const double* grow = self.grad.data() + r * n;
                       for (std::int64_t j = 0; j < n; ++j) {
                         an->grad[static_cast<std::size_t>(r * n + j)] += grow[j];
                         bn->grad[static_cast<std::size_t>(j)] += grow[j];
                       }
                     }
                   });
  }
  shape_error("add", sa, sb);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), "mul", {a, b}, [an, bn](Node& self) {
    an->ensure_grad();
    bn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * bn->value[i];
      bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), "scale", {a}, [an, c](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * c;
    }
  });
}

namespace {

Tensor reduce_over_axis(const Tensor& a, int axis, bool mean) {
  axis = normalize_axis(mean ? "mean_over_axis" : "sum_over_axis", axis,
                        a.ndim());
  const auto sp = split_at(a.shape(), axis);
  Shape out_shape;
  for (int i = 0; i < a.ndim(); ++i) {
    if (i != axis) out_shape.push_back(a.dim(i));
  }
  const double w = mean ? 1.0 / static_cast<double>(sp.axis) : 1.0;
  std::vector<double> out(
      static_cast<std::size_t>(sp.outer * sp.inner), 0.0);
  const auto& av = a.values();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t j = 0; j < sp.axis; ++j) {
      const double* src = av.data() + (o * sp.axis + j) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  if (mean) {
    for (double& v : out) v *= w;
  }
  auto an = a.node();
  return make_op(std::move(out_shape), std::move(out),
                 mean ? "mean_over_axis" : "sum_over_axis", {a},
                 [an, sp, w](Node& self) {
                   an->ensure_grad();
                   for (std::int64_t o = 0; o < sp.outer; ++o) {
                     const double* g = self.grad.data() + o * sp.inner;
                     for (std::int64_t j = 0; j < sp.axis; ++j) {
                       double* dst =
                           an->grad.data() + (o * sp.axis + j) * sp.inner;
                       for (std::int64_t i = 0; i < sp.inner; ++i) {
                         dst[i] += g[i] * w;
                       }
                     }
                   }
                 });
}

}  // namespace

Tensor sum_over_axis(const Tensor& a, int axis) {
  return reduce_over_axis(a, axis, false);
}
Tensor mean_over_axis(const Tensor& a, int axis) {
  return reduce_over_axis(a, axis, true);
}

Tensor mean_all(const Tensor& a) {
  const std::int64_t n = a.numel();
  require(n > 0, "mean_all: empty tensor");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const double w = 1.0 / static_cast<double>(n);
  auto an = a.node();
  return make_op(Shape{}, {acc * w}, "mean_all", {a}, [an, w](Node& self) {
    an->ensure_grad();
    const double g = self.grad[0] * w;
    for (double& d : an->grad) d += g;
  });
}

Tensor softmax(const Tensor& a, int axis, double temperature) {
  require(temperature > 0.0, "softmax: temperature must be positive");
  axis = normalize_axis("softmax", axis, a.ndim());
  const auto sp = split_at(a.shape(), axis);
  std::vector<double> out(a.values().size());
  const auto& av = a.values();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const auto at = [&](std::int64_t j) {
        return (o * sp.axis + j) * sp.inner + i;
      };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < sp.axis; ++j) {
        mx = std::max(mx, av[static_cast<std::size_t>(at(j))] / temperature);
      }
      double denom = 0.0;
      for (std::int64_t j = 0; j < sp.axis; ++j) {
        const double e =
            std::exp(av[static_cast<std::size_t>(at(j))] / temperature - mx);
        out[static_cast<std::size_t>(at(j))] = e;
        denom += e;
      }
      for (std::int64_t j = 0; j < sp.axis; ++j) {
        out[static_cast<std::size_t>(at(j))] /= denom;
      }
    }
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), "softmax", {a},
                 [an, sp, temperature](Node& self) {
                   an->ensure_grad();
                   for (std::int64_t o = 0; o < sp.outer; ++o) {
                     for (std::int64_t i = 0; i < sp.inner; ++i) {
                       const auto at = [&](std::int64_t j) {
                         return static_cast<std::size_t>(
                             (o * sp.axis + j) * sp.inner + i);
                       };
                       double dot = 0.0;
                       for (std::int64_t j = 0; j < sp.axis; ++j) {
                         dot += self.grad[at(j)] * self.value[at(j)];
                       }
                       for (std::int64_t j = 0; j < sp.axis; ++j) {
                         an->grad[at(j)] += self.value[at(j)] *
                                            (self.grad[at(j)] - dot) /
                                            temperature;
                       }
                     }
                   }
                 });
}

Tensor log_softmax(const Tensor& a, int axis) {
  axis = normalize_axis("log_softmax", axis, a.ndim());
  const auto sp = split_at(a.shape(), axis);
  std::vector<double> out(a.values().size());
  const auto& av = a.values();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const auto at = [&](std::int64_t j) {
        return static_cast<std::size_t>((o * sp.axis + j) * sp.inner + i);
      };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < sp.axis; ++j) mx = std::max(mx, av[at(j)]);
      double denom = 0.0;
      for (std::int64_t j = 0; j < sp.axis; ++j) {
        denom += std::exp(av[at(j)] - mx);
      }
      const double log_denom = mx + std::log(denom);
      for (std::int64_t j = 0; j < sp.axis; ++j) {
        out[at(j)] = av[at(j)] - log_denom;
      }
    }
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), "log_softmax", {a},
                 [an, sp](Node& self) {
                   an->ensure_grad();
                   for (std::int64_t o = 0; o < sp.outer; ++o) {
                     for (std::int64_t i = 0; i < sp.inner; ++i) {
                       const auto at = [&](std::int64_t j) {
                         return static_cast<std::size_t>(
                             (o * sp.axis + j) * sp.inner + i);
                       };
                       double gsum = 0.0;
                       for (std::int64_t j = 0; j < sp.axis; ++j) {
                         gsum += self.grad[at(j)];
                       }
                       for (std::int64_t j = 0; j < sp.axis; ++j) {
                         an->grad[at(j)] +=
                             self.grad[at(j)] - std::exp(self.value[at(j)]) * gsum;
                       }
                     }
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const Shape& sx = x.shape();
  require(!sx.empty(), "layer_norm: rank-0 input");
  const std::int64_t h = sx.back();
  require(gain.ndim() == 1 && gain.dim(0) == h && bias.ndim() == 1 &&
              bias.dim(0) == h,
          "layer_norm: gain/bias must have shape [" + std::to_string(h) + "]");
  const std::int64_t rows = shape_numel(sx) / h;
  std::vector<double> out(x.values().size());
  std::vector<double> xhat(x.values().size());
  std::vector<double> inv_sigma(static_cast<std::size_t>(rows));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* px = xv.data() + r * h;
    double mu = 0.0;
    for (std::int64_t j = 0; j < h; ++j) mu += px[j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::int64_t j = 0; j < h; ++j) var += (px[j] - mu) * (px[j] - mu);
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(r)] = is;
    for (std::int64_t j = 0; j < h; ++j) {
      const double xh = (px[j] - mu) * is;
      xhat[static_cast<std::size_t>(r * h + j)] = xh;
      out[static_cast<std::size_t>(r * h + j)] =
          gv[static_cast<std::size_t>(j)] * xh + bv[static_cast<std::size_t>(j)];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_op(sx, std::move(out), "layer_norm", {x, gain, bias},
                 [xn, gn, bn, rows, h, xhat = std::move(xhat),
                  inv_sigma = std::move(inv_sigma)](Node& self) {
                   xn->ensure_grad();
                   gn->ensure_grad();
                   bn->ensure_grad();
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const double* g = self.grad.data() + r * h;
                     const double* xh = xhat.data() + r * h;
                     const double is = inv_sigma[static_cast<std::size_t>(r)];
                     double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                     for (std::int64_t j = 0; j < h; ++j) {
                       const double dxh =
                           g[j] * gn->value[static_cast<std::size_t>(j)];
                       mean_dxhat += dxh;
                       mean_dxhat_xhat += dxh * xh[j];
                       gn->grad[static_cast<std::size_t>(j)] += g[j] * xh[j];
                       bn->grad[static_cast<std::size_t>(j)] += g[j];
                     }
                     mean_dxhat /= static_cast<double>(h);
                     mean_dxhat_xhat /= static_cast<double>(h);
                     for (std::int64_t j = 0; j < h; ++j) {
                       const double dxh =
                           g[j] * gn->value[static_cast<std::size_t>(j)];
                       xn->grad[static_cast<std::size_t>(r * h + j)] +=
                           is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                     }
                   }
                 });
}

Tensor gelu(const Tensor& x) {
  static constexpr double kInvSqrt2 = 0.7071067811865476;
  static constexpr double kInvSqrt2Pi = 0.3989422804014327;
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(out), "gelu", {x}, [xn](Node& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      xn->grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        const Shape& id_shape) {
  require(table.ndim() == 2, "embedding_lookup: table must be 2-d, got " +
                                 shape_str(table.shape()));
  require(shape_numel(id_shape) == static_cast<std::int64_t>(ids.size()),
          "embedding_lookup: id count does not match id_shape " +
              shape_str(id_shape));
  const std::int64_t v = table.dim(0);
  const std::int64_t h = table.dim(1);
  for (int id : ids) {
    require(id >= 0 && id < v, "embedding_lookup: id " + std::to_string(id) +
                                   " out of range [0," + std::to_string(v) +
                                   ")");
  }
  Shape out_shape = id_shape;
  out_shape.push_back(h);
  std::vector<double> out(ids.size() * static_cast<std::size_t>(h));
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.data() + static_cast<std::int64_t>(ids[i]) * h, h,
                out.data() + static_cast<std::int64_t>(i) * h);
  }
  auto tn = table.node();
  auto ids_copy = ids;
  return make_op(std::move(out_shape), std::move(out), "embedding_lookup",
                 {table}, [tn, h, ids = std::move(ids_copy)](Node& self) {
                   tn->ensure_grad();
                   for (std::size_t i = 0; i < ids.size(); ++i) {
                     const double* g =
                         self.grad.data() + static_cast<std::int64_t>(i) * h;
                     double* dst = tn->grad.data() +
                                   static_cast<std::int64_t>(ids[i]) * h;
                     for (std::int64_t j = 0; j < h; ++j) dst[j] += g[j];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), "concat: no inputs");
  const int nd = xs[0].ndim();
  axis = normalize_axis("concat", axis, nd);
  Shape out_shape = xs[0].shape();
  std::int64_t total_axis = 0;
  for (const auto& x : xs) {
    require(x.ndim() == nd, "concat: rank mismatch");
    for (int i = 0; i < nd; ++i) {
      if (i != axis && x.dim(i) != out_shape[static_cast<std::size_t>(i)]) {
        shape_error("concat", out_shape, x.shape());
      }
    }
    total_axis += x.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total_axis;
  const auto osp = split_at(out_shape, axis);
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t axis_offset = 0;
  for (const auto& x : xs) {
    const auto sp = split_at(x.shape(), axis);
    const auto& xv = x.values();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      std::copy_n(
          xv.data() + o * sp.axis * sp.inner, sp.axis * sp.inner,
          out.data() + (o * osp.axis + axis_offset) * osp.inner);
    }
    axis_offset += sp.axis;
  }
  std::vector<Tensor> parents = xs;
  return make_op(
      out_shape, std::move(out), "concat", parents,
      [parents, axis, osp](Node& self) {
        std::int64_t axis_offset = 0;
        for (const auto& x : parents) {
          auto xn = x.node();
          xn->ensure_grad();
          const auto sp = split_at(xn->shape, axis);
          for (std::int64_t o = 0; o < sp.outer; ++o) {
            const double* g =
                self.grad.data() + (o * osp.axis + axis_offset) * osp.inner;
            double* dst = xn->grad.data() + o * sp.axis * sp.inner;
            for (std::int64_t i = 0; i < sp.axis * sp.inner; ++i) {
              dst[i] += g[i];
            }
          }
          axis_offset += sp.axis;
        }
      });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t stop) {
  axis = normalize_axis("slice", axis, x.ndim());
  const std::int64_t len = x.dim(axis);
  require(start >= 0 && stop <= len && start < stop,
          "slice: range [" + std::to_string(start) + "," +
              std::to_string(stop) + ") invalid for axis of length " +
              std::to_string(len));
  const auto sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = stop - start;
  const std::int64_t out_axis = stop - start;
  std::vector<double> out(
      static_cast<std::size_t>(sp.outer * out_axis * sp.inner));
  const auto& xv = x.values();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.data() + (o * sp.axis + start) * sp.inner,
                out_axis * sp.inner, out.data() + o * out_axis * sp.inner);
  }
  auto xn = x.node();
  return make_op(std::move(out_shape), std::move(out), "slice", {x},
                 [xn, sp, start, out_axis](Node& self) {
                   xn->ensure_grad();
                   for (std::int64_t o = 0; o < sp.outer; ++o) {
                     const double* g = self.grad.data() + o * out_axis * sp.inner;
                     double* dst =
                         xn->grad.data() + (o * sp.axis + start) * sp.inner;
                     for (std::int64_t i = 0; i < out_axis * sp.inner; ++i) {
                       dst[i] += g[i];
                     }
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " +
              shape_str(shape));
  auto xn = x.node();
  return make_op(std::move(shape), x.values(), "reshape", {x}, [xn](Node& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += self.grad[i];
    }
  });
}

namespace {

std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] *
                                      s[static_cast<std::size_t>(i) + 1];
  }
  return st;
}

}  // namespace

Tensor transpose_axes(const Tensor& x, int axis_a, int axis_b) {
  const int nd = x.ndim();
  axis_a = normalize_axis("transpose_axes", axis_a, nd);
  axis_b = normalize_axis("transpose_axes", axis_b, nd);
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<std::size_t>(axis_a)],
            out_shape[static_cast<std::size_t>(axis_b)]);
  const auto in_strides = row_major_strides(x.shape());
  const auto out_strides = row_major_strides(out_shape);
  const std::int64_t n = x.numel();
  // out index -> in index: swap the two coordinates
  std::vector<std::int64_t> perm_strides(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    int src = i;
    if (i == axis_a) src = axis_b;
    if (i == axis_b) src = axis_a;
    perm_strides[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(src)];
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto& xv = x.values();
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::int64_t rem = idx;
    std::int64_t src = 0;
    for (int i = 0; i < nd; ++i) {
      const std::int64_t c = rem / out_strides[static_cast<std::size_t>(i)];
      rem -= c * out_strides[static_cast<std::size_t>(i)];
      src += c * perm_strides[static_cast<std::size_t>(i)];
    }
    out[static_cast<std::size_t>(idx)] = xv[static_cast<std::size_t>(src)];
  }
  auto xn = x.node();
  return make_op(std::move(out_shape), std::move(out), "transpose_axes", {x},
                 [xn, out_strides, perm_strides, n, nd](Node& self) {
                   xn->ensure_grad();
                   for (std::int64_t idx = 0; idx < n; ++idx) {
                     std::int64_t rem = idx;
                     std::int64_t src = 0;
                     for (int i = 0; i < nd; ++i) {
                       const std::int64_t c =
                           rem / out_strides[static_cast<std::size_t>(i)];
                       rem -= c * out_strides[static_cast<std::size_t>(i)];
                       src += c * perm_strides[static_cast<std::size_t>(i)];
                     }
                     xn->grad[static_cast<std::size_t>(src)] +=
                         self.grad[static_cast<std::size_t>(idx)];
                   }
                 });
}

Tensor take_rows(const Tensor& x, const std::vector<std::int64_t>& rows) {
  require(x.ndim() == 2,
          "take_rows: input must be 2-d, got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0);
  const std::int64_t c = x.dim(1);
  for (auto r : rows) {
    require(r >= 0 && r < n, "take_rows: row " + std::to_string(r) +
                                 " out of range [0," + std::to_string(n) + ")");
  }
  std::vector<double> out(rows.size() * static_cast<std::size_t>(c));
  const auto& xv = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(xv.data() + rows[i] * c, c,
                out.data() + static_cast<std::int64_t>(i) * c);
  }
  auto xn = x.node();
  auto rows_copy = rows;
  return make_op({static_cast<std::int64_t>(rows.size()), c}, std::move(out),
                 "take_rows", {x},
                 [xn, c, rows = std::move(rows_copy)](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t i = 0; i < rows.size(); ++i) {
                     const double* g =
                         self.grad.data() + static_cast<std::int64_t>(i) * c;
                     double* dst = xn->grad.data() + rows[i] * c;
                     for (std::int64_t j = 0; j < c; ++j) dst[j] += g[j];
                   }
                 });
}

Tensor masked_mean_rows(const Tensor& h, const Tensor& mask) {
  require(h.ndim() == 3, "masked_mean_rows: hidden states must be [B,S,H], got " +
                             shape_str(h.shape()));
  require(mask.ndim() == 2 && mask.dim(0) == h.dim(0) &&
              mask.dim(1) == h.dim(1),
          "masked_mean_rows: mask " + shape_str(mask.shape()) +
              " does not match " + shape_str(h.shape()));
  const std::int64_t b = h.dim(0), s = h.dim(1), hd = h.dim(2);
  const auto& hv = h.values();
  const auto& mv = mask.values();
  std::vector<double> counts(static_cast<std::size_t>(b), 0.0);
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t j = 0; j < s; ++j) {
      counts[static_cast<std::size_t>(i)] +=
          mv[static_cast<std::size_t>(i * s + j)] != 0.0 ? 1.0 : 0.0;
    }
    if (counts[static_cast<std::size_t>(i)] == 0.0) {
      throw std::invalid_argument(
          "masked_mean_rows: sequence " + std::to_string(i) +
          " has no unmasked positions (all-pad sequence)");
    }
  }
  std::vector<double> out(static_cast<std::size_t>(b * hd), 0.0);
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t j = 0; j < s; ++j) {
      if (mv[static_cast<std::size_t>(i * s + j)] == 0.0) continue;
      const double* src = hv.data() + (i * s + j) * hd;
      double* dst = out.data() + i * hd;
      for (std::int64_t k = 0; k < hd; ++k) dst[k] += src[k];
    }
    const double inv = 1.0 / counts[static_cast<std::size_t>(i)];
    double* dst = out.data() + i * hd;
    for (std::int64_t k = 0; k < hd; ++k) dst[k] *= inv;
  }
  auto hn = h.node();
  auto mn = mask.node();
  // gradient flows to the hidden states only; the mask is a constant
  return make_op({b, hd}, std::move(out), "masked_mean_rows", {h, mask},
                 [hn, mn, b, s, hd, counts = std::move(counts)](Node& self) {
                   hn->ensure_grad();
                   for (std::int64_t i = 0; i < b; ++i) {
                     const double inv = 1.0 / counts[static_cast<std::size_t>(i)];
                     const double* g = self.grad.data() + i * hd;
                     for (std::int64_t j = 0; j < s; ++j) {
                       if (mn->value[static_cast<std::size_t>(i * s + j)] == 0.0) {
                         continue;
                       }
                       double* dst = hn->grad.data() + (i * s + j) * hd;
                       for (std::int64_t k = 0; k < hd; ++k) {
                         dst[k] += g[k] * inv;
                       }
                     }
                   }
                 });
}

void backward(const Tensor& loss) {
  require(loss.defined(), "backward: undefined tensor");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.shape()));
  }
  // iterative post-order DFS; reversed, it is a topological order from the
  // loss down to the leaves
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child].get();
      ++next_child;
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // intermediate gradients are recomputed per backward call; parameter
  // gradients accumulate until zero_grad
  for (Node* n : order) {
    n->ensure_grad();
    if (!n->is_parameter) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

double global_grad_norm(const std::vector<Tensor>& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) {
      throw std::runtime_error("global_grad_norm: parameter '" + p.label() +
                               "' has no gradient");
    }
    for (double g : p.grad()) acc += g * g;
  }
  return std::sqrt(acc);
}

}  // namespace polybert::nn
