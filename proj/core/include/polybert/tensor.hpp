#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace polybert::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Raised when debug checks find a non-finite value; names the producing op.
struct NumericFault : std::runtime_error {
  explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

struct Node;

/// Double-precision n-d array participating in a reverse-mode tape. Value
/// semantics over a shared node: copies alias the same storage, which is what
/// lets one forward graph serve several backward passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor constant(Shape shape, std::vector<double> values,
                         std::string label = "const");
  static Tensor scalar(double value);
  /// A leaf that collects gradients across backward passes until zero_grad.
  static Tensor parameter(Shape shape, std::vector<double> values,
                          std::string name);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;
  const std::string& label() const;
  bool is_parameter() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  bool has_grad() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;  // requires numel() == 1

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand, same length as value
  bool is_parameter = false;
  std::string label;
  std::uint64_t seq = 0;  // creation order; fixes backward visitation order
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// While alive, ops record no tape (outputs are plain constants). Used for
/// teacher forwards and evaluation.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

/// When on, every op validates its output for NaN/Inf and throws NumericFault
/// naming the op.
void set_debug_checks(bool enabled);
bool debug_checks();

// ---- forward ops -----------------------------------------------------------

/// Matrix product. Accepts [m,k]x[k,n]; [...,m,k]x[k,n] (shared rhs); and
/// [...,m,k]x[...,k,n] with equal leading dims (batched).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum for equal shapes, or trailing-axis bias add when b has the
/// shape of a's last axis. No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, equal shapes
Tensor scale(const Tensor& a, double c);

Tensor sum_over_axis(const Tensor& a, int axis);
Tensor mean_over_axis(const Tensor& a, int axis);
Tensor mean_all(const Tensor& a);  // scalar

/// softmax(x / temperature) along `axis`, computed in max-subtracted form.
Tensor softmax(const Tensor& a, int axis, double temperature = 1.0);
/// Fused stable log(softmax(x)) along `axis`.
Tensor log_softmax(const Tensor& a, int axis);

/// Normalizes over the last axis; gain and bias have that axis's length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);  // exact erf form

/// Gathers rows of `table` ([V, H]) at `ids`; output shape id_shape + [H].
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        const Shape& id_shape);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t stop);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose_axes(const Tensor& x, int axis_a, int axis_b);

/// Gathers rows of a 2-d tensor; backward scatter-adds.
Tensor take_rows(const Tensor& x, const std::vector<std::int64_t>& rows);

/// Mean of h ([B,S,H]) over positions where mask ([B,S]) is nonzero, per
/// batch row -> [B,H]. Throws if any row of the mask is all zero.
Tensor masked_mean_rows(const Tensor& h, const Tensor& mask);

// ---- reverse pass ----------------------------------------------------------

/// Populates gradients of everything reachable from `loss` (a scalar).
/// Non-parameter node gradients are reset at entry; parameter gradients
/// accumulate across calls until zero_grad.
void backward(const Tensor& loss);

/// Euclidean norm over the concatenated gradients of `params`.
/// Throws if any parameter is missing its gradient.
double global_grad_norm(const std::vector<Tensor>& params);

}  // namespace polybert::nn
