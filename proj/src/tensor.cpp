#include "zsl/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "zsl/errors.hpp"

namespace zsl {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  check_extents(shape);
  impl_->values.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  check_extents(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->values.size() : 0; }

std::span<double> Tensor::values() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of an undefined tensor");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::ensure_grad() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

std::span<double> Tensor::grad() const {
  ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::drop_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::clone() const {
  Tensor t(shape(), impl_->values, impl_->requires_grad);
  return t;
}

Tensor Tensor::reshaped_copy(Shape new_shape) const {
  return Tensor(std::move(new_shape), impl_->values, false);
}

// ---------------------------------------------------------------------------

namespace {
thread_local Graph* g_active = nullptr;
}

Graph* active_graph() { return g_active; }

GraphScope::GraphScope(Graph& graph) : previous_(g_active) { g_active = &graph; }
GraphScope::~GraphScope() { g_active = previous_; }

void Graph::record(GraphNode node) { nodes_.push_back(std::move(node)); }

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not require grad");
  Tensor seed = loss;
  seed.ensure_grad();
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

void Graph::replay() {
  for (auto& node : nodes_) node.forward();
}

void backward(const Tensor& loss) {
  Graph* g = active_graph();
  if (!g) throw ContractError("backward() called with no active graph");
  g->backward(loss);
}

namespace detail {

Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs) {
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || (t && t->requires_grad());
  return Tensor(std::move(shape), rg);
}

void run_and_record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
                    std::function<void()> forward, std::function<void()> backward) {
  forward();
  Graph* g = active_graph();
  if (g && output.requires_grad()) {
    g->record(GraphNode{std::string(op), std::move(inputs), output, std::move(forward), std::move(backward)});
  }
}

}  // namespace detail

}  // namespace zsl
