#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zsl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the recorded graph write gradients back into parameters. Use clone()
// for an independent deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  // Handle semantics: constness of the handle does not extend to storage.
  std::span<double> values() const;
  double item() const;
  double& operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  // Allocates a zero gradient buffer if none exists.
  void ensure_grad() const;
  // Allocates on first use.
  std::span<double> grad() const;
  void zero_grad() const;
  void drop_grad();

  Tensor clone() const;
  // Same values, reshaped, sharing nothing with this tensor.
  Tensor reshaped_copy(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// One recorded primitive. forward recomputes output from inputs in place;
// backward accumulates input gradients from the output gradient.
struct GraphNode {
  std::string op;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void()> forward;
  std::function<void()> backward;
};

// Tape of primitive operations in creation order.
class Graph {
 public:
  void record(GraphNode node);

  // Seeds d(loss)/d(loss) = 1 and runs node backward functions in exact
  // reverse creation order. Gradients accumulate into existing buffers.
  void backward(const Tensor& loss);

  // Re-executes every node's forward in creation order.
  void replay();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<GraphNode> nodes_;
};

// Graph that ops record into on this thread, or nullptr (inference mode).
Graph* active_graph();

// Installs a graph as the active one for the current scope.
class GraphScope {
 public:
  explicit GraphScope(Graph& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* previous_;
};

// Backward through the active graph.
void backward(const Tensor& loss);

namespace detail {

// Output tensor that requires grad iff any input does.
Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs);

// Runs forward once, then records the node if the output needs a gradient
// and a graph is active.
void run_and_record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
                    std::function<void()> forward, std::function<void()> backward);

}  // namespace detail

}  // namespace zsl
