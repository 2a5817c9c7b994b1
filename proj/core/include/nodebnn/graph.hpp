#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "nodebnn/tensor.hpp"

namespace nodebnn {

enum class Op {
  Input,
  Const,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Conv2d,
  GlobalAvgPool,
  Relu,
  Tanh,
  Softplus,
  Exp,
  Log,
  Sqrt,
  Square,
  Sum,
  Mean,
  Broadcast,
  Reshape,
  Softmax,
  SoftmaxXent,
  Gather,
};

const char* op_name(Op op);

enum class Pad { Same, Valid };

struct NodeRef {
  int id = -1;
  bool valid() const { return id >= 0; }
  friend bool operator==(NodeRef a, NodeRef b) { return a.id == b.id; }
};

/// Static expression graph with reverse-mode differentiation.
///
/// Nodes are appended in topological order by construction. Values and
/// gradients live in slots owned by the graph, sized once at build time and
/// reused across evaluations, so a graph is single-threaded; independent
/// graphs may run concurrently.
class Graph {
 public:
  // -- construction -------------------------------------------------------
  NodeRef input(const std::string& name, Shape shape, bool requires_grad = false);
  NodeRef constant(Tensor value);
  NodeRef constant(double value) { return constant(Tensor::scalar(value)); }

  NodeRef add(NodeRef a, NodeRef b);
  NodeRef sub(NodeRef a, NodeRef b);
  NodeRef mul(NodeRef a, NodeRef b);
  NodeRef scale(NodeRef a, double c);
  NodeRef matmul(NodeRef a, NodeRef b);
  NodeRef conv2d(NodeRef x, NodeRef w, int stride, Pad pad);
  NodeRef global_avg_pool(NodeRef x);
  NodeRef relu(NodeRef a);
  NodeRef tanh(NodeRef a);
  NodeRef softplus(NodeRef a);
  NodeRef exp(NodeRef a);
  NodeRef log(NodeRef a);
  NodeRef sqrt(NodeRef a);
  NodeRef square(NodeRef a);
  NodeRef sum(NodeRef a);   // reduce to scalar
  NodeRef mean(NodeRef a);  // reduce to scalar
  NodeRef broadcast(NodeRef a, Shape target);  // right-aligned expansion
  NodeRef reshape(NodeRef a, Shape target);
  NodeRef softmax(NodeRef logits);                       // rows of (B, C)
  NodeRef softmax_xent(NodeRef logits, NodeRef labels);  // (B, C) x (B,) -> (B,)
  NodeRef gather(NodeRef table, NodeRef indices);        // rows along axis 0

  void mark_output(const std::string& name, NodeRef node);

  // -- execution -----------------------------------------------------------
  /// Computes every node value in one topological pass. Bindings must cover
  /// exactly the declared inputs. Throws ShapeError on malformed bindings and
  /// NumericError if any node produces a non-finite value.
  void evaluate(const std::unordered_map<std::string, Tensor>& bindings);
  bool evaluated() const { return evaluated_; }

  /// Reverse pass from a scalar seed; gradients accumulate by sum over
  /// fan-out. Inputs not on a path to the seed keep zero gradients.
  void backward(NodeRef seed);

  const Tensor& value(NodeRef node) const;
  const Tensor& gradient(NodeRef node) const;
  Tensor output(const std::string& name) const;
  std::map<std::string, Tensor> outputs() const;

  const Shape& shape_of(NodeRef node) const;
  bool requires_grad(NodeRef node) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }
  std::vector<std::pair<std::string, NodeRef>> inputs() const;

 private:
  struct Node {
    Op op;
    std::vector<int> parents;
    Shape shape;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    double scale = 1.0;       // Scale
    int stride = 1;           // Conv2d
    Pad pad = Pad::Valid;     // Conv2d
    Tensor payload;           // Const
    std::string name;         // Input
    // Conv2d scratch: im2col buffer reused across evaluations.
    Tensor scratch;
  };

  NodeRef push(Node node);
  Node& node(NodeRef ref);
  const Node& node(NodeRef ref) const;
  NodeRef unary(Op op, NodeRef a);
  void forward_node(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> inputs_by_name_;
  std::map<std::string, int> outputs_;
  bool evaluated_ = false;
};

/// Max relative error between analytic gradients and central differences
/// over every requires_grad input coordinate, at the given binding point.
/// Returns +inf if a non-finite value is encountered.
double grad_check(Graph& graph, NodeRef seed,
                  const std::unordered_map<std::string, Tensor>& bindings, double eps);

}  // namespace nodebnn
