#include "nodebnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nodebnn/errors.hpp"

namespace nodebnn {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::Conv2d: return "conv2d";
    case Op::GlobalAvgPool: return "global_avg_pool";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Broadcast: return "broadcast";
    case Op::Reshape: return "reshape";
    case Op::Softmax: return "softmax";
    case Op::SoftmaxXent: return "softmax_xent";
    case Op::Gather: return "gather";
  }
  return "?";
}

NodeRef Graph::push(Node n) {
  if (n.op != Op::Input && n.op != Op::Const) {
    n.needs_grad = false;
    for (int p : n.parents) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(p)].needs_grad;
  }
  n.value = Tensor(n.shape);
  nodes_.push_back(std::move(n));
  return NodeRef{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(NodeRef ref) {
  if (!ref.valid() || ref.id >= static_cast<int>(nodes_.size())) throw ShapeError("invalid node reference");
  return nodes_[static_cast<std::size_t>(ref.id)];
}

const Graph::Node& Graph::node(NodeRef ref) const {
  return const_cast<Graph*>(this)->node(ref);
}

NodeRef Graph::input(const std::string& name, Shape shape, bool requires_grad) {
  if (inputs_by_name_.count(name)) throw ShapeError("duplicate input name: " + name);
  Node n;
  n.op = Op::Input;
  n.shape = std::move(shape);
  n.name = name;
  n.needs_grad = requires_grad;
  NodeRef ref = push(std::move(n));
  inputs_by_name_[name] = ref.id;
  return ref;
}

NodeRef Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Const;
  n.shape = value.shape();
  n.payload = std::move(value);
  NodeRef ref = push(std::move(n));
  nodes_.back().value = nodes_.back().payload;
  return ref;
}

static void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + " shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
  }
}

NodeRef Graph::add(NodeRef a, NodeRef b) {
  require_same_shape(node(a).shape, node(b).shape, "add");
  Node n;
  n.op = Op::Add;
  n.parents = {a.id, b.id};
  n.shape = node(a).shape;
  return push(std::move(n));
}

NodeRef Graph::sub(NodeRef a, NodeRef b) {
  require_same_shape(node(a).shape, node(b).shape, "sub");
  Node n;
  n.op = Op::Sub;
  n.parents = {a.id, b.id};
  n.shape = node(a).shape;
  return push(std::move(n));
}

NodeRef Graph::mul(NodeRef a, NodeRef b) {
  require_same_shape(node(a).shape, node(b).shape, "mul");
  Node n;
  n.op = Op::Mul;
  n.parents = {a.id, b.id};
  n.shape = node(a).shape;
  return push(std::move(n));
}

NodeRef Graph::scale(NodeRef a, double c) {
  Node n;
  n.op = Op::Scale;
  n.parents = {a.id};
  n.shape = node(a).shape;
  n.scale = c;
  return push(std::move(n));
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul expects (m,k)x(k,n), got " + shape_str(sa) + " and " + shape_str(sb));
  }
  Node n;
  n.op = Op::MatMul;
  n.parents = {a.id, b.id};
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

NodeRef Graph::conv2d(NodeRef x, NodeRef w, int stride, Pad pad) {
  const Shape& sx = node(x).shape;
  const Shape& sw = node(w).shape;
  if (sx.size() != 4 || sw.size() != 4) {
    throw ShapeError("conv2d expects x (B,C,H,W) and w (O,C,k,k), got " + shape_str(sx) + " and " +
                     shape_str(sw));
  }
  if (sw[1] != sx[1]) throw ShapeError("conv2d channel mismatch");
  if (sw[2] != sw[3]) throw ShapeError("conv2d kernels must be square");
  if (stride < 1) throw ShapeError("conv2d stride must be positive");
  const int k = sw[2];
  int ho, wo;
  if (pad == Pad::Same) {
    ho = (sx[2] + stride - 1) / stride;
    wo = (sx[3] + stride - 1) / stride;
  } else {
    if (sx[2] < k || sx[3] < k) throw ShapeError("conv2d valid padding: input smaller than kernel");
    ho = (sx[2] - k) / stride + 1;
    wo = (sx[3] - k) / stride + 1;
  }
  Node n;
  n.op = Op::Conv2d;
  n.parents = {x.id, w.id};
  n.shape = {sx[0], sw[0], ho, wo};
  n.stride = stride;
  n.pad = pad;
  NodeRef ref = push(std::move(n));
  // im2col scratch: (C*k*k, Ho*Wo) plus an equally-sized adjoint buffer.
  Node& nn = nodes_[static_cast<std::size_t>(ref.id)];
  nn.scratch = Tensor(Shape{sx[1] * k * k, ho * wo});
  return ref;
}

NodeRef Graph::global_avg_pool(NodeRef x) {
  const Shape& sx = node(x).shape;
  if (sx.size() != 4) throw ShapeError("global_avg_pool expects (B,C,H,W), got " + shape_str(sx));
  Node n;
  n.op = Op::GlobalAvgPool;
  n.parents = {x.id};
  n.shape = {sx[0], sx[1]};
  return push(std::move(n));
}

NodeRef Graph::unary(Op op, NodeRef a) {
  Node n;
  n.op = op;
  n.parents = {a.id};
  n.shape = node(a).shape;
  return push(std::move(n));
}

NodeRef Graph::relu(NodeRef a) { return unary(Op::Relu, a); }
NodeRef Graph::tanh(NodeRef a) { return unary(Op::Tanh, a); }
NodeRef Graph::softplus(NodeRef a) { return unary(Op::Softplus, a); }
NodeRef Graph::exp(NodeRef a) { return unary(Op::Exp, a); }
NodeRef Graph::log(NodeRef a) { return unary(Op::Log, a); }
NodeRef Graph::sqrt(NodeRef a) { return unary(Op::Sqrt, a); }
NodeRef Graph::square(NodeRef a) { return unary(Op::Square, a); }

NodeRef Graph::sum(NodeRef a) {
  Node n;
  n.op = Op::Sum;
  n.parents = {a.id};
  n.shape = {};
  return push(std::move(n));
}

NodeRef Graph::mean(NodeRef a) {
  Node n;
  n.op = Op::Mean;
  n.parents = {a.id};
  n.shape = {};
  return push(std::move(n));
}

NodeRef Graph::broadcast(NodeRef a, Shape target) {
  const Shape& src = node(a).shape;
  if (src.size() > target.size()) {
    throw ShapeError("broadcast cannot reduce rank: " + shape_str(src) + " to " + shape_str(target));
  }
  const std::size_t off = target.size() - src.size();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] != 1 && src[i] != target[off + i]) {
      throw ShapeError("broadcast: " + shape_str(src) + " incompatible with " + shape_str(target));
    }
  }
  Node n;
  n.op = Op::Broadcast;
  n.parents = {a.id};
  n.shape = std::move(target);
  return push(std::move(n));
}

NodeRef Graph::reshape(NodeRef a, Shape target) {
  if (shape_size(node(a).shape) != shape_size(target)) {
    throw ShapeError("reshape size mismatch: " + shape_str(node(a).shape) + " to " + shape_str(target));
  }
  Node n;
  n.op = Op::Reshape;
  n.parents = {a.id};
  n.shape = std::move(target);
  return push(std::move(n));
}

NodeRef Graph::softmax(NodeRef logits) {
  const Shape& s = node(logits).shape;
  if (s.size() != 2) throw ShapeError("softmax expects (B,C), got " + shape_str(s));
  Node n;
  n.op = Op::Softmax;
  n.parents = {logits.id};
  n.shape = s;
  return push(std::move(n));
}

NodeRef Graph::softmax_xent(NodeRef logits, NodeRef labels) {
  const Shape& sl = node(logits).shape;
  const Shape& sy = node(labels).shape;
  if (sl.size() != 2 || sy.size() != 1 || sy[0] != sl[0]) {
    throw ShapeError("softmax_xent expects logits (B,C) and labels (B,), got " + shape_str(sl) +
                     " and " + shape_str(sy));
  }
  if (node(labels).needs_grad) throw ShapeError("softmax_xent labels must not require gradients");
  Node n;
  n.op = Op::SoftmaxXent;
  n.parents = {logits.id, labels.id};
  n.shape = {sl[0]};
  NodeRef ref = push(std::move(n));
  nodes_[static_cast<std::size_t>(ref.id)].scratch = Tensor(sl);  // cached softmax rows
  return ref;
}

NodeRef Graph::gather(NodeRef table, NodeRef indices) {
  const Shape& st = node(table).shape;
  const Shape& si = node(indices).shape;
  if (st.empty()) throw ShapeError("gather table must have rank >= 1");
  if (si.size() != 1) throw ShapeError("gather indices must be rank 1, got " + shape_str(si));
  if (node(indices).needs_grad) throw ShapeError("gather indices must not require gradients");
  Node n;
  n.op = Op::Gather;
  n.parents = {table.id, indices.id};
  n.shape = st;
  n.shape[0] = si[0];
  return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeRef n) {
  node(n);  // validity check
  outputs_[name] = n.id;
}

void Graph::evaluate(const std::unordered_map<std::string, Tensor>& bindings) {
  for (const auto& [name, tensor] : bindings) {
    auto it = inputs_by_name_.find(name);
    if (it == inputs_by_name_.end()) throw ShapeError("binding for unknown input: " + name);
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    if (tensor.shape() != n.shape) {
      throw ShapeError("binding '" + name + "' has shape " + shape_str(tensor.shape()) +
                       ", input declared " + shape_str(n.shape));
    }
  }
  if (bindings.size() != inputs_by_name_.size()) {
    for (const auto& [name, id] : inputs_by_name_) {
      if (!bindings.count(name)) throw ShapeError("missing binding for input: " + name);
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.op == Op::Input) {
      n.value = bindings.at(n.name);
    } else if (n.op == Op::Const) {
      // value fixed at construction
    } else {
      forward_node(static_cast<int>(i));
    }
    if (!n.value.all_finite()) {
      throw NumericError(std::string("non-finite output from ") + op_name(n.op) + " node " +
                         std::to_string(i));
    }
  }
  evaluated_ = true;
}

void Graph::backward(NodeRef seed) {
  if (!evaluated_) throw ShapeError("backward before evaluate");
  const Node& s = node(seed);
  if (shape_size(s.shape) != 1) {
    throw ShapeError("backward seed must be scalar, got " + shape_str(s.shape));
  }
  // Ancestors of the seed, via parent edges.
  std::vector<char> active(nodes_.size(), 0);
  active[static_cast<std::size_t>(seed.id)] = 1;
  for (int i = seed.id; i >= 0; --i) {
    if (!active[static_cast<std::size_t>(i)]) continue;
    for (int p : nodes_[static_cast<std::size_t>(i)].parents) active[static_cast<std::size_t>(p)] = 1;
  }
  for (auto& n : nodes_) {
    if (!n.needs_grad) continue;
    if (n.grad.shape() != n.shape || n.grad.size() != shape_size(n.shape)) {
      n.grad = Tensor(n.shape);
    } else {
      n.grad.fill(0.0);
    }
  }
  Node& sn = node(seed);
  if (!sn.needs_grad) return;  // nothing differentiable feeds the seed
  sn.grad[0] = 1.0;
  for (int i = seed.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!active[static_cast<std::size_t>(i)] || !n.needs_grad) continue;
    if (n.op == Op::Input || n.op == Op::Const) continue;
    backward_node(i);
  }
}

const Tensor& Graph::value(NodeRef n) const {
  if (!evaluated_) throw ShapeError("value() before evaluate");
  return node(n).value;
}

const Tensor& Graph::gradient(NodeRef n) const {
  const Node& nd = node(n);
  if (!nd.needs_grad) throw ShapeError("gradient() on node without requires_grad");
  if (nd.grad.size() != shape_size(nd.shape)) throw ShapeError("gradient() before backward");
  return nd.grad;
}

Tensor Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw ShapeError("unknown output: " + name);
  return value(NodeRef{it->second});
}

std::map<std::string, Tensor> Graph::outputs() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs_) out[name] = value(NodeRef{id});
  return out;
}

const Shape& Graph::shape_of(NodeRef n) const { return node(n).shape; }

bool Graph::requires_grad(NodeRef n) const { return node(n).needs_grad; }

std::vector<std::pair<std::string, NodeRef>> Graph::inputs() const {
  std::vector<std::pair<std::string, NodeRef>> out;
  for (const auto& [name, id] : inputs_by_name_) out.emplace_back(name, NodeRef{id});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

double grad_check(Graph& graph, NodeRef seed,
                  const std::unordered_map<std::string, Tensor>& bindings, double eps) {
  try {
    graph.evaluate(bindings);
    graph.backward(seed);
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
  std::vector<std::pair<std::string, NodeRef>> checked;
  for (const auto& [name, ref] : graph.inputs()) {
    if (graph.requires_grad(ref)) checked.emplace_back(name, ref);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(checked.size());
  for (const auto& [name, ref] : checked) analytic.push_back(graph.gradient(ref));

  double worst = 0.0;
  auto point = bindings;
  for (std::size_t c = 0; c < checked.size(); ++c) {
    const std::string& name = checked[c].first;
    Tensor& t = point[name];
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      double fp, fm;
      try {
        t[i] = saved + eps;
        graph.evaluate(point);
        fp = graph.value(seed).item();
        t[i] = saved - eps;
        graph.evaluate(point);
        fm = graph.value(seed).item();
      } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
      }
      t[i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double a = analytic[c][i];
      if (!std::isfinite(fd) || !std::isfinite(a)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  // Restore values at the original point so callers can keep using the graph.
  graph.evaluate(bindings);
  graph.backward(seed);
  return worst;
}

}  // namespace nodebnn
