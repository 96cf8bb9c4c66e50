#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "giwr/diffcore/tensor.hpp"

namespace giwr::diff {

// A named trainable array owned by a model. Graphs reference it, never own it.
struct Param {
    std::string name;
    Tensor value;
};

class Graph;

// Handle to a node of a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Result of Graph::backward: d(loss)/d(node) for every node, plus lookup by Param.
class Gradients {
public:
    Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes,
              std::unordered_map<const Param*, std::size_t> param_nodes)
        : grads_(std::move(grads)), shapes_(std::move(shapes)), param_nodes_(std::move(param_nodes)) {}

    // Zero tensor when the node did not influence the loss.
    Tensor operator[](Var v) const { return at(v.id); }

    Tensor of(const Param& p) const {
        auto it = param_nodes_.find(&p);
        if (it == param_nodes_.end()) return Tensor(p.value.shape(), 0.0);
        return at(it->second);
    }

    bool touches(const Param& p) const { return param_nodes_.count(&p) != 0; }

private:
    Tensor at(std::size_t id) const {
        if (grads_[id].size() == numel(shapes_[id]) && grads_[id].shape() == shapes_[id]) return grads_[id];
        return Tensor(shapes_[id], 0.0);
    }

    std::vector<Tensor> grads_;
    std::vector<Shape> shapes_;
    std::unordered_map<const Param*, std::size_t> param_nodes_;
};

// Append-only computation graph, rebuilt for every training step.
// Insertion order is a topological order: every parent id is smaller than its child's.
class Graph {
public:
    // Propagates the node's accumulated gradient into its parents.
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() { nodes_.reserve(256); }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value) { return push(std::move(value), {}, nullptr, "const"); }

    // Leaf bound to a model parameter; one node per Param per graph.
    Var param(Param& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return Var{this, it->second};
        Var v = push(p.value, {}, nullptr, "param");
        param_nodes_.emplace(&p, v.id);
        return v;
    }

    Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward, const char* op) {
        const std::size_t id = nodes_.size();
        for (std::size_t p : parents) {
            if (p >= id) throw ContractError(std::string("graph: parent of ") + op + " is not older than it");
        }
        nodes_.push_back(Node{std::move(value), Tensor(Shape{0}), std::move(parents), std::move(backward), op});
        return Var{this, id};
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
    const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
    const char* op(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const { return nodes_.size(); }

    // Zero-initialised accumulation buffer shaped like the node's value.
    Tensor& grad_slot(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
        return n.grad;
    }

    Gradients backward(Var loss) {
        if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
        if (nodes_[loss.id].value.size() != 1) {
            throw ContractError("backward: loss must be scalar, got shape " +
                                to_string(nodes_[loss.id].value.shape()));
        }
        grad_slot(loss.id).values()[0] = 1.0;
        for (std::size_t k = loss.id + 1; k-- > 0;) {
            Node& n = nodes_[k];
            if (!n.backward || n.grad.shape() != n.value.shape()) continue;
            n.backward(*this, k);
        }
        std::vector<Tensor> grads;
        std::vector<Shape> shapes;
        grads.reserve(nodes_.size());
        shapes.reserve(nodes_.size());
        for (Node& n : nodes_) {
            shapes.push_back(n.value.shape());
            grads.push_back(std::move(n.grad));
            n.grad = Tensor(Shape{0});
        }
        return Gradients(std::move(grads), std::move(shapes), param_nodes_);
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        const char* op;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Param*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace giwr::diff
