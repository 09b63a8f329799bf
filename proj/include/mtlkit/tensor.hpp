#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtlkit/common.hpp"

namespace mtlkit::diffcore {

/// Dense f64 tensor, row-major. `grad` always has the same length as
/// `values` and is all-zero after zero_grad().
struct TensorData {
    std::vector<long> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string name;

    long numel() const { return static_cast<long>(values.size()); }
    long ndim() const { return static_cast<long>(shape.size()); }
    long dim(long i) const { return shape[static_cast<size_t>(i)]; }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using Tensor = std::shared_ptr<TensorData>;

long numel(const std::vector<long>& shape);

Tensor make_tensor(std::vector<long> shape, bool requires_grad = false, std::string name = "");
Tensor from_values(std::vector<long> shape, std::vector<double> values,
                   bool requires_grad = false, std::string name = "");
Tensor full(std::vector<long> shape, double value, bool requires_grad = false);
Tensor randn(std::vector<long> shape, Rng& rng, double stddev, bool requires_grad = false,
             std::string name = "");

void zero_grad(std::span<const Tensor> tensors);

/// Per-backward gradient table. Gradients are staged here during one replay
/// and folded into the persistent `grad` buffers at the end, so calling
/// backward twice doubles every gradient, leaves and intermediates alike.
class GradTable {
public:
    std::vector<double>& slot(const Tensor& t) {
        auto [it, inserted] = table_.try_emplace(t.get());
        if (inserted) it->second.assign(t->values.size(), 0.0);
        return it->second;
    }
    const std::vector<double>* find(const TensorData* t) const {
        auto it = table_.find(t);
        return it == table_.end() ? nullptr : &it->second;
    }
    auto begin() const { return table_.begin(); }
    auto end() const { return table_.end(); }

private:
    std::unordered_map<const TensorData*, std::vector<double>> table_;
};

/// Define-by-run tape. Records one node per executed primitive; backward
/// replays the tape once, in reverse execution order.
class Graph {
public:
    using BackwardFn = std::function<void(GradTable&)>;

    void record(Tensor out, BackwardFn fn) {
        nodes_.push_back({std::move(out), std::move(fn)});
    }

    /// Accumulates d(loss)/d(t) into t->grad for every requires_grad tensor
    /// reachable from `loss`. Rejects non-scalar inputs.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Nodes replayed by the most recent backward() (reachable and not).
    size_t last_replay_count() const { return last_replay_count_; }

private:
    struct Node {
        Tensor out;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
    size_t last_replay_count_ = 0;
};

}  // namespace mtlkit::diffcore
