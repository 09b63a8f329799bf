#include "mtlkit/tensor.hpp"

namespace mtlkit::diffcore {

long numel(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
        if (d <= 0) throw ShapeError(cat("non-positive extent in shape ", shape_str(shape)));
        n *= d;
    }
    return n;
}

Tensor make_tensor(std::vector<long> shape, bool requires_grad, std::string name) {
    auto t = std::make_shared<TensorData>();
    long n = numel(shape);
    t->shape = std::move(shape);
    t->values.assign(static_cast<size_t>(n), 0.0);
    t->grad.assign(static_cast<size_t>(n), 0.0);
    t->requires_grad = requires_grad;
    t->name = std::move(name);
    return t;
}

Tensor from_values(std::vector<long> shape, std::vector<double> values, bool requires_grad,
                   std::string name) {
    long n = numel(shape);
    if (static_cast<long>(values.size()) != n)
        throw ShapeError(cat("from_values: shape ", shape_str(shape), " wants ", n,
                             " values, got ", values.size()));
    auto t = std::make_shared<TensorData>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->grad.assign(static_cast<size_t>(n), 0.0);
    t->requires_grad = requires_grad;
    t->name = std::move(name);
    return t;
}

Tensor full(std::vector<long> shape, double value, bool requires_grad) {
    auto t = make_tensor(std::move(shape), requires_grad);
    std::fill(t->values.begin(), t->values.end(), value);
    return t;
}

Tensor randn(std::vector<long> shape, Rng& rng, double stddev, bool requires_grad,
             std::string name) {
    auto t = make_tensor(std::move(shape), requires_grad, std::move(name));
    for (double& v : t->values) v = rng.normal(0.0, stddev);
    return t;
}

void zero_grad(std::span<const Tensor> tensors) {
    for (const auto& t : tensors) t->zero_grad();
}

void Graph::backward(const Tensor& loss) {
    if (loss->numel() != 1)
        throw ShapeError(cat("backward: loss must be scalar, got shape ",
                             shape_str(loss->shape)));
    GradTable table;
    table.slot(loss)[0] = 1.0;
    last_replay_count_ = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        ++last_replay_count_;
        if (table.find(it->out.get()) != nullptr) it->fn(table);
    }
    for (const auto& [ptr, local] : table) {
        if (!ptr->requires_grad) continue;
        auto* t = const_cast<TensorData*>(ptr);
        for (size_t i = 0; i < local.size(); ++i) t->grad[i] += local[i];
    }
}

}  // namespace mtlkit::diffcore
