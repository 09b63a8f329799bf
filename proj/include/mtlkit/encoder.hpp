#pragma once

#include <optional>

#include "mtlkit/ops.hpp"

namespace mtlkit::encoder {

using diffcore::Graph;
using diffcore::Tensor;

struct EncoderConfig {
    long vocab_size = 1024;
    long max_seq_len = 64;
    long d_model = 64;
    long n_layers = 4;
    long n_heads = 4;
    long d_ff = 128;
    double dropout_rate = 0.0;

    long head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

/// Token ids for one padded batch, row-major [b x s]. Position 0 of every
/// sequence is the CLS slot. pad_mask is 1 for real positions, 0 for padding.
struct TokenBatch {
    long b = 0;
    long s = 0;
    std::vector<long> ids;
    std::vector<double> pad_mask;

    bool has_padding() const {
        for (double m : pad_mask)
            if (m == 0.0) return true;
        return false;
    }
};

struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

/// Accumulated absolute attention-head gradient mass, one entry per
/// (layer, head). Raw sums; normalization happens downstream.
struct HeadGradMatrix {
    long layers = 0;
    long heads = 0;
    std::vector<double> v;
    bool no_backward_warning = false;  // set when everything was zero

    double at(long l, long h) const { return v[static_cast<size_t>(l * heads + h)]; }
};

/// Pre-norm transformer encoder with hard parameter sharing: one instance
/// serves every task of a run, heads live elsewhere.
class Encoder {
public:
    Encoder(const EncoderConfig& cfg, Rng& init_rng);

    const EncoderConfig& config() const { return cfg_; }

    /// Forward pass. Sequences longer than max_seq_len are truncated with a
    /// warning. Deterministic whenever train_mode is off or dropout is 0.
    Tensor encode(Graph& g, const TokenBatch& batch, bool train_mode, Rng* dropout_rng);

    /// Sum of |grad| over the parameters exclusive to each attention head:
    /// Q/K/V column blocks and the O-projection row block. Layer norms,
    /// biases and FFN weights are unattributed.
    HeadGradMatrix head_grad_norms() const;

    const std::vector<Tensor>& parameters() const { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
        return named_params_;
    }
    long parameter_count() const;
    void zero_grad();

private:
    EncoderConfig cfg_;
    Tensor tok_emb_, pos_emb_, lnf_g_, lnf_b_;
    std::vector<LayerParams> layers_;
    std::vector<Tensor> params_;
    std::vector<std::pair<std::string, Tensor>> named_params_;

    Tensor reg(Tensor t, const std::string& name);
};

/// Disjoint split of all trainable tensors into the shared encoder set and
/// one set per registered task head. Heads are registered by the trainer.
struct ParamPartition {
    std::vector<Tensor> shared;
    std::vector<std::pair<std::string, std::vector<Tensor>>> per_task;

    const std::vector<Tensor>& task_params(const std::string& task_id) const;
};

ParamPartition parameter_partition(
    const Encoder& enc,
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& registered_heads);

}  // namespace mtlkit::encoder
