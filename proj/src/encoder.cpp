#include "mtlkit/encoder.hpp"

#include <cmath>
#include <iostream>

namespace mtlkit {

void log_warn(const std::string& msg) { std::cerr << "[mtlkit] warning: " << msg << "\n"; }

}  // namespace mtlkit

namespace mtlkit::encoder {

using namespace diffcore;

namespace {
constexpr double kInitStd = 0.02;
constexpr double kMaskBias = -1e30;
}  // namespace

void EncoderConfig::validate() const {
    if (vocab_size <= 0 || max_seq_len <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 ||
        d_ff <= 0)
        throw ConfigError("encoder config: all extents must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError(cat("encoder config: d_model ", d_model, " not divisible by n_heads ",
                              n_heads));
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError(cat("encoder config: dropout_rate ", dropout_rate, " outside [0,1)"));
}

Tensor Encoder::reg(Tensor t, const std::string& name) {
    t->name = name;
    params_.push_back(t);
    named_params_.emplace_back(name, t);
    return t;
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    cfg_.validate();
    long d = cfg_.d_model;
    tok_emb_ = reg(randn({cfg_.vocab_size, d}, init_rng, kInitStd, true), "tok_emb");
    pos_emb_ = reg(randn({cfg_.max_seq_len, d}, init_rng, kInitStd, true), "pos_emb");
    for (long l = 0; l < cfg_.n_layers; ++l) {
        LayerParams p;
        std::string pre = cat("layer", l, "/");
        p.wq = reg(randn({d, d}, init_rng, kInitStd, true), pre + "wq");
        p.bq = reg(make_tensor({d}, true, pre + "bq"), pre + "bq");
        p.wk = reg(randn({d, d}, init_rng, kInitStd, true), pre + "wk");
        p.bk = reg(make_tensor({d}, true, pre + "bk"), pre + "bk");
        p.wv = reg(randn({d, d}, init_rng, kInitStd, true), pre + "wv");
        p.bv = reg(make_tensor({d}, true, pre + "bv"), pre + "bv");
        p.wo = reg(randn({d, d}, init_rng, kInitStd, true), pre + "wo");
        p.bo = reg(make_tensor({d}, true, pre + "bo"), pre + "bo");
        p.ln1_g = reg(full({d}, 1.0, true), pre + "ln1_g");
        p.ln1_b = reg(make_tensor({d}, true), pre + "ln1_b");
        p.ln2_g = reg(full({d}, 1.0, true), pre + "ln2_g");
        p.ln2_b = reg(make_tensor({d}, true), pre + "ln2_b");
        p.w1 = reg(randn({d, cfg_.d_ff}, init_rng, kInitStd, true), pre + "w1");
        p.b1 = reg(make_tensor({cfg_.d_ff}, true), pre + "b1");
        p.w2 = reg(randn({cfg_.d_ff, d}, init_rng, kInitStd, true), pre + "w2");
        p.b2 = reg(make_tensor({d}, true), pre + "b2");
        layers_.push_back(p);
    }
    lnf_g_ = reg(full({d}, 1.0, true), "final_ln_g");
    lnf_b_ = reg(make_tensor({d}, true), "final_ln_b");
}

long Encoder::parameter_count() const {
    long n = 0;
    for (const auto& p : params_) n += p->numel();
    return n;
}

void Encoder::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

Tensor Encoder::encode(Graph& g, const TokenBatch& batch, bool train_mode, Rng* dropout_rng) {
    if (batch.b <= 0 || batch.s <= 0 ||
        batch.ids.size() != static_cast<size_t>(batch.b * batch.s))
        throw ShapeError("encode: inconsistent token batch");
    const TokenBatch* in = &batch;
    TokenBatch truncated;
    if (batch.s > cfg_.max_seq_len) {
        log_warn(cat("encode: sequence length ", batch.s, " exceeds max_seq_len ",
                     cfg_.max_seq_len, ", truncating"));
        truncated.b = batch.b;
        truncated.s = cfg_.max_seq_len;
        for (long r = 0; r < batch.b; ++r) {
            for (long j = 0; j < cfg_.max_seq_len; ++j) {
                truncated.ids.push_back(batch.ids[static_cast<size_t>(r * batch.s + j)]);
                truncated.pad_mask.push_back(
                    batch.pad_mask.empty() ? 1.0
                                           : batch.pad_mask[static_cast<size_t>(r * batch.s + j)]);
            }
        }
        in = &truncated;
    }
    long b = in->b, s = in->s, d = cfg_.d_model, H = cfg_.n_heads, dh = cfg_.head_dim();
    bool drop = train_mode && cfg_.dropout_rate > 0.0;
    if (drop && dropout_rng == nullptr)
        throw ConfigError("encode: dropout enabled but no rng supplied");

    std::vector<long> pos_ids(static_cast<size_t>(b * s));
    for (long r = 0; r < b; ++r)
        for (long j = 0; j < s; ++j) pos_ids[static_cast<size_t>(r * s + j)] = j;

    Tensor x = add(g, embedding(g, tok_emb_, in->ids, {b, s}),
                   embedding(g, pos_emb_, pos_ids, {b, s}));
    if (drop) x = dropout(g, x, cfg_.dropout_rate, *dropout_rng, true);

    // Additive key mask shared by every layer: padded keys get a large
    // negative bias before the softmax.
    std::vector<double> mask_bias;
    if (!in->pad_mask.empty() && in->has_padding()) {
        mask_bias.assign(static_cast<size_t>(b * H * s * s), 0.0);
        for (long r = 0; r < b; ++r)
            for (long kj = 0; kj < s; ++kj) {
                if (in->pad_mask[static_cast<size_t>(r * s + kj)] != 0.0) continue;
                for (long h = 0; h < H; ++h)
                    for (long qi = 0; qi < s; ++qi)
                        mask_bias[static_cast<size_t>(((r * H + h) * s + qi) * s + kj)] =
                            kMaskBias;
            }
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    auto split_heads = [&](Tensor t) {
        // [b, s, d] -> [b*H, s, dh]
        t = reshape(g, t, {b, s, H, dh});
        t = permute(g, t, {0, 2, 1, 3});
        return reshape(g, t, {b * H, s, dh});
    };

    for (const auto& p : layers_) {
        Tensor h1 = layer_norm(g, x, p.ln1_g, p.ln1_b);
        Tensor q = split_heads(add_bias(g, matmul(g, h1, p.wq), p.bq));
        Tensor k = split_heads(add_bias(g, matmul(g, h1, p.wk), p.bk));
        Tensor v = split_heads(add_bias(g, matmul(g, h1, p.wv), p.bv));

        Tensor scores = scale(g, bmm(g, q, permute(g, k, {0, 2, 1})), inv_sqrt_dh);
        if (!mask_bias.empty()) scores = add_const(g, scores, mask_bias);
        Tensor probs = softmax(g, scores);
        if (drop) probs = dropout(g, probs, cfg_.dropout_rate, *dropout_rng, true);

        Tensor ctx = bmm(g, probs, v);  // [b*H, s, dh]
        ctx = reshape(g, ctx, {b, H, s, dh});
        ctx = permute(g, ctx, {0, 2, 1, 3});
        ctx = reshape(g, ctx, {b, s, d});

        Tensor attn = add_bias(g, matmul(g, ctx, p.wo), p.bo);
        if (drop) attn = dropout(g, attn, cfg_.dropout_rate, *dropout_rng, true);
        x = add(g, x, attn);

        Tensor h2 = layer_norm(g, x, p.ln2_g, p.ln2_b);
        Tensor ff = gelu(g, add_bias(g, matmul(g, h2, p.w1), p.b1));
        ff = add_bias(g, matmul(g, ff, p.w2), p.b2);
        if (drop) ff = dropout(g, ff, cfg_.dropout_rate, *dropout_rng, true);
        x = add(g, x, ff);
    }
    return layer_norm(g, x, lnf_g_, lnf_b_);
}

HeadGradMatrix Encoder::head_grad_norms() const {
    HeadGradMatrix m;
    m.layers = cfg_.n_layers;
    m.heads = cfg_.n_heads;
    m.v.assign(static_cast<size_t>(m.layers * m.heads), 0.0);
    long d = cfg_.d_model, dh = cfg_.head_dim();
    for (long l = 0; l < cfg_.n_layers; ++l) {
        const auto& p = layers_[static_cast<size_t>(l)];
        for (long h = 0; h < cfg_.n_heads; ++h) {
            double sum = 0.0;
            // Column block [h*dh, (h+1)*dh) of wq/wk/wv.
            for (long r = 0; r < d; ++r)
                for (long c = h * dh; c < (h + 1) * dh; ++c) {
                    sum += std::abs(p.wq->grad[r * d + c]);
                    sum += std::abs(p.wk->grad[r * d + c]);
                    sum += std::abs(p.wv->grad[r * d + c]);
                }
            // Row block of wo.
            for (long r = h * dh; r < (h + 1) * dh; ++r)
                for (long c = 0; c < d; ++c) sum += std::abs(p.wo->grad[r * d + c]);
            m.v[static_cast<size_t>(l * cfg_.n_heads + h)] = sum;
        }
    }
    bool all_zero = true;
    for (double v : m.v) all_zero = all_zero && v == 0.0;
    m.no_backward_warning = all_zero;
    return m;
}

const std::vector<Tensor>& ParamPartition::task_params(const std::string& task_id) const {
    for (const auto& [id, params] : per_task)
        if (id == task_id) return params;
    throw ConfigError(cat("parameter partition: task '", task_id, "' is not registered"));
}

ParamPartition parameter_partition(
    const Encoder& enc,
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& registered_heads) {
    ParamPartition part;
    part.shared = enc.parameters();
    part.per_task = registered_heads;
    return part;
}

}  // namespace mtlkit::encoder
