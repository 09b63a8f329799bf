#include "mtlkit/ops.hpp"

#include <cmath>

#include "mtlkit/kernels.hpp"

namespace mtlkit::diffcore {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const auto* t : ts)
        if ((*t)->requires_grad) return true;
    return false;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a->shape != b->shape)
        throw ShapeError(cat(op, ": shape mismatch ", shape_str(a->shape), " vs ",
                             shape_str(b->shape)));
}

long last_dim(const Tensor& t) { return t->shape.back(); }

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<long> strides_of(const std::vector<long>& shape) {
    std::vector<long> st(shape.size());
    long acc = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        st[i] = acc;
        acc *= shape[i];
    }
    return st;
}

// dst[permuted index] = src[index]; dst extents are shape[axes[i]].
void permute_copy(const double* src, const std::vector<long>& shape,
                  const std::vector<int>& axes, double* dst, bool accumulate) {
    size_t nd = shape.size();
    std::vector<long> out_shape(nd);
    for (size_t i = 0; i < nd; ++i) out_shape[i] = shape[static_cast<size_t>(axes[i])];
    auto in_strides = strides_of(shape);
    auto out_strides = strides_of(out_shape);
    long n = 1;
    for (long d : shape) n *= d;
    std::vector<long> idx(nd, 0);
    for (long flat = 0; flat < n; ++flat) {
        long out_flat = 0;
        for (size_t i = 0; i < nd; ++i)
            out_flat += idx[static_cast<size_t>(axes[i])] * out_strides[i];
        if (accumulate)
            dst[out_flat] += src[flat];
        else
            dst[out_flat] = src[flat];
        for (size_t i = nd; i-- > 0;) {
            if (++idx[i] < shape[i]) break;
            idx[i] = 0;
        }
    }
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    if (a->ndim() < 2 || b->ndim() != 2)
        throw ShapeError(cat("matmul: need [.., m, k] x [k, n], got ", shape_str(a->shape),
                             " x ", shape_str(b->shape)));
    long k = last_dim(a);
    if (k != b->dim(0))
        throw ShapeError(cat("matmul: inner extents disagree, ", shape_str(a->shape), " x ",
                             shape_str(b->shape)));
    long n = b->dim(1);
    long m = a->numel() / k;
    std::vector<long> out_shape(a->shape.begin(), a->shape.end() - 1);
    out_shape.push_back(n);
    Tensor out = make_tensor(std::move(out_shape));
    kernels::gemm_nn(a->values.data(), b->values.data(), out->values.data(), m, k, n, false);
    out->requires_grad = any_grad({&a, &b});
    if (out->requires_grad) {
        g.record(out, [out, a, b, m, k, n](GradTable& t) {
            const auto* up = t.find(out.get());
            if (a->requires_grad)
                kernels::gemm_nt(up->data(), b->values.data(), t.slot(a).data(), m, n, k, true);
            if (b->requires_grad)
                kernels::gemm_tn(a->values.data(), up->data(), t.slot(b).data(), k, m, n, true);
        });
    }
    return out;
}

Tensor bmm(Graph& g, const Tensor& a, const Tensor& b) {
    if (a->ndim() != 3 || b->ndim() != 3 || a->dim(0) != b->dim(0) || a->dim(2) != b->dim(1))
        throw ShapeError(cat("bmm: need [B, m, k] x [B, k, n], got ", shape_str(a->shape),
                             " x ", shape_str(b->shape)));
    long batch = a->dim(0), m = a->dim(1), k = a->dim(2), n = b->dim(2);
    Tensor out = make_tensor({batch, m, n});
    kernels::bgemm_nn(a->values.data(), b->values.data(), out->values.data(), batch, m, k, n,
                      false);
    out->requires_grad = any_grad({&a, &b});
    if (out->requires_grad) {
        g.record(out, [out, a, b, batch, m, k, n](GradTable& t) {
            const auto* up = t.find(out.get());
            if (a->requires_grad)
                kernels::bgemm_nt(up->data(), b->values.data(), t.slot(a).data(), batch, m, n, k,
                                  true);
            if (b->requires_grad)
                kernels::bgemm_tn(a->values.data(), up->data(), t.slot(b).data(), batch, k, m, n,
                                  true);
        });
    }
    return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tensor out = make_tensor(a->shape);
    for (long i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] + b->values[i];
    out->requires_grad = any_grad({&a, &b});
    if (out->requires_grad) {
        g.record(out, [out, a, b](GradTable& t) {
            const auto* up = t.find(out.get());
            if (a->requires_grad) {
                auto& da = t.slot(a);
                for (size_t i = 0; i < up->size(); ++i) da[i] += (*up)[i];
            }
            if (b->requires_grad) {
                auto& db = t.slot(b);
                for (size_t i = 0; i < up->size(); ++i) db[i] += (*up)[i];
            }
        });
    }
    return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    Tensor out = make_tensor(a->shape);
    for (long i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] * b->values[i];
    out->requires_grad = any_grad({&a, &b});
    if (out->requires_grad) {
        g.record(out, [out, a, b](GradTable& t) {
            const auto* up = t.find(out.get());
            if (a->requires_grad) {
                auto& da = t.slot(a);
                for (size_t i = 0; i < up->size(); ++i) da[i] += (*up)[i] * b->values[i];
            }
            if (b->requires_grad) {
                auto& db = t.slot(b);
                for (size_t i = 0; i < up->size(); ++i) db[i] += (*up)[i] * a->values[i];
            }
        });
    }
    return out;
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
    long d = last_dim(x);
    if (bias->ndim() != 1 || bias->dim(0) != d)
        throw ShapeError(cat("add_bias: bias ", shape_str(bias->shape), " does not match ",
                             shape_str(x->shape)));
    long rows = x->numel() / d;
    Tensor out = make_tensor(x->shape);
    for (long r = 0; r < rows; ++r)
        for (long j = 0; j < d; ++j)
            out->values[r * d + j] = x->values[r * d + j] + bias->values[j];
    out->requires_grad = any_grad({&x, &bias});
    if (out->requires_grad) {
        g.record(out, [out, x, bias, rows, d](GradTable& t) {
            const auto* up = t.find(out.get());
            if (x->requires_grad) {
                auto& dx = t.slot(x);
                for (size_t i = 0; i < up->size(); ++i) dx[i] += (*up)[i];
            }
            if (bias->requires_grad) {
                auto& db = t.slot(bias);
                for (long r = 0; r < rows; ++r)
                    for (long j = 0; j < d; ++j) db[j] += (*up)[r * d + j];
            }
        });
    }
    return out;
}

Tensor scale(Graph& g, const Tensor& x, double c) {
    Tensor out = make_tensor(x->shape);
    for (long i = 0; i < out->numel(); ++i) out->values[i] = c * x->values[i];
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x, c](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i) dx[i] += c * (*up)[i];
        });
    }
    return out;
}

Tensor relu(Graph& g, const Tensor& x) {
    Tensor out = make_tensor(x->shape);
    for (long i = 0; i < out->numel(); ++i)
        out->values[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i)
                if (x->values[i] > 0.0) dx[i] += (*up)[i];
        });
    }
    return out;
}

Tensor gelu(Graph& g, const Tensor& x) {
    Tensor out = make_tensor(x->shape);
    for (long i = 0; i < out->numel(); ++i) {
        double v = x->values[i];
        out->values[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i) {
                double v = x->values[i];
                double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                dx[i] += (*up)[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

Tensor tanh_act(Graph& g, const Tensor& x) {
    Tensor out = make_tensor(x->shape);
    for (long i = 0; i < out->numel(); ++i) out->values[i] = std::tanh(x->values[i]);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i) {
                double y = out->values[i];
                dx[i] += (*up)[i] * (1.0 - y * y);
            }
        });
    }
    return out;
}

Tensor softmax(Graph& g, const Tensor& x) {
    long d = last_dim(x);
    long rows = x->numel() / d;
    Tensor out = make_tensor(x->shape);
    kernels::softmax_rows(x->values.data(), out->values.data(), rows, d);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x, rows, d](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (long r = 0; r < rows; ++r) {
                const double* y = out->values.data() + r * d;
                const double* dy = up->data() + r * d;
                double dot = 0.0;
                for (long j = 0; j < d; ++j) dot += dy[j] * y[j];
                for (long j = 0; j < d; ++j) dx[r * d + j] += y[j] * (dy[j] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    long d = last_dim(x);
    if (gain->numel() != d || bias->numel() != d)
        throw ShapeError(cat("layer_norm: gain/bias must have ", d, " entries"));
    long rows = x->numel() / d;
    Tensor out = make_tensor(x->shape);
    auto xhat = std::make_shared<std::vector<double>>(x->values.size());
    auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    for (long r = 0; r < rows; ++r) {
        const double* row = x->values.data() + r * d;
        double mean = 0.0;
        for (long j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (long j = 0; j < d; ++j) {
            double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[static_cast<size_t>(r)] = inv;
        for (long j = 0; j < d; ++j) {
            double xh = (row[j] - mean) * inv;
            (*xhat)[static_cast<size_t>(r * d + j)] = xh;
            out->values[r * d + j] = gain->values[j] * xh + bias->values[j];
        }
    }
    out->requires_grad = any_grad({&x, &gain, &bias});
    if (out->requires_grad) {
        g.record(out, [out, x, gain, bias, xhat, inv_sigma, rows, d](GradTable& t) {
            const auto* up = t.find(out.get());
            for (long r = 0; r < rows; ++r) {
                const double* dy = up->data() + r * d;
                const double* xh = xhat->data() + r * d;
                if (x->requires_grad) {
                    auto& dx = t.slot(x);
                    double s1 = 0.0, s2 = 0.0;
                    for (long j = 0; j < d; ++j) {
                        double gdy = gain->values[j] * dy[j];
                        s1 += gdy;
                        s2 += gdy * xh[j];
                    }
                    double inv = (*inv_sigma)[static_cast<size_t>(r)];
                    double n = static_cast<double>(d);
                    for (long j = 0; j < d; ++j) {
                        double gdy = gain->values[j] * dy[j];
                        dx[r * d + j] += inv * (gdy - s1 / n - xh[j] * s2 / n);
                    }
                }
                if (gain->requires_grad) {
                    auto& dg = t.slot(gain);
                    for (long j = 0; j < d; ++j) dg[j] += dy[j] * xh[j];
                }
                if (bias->requires_grad) {
                    auto& db = t.slot(bias);
                    for (long j = 0; j < d; ++j) db[j] += dy[j];
                }
            }
        });
    }
    return out;
}

Tensor embedding(Graph& g, const Tensor& table, const std::vector<long>& ids,
                 std::vector<long> batch_shape) {
    if (table->ndim() != 2)
        throw ShapeError(cat("embedding: table must be 2-d, got ", shape_str(table->shape)));
    long rows = numel(batch_shape);
    if (rows != static_cast<long>(ids.size()))
        throw ShapeError(cat("embedding: ", ids.size(), " ids vs batch shape ",
                             shape_str(batch_shape)));
    long v = table->dim(0), d = table->dim(1);
    for (long id : ids)
        if (id < 0 || id >= v)
            throw DataError(cat("embedding: id ", id, " out of range [0, ", v, ")"));
    batch_shape.push_back(d);
    Tensor out = make_tensor(std::move(batch_shape));
    for (long r = 0; r < rows; ++r) {
        const double* src = table->values.data() + ids[static_cast<size_t>(r)] * d;
        std::copy(src, src + d, out->values.data() + r * d);
    }
    out->requires_grad = table->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, table, ids, rows, d](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dt = t.slot(table);
            for (long r = 0; r < rows; ++r) {
                double* dst = dt.data() + ids[static_cast<size_t>(r)] * d;
                const double* src = up->data() + r * d;
                for (long j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor reshape(Graph& g, const Tensor& x, std::vector<long> shape) {
    if (numel(shape) != x->numel())
        throw ShapeError(cat("reshape: ", shape_str(x->shape), " to ", shape_str(shape),
                             " changes element count"));
    Tensor out = make_tensor(std::move(shape));
    out->values = x->values;
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i) dx[i] += (*up)[i];
        });
    }
    return out;
}

Tensor permute(Graph& g, const Tensor& x, const std::vector<int>& axes) {
    size_t nd = static_cast<size_t>(x->ndim());
    if (axes.size() != nd) throw ShapeError("permute: axes length must equal rank");
    std::vector<bool> seen(nd, false);
    std::vector<long> out_shape(nd);
    for (size_t i = 0; i < nd; ++i) {
        int a = axes[i];
        if (a < 0 || static_cast<size_t>(a) >= nd || seen[static_cast<size_t>(a)])
            throw ShapeError("permute: axes must be a permutation");
        seen[static_cast<size_t>(a)] = true;
        out_shape[i] = x->shape[static_cast<size_t>(a)];
    }
    std::vector<int> inv(nd);
    for (size_t i = 0; i < nd; ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int>(i);
    Tensor out = make_tensor(out_shape);
    permute_copy(x->values.data(), x->shape, axes, out->values.data(), false);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x, inv](GradTable& t) {
            const auto* up = t.find(out.get());
            permute_copy(up->data(), out->shape, inv, t.slot(x).data(), true);
        });
    }
    return out;
}

Tensor sum_all(Graph& g, const Tensor& x) {
    Tensor out = make_tensor({1});
    double s = 0.0;
    for (double v : x->values) s += v;
    out->values[0] = s;
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x](GradTable& t) {
            double up = (*t.find(out.get()))[0];
            auto& dx = t.slot(x);
            for (double& v : dx) v += up;
        });
    }
    return out;
}

Tensor mean_all(Graph& g, const Tensor& x) {
    Tensor out = make_tensor({1});
    double s = 0.0;
    for (double v : x->values) s += v;
    double n = static_cast<double>(x->numel());
    out->values[0] = s / n;
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x, n](GradTable& t) {
            double up = (*t.find(out.get()))[0] / n;
            auto& dx = t.slot(x);
            for (double& v : dx) v += up;
        });
    }
    return out;
}

Tensor concat(Graph& g, const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const auto& s0 = parts[0]->shape;
    size_t nd = s0.size();
    if (axis < 0 || static_cast<size_t>(axis) >= nd) throw ShapeError("concat: bad axis");
    long total_axis = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != nd) throw ShapeError("concat: rank mismatch");
        for (size_t i = 0; i < nd; ++i)
            if (i != static_cast<size_t>(axis) && p->shape[i] != s0[i])
                throw ShapeError(cat("concat: shape mismatch ", shape_str(p->shape), " vs ",
                                     shape_str(s0)));
        total_axis += p->shape[static_cast<size_t>(axis)];
    }
    std::vector<long> out_shape = s0;
    out_shape[static_cast<size_t>(axis)] = total_axis;
    Tensor out = make_tensor(out_shape);

    long outer = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
    long inner = 1;
    for (size_t i = static_cast<size_t>(axis) + 1; i < nd; ++i) inner *= s0[i];

    long offset = 0;
    for (const auto& p : parts) {
        long pa = p->shape[static_cast<size_t>(axis)];
        for (long o = 0; o < outer; ++o)
            std::copy(p->values.data() + o * pa * inner, p->values.data() + (o + 1) * pa * inner,
                      out->values.data() + (o * total_axis + offset) * inner);
        offset += pa;
    }
    bool rg = false;
    for (const auto& p : parts) rg = rg || p->requires_grad;
    out->requires_grad = rg;
    if (rg) {
        g.record(out, [out, parts, axis, outer, inner, total_axis](GradTable& t) {
            const auto* up = t.find(out.get());
            long offset = 0;
            for (const auto& p : parts) {
                long pa = p->shape[static_cast<size_t>(axis)];
                if (p->requires_grad) {
                    auto& dp = t.slot(p);
                    for (long o = 0; o < outer; ++o) {
                        const double* src = up->data() + (o * total_axis + offset) * inner;
                        double* dst = dp.data() + o * pa * inner;
                        for (long i = 0; i < pa * inner; ++i) dst[i] += src[i];
                    }
                }
                offset += pa;
            }
        });
    }
    return out;
}

Tensor slice(Graph& g, const Tensor& x, int axis, long start, long len) {
    size_t nd = x->shape.size();
    if (axis < 0 || static_cast<size_t>(axis) >= nd) throw ShapeError("slice: bad axis");
    long extent = x->shape[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > extent)
        throw ShapeError(cat("slice: range [", start, ", ", start + len, ") out of extent ",
                             extent));
    std::vector<long> out_shape = x->shape;
    out_shape[static_cast<size_t>(axis)] = len;
    Tensor out = make_tensor(out_shape);

    long outer = 1;
    for (int i = 0; i < axis; ++i) outer *= x->shape[static_cast<size_t>(i)];
    long inner = 1;
    for (size_t i = static_cast<size_t>(axis) + 1; i < nd; ++i) inner *= x->shape[i];

    for (long o = 0; o < outer; ++o)
        std::copy(x->values.data() + (o * extent + start) * inner,
                  x->values.data() + (o * extent + start + len) * inner,
                  out->values.data() + o * len * inner);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x, start, len, outer, inner, extent](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (long o = 0; o < outer; ++o) {
                const double* src = up->data() + o * len * inner;
                double* dst = dx.data() + (o * extent + start) * inner;
                for (long i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

Tensor add_const(Graph& g, const Tensor& x, const std::vector<double>& c) {
    if (static_cast<long>(c.size()) != x->numel())
        throw ShapeError(cat("add_const: ", c.size(), " constants vs ", x->numel(),
                             " elements"));
    Tensor out = make_tensor(x->shape);
    for (long i = 0; i < out->numel(); ++i) out->values[i] = x->values[i] + c[static_cast<size_t>(i)];
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i) dx[i] += (*up)[i];
        });
    }
    return out;
}

Tensor dropout(Graph& g, const Tensor& x, double rate, Rng& rng, bool train) {
    if (!train || rate == 0.0) return x;
    if (rate < 0.0 || rate >= 1.0) throw ConfigError(cat("dropout: bad rate ", rate));
    auto mask = std::make_shared<std::vector<double>>(x->values.size());
    double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : *mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    Tensor out = make_tensor(x->shape);
    for (long i = 0; i < out->numel(); ++i)
        out->values[i] = x->values[i] * (*mask)[static_cast<size_t>(i)];
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, x, mask](GradTable& t) {
            const auto* up = t.find(out.get());
            auto& dx = t.slot(x);
            for (size_t i = 0; i < up->size(); ++i) dx[i] += (*up)[i] * (*mask)[i];
        });
    }
    return out;
}

namespace {

Tensor xent_impl(Graph& g, const Tensor& logits, const std::vector<long>& labels,
                 const std::vector<double>* weights) {
    if (logits->ndim() != 2)
        throw ShapeError(cat("softmax_xent: logits must be 2-d, got ",
                             shape_str(logits->shape)));
    long b = logits->dim(0), c = logits->dim(1);
    if (static_cast<long>(labels.size()) != b)
        throw ShapeError(cat("softmax_xent: ", labels.size(), " labels for ", b, " rows"));
    for (long y : labels)
        if (y < 0 || y >= c)
            throw DataError(cat("softmax_xent: label ", y, " out of range [0, ", c, ")"));
    double total_w = 0.0;
    if (weights) {
        if (static_cast<long>(weights->size()) != b)
            throw ShapeError("softmax_xent: weights length must equal rows");
        for (double w : *weights) {
            if (w < 0.0) throw DataError("softmax_xent: negative weight");
            total_w += w;
        }
        if (total_w <= 0.0) throw DataError("softmax_xent: all rows masked out");
    } else {
        total_w = static_cast<double>(b);
    }

    auto probs = std::make_shared<std::vector<double>>(logits->values.size());
    kernels::softmax_rows(logits->values.data(), probs->data(), b, c);
    double loss = 0.0;
    for (long r = 0; r < b; ++r) {
        const double* row = logits->values.data() + r * c;
        double mx = row[0];
        for (long j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (long j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        double row_loss = mx + std::log(sum) - row[labels[static_cast<size_t>(r)]];
        loss += (weights ? (*weights)[static_cast<size_t>(r)] : 1.0) * row_loss;
    }
    Tensor out = make_tensor({1});
    out->values[0] = loss / total_w;
    out->requires_grad = logits->requires_grad;
    if (out->requires_grad) {
        std::vector<double> w = weights ? *weights : std::vector<double>();
        g.record(out, [out, logits, labels, probs, w, b, c, total_w](GradTable& t) {
            double up = (*t.find(out.get()))[0];
            auto& dl = t.slot(logits);
            for (long r = 0; r < b; ++r) {
                double wr = w.empty() ? 1.0 : w[static_cast<size_t>(r)];
                if (wr == 0.0) continue;
                double f = up * wr / total_w;
                long y = labels[static_cast<size_t>(r)];
                for (long j = 0; j < c; ++j) {
                    double p = (*probs)[static_cast<size_t>(r * c + j)];
                    dl[r * c + j] += f * (p - (j == y ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor softmax_xent(Graph& g, const Tensor& logits, const std::vector<long>& labels) {
    return xent_impl(g, logits, labels, nullptr);
}

Tensor softmax_xent_masked(Graph& g, const Tensor& logits, const std::vector<long>& labels,
                           const std::vector<double>& weights) {
    return xent_impl(g, logits, labels, &weights);
}

Tensor bce_with_logits(Graph& g, const Tensor& logits, const std::vector<double>& targets) {
    long n = logits->numel();
    if (static_cast<long>(targets.size()) != n)
        throw ShapeError(cat("bce: ", targets.size(), " targets for ", n, " logits"));
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        double z = logits->values[i], y = targets[static_cast<size_t>(i)];
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor out = make_tensor({1});
    out->values[0] = loss / static_cast<double>(n);
    out->requires_grad = logits->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, logits, targets, n](GradTable& t) {
            double up = (*t.find(out.get()))[0] / static_cast<double>(n);
            auto& dl = t.slot(logits);
            for (long i = 0; i < n; ++i)
                dl[i] += up * (stable_sigmoid(logits->values[i]) - targets[static_cast<size_t>(i)]);
        });
    }
    return out;
}

Tensor mse(Graph& g, const Tensor& pred, const std::vector<double>& targets) {
    long n = pred->numel();
    if (static_cast<long>(targets.size()) != n)
        throw ShapeError(cat("mse: ", targets.size(), " targets for ", n, " predictions"));
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        double d = pred->values[i] - targets[static_cast<size_t>(i)];
        loss += d * d;
    }
    Tensor out = make_tensor({1});
    out->values[0] = loss / static_cast<double>(n);
    out->requires_grad = pred->requires_grad;
    if (out->requires_grad) {
        g.record(out, [out, pred, targets, n](GradTable& t) {
            double up = (*t.find(out.get()))[0] / static_cast<double>(n);
            auto& dp = t.slot(pred);
            for (long i = 0; i < n; ++i)
                dp[i] += up * 2.0 * (pred->values[i] - targets[static_cast<size_t>(i)]);
        });
    }
    return out;
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double eps, double tol,
                           long max_coords, uint64_t seed) {
    x->zero_grad();
    {
        Graph g;
        Tensor loss = f(g);
        if (loss->numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
        g.backward(loss);
    }
    std::vector<double> analytic = x->grad;

    long n = x->numel();
    std::vector<long> coords;
    if (max_coords > 0 && max_coords < n) {
        Rng rng(mix64(seed, 0x67636bULL));
        coords.resize(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        rng.shuffle(coords);
        coords.resize(static_cast<size_t>(max_coords));
    } else {
        coords.resize(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }

    GradCheckReport report;
    report.coords_checked = static_cast<long>(coords.size());
    auto eval = [&]() {
        Graph g;
        return f(g)->values[0];
    };
    for (long i : coords) {
        double saved = x->values[i];
        x->values[i] = saved + eps;
        double fp = eval();
        x->values[i] = saved - eps;
        double fm = eval();
        x->values[i] = saved;
        double numeric = (fp - fm) / (2.0 * eps);
        double a = analytic[static_cast<size_t>(i)];
        double denom = std::max({1e-8, std::abs(a), std::abs(numeric)});
        double rel = std::abs(a - numeric) / denom;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_coord = i;
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace mtlkit::diffcore
