#include "mvrecon/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mvr::ad {

bool flop_counting = false;
long long flop_count = 0;
void reset_flop_count() { flop_count = 0; }

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

void require(bool cond, const char* msg) {
    if (!cond) throw std::runtime_error(msg);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->value.shape != b->value.shape)
        throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a->value.shape) +
                                 " vs " + shape_str(b->value.shape));
}

Var make(Tensor t, std::vector<Var> parents, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>(std::move(t));
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    n->requires_grad = any;
    if (any) {
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
    }
    return n;
}

// Left-fold after sorting ascending by value: the result depends only on the
// multiset of inputs.
double sorted_sum(std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
}

Var unary(const Var& a, std::function<double(double)> f, std::function<double(double, double)> df) {
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = f(a->value.v[i]);
    return make(std::move(out), {a}, [f = std::move(f), df = std::move(df)](Node& n) {
        Node& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.value.size(); ++i)
            pa.grad.v[i] += df(pa.value.v[i], n.value.v[i]) * n.grad.v[i];
    });
}

}  // namespace

Var constant(Tensor t) {
    auto n = std::make_shared<Node>(std::move(t));
    n->requires_grad = false;
    return n;
}

Var leaf(Tensor t) { return std::make_shared<Node>(std::move(t)); }

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->value.v[i] + b->value.v[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            n.parents[0]->grad.v[i] += n.grad.v[i];
            n.parents[1]->grad.v[i] += n.grad.v[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->value.v[i] - b->value.v[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            n.parents[0]->grad.v[i] += n.grad.v[i];
            n.parents[1]->grad.v[i] -= n.grad.v[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->value.v[i] * b->value.v[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            n.parents[0]->grad.v[i] += n.parents[1]->value.v[i] * n.grad.v[i];
            n.parents[1]->grad.v[i] += n.parents[0]->value.v[i] * n.grad.v[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a, b, "div");
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->value.v[i] / b->value.v[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            double bi = n.parents[1]->value.v[i];
            n.parents[0]->grad.v[i] += n.grad.v[i] / bi;
            n.parents[1]->grad.v[i] -= n.value.v[i] / bi * n.grad.v[i];
        }
    });
}

Var neg(const Var& a) { return mul_const(a, -1.0); }

Var add_const(const Var& a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul_const(const Var& a, double c) {
    return unary(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var abs(const Var& a) {
    return unary(a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
    // log(1+exp(x)), overflow-safe
    return unary(a,
                 [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
                 [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var log(const Var& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(const Var& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sqrt(const Var& a) {
    return unary(a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(const Var& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& a) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    return unary(a,
                 [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                 [](double x, double) {
                     return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                            x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
                 });
}

Var scale(const Var& x, const Var& s) {
    require(s->value.size() == 1, "scale: scalar operand must have numel 1");
    Tensor out(x->value.shape);
    double sv = s->value.v[0];
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x->value.v[i] * sv;
    return make(std::move(out), {x, s}, [](Node& n) {
        double sv = n.parents[1]->value.v[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            n.parents[0]->grad.v[i] += sv * n.grad.v[i];
            acc += n.parents[0]->value.v[i] * n.grad.v[i];
        }
        n.parents[1]->grad.v[0] += acc;
    });
}

Var shift(const Var& x, const Var& s) {
    require(s->value.size() == 1, "shift: scalar operand must have numel 1");
    Tensor out(x->value.shape);
    double sv = s->value.v[0];
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x->value.v[i] + sv;
    return make(std::move(out), {x, s}, [](Node& n) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            n.parents[0]->grad.v[i] += n.grad.v[i];
            acc += n.grad.v[i];
        }
        n.parents[1]->grad.v[0] += acc;
    });
}

Var sdiv(const Var& x, const Var& s) {
    require(s->value.size() == 1, "sdiv: scalar operand must have numel 1");
    Tensor out(x->value.shape);
    double sv = s->value.v[0];
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x->value.v[i] / sv;
    return make(std::move(out), {x, s}, [](Node& n) {
        double sv = n.parents[1]->value.v[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            n.parents[0]->grad.v[i] += n.grad.v[i] / sv;
            acc += n.value.v[i] * n.grad.v[i];
        }
        n.parents[1]->grad.v[0] -= acc / sv;
    });
}

Var reshape(const Var& a, Shape s) {
    require(shape_numel(s) == a->value.size(), "reshape: numel mismatch");
    Tensor out(std::move(s), a->value.v);
    return make(std::move(out), {a}, [](Node& n) {
        for (std::size_t i = 0; i < n.value.size(); ++i) n.parents[0]->grad.v[i] += n.grad.v[i];
    });
}

Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
    require(a->value.shape.size() == 2, "slice_rows: not 2-D");
    std::size_t c = a->value.shape[1];
    require(r0 <= r1 && r1 <= a->value.shape[0], "slice_rows: bad range");
    Tensor out({r1 - r0, c});
    std::copy(a->value.v.begin() + r0 * c, a->value.v.begin() + r1 * c, out.v.begin());
    return make(std::move(out), {a}, [r0, c](Node& n) {
        for (std::size_t i = 0; i < n.value.size(); ++i)
            n.parents[0]->grad.v[r0 * c + i] += n.grad.v[i];
    });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    require(a->value.shape.size() == 2, "slice_cols: not 2-D");
    std::size_t r = a->value.shape[0], c = a->value.shape[1];
    require(c0 <= c1 && c1 <= c, "slice_cols: bad range");
    Tensor out({r, c1 - c0});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = c0; j < c1; ++j) out.at2(i, j - c0) = a->value.at2(i, j);
    return make(std::move(out), {a}, [c0, c](Node& n) {
        std::size_t oc = n.value.shape[1];
        for (std::size_t i = 0; i < n.value.shape[0]; ++i)
            for (std::size_t j = 0; j < oc; ++j)
                n.parents[0]->grad.v[i * c + c0 + j] += n.grad.at2(i, j);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    std::size_t c = parts[0]->value.shape[1], r = 0;
    for (const auto& p : parts) {
        require(p->value.shape.size() == 2 && p->value.shape[1] == c, "concat_rows: column mismatch");
        r += p->value.shape[0];
    }
    Tensor out({r, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->value.v.begin(), p->value.v.end(), out.v.begin() + off);
        off += p->value.size();
    }
    return make(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            for (std::size_t i = 0; i < p->value.size(); ++i) p->grad.v[i] += n.grad.v[off + i];
            off += p->value.size();
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    std::size_t r = parts[0]->value.shape[0], c = 0;
    for (const auto& p : parts) {
        require(p->value.shape.size() == 2 && p->value.shape[0] == r, "concat_cols: row mismatch");
        c += p->value.shape[1];
    }
    Tensor out({r, c});
    std::size_t coff = 0;
    for (const auto& p : parts) {
        std::size_t pc = p->value.shape[1];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j) out.at2(i, coff + j) = p->value.at2(i, j);
        coff += pc;
    }
    return make(std::move(out), parts, [](Node& n) {
        std::size_t coff = 0;
        for (auto& p : n.parents) {
            std::size_t pc = p->value.shape[1];
            for (std::size_t i = 0; i < p->value.shape[0]; ++i)
                for (std::size_t j = 0; j < pc; ++j) p->grad.at2(i, j) += n.grad.at2(i, coff + j);
            coff += pc;
        }
    });
}

Var transpose(const Var& a) {
    require(a->value.shape.size() == 2, "transpose: not 2-D");
    std::size_t r = a->value.shape[0], c = a->value.shape[1];
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at2(j, i) = a->value.at2(i, j);
    return make(std::move(out), {a}, [](Node& n) {
        std::size_t r = n.value.shape[0], c = n.value.shape[1];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) n.parents[0]->grad.at2(j, i) += n.grad.at2(i, j);
    });
}

Var at(const Var& a, std::size_t idx) {
    require(idx < a->value.size(), "at: index out of range");
    Tensor out({1}, {a->value.v[idx]});
    return make(std::move(out), {a},
                [idx](Node& n) { n.parents[0]->grad.v[idx] += n.grad.v[0]; });
}

Var add_rows(const Var& x, const Var& b) {
    require(x->value.shape.size() == 2, "add_rows: not 2-D");
    std::size_t m = x->value.shape[0], k = x->value.shape[1];
    require(b->value.size() == k, "add_rows: bias size mismatch");
    Tensor out({m, k});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) out.at2(i, j) = x->value.at2(i, j) + b->value.v[j];
    return make(std::move(out), {x, b}, [m, k](Node& n) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double g = n.grad.at2(i, j);
                n.parents[0]->grad.at2(i, j) += g;
                n.parents[1]->grad.v[j] += g;
            }
    });
}

Var gather(const Var& a, std::vector<std::int64_t> idx, Shape out_shape) {
    require(shape_numel(out_shape) == idx.size(), "gather: index count vs out shape");
    Tensor out(std::move(out_shape));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::int64_t k = idx[i];
        out.v[i] = (k < 0) ? 0.0 : a->value.v[static_cast<std::size_t>(k)];
    }
    return make(std::move(out), {a}, [idx = std::move(idx)](Node& n) {
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i] >= 0) n.parents[0]->grad.v[static_cast<std::size_t>(idx[i])] += n.grad.v[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    require(a->value.shape.size() == 2 && b->value.shape.size() == 2, "matmul: not 2-D");
    std::size_t m = a->value.shape[0], k = a->value.shape[1], n2 = b->value.shape[1];
    require(b->value.shape[0] == k, "matmul: inner dim mismatch");
    Tensor out({m, n2});
    // Hand-rolled forward: every output row reduces over k in the same fixed
    // order, so a row's result is bit-identical regardless of its position.
    // Blocked GEMM kernels do not guarantee that.
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.v.data() + i * n2;
        const double* arow = a->value.v.data() + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            double av = arow[t];
            const double* brow = b->value.v.data() + t * n2;
            for (std::size_t j = 0; j < n2; ++j) orow[j] += av * brow[j];
        }
    }
    if (flop_counting) flop_count += 2ll * m * k * n2;
    return make(std::move(out), {a, b}, [m, k, n2](Node& n) {
        CMap gm(n.grad.v.data(), m, n2);
        CMap am(n.parents[0]->value.v.data(), m, k);
        CMap bm(n.parents[1]->value.v.data(), k, n2);
        MMap ga(n.parents[0]->grad.v.data(), m, k);
        MMap gb(n.parents[1]->grad.v.data(), k, n2);
        ga.noalias() += gm * bm.transpose();
        gb.noalias() += am.transpose() * gm;
    });
}

Var matmul_chunked(const Var& w, const Var& v, const std::vector<int>& chunks) {
    require(w->value.shape.size() == 2 && v->value.shape.size() == 2, "matmul_chunked: not 2-D");
    std::size_t m = w->value.shape[0], k = w->value.shape[1], n2 = v->value.shape[1];
    require(v->value.shape[0] == k, "matmul_chunked: inner dim mismatch");
    std::size_t total = 0;
    for (int c : chunks) total += static_cast<std::size_t>(c);
    require(total == k, "matmul_chunked: chunks do not cover the reduction dim");

    Tensor out({m, n2});
    std::vector<double> partials;
    partials.reserve(chunks.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* wr = w->value.v.data() + i * k;
        for (std::size_t j = 0; j < n2; ++j) {
            partials.clear();
            std::size_t off = 0;
            for (int c : chunks) {
                double s = 0.0;
                for (std::size_t t = 0; t < static_cast<std::size_t>(c); ++t)
                    s += wr[off + t] * v->value.v[(off + t) * n2 + j];
                partials.push_back(s);
                off += static_cast<std::size_t>(c);
            }
            out.at2(i, j) = sorted_sum(partials);
        }
    }
    if (flop_counting) flop_count += 2ll * m * k * n2;
    return make(std::move(out), {w, v}, [m, k, n2](Node& n) {
        CMap gm(n.grad.v.data(), m, n2);
        CMap wm(n.parents[0]->value.v.data(), m, k);
        CMap vm(n.parents[1]->value.v.data(), k, n2);
        MMap gw(n.parents[0]->grad.v.data(), m, k);
        MMap gv(n.parents[1]->grad.v.data(), k, n2);
        gw.noalias() += gm * vm.transpose();
        gv.noalias() += wm.transpose() * gm;
    });
}

Var softmax_rows_chunked(const Var& x, const std::vector<int>& chunks) {
    require(x->value.shape.size() == 2, "softmax_rows_chunked: not 2-D");
    std::size_t m = x->value.shape[0], k = x->value.shape[1];
    std::size_t total = 0;
    for (int c : chunks) total += static_cast<std::size_t>(c);
    require(total == k, "softmax_rows_chunked: chunks do not cover columns");

    Tensor out({m, k});
    std::vector<double> partials;
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x->value.v.data() + i * k;
        double mx = xr[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
        partials.clear();
        std::size_t off = 0;
        for (int c : chunks) {
            double s = 0.0;
            for (std::size_t t = 0; t < static_cast<std::size_t>(c); ++t)
                s += std::exp(xr[off + t] - mx);
            partials.push_back(s);
            off += static_cast<std::size_t>(c);
        }
        double denom = sorted_sum(partials);
        for (std::size_t j = 0; j < k; ++j) out.at2(i, j) = std::exp(xr[j] - mx) / denom;
    }
    return make(std::move(out), {x}, [m, k](Node& n) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = n.value.v.data() + i * k;
            const double* g = n.grad.v.data() + i * k;
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += y[j] * g[j];
            double* px = n.parents[0]->grad.v.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) px[j] += y[j] * (g[j] - dot);
        }
    });
}

Var l2norm_rows(const Var& x, double eps) {
    require(x->value.shape.size() == 2, "l2norm_rows: not 2-D");
    std::size_t m = x->value.shape[0], k = x->value.shape[1];
    Tensor out({m, k});
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = eps;
        for (std::size_t j = 0; j < k; ++j) s += x->value.at2(i, j) * x->value.at2(i, j);
        norms[i] = std::sqrt(s);
        for (std::size_t j = 0; j < k; ++j) out.at2(i, j) = x->value.at2(i, j) / norms[i];
    }
    return make(std::move(out), {x}, [m, k, norms = std::move(norms)](Node& n) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* xv = n.parents[0]->value.v.data() + i * k;
            const double* g = n.grad.v.data() + i * k;
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += xv[j] * g[j];
            double inv = 1.0 / norms[i];
            double inv3 = inv * inv * inv;
            double* px = n.parents[0]->grad.v.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) px[j] += g[j] * inv - xv[j] * dot * inv3;
        }
    });
}

Var layernorm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    require(x->value.shape.size() == 2, "layernorm_rows: not 2-D");
    std::size_t m = x->value.shape[0], k = x->value.shape[1];
    require(gain->value.size() == k && bias->value.size() == k, "layernorm_rows: affine size");
    Tensor out({m, k});
    std::vector<double> inv_std(m), means(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x->value.v.data() + i * k;
        double mu = 0.0;
        for (std::size_t j = 0; j < k; ++j) mu += xr[j];
        mu /= static_cast<double>(k);
        double var = 0.0;
        for (std::size_t j = 0; j < k; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(k);
        means[i] = mu;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < k; ++j)
            out.at2(i, j) = (xr[j] - mu) * inv_std[i] * gain->value.v[j] + bias->value.v[j];
    }
    return make(std::move(out), {x, gain, bias},
                [m, k, inv_std = std::move(inv_std), means = std::move(means)](Node& n) {
                    Node& px = *n.parents[0];
                    Node& pg = *n.parents[1];
                    Node& pb = *n.parents[2];
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* xr = px.value.v.data() + i * k;
                        const double* g = n.grad.v.data() + i * k;
                        double s = inv_std[i], mu = means[i];
                        double mean_gy = 0.0, mean_gyxh = 0.0;
                        for (std::size_t j = 0; j < k; ++j) {
                            double xh = (xr[j] - mu) * s;
                            double gy = pg.value.v[j] * g[j];
                            mean_gy += gy;
                            mean_gyxh += gy * xh;
                            pg.grad.v[j] += g[j] * xh;
                            pb.grad.v[j] += g[j];
                        }
                        mean_gy /= static_cast<double>(k);
                        mean_gyxh /= static_cast<double>(k);
                        double* gx = px.grad.v.data() + i * k;
                        for (std::size_t j = 0; j < k; ++j) {
                            double xh = (xr[j] - mu) * s;
                            double gy = pg.value.v[j] * g[j];
                            gx[j] += s * (gy - mean_gy - xh * mean_gyxh);
                        }
                    }
                });
}

Var dot_rows(const Var& a, const Var& b) {
    require_same_shape(a, b, "dot_rows");
    require(a->value.shape.size() == 2, "dot_rows: not 2-D");
    std::size_t m = a->value.shape[0], k = a->value.shape[1];
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += a->value.at2(i, j) * b->value.at2(i, j);
        out.v[i] = s;
    }
    return make(std::move(out), {a, b}, [m, k](Node& n) {
        for (std::size_t i = 0; i < m; ++i) {
            double g = n.grad.v[i];
            for (std::size_t j = 0; j < k; ++j) {
                n.parents[0]->grad.v[i * k + j] += g * n.parents[1]->value.v[i * k + j];
                n.parents[1]->grad.v[i * k + j] += g * n.parents[0]->value.v[i * k + j];
            }
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double x : a->value.v) s += x;
    return make(Tensor::scalar(s), {a}, [](Node& n) {
        double g = n.grad.v[0];
        for (std::size_t i = 0; i < n.parents[0]->value.size(); ++i) n.parents[0]->grad.v[i] += g;
    });
}

Var mean(const Var& a) {
    require(a->value.size() > 0, "mean: empty tensor");
    return mul_const(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

void backward(const Var& loss) {
    require(loss->value.size() == 1, "backward: loss must be scalar");
    // Iterative post-order DFS; the resulting list is parents-first.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->grad.v[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backfn) (*it)->backfn(**it);
}

}  // namespace mvr::ad
