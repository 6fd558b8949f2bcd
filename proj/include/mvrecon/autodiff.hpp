#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mvrecon/tensor.hpp"

namespace mvr::ad {

struct Node;
using Var = std::shared_ptr<Node>;

// One node of the reverse-mode tape. Ops capture parent Vars by value, so the
// graph stays alive exactly as long as something downstream references it.
struct Node {
    Tensor value;
    Tensor grad;  // same shape as value, zero until backward touches it
    std::vector<Var> parents;
    std::function<void(Node&)> backfn;  // accumulates this->grad into parents
    bool requires_grad = true;

    explicit Node(Tensor v) : value(std::move(v)), grad(value.shape) {}
};

// FLOP accounting for the analytic-vs-instrumented check. Counts 2*m*n*k per
// matrix product when enabled.
extern bool flop_counting;
extern long long flop_count;
void reset_flop_count();

Var constant(Tensor t);
Var leaf(Tensor t);  // trainable parameter

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_const(const Var& a, double c);
Var mul_const(const Var& a, double c);
Var abs(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);

// ---- scalar broadcast (s has numel 1) ----
Var scale(const Var& x, const Var& s);   // x * s
Var shift(const Var& x, const Var& s);   // x + s
Var sdiv(const Var& x, const Var& s);    // x / s

// ---- structural ----
Var reshape(const Var& a, Shape s);
Var slice_rows(const Var& a, std::size_t r0, std::size_t r1);  // 2-D, rows [r0, r1)
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var transpose(const Var& a);
Var at(const Var& a, std::size_t idx);  // scalar view of one element
Var add_rows(const Var& x, const Var& b);  // add row vector b to every row of 2-D x

// Gather over flattened input. Index -1 reads zero (used for conv padding);
// backward scatter-adds.
Var gather(const Var& a, std::vector<std::int64_t> idx, Shape out_shape);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);  // 2-D

// Row-chunked product W (m x K) * V (K x n) where the K-reduction is summed
// per chunk first and chunk partials are combined in value-sorted order. The
// result then depends only on the multiset of chunks, which makes attention
// outputs bit-exact under frame permutation.
Var matmul_chunked(const Var& w, const Var& v, const std::vector<int>& chunks);

// ---- row ops ----
// Softmax per row with the normalizer accumulated per chunk and combined in
// value-sorted order (same permutation-invariance contract as above).
Var softmax_rows_chunked(const Var& x, const std::vector<int>& chunks);
Var l2norm_rows(const Var& x, double eps = 1e-12);
Var layernorm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-6);
Var dot_rows(const Var& a, const Var& b);  // (m x n, m x n) -> (m)

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);

void backward(const Var& loss);  // seeds d(loss)/d(loss) = 1; loss must be scalar

}  // namespace mvr::ad
