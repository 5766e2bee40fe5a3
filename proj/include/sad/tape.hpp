#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sad/tensor.hpp"

namespace sad {

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// A named trainable tensor. The tape never owns parameters; callers register
// them as leaves per forward pass and read gradients back after backward().
struct Parameter {
    std::string name;
    Tensor value;
};

// Define-by-run reverse-mode tape. Rebuilt per forward pass; append order is
// the topological order and backward() walks it in reverse exactly once.
// Values are immutable once recorded. Single-writer: one thread builds and
// differentiates a given tape (distinct tapes may live on distinct threads).
//
// Numeric guards, shared with every oracle that checks this engine:
//   log clamps its argument to >= 1e-12 (the gradient uses the clamped value),
//   l2_normalize clamps the row norm to >= 1e-12,
//   softmax and logsumexp subtract the row max before exponentiating.
// exp is unguarded; its documented domain is |x| <= 700.
class Tape {
public:
    static constexpr double kLogClamp = 1e-12;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. constant() never receives gradient; leaf() does.
    Var constant(Tensor v);
    Var leaf(Tensor v);

    const Tensor& value(Var x) const;
    // Gradient accumulated by backward(); zeros if the node was not reached.
    Tensor grad(Var x) const;

    // --- primitives ---
    Var matmul(Var a, Var b);     // [m,k].[k,n]
    Var matmul_nt(Var a, Var b);  // [m,k].[n,k]^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                   // elementwise
    Var affine(Var a, double s, double c);   // s*a + c
    Var scale(Var a, double s) { return affine(a, s, 0.0); }
    Var add_rowwise(Var mat, Var row);       // [n,d] + [1,d]
    Var relu(Var a);                         // elementwise max(0, x)
    Var exp(Var a);
    Var log(Var a);
    Var cos(Var a);
    Var abs(Var a);
    Var sum(Var a);   // -> scalar
    Var mean(Var a);  // -> scalar
    Var inner_const(Var a, Tensor w);        // sum(w .* a) -> scalar
    Var concat_cols(const std::vector<Var>& parts);  // along last axis
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_rows(Var a, size_t start, size_t count);
    // Row gather; index -1 yields a zero row and receives no gradient.
    Var gather_rows(Var a, std::vector<int64_t> idx);
    Var softmax_rows(Var a);       // along last axis
    Var l2_normalize_rows(Var a);  // along last axis
    Var logsumexp_rows(Var a);     // [n,d] -> [n,1]

    // out[i,j] = cos(gaps[i] * omega[j] + phase[j]) for [1,d] rows omega and
    // phase; the fused form of the functional time encoding.
    Var cosine_features(const std::vector<double>& gaps, Var omega, Var phase);

    // Fused scaled dot-product attention over ragged key segments. Query row s
    // attends over k/v rows [start_s, start_s+len_s); out[s] = softmax(scale *
    // q_s K_s^T) V_s. Segments must be non-empty. weights_sink, if given,
    // receives the attention weights laid out like the key rows (test hook).
    Var attention_pool(Var q, Var k, Var v, std::vector<std::pair<size_t, size_t>> segments, double scale,
                       std::vector<double>* weights_sink = nullptr);

    // Mean softmax cross-entropy over rows whose label is >= 0 (label -1 rows
    // are excluded). Returns a constant 0 if no row is labeled.
    Var softmax_xent(Var logits, const std::vector<int>& labels);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse append order.
    // Rejects a non-scalar loss. May be called once per tape.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on first touch
        bool needs_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves/constants
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
    const Node& node(Var x) const;
    // Accumulation target for closures; allocates zeros on first touch.
    Tensor& grad_buf(int id);
    bool wants_grad(Var x) const { return nodes_[static_cast<size_t>(x.id)].needs_grad; }
    void check_var(Var x) const;
};

}  // namespace sad
