#pragma once

#include <deque>
#include <functional>
#include <random>
#include <unordered_map>
#include <vector>

#include "sft/kernels.hpp"
#include "sft/tensor.hpp"

namespace sft {

// Handle into one Tape's node list. Vars are only meaningful on the tape
// that produced them and only for the lifetime of that tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One tape records one forward pass; backward() replays
// the recorded operations in reverse and deposits gradients into every
// Parameter that entered through param(). Tapes are single-threaded and not
// reusable across passes; parallelism lives inside the kernels.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Var constant(Tensor value);
    Var param(Parameter& p);  // repeated calls for the same Parameter share a node

    // Elementwise, same shape.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var minimum(Var a, Var b);
    Var maximum(Var a, Var b);

    // Scalar-constant arithmetic.
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var neg(Var a) { return scale(a, -1.0); }

    // Broadcasts.
    Var add_rowvec(Var a, Var row);          // (m x n) + (1 x n)
    Var mul_scalar_var(Var a, Var s);        // tensor times 1x1 var

    // Linear algebra.
    Var matmul(Var a, Var b);                // (m x k)(k x n)
    Var matmul_nt(Var a, Var b);             // (m x k)(n x k)^T -> m x n
    Var transpose(Var a);

    // Rows as distributions / normalization.
    Var softmax_rows(Var a);
    Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);

    // Pointwise nonlinearities.
    Var relu(Var a) { return unary(kernels::Unary::Relu, a); }
    Var gelu(Var a) { return unary(kernels::Unary::Gelu, a); }
    Var sigmoid(Var a) { return unary(kernels::Unary::Sigmoid, a); }
    Var softplus(Var a) { return unary(kernels::Unary::Softplus, a); }
    Var exp(Var a) { return unary(kernels::Unary::Exp, a); }
    Var log(Var a) { return unary(kernels::Unary::Log, a); }
    Var atan(Var a) { return unary(kernels::Unary::Atan, a); }
    Var abs(Var a) { return unary(kernels::Unary::Abs, a); }

    // Reductions.
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var mean_rows(Var a);  // column means, (m x n) -> (1 x n)

    // Structure.
    Var reshape(Var a, std::vector<int> shape);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, int start, int width);
    Var gather_rows(Var a, std::vector<int> rows);
    // out.flat[i] = in.flat[src[i]]; backward scatter-adds. Covers any fixed
    // index relocation (channel-to-space rearrange, token reordering).
    Var gather_flat(Var a, std::vector<int> out_shape, std::vector<std::int64_t> src);

    // Training-only inverted dropout; kept entries are scaled by 1/(1-rate).
    Var dropout(Var a, double rate, std::mt19937_64& rng);

    // Flattened log-Gaussian over a grid of patch centers, as one fused op so
    // gradients reach the center/deviation scalars without underflow at the
    // map's far tail. Inputs are 1x1 vars; output is 1 x (grid_h*grid_w).
    Var log_gaussian_map(Var center_x, Var center_y, Var sigma_w, Var sigma_h,
                         int grid_h, int grid_w, double alpha);

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    const Tensor& grad(Var v) const;
    const std::vector<int>& shape(Var v) const { return value(v).shape(); }
    bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Reverse sweep from a scalar loss. Non-scalar input is a contract error.
    void backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on demand during backward
        bool needs_grad = false;
        std::function<void(Tape&)> backprop;  // empty for leaves/constants
    };

    Var unary(kernels::Unary op, Var a);
    int push(Tensor value, bool needs_grad);
    Tensor& grad_buf(int id);
    void check(Var v) const;

    // deque: pushing nodes must not invalidate references handed out by value()
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
};

// Affine map x*W + b with gradients to all three. w: (d_in x d_out), b: (1 x d_out).
Var linear(Tape& t, Var x, Parameter& w, Parameter& b);

// Dispatch by name for the pointwise family; unknown names are an error.
Var elementwise(Tape& t, const std::string& name, Var x);

}  // namespace sft
