#include "sft/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sft {

namespace {

[[noreturn]] void dim_error(const std::string& what) {
    throw std::invalid_argument("dimension error: " + what);
}

}  // namespace

int Tape::push(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw std::logic_error("var does not belong to this tape");
    }
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

const Tensor& Tape::grad(Var v) const {
    check(v);
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.empty()) {
        throw std::logic_error("gradient not computed for this var; run backward first");
    }
    return n.grad;
}

Var Tape::constant(Tensor value) { return {push(std::move(value), false)}; }

Var Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {it->second};
    int id = push(p.value, true);
    Parameter* pp = &p;
    nodes_[static_cast<std::size_t>(id)].backprop = [id, pp](Tape& t) {
        const Tensor& g = t.grad_buf(id);
        for (std::int64_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
    };
    param_nodes_.emplace(pp, id);
    return {id};
}

namespace {
enum class Bin { Add, Sub, Mul, Div, Min, Max };
}

Var Tape::add(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) dim_error("add " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_buf(b.id);
                for (std::int64_t i = 0; i < g.size(); ++i) db[i] += g[i];
            }
        };
    }
    return {id};
}

Var Tape::sub(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) dim_error("sub " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_buf(b.id);
                for (std::int64_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
        };
    }
    return {id};
}

Var Tape::mul(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) dim_error("mul " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& A2 = t.value(a);
            const Tensor& B2 = t.value(b);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * B2[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_buf(b.id);
                for (std::int64_t i = 0; i < g.size(); ++i) db[i] += g[i] * A2[i];
            }
        };
    }
    return {id};
}

Var Tape::div(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) dim_error("div " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) {
        if (B[i] == 0.0) throw std::domain_error("division by zero");
        out[i] = A[i] / B[i];
    }
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& A2 = t.value(a);
            const Tensor& B2 = t.value(b);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] / B2[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_buf(b.id);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    db[i] -= g[i] * A2[i] / (B2[i] * B2[i]);
                }
            }
        };
    }
    return {id};
}

// Ties route the gradient to the first argument.
Var Tape::minimum(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) dim_error("minimum " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] <= B[i] ? A[i] : B[i];
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& A2 = t.value(a);
            const Tensor& B2 = t.value(b);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    if (A2[i] <= B2[i]) da[i] += g[i];
                }
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_buf(b.id);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    if (A2[i] > B2[i]) db[i] += g[i];
                }
            }
        };
    }
    return {id};
}

Var Tape::maximum(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) dim_error("maximum " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] >= B[i] ? A[i] : B[i];
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& A2 = t.value(a);
            const Tensor& B2 = t.value(b);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    if (A2[i] >= B2[i]) da[i] += g[i];
                }
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_buf(b.id);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    if (A2[i] < B2[i]) db[i] += g[i];
                }
            }
        };
    }
    return {id};
}

Var Tape::scale(Var a, double s) {
    check(a);
    const Tensor& A = value(a);
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * s;
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, s](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
        };
    }
    return {id};
}

Var Tape::add_scalar(Var a, double s) {
    check(a);
    const Tensor& A = value(a);
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] + s;
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
        };
    }
    return {id};
}

Var Tape::add_rowvec(Var a, Var row) {
    check(a);
    check(row);
    const Tensor& A = value(a);
    const Tensor& R = value(row);
    if (A.rank() != 2 || R.rank() != 2 || R.rows() != 1 || R.cols() != A.cols()) {
        dim_error("add_rowvec " + A.shape_str() + " vs " + R.shape_str());
    }
    int m = A.rows(), n = A.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) + R.at(0, j);
    }
    bool ng = needs_grad(a) || needs_grad(row);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, row, m, n](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (t.needs_grad(row)) {
                Tensor& dr = t.grad_buf(row.id);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) dr.at(0, j) += g.at(i, j);
                }
            }
        };
    }
    return {id};
}

Var Tape::mul_scalar_var(Var a, Var s) {
    check(a);
    check(s);
    const Tensor& A = value(a);
    const Tensor& S = value(s);
    if (!S.is_scalar()) dim_error("mul_scalar_var: multiplier must be a single value");
    double sv = S[0];
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * sv;
    bool ng = needs_grad(a) || needs_grad(s);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, s](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& A2 = t.value(a);
            double sv2 = t.value(s)[0];
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_buf(a.id);
                for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * sv2;
            }
            if (t.needs_grad(s)) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i] * A2[i];
                t.grad_buf(s.id)[0] += acc;
            }
        };
    }
    return {id};
}

Var Tape::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
        dim_error("matmul " + A.shape_str() + " vs " + B.shape_str());
    }
    int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out({m, n});
    kernels::gemm_nn(m, n, k, A.data(), B.data(), out.data(), false);
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b, m, k, n](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.needs_grad(a)) {
                // dA += g * B^T
                kernels::gemm_nt(m, k, n, g.data(), t.value(b).data(), t.grad_buf(a.id).data(),
                                 true);
            }
            if (t.needs_grad(b)) {
                // dB += A^T * g
                kernels::gemm_tn(k, n, m, t.value(a).data(), g.data(), t.grad_buf(b.id).data(),
                                 true);
            }
        };
    }
    return {id};
}

Var Tape::matmul_nt(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols()) {
        dim_error("matmul_nt " + A.shape_str() + " vs " + B.shape_str());
    }
    int m = A.rows(), k = A.cols(), n = B.rows();
    Tensor out({m, n});
    kernels::gemm_nt(m, n, k, A.data(), B.data(), out.data(), false);
    bool ng = needs_grad(a) || needs_grad(b);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, b, m, k, n](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.needs_grad(a)) {
                // dA += g * B
                kernels::gemm_nn(m, k, n, g.data(), t.value(b).data(), t.grad_buf(a.id).data(),
                                 true);
            }
            if (t.needs_grad(b)) {
                // dB += g^T * A
                kernels::gemm_tn(n, k, m, g.data(), t.value(a).data(), t.grad_buf(b.id).data(),
                                 true);
            }
        };
    }
    return {id};
}

Var Tape::transpose(Var a) {
    check(a);
    const Tensor& A = value(a);
    if (A.rank() != 2) dim_error("transpose needs a matrix");
    int m = A.rows(), n = A.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
    }
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, m, n](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) da.at(i, j) += g.at(j, i);
            }
        };
    }
    return {id};
}

Var Tape::softmax_rows(Var a) {
    check(a);
    const Tensor& A = value(a);
    if (A.rank() != 2) dim_error("softmax_rows needs a matrix");
    int m = A.rows(), n = A.cols();
    Tensor out({m, n});
    kernels::softmax_rows(m, n, A.data(), out.data());
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, m, n](Tape& t) {
            const Tensor& y = t.value({id});
            const Tensor& g = t.grad_buf(id);
            kernels::softmax_rows_backward(m, n, y.data(), g.data(), t.grad_buf(a.id).data());
        };
    }
    return {id};
}

Var Tape::layer_norm(Var x, Var gain, Var shift, double eps) {
    check(x);
    check(gain);
    check(shift);
    const Tensor& X = value(x);
    if (X.rank() != 2) dim_error("layer_norm needs a matrix");
    int m = X.rows(), n = X.cols();
    const Tensor& G = value(gain);
    const Tensor& S = value(shift);
    if (G.size() != n || S.size() != n) {
        dim_error("layer_norm gain/shift width must match feature width");
    }
    Tensor xhat({m, n});
    Tensor inv_std({m, 1});
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += X.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = X.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = is;
        for (int j = 0; j < n; ++j) xhat.at(i, j) = (X.at(i, j) - mean) * is;
    }
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = xhat.at(i, j) * G[j] + S[j];
    }
    bool ng = needs_grad(x) || needs_grad(gain) || needs_grad(shift);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, x, gain, shift, m, n, xhat,
                                                         inv_std](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& G2 = t.value(gain);
            if (t.needs_grad(gain)) {
                Tensor& dg = t.grad_buf(gain.id);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) dg[j] += g.at(i, j) * xhat.at(i, j);
                }
            }
            if (t.needs_grad(shift)) {
                Tensor& ds = t.grad_buf(shift.id);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) ds[j] += g.at(i, j);
                }
            }
            if (t.needs_grad(x)) {
                Tensor& dx = t.grad_buf(x.id);
                for (int i = 0; i < m; ++i) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int j = 0; j < n; ++j) {
                        double dxh = g.at(i, j) * G2[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat.at(i, j);
                    }
                    mean_dxhat /= n;
                    mean_dxhat_xhat /= n;
                    double is = inv_std.at(i, 0);
                    for (int j = 0; j < n; ++j) {
                        double dxh = g.at(i, j) * G2[j];
                        dx.at(i, j) +=
                            is * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
                    }
                }
            }
        };
    }
    return {id};
}

Var Tape::unary(kernels::Unary op, Var a) {
    check(a);
    const Tensor& A = value(a);
    Tensor out(A.shape());
    kernels::unary_map(op, A.size(), A.data(), out.data());
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, op](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& A2 = t.value(a);
            const Tensor& Y = t.value({id});
            kernels::unary_backward(op, A2.size(), A2.data(), Y.data(), g.data(),
                                    t.grad_buf(a.id).data());
        };
    }
    return {id};
}

Var Tape::sum_all(Var a) {
    check(a);
    const Tensor& A = value(a);
    double acc = 0.0;
    for (std::int64_t i = 0; i < A.size(); ++i) acc += A[i];
    bool ng = needs_grad(a);
    int id = push(Tensor::scalar(acc), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a](Tape& t) {
            double g = t.grad_buf(id)[0];
            Tensor& da = t.grad_buf(a.id);
            for (std::int64_t i = 0; i < da.size(); ++i) da[i] += g;
        };
    }
    return {id};
}

Var Tape::mean_all(Var a) {
    check(a);
    return scale(sum_all(a), 1.0 / static_cast<double>(value(a).size()));
}

Var Tape::mean_rows(Var a) {
    check(a);
    const Tensor& A = value(a);
    if (A.rank() != 2) dim_error("mean_rows needs a matrix");
    int m = A.rows(), n = A.cols();
    Tensor out({1, n});
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += A.at(i, j);
        out.at(0, j) = acc / m;
    }
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, m, n](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) da.at(i, j) += g.at(0, j) / m;
            }
        };
    }
    return {id};
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    check(a);
    Tensor out = value(a).reshaped(shape);
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
        };
    }
    return {id};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int m = value(parts[0]).rows();
    int total = 0;
    bool ng = false;
    for (Var p : parts) {
        check(p);
        const Tensor& P = value(p);
        if (P.rank() != 2 || P.rows() != m) dim_error("concat_cols: row mismatch");
        total += P.cols();
        ng = ng || needs_grad(p);
    }
    Tensor out({m, total});
    int off = 0;
    for (Var p : parts) {
        const Tensor& P = value(p);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < P.cols(); ++j) out.at(i, off + j) = P.at(i, j);
        }
        off += P.cols();
    }
    int id = push(std::move(out), ng);
    if (ng) {
        std::vector<Var> ps = parts;
        nodes_[static_cast<std::size_t>(id)].backprop = [id, ps, m](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            int off2 = 0;
            for (Var p : ps) {
                int w = t.value(p).cols();
                if (t.needs_grad(p)) {
                    Tensor& dp = t.grad_buf(p.id);
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < w; ++j) dp.at(i, j) += g.at(i, off2 + j);
                    }
                }
                off2 += w;
            }
        };
    }
    return {id};
}

Var Tape::slice_cols(Var a, int start, int width) {
    check(a);
    const Tensor& A = value(a);
    if (A.rank() != 2 || start < 0 || width <= 0 || start + width > A.cols()) {
        dim_error("slice_cols out of range");
    }
    int m = A.rows();
    Tensor out({m, width});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < width; ++j) out.at(i, j) = A.at(i, start + j);
    }
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, start, width, m](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < width; ++j) da.at(i, start + j) += g.at(i, j);
            }
        };
    }
    return {id};
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
    check(a);
    const Tensor& A = value(a);
    if (A.rank() != 2) dim_error("gather_rows needs a matrix");
    int n = A.cols();
    for (int r : rows) {
        if (r < 0 || r >= A.rows()) dim_error("gather_rows index out of range");
    }
    Tensor out({static_cast<int>(rows.size()), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < n; ++j) out.at(static_cast<int>(i), j) = A.at(rows[i], j);
    }
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, rows, n](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (int j = 0; j < n; ++j) da.at(rows[i], j) += g.at(static_cast<int>(i), j);
            }
        };
    }
    return {id};
}

Var Tape::gather_flat(Var a, std::vector<int> out_shape, std::vector<std::int64_t> src) {
    check(a);
    const Tensor& A = value(a);
    if (static_cast<std::int64_t>(src.size()) != shape_product(out_shape)) {
        dim_error("gather_flat: index count does not match output shape");
    }
    for (std::int64_t s : src) {
        if (s < 0 || s >= A.size()) dim_error("gather_flat index out of range");
    }
    Tensor out(out_shape);
    for (std::size_t i = 0; i < src.size(); ++i) out[static_cast<std::int64_t>(i)] = A[src[i]];
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, src](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (std::size_t i = 0; i < src.size(); ++i) {
                da[src[i]] += g[static_cast<std::int64_t>(i)];
            }
        };
    }
    return {id};
}

Var Tape::dropout(Var a, double rate, std::mt19937_64& rng) {
    check(a);
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
    const Tensor& A = value(a);
    if (rate == 0.0) return a;
    double keep = 1.0 - rate;
    Tensor mask(A.shape());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        mask[i] = u(rng) < rate ? 0.0 : 1.0 / keep;
    }
    Tensor out(A.shape());
    for (std::int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * mask[i];
    bool ng = needs_grad(a);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, a, mask](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor& da = t.grad_buf(a.id);
            for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * mask[i];
        };
    }
    return {id};
}

Var Tape::log_gaussian_map(Var center_x, Var center_y, Var sigma_w, Var sigma_h, int grid_h,
                           int grid_w, double alpha) {
    check(center_x);
    check(center_y);
    check(sigma_w);
    check(sigma_h);
    if (grid_h < 1 || grid_w < 1) dim_error("log_gaussian_map: empty grid");
    if (alpha <= 0.0) throw std::domain_error("log_gaussian_map: alpha must be positive");
    double cx = value(center_x)[0];
    double cy = value(center_y)[0];
    double sw = value(sigma_w)[0];
    double sh = value(sigma_h)[0];
    if (!value(center_x).is_scalar() || !value(center_y).is_scalar() ||
        !value(sigma_w).is_scalar() || !value(sigma_h).is_scalar()) {
        dim_error("log_gaussian_map parameters must be single values");
    }
    if (sw <= 0.0 || sh <= 0.0) throw std::domain_error("log_gaussian_map: sigma must be positive");
    int s = grid_h * grid_w;
    Tensor out({1, s});
    for (int i = 0; i < grid_h; ++i) {
        double y = (i + 0.5) / grid_h;
        double dy = y - cy;
        for (int j = 0; j < grid_w; ++j) {
            double x = (j + 0.5) / grid_w;
            double dx = x - cx;
            out.at(0, i * grid_w + j) =
                -alpha * (dx * dx / (2.0 * sw * sw) + dy * dy / (2.0 * sh * sh));
        }
    }
    bool ng = needs_grad(center_x) || needs_grad(center_y) || needs_grad(sigma_w) ||
              needs_grad(sigma_h);
    int id = push(std::move(out), ng);
    if (ng) {
        nodes_[static_cast<std::size_t>(id)].backprop = [id, center_x, center_y, sigma_w, sigma_h,
                                                         grid_h, grid_w, alpha](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            double cx2 = t.value(center_x)[0];
            double cy2 = t.value(center_y)[0];
            double sw2 = t.value(sigma_w)[0];
            double sh2 = t.value(sigma_h)[0];
            double dcx = 0.0, dcy = 0.0, dsw = 0.0, dsh = 0.0;
            for (int i = 0; i < grid_h; ++i) {
                double y = (i + 0.5) / grid_h;
                double dy = y - cy2;
                for (int j = 0; j < grid_w; ++j) {
                    double x = (j + 0.5) / grid_w;
                    double dx = x - cx2;
                    double gv = g.at(0, i * grid_w + j);
                    dcx += gv * alpha * dx / (sw2 * sw2);
                    dcy += gv * alpha * dy / (sh2 * sh2);
                    dsw += gv * alpha * dx * dx / (sw2 * sw2 * sw2);
                    dsh += gv * alpha * dy * dy / (sh2 * sh2 * sh2);
                }
            }
            if (t.needs_grad(center_x)) t.grad_buf(center_x.id)[0] += dcx;
            if (t.needs_grad(center_y)) t.grad_buf(center_y.id)[0] += dcy;
            if (t.needs_grad(sigma_w)) t.grad_buf(sigma_w.id)[0] += dsw;
            if (t.needs_grad(sigma_h)) t.grad_buf(sigma_h.id)[0] += dsh;
        };
    }
    return {id};
}

void Tape::backward(Var loss) {
    check(loss);
    const Tensor& L = value(loss);
    if (!L.is_scalar()) {
        throw std::logic_error("backward requires a scalar loss, got " + L.shape_str());
    }
    grad_buf(loss.id).fill(0.0);
    grad_buf(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || !n.backprop || n.grad.empty()) continue;
        n.backprop(*this);
    }
}

Var linear(Tape& t, Var x, Parameter& w, Parameter& b) {
    Var wv = t.param(w);
    Var bv = t.param(b);
    return t.add_rowvec(t.matmul(x, wv), bv);
}

Var elementwise(Tape& t, const std::string& name, Var x) {
    if (name == "relu") return t.relu(x);
    if (name == "gelu") return t.gelu(x);
    if (name == "sigmoid") return t.sigmoid(x);
    if (name == "softplus") return t.softplus(x);
    if (name == "exp") return t.exp(x);
    if (name == "log") return t.log(x);
    throw std::invalid_argument("unknown elementwise op: " + name);
}

}  // namespace sft
