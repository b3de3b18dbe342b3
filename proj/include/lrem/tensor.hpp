#pragma once

// Reverse-mode autodiff over dense row-major matrices. A forward pass builds
// a DAG of shared_ptr nodes; backward() walks it once in reverse topological
// order. Gradient recording can be switched off thread-locally for pure
// inference (sampling, index builds, finite-difference probes).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lrem/util.hpp"

namespace lrem {

template <typename T>
struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<T> val;
    std::vector<T> grad;  // allocated iff needs_grad
    bool needs_grad = false;
    std::string tag;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;

    T& at(int r, int c) { return val[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const {
        return val[static_cast<std::size_t>(r) * cols + c];
    }
    T& gat(int r, int c) {
        return grad[static_cast<std::size_t>(r) * cols + c];
    }
    std::size_t size() const { return val.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
void check_finite(const Node<T>& n) {
    for (const T& x : n.val) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw std::runtime_error("non-finite values in tensor '" + n.tag +
                                     "'");
        }
    }
}

template <typename T>
NodePtr<T> make_node(int rows, int cols, const std::string& tag) {
    auto n = std::make_shared<Node<T>>();
    n->rows = rows;
    n->cols = cols;
    n->val.assign(static_cast<std::size_t>(rows) * cols, T(0));
    n->tag = tag;
    return n;
}

/// Trainable leaf; gradient storage persists across graphs.
template <typename T>
NodePtr<T> make_param(int rows, int cols, const std::string& name) {
    auto n = make_node<T>(rows, cols, name);
    n->needs_grad = true;
    n->grad.assign(n->size(), T(0));
    return n;
}

template <typename T>
NodePtr<T> make_const(int rows, int cols, std::vector<T> vals,
                      const std::string& tag = "const") {
    if (vals.size() != static_cast<std::size_t>(rows) * cols) {
        throw std::invalid_argument("make_const: size mismatch");
    }
    auto n = std::make_shared<Node<T>>();
    n->rows = rows;
    n->cols = cols;
    n->val = std::move(vals);
    n->tag = tag;
    return n;
}

namespace detail {

template <typename T>
NodePtr<T> op_node(int rows, int cols, const std::string& tag,
                   std::vector<NodePtr<T>> parents) {
    auto n = make_node<T>(rows, cols, tag);
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->needs_grad) {
                n->needs_grad = true;
                break;
            }
        }
        if (n->needs_grad) {
            n->grad.assign(n->size(), T(0));
            n->parents = std::move(parents);
        }
    }
    return n;
}

template <typename T>
void set_backward(const NodePtr<T>& n, std::function<void(Node<T>&)> fn) {
    if (n->needs_grad) {
        n->backward_fn = std::move(fn);
    }
}

}  // namespace detail

/// Reverse-mode sweep from a scalar node. Parameter gradients accumulate;
/// call zero_grad on leaves between uses.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->rows != 1 || loss->cols != 1) {
        throw std::invalid_argument("backward: loss must be a scalar");
    }
    if (!loss->needs_grad) {
        return;  // loss does not depend on any parameter
    }
    // Iterative post-order DFS.
    std::vector<Node<T>*> topo;
    std::unordered_set<Node<T>*> visited;
    struct Frame {
        Node<T>* node;
        std::size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            Node<T>* child = f.node->parents[f.next_child++].get();
            if (child->needs_grad && visited.insert(child).second) {
                stack.push_back({child, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }
    loss->grad[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn) {
            n->backward_fn(*n);
        }
    }
}

// ----------------------------------------------------------------------
// elementwise ops

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->rows != b->rows || a->cols != b->cols) {
        throw std::invalid_argument("add: shape mismatch");
    }
    auto out = detail::op_node<T>(a->rows, a->cols, "add", {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = a->val[i] + b->val[i];
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, b](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (a->needs_grad) a->grad[i] += n.grad[i];
            if (b->needs_grad) b->grad[i] += n.grad[i];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> sub(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->rows != b->rows || a->cols != b->cols) {
        throw std::invalid_argument("sub: shape mismatch");
    }
    auto out = detail::op_node<T>(a->rows, a->cols, "sub", {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = a->val[i] - b->val[i];
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, b](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (a->needs_grad) a->grad[i] += n.grad[i];
            if (b->needs_grad) b->grad[i] -= n.grad[i];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> mul_elem(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->rows != b->rows || a->cols != b->cols) {
        throw std::invalid_argument("mul_elem: shape mismatch");
    }
    auto out = detail::op_node<T>(a->rows, a->cols, "mul_elem", {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = a->val[i] * b->val[i];
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, b](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (a->needs_grad) a->grad[i] += n.grad[i] * b->val[i];
            if (b->needs_grad) b->grad[i] += n.grad[i] * a->val[i];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& a, T c) {
    auto out = detail::op_node<T>(a->rows, a->cols, "scale", {a});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = a->val[i] * c;
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, c](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            a->grad[i] += n.grad[i] * c;
        }
    });
    return out;
}

template <typename T>
NodePtr<T> add_scalar(const NodePtr<T>& a, T c) {
    auto out = detail::op_node<T>(a->rows, a->cols, "add_scalar", {a});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = a->val[i] + c;
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            a->grad[i] += n.grad[i];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> neg(const NodePtr<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
NodePtr<T> exp_elem(const NodePtr<T>& a) {
    auto out = detail::op_node<T>(a->rows, a->cols, "exp", {a});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = std::exp(a->val[i]);
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            a->grad[i] += n.grad[i] * n.val[i];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> log_elem(const NodePtr<T>& a) {
    auto out = detail::op_node<T>(a->rows, a->cols, "log", {a});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = std::log(a->val[i]);
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            a->grad[i] += n.grad[i] / a->val[i];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> gelu(const NodePtr<T>& a) {
    auto out = detail::op_node<T>(a->rows, a->cols, "gelu", {a});
    const T inv_sqrt2 = T(0.7071067811865475244);
    for (std::size_t i = 0; i < out->size(); ++i) {
        const T x = a->val[i];
        out->val[i] = x * T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, inv_sqrt2](Node<T>& n) {
        const T inv_sqrt2pi = T(0.3989422804014326779);
        for (std::size_t i = 0; i < n.size(); ++i) {
            const T x = a->val[i];
            const T phi = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            a->grad[i] += n.grad[i] * (phi + x * pdf);
        }
    });
    return out;
}

template <typename T>
NodePtr<T> min_elem(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->rows != b->rows || a->cols != b->cols) {
        throw std::invalid_argument("min_elem: shape mismatch");
    }
    auto out = detail::op_node<T>(a->rows, a->cols, "min_elem", {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = a->val[i] <= b->val[i] ? a->val[i] : b->val[i];
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, b](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (a->val[i] <= b->val[i]) {
                if (a->needs_grad) a->grad[i] += n.grad[i];
            } else {
                if (b->needs_grad) b->grad[i] += n.grad[i];
            }
        }
    });
    return out;
}

template <typename T>
NodePtr<T> clamp(const NodePtr<T>& a, T lo, T hi) {
    auto out = detail::op_node<T>(a->rows, a->cols, "clamp", {a});
    for (std::size_t i = 0; i < out->size(); ++i) {
        out->val[i] = std::min(hi, std::max(lo, a->val[i]));
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, lo, hi](Node<T>& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (a->val[i] >= lo && a->val[i] <= hi) {
                a->grad[i] += n.grad[i];
            }
        }
    });
    return out;
}

// ----------------------------------------------------------------------
// matrix ops

template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->cols != b->rows) {
        throw std::invalid_argument("matmul: inner dims mismatch");
    }
    auto out = detail::op_node<T>(a->rows, b->cols, "matmul", {a, b});
    const int M = a->rows, K = a->cols, N = b->cols;
    for (int i = 0; i < M; ++i) {
        T* __restrict crow = &out->val[static_cast<std::size_t>(i) * N];
        const T* __restrict arow = &a->val[static_cast<std::size_t>(i) * K];
        for (int k = 0; k < K; ++k) {
            const T aik = arow[k];
            const T* __restrict brow =
                &b->val[static_cast<std::size_t>(k) * N];
            for (int j = 0; j < N; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, b, M, K, N](Node<T>& n) {
        if (a->needs_grad) {
            // dA[i,k] = sum_j G[i,j] * B[k,j]
            for (int i = 0; i < M; ++i) {
                const T* g = &n.grad[static_cast<std::size_t>(i) * N];
                T* da = &a->grad[static_cast<std::size_t>(i) * K];
                for (int k = 0; k < K; ++k) {
                    const T* brow = &b->val[static_cast<std::size_t>(k) * N];
                    T acc = T(0);
                    for (int j = 0; j < N; ++j) {
                        acc += g[j] * brow[j];
                    }
                    da[k] += acc;
                }
            }
        }
        if (b->needs_grad) {
            // dB[k,j] = sum_i A[i,k] * G[i,j]
            for (int i = 0; i < M; ++i) {
                const T* arow = &a->val[static_cast<std::size_t>(i) * K];
                const T* g = &n.grad[static_cast<std::size_t>(i) * N];
                for (int k = 0; k < K; ++k) {
                    const T aik = arow[k];
                    if (aik == T(0)) continue;
                    T* db = &b->grad[static_cast<std::size_t>(k) * N];
                    for (int j = 0; j < N; ++j) {
                        db[j] += aik * g[j];
                    }
                }
            }
        }
    });
    return out;
}

/// C = A * B^T
template <typename T>
NodePtr<T> matmul_nt(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->cols != b->cols) {
        throw std::invalid_argument("matmul_nt: inner dims mismatch");
    }
    auto out = detail::op_node<T>(a->rows, b->rows, "matmul_nt", {a, b});
    const int M = a->rows, K = a->cols, N = b->rows;
    for (int i = 0; i < M; ++i) {
        const T* __restrict arow = &a->val[static_cast<std::size_t>(i) * K];
        T* __restrict crow = &out->val[static_cast<std::size_t>(i) * N];
        for (int j = 0; j < N; ++j) {
            const T* __restrict brow =
                &b->val[static_cast<std::size_t>(j) * K];
            T acc = T(0);
            for (int k = 0; k < K; ++k) {
                acc += arow[k] * brow[k];
            }
            crow[j] = acc;
        }
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, b, M, K, N](Node<T>& n) {
        if (a->needs_grad) {
            // dA[i,k] = sum_j G[i,j] * B[j,k]
            for (int i = 0; i < M; ++i) {
                const T* g = &n.grad[static_cast<std::size_t>(i) * N];
                T* da = &a->grad[static_cast<std::size_t>(i) * K];
                for (int j = 0; j < N; ++j) {
                    const T gij = g[j];
                    if (gij == T(0)) continue;
                    const T* brow = &b->val[static_cast<std::size_t>(j) * K];
                    for (int k = 0; k < K; ++k) {
                        da[k] += gij * brow[k];
                    }
                }
            }
        }
        if (b->needs_grad) {
            // dB[j,k] = sum_i G[i,j] * A[i,k]
            for (int i = 0; i < M; ++i) {
                const T* g = &n.grad[static_cast<std::size_t>(i) * N];
                const T* arow = &a->val[static_cast<std::size_t>(i) * K];
                for (int j = 0; j < N; ++j) {
                    const T gij = g[j];
                    if (gij == T(0)) continue;
                    T* db = &b->grad[static_cast<std::size_t>(j) * K];
                    for (int k = 0; k < K; ++k) {
                        db[k] += gij * arow[k];
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
NodePtr<T> gather_rows(const NodePtr<T>& table, std::vector<int> ids) {
    const int L = static_cast<int>(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= table->rows) {
            throw std::out_of_range("gather_rows: row index out of range");
        }
    }
    auto out =
        detail::op_node<T>(L, table->cols, "gather_rows", {table});
    const int C = table->cols;
    for (int i = 0; i < L; ++i) {
        const T* src = &table->val[static_cast<std::size_t>(ids[i]) * C];
        std::copy(src, src + C, &out->val[static_cast<std::size_t>(i) * C]);
    }
    check_finite(*out);
    detail::set_backward<T>(
        out, [table, ids = std::move(ids), C](Node<T>& n) {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                T* dst = &table->grad[static_cast<std::size_t>(ids[i]) * C];
                const T* g = &n.grad[i * C];
                for (int c = 0; c < C; ++c) {
                    dst[c] += g[c];
                }
            }
        });
    return out;
}

template <typename T>
NodePtr<T> add_rowvec(const NodePtr<T>& a, const NodePtr<T>& row) {
    if (row->rows != 1 || row->cols != a->cols) {
        throw std::invalid_argument("add_rowvec: shape mismatch");
    }
    auto out = detail::op_node<T>(a->rows, a->cols, "add_rowvec", {a, row});
    for (int i = 0; i < a->rows; ++i) {
        for (int j = 0; j < a->cols; ++j) {
            out->at(i, j) = a->at(i, j) + row->val[static_cast<std::size_t>(j)];
        }
    }
    check_finite(*out);
    detail::set_backward<T>(out, [a, row](Node<T>& n) {
        for (int i = 0; i < n.rows; ++i) {
            for (int j = 0; j < n.cols; ++j) {
                const T g = n.grad[static_cast<std::size_t>(i) * n.cols + j];
                if (a->needs_grad) {
                    a->grad[static_cast<std::size_t>(i) * n.cols + j] += g;
                }
                if (row->needs_grad) {
                    row->grad[static_cast<std::size_t>(j)] += g;
                }
            }
        }
    });
    return out;
}

template <typename T>
NodePtr<T> slice_cols(const NodePtr<T>& a, int c0, int width) {
    if (c0 < 0 || width <= 0 || c0 + width > a->cols) {
        throw std::invalid_argument("slice_cols: range out of bounds");
    }
    auto out = detail::op_node<T>(a->rows, width, "slice_cols", {a});
    for (int i = 0; i < a->rows; ++i) {
        const T* src = &a->val[static_cast<std::size_t>(i) * a->cols + c0];
        std::copy(src, src + width,
                  &out->val[static_cast<std::size_t>(i) * width]);
    }
    detail::set_backward<T>(out, [a, c0, width](Node<T>& n) {
        for (int i = 0; i < n.rows; ++i) {
            T* dst = &a->grad[static_cast<std::size_t>(i) * a->cols + c0];
            const T* g = &n.grad[static_cast<std::size_t>(i) * width];
            for (int j = 0; j < width; ++j) {
                dst[j] += g[j];
            }
        }
    });
    return out;
}

template <typename T>
NodePtr<T> concat_cols(const std::vector<NodePtr<T>>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: empty input");
    }
    const int R = parts[0]->rows;
    int total = 0;
    for (const auto& p : parts) {
        if (p->rows != R) {
            throw std::invalid_argument("concat_cols: row mismatch");
        }
        total += p->cols;
    }
    auto out = detail::op_node<T>(R, total, "concat_cols", parts);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < R; ++i) {
            std::copy(&p->val[static_cast<std::size_t>(i) * p->cols],
                      &p->val[static_cast<std::size_t>(i) * p->cols] + p->cols,
                      &out->val[static_cast<std::size_t>(i) * total + off]);
        }
        off += p->cols;
    }
    detail::set_backward<T>(out, [parts, R, total](Node<T>& n) {
        int off2 = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) {
                for (int i = 0; i < R; ++i) {
                    const T* g =
                        &n.grad[static_cast<std::size_t>(i) * total + off2];
                    T* dst = &p->grad[static_cast<std::size_t>(i) * p->cols];
                    for (int j = 0; j < p->cols; ++j) {
                        dst[j] += g[j];
                    }
                }
            }
            off2 += p->cols;
        }
    });
    return out;
}

template <typename T>
NodePtr<T> select_row(const NodePtr<T>& a, int r) {
    if (r < 0 || r >= a->rows) {
        throw std::out_of_range("select_row: index out of range");
    }
    auto out = detail::op_node<T>(1, a->cols, "select_row", {a});
    std::copy(&a->val[static_cast<std::size_t>(r) * a->cols],
              &a->val[static_cast<std::size_t>(r) * a->cols] + a->cols,
              out->val.begin());
    detail::set_backward<T>(out, [a, r](Node<T>& n) {
        T* dst = &a->grad[static_cast<std::size_t>(r) * a->cols];
        for (int j = 0; j < n.cols; ++j) {
            dst[j] += n.grad[static_cast<std::size_t>(j)];
        }
    });
    return out;
}

template <typename T>
NodePtr<T> stack_rows(const std::vector<NodePtr<T>>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("stack_rows: empty input");
    }
    const int C = rows[0]->cols;
    for (const auto& r : rows) {
        if (r->rows != 1 || r->cols != C) {
            throw std::invalid_argument("stack_rows: need uniform [1,C] rows");
        }
    }
    auto out =
        detail::op_node<T>(static_cast<int>(rows.size()), C, "stack_rows",
                           rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i]->val.begin(), rows[i]->val.end(),
                  &out->val[i * C]);
    }
    detail::set_backward<T>(out, [rows, C](Node<T>& n) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i]->needs_grad) continue;
            const T* g = &n.grad[i * C];
            for (int j = 0; j < C; ++j) {
                rows[i]->grad[static_cast<std::size_t>(j)] += g[j];
            }
        }
    });
    return out;
}

template <typename T>
NodePtr<T> gather_elems(const NodePtr<T>& a,
                        std::vector<std::pair<int, int>> at) {
    for (auto [r, c] : at) {
        if (r < 0 || r >= a->rows || c < 0 || c >= a->cols) {
            throw std::out_of_range("gather_elems: index out of range");
        }
    }
    auto out = detail::op_node<T>(1, static_cast<int>(at.size()),
                                  "gather_elems", {a});
    for (std::size_t k = 0; k < at.size(); ++k) {
        out->val[k] = a->at(at[k].first, at[k].second);
    }
    detail::set_backward<T>(out, [a, at = std::move(at)](Node<T>& n) {
        for (std::size_t k = 0; k < at.size(); ++k) {
            a->grad[static_cast<std::size_t>(at[k].first) * a->cols +
                    at[k].second] += n.grad[k];
        }
    });
    return out;
}

// ----------------------------------------------------------------------
// reductions and normalizations

template <typename T>
NodePtr<T> sum_all(const NodePtr<T>& a) {
    auto out = detail::op_node<T>(1, 1, "sum_all", {a});
    T acc = T(0);
    for (const T& x : a->val) {
        acc += x;
    }
    out->val[0] = acc;
    check_finite(*out);
    detail::set_backward<T>(out, [a](Node<T>& n) {
        const T g = n.grad[0];
        for (std::size_t i = 0; i < a->size(); ++i) {
            a->grad[i] += g;
        }
    });
    return out;
}

template <typename T>
NodePtr<T> mean_all(const NodePtr<T>& a) {
    return scale(sum_all(a), T(1) / static_cast<T>(a->size()));
}

template <typename T>
NodePtr<T> layer_norm(const NodePtr<T>& x, const NodePtr<T>& gain,
                      const NodePtr<T>& bias, T eps) {
    if (gain->rows != 1 || gain->cols != x->cols || bias->rows != 1 ||
        bias->cols != x->cols) {
        throw std::invalid_argument("layer_norm: shape mismatch");
    }
    auto out =
        detail::op_node<T>(x->rows, x->cols, "layer_norm", {x, gain, bias});
    const int C = x->cols;
    std::vector<T> inv_std(static_cast<std::size_t>(x->rows));
    std::vector<T> xhat(out->size());
    for (int i = 0; i < x->rows; ++i) {
        const T* xr = &x->val[static_cast<std::size_t>(i) * C];
        T mu = T(0);
        for (int j = 0; j < C; ++j) mu += xr[j];
        mu /= static_cast<T>(C);
        T var = T(0);
        for (int j = 0; j < C; ++j) {
            const T d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(C);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        T* orow = &out->val[static_cast<std::size_t>(i) * C];
        T* hrow = &xhat[static_cast<std::size_t>(i) * C];
        for (int j = 0; j < C; ++j) {
            hrow[j] = (xr[j] - mu) * is;
            orow[j] = hrow[j] * gain->val[static_cast<std::size_t>(j)] +
                      bias->val[static_cast<std::size_t>(j)];
        }
    }
    check_finite(*out);
    detail::set_backward<T>(out, [x, gain, bias, C, inv_std = std::move(inv_std),
                                  xhat = std::move(xhat)](Node<T>& n) {
        for (int i = 0; i < n.rows; ++i) {
            const T* g = &n.grad[static_cast<std::size_t>(i) * C];
            const T* h = &xhat[static_cast<std::size_t>(i) * C];
            // u = gain .* g ;  dx = (u - mean(u) - xhat*mean(u.*xhat)) * inv_std
            T mean_u = T(0), mean_uh = T(0);
            for (int j = 0; j < C; ++j) {
                const T u = g[j] * gain->val[static_cast<std::size_t>(j)];
                mean_u += u;
                mean_uh += u * h[j];
            }
            mean_u /= static_cast<T>(C);
            mean_uh /= static_cast<T>(C);
            const T is = inv_std[static_cast<std::size_t>(i)];
            for (int j = 0; j < C; ++j) {
                const T u = g[j] * gain->val[static_cast<std::size_t>(j)];
                if (x->needs_grad) {
                    x->grad[static_cast<std::size_t>(i) * C + j] +=
                        (u - mean_u - h[j] * mean_uh) * is;
                }
                if (gain->needs_grad) {
                    gain->grad[static_cast<std::size_t>(j)] += g[j] * h[j];
                }
                if (bias->needs_grad) {
                    bias->grad[static_cast<std::size_t>(j)] += g[j];
                }
            }
        }
    });
    return out;
}

/// Row softmax over scaled scores with a causal mask: position i attends to
/// j <= i, and never to padding (a pad key is visible only to itself).
/// Masked entries are exactly zero.
template <typename T>
NodePtr<T> causal_masked_softmax(const NodePtr<T>& scores,
                                 const std::vector<std::uint8_t>& pad,
                                 T scale_factor) {
    if (scores->rows != scores->cols) {
        throw std::invalid_argument("causal_masked_softmax: square input");
    }
    const int L = scores->rows;
    if (!pad.empty() && static_cast<int>(pad.size()) != L) {
        throw std::invalid_argument("causal_masked_softmax: pad size");
    }
    auto allowed = [](const std::vector<std::uint8_t>& p, int i, int j) {
        return j <= i &&
               (p.empty() || !p[static_cast<std::size_t>(j)] || j == i);
    };
    auto out = detail::op_node<T>(L, L, "attn_softmax", {scores});
    for (int i = 0; i < L; ++i) {
        const T* s = &scores->val[static_cast<std::size_t>(i) * L];
        T* p = &out->val[static_cast<std::size_t>(i) * L];
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j <= i; ++j) {
            if (allowed(pad, i, j)) {
                mx = std::max(mx, s[j] * scale_factor);
            }
        }
        T z = T(0);
        for (int j = 0; j <= i; ++j) {
            if (allowed(pad, i, j)) {
                p[j] = std::exp(s[j] * scale_factor - mx);
                z += p[j];
            }
        }
        const T inv_z = T(1) / z;
        for (int j = 0; j <= i; ++j) {
            if (allowed(pad, i, j)) {
                p[j] *= inv_z;
            }
        }
    }
    check_finite(*out);
    detail::set_backward<T>(
        out, [scores, pad_copy = pad, scale_factor, L, allowed](Node<T>& n) {
            for (int i = 0; i < L; ++i) {
                const T* p = &n.val[static_cast<std::size_t>(i) * L];
                const T* g = &n.grad[static_cast<std::size_t>(i) * L];
                T dot = T(0);
                for (int j = 0; j <= i; ++j) {
                    if (allowed(pad_copy, i, j)) {
                        dot += g[j] * p[j];
                    }
                }
                T* ds = &scores->grad[static_cast<std::size_t>(i) * L];
                for (int j = 0; j <= i; ++j) {
                    if (allowed(pad_copy, i, j)) {
                        ds[j] += scale_factor * p[j] * (g[j] - dot);
                    }
                }
            }
        });
    return out;
}

template <typename T>
NodePtr<T> log_softmax_rows(const NodePtr<T>& x) {
    auto out = detail::op_node<T>(x->rows, x->cols, "log_softmax", {x});
    const int C = x->cols;
    // Row statistics in double regardless of T, so teacher-forced log-probs
    // reproduce the sampling-time values bit for bit.
    for (int i = 0; i < x->rows; ++i) {
        const T* xr = &x->val[static_cast<std::size_t>(i) * C];
        double mx = static_cast<double>(xr[0]);
        for (int j = 1; j < C; ++j) {
            mx = std::max(mx, static_cast<double>(xr[j]));
        }
        double z = 0.0;
        for (int j = 0; j < C; ++j) {
            z += std::exp(static_cast<double>(xr[j]) - mx);
        }
        const double lse = mx + std::log(z);
        T* o = &out->val[static_cast<std::size_t>(i) * C];
        for (int j = 0; j < C; ++j) {
            o[j] = static_cast<T>(static_cast<double>(xr[j]) - lse);
        }
    }
    check_finite(*out);
    detail::set_backward<T>(out, [x, C](Node<T>& n) {
        for (int i = 0; i < n.rows; ++i) {
            const T* g = &n.grad[static_cast<std::size_t>(i) * C];
            const T* y = &n.val[static_cast<std::size_t>(i) * C];
            T gsum = T(0);
            for (int j = 0; j < C; ++j) gsum += g[j];
            T* dx = &x->grad[static_cast<std::size_t>(i) * C];
            for (int j = 0; j < C; ++j) {
                dx[j] += g[j] - std::exp(y[j]) * gsum;
            }
        }
    });
    return out;
}

template <typename T>
NodePtr<T> l2_normalize_rows(const NodePtr<T>& x) {
    auto out = detail::op_node<T>(x->rows, x->cols, "l2_normalize", {x});
    const int C = x->cols;
    std::vector<T> inv_norm(static_cast<std::size_t>(x->rows));
    for (int i = 0; i < x->rows; ++i) {
        const T* xr = &x->val[static_cast<std::size_t>(i) * C];
        T sq = T(0);
        for (int j = 0; j < C; ++j) sq += xr[j] * xr[j];
        if (!(sq > T(0))) {
            throw std::invalid_argument(
                "l2_normalize_rows: zero-norm row " + std::to_string(i));
        }
        const T in = T(1) / std::sqrt(sq);
        inv_norm[static_cast<std::size_t>(i)] = in;
        T* o = &out->val[static_cast<std::size_t>(i) * C];
        for (int j = 0; j < C; ++j) o[j] = xr[j] * in;
    }
    check_finite(*out);
    detail::set_backward<T>(
        out, [x, C, inv_norm = std::move(inv_norm)](Node<T>& n) {
            for (int i = 0; i < n.rows; ++i) {
                const T* g = &n.grad[static_cast<std::size_t>(i) * C];
                const T* y = &n.val[static_cast<std::size_t>(i) * C];
                T dot = T(0);
                for (int j = 0; j < C; ++j) dot += g[j] * y[j];
                const T in = inv_norm[static_cast<std::size_t>(i)];
                T* dx = &x->grad[static_cast<std::size_t>(i) * C];
                for (int j = 0; j < C; ++j) {
                    dx[j] += (g[j] - y[j] * dot) * in;
                }
            }
        });
    return out;
}

template <typename T>
T scalar_value(const NodePtr<T>& n) {
    if (n->rows != 1 || n->cols != 1) {
        throw std::invalid_argument("scalar_value: not a scalar");
    }
    return n->val[0];
}

}  // namespace lrem
