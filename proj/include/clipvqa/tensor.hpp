#pragma once

// Dense double-precision tensors with reverse-mode autodiff.
// Row-major contiguous storage; graphs are built per forward pass and
// torn down when the root goes out of scope. Gradients accumulate into
// leaf buffers; callers zero them between steps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace clipvqa {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] inline void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
    throw ShapeError(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Runtime toggle for the NaN/Inf guard. On by default in debug builds;
// tests enable it explicitly regardless of build type.
inline bool& finite_checks() {
#ifdef NDEBUG
    static bool enabled = false;
#else
    static bool enabled = true;
#endif
    return enabled;
}

// Graph recording can be suspended for pure inference.
inline bool& grad_mode() {
    static thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    static TensorPtr create(Shape s, double fill = 0.0) {
        auto t = std::make_shared<Tensor>();
        t->shape = std::move(s);
        t->data.assign(static_cast<std::size_t>(numel(t->shape)), fill);
        return t;
    }

    static TensorPtr create(Shape s, std::vector<double> values, bool req_grad = false) {
        auto t = std::make_shared<Tensor>();
        t->shape = std::move(s);
        if (static_cast<std::int64_t>(values.size()) != numel(t->shape))
            throw ShapeError("tensor: data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(t->shape));
        t->data = std::move(values);
        t->requires_grad = req_grad;
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rows() const { return shape.empty() ? 1 : static_cast<int>(size() / shape.back()); }
    int cols() const { return shape.empty() ? 1 : shape.back(); }

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), 0.0);
    }
};

inline void check_finite(const Tensor& t, const char* op) {
    if (!finite_checks()) return;
    for (double v : t.data) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string(op) + ": non-finite value in output");
    }
}

namespace detail {

inline bool any_grad(const std::vector<TensorPtr>& inputs) {
    if (!grad_mode()) return false;
    for (const auto& t : inputs)
        if (t->requires_grad) return true;
    return false;
}

inline void attach(const TensorPtr& out, std::vector<TensorPtr> inputs,
                   std::function<void(Tensor&)> fn) {
    if (!any_grad(inputs)) return;
    out->requires_grad = true;
    out->parents = std::move(inputs);
    out->backward_fn = std::move(fn);
}

// C[m x n] += A[m x k] * B[k x n]
inline void matmul_acc(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * k;
        double* c = C + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m x k] += A[m x n] * B^T, with B stored [k x n]
inline void matmul_acc_nt(const double* A, const double* B, double* C, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * n;
        double* c = C + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* b = B + static_cast<std::size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += a[j] * b[j];
            c[p] += acc;
        }
    }
}

// C[k x n] += A^T * B, with A stored [m x k], B stored [m x n]
inline void matmul_acc_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * k;
        const double* b = B + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            if (av == 0.0) continue;
            double* c = C + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

struct AxisSplit {
    std::int64_t outer, dim, inner;
};

inline AxisSplit split_axis(const Shape& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(shape));
    AxisSplit s{1, shape[axis], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[i];
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) shape_fail("add", a->shape, b->shape);
    auto out = Tensor::create(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
    check_finite(*out, "add");
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    detail::attach(out, {a, b}, [ap, bp](Tensor& o) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ap->grad[i] += o.grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bp->grad[i] += o.grad[i];
        }
    });
    return out;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) shape_fail("sub", a->shape, b->shape);
    auto out = Tensor::create(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
    check_finite(*out, "sub");
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    detail::attach(out, {a, b}, [ap, bp](Tensor& o) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ap->grad[i] += o.grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bp->grad[i] -= o.grad[i];
        }
    });
    return out;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) shape_fail("mul", a->shape, b->shape);
    auto out = Tensor::create(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
    check_finite(*out, "mul");
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    detail::attach(out, {a, b}, [ap, bp](Tensor& o) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ap->grad[i] += o.grad[i] * bp->data[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bp->grad[i] += o.grad[i] * ap->data[i];
        }
    });
    return out;
}

inline TensorPtr scale(const TensorPtr& a, double s) {
    auto out = Tensor::create(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * s;
    check_finite(*out, "scale");
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap, s](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) ap->grad[i] += o.grad[i] * s;
    });
    return out;
}

// Adds vector b to every row of a (broadcast over the last axis).
inline TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& b) {
    if (b->shape.size() != 1 || a->shape.empty() || a->shape.back() != b->shape[0])
        shape_fail("add_rowvec", a->shape, b->shape);
    auto out = Tensor::create(a->shape);
    const int cols = a->cols();
    const int rows = a->rows();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out->data[static_cast<std::size_t>(i) * cols + j] =
                a->data[static_cast<std::size_t>(i) * cols + j] + b->data[j];
    check_finite(*out, "add_rowvec");
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    detail::attach(out, {a, b}, [ap, bp, rows, cols](Tensor& o) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ap->grad[i] += o.grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    bp->grad[j] += o.grad[static_cast<std::size_t>(i) * cols + j];
        }
    });
    return out;
}

// Multiplies every row of a elementwise by vector v.
inline TensorPtr mul_rowvec(const TensorPtr& a, const TensorPtr& v) {
    if (v->shape.size() != 1 || a->shape.empty() || a->shape.back() != v->shape[0])
        shape_fail("mul_rowvec", a->shape, v->shape);
    auto out = Tensor::create(a->shape);
    const int cols = a->cols();
    const int rows = a->rows();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out->data[static_cast<std::size_t>(i) * cols + j] =
                a->data[static_cast<std::size_t>(i) * cols + j] * v->data[j];
    check_finite(*out, "mul_rowvec");
    Tensor* ap = a.get();
    Tensor* vp = v.get();
    detail::attach(out, {a, v}, [ap, vp, rows, cols](Tensor& o) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    ap->grad[static_cast<std::size_t>(i) * cols + j] +=
                        o.grad[static_cast<std::size_t>(i) * cols + j] * vp->data[j];
        }
        if (vp->requires_grad) {
            vp->ensure_grad();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    vp->grad[j] += o.grad[static_cast<std::size_t>(i) * cols + j] *
                                   ap->data[static_cast<std::size_t>(i) * cols + j];
        }
    });
    return out;
}

inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        shape_fail("matmul", a->shape, b->shape);
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = Tensor::create({m, n});
    detail::matmul_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
    check_finite(*out, "matmul");
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    detail::attach(out, {a, b}, [ap, bp, m, k, n](Tensor& o) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            detail::matmul_acc_nt(o.grad.data(), bp->data.data(), ap->grad.data(), m, n, k);
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            detail::matmul_acc_tn(ap->data.data(), o.grad.data(), bp->grad.data(), m, k, n);
        }
    });
    return out;
}

inline TensorPtr transpose(const TensorPtr& a) {
    if (a->shape.size() != 2)
        throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(a->shape));
    const int m = a->shape[0], n = a->shape[1];
    auto out = Tensor::create({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->data[static_cast<std::size_t>(j) * m + i] =
                a->data[static_cast<std::size_t>(i) * n + j];
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap, m, n](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ap->grad[static_cast<std::size_t>(i) * n + j] +=
                    o.grad[static_cast<std::size_t>(j) * m + i];
    });
    return out;
}

inline TensorPtr reshape(const TensorPtr& a, Shape new_shape) {
    if (numel(new_shape) != numel(a->shape))
        shape_fail("reshape", a->shape, new_shape);
    auto out = Tensor::create(std::move(new_shape));
    out->data = a->data;
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) ap->grad[i] += o.grad[i];
    });
    return out;
}

inline TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0]->shape;
    Shape out_shape = first;
    auto base = detail::split_axis(first, axis);
    std::int64_t total_dim = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != first.size()) shape_fail("concat", first, p->shape);
        for (std::size_t i = 0; i < first.size(); ++i)
            if (static_cast<int>(i) != axis && p->shape[i] != first[i])
                shape_fail("concat", first, p->shape);
        total_dim += p->shape[axis];
    }
    out_shape[axis] = static_cast<int>(total_dim);
    auto out = Tensor::create(out_shape);

    const std::int64_t inner = base.inner;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t dim = p->shape[axis];
        for (std::int64_t o = 0; o < base.outer; ++o) {
            const double* src = p->data.data() + o * dim * inner;
            double* dst = out->data.data() + (o * total_dim + offset) * inner;
            std::copy(src, src + dim * inner, dst);
        }
        offset += dim;
    }

    std::vector<Tensor*> raws;
    std::vector<std::int64_t> dims;
    for (const auto& p : parts) {
        raws.push_back(p.get());
        dims.push_back(p->shape[axis]);
    }
    detail::attach(out, parts, [raws, dims, base, total_dim](Tensor& o) {
        std::int64_t offset = 0;
        for (std::size_t idx = 0; idx < raws.size(); ++idx) {
            Tensor* p = raws[idx];
            const std::int64_t dim = dims[idx];
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::int64_t ou = 0; ou < base.outer; ++ou) {
                    const double* src = o.grad.data() + (ou * total_dim + offset) * base.inner;
                    double* dst = p->grad.data() + ou * dim * base.inner;
                    for (std::int64_t i = 0; i < dim * base.inner; ++i) dst[i] += src[i];
                }
            }
            offset += dim;
        }
    });
    return out;
}

inline TensorPtr slice(const TensorPtr& a, int axis, int start, int len) {
    auto sp = detail::split_axis(a->shape, axis);
    if (start < 0 || len <= 0 || start + len > sp.dim)
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for axis " +
                         std::to_string(axis) + " of " + shape_str(a->shape));
    Shape out_shape = a->shape;
    out_shape[axis] = len;
    auto out = Tensor::create(out_shape);
    for (std::int64_t o = 0; o < sp.outer; ++o) {
        const double* src = a->data.data() + (o * sp.dim + start) * sp.inner;
        double* dst = out->data.data() + o * len * sp.inner;
        std::copy(src, src + static_cast<std::int64_t>(len) * sp.inner, dst);
    }
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap, sp, start, len](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
            const double* src = o.grad.data() + ou * len * sp.inner;
            double* dst = ap->grad.data() + (ou * sp.dim + start) * sp.inner;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * sp.inner; ++i)
                dst[i] += src[i];
        }
    });
    return out;
}

inline TensorPtr mean_axis(const TensorPtr& a, int axis) {
    auto sp = detail::split_axis(a->shape, axis);
    Shape out_shape;
    for (int i = 0; i < static_cast<int>(a->shape.size()); ++i)
        if (i != axis) out_shape.push_back(a->shape[i]);
    if (out_shape.empty()) out_shape = {1};
    auto out = Tensor::create(out_shape);
    const double inv = 1.0 / static_cast<double>(sp.dim);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t d = 0; d < sp.dim; ++d) {
            const double* src = a->data.data() + (o * sp.dim + d) * sp.inner;
            double* dst = out->data.data() + o * sp.inner;
            for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i] * inv;
        }
    check_finite(*out, "mean_axis");
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap, sp, inv](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::int64_t ou = 0; ou < sp.outer; ++ou)
            for (std::int64_t d = 0; d < sp.dim; ++d) {
                double* dst = ap->grad.data() + (ou * sp.dim + d) * sp.inner;
                const double* src = o.grad.data() + ou * sp.inner;
                for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i] * inv;
            }
    });
    return out;
}

// Softmax over the last axis.
inline TensorPtr softmax(const TensorPtr& a) {
    if (a->shape.empty()) throw ShapeError("softmax: rank-0 tensor");
    const int cols = a->cols();
    const int rows = a->rows();
    auto out = Tensor::create(a->shape);
    for (int i = 0; i < rows; ++i) {
        const double* x = a->data.data() + static_cast<std::size_t>(i) * cols;
        double* y = out->data.data() + static_cast<std::size_t>(i) * cols;
        double m = x[0];
        for (int j = 1; j < cols; ++j) m = std::max(m, x[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - m);
            sum += y[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) y[j] *= inv;
    }
    check_finite(*out, "softmax");
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap, rows, cols](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (int i = 0; i < rows; ++i) {
            const double* y = o.data.data() + static_cast<std::size_t>(i) * cols;
            const double* go = o.grad.data() + static_cast<std::size_t>(i) * cols;
            double* gx = ap->grad.data() + static_cast<std::size_t>(i) * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += go[j] * y[j];
            for (int j = 0; j < cols; ++j) gx[j] += y[j] * (go[j] - dot);
        }
    });
    return out;
}

// LayerNorm over the last axis with learnable gain/bias.
inline TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                            double eps = 1e-5) {
    const int cols = a->cols();
    const int rows = a->rows();
    if (gain->shape.size() != 1 || gain->shape[0] != cols) shape_fail("layer_norm", a->shape, gain->shape);
    if (bias->shape.size() != 1 || bias->shape[0] != cols) shape_fail("layer_norm", a->shape, bias->shape);
    auto out = Tensor::create(a->shape);
    // Cache per-row mean and inverse stddev for backward.
    auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * 2);
    for (int i = 0; i < rows; ++i) {
        const double* x = a->data.data() + static_cast<std::size_t>(i) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += x[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= cols;
        const double istd = 1.0 / std::sqrt(var + eps);
        (*stats)[static_cast<std::size_t>(i) * 2] = mean;
        (*stats)[static_cast<std::size_t>(i) * 2 + 1] = istd;
        double* y = out->data.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j)
            y[j] = (x[j] - mean) * istd * gain->data[j] + bias->data[j];
    }
    check_finite(*out, "layer_norm");
    Tensor* ap = a.get();
    Tensor* gp = gain.get();
    Tensor* bp = bias.get();
    detail::attach(out, {a, gain, bias}, [ap, gp, bp, rows, cols, stats](Tensor& o) {
        if (gp->requires_grad) gp->ensure_grad();
        if (bp->requires_grad) bp->ensure_grad();
        if (ap->requires_grad) ap->ensure_grad();
        for (int i = 0; i < rows; ++i) {
            const double mean = (*stats)[static_cast<std::size_t>(i) * 2];
            const double istd = (*stats)[static_cast<std::size_t>(i) * 2 + 1];
            const double* x = ap->data.data() + static_cast<std::size_t>(i) * cols;
            const double* go = o.grad.data() + static_cast<std::size_t>(i) * cols;
            if (gp->requires_grad || bp->requires_grad) {
                for (int j = 0; j < cols; ++j) {
                    const double xhat = (x[j] - mean) * istd;
                    if (gp->requires_grad) gp->grad[j] += go[j] * xhat;
                    if (bp->requires_grad) bp->grad[j] += go[j];
                }
            }
            if (ap->requires_grad) {
                // dL/dx for y = g * (x - mean) * istd + b
                double sum_gx = 0.0, sum_gx_xhat = 0.0;
                for (int j = 0; j < cols; ++j) {
                    const double gxh = go[j] * gp->data[j];
                    const double xhat = (x[j] - mean) * istd;
                    sum_gx += gxh;
                    sum_gx_xhat += gxh * xhat;
                }
                double* gx = ap->grad.data() + static_cast<std::size_t>(i) * cols;
                const double inv_n = 1.0 / cols;
                for (int j = 0; j < cols; ++j) {
                    const double gxh = go[j] * gp->data[j];
                    const double xhat = (x[j] - mean) * istd;
                    gx[j] += istd * (gxh - inv_n * sum_gx - xhat * inv_n * sum_gx_xhat);
                }
            }
        }
    });
    return out;
}

// Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2)))
inline TensorPtr gelu(const TensorPtr& a) {
    auto out = Tensor::create(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a->data[i];
        out->data[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    check_finite(*out, "gelu");
    Tensor* ap = a.get();
    detail::attach(out, {a}, [ap](Tensor& o) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double x = ap->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            ap->grad[i] += o.grad[i] * (cdf + x * pdf);
        }
    });
    return out;
}

// Row lookup: out[i] = table[ids[i]]
inline TensorPtr embedding(const TensorPtr& table, const std::vector<int>& ids) {
    if (table->shape.size() != 2)
        throw ShapeError("embedding: table must be rank-2, got " + shape_str(table->shape));
    const int vocab = table->shape[0], dim = table->shape[1];
    auto out = Tensor::create({static_cast<int>(ids.size()), dim});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= vocab)
            throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) +
                                        " out of range [0," + std::to_string(vocab) + ")");
        std::copy_n(table->data.data() + static_cast<std::size_t>(ids[i]) * dim, dim,
                    out->data.data() + i * dim);
    }
    Tensor* tp = table.get();
    detail::attach(out, {table}, [tp, ids, dim](Tensor& o) {
        if (!tp->requires_grad) return;
        tp->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const double* src = o.grad.data() + i * dim;
            double* dst = tp->grad.data() + static_cast<std::size_t>(ids[i]) * dim;
            for (int j = 0; j < dim; ++j) dst[j] += src[j];
        }
    });
    return out;
}

// 1 - <a,b> / (|a| |b|), both inputs rank-1 of equal length.
inline TensorPtr cosine_distance(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape || a->shape.size() != 1)
        shape_fail("cosine_distance", a->shape, b->shape);
    const int n = a->shape[0];
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int i = 0; i < n; ++i) {
        dot += a->data[i] * b->data[i];
        na2 += a->data[i] * a->data[i];
        nb2 += b->data[i] * b->data[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_distance: zero-norm input");
    const double cosv = dot / (na * nb);
    auto out = Tensor::create({1});
    out->data[0] = 1.0 - cosv;
    check_finite(*out, "cosine_distance");
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    detail::attach(out, {a, b}, [ap, bp, n, dot, na, nb](Tensor& o) {
        const double go = o.grad[0];
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (int i = 0; i < n; ++i)
                ap->grad[i] += go * (-(bp->data[i] / (na * nb)) + dot * ap->data[i] / (na * na * na * nb));
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (int i = 0; i < n; ++i)
                bp->grad[i] += go * (-(ap->data[i] / (na * nb)) + dot * bp->data[i] / (nb * nb * nb * na));
        }
    });
    return out;
}

// -sum(p_i * log(q_i)) for probability vectors; gradient flows into q only.
inline TensorPtr cross_entropy(const TensorPtr& p, const TensorPtr& q) {
    if (p->shape != q->shape || p->shape.size() != 1)
        shape_fail("cross_entropy", p->shape, q->shape);
    const int n = p->shape[0];
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        if (q->data[i] <= 0.0)
            throw std::invalid_argument("cross_entropy: non-positive probability");
        loss -= p->data[i] * std::log(q->data[i]);
    }
    auto out = Tensor::create({1});
    out->data[0] = loss;
    check_finite(*out, "cross_entropy");
    Tensor* pp = p.get();
    Tensor* qp = q.get();
    detail::attach(out, {p, q}, [pp, qp, n](Tensor& o) {
        const double go = o.grad[0];
        if (qp->requires_grad) {
            qp->ensure_grad();
            for (int i = 0; i < n; ++i) qp->grad[i] -= go * pp->data[i] / qp->data[i];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

inline void backward(const TensorPtr& root, double seed = 1.0) {
    if (root->size() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root->shape));
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    // Iterative post-order DFS over the recorded graph.
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

}  // namespace clipvqa
