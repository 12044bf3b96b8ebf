#include "bitstain/core/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace bitstain::core {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

NodePtr make_node(const char* op, Shape shape, std::vector<NodePtr> inputs) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->shape = std::move(shape);
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs) {
        if (in->requires_grad) n->requires_grad = true;
    }
    n->value.resize(static_cast<std::size_t>(numel(n->shape)));
    return n;
}

void accumulate(Node& dst, const std::vector<double>& g) {
    if (!dst.requires_grad) return;
    dst.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

}  // namespace

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
        throw ShapeError("Tensor::from: data size does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(static_cast<std::size_t>(numel(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::scalar(double v) { return full({1}, v, false); }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
}

bool Tensor::all_finite() const {
    for (double v : node_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->requires_grad = false;
    n->op = "stop_gradient";
    return Tensor(n);
}

// --------------------------------------------------------------------------
// elementwise
// --------------------------------------------------------------------------

namespace {

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary_op(const char* name, BinKind kind, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.size() == 1;
    const bool b_scalar = b.size() == 1;
    if (!a_scalar && !b_scalar) check_same_shape(name, a, b);
    const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
    auto n = make_node(name, out_shape, {a.node(), b.node()});
    const auto& av = a.values();
    const auto& bv = b.values();
    const std::size_t sz = n->value.size();
    for (std::size_t i = 0; i < sz; ++i) {
        const double x = av[a_scalar ? 0 : i];
        const double y = bv[b_scalar ? 0 : i];
        switch (kind) {
            case BinKind::Add: n->value[i] = x + y; break;
            case BinKind::Sub: n->value[i] = x - y; break;
            case BinKind::Mul: n->value[i] = x * y; break;
            case BinKind::Div: n->value[i] = x / y; break;
        }
    }
    n->backprop = [kind, a_scalar, b_scalar](Node& out) {
        Node& na = *out.inputs[0];
        Node& nb = *out.inputs[1];
        const std::size_t sz = out.value.size();
        if (na.requires_grad) {
            na.ensure_grad();
            for (std::size_t i = 0; i < sz; ++i) {
                const double g = out.grad[i];
                double d = 0;
                switch (kind) {
                    case BinKind::Add: d = g; break;
                    case BinKind::Sub: d = g; break;
                    case BinKind::Mul: d = g * nb.value[b_scalar ? 0 : i]; break;
                    case BinKind::Div: d = g / nb.value[b_scalar ? 0 : i]; break;
                }
                na.grad[a_scalar ? 0 : i] += d;
            }
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            for (std::size_t i = 0; i < sz; ++i) {
                const double g = out.grad[i];
                const double x = na.value[a_scalar ? 0 : i];
                const double y = nb.value[b_scalar ? 0 : i];
                double d = 0;
                switch (kind) {
                    case BinKind::Add: d = g; break;
                    case BinKind::Sub: d = -g; break;
                    case BinKind::Mul: d = g * x; break;
                    case BinKind::Div: d = -g * x / (y * y); break;
                }
                nb.grad[b_scalar ? 0 : i] += d;
            }
        }
    };
    return Tensor(n);
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd bwd) {
    auto n = make_node(name, a.shape(), {a.node()});
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) n->value[i] = fwd(av[i]);
    n->backprop = [bwd](Node& out) {
        Node& na = *out.inputs[0];
        if (!na.requires_grad) return;
        na.ensure_grad();
        for (std::size_t i = 0; i < out.value.size(); ++i) {
            const double g = out.grad[i];
            if (g != 0.0) na.grad[i] += g * bwd(na.value[i], out.value[i]);
        }
    };
    return Tensor(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op("div", BinKind::Div, a, b); }

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op("add_scalar", a, [c](double x) { return x + c; },
                    [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    return unary_op("mul_scalar", a, [c](double x) { return x * c; },
                    [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs_val(const Tensor& a) {
    return unary_op("abs", a, [](double x) { return std::abs(x); },
                    [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary_op("square", a, [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Tensor sqrt_val(const Tensor& a) {
    return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor max_scalar(const Tensor& a, double c) {
    return unary_op("max_scalar", a, [c](double x) { return x > c ? x : c; },
                    [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

Tensor tanh_val(const Tensor& a) {
    return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary_op("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op("leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
                    [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary_op(
        "gelu", a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

// --------------------------------------------------------------------------
// reductions
// --------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
    auto n = make_node("sum_all", {1}, {a.node()});
    double s = 0;
    for (double v : a.values()) s += v;
    n->value[0] = s;
    n->backprop = [](Node& out) {
        Node& na = *out.inputs[0];
        if (!na.requires_grad) return;
        na.ensure_grad();
        const double g = out.grad[0];
        for (double& gv : na.grad) gv += g;
    };
    return Tensor(n);
}

Tensor mean_all(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    return mul_scalar(sum_all(a), inv);
}

// --------------------------------------------------------------------------
// matmul / linear
// --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const int m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    auto n = make_node("matmul", {m, p}, {a.node(), b.node()});
    CMapMat A(a.values().data(), m, k);
    CMapMat B(b.values().data(), k, p);
    MapMat C(n->value.data(), m, p);
    C.noalias() = A * B;
    n->backprop = [m, k, p](Node& out) {
        Node& na = *out.inputs[0];
        Node& nb = *out.inputs[1];
        CMapMat G(out.grad.data(), m, p);
        if (na.requires_grad) {
            na.ensure_grad();
            CMapMat B(nb.value.data(), k, p);
            MapMat Ga(na.grad.data(), m, k);
            Ga.noalias() += G * B.transpose();
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            CMapMat A(na.value.data(), m, k);
            MapMat Gb(nb.grad.data(), k, p);
            Gb.noalias() += A.transpose() * G;
        }
    };
    return Tensor(n);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.shape().size() != 2) throw ShapeError("linear: weight must be 2-D");
    const int d = w.shape()[0], f = w.shape()[1];
    if (x.shape().empty() || x.shape().back() != d) {
        throw ShapeError("linear: input last dim " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(w.shape()));
    }
    if (b.shape() != Shape{f}) throw ShapeError("linear: bias shape mismatch");
    const int rows = static_cast<int>(x.size() / d);
    Shape out_shape = x.shape();
    out_shape.back() = f;
    auto n = make_node("linear", out_shape, {x.node(), w.node(), b.node()});
    CMapMat X(x.values().data(), rows, d);
    CMapMat W(w.values().data(), d, f);
    MapMat Y(n->value.data(), rows, f);
    Y.noalias() = X * W;
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < f; ++j) n->value[static_cast<std::size_t>(r) * f + j] += b.values()[j];
    }
    n->backprop = [rows, d, f](Node& out) {
        Node& nx = *out.inputs[0];
        Node& nw = *out.inputs[1];
        Node& nb = *out.inputs[2];
        CMapMat G(out.grad.data(), rows, f);
        if (nx.requires_grad) {
            nx.ensure_grad();
            CMapMat W(nw.value.data(), d, f);
            MapMat Gx(nx.grad.data(), rows, d);
            Gx.noalias() += G * W.transpose();
        }
        if (nw.requires_grad) {
            nw.ensure_grad();
            CMapMat X(nx.value.data(), rows, d);
            MapMat Gw(nw.grad.data(), d, f);
            Gw.noalias() += X.transpose() * G;
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < f; ++j) nb.grad[j] += out.grad[static_cast<std::size_t>(r) * f + j];
        }
    };
    return Tensor(n);
}

// --------------------------------------------------------------------------
// conv2d
// --------------------------------------------------------------------------

namespace {

struct ConvDims {
    int n, c, h, w, o, k, stride, pad, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, int stride, int pad) {
    if (x.shape().size() != 4) throw ShapeError("conv2d: input must be [N,C,H,W]");
    if (wt.shape().size() != 4) throw ShapeError("conv2d: weight must be [O,C,k,k]");
    ConvDims d{};
    d.n = x.shape()[0];
    d.c = x.shape()[1];
    d.h = x.shape()[2];
    d.w = x.shape()[3];
    d.o = wt.shape()[0];
    d.k = wt.shape()[2];
    if (wt.shape()[1] != d.c || wt.shape()[3] != d.k) {
        throw ShapeError("conv2d: weight " + shape_str(wt.shape()) + " does not match input " +
                         shape_str(x.shape()));
    }
    d.stride = stride;
    d.pad = pad;
    if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k) throw ShapeError("conv2d: kernel larger than padded input");
    d.oh = (d.h + 2 * pad - d.k) / stride + 1;
    d.ow = (d.w + 2 * pad - d.k) / stride + 1;
    return d;
}

// cols layout: [C*k*k, OH*OW] row-major for one sample.
void im2col(const double* x, const ConvDims& d, double* cols) {
    const int ckk = d.c * d.k * d.k;
    for (int row = 0; row < ckk; ++row) {
        const int c = row / (d.k * d.k);
        const int ky = (row / d.k) % d.k;
        const int kx = row % d.k;
        const double* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
        double* out_row = cols + static_cast<std::size_t>(row) * d.oh * d.ow;
        for (int oy = 0; oy < d.oh; ++oy) {
            const int iy = oy * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.h) {
                std::fill(out_row + static_cast<std::size_t>(oy) * d.ow,
                          out_row + static_cast<std::size_t>(oy + 1) * d.ow, 0.0);
                continue;
            }
            for (int ox = 0; ox < d.ow; ++ox) {
                const int ix = ox * d.stride + kx - d.pad;
                out_row[static_cast<std::size_t>(oy) * d.ow + ox] =
                    (ix >= 0 && ix < d.w) ? plane[static_cast<std::size_t>(iy) * d.w + ix] : 0.0;
            }
        }
    }
}

void col2im_add(const double* cols, const ConvDims& d, double* gx) {
    const int ckk = d.c * d.k * d.k;
    for (int row = 0; row < ckk; ++row) {
        const int c = row / (d.k * d.k);
        const int ky = (row / d.k) % d.k;
        const int kx = row % d.k;
        double* plane = gx + static_cast<std::size_t>(c) * d.h * d.w;
        const double* in_row = cols + static_cast<std::size_t>(row) * d.oh * d.ow;
        for (int oy = 0; oy < d.oh; ++oy) {
            const int iy = oy * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.h) continue;
            for (int ox = 0; ox < d.ow; ++ox) {
                const int ix = ox * d.stride + kx - d.pad;
                if (ix >= 0 && ix < d.w) plane[static_cast<std::size_t>(iy) * d.w + ix] += in_row[static_cast<std::size_t>(oy) * d.ow + ox];
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (b.shape() != Shape{d.o}) throw ShapeError("conv2d: bias shape mismatch");
    auto n = make_node("conv2d", {d.n, d.o, d.oh, d.ow}, {x.node(), w.node(), b.node()});
    const int ckk = d.c * d.k * d.k;
    const int opix = d.oh * d.ow;
    std::vector<double> cols(static_cast<std::size_t>(ckk) * opix);
    CMapMat W(w.values().data(), d.o, ckk);
    for (int s = 0; s < d.n; ++s) {
        im2col(x.values().data() + static_cast<std::size_t>(s) * d.c * d.h * d.w, d, cols.data());
        CMapMat C(cols.data(), ckk, opix);
        MapMat Y(n->value.data() + static_cast<std::size_t>(s) * d.o * opix, d.o, opix);
        Y.noalias() = W * C;
        for (int o = 0; o < d.o; ++o) {
            double* row = n->value.data() + (static_cast<std::size_t>(s) * d.o + o) * opix;
            const double bias = b.values()[o];
            for (int i = 0; i < opix; ++i) row[i] += bias;
        }
    }
    n->backprop = [d](Node& out) {
        Node& nx = *out.inputs[0];
        Node& nw = *out.inputs[1];
        Node& nb = *out.inputs[2];
        const int ckk = d.c * d.k * d.k;
        const int opix = d.oh * d.ow;
        std::vector<double> cols(static_cast<std::size_t>(ckk) * opix);
        std::vector<double> gcols;
        if (nx.requires_grad) {
            nx.ensure_grad();
            gcols.resize(cols.size());
        }
        if (nw.requires_grad) nw.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        CMapMat W(nw.value.data(), d.o, ckk);
        for (int s = 0; s < d.n; ++s) {
            CMapMat G(out.grad.data() + static_cast<std::size_t>(s) * d.o * opix, d.o, opix);
            if (nw.requires_grad || nx.requires_grad) {
                // im2col is recomputed instead of cached; memory stays flat.
                im2col(nx.value.data() + static_cast<std::size_t>(s) * d.c * d.h * d.w, d, cols.data());
            }
            if (nw.requires_grad) {
                CMapMat C(cols.data(), ckk, opix);
                MapMat Gw(nw.grad.data(), d.o, ckk);
                Gw.noalias() += G * C.transpose();
            }
            if (nx.requires_grad) {
                MapMat Gc(gcols.data(), ckk, opix);
                Gc.noalias() = W.transpose() * G;
                col2im_add(gcols.data(), d, nx.grad.data() + static_cast<std::size_t>(s) * d.c * d.h * d.w);
            }
            if (nb.requires_grad) {
                for (int o = 0; o < d.o; ++o) {
                    const double* row = out.grad.data() + (static_cast<std::size_t>(s) * d.o + o) * opix;
                    double acc = 0;
                    for (int i = 0; i < opix; ++i) acc += row[i];
                    nb.grad[o] += acc;
                }
            }
        }
    };
    return Tensor(n);
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.shape().size() != 4) throw ShapeError("upsample_nearest2: input must be [N,C,H,W]");
    const int n0 = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    auto n = make_node("upsample_nearest2", {n0, c, 2 * h, 2 * w}, {x.node()});
    const auto& xv = x.values();
    for (int p = 0; p < n0 * c; ++p) {
        const double* src = xv.data() + static_cast<std::size_t>(p) * h * w;
        double* dst = n->value.data() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int y = 0; y < 2 * h; ++y) {
            const double* srow = src + static_cast<std::size_t>(y / 2) * w;
            double* drow = dst + static_cast<std::size_t>(y) * 2 * w;
            for (int xq = 0; xq < 2 * w; ++xq) drow[xq] = srow[xq / 2];
        }
    }
    n->backprop = [n0, c, h, w](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int p = 0; p < n0 * c; ++p) {
            double* gsrc = nx.grad.data() + static_cast<std::size_t>(p) * h * w;
            const double* gdst = out.grad.data() + static_cast<std::size_t>(p) * 4 * h * w;
            for (int y = 0; y < 2 * h; ++y) {
                double* grow = gsrc + static_cast<std::size_t>(y / 2) * w;
                const double* drow = gdst + static_cast<std::size_t>(y) * 2 * w;
                for (int xq = 0; xq < 2 * w; ++xq) grow[xq / 2] += drow[xq];
            }
        }
    };
    return Tensor(n);
}

// --------------------------------------------------------------------------
// normalization
// --------------------------------------------------------------------------

// Row-normalization backward, both norms:
//   dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.shape().size() != 4) throw ShapeError("instance_norm: input must be [N,C,H,W]");
    const int n0 = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw ShapeError("instance_norm: affine params must be [C]");
    }
    const int m = h * w;
    const int rows = n0 * c;
    auto n = make_node("instance_norm", x.shape(), {x.node(), gamma.node(), beta.node()});
    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    // per (n, c) row over the spatial plane; affine indexed by channel
    for (int r = 0; r < rows; ++r) {
        const int ch = r % c;
        const double* xr = x.values().data() + static_cast<std::size_t>(r) * m;
        double* yr = n->value.data() + static_cast<std::size_t>(r) * m;
        double* hr = xhat->data() + static_cast<std::size_t>(r) * m;
        double mean = 0;
        for (int i = 0; i < m; ++i) mean += xr[i];
        mean /= m;
        double var = 0;
        for (int i = 0; i < m; ++i) {
            const double dvi = xr[i] - mean;
            var += dvi * dvi;
        }
        var /= m;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = inv;
        const double g = gamma.values()[ch];
        const double b = beta.values()[ch];
        for (int i = 0; i < m; ++i) {
            hr[i] = (xr[i] - mean) * inv;
            yr[i] = g * hr[i] + b;
        }
    }
    n->backprop = [n0, c, m, xhat, inv_sigma](Node& out) {
        Node& nx = *out.inputs[0];
        Node& ng = *out.inputs[1];
        Node& nb = *out.inputs[2];
        const int rows = n0 * c;
        if (ng.requires_grad) ng.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        if (nx.requires_grad) nx.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const int ch = r % c;
            const double* gy = out.grad.data() + static_cast<std::size_t>(r) * m;
            const double* hr = xhat->data() + static_cast<std::size_t>(r) * m;
            if (ng.requires_grad || nb.requires_grad) {
                double sg = 0, sb = 0;
                for (int i = 0; i < m; ++i) {
                    sg += gy[i] * hr[i];
                    sb += gy[i];
                }
                if (ng.requires_grad) ng.grad[ch] += sg;
                if (nb.requires_grad) nb.grad[ch] += sb;
            }
            if (nx.requires_grad) {
                const double g = ng.value[ch];
                const double inv = (*inv_sigma)[r];
                double mean_dh = 0, mean_dhh = 0;
                for (int i = 0; i < m; ++i) {
                    const double dh = gy[i] * g;
                    mean_dh += dh;
                    mean_dhh += dh * hr[i];
                }
                mean_dh /= m;
                mean_dhh /= m;
                double* gx = nx.grad.data() + static_cast<std::size_t>(r) * m;
                for (int i = 0; i < m; ++i) {
                    const double dh = gy[i] * g;
                    gx[i] += inv * (dh - mean_dh - hr[i] * mean_dhh);
                }
            }
        }
    };
    return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.shape().empty()) throw ShapeError("layer_norm: scalar input");
    const int d = x.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw ShapeError("layer_norm: affine params must match last dim");
    }
    const int rows = static_cast<int>(x.size() / d);
    auto n = make_node("layer_norm", x.shape(), {x.node(), gamma.node(), beta.node()});
    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + static_cast<std::size_t>(r) * d;
        double* yr = n->value.data() + static_cast<std::size_t>(r) * d;
        double* hr = xhat->data() + static_cast<std::size_t>(r) * d;
        double mean = 0;
        for (int i = 0; i < d; ++i) mean += xr[i];
        mean /= d;
        double var = 0;
        for (int i = 0; i < d; ++i) {
            const double dv = xr[i] - mean;
            var += dv * dv;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = inv;
        for (int i = 0; i < d; ++i) {
            hr[i] = (xr[i] - mean) * inv;
            yr[i] = gamma.values()[i] * hr[i] + beta.values()[i];
        }
    }
    n->backprop = [rows, d, xhat, inv_sigma](Node& out) {
        Node& nx = *out.inputs[0];
        Node& ng = *out.inputs[1];
        Node& nb = *out.inputs[2];
        if (ng.requires_grad) ng.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        if (nx.requires_grad) nx.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const double* gy = out.grad.data() + static_cast<std::size_t>(r) * d;
            const double* hr = xhat->data() + static_cast<std::size_t>(r) * d;
            if (ng.requires_grad || nb.requires_grad) {
                for (int i = 0; i < d; ++i) {
                    if (ng.requires_grad) ng.grad[i] += gy[i] * hr[i];
                    if (nb.requires_grad) nb.grad[i] += gy[i];
                }
            }
            if (nx.requires_grad) {
                const double inv = (*inv_sigma)[r];
                double mean_dh = 0, mean_dhh = 0;
                for (int i = 0; i < d; ++i) {
                    const double dh = gy[i] * ng.value[i];
                    mean_dh += dh;
                    mean_dhh += dh * hr[i];
                }
                mean_dh /= d;
                mean_dhh /= d;
                double* gx = nx.grad.data() + static_cast<std::size_t>(r) * d;
                for (int i = 0; i < d; ++i) {
                    const double dh = gy[i] * ng.value[i];
                    gx[i] += inv * (dh - mean_dh - hr[i] * mean_dhh);
                }
            }
        }
    };
    return Tensor(n);
}

// --------------------------------------------------------------------------
// attention
// --------------------------------------------------------------------------

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    if (q.shape().size() != 3 || k.shape().size() != 3 || v.shape().size() != 3) {
        throw ShapeError("attention: q/k/v must be [N,T,D]");
    }
    const int n0 = q.shape()[0], tq = q.shape()[1], d = q.shape()[2];
    const int tk = k.shape()[1];
    if (k.shape()[0] != n0 || v.shape()[0] != n0 || k.shape()[2] != d || v.shape() != k.shape()) {
        throw ShapeError("attention: k/v shapes inconsistent with q");
    }
    if (heads <= 0 || d % heads != 0) throw ValueError("attention: head count must divide dim");
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto n = make_node("attention", q.shape(), {q.node(), k.node(), v.node()});

    auto softmax_rows = [](RowMat& s) {
        for (int r = 0; r < s.rows(); ++r) {
            double mx = s(r, 0);
            for (int j = 1; j < s.cols(); ++j) mx = std::max(mx, s(r, j));
            double sum = 0;
            for (int j = 0; j < s.cols(); ++j) {
                s(r, j) = std::exp(s(r, j) - mx);
                sum += s(r, j);
            }
            for (int j = 0; j < s.cols(); ++j) s(r, j) /= sum;
        }
    };
    auto gather_head = [d, dh](const std::vector<double>& src, int sample, int t_len, int head) {
        RowMat m(t_len, dh);
        for (int t = 0; t < t_len; ++t) {
            const double* row = src.data() + (static_cast<std::size_t>(sample) * t_len + t) * d;
            for (int j = 0; j < dh; ++j) m(t, j) = row[head * dh + j];
        }
        return m;
    };

    for (int s = 0; s < n0; ++s) {
        for (int h = 0; h < heads; ++h) {
            RowMat Q = gather_head(q.values(), s, tq, h);
            RowMat K = gather_head(k.values(), s, tk, h);
            RowMat V = gather_head(v.values(), s, tk, h);
            RowMat A = (Q * K.transpose()) * scale;
            softmax_rows(A);
            RowMat O = A * V;
            for (int t = 0; t < tq; ++t) {
                double* row = n->value.data() + (static_cast<std::size_t>(s) * tq + t) * d;
                for (int j = 0; j < dh; ++j) row[h * dh + j] = O(t, j);
            }
        }
    }
    n->backprop = [n0, tq, tk, d, heads, dh, scale, softmax_rows, gather_head](Node& out) {
        Node& nq = *out.inputs[0];
        Node& nk = *out.inputs[1];
        Node& nv = *out.inputs[2];
        if (nq.requires_grad) nq.ensure_grad();
        if (nk.requires_grad) nk.ensure_grad();
        if (nv.requires_grad) nv.ensure_grad();
        auto scatter_head = [d, dh](std::vector<double>& dst, const RowMat& m, int sample, int t_len, int head) {
            for (int t = 0; t < t_len; ++t) {
                double* row = dst.data() + (static_cast<std::size_t>(sample) * t_len + t) * d;
                for (int j = 0; j < dh; ++j) row[head * dh + j] += m(t, j);
            }
        };
        for (int s = 0; s < n0; ++s) {
            for (int h = 0; h < heads; ++h) {
                RowMat Q = gather_head(nq.value, s, tq, h);
                RowMat K = gather_head(nk.value, s, tk, h);
                RowMat V = gather_head(nv.value, s, tk, h);
                RowMat A = (Q * K.transpose()) * scale;
                softmax_rows(A);
                RowMat Go = gather_head(out.grad, s, tq, h);
                if (nv.requires_grad) {
                    RowMat Gv = A.transpose() * Go;
                    scatter_head(nv.grad, Gv, s, tk, h);
                }
                if (nq.requires_grad || nk.requires_grad) {
                    RowMat Ga = Go * V.transpose();  // [tq, tk]
                    // softmax backward per row
                    RowMat Gs(tq, tk);
                    for (int r = 0; r < tq; ++r) {
                        double dot = 0;
                        for (int j = 0; j < tk; ++j) dot += Ga(r, j) * A(r, j);
                        for (int j = 0; j < tk; ++j) Gs(r, j) = A(r, j) * (Ga(r, j) - dot);
                    }
                    if (nq.requires_grad) {
                        RowMat Gq = (Gs * K) * scale;
                        scatter_head(nq.grad, Gq, s, tq, h);
                    }
                    if (nk.requires_grad) {
                        RowMat Gk = (Gs.transpose() * Q) * scale;
                        scatter_head(nk.grad, Gk, s, tk, h);
                    }
                }
            }
        }
    };
    return Tensor(n);
}

// --------------------------------------------------------------------------
// layout ops
// --------------------------------------------------------------------------

Tensor grid_to_tokens(const Tensor& x) {
    if (x.shape().size() != 4) throw ShapeError("grid_to_tokens: input must be [N,C,H,W]");
    const int n0 = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const int t = h * w;
    auto n = make_node("grid_to_tokens", {n0, t, c}, {x.node()});
    for (int s = 0; s < n0; ++s) {
        const double* src = x.values().data() + static_cast<std::size_t>(s) * c * t;
        double* dst = n->value.data() + static_cast<std::size_t>(s) * t * c;
        for (int ch = 0; ch < c; ++ch)
            for (int p = 0; p < t; ++p) dst[static_cast<std::size_t>(p) * c + ch] = src[static_cast<std::size_t>(ch) * t + p];
    }
    n->backprop = [n0, c, t](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            double* gx = nx.grad.data() + static_cast<std::size_t>(s) * c * t;
            const double* g = out.grad.data() + static_cast<std::size_t>(s) * t * c;
            for (int ch = 0; ch < c; ++ch)
                for (int p = 0; p < t; ++p) gx[static_cast<std::size_t>(ch) * t + p] += g[static_cast<std::size_t>(p) * c + ch];
        }
    };
    return Tensor(n);
}

Tensor tokens_to_grid(const Tensor& x, int h, int w) {
    if (x.shape().size() != 3) throw ShapeError("tokens_to_grid: input must be [N,T,D]");
    const int n0 = x.shape()[0], t = x.shape()[1], d = x.shape()[2];
    if (t != h * w) throw ShapeError("tokens_to_grid: token count does not match grid");
    auto n = make_node("tokens_to_grid", {n0, d, h, w}, {x.node()});
    for (int s = 0; s < n0; ++s) {
        const double* src = x.values().data() + static_cast<std::size_t>(s) * t * d;
        double* dst = n->value.data() + static_cast<std::size_t>(s) * d * t;
        for (int p = 0; p < t; ++p)
            for (int ch = 0; ch < d; ++ch) dst[static_cast<std::size_t>(ch) * t + p] = src[static_cast<std::size_t>(p) * d + ch];
    }
    n->backprop = [n0, t, d](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            double* gx = nx.grad.data() + static_cast<std::size_t>(s) * t * d;
            const double* g = out.grad.data() + static_cast<std::size_t>(s) * d * t;
            for (int p = 0; p < t; ++p)
                for (int ch = 0; ch < d; ++ch) gx[static_cast<std::size_t>(p) * d + ch] += g[static_cast<std::size_t>(ch) * t + p];
        }
    };
    return Tensor(n);
}

Tensor prepend_token(const Tensor& tok, const Tensor& tokens) {
    if (tok.shape().size() != 2 || tokens.shape().size() != 3) {
        throw ShapeError("prepend_token: expected [N,D] and [N,T,D]");
    }
    const int n0 = tokens.shape()[0], t = tokens.shape()[1], d = tokens.shape()[2];
    if (tok.shape()[0] != n0 || tok.shape()[1] != d) throw ShapeError("prepend_token: token shape mismatch");
    auto n = make_node("prepend_token", {n0, t + 1, d}, {tok.node(), tokens.node()});
    for (int s = 0; s < n0; ++s) {
        double* dst = n->value.data() + static_cast<std::size_t>(s) * (t + 1) * d;
        std::copy_n(tok.values().data() + static_cast<std::size_t>(s) * d, d, dst);
        std::copy_n(tokens.values().data() + static_cast<std::size_t>(s) * t * d, static_cast<std::size_t>(t) * d, dst + d);
    }
    n->backprop = [n0, t, d](Node& out) {
        Node& ntok = *out.inputs[0];
        Node& nts = *out.inputs[1];
        if (ntok.requires_grad) ntok.ensure_grad();
        if (nts.requires_grad) nts.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            const double* g = out.grad.data() + static_cast<std::size_t>(s) * (t + 1) * d;
            if (ntok.requires_grad) {
                double* gt = ntok.grad.data() + static_cast<std::size_t>(s) * d;
                for (int i = 0; i < d; ++i) gt[i] += g[i];
            }
            if (nts.requires_grad) {
                double* gs = nts.grad.data() + static_cast<std::size_t>(s) * t * d;
                for (std::size_t i = 0; i < static_cast<std::size_t>(t) * d; ++i) gs[i] += g[d + i];
            }
        }
    };
    return Tensor(n);
}

Tensor drop_first_token(const Tensor& tokens) {
    if (tokens.shape().size() != 3 || tokens.shape()[1] < 2) {
        throw ShapeError("drop_first_token: need [N,T>=2,D]");
    }
    const int n0 = tokens.shape()[0], t = tokens.shape()[1], d = tokens.shape()[2];
    auto n = make_node("drop_first_token", {n0, t - 1, d}, {tokens.node()});
    for (int s = 0; s < n0; ++s) {
        std::copy_n(tokens.values().data() + (static_cast<std::size_t>(s) * t + 1) * d,
                    static_cast<std::size_t>(t - 1) * d,
                    n->value.data() + static_cast<std::size_t>(s) * (t - 1) * d);
    }
    n->backprop = [n0, t, d](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            const double* g = out.grad.data() + static_cast<std::size_t>(s) * (t - 1) * d;
            double* gx = nx.grad.data() + (static_cast<std::size_t>(s) * t + 1) * d;
            for (std::size_t i = 0; i < static_cast<std::size_t>(t - 1) * d; ++i) gx[i] += g[i];
        }
    };
    return Tensor(n);
}

Tensor add_position(const Tensor& tokens, const Tensor& pos) {
    if (tokens.shape().size() != 3 || pos.shape().size() != 2 ||
        tokens.shape()[1] != pos.shape()[0] || tokens.shape()[2] != pos.shape()[1]) {
        throw ShapeError("add_position: shapes " + shape_str(tokens.shape()) + " and " +
                         shape_str(pos.shape()));
    }
    const int n0 = tokens.shape()[0];
    const std::size_t td = static_cast<std::size_t>(tokens.shape()[1]) * tokens.shape()[2];
    auto n = make_node("add_position", tokens.shape(), {tokens.node(), pos.node()});
    for (int s = 0; s < n0; ++s) {
        const double* src = tokens.values().data() + static_cast<std::size_t>(s) * td;
        double* dst = n->value.data() + static_cast<std::size_t>(s) * td;
        for (std::size_t i = 0; i < td; ++i) dst[i] = src[i] + pos.values()[i];
    }
    n->backprop = [n0, td](Node& out) {
        Node& nt = *out.inputs[0];
        Node& np = *out.inputs[1];
        if (nt.requires_grad) {
            nt.ensure_grad();
            for (std::size_t i = 0; i < out.grad.size(); ++i) nt.grad[i] += out.grad[i];
        }
        if (np.requires_grad) {
            np.ensure_grad();
            for (int s = 0; s < n0; ++s) {
                const double* g = out.grad.data() + static_cast<std::size_t>(s) * td;
                for (std::size_t i = 0; i < td; ++i) np.grad[i] += g[i];
            }
        }
    };
    return Tensor(n);
}

Tensor mean_tokens(const Tensor& tokens) {
    if (tokens.shape().size() != 3) throw ShapeError("mean_tokens: input must be [N,T,D]");
    const int n0 = tokens.shape()[0], t = tokens.shape()[1], d = tokens.shape()[2];
    auto n = make_node("mean_tokens", {n0, d}, {tokens.node()});
    for (int s = 0; s < n0; ++s) {
        double* dst = n->value.data() + static_cast<std::size_t>(s) * d;
        std::fill_n(dst, d, 0.0);
        for (int p = 0; p < t; ++p) {
            const double* row = tokens.values().data() + (static_cast<std::size_t>(s) * t + p) * d;
            for (int i = 0; i < d; ++i) dst[i] += row[i];
        }
        for (int i = 0; i < d; ++i) dst[i] /= t;
    }
    n->backprop = [n0, t, d](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            const double* g = out.grad.data() + static_cast<std::size_t>(s) * d;
            for (int p = 0; p < t; ++p) {
                double* gx = nx.grad.data() + (static_cast<std::size_t>(s) * t + p) * d;
                for (int i = 0; i < d; ++i) gx[i] += g[i] / t;
            }
        }
    };
    return Tensor(n);
}

Tensor replace_tokens(const Tensor& tokens, const Tensor& fill, const std::vector<int>& idx) {
    if (tokens.shape().size() != 3) throw ShapeError("replace_tokens: input must be [N,T,D]");
    const int n0 = tokens.shape()[0], t = tokens.shape()[1], d = tokens.shape()[2];
    if (fill.shape() != Shape{d}) throw ShapeError("replace_tokens: fill must be [D]");
    for (int i : idx) {
        if (i < 0 || i >= t) throw ValueError("replace_tokens: index out of range");
    }
    auto n = make_node("replace_tokens", tokens.shape(), {tokens.node(), fill.node()});
    n->value = tokens.values();
    for (int s = 0; s < n0; ++s) {
        for (int i : idx) {
            std::copy_n(fill.values().data(), d, n->value.data() + (static_cast<std::size_t>(s) * t + i) * d);
        }
    }
    auto idx_copy = idx;
    n->backprop = [n0, t, d, idx_copy](Node& out) {
        Node& nt = *out.inputs[0];
        Node& nf = *out.inputs[1];
        std::vector<bool> masked(static_cast<std::size_t>(t), false);
        for (int i : idx_copy) masked[static_cast<std::size_t>(i)] = true;
        if (nt.requires_grad) {
            nt.ensure_grad();
            for (int s = 0; s < n0; ++s)
                for (int p = 0; p < t; ++p) {
                    if (masked[static_cast<std::size_t>(p)]) continue;
                    const std::size_t off = (static_cast<std::size_t>(s) * t + p) * d;
                    for (int i = 0; i < d; ++i) nt.grad[off + i] += out.grad[off + i];
                }
        }
        if (nf.requires_grad) {
            nf.ensure_grad();
            for (int s = 0; s < n0; ++s)
                for (int p : idx_copy) {
                    const std::size_t off = (static_cast<std::size_t>(s) * t + p) * d;
                    for (int i = 0; i < d; ++i) nf.grad[i] += out.grad[off + i];
                }
        }
    };
    return Tensor(n);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4) throw ShapeError("concat_channels: inputs must be [N,C,H,W]");
    if (a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[2] || a.shape()[3] != b.shape()[3]) {
        throw ShapeError("concat_channels: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const int n0 = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    const std::size_t plane = static_cast<std::size_t>(a.shape()[2]) * a.shape()[3];
    auto n = make_node("concat_channels", {n0, ca + cb, a.shape()[2], a.shape()[3]}, {a.node(), b.node()});
    for (int s = 0; s < n0; ++s) {
        double* dst = n->value.data() + static_cast<std::size_t>(s) * (ca + cb) * plane;
        std::copy_n(a.values().data() + static_cast<std::size_t>(s) * ca * plane, ca * plane, dst);
        std::copy_n(b.values().data() + static_cast<std::size_t>(s) * cb * plane, cb * plane, dst + ca * plane);
    }
    n->backprop = [n0, ca, cb, plane](Node& out) {
        Node& na = *out.inputs[0];
        Node& nb = *out.inputs[1];
        if (na.requires_grad) na.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            const double* g = out.grad.data() + static_cast<std::size_t>(s) * (ca + cb) * plane;
            if (na.requires_grad) {
                double* ga = na.grad.data() + static_cast<std::size_t>(s) * ca * plane;
                for (std::size_t i = 0; i < ca * plane; ++i) ga[i] += g[i];
            }
            if (nb.requires_grad) {
                double* gb = nb.grad.data() + static_cast<std::size_t>(s) * cb * plane;
                for (std::size_t i = 0; i < cb * plane; ++i) gb[i] += g[ca * plane + i];
            }
        }
    };
    return Tensor(n);
}

Tensor select_channels(const Tensor& x, const std::vector<int>& idx) {
    if (x.shape().size() != 4) throw ShapeError("select_channels: input must be [N,C,H,W]");
    const int n0 = x.shape()[0], c = x.shape()[1];
    const std::size_t plane = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
    for (int i : idx) {
        if (i < 0 || i >= c) throw ValueError("select_channels: channel index out of range");
    }
    const int cs = static_cast<int>(idx.size());
    auto n = make_node("select_channels", {n0, cs, x.shape()[2], x.shape()[3]}, {x.node()});
    for (int s = 0; s < n0; ++s) {
        for (int j = 0; j < cs; ++j) {
            std::copy_n(x.values().data() + (static_cast<std::size_t>(s) * c + idx[j]) * plane, plane,
                        n->value.data() + (static_cast<std::size_t>(s) * cs + j) * plane);
        }
    }
    auto idx_copy = idx;
    n->backprop = [n0, c, cs, plane, idx_copy](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int s = 0; s < n0; ++s) {
            for (int j = 0; j < cs; ++j) {
                const double* g = out.grad.data() + (static_cast<std::size_t>(s) * cs + j) * plane;
                double* gx = nx.grad.data() + (static_cast<std::size_t>(s) * c + idx_copy[j]) * plane;
                for (std::size_t i = 0; i < plane; ++i) gx[i] += g[i];
            }
        }
    };
    return Tensor(n);
}

// --------------------------------------------------------------------------
// rowwise ops
// --------------------------------------------------------------------------

namespace {

void check_row_shapes(const char* op, const Tensor& x, const Tensor& m) {
    if (x.shape().size() != 2 || m.shape().size() != 2 || m.shape()[1] != 1 ||
        m.shape()[0] != x.shape()[0]) {
        throw ShapeError(std::string(op) + ": expected [N,D] with [N,1], got " +
                         shape_str(x.shape()) + " and " + shape_str(m.shape()));
    }
}

enum class RowKind { Add, Sub, Mul, Div };

Tensor row_binary(const char* name, RowKind kind, const Tensor& x, const Tensor& m) {
    check_row_shapes(name, x, m);
    const int rows = x.shape()[0], d = x.shape()[1];
    auto n = make_node(name, x.shape(), {x.node(), m.node()});
    for (int r = 0; r < rows; ++r) {
        const double mv = m.values()[r];
        const double* xr = x.values().data() + static_cast<std::size_t>(r) * d;
        double* yr = n->value.data() + static_cast<std::size_t>(r) * d;
        for (int i = 0; i < d; ++i) {
            switch (kind) {
                case RowKind::Add: yr[i] = xr[i] + mv; break;
                case RowKind::Sub: yr[i] = xr[i] - mv; break;
                case RowKind::Mul: yr[i] = xr[i] * mv; break;
                case RowKind::Div: yr[i] = xr[i] / mv; break;
            }
        }
    }
    n->backprop = [rows, d, kind](Node& out) {
        Node& nx = *out.inputs[0];
        Node& nm = *out.inputs[1];
        if (nx.requires_grad) nx.ensure_grad();
        if (nm.requires_grad) nm.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const double mv = nm.value[r];
            const double* g = out.grad.data() + static_cast<std::size_t>(r) * d;
            const double* xr = nx.value.data() + static_cast<std::size_t>(r) * d;
            if (nx.requires_grad) {
                double* gx = nx.grad.data() + static_cast<std::size_t>(r) * d;
                for (int i = 0; i < d; ++i) {
                    switch (kind) {
                        case RowKind::Add:
                        case RowKind::Sub: gx[i] += g[i]; break;
                        case RowKind::Mul: gx[i] += g[i] * mv; break;
                        case RowKind::Div: gx[i] += g[i] / mv; break;
                    }
                }
            }
            if (nm.requires_grad) {
                double acc = 0;
                for (int i = 0; i < d; ++i) {
                    switch (kind) {
                        case RowKind::Add: acc += g[i]; break;
                        case RowKind::Sub: acc -= g[i]; break;
                        case RowKind::Mul: acc += g[i] * xr[i]; break;
                        case RowKind::Div: acc += -g[i] * xr[i] / (mv * mv); break;
                    }
                }
                nm.grad[r] += acc;
            }
        }
    };
    return Tensor(n);
}

}  // namespace

Tensor row_mean(const Tensor& x) {
    if (x.shape().size() != 2) throw ShapeError("row_mean: input must be [N,D]");
    const int rows = x.shape()[0], d = x.shape()[1];
    auto n = make_node("row_mean", {rows, 1}, {x.node()});
    for (int r = 0; r < rows; ++r) {
        double s = 0;
        const double* xr = x.values().data() + static_cast<std::size_t>(r) * d;
        for (int i = 0; i < d; ++i) s += xr[i];
        n->value[r] = s / d;
    }
    n->backprop = [rows, d](Node& out) {
        Node& nx = *out.inputs[0];
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const double g = out.grad[r] / d;
            double* gx = nx.grad.data() + static_cast<std::size_t>(r) * d;
            for (int i = 0; i < d; ++i) gx[i] += g;
        }
    };
    return Tensor(n);
}

Tensor row_add(const Tensor& x, const Tensor& m) { return row_binary("row_add", RowKind::Add, x, m); }
Tensor row_sub(const Tensor& x, const Tensor& m) { return row_binary("row_sub", RowKind::Sub, x, m); }
Tensor row_mul(const Tensor& x, const Tensor& m) { return row_binary("row_mul", RowKind::Mul, x, m); }
Tensor row_div(const Tensor& x, const Tensor& m) { return row_binary("row_div", RowKind::Div, x, m); }

// --------------------------------------------------------------------------
// autodiff driver
// --------------------------------------------------------------------------

namespace {

void topo_order(Node* root, std::vector<Node*>& order) {
    std::unordered_map<Node*, int> state;  // 0 new, 1 open, 2 done
    std::vector<Node*> stack{root};
    while (!stack.empty()) {
        Node* n = stack.back();
        int& st = state[n];
        if (st == 0) {
            st = 1;
            for (const auto& in : n->inputs) {
                if (state[in.get()] == 0) stack.push_back(in.get());
            }
        } else {
            stack.pop_back();
            if (st == 1) {
                st = 2;
                order.push_back(n);
            }
        }
    }
}

}  // namespace

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar tensor");
    if (!loss.requires_grad()) return;
    std::vector<Node*> order;
    topo_order(loss.node().get(), order);
    loss.node()->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad || !n->backprop) continue;
        if (n->grad.empty()) continue;  // no gradient ever reached this node
        n->backprop(*n);
    }
}

void zero_grad(const std::vector<Tensor>& params) {
    for (const auto& p : params) {
        auto& g = p.node()->grad;
        std::fill(g.begin(), g.end(), 0.0);
    }
}

std::unordered_set<std::string> reachable_params(const Tensor& loss) {
    std::unordered_set<std::string> out;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{loss.node().get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || !seen.insert(n).second) continue;
        if (!n->param_name.empty()) out.insert(n->param_name);
        for (const auto& in : n->inputs) stack.push_back(in.get());
    }
    return out;
}

}  // namespace bitstain::core
