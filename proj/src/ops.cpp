#include "scanfer/ops.hpp"

#include "scanfer/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <utility>

namespace scanfer {

namespace testing_hooks {
namespace {
std::atomic<bool> corrupt{false};
}
void set_corrupt_backward(bool on) { corrupt = on; }
bool corrupt_backward() { return corrupt; }
}  // namespace testing_hooks

namespace branch_trace {
namespace {
thread_local bool on = false;
thread_local std::uint64_t digest = 0;
}  // namespace
void start() {
    on = true;
    digest = 0xcbf29ce484222325ull;
}
std::uint64_t stop() {
    on = false;
    return digest;
}
void mix(std::uint64_t v) { digest = (digest ^ v) * 0x100000001b3ull; }
bool active() { return on; }
}  // namespace branch_trace

namespace {

struct ImageDims {
    Index n, c, h, w;
    [[nodiscard]] Index hw() const { return h * w; }
};

ImageDims image_dims(const Shape& s, const char* op) {
    if (s.size() == 3) return {1, s[0], s[1], s[2]};
    if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
    throw ShapeError(std::string(op) + ": expected C x H x W or N x C x H x W, got " + to_string(s));
}

Shape image_shape(bool batched, Index n, Index c, Index h, Index w) {
    return batched ? Shape{n, c, h, w} : Shape{c, h, w};
}

void require_same_shape(const Variable& a, const Variable& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

// Columns of one image laid out for the convolution GEMM:
// row = (ci, ky, kx), col = (oy, ox).
void im2col(const double* img, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho, Index wo,
            RowMatrix& col) {
    col.resize(c * k * k, ho * wo);
    for (Index ci = 0; ci < c; ++ci) {
        const double* plane = img + ci * h * w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                double* row = col.data() + ((ci * k + ky) * k + kx) * ho * wo;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    for (Index ox = 0; ox < wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const RowMatrix& col, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho,
                Index wo, double* img) {
    for (Index ci = 0; ci < c; ++ci) {
        double* plane = img + ci * h * w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                const double* row = col.data() + ((ci * k + ky) * k + kx) * ho * wo;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (Index ox = 0; ox < wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) plane[iy * w + ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

Index channel_axis(Index rank) { return (rank == 2 || rank == 4) ? 1 : 0; }

}  // namespace

Variable conv2d(const Variable& input, const Variable& weight, const Variable& bias, Index stride,
                Padding padding) {
    const auto d = image_dims(input.shape(), "conv2d");
    const bool batched = input.shape().size() == 4;
    const Shape& ws = weight.shape();
    if (ws.size() != 4 || ws[2] != ws[3])
        throw ShapeError("conv2d: weight must be C_out x C_in x k x k, got " + to_string(ws));
    const Index cout = ws[0], k = ws[2];
    if (ws[1] != d.c)
        throw ShapeError("conv2d: weight expects " + std::to_string(ws[1]) + " input channels, input has " +
                         std::to_string(d.c));
    if (bias.shape() != Shape{cout}) throw ShapeError("conv2d: bias must have C_out elements");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (padding == Padding::same && k % 2 == 0) throw std::invalid_argument("conv2d: same padding needs odd k");
    const Index pad = padding == Padding::same ? k / 2 : 0;
    if (d.h + 2 * pad < k || d.w + 2 * pad < k) throw ShapeError("conv2d: kernel larger than padded input");
    const Index ho = (d.h + 2 * pad - k) / stride + 1;
    const Index wo = (d.w + 2 * pad - k) / stride + 1;

    Tensor out(image_shape(batched, d.n, cout, ho, wo));
    const ConstMatrixMap wm = weight.value().matrix(cout, d.c * k * k);
    const Eigen::VectorXd& b = bias.value().data();
    RowMatrix col;
    for (Index n = 0; n < d.n; ++n) {
        im2col(input.value().data().data() + n * d.c * d.hw(), d.c, d.h, d.w, k, stride, pad, ho, wo, col);
        MatrixMap o(out.data().data() + n * cout * ho * wo, cout, ho * wo);
        o.noalias() = wm * col;
        o.colwise() += b;
    }

    return Variable::make_result(std::move(out), {input, weight, bias}, [=](const detail::Node& self) {
        const auto& x = self.inputs[0];
        const auto& wt = self.inputs[1];
        const auto& bs = self.inputs[2];
        const ConstMatrixMap wmat(wt->value.data().data(), cout, d.c * k * k);
        RowMatrix colbuf;
        RowMatrix dw = RowMatrix::Zero(cout, d.c * k * k);
        Eigen::VectorXd db = Eigen::VectorXd::Zero(cout);
        Eigen::VectorXd dx;
        if (x->requires_grad) dx = Eigen::VectorXd::Zero(x->value.size());
        for (Index n = 0; n < d.n; ++n) {
            const ConstMatrixMap g(self.grad.data().data() + n * cout * ho * wo, cout, ho * wo);
            if (wt->requires_grad) {
                im2col(x->value.data().data() + n * d.c * d.hw(), d.c, d.h, d.w, k, stride, pad, ho, wo, colbuf);
                dw.noalias() += g * colbuf.transpose();
            }
            if (bs->requires_grad) db += g.rowwise().sum();
            if (x->requires_grad) {
                RowMatrix dcol = wmat.transpose() * g;
                col2im_add(dcol, d.c, d.h, d.w, k, stride, pad, ho, wo, dx.data() + n * d.c * d.hw());
            }
        }
        if (x->requires_grad) x->accumulate(dx);
        if (wt->requires_grad) wt->accumulate(Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size()));
        if (bs->requires_grad) bs->accumulate(db);
    });
}

Variable batchnorm2d(const Variable& input, const Variable& gamma, const Variable& beta, RunningStats& stats,
                     Mode mode, double eps, double momentum) {
    const auto d = image_dims(input.shape(), "batchnorm2d");
    if (gamma.shape() != Shape{d.c} || beta.shape() != Shape{d.c})
        throw ShapeError("batchnorm2d: gamma/beta must have one value per channel");
    if (stats.mean.shape() != Shape{d.c} || stats.var.shape() != Shape{d.c})
        throw ShapeError("batchnorm2d: running stats must have one value per channel");
    if (!(eps > 0)) throw std::invalid_argument("batchnorm2d: eps must be positive");
    const Index hw = d.hw();
    const Index m = d.n * hw;
    const double* x = input.value().data().data();

    Eigen::VectorXd mean(d.c), inv_std(d.c);
    for (Index c = 0; c < d.c; ++c) {
        if (mode == Mode::train) {
            double s = 0.0;
            for (Index n = 0; n < d.n; ++n)
                for (Index i = 0; i < hw; ++i) s += x[(n * d.c + c) * hw + i];
            const double mu = s / static_cast<double>(m);
            double ss = 0.0;
            for (Index n = 0; n < d.n; ++n)
                for (Index i = 0; i < hw; ++i) {
                    const double dv = x[(n * d.c + c) * hw + i] - mu;
                    ss += dv * dv;
                }
            const double var = ss / static_cast<double>(m);
            const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
            stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mu;
            stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * unbiased;
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + eps);
        } else {
            mean[c] = stats.mean[c];
            inv_std[c] = 1.0 / std::sqrt(stats.var[c] + eps);
        }
    }

    Tensor xhat(input.shape());
    Tensor out(input.shape());
    const Eigen::VectorXd& g = gamma.value().data();
    const Eigen::VectorXd& b = beta.value().data();
    for (Index n = 0; n < d.n; ++n)
        for (Index c = 0; c < d.c; ++c)
            for (Index i = 0; i < hw; ++i) {
                const Index j = (n * d.c + c) * hw + i;
                xhat[j] = (x[j] - mean[c]) * inv_std[c];
                out[j] = g[c] * xhat[j] + b[c];
            }

    return Variable::make_result(
        std::move(out), {input, gamma, beta}, [=, xhat = std::move(xhat)](const detail::Node& self) {
            const auto& in = self.inputs[0];
            const auto& ga = self.inputs[1];
            const auto& be = self.inputs[2];
            const double* dy = self.grad.data().data();
            Eigen::VectorXd dgamma = Eigen::VectorXd::Zero(d.c), dbeta = Eigen::VectorXd::Zero(d.c);
            for (Index n = 0; n < d.n; ++n)
                for (Index c = 0; c < d.c; ++c)
                    for (Index i = 0; i < hw; ++i) {
                        const Index j = (n * d.c + c) * hw + i;
                        dgamma[c] += dy[j] * xhat[j];
                        dbeta[c] += dy[j];
                    }
            if (in->requires_grad) {
                const Eigen::VectorXd& gm = ga->value.data();
                Eigen::VectorXd dx(in->value.size());
                const double md = static_cast<double>(m);
                for (Index n = 0; n < d.n; ++n)
                    for (Index c = 0; c < d.c; ++c)
                        for (Index i = 0; i < hw; ++i) {
                            const Index j = (n * d.c + c) * hw + i;
                            if (mode == Mode::train) {
                                dx[j] = gm[c] * inv_std[c] / md * (md * dy[j] - dbeta[c] - xhat[j] * dgamma[c]);
                            } else {
                                dx[j] = gm[c] * inv_std[c] * dy[j];
                            }
                        }
                in->accumulate(dx);
            }
            if (ga->requires_grad) ga->accumulate(dgamma);
            if (be->requires_grad) be->accumulate(dbeta);
        });
}

Variable prelu(const Variable& input, const Variable& slope) {
    const Shape& s = input.shape();
    if (s.empty()) throw ShapeError("prelu: scalar input");
    const Index rank = static_cast<Index>(s.size());
    const Index axis = channel_axis(rank);
    const Index channels = s[static_cast<std::size_t>(axis)];
    const Index ns = slope.value().size();
    if (slope.shape().size() != 1 || (ns != 1 && ns != channels))
        throw ShapeError("prelu: slope length must be 1 or the channel count " + std::to_string(channels));
    Index inner = 1;
    for (Index a = axis + 1; a < rank; ++a) inner *= s[static_cast<std::size_t>(a)];
    const Index size = input.value().size();
    auto chan = [=](Index j) { return ns == 1 ? Index{0} : (j / inner) % channels; };

    Tensor out(s);
    const Eigen::VectorXd& x = input.value().data();
    const Eigen::VectorXd& a = slope.value().data();
    for (Index j = 0; j < size; ++j) out[j] = x[j] >= 0.0 ? x[j] : a[chan(j)] * x[j];
    if (branch_trace::active())
        for (Index j = 0; j < size; ++j) branch_trace::mix(static_cast<std::uint64_t>(j) << 1 | (x[j] >= 0.0));

    return Variable::make_result(std::move(out), {input, slope}, [=](const detail::Node& self) {
        const auto& in = self.inputs[0];
        const auto& sl = self.inputs[1];
        const Eigen::VectorXd& xv = in->value.data();
        const Eigen::VectorXd& av = sl->value.data();
        const Eigen::VectorXd& g = self.grad.data();
        Eigen::VectorXd dx(size);
        Eigen::VectorXd da = Eigen::VectorXd::Zero(ns);
        for (Index j = 0; j < size; ++j) {
            if (xv[j] >= 0.0) {
                dx[j] = g[j];
            } else {
                dx[j] = av[chan(j)] * g[j];
                da[chan(j)] += xv[j] * g[j];
            }
        }
        if (in->requires_grad) in->accumulate(dx);
        if (sl->requires_grad) sl->accumulate(da);
    });
}

Variable sigmoid(const Variable& input) {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    Tensor out(input.shape());
    const Eigen::VectorXd& x = input.value().data();
    for (Index j = 0; j < x.size(); ++j) {
        double s;
        if (x[j] >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-x[j]));
        } else {
            const double e = std::exp(x[j]);
            s = e / (1.0 + e);
        }
        out[j] = std::clamp(s, lo, hi);
    }
    Tensor y = out;
    return Variable::make_result(std::move(out), {input}, [y = std::move(y)](const detail::Node& self) {
        Eigen::VectorXd dx = self.grad.data().array() * y.data().array() * (1.0 - y.data().array());
        if (testing_hooks::corrupt_backward()) dx *= 1.5;
        self.inputs[0]->accumulate(dx);
    });
}

Variable gap_spatial(const Variable& input) {
    const auto d = image_dims(input.shape(), "gap_spatial");
    const bool batched = input.shape().size() == 4;
    const Index hw = d.hw();
    Tensor out(batched ? Shape{d.n, d.c} : Shape{d.c});
    const ConstMatrixMap x = input.value().matrix(d.n * d.c, hw);
    out.data() = x.rowwise().mean();
    return Variable::make_result(std::move(out), {input}, [=](const detail::Node& self) {
        const Eigen::VectorXd& g = self.grad.data();
        Eigen::VectorXd dx(d.n * d.c * hw);
        for (Index r = 0; r < d.n * d.c; ++r) dx.segment(r * hw, hw).setConstant(g[r] / static_cast<double>(hw));
        self.inputs[0]->accumulate(dx);
    });
}

Variable max_over_set(std::span<const Variable> inputs) {
    if (inputs.empty()) throw std::invalid_argument("max_over_set: empty set");
    const Shape& s = inputs.front().shape();
    for (const auto& v : inputs)
        if (v.shape() != s) throw ShapeError("max_over_set: all inputs must share one shape");
    Tensor out = inputs.front().value();
    std::vector<int> arg(static_cast<std::size_t>(out.size()), 0);
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        const Eigen::VectorXd& v = inputs[i].value().data();
        for (Index j = 0; j < out.size(); ++j) {
            if (v[j] > out[j]) {
                out[j] = v[j];
                arg[static_cast<std::size_t>(j)] = static_cast<int>(i);
            }
        }
    }
    if (branch_trace::active())
        for (int w : arg) branch_trace::mix(static_cast<std::uint64_t>(w));
    std::vector<Variable> ins(inputs.begin(), inputs.end());
    const std::size_t count = ins.size();
    return Variable::make_result(std::move(out), std::move(ins), [arg = std::move(arg), count](const detail::Node& self) {
        const Eigen::VectorXd& g = self.grad.data();
        for (std::size_t i = 0; i < count; ++i) {
            const auto& in = self.inputs[i];
            if (!in->requires_grad) continue;
            Eigen::VectorXd dx = Eigen::VectorXd::Zero(g.size());
            bool any = false;
            for (Index j = 0; j < g.size(); ++j) {
                if (arg[static_cast<std::size_t>(j)] == static_cast<int>(i)) {
                    dx[j] = g[j];
                    any = true;
                }
            }
            if (any) in->accumulate(dx);
        }
    });
}

Variable linear(const Variable& input, const Variable& weight, const Variable& bias) {
    const Shape& s = input.shape();
    const Shape& ws = weight.shape();
    if (ws.size() != 2) throw ShapeError("linear: weight must be m x n");
    const Index m = ws[0], n = ws[1];
    if (s.empty() || s.size() > 2 || s.back() != n)
        throw ShapeError("linear: input " + to_string(s) + " incompatible with weight " + to_string(ws));
    if (bias.shape() != Shape{m}) throw ShapeError("linear: bias must have m elements");
    const bool batched = s.size() == 2;
    const Index rows = batched ? s[0] : 1;
    Tensor out(batched ? Shape{rows, m} : Shape{m});
    out.matrix(rows, m).noalias() = input.value().matrix(rows, n) * weight.value().matrix(m, n).transpose();
    out.matrix(rows, m).rowwise() += bias.value().data().transpose();

    return Variable::make_result(std::move(out), {input, weight, bias}, [=](const detail::Node& self) {
        const auto& x = self.inputs[0];
        const auto& w = self.inputs[1];
        const auto& b = self.inputs[2];
        const ConstMatrixMap g = self.grad.matrix(rows, m);
        if (x->requires_grad) {
            RowMatrix dx = g * w->value.matrix(m, n);
            x->accumulate(Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()));
        }
        if (w->requires_grad) {
            RowMatrix dw = g.transpose() * x->value.matrix(rows, n);
            w->accumulate(Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size()));
        }
        if (b->requires_grad) b->accumulate(g.colwise().sum().transpose());
    });
}

namespace {

Variable cross_entropy_rows(const Variable& logits, Index rows, Index k, std::vector<int> labels) {
    const ConstMatrixMap z = logits.value().matrix(rows, k);
    RowMatrix prob(rows, k);
    double total = 0.0;
    for (Index r = 0; r < rows; ++r) {
        const double zmax = z.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (z.row(r).array() - zmax).exp().matrix();
        const double se = e.sum();
        prob.row(r) = e / se;
        total += zmax + std::log(se) - z(r, labels[static_cast<std::size_t>(r)]);
    }
    const double inv = 1.0 / static_cast<double>(rows);
    return Variable::make_result(
        Tensor::scalar(total * inv), {logits},
        [prob = std::move(prob), labels = std::move(labels), rows, k, inv](const detail::Node& self) {
            RowMatrix d = prob;
            for (Index r = 0; r < rows; ++r) d(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
            d *= inv * self.grad[0];
            (void)k;
            self.inputs[0]->accumulate(Eigen::Map<const Eigen::VectorXd>(d.data(), d.size()));
        });
}

}  // namespace

Variable softmax_cross_entropy(const Variable& logits, int label) {
    if (logits.shape().size() != 1) throw ShapeError("softmax_cross_entropy: expected a logit vector");
    const Index k = logits.shape()[0];
    if (label < 0 || label >= k)
        throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                std::to_string(k) + ")");
    return cross_entropy_rows(logits, 1, k, {label});
}

Variable softmax_cross_entropy(const Variable& logits, std::span<const int> labels) {
    if (logits.shape().size() != 2) throw ShapeError("softmax_cross_entropy: expected N x K logits");
    const Index rows = logits.shape()[0], k = logits.shape()[1];
    if (static_cast<Index>(labels.size()) != rows) throw ShapeError("softmax_cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= k)
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(k) + ")");
    return cross_entropy_rows(logits, rows, k, std::vector<int>(labels.begin(), labels.end()));
}

Variable crop(const Variable& input, Index row0, Index rows, Index col0, Index cols) {
    const auto d = image_dims(input.shape(), "crop");
    const bool batched = input.shape().size() == 4;
    if (row0 < 0 || col0 < 0 || rows < 1 || cols < 1 || row0 + rows > d.h || col0 + cols > d.w)
        throw ShapeError("crop: window outside input");
    Tensor out(image_shape(batched, d.n, d.c, rows, cols));
    const double* x = input.value().data().data();
    for (Index p = 0; p < d.n * d.c; ++p)
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c)
                out[(p * rows + r) * cols + c] = x[p * d.hw() + (row0 + r) * d.w + col0 + c];
    return Variable::make_result(std::move(out), {input}, [=](const detail::Node& self) {
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(d.n * d.c * d.hw());
        const Eigen::VectorXd& g = self.grad.data();
        for (Index p = 0; p < d.n * d.c; ++p)
            for (Index r = 0; r < rows; ++r)
                for (Index c = 0; c < cols; ++c)
                    dx[p * d.hw() + (row0 + r) * d.w + col0 + c] = g[(p * rows + r) * cols + c];
        self.inputs[0]->accumulate(dx);
    });
}

Variable concat(const Variable& a, const Variable& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.empty() || sa.size() > 2 || sa.size() != sb.size() || (sa.size() == 2 && sa[0] != sb[0]))
        throw ShapeError("concat: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
    const Index rows = sa.size() == 2 ? sa[0] : 1;
    const Index na = sa.back(), nb = sb.back();
    Tensor out(sa.size() == 2 ? Shape{rows, na + nb} : Shape{na + nb});
    auto o = out.matrix(rows, na + nb);
    o.leftCols(na) = a.value().matrix(rows, na);
    o.rightCols(nb) = b.value().matrix(rows, nb);
    return Variable::make_result(std::move(out), {a, b}, [=](const detail::Node& self) {
        const ConstMatrixMap g = self.grad.matrix(rows, na + nb);
        if (self.inputs[0]->requires_grad) {
            RowMatrix ga = g.leftCols(na);
            self.inputs[0]->accumulate(Eigen::Map<const Eigen::VectorXd>(ga.data(), ga.size()));
        }
        if (self.inputs[1]->requires_grad) {
            RowMatrix gb = g.rightCols(nb);
            self.inputs[1]->accumulate(Eigen::Map<const Eigen::VectorXd>(gb.data(), gb.size()));
        }
    });
}

Variable channel_conv1d(const Variable& input, const Variable& kernel) {
    const Shape& s = input.shape();
    if (s.empty() || s.size() > 2) throw ShapeError("channel_conv1d: expected C or N x C input");
    if (kernel.shape().size() != 1 || kernel.shape()[0] % 2 == 0)
        throw ShapeError("channel_conv1d: kernel must be a vector of odd length");
    const Index rows = s.size() == 2 ? s[0] : 1;
    const Index c = s.back();
    const Index k = kernel.shape()[0];
    const Index pad = (k - 1) / 2;
    Tensor out(s);
    const ConstMatrixMap x = input.value().matrix(rows, c);
    const Eigen::VectorXd& kv = kernel.value().data();
    for (Index r = 0; r < rows; ++r)
        for (Index i = 0; i < c; ++i) {
            double acc = 0.0;
            for (Index j = 0; j < k; ++j) {
                const Index src = i + j - pad;
                if (src >= 0 && src < c) acc += kv[j] * x(r, src);
            }
            out[r * c + i] = acc;
        }
    return Variable::make_result(std::move(out), {input, kernel}, [=](const detail::Node& self) {
        const auto& in = self.inputs[0];
        const auto& ke = self.inputs[1];
        const ConstMatrixMap xm = std::as_const(in->value).matrix(rows, c);
        const Eigen::VectorXd& kk = ke->value.data();
        const Eigen::VectorXd& g = self.grad.data();
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(rows * c);
        Eigen::VectorXd dk = Eigen::VectorXd::Zero(k);
        for (Index r = 0; r < rows; ++r)
            for (Index i = 0; i < c; ++i)
                for (Index j = 0; j < k; ++j) {
                    const Index src = i + j - pad;
                    if (src < 0 || src >= c) continue;
                    dx[r * c + src] += kk[j] * g[r * c + i];
                    dk[j] += xm(r, src) * g[r * c + i];
                }
        if (in->requires_grad) in->accumulate(dx);
        if (ke->requires_grad) ke->accumulate(dk);
    });
}

Variable scale_channels(const Variable& input, const Variable& scales) {
    const auto d = image_dims(input.shape(), "scale_channels");
    const bool batched = input.shape().size() == 4;
    const Shape expected = batched ? Shape{d.n, d.c} : Shape{d.c};
    if (scales.shape() != expected)
        throw ShapeError("scale_channels: scales must be " + to_string(expected) + ", got " +
                         to_string(scales.shape()));
    const Index hw = d.hw();
    Tensor out(input.shape());
    out.matrix(d.n * d.c, hw) =
        input.value().matrix(d.n * d.c, hw).array().colwise() * scales.value().data().array();
    return Variable::make_result(std::move(out), {input, scales}, [=](const detail::Node& self) {
        const auto& in = self.inputs[0];
        const auto& sc = self.inputs[1];
        const ConstMatrixMap g = self.grad.matrix(d.n * d.c, hw);
        if (in->requires_grad) {
            RowMatrix dx = g.array().colwise() * sc->value.data().array();
            in->accumulate(Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()));
        }
        if (sc->requires_grad) {
            Eigen::VectorXd ds = (g.array() * in->value.matrix(d.n * d.c, hw).array()).rowwise().sum();
            sc->accumulate(ds);
        }
    });
}

Variable add(const Variable& a, const Variable& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape(), Eigen::VectorXd(a.value().data() + b.value().data()));
    return Variable::make_result(std::move(out), {a, b}, [](const detail::Node& self) {
        for (const auto& in : self.inputs)
            if (in->requires_grad) in->accumulate(self.grad.data());
    });
}

Variable mul(const Variable& a, const Variable& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape(), Eigen::VectorXd(a.value().data().cwiseProduct(b.value().data())));
    return Variable::make_result(std::move(out), {a, b}, [](const detail::Node& self) {
        const auto& x = self.inputs[0];
        const auto& y = self.inputs[1];
        if (x->requires_grad) x->accumulate(self.grad.data().cwiseProduct(y->value.data()));
        if (y->requires_grad) y->accumulate(self.grad.data().cwiseProduct(x->value.data()));
    });
}

Variable scale(const Variable& a, double factor) {
    Tensor out(a.shape(), Eigen::VectorXd(a.value().data() * factor));
    return Variable::make_result(std::move(out), {a}, [factor](const detail::Node& self) {
        self.inputs[0]->accumulate(self.grad.data() * factor);
    });
}

Variable sum(const Variable& a) {
    return Variable::make_result(Tensor::scalar(a.value().data().sum()), {a}, [](const detail::Node& self) {
        self.inputs[0]->accumulate(Eigen::VectorXd::Constant(self.inputs[0]->value.size(), self.grad[0]));
    });
}

Variable weighted_sum(const Variable& a, const Tensor& weights) {
    if (weights.size() != a.value().size()) throw ShapeError("weighted_sum: weight count mismatch");
    Eigen::VectorXd w = weights.data();
    const double v = a.value().data().dot(w);
    return Variable::make_result(Tensor::scalar(v), {a}, [w = std::move(w)](const detail::Node& self) {
        self.inputs[0]->accumulate(w * self.grad[0]);
    });
}

}  // namespace scanfer
