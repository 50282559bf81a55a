#include "flowroute/autodiff.hpp"

#include <cmath>

#include "flowroute/errors.hpp"

namespace flowroute::ad {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Collapse a gradient onto the shape of a broadcast operand.
Mat reduce_to(const Mat& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) {
        Mat out(1, 1);
        out(0, 0) = g.sum();
        return out;
    }
    if (rows == 1 && cols == g.cols()) return g.colwise().sum();
    throw DimensionError("unsupported broadcast reduction");
}

bool broadcast_compatible(const Mat& a, const Mat& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return true;
    if (b.rows() == 1 && b.cols() == 1) return true;
    if (b.rows() == 1 && b.cols() == a.cols()) return true;
    return false;
}

// Shape-dispatched elementwise apply; F must be an inlineable functor taking
// (Array, Array-or-scalar) expressions.
template <class FSame, class FScalar, class FRow>
Mat broadcast_apply(const Mat& a, const Mat& b, FSame fsame, FScalar fscalar,
                    FRow frow) {
    if (b.rows() == a.rows() && b.cols() == a.cols()) return fsame(a, b);
    if (b.rows() == 1 && b.cols() == 1) return fscalar(a, b(0, 0));
    return frow(a, b);
}

Mat bc_add(const Mat& a, const Mat& b) {
    return broadcast_apply(
        a, b, [](const Mat& x, const Mat& y) -> Mat { return x + y; },
        [](const Mat& x, double s) -> Mat { return (x.array() + s).matrix(); },
        [](const Mat& x, const Mat& y) -> Mat {
            return x.rowwise() + y.row(0);
        });
}

Mat bc_sub(const Mat& a, const Mat& b) {
    return broadcast_apply(
        a, b, [](const Mat& x, const Mat& y) -> Mat { return x - y; },
        [](const Mat& x, double s) -> Mat { return (x.array() - s).matrix(); },
        [](const Mat& x, const Mat& y) -> Mat {
            return x.rowwise() - y.row(0);
        });
}

Mat bc_mul(const Mat& a, const Mat& b) {
    return broadcast_apply(
        a, b, [](const Mat& x, const Mat& y) -> Mat { return x.cwiseProduct(y); },
        [](const Mat& x, double s) -> Mat { return x * s; },
        [](const Mat& x, const Mat& y) -> Mat {
            return (x.array().rowwise() * y.row(0).array()).matrix();
        });
}

Mat bc_div(const Mat& a, const Mat& b) {
    return broadcast_apply(
        a, b, [](const Mat& x, const Mat& y) -> Mat { return x.cwiseQuotient(y); },
        [](const Mat& x, double s) -> Mat { return x / s; },
        [](const Mat& x, const Mat& y) -> Mat {
            return (x.array().rowwise() / y.row(0).array()).matrix();
        });
}

}  // namespace

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> pull) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->needs_grad = needs_grad;
    node->pull = std::move(pull);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::gref(int idx) {
    Node& n = *nodes_[idx];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::accum(int idx, const Mat& g) {
    if (!nodes_[idx]->needs_grad) return;
    gref(idx) += g;
}

Var Tape::constant(Mat v) { return push(std::move(v), false, nullptr); }

Var Tape::scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return push(std::move(m), false, nullptr);
}

Var Tape::param(ParamTensor& p) {
    Var v = push(p.value, true, nullptr);
    nodes_[v.idx]->sink = &p;
    return v;
}

Var Tape::matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows()) throw DimensionError("matmul shape mismatch");
    Mat out = val(a) * val(b);
    const int ia = a.idx, ib = b.idx;
    return push(std::move(out), ng(a) || ng(b), [ia, ib](Tape& t, const Mat& g) {
        if (t.nodes_[ia]->needs_grad) t.accum(ia, g * t.nodes_[ib]->value.transpose());
        if (t.nodes_[ib]->needs_grad) t.accum(ib, t.nodes_[ia]->value.transpose() * g);
    });
}

Var Tape::add(Var a, Var b) {
    if (!broadcast_compatible(val(a), val(b))) throw DimensionError("add shape mismatch");
    Mat out = bc_add(val(a), val(b));
    const int ia = a.idx, ib = b.idx;
    return push(std::move(out), ng(a) || ng(b), [ia, ib](Tape& t, const Mat& g) {
        t.accum(ia, g);
        if (t.nodes_[ib]->needs_grad)
            t.accum(ib, reduce_to(g, t.nodes_[ib]->value.rows(), t.nodes_[ib]->value.cols()));
    });
}

Var Tape::sub(Var a, Var b) {
    if (!broadcast_compatible(val(a), val(b))) throw DimensionError("sub shape mismatch");
    Mat out = bc_sub(val(a), val(b));
    const int ia = a.idx, ib = b.idx;
    return push(std::move(out), ng(a) || ng(b), [ia, ib](Tape& t, const Mat& g) {
        t.accum(ia, g);
        if (t.nodes_[ib]->needs_grad)
            t.accum(ib, -reduce_to(g, t.nodes_[ib]->value.rows(), t.nodes_[ib]->value.cols()));
    });
}

Var Tape::mul(Var a, Var b) {
    if (!broadcast_compatible(val(a), val(b))) throw DimensionError("mul shape mismatch");
    Mat out = bc_mul(val(a), val(b));
    const int ia = a.idx, ib = b.idx;
    return push(std::move(out), ng(a) || ng(b), [ia, ib](Tape& t, const Mat& g) {
        const Mat& av = t.nodes_[ia]->value;
        const Mat& bv = t.nodes_[ib]->value;
        if (t.nodes_[ia]->needs_grad) t.accum(ia, bc_mul(g, bv));
        if (t.nodes_[ib]->needs_grad)
            t.accum(ib, reduce_to(g.cwiseProduct(av), bv.rows(), bv.cols()));
    });
}

Var Tape::div(Var a, Var b) {
    if (!broadcast_compatible(val(a), val(b))) throw DimensionError("div shape mismatch");
    Mat out = bc_div(val(a), val(b));
    const int ia = a.idx, ib = b.idx;
    return push(std::move(out), ng(a) || ng(b), [ia, ib](Tape& t, const Mat& g) {
        const Mat& av = t.nodes_[ia]->value;
        const Mat& bv = t.nodes_[ib]->value;
        if (t.nodes_[ia]->needs_grad) t.accum(ia, bc_div(g, bv));
        if (t.nodes_[ib]->needs_grad) {
            const Mat num = -bc_div(bc_div(g.cwiseProduct(av), bv), bv);
            t.accum(ib, reduce_to(num, bv.rows(), bv.cols()));
        }
    });
}

Var Tape::scale_const(Var a, double s) {
    const int ia = a.idx;
    return push(val(a) * s, ng(a),
                [ia, s](Tape& t, const Mat& g) { t.accum(ia, g * s); });
}

Var Tape::add_const(Var a, double s) {
    const int ia = a.idx;
    return push(val(a).array() + s, ng(a),
                [ia](Tape& t, const Mat& g) { t.accum(ia, g); });
}

Var Tape::transpose(Var a) {
    const int ia = a.idx;
    return push(val(a).transpose(), ng(a),
                [ia](Tape& t, const Mat& g) { t.accum(ia, g.transpose()); });
}

Var Tape::rowsoftmax(Var a) {
    Mat p(val(a).rows(), val(a).cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = val(a).row(i).maxCoeff();
        p.row(i) = (val(a).row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    const int ia = a.idx;
    Mat pv = p;
    return push(std::move(p), ng(a), [ia, pv](Tape& t, const Mat& g) {
        Mat dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double dot = g.row(i).cwiseProduct(pv.row(i)).sum();
            dx.row(i) = pv.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
        t.accum(ia, dx);
    });
}

Var Tape::logsoftmax(Var a) {
    Mat out(val(a).rows(), val(a).cols());
    Mat p(val(a).rows(), val(a).cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double mx = val(a).row(i).maxCoeff();
        const Eigen::RowVectorXd shifted = (val(a).row(i).array() - mx).matrix();
        const double lse = std::log(shifted.array().exp().sum());
        out.row(i) = (shifted.array() - lse).matrix();
        p.row(i) = (shifted.array() - lse).exp().matrix();
    }
    const int ia = a.idx;
    Mat pv = p;
    return push(std::move(out), ng(a), [ia, pv](Tape& t, const Mat& g) {
        Mat dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            dx.row(i) = (g.row(i).array() - pv.row(i).array() * g.row(i).sum()).matrix();
        t.accum(ia, dx);
    });
}

Var Tape::sigmoid(Var a) {
    Mat s = val(a).unaryExpr([](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    const int ia = a.idx;
    Mat sv = s;
    return push(std::move(s), ng(a), [ia, sv](Tape& t, const Mat& g) {
        t.accum(ia, g.cwiseProduct(sv.cwiseProduct((1.0 - sv.array()).matrix())));
    });
}

Var Tape::exp(Var a) {
    Mat e = val(a).array().exp().matrix();
    const int ia = a.idx;
    Mat ev = e;
    return push(std::move(e), ng(a),
                [ia, ev](Tape& t, const Mat& g) { t.accum(ia, g.cwiseProduct(ev)); });
}

Var Tape::log(Var a) {
    const int ia = a.idx;
    Mat av = val(a);
    return push(val(a).array().log().matrix(), ng(a), [ia, av](Tape& t, const Mat& g) {
        t.accum(ia, g.cwiseQuotient(av));
    });
}

Var Tape::relu(Var a) {
    const int ia = a.idx;
    Mat mask = (val(a).array() > 0.0).cast<double>().matrix();
    Mat mv = mask;
    return push(val(a).cwiseProduct(mask), ng(a),
                [ia, mv](Tape& t, const Mat& g) { t.accum(ia, g.cwiseProduct(mv)); });
}

Var Tape::gelu(Var a) {
    const int ia = a.idx;
    Mat av = val(a);
    Mat out = av.unaryExpr(
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
    return push(std::move(out), ng(a), [ia, av](Tape& t, const Mat& g) {
        Mat d = av.unaryExpr([](double x) {
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        });
        t.accum(ia, g.cwiseProduct(d));
    });
}

Var Tape::silu(Var a) {
    const int ia = a.idx;
    Mat av = val(a);
    auto sig = [](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    };
    Mat out = av.unaryExpr([&](double x) { return x * sig(x); });
    return push(std::move(out), ng(a), [ia, av, sig](Tape& t, const Mat& g) {
        Mat d = av.unaryExpr([&](double x) {
            const double s = sig(x);
            return s * (1.0 + x * (1.0 - s));
        });
        t.accum(ia, g.cwiseProduct(d));
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const int ia = a.idx;
    Mat mask = ((val(a).array() >= lo) && (val(a).array() <= hi)).cast<double>().matrix();
    Mat out = val(a).array().max(lo).min(hi).matrix();
    Mat mv = mask;
    return push(std::move(out), ng(a),
                [ia, mv](Tape& t, const Mat& g) { t.accum(ia, g.cwiseProduct(mv)); });
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw ValidationError("dropout rate must be < 1");
    const double keep = 1.0 - rate;
    Mat mask(val(a).rows(), val(a).cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
            mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    const int ia = a.idx;
    Mat mv = mask;
    return push(val(a).cwiseProduct(mask), ng(a),
                [ia, mv](Tape& t, const Mat& g) { t.accum(ia, g.cwiseProduct(mv)); });
}

Var Tape::layernorm(Var a, Var gain, Var bias, double eps) {
    const Mat& x = val(a);
    const Eigen::Index d = x.cols();
    if (val(gain).rows() != 1 || val(gain).cols() != d || val(bias).cols() != d)
        throw DimensionError("layernorm gain/bias must be 1 x d");

    Mat xhat(x.rows(), d);
    Vec inv_s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        inv_s[i] = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = ((x.row(i).array() - mu) * inv_s[i]).matrix();
    }
    Mat out(x.rows(), d);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        out.row(i) = xhat.row(i).cwiseProduct(val(gain).row(0)) + val(bias).row(0);

    const int ia = a.idx, ig = gain.idx, ib = bias.idx;
    Mat xh = xhat;
    Vec is = inv_s;
    Mat gv = val(gain);
    return push(std::move(out), ng(a) || ng(gain) || ng(bias),
                [ia, ig, ib, xh, is, gv](Tape& t, const Mat& g) {
                    const Eigen::Index d2 = g.cols();
                    if (t.nodes_[ia]->needs_grad) {
                        Mat dx(g.rows(), d2);
                        for (Eigen::Index i = 0; i < g.rows(); ++i) {
                            const Eigen::RowVectorXd gh = g.row(i).cwiseProduct(gv.row(0));
                            const double m1 = gh.mean();
                            const double m2 = gh.cwiseProduct(xh.row(i)).mean();
                            dx.row(i) =
                                ((gh.array() - m1 - xh.row(i).array() * m2) * is[i]).matrix();
                        }
                        t.accum(ia, dx);
                    }
                    if (t.nodes_[ig]->needs_grad)
                        t.accum(ig, g.cwiseProduct(xh).colwise().sum());
                    if (t.nodes_[ib]->needs_grad) t.accum(ib, g.colwise().sum());
                });
}

Var Tape::mean_rows(Var a) {
    const Eigen::Index n = val(a).rows();
    Mat out = val(a).colwise().mean();
    const int ia = a.idx;
    return push(std::move(out), ng(a), [ia, n](Tape& t, const Mat& g) {
        t.accum(ia, (1.0 / static_cast<double>(n)) * g.replicate(n, 1));
    });
}

Var Tape::rowsum(Var a) {
    Mat out = val(a).rowwise().sum();
    const int ia = a.idx;
    const Eigen::Index c = val(a).cols();
    return push(std::move(out), ng(a), [ia, c](Tape& t, const Mat& g) {
        t.accum(ia, g.replicate(1, c));
    });
}

Var Tape::div_rows(Var a, Var colvec) {
    if (val(colvec).cols() != 1 || val(colvec).rows() != val(a).rows())
        throw DimensionError("div_rows divisor must be N x 1");
    Mat out = (val(a).array().colwise() / val(colvec).col(0).array()).matrix();
    const int ia = a.idx, ic = colvec.idx;
    return push(std::move(out), ng(a) || ng(colvec), [ia, ic](Tape& t, const Mat& g) {
        const Mat& av = t.nodes_[ia]->value;
        const Mat& cv = t.nodes_[ic]->value;
        if (t.nodes_[ia]->needs_grad)
            t.accum(ia, (g.array().colwise() / cv.col(0).array()).matrix());
        if (t.nodes_[ic]->needs_grad) {
            Mat dc = (-(g.cwiseProduct(av).array().colwise() /
                        (cv.col(0).array() * cv.col(0).array())))
                         .rowwise()
                         .sum()
                         .matrix();
            t.accum(ic, dc);
        }
    });
}

Var Tape::sum_all(Var a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    const int ia = a.idx;
    const Eigen::Index r = val(a).rows(), c = val(a).cols();
    return push(std::move(out), ng(a), [ia, r, c](Tape& t, const Mat& g) {
        t.accum(ia, Mat::Constant(r, c, g(0, 0)));
    });
}

Var Tape::mean_all(Var a) {
    const double n = static_cast<double>(val(a).size());
    Var s = sum_all(a);
    return scale_const(s, 1.0 / n);
}

Var Tape::reduce_min(Var a) {
    const Mat& v = val(a);
    Eigen::Index ri = 0, cj = 0;
    double best = v(0, 0);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            if (v(i, j) < best) {
                best = v(i, j);
                ri = i;
                cj = j;
            }
    Mat out(1, 1);
    out(0, 0) = best;
    const int ia = a.idx;
    const Eigen::Index r = v.rows(), c = v.cols();
    return push(std::move(out), ng(a), [ia, ri, cj, r, c](Tape& t, const Mat& g) {
        Mat d = Mat::Zero(r, c);
        d(ri, cj) = g(0, 0);
        t.accum(ia, d);
    });
}

Var Tape::reduce_max(Var a) {
    const Mat& v = val(a);
    Eigen::Index ri = 0, cj = 0;
    double best = v(0, 0);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            if (v(i, j) > best) {
                best = v(i, j);
                ri = i;
                cj = j;
            }
    Mat out(1, 1);
    out(0, 0) = best;
    const int ia = a.idx;
    const Eigen::Index r = v.rows(), c = v.cols();
    return push(std::move(out), ng(a), [ia, ri, cj, r, c](Tape& t, const Mat& g) {
        Mat d = Mat::Zero(r, c);
        d(ri, cj) = g(0, 0);
        t.accum(ia, d);
    });
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
    const Mat& v = val(a);
    Mat out(rows.size(), v.cols());
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= v.rows()) throw DimensionError("gather row out of range");
        out.row(r) = v.row(rows[r]);
    }
    const int ia = a.idx;
    const Eigen::Index nr = v.rows(), nc = v.cols();
    return push(std::move(out), ng(a),
                [ia, rows = std::move(rows), nr, nc](Tape& t, const Mat& g) {
                    Mat d = Mat::Zero(nr, nc);
                    for (size_t r = 0; r < rows.size(); ++r)
                        d.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
                    t.accum(ia, d);
                });
}

Var Tape::concat_cols(Var a, Var b) {
    if (val(a).rows() != val(b).rows()) throw DimensionError("concat row mismatch");
    Mat out(val(a).rows(), val(a).cols() + val(b).cols());
    out << val(a), val(b);
    const int ia = a.idx, ib = b.idx;
    const Eigen::Index ca = val(a).cols(), cb = val(b).cols();
    return push(std::move(out), ng(a) || ng(b), [ia, ib, ca, cb](Tape& t, const Mat& g) {
        t.accum(ia, g.leftCols(ca));
        t.accum(ib, g.rightCols(cb));
    });
}

Var Tape::pick(Var a, int r, int c) {
    Mat out(1, 1);
    out(0, 0) = val(a)(r, c);
    const int ia = a.idx;
    const Eigen::Index nr = val(a).rows(), nc = val(a).cols();
    return push(std::move(out), ng(a), [ia, r, c, nr, nc](Tape& t, const Mat& g) {
        Mat d = Mat::Zero(nr, nc);
        d(r, c) = g(0, 0);
        t.accum(ia, d);
    });
}

Var Tape::reshape_rowmajor(Var a, int rows, int cols) {
    const Mat& v = val(a);
    if (v.size() != static_cast<Eigen::Index>(rows) * cols)
        throw DimensionError("reshape size mismatch");
    Mat out(rows, cols);
    const Eigen::Index sc = v.cols();
    for (Eigen::Index k = 0; k < v.size(); ++k)
        out(k / cols, k % cols) = v(k / sc, k % sc);
    const int ia = a.idx;
    const Eigen::Index sr = v.rows();
    return push(std::move(out), ng(a), [ia, sr, sc, cols](Tape& t, const Mat& g) {
        Mat d(sr, sc);
        for (Eigen::Index k = 0; k < d.size(); ++k)
            d(k / sc, k % sc) = g(k / cols, k % cols);
        t.accum(ia, d);
    });
}

Var Tape::scatter_symmetric(Var edge_vals, Var nonedge, const EdgeList& edges) {
    if (val(edge_vals).cols() != 1 || val(edge_vals).rows() != edges.n_edges())
        throw DimensionError("edge values must be M x 1");
    if (val(nonedge).size() != 1) throw DimensionError("non-edge value must be 1 x 1");
    const int n = edges.n_nodes;
    Mat out = Mat::Constant(n, n, val(nonedge)(0, 0));
    out.diagonal().setConstant(1.0);
    for (int m = 0; m < edges.n_edges(); ++m) {
        const auto [i, j] = edges.edges[m];
        out(i, j) = val(edge_vals)(m, 0);
        out(j, i) = val(edge_vals)(m, 0);
    }
    const int ie = edge_vals.idx, in = nonedge.idx;
    const EdgeList el = edges;
    return push(std::move(out), ng(edge_vals) || ng(nonedge),
                [ie, in, el](Tape& t, const Mat& g) {
                    Mat de = Mat::Zero(el.n_edges(), 1);
                    double edge_total = 0.0;
                    for (int m = 0; m < el.n_edges(); ++m) {
                        const auto [i, j] = el.edges[m];
                        de(m, 0) = g(i, j) + g(j, i);
                        edge_total += de(m, 0);
                    }
                    t.accum(ie, de);
                    if (t.nodes_[in]->needs_grad) {
                        Mat dn(1, 1);
                        dn(0, 0) = g.sum() - g.diagonal().sum() - edge_total;
                        t.accum(in, dn);
                    }
                });
}

Var Tape::flow(Var capacities, const EdgeList& edges, const DemandLaplacian& demand,
               double delta) {
    if (val(capacities).cols() != 1 || val(capacities).rows() != edges.n_edges())
        throw DimensionError("flow capacities must be M x 1");
    const Vec caps = val(capacities).col(0);

    auto lap = std::make_shared<RegularizedLaplacian>(edges, caps, delta);
    auto state = std::make_shared<FlowForwardState>();
    const FlowMap fm = aggregate_flow_closed_form(*lap, edges, caps, demand, state.get());

    const int ic = capacities.idx;
    return push(fm.phi, ng(capacities), [ic, lap, state](Tape& t, const Mat& g) {
        const FlowGradients grads = flow_gradient_adjoint(*lap, *state, g.col(0));
        t.accum(ic, grads.d_capacities);
    });
}

void Tape::backward(Var loss) {
    if (val(loss).rows() != 1 || val(loss).cols() != 1)
        throw DimensionError("backward target must be a 1x1 scalar");
    gref(loss.idx)(0, 0) += 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = *nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.pull) n.pull(*this, n.grad);
        if (n.sink) {
            if (n.sink->grad.size() == 0) n.sink->zero_grad();
            n.sink->grad += n.grad;
        }
    }
}

}  // namespace flowroute::ad
