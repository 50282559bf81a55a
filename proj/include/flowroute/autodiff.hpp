#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowroute/flow.hpp"
#include "flowroute/graph.hpp"
#include "flowroute/rng.hpp"

namespace flowroute::ad {

using flowroute::Mat;
using flowroute::Vec;

// One named parameter tensor with its gradient accumulator.
struct ParamTensor {
    std::string name;
    Mat value;
    Mat grad;

    void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
};

struct Var {
    int idx = -1;
};

// Dynamic reverse-mode tape over dense matrices. A fresh tape is recorded per
// forward pass, so data-dependent control flow is fine. Supported primitives:
// matmul, add/sub/mul/div (with 1x1 and row-vector broadcast), transpose,
// rowwise softmax/log-softmax, sigmoid, exp, log, relu, gelu, silu, layer
// normalization, mean/sum/min/max reductions, gather/concat/pick slicing,
// dropout, clamp, row-major reshape, symmetric mask scatter, and the custom
// flow node whose derivative is the adjoint solve.
class Tape {
public:
    Var constant(Mat v);
    Var scalar(double v);
    Var param(ParamTensor& p);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);   // same shape, or b 1xC row-broadcast, or b 1x1
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);   // elementwise; b may be 1x1
    Var div(Var a, Var b);   // elementwise; b may be 1x1
    Var scale_const(Var a, double s);
    Var add_const(Var a, double s);
    Var transpose(Var a);

    Var rowsoftmax(Var a);
    Var logsoftmax(Var a);
    Var sigmoid(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var relu(Var a);
    Var gelu(Var a);
    Var silu(Var a);
    Var clamp(Var a, double lo, double hi);
    Var dropout(Var a, double rate, Rng& rng);

    // Rowwise layer normalization over the feature dimension; gain/bias 1xd.
    Var layernorm(Var a, Var gain, Var bias, double eps = 1e-5);

    Var mean_rows(Var a);  // NxD -> 1xD
    Var rowsum(Var a);     // NxD -> Nx1
    Var div_rows(Var a, Var colvec);  // divide each row i by colvec(i)
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var reduce_min(Var a);  // subgradient to the first minimizer (row-major scan)
    Var reduce_max(Var a);

    Var gather_rows(Var a, std::vector<int> rows);
    Var concat_cols(Var a, Var b);
    Var pick(Var a, int r, int c);  // 1x1 element extraction
    Var reshape_rowmajor(Var a, int rows, int cols);

    // Symmetric N x N scatter: edges get edge_vals, every other off-diagonal
    // entry gets the (differentiable) non-edge scalar, diagonal is 1.
    Var scatter_symmetric(Var edge_vals, Var nonedge, const EdgeList& edges);

    // Aggregated-flow node: capacities (Mx1) -> phi (Mx1). The backward rule
    // is flow_gradient_adjoint against the factor cached at forward time.
    Var flow(Var capacities, const EdgeList& edges, const DemandLaplacian& demand,
             double delta);

    const Mat& value(Var v) const { return nodes_[v.idx]->value; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Seeds d(loss)/d(loss) = 1 and accumulates into every ParamTensor::grad
    // reachable from the loss. loss must be 1x1.
    void backward(Var loss);

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        ParamTensor* sink = nullptr;
        std::function<void(Tape&, const Mat&)> pull;  // routes grad to inputs
    };

    Var push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> pull);
    Mat& gref(int idx);
    bool ng(Var v) const { return nodes_[v.idx]->needs_grad; }
    const Mat& val(Var v) const { return nodes_[v.idx]->value; }
    void accum(int idx, const Mat& g);

    std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace flowroute::ad
