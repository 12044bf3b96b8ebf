#ifndef BITSTAIN_CORE_TENSOR_HPP
#define BITSTAIN_CORE_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "bitstain/core/errors.hpp"

namespace bitstain::core {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Values are double precision.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on demand during backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::string param_name;  // nonempty only for named parameters
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into inputs

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Cheap handle over a graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }
    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& raw_values() const { return node_->value; }  // leaf mutation only
    std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    double item() const;
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& param_name() const { return node_->param_name; }
    bool all_finite() const;

    // Stop-gradient: copies the value into a fresh constant leaf.
    Tensor detach() const;

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// ----- elementwise -----
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or either side scalar
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor abs_val(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_val(const Tensor& a);
Tensor max_scalar(const Tensor& a, double c);  // gradient flows where a > c
Tensor tanh_val(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor gelu(const Tensor& a);

// ----- reductions -----
Tensor sum_all(const Tensor& a);   // -> [1]
Tensor mean_all(const Tensor& a);  // -> [1]

// ----- linear algebra -----
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N] -> [M,N]
// x [..., D] x w [D, F] + b [F]; leading dims preserved.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ----- image ops; activations laid out [N, C, H, W] -----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample_nearest2(const Tensor& x);
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor select_channels(const Tensor& x, const std::vector<int>& idx);

// ----- token ops; sequences laid out [N, T, D] -----
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
// Scaled dot-product attention over already-projected q/k/v.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);
Tensor grid_to_tokens(const Tensor& x);                 // [N,C,H,W] -> [N,H*W,C]
Tensor tokens_to_grid(const Tensor& x, int h, int w);   // [N,T,D] -> [N,D,h,w]
Tensor prepend_token(const Tensor& tok, const Tensor& tokens);  // [N,D] + [N,T,D] -> [N,T+1,D]
Tensor drop_first_token(const Tensor& tokens);
Tensor add_position(const Tensor& tokens, const Tensor& pos);   // [N,T,D] + [T,D]
Tensor mean_tokens(const Tensor& tokens);                       // [N,T,D] -> [N,D]
// Replace rows (token index set) of every batch item with a shared [D] vector.
Tensor replace_tokens(const Tensor& tokens, const Tensor& fill, const std::vector<int>& idx);

// ----- rowwise ops over the last dim of [N, D] -----
Tensor row_mean(const Tensor& x);                        // [N,D] -> [N,1]
Tensor row_sub(const Tensor& x, const Tensor& m);        // [N,D] - [N,1]
Tensor row_add(const Tensor& x, const Tensor& m);
Tensor row_mul(const Tensor& x, const Tensor& m);
Tensor row_div(const Tensor& x, const Tensor& m);

// ----- autodiff driver -----
void backward(const Tensor& loss);
void zero_grad(const std::vector<Tensor>& params);
// Graph probe: the set of parameter names reachable from `loss` through
// gradient-carrying edges (stop-gradient boundaries excluded).
std::unordered_set<std::string> reachable_params(const Tensor& loss);

}  // namespace bitstain::core

#endif
