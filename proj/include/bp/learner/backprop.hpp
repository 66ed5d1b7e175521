#ifndef BP_LEARNER_BACKPROP_HPP_
#define BP_LEARNER_BACKPROP_HPP_

#include <vector>

#include <Eigen/Dense>

#include "bp/policy.hpp"

namespace bp::learner {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Activations saved by a batched forward pass. Columns are samples.
struct ForwardCache {
    std::vector<MatrixXd> inputs;  ///< input to layer k
    std::vector<MatrixXd> pre;     ///< W_k x + b_k
    MatrixXd output;               ///< after the head
};

/// Parameter gradients, laid out like DenseNet::layers.
struct NetGrad {
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> db;

    static NetGrad zeros_like(const policy::DenseNet& net);
    double squared_norm() const;
    NetGrad& operator*=(double s);
};

ForwardCache forward_cached(const policy::DenseNet& net, const MatrixXd& inputs);

struct BackpropResult {
    NetGrad grad;         ///< summed over the batch
    MatrixXd input_grad;  ///< one column per sample
};

/// Reverse pass of sum_b upstream_b . f(x_b) through head, affine and ReLU layers.
BackpropResult backprop_batch(const policy::DenseNet& net, const ForwardCache& cache,
                              const MatrixXd& upstream);

/// Single-sample convenience wrapper.
BackpropResult backprop(const policy::DenseNet& net, const VectorXd& input, const VectorXd& upstream);

/// Adam optimizer state for one network.
class Adam {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double max_grad_norm = 0.0;  ///< 0 disables clipping
    };

    Adam() = default;
    Adam(const policy::DenseNet& net, Options opts);

    /// Descends along @p grad.
    void step(policy::DenseNet& net, NetGrad grad);

    const Options& options() const { return opts_; }
    long steps() const { return t_; }

    nlohmann::json to_json() const;
    static Adam from_json(const nlohmann::json& j);

private:
    Options opts_;
    long t_ = 0;
    NetGrad m_;
    NetGrad v_;
};

}  // namespace bp::learner

#endif  // BP_LEARNER_BACKPROP_HPP_
