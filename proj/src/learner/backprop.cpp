#include "bp/learner/backprop.hpp"

#include <cmath>

#include "bp/errors.hpp"

namespace bp::learner {

NetGrad NetGrad::zeros_like(const policy::DenseNet& net) {
    NetGrad g;
    for (const policy::DenseLayer& layer : net.layers) {
        g.dW.push_back(MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
        g.db.push_back(VectorXd::Zero(layer.b.size()));
    }
    return g;
}

double NetGrad::squared_norm() const {
    double s = 0.0;
    for (const auto& w : dW) s += w.squaredNorm();
    for (const auto& b : db) s += b.squaredNorm();
    return s;
}

NetGrad& NetGrad::operator*=(double s) {
    for (auto& w : dW) w *= s;
    for (auto& b : db) b *= s;
    return *this;
}

ForwardCache forward_cached(const policy::DenseNet& net, const MatrixXd& inputs) {
    if (inputs.rows() != net.input_dim()) {
        throw ShapeMismatch("forward_cached: input width mismatch");
    }
    ForwardCache c;
    c.inputs.reserve(net.layers.size());
    c.pre.reserve(net.layers.size());
    MatrixXd x = inputs;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const policy::DenseLayer& layer = net.layers[k];
        MatrixXd z = layer.W * x;
        z.colwise() += layer.b;
        c.inputs.push_back(std::move(x));
        x = k + 1 < net.layers.size() ? MatrixXd(z.cwiseMax(0.0)) : z;
        c.pre.push_back(std::move(z));
    }
    if (net.head == policy::Head::Tanh) {
        x = x.array().tanh().matrix();
        if (net.action_scale.size() == x.rows()) {
            x = net.action_scale.asDiagonal() * x;
        }
    }
    c.output = std::move(x);
    return c;
}

BackpropResult backprop_batch(const policy::DenseNet& net, const ForwardCache& cache,
                              const MatrixXd& upstream) {
    if (upstream.rows() != net.output_dim() || upstream.cols() != cache.output.cols()) {
        throw ShapeMismatch("backprop: upstream gradient shape mismatch");
    }
    const std::size_t K = net.layers.size();

    MatrixXd delta = upstream;
    if (net.head == policy::Head::Tanh) {
        const MatrixXd t = cache.pre.back().array().tanh().matrix();
        delta = delta.cwiseProduct((1.0 - t.array().square()).matrix());
        if (net.action_scale.size() == delta.rows()) {
            delta = net.action_scale.asDiagonal() * delta;
        }
    }

    BackpropResult res;
    res.grad.dW.resize(K);
    res.grad.db.resize(K);
    for (std::size_t k = K; k-- > 0;) {
        if (k + 1 < K) {
            // ReLU: zero gradient where the unit was inactive (pre-activation <= 0).
            delta = delta.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
        }
        res.grad.dW[k] = delta * cache.inputs[k].transpose();
        res.grad.db[k] = delta.rowwise().sum();
        delta = net.layers[k].W.transpose() * delta;
    }
    res.input_grad = std::move(delta);
    return res;
}

BackpropResult backprop(const policy::DenseNet& net, const VectorXd& input, const VectorXd& upstream) {
    const ForwardCache cache = forward_cached(net, input);
    return backprop_batch(net, cache, upstream);
}

Adam::Adam(const policy::DenseNet& net, Options opts)
    : opts_(opts), m_(NetGrad::zeros_like(net)), v_(NetGrad::zeros_like(net)) {}

void Adam::step(policy::DenseNet& net, NetGrad grad) {
    if (!std::isfinite(grad.squared_norm())) {
        throw NumericalFailure("Adam: non-finite gradient");
    }
    if (opts_.max_grad_norm > 0.0) {
        const double n = std::sqrt(grad.squared_norm());
        if (n > opts_.max_grad_norm) {
            grad *= opts_.max_grad_norm / n;
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const double step = opts_.lr * std::sqrt(c2) / c1;
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = opts_.beta1 * m + (1.0 - opts_.beta1) * g;
        v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
        param.array() -= step * m.array() / (v.array().sqrt() + opts_.eps);
    };
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        update(net.layers[k].W, m_.dW[k], v_.dW[k], grad.dW[k]);
        update(net.layers[k].b, m_.db[k], v_.db[k], grad.db[k]);
    }
}

namespace {

nlohmann::json grad_to_json(const NetGrad& g) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t k = 0; k < g.dW.size(); ++k) {
        const MatrixXd& w = g.dW[k];
        j.push_back({{"rows", w.rows()},
                     {"cols", w.cols()},
                     {"w", std::vector<double>(w.data(), w.data() + w.size())},
                     {"b", std::vector<double>(g.db[k].data(), g.db[k].data() + g.db[k].size())}});
    }
    return j;
}

NetGrad grad_from_json(const nlohmann::json& j) {
    NetGrad g;
    for (const auto& jl : j) {
        const auto rows = jl.at("rows").get<Eigen::Index>();
        const auto cols = jl.at("cols").get<Eigen::Index>();
        const auto w = jl.at("w").get<std::vector<double>>();
        const auto b = jl.at("b").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
            static_cast<Eigen::Index>(b.size()) != rows) {
            throw CheckpointError("optimizer state: size mismatch");
        }
        g.dW.push_back(Eigen::Map<const MatrixXd>(w.data(), rows, cols));
        g.db.push_back(Eigen::Map<const VectorXd>(b.data(), rows));
    }
    return g;
}

}  // namespace

nlohmann::json Adam::to_json() const {
    return {{"lr", opts_.lr},         {"beta1", opts_.beta1}, {"beta2", opts_.beta2},
            {"eps", opts_.eps},       {"max_grad_norm", opts_.max_grad_norm},
            {"t", t_},                {"m", grad_to_json(m_)}, {"v", grad_to_json(v_)}};
}

Adam Adam::from_json(const nlohmann::json& j) {
    Adam a;
    a.opts_.lr = j.at("lr").get<double>();
    a.opts_.beta1 = j.at("beta1").get<double>();
    a.opts_.beta2 = j.at("beta2").get<double>();
    a.opts_.eps = j.at("eps").get<double>();
    a.opts_.max_grad_norm = j.at("max_grad_norm").get<double>();
    a.t_ = j.at("t").get<long>();
    a.m_ = grad_from_json(j.at("m"));
    a.v_ = grad_from_json(j.at("v"));
    return a;
}

}  // namespace bp::learner
