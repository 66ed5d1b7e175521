#include "bp/policy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bp/errors.hpp"

namespace bp::policy {

namespace {

MatrixXd apply_head(const DenseNet& net, MatrixXd z) {
    if (net.head == Head::Tanh) {
        z = z.array().tanh().matrix();
        if (net.action_scale.size() == z.rows()) {
            z = net.action_scale.asDiagonal() * z;
        }
    }
    return z;
}

MatrixXd pre_head_batch(const DenseNet& net, const MatrixXd& inputs) {
    if (inputs.rows() != net.input_dim()) {
        throw ShapeMismatch("forward: input has " + std::to_string(inputs.rows()) +
                            " rows, network expects " + std::to_string(net.input_dim()));
    }
    MatrixXd x = inputs;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const DenseLayer& layer = net.layers[k];
        MatrixXd z = layer.W * x;
        z.colwise() += layer.b;
        if (k + 1 < net.layers.size()) {
            z = z.cwiseMax(0.0);
        }
        x = std::move(z);
    }
    return x;
}

}  // namespace

void validate(const DenseNet& net) {
    if (net.layers.empty()) {
        throw ShapeMismatch("network has no layers");
    }
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const DenseLayer& layer = net.layers[k];
        if (layer.b.size() != layer.W.rows()) {
            throw ShapeMismatch("layer " + std::to_string(k) + ": bias length mismatch");
        }
        if (k > 0 && layer.W.cols() != net.layers[k - 1].W.rows()) {
            throw ShapeMismatch("layer " + std::to_string(k) + ": input width mismatch");
        }
        if (!layer.W.allFinite() || !layer.b.allFinite()) {
            throw ShapeMismatch("layer " + std::to_string(k) + ": non-finite weights");
        }
    }
    if (net.head == Head::Tanh && net.action_scale.size() != 0 &&
        net.action_scale.size() != net.output_dim()) {
        throw ShapeMismatch("action_scale length differs from output width");
    }
}

DenseNet make_dense_net(const std::vector<int>& widths, Head head, const VectorXd& action_scale,
                        std::mt19937_64& rng, double final_scale) {
    if (widths.size() < 2) {
        throw ShapeMismatch("make_dense_net: need at least input and output widths");
    }
    DenseNet net;
    net.head = head;
    net.action_scale = head == Head::Tanh ? action_scale : VectorXd();
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const int in = widths[k];
        const int out = widths[k + 1];
        const bool last = k + 2 == widths.size();
        const double limit = last ? final_scale : std::sqrt(6.0 / in);
        std::uniform_real_distribution<double> u(-limit, limit);
        DenseLayer layer{MatrixXd(out, in), VectorXd(out)};
        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) {
                layer.W(r, c) = u(rng);
            }
        }
        std::uniform_real_distribution<double> ub(-1.0 / std::sqrt(in), 1.0 / std::sqrt(in));
        for (int r = 0; r < out; ++r) {
            layer.b(r) = last ? u(rng) : ub(rng);
        }
        net.layers.push_back(std::move(layer));
    }
    validate(net);
    return net;
}

VectorXd forward(const DenseNet& net, const VectorXd& input) {
    return apply_head(net, pre_head_batch(net, input));
}

MatrixXd forward_batch(const DenseNet& net, const MatrixXd& inputs) {
    return apply_head(net, pre_head_batch(net, inputs));
}

VectorXd forward_pre_head(const DenseNet& net, const VectorXd& input) {
    return pre_head_batch(net, input);
}

SpectralNormResult spectral_norm(const MatrixXd& W, const PowerIterationOptions& opts,
                                 const VectorXd* warm_start) {
    SpectralNormResult res;
    if (W.size() == 0 || W.cwiseAbs().maxCoeff() == 0.0) {
        res.converged = true;
        res.right_vector = VectorXd::Zero(W.cols());
        return res;
    }

    VectorXd v;
    if (warm_start != nullptr && warm_start->size() == W.cols() && warm_start->norm() > 0.0) {
        v = warm_start->normalized();
    } else {
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> n01(0.0, 1.0);
        v.resize(W.cols());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            v(i) = n01(rng);
        }
        v.normalize();
    }

    double prev = -1.0;
    double sigma = 0.0;
    for (int it = 1; it <= opts.max_iters; ++it) {
        VectorXd u = W * v;
        if (u.norm() == 0.0) {
            // Start vector landed in the null space; restart from the heaviest column.
            Eigen::Index col = 0;
            W.colwise().norm().maxCoeff(&col);
            v = VectorXd::Unit(W.cols(), col);
            u = W * v;
        }
        VectorXd w = W.transpose() * u;
        v = w / w.norm();
        sigma = (W * v).norm();
        res.iterations = it;
        if (std::abs(sigma - prev) <= opts.tol * sigma) {
            res.converged = true;
            break;
        }
        prev = sigma;
    }
    res.value = sigma;
    res.right_vector = std::move(v);
    return res;
}

double lipschitz_upper_bound(const DenseNet& net, const PowerIterationOptions& opts) {
    double product = 1.0;
    for (const DenseLayer& layer : net.layers) {
        product *= spectral_norm(layer.W, opts).value;
    }
    return product;
}

double LipschitzBudget::per_layer(std::size_t layer_count) const {
    return std::pow(L, 1.0 / static_cast<double>(layer_count));
}

DenseNet normalize_actor(const DenseNet& net, const LipschitzBudget& budget, SpectralCache* cache,
                         const PowerIterationOptions& opts) {
    if (!(budget.L > 0.0)) {
        throw ShapeMismatch("normalize_actor: Lipschitz budget must be positive");
    }
    const double target = budget.per_layer(net.layers.size());
    if (cache != nullptr) {
        cache->right_vectors.resize(net.layers.size());
    }
    DenseNet out = net;
    for (std::size_t k = 0; k < out.layers.size(); ++k) {
        DenseLayer& layer = out.layers[k];
        const VectorXd* warm = cache != nullptr ? &cache->right_vectors[k] : nullptr;
        const SpectralNormResult sn = spectral_norm(layer.W, opts, warm);
        if (!(sn.value > 0.0)) {
            throw ZeroLayer("normalize_actor: layer " + std::to_string(k) + " is zero");
        }
        layer.W *= target / sn.value;
        if (cache != nullptr) {
            cache->right_vectors[k] = sn.right_vector;
        }
    }
    out.lipschitz = budget.L;
    return out;
}

nlohmann::json to_json(const DenseNet& net) {
    validate(net);
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& layer : net.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.W.size()));
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
                w.push_back(layer.W(r, c));
            }
        }
        layers.push_back({{"rows", layer.W.rows()},
                          {"cols", layer.W.cols()},
                          {"w", w},
                          {"b", std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size())}});
    }
    nlohmann::json j;
    j["layers"] = std::move(layers);
    j["activation"] = "relu";
    j["head"] = net.head == Head::Tanh ? "tanh" : "linear";
    j["action_scale"] =
        std::vector<double>(net.action_scale.data(), net.action_scale.data() + net.action_scale.size());
    j["lipschitz"] = net.lipschitz ? nlohmann::json(*net.lipschitz) : nlohmann::json(nullptr);
    return j;
}

DenseNet from_json(const nlohmann::json& j) {
    try {
        if (j.at("activation").get<std::string>() != "relu") {
            throw ShapeMismatch("weights: unsupported activation");
        }
        DenseNet net;
        const std::string head = j.at("head").get<std::string>();
        if (head == "tanh") {
            net.head = Head::Tanh;
        } else if (head == "linear") {
            net.head = Head::Linear;
        } else {
            throw ShapeMismatch("weights: unknown head '" + head + "'");
        }
        const auto scale = j.at("action_scale").get<std::vector<double>>();
        net.action_scale = Eigen::Map<const VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
        if (!j.at("lipschitz").is_null()) {
            net.lipschitz = j.at("lipschitz").get<double>();
        }
        for (const auto& jl : j.at("layers")) {
            const auto rows = jl.at("rows").get<Eigen::Index>();
            const auto cols = jl.at("cols").get<Eigen::Index>();
            const auto w = jl.at("w").get<std::vector<double>>();
            const auto b = jl.at("b").get<std::vector<double>>();
            if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(w.size()) != rows * cols ||
                static_cast<Eigen::Index>(b.size()) != rows) {
                throw ShapeMismatch("weights: layer size fields disagree with data");
            }
            DenseLayer layer{MatrixXd(rows, cols), VectorXd(rows)};
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    layer.W(r, c) = w[static_cast<std::size_t>(r * cols + c)];
                }
                layer.b(r) = b[static_cast<std::size_t>(r)];
            }
            net.layers.push_back(std::move(layer));
        }
        validate(net);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ShapeMismatch(std::string("weights: malformed file: ") + e.what());
    }
}

std::string serialize(const DenseNet& net) { return to_json(net).dump() + "\n"; }

DenseNet deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ShapeMismatch(std::string("weights: not valid JSON: ") + e.what());
    }
    return from_json(j);
}

void save(const DenseNet& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os << serialize(net);
}

DenseNet load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize(ss.str());
}

}  // namespace bp::policy
