#ifndef BP_POLICY_HPP_
#define BP_POLICY_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace bp::policy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DenseLayer {
    MatrixXd W;  ///< rows = outputs, cols = inputs
    VectorXd b;
};

enum class Head { Tanh, Linear };

/**
 * @brief Fully connected network: affine -> ReLU -> ... -> affine -> head.
 *
 * ReLU follows every layer but the last. A Tanh head emits
 * action_scale .* tanh(z); a Linear head emits z.
 */
struct DenseNet {
    std::vector<DenseLayer> layers;
    Head head = Head::Linear;
    VectorXd action_scale;           ///< empty unless head == Tanh
    std::optional<double> lipschitz; ///< budget last enforced, if any

    Eigen::Index input_dim() const { return layers.front().W.cols(); }
    Eigen::Index output_dim() const { return layers.back().W.rows(); }
};

/// Checks shape chaining and finiteness. Throws ShapeMismatch.
void validate(const DenseNet& net);

/**
 * @brief Builds a network with the given layer widths (input first, output last).
 *
 * Hidden layers use He-uniform init; the output layer is drawn from
 * U(-final_scale, final_scale) so the initial policy is near zero.
 */
DenseNet make_dense_net(const std::vector<int>& widths, Head head, const VectorXd& action_scale,
                        std::mt19937_64& rng, double final_scale = 3e-3);

VectorXd forward(const DenseNet& net, const VectorXd& input);

/// Batched forward pass; columns of @p inputs are samples.
MatrixXd forward_batch(const DenseNet& net, const MatrixXd& inputs);

/// Output of the affine/ReLU stack before the head is applied.
VectorXd forward_pre_head(const DenseNet& net, const VectorXd& input);

struct PowerIterationOptions {
    int max_iters = 50;
    double tol = 1e-8;
    std::uint64_t seed = 0x5eedULL;
};

struct SpectralNormResult {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
    VectorXd right_vector;  ///< warm start for the next call
};

/**
 * @brief Largest singular value of @p W by power iteration on W^T W.
 *
 * Starts from @p warm_start when given, otherwise from a seeded random vector.
 * A zero matrix returns 0. If max_iters is exhausted the best estimate is
 * returned with converged = false.
 */
SpectralNormResult spectral_norm(const MatrixXd& W, const PowerIterationOptions& opts = {},
                                 const VectorXd* warm_start = nullptr);

/// Product of per-layer spectral norms.
double lipschitz_upper_bound(const DenseNet& net, const PowerIterationOptions& opts = {1000, 1e-14});

struct LipschitzBudget {
    double L = 2.5;
    double per_layer(std::size_t layer_count) const;
};

/// Per-layer singular vectors carried between successive normalizations.
struct SpectralCache {
    std::vector<VectorXd> right_vectors;
};

/**
 * @brief Rescales every layer to spectral norm L^(1/K).
 *
 * Throws ZeroLayer if a weight matrix is zero. With @p cache the power
 * iteration is warm-started from (and updates) the stored vectors.
 */
DenseNet normalize_actor(const DenseNet& net, const LipschitzBudget& budget,
                         SpectralCache* cache = nullptr,
                         const PowerIterationOptions& opts = {1000, 1e-14});

nlohmann::json to_json(const DenseNet& net);
DenseNet from_json(const nlohmann::json& j);

/// Canonical text of a weight file; identical nets give identical bytes.
std::string serialize(const DenseNet& net);
DenseNet deserialize(const std::string& text);

void save(const DenseNet& net, const std::filesystem::path& path);
DenseNet load(const std::filesystem::path& path);

}  // namespace bp::policy

#endif  // BP_POLICY_HPP_
