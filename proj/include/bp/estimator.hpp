#ifndef BP_ESTIMATOR_HPP_
#define BP_ESTIMATOR_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "bp/geometry.hpp"

namespace bp::estimator {

/// Condition-number guard applied before every 6x6 inversion.
inline constexpr double kKappaMax = 1e12;

/**
 * @brief Information-form state of the target estimate x_T = [p_T; v_T].
 *
 * y = Y x_hat and Y is the inverse covariance. Y stays symmetric PSD.
 */
struct InformationState {
    Vec6 y = Vec6::Zero();
    Mat6 Y = Mat6::Zero();
    std::int64_t k = 0;
};

/// One noisy bearing from a pursuer, together with that pursuer's known state.
struct BearingMeasurement {
    Vec3 lambda_tilde;   ///< approximately unit; not renormalized after noise
    Vec6 pursuer_state;  ///< [p_i; v_i]
    Mat3 sigma;          ///< bearing noise covariance
};

struct FilterParams {
    double dt = 0.1;
    Mat3 Q = 0.25 * Mat3::Identity();
    Vec6 initial_estimate = Vec6::Zero();
    Mat6 initial_information = 1e-2 * Mat6::Identity();
};

/// Double-integrator transition A, its closed-form inverse, and noise input B.
struct Transition {
    Mat6 A;
    Mat6 A_inv;
    Mat63 B;
};

Transition make_transition(double dt);

/// Builds the starting information state from the configured prior.
InformationState initial_state(const FilterParams& params);

/// Information-form prediction over one dt. Throws NumericalFailure when ill-conditioned.
InformationState predict(const InformationState& state, const FilterParams& params);

/// Per-call diagnostics from correct().
struct CorrectionReport {
    int fused = 0;
    int skipped_degenerate_range = 0;
};

/**
 * @brief Fuses any number of bearing measurements additively in information form.
 *
 * Each bearing contributes H^T (V Sigma V^T)^+ H with H = [P_lambda, 0] and
 * V = r_hat * P_lambda, where r_hat is the range from the pursuer to the prior
 * position estimate. An empty list returns the prior unchanged. Measurements
 * whose prior range is degenerate are skipped and counted in @p report.
 */
InformationState correct(const InformationState& prior,
                         std::span<const BearingMeasurement> measurements,
                         CorrectionReport* report = nullptr);

/// Point estimate and covariance. Throws NotYetObservable if Y is singular.
std::pair<Vec6, Mat6> estimate(const InformationState& state);

/// Information contribution H^T (V Sigma V^T)^+ H of one bearing (position block only).
Mat3 bearing_information(const BearingMeasurement& m, double range_estimate);

/**
 * @brief Writes one filter trace row: k, x_hat (6), diag(P) (6), n_measurements.
 *
 * When the state is not yet observable the estimate fields are written as nan.
 */
void write_trace_header(std::ostream& os);
void write_trace_row(std::ostream& os, const InformationState& state, int n_measurements);

/**
 * @brief Covariance-form pseudo-linear Kalman step. Test oracle only.
 *
 * Predicts (x, P) with the same transition and process noise, then reduces each
 * bearing to a full-rank 2D measurement on an orthonormal basis of the
 * projector's range, stacks them, and applies one standard Kalman update.
 * Mathematically equal to predict() followed by correct().
 */
std::pair<Vec6, Mat6> plkf_oracle_step(const std::pair<Vec6, Mat6>& state,
                                       std::span<const BearingMeasurement> measurements,
                                       const FilterParams& params, bool do_predict = true);

}  // namespace bp::estimator

#endif  // BP_ESTIMATOR_HPP_
