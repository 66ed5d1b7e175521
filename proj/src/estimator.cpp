#include "bp/estimator.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "bp/errors.hpp"

namespace bp::estimator {

namespace {

// kappa of a general square matrix from its singular values.
template <typename Matrix>
double condition_number(const Matrix& m) {
    const Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    if (!(smin > 0.0)) {
        return std::numeric_limits<double>::infinity();
    }
    return s(0) / smin;
}

Mat6 symmetrize(const Mat6& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

Transition make_transition(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw InvalidDt("make_transition: dt must be positive and finite");
    }
    const Mat3 I = Mat3::Identity();
    Transition t;
    t.A.setIdentity();
    t.A.topRightCorner<3, 3>() = dt * I;
    t.A_inv.setIdentity();
    t.A_inv.topRightCorner<3, 3>() = -dt * I;
    t.B.topRows<3>() = 0.5 * dt * dt * I;
    t.B.bottomRows<3>() = dt * I;
    return t;
}

InformationState initial_state(const FilterParams& params) {
    InformationState s;
    s.Y = symmetrize(params.initial_information);
    s.y = s.Y * params.initial_estimate;
    s.k = 0;
    return s;
}

InformationState predict(const InformationState& state, const FilterParams& params) {
    const Transition tr = make_transition(params.dt);
    const Mat6 A_inv_T = tr.A_inv.transpose();
    const Mat6 M = A_inv_T * state.Y * tr.A_inv;
    const Mat6 G = Mat6::Identity() + M * tr.B * params.Q * tr.B.transpose();
    if (condition_number(G) > kKappaMax) {
        throw NumericalFailure("predict: (I + M B Q B^T) is ill-conditioned");
    }
    const Eigen::PartialPivLU<Mat6> lu(G);

    InformationState out;
    out.Y = symmetrize(lu.solve(M));
    out.y = lu.solve(A_inv_T * state.y);
    out.k = state.k + 1;
    if (!out.Y.allFinite() || !out.y.allFinite()) {
        throw NumericalFailure("predict: non-finite result");
    }
    return out;
}

Mat3 bearing_information(const BearingMeasurement& m, double range_estimate) {
    const Mat3 P = geometry::project(m.lambda_tilde);
    const Mat3 V = range_estimate * P;
    const Mat3 noise = V * m.sigma * V.transpose();
    // P is symmetric, so H^T W H reduces to P W P on the position block.
    return P * geometry::pinv_psd(0.5 * (noise + noise.transpose())) * P;
}

InformationState correct(const InformationState& prior,
                         std::span<const BearingMeasurement> measurements,
                         CorrectionReport* report) {
    CorrectionReport local;
    if (measurements.empty()) {
        if (report != nullptr) {
            *report = local;
        }
        return prior;
    }

    const Vec3 p_prior = estimate(prior).first.head<3>();

    InformationState post = prior;
    for (const BearingMeasurement& m : measurements) {
        const Vec3 p_i = m.pursuer_state.head<3>();
        const double r_hat = (p_prior - p_i).norm();
        if (!(r_hat > geometry::kEpsNorm)) {
            ++local.skipped_degenerate_range;
            continue;
        }
        const Mat3 W = bearing_information(m, r_hat);
        // H x_Pi = P p_i, and P W P = W, so the information-vector increment is W p_i.
        post.Y.topLeftCorner<3, 3>() += W;
        post.y.head<3>() += W * p_i;
        ++local.fused;
    }
    post.Y = symmetrize(post.Y);
    if (!post.Y.allFinite() || !post.y.allFinite()) {
        throw NumericalFailure("correct: non-finite result");
    }
    if (report != nullptr) {
        *report = local;
    }
    return post;
}

std::pair<Vec6, Mat6> estimate(const InformationState& state) {
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(symmetrize(state.Y));
    const auto& lambda = eig.eigenvalues();
    if (!(lambda(0) > 0.0) || lambda(5) / lambda(0) > kKappaMax) {
        throw NotYetObservable("estimate: information matrix is singular");
    }
    const Mat6& V = eig.eigenvectors();
    const Mat6 P = symmetrize(V * lambda.cwiseInverse().asDiagonal() * V.transpose());
    return {P * state.y, P};
}

void write_trace_header(std::ostream& os) {
    os << "k,x,y,z,vx,vy,vz,P_x,P_y,P_z,P_vx,P_vy,P_vz,n_measurements\n";
}

void write_trace_row(std::ostream& os, const InformationState& state, int n_measurements) {
    Vec6 x = Vec6::Constant(std::numeric_limits<double>::quiet_NaN());
    Vec6 d = x;
    try {
        const auto [xh, P] = estimate(state);
        x = xh;
        d = P.diagonal();
    } catch (const NotYetObservable&) {
    }
    fmt::print(os, "{}", state.k);
    for (int i = 0; i < 6; ++i) fmt::print(os, ",{}", x(i));
    for (int i = 0; i < 6; ++i) fmt::print(os, ",{}", d(i));
    fmt::print(os, ",{}\n", n_measurements);
}

std::pair<Vec6, Mat6> plkf_oracle_step(const std::pair<Vec6, Mat6>& state,
                                       std::span<const BearingMeasurement> measurements,
                                       const FilterParams& params, bool do_predict) {
    Vec6 x = state.first;
    Mat6 P = state.second;
    if (do_predict) {
        const Transition tr = make_transition(params.dt);
        x = tr.A * x;
        P = tr.A * P * tr.A.transpose() + tr.B * params.Q * tr.B.transpose();
    }

    std::vector<const BearingMeasurement*> used;
    std::vector<double> ranges;
    for (const BearingMeasurement& m : measurements) {
        const double r = (x.head<3>() - m.pursuer_state.head<3>()).norm();
        if (r > geometry::kEpsNorm) {
            used.push_back(&m);
            ranges.push_back(r);
        }
    }
    if (used.empty()) {
        return {x, P};
    }

    const auto n = static_cast<Eigen::Index>(used.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * n, 6);
    Eigen::VectorXd z(2 * n);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const BearingMeasurement& m = *used[static_cast<std::size_t>(i)];
        const Mat3 Pl = geometry::project(m.lambda_tilde);
        // Orthonormal basis of range(P_lambda): the two unit-eigenvalue eigenvectors.
        const Eigen::SelfAdjointEigenSolver<Mat3> eig(Pl);
        const Eigen::Matrix<double, 3, 2> U = eig.eigenvectors().rightCols<2>();
        const Mat3 V = ranges[static_cast<std::size_t>(i)] * Pl;
        H.block(2 * i, 0, 2, 3) = U.transpose();
        z.segment(2 * i, 2) = U.transpose() * m.pursuer_state.head<3>();
        R.block(2 * i, 2 * i, 2, 2) = U.transpose() * V * m.sigma * V.transpose() * U;
    }
    const Eigen::MatrixXd S = H * P * H.transpose() + R;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success) {
        throw NumericalFailure("plkf_oracle_step: innovation covariance not invertible");
    }
    const Eigen::MatrixXd K = ldlt.solve(H * P).transpose();
    x = x + K * (z - H * x);
    const Mat6 IKH = Mat6::Identity() - K * H;
    P = IKH * P * IKH.transpose() + K * R * K.transpose();
    P = 0.5 * (P + P.transpose());
    if (!x.allFinite() || !P.allFinite()) {
        throw NumericalFailure("plkf_oracle_step: non-finite result");
    }
    return {x, P};
}

}  // namespace bp::estimator
