#pragma once

// Losses, penalties and their gradients for the inner (coefficient) and outer (precision)
// problems. Everything here is a pure function.

#include "damtl/common.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace damtl
{
    struct PenaltyWeights
    {
        double delta1 = 0.0; // consensus
        double delta2 = 0.0; // task relationship
        double ridge = 0.0;  // b
        Matrix target;       // T
    };

    // omega_inv is the diagonal of the inverse error covariance.
    inline double inner_loss(const Vector &w, const Matrix &x, const Vector &y, const Vector &omega_inv)
    {
        require_dims(x.cols() == w.size() && x.rows() == y.size() && omega_inv.size() == y.size(), "inner_loss");
        const Vector r = y - x * w;
        return 0.5 * r.dot(omega_inv.cwiseProduct(r));
    }

    // X^T Omega^{-1} (X w - y)
    inline Vector inner_gradient(const Vector &w, const Matrix &x, const Vector &y, const Vector &omega_inv)
    {
        require_dims(x.cols() == w.size() && x.rows() == y.size() && omega_inv.size() == y.size(), "inner_gradient");
        return x.transpose() * omega_inv.cwiseProduct(x * w - y);
    }

    struct NeighborModel
    {
        double weight = 1.0; // a_ij
        Vector w;
    };

    // 1/2 sum_j a_ij |w_i - w_j|^2
    inline double consensus_value(const Vector &w_i, const std::vector<NeighborModel> &neighbors)
    {
        double v = 0.0;
        for (const auto &n : neighbors)
        {
            require_dims(n.w.size() == w_i.size(), "consensus_value");
            v += 0.5 * n.weight * (w_i - n.w).squaredNorm();
        }
        return v;
    }

    inline Vector consensus_gradient(const Vector &w_i, const std::vector<NeighborModel> &neighbors)
    {
        Vector g = Vector::Zero(w_i.size());
        for (const auto &n : neighbors)
        {
            require_dims(n.w.size() == w_i.size(), "consensus_gradient");
            g += n.weight * (w_i - n.w);
        }
        return g;
    }

    // Row-wise average over the N columns, replicated back to p x N.
    inline Matrix ensemble_mean(const Matrix &w)
    {
        const Vector m = w.rowwise().mean();
        return m.replicate(1, w.cols());
    }

    // trace((W - M) Theta (W - M)^T)
    inline double task_penalty_value(const Matrix &w, const Matrix &m, const Matrix &theta)
    {
        require_dims(w.rows() == m.rows() && w.cols() == m.cols() && theta.rows() == w.cols() &&
                         theta.cols() == w.cols(),
                     "task_penalty_value");
        const Matrix d = w - m;
        return (d * theta).cwiseProduct(d).sum();
    }

    // Gradient with respect to column i of W, holding M fixed: 2 (W - M) Theta[:, i].
    inline Vector task_penalty_gradient(int i, const Matrix &w, const Matrix &m, const Matrix &theta)
    {
        require_dims(w.rows() == m.rows() && w.cols() == m.cols() && theta.rows() == w.cols() &&
                         theta.cols() == w.cols() && i >= 0 && i < w.cols(),
                     "task_penalty_gradient");
        return 2.0 * (w - m) * theta.col(i);
    }

    // log|A| for symmetric positive definite A; throws NotSPD otherwise.
    inline double log_det_spd(const Matrix &a)
    {
        const Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success)
        {
            throw Error(ErrorCode::NotSPD, "matrix is not positive definite");
        }
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }

    // tr(S Theta) + (b/2) |Theta - T|_F^2 - log|Theta|
    inline double outer_objective(const Matrix &theta, const Matrix &s, double b, const Matrix &target)
    {
        require_dims(theta.rows() == theta.cols() && s.rows() == theta.rows() && s.cols() == theta.cols() &&
                         target.rows() == theta.rows() && target.cols() == theta.cols(),
                     "outer_objective");
        return (s * theta).trace() + 0.5 * b * (theta - target).squaredNorm() - log_det_spd(theta);
    }

    /// S + b (Theta - T) - Theta^{-1} - noise, symmetrized as (G + G^T) / 2.
    inline Matrix outer_gradient(const Matrix &theta, const Matrix &s, double b, const Matrix &target,
                                 const Matrix *noise = nullptr)
    {
        require_dims(theta.rows() == theta.cols() && s.rows() == theta.rows() && s.cols() == theta.cols() &&
                         target.rows() == theta.rows() && target.cols() == theta.cols(),
                     "outer_gradient");
        const Eigen::FullPivLU<Matrix> lu(theta);
        if (!lu.isInvertible())
        {
            throw Error(ErrorCode::SingularTheta, "precision estimate is singular");
        }
        Matrix g = s + b * (theta - target) - lu.inverse();
        if (noise != nullptr)
        {
            require_dims(noise->rows() == theta.rows() && noise->cols() == theta.cols(), "outer_gradient noise");
            g -= *noise;
        }
        // IEEE addition commutes, so this is symmetric bit for bit.
        return 0.5 * (g + g.transpose());
    }

    /// 2 * lambda_min(X^T Omega^{-1} X), clamped at 0 for rank-deficient designs.
    inline double kappa(const Matrix &x, const Vector &omega_inv)
    {
        require_dims(omega_inv.size() == x.rows(), "kappa");
        const Matrix h = x.transpose() * omega_inv.asDiagonal() * x;
        const double lmin = min_eigenvalue(h);
        const double tol = 1e-12 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        return lmin <= tol ? 0.0 : 2.0 * lmin;
    }

    /// Central differences with per-coordinate step 1e-6 * (1 + |x_k|).
    inline Vector finite_difference_gradient(const std::function<double(const Vector &)> &f, const Vector &x)
    {
        Vector g(x.size());
        Vector probe = x;
        for (Eigen::Index k = 0; k < x.size(); ++k)
        {
            const double h = 1e-6 * (1.0 + std::abs(x(k)));
            probe(k) = x(k) + h;
            const double fp = f(probe);
            probe(k) = x(k) - h;
            const double fm = f(probe);
            probe(k) = x(k);
            g(k) = (fp - fm) / (2.0 * h);
        }
        return g;
    }

    /// Finite-difference gradient of a function of a symmetric matrix, over the upper triangle.
    /// Off-diagonal coordinates move (r, c) and (c, r) together, so the returned entry is the
    /// symmetric-coordinate derivative G_rc + G_cr; the diagonal gives G_rr.
    inline Matrix finite_difference_symmetric(const std::function<double(const Matrix &)> &f, const Matrix &x)
    {
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        Matrix probe = x;
        for (Eigen::Index c = 0; c < x.cols(); ++c)
        {
            for (Eigen::Index r = 0; r <= c; ++r)
            {
                const double h = 1e-6 * (1.0 + std::abs(x(r, c)));
                auto set = [&](double v) {
                    probe(r, c) = v;
                    probe(c, r) = v;
                };
                set(x(r, c) + h);
                const double fp = f(probe);
                set(x(r, c) - h);
                const double fm = f(probe);
                set(x(r, c));
                g(r, c) = (fp - fm) / (2.0 * h);
                g(c, r) = g(r, c);
            }
        }
        return g;
    }

    // |a - b| / max(|a|, |b|), 0 when both vanish.
    inline double relative_error(const Eigen::Ref<const Matrix> &a, const Eigen::Ref<const Matrix> &b)
    {
        const double scale = std::max(a.norm(), b.norm());
        return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
    }
} // namespace damtl
