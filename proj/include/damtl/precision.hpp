#pragma once

// Messenger-side estimation of the task precision matrix: centering, empirical covariance,
// the trace-positivity stepsize safeguard, SPD repair and the stochastic gradient step.

#include "damtl/common.hpp"
#include "damtl/objectives.hpp"
#include "damtl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace damtl
{
    enum class ScheduleKind : std::uint8_t
    {
        Constant, // base
        Inverse,  // base / k
    };

    struct Schedule
    {
        ScheduleKind kind = ScheduleKind::Inverse;
        double base = 1.0;

        // k is the 1-based update index.
        [[nodiscard]] double at(std::uint64_t k) const noexcept
        {
            return kind == ScheduleKind::Constant ? base : base / static_cast<double>(std::max<std::uint64_t>(k, 1));
        }
    };

    struct PrecisionState
    {
        Matrix theta;
        Matrix s;
        Matrix target;
        double beta = 1.0;                               // constant factor of the outer stepsize
        Schedule step{ScheduleKind::Inverse, 1.0};       // decreasing factor beta_hat_k
        Schedule ridge{ScheduleKind::Inverse, 1.0};      // b_k
        double eig_floor = 1e-6;
        bool safeguard = true;
        std::uint64_t update_count = 0;
        double fourth_moment = 0.0;                      // running estimate F_hat
        std::uint64_t floor_activations = 0;
        std::uint64_t shrink_activations = 0;

        [[nodiscard]] int dim() const noexcept { return static_cast<int>(theta.rows()); }
    };

    // Theta = T = I, S = 0.
    inline PrecisionState make_precision_state(int n)
    {
        PrecisionState st;
        st.theta = Matrix::Identity(n, n);
        st.s = Matrix::Zero(n, n);
        st.target = Matrix::Identity(n, n);
        return st;
    }

    struct Centered
    {
        Matrix values; // p x N, rows sum to zero
        Vector mean;   // p
    };

    inline Centered center_estimates(const Matrix &w)
    {
        Centered c;
        c.mean = w.rowwise().mean();
        c.values = w.colwise() - c.mean;
        return c;
    }

    // (1/p) sum over the p rows of the outer product row^T row; N x N.
    inline Matrix empirical_covariance(const Matrix &centered)
    {
        if (centered.rows() == 0)
        {
            return Matrix::Zero(centered.cols(), centered.cols());
        }
        Matrix s = centered.transpose() * centered / static_cast<double>(centered.rows());
        return 0.5 * (s + s.transpose());
    }

    // Mean of the fourth powers of the centered entries.
    inline double empirical_fourth_moment(const Matrix &centered)
    {
        return centered.size() == 0 ? 0.0 : centered.array().pow(4).mean();
    }

    /// Eigen-decompose and lift eigenvalues below `eig_floor` up to it. Inputs whose spectrum
    /// already clears the floor are returned as-is. `clamped` receives the number of lifted
    /// eigenvalues.
    inline Matrix enforce_spd(const Matrix &a, double eig_floor = 1e-6, int *clamped = nullptr)
    {
        const Eigen::SelfAdjointEigenSolver<Matrix> es(a);
        Vector ev = es.eigenvalues();
        int lifted = 0;
        for (Eigen::Index k = 0; k < ev.size(); ++k)
        {
            if (!(ev(k) >= eig_floor))
            {
                ev(k) = eig_floor;
                ++lifted;
            }
        }
        if (clamped != nullptr)
        {
            *clamped = lifted;
        }
        if (lifted == 0)
        {
            return a;
        }
        const Matrix r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        return 0.5 * (r + r.transpose());
    }

    struct StepsizeCheck
    {
        double admissible = 0.0;
        double bound_trace = std::numeric_limits<double>::infinity();  // |tr Theta / (2 tr(Theta - T))|
        double bound_moment = std::numeric_limits<double>::infinity(); // 2 tr Theta / (3 N sqrt(F))
        bool shrunk = false;
    };

    /// Caps the scheduled beta_hat so the trace of Theta stays positive after the next update:
    /// min(scheduled, 0.9 * bound_trace, bound_moment) with m_k = tr(Theta).
    inline StepsizeCheck check_outer_stepsize(const PrecisionState &st, double fourth_moment, double scheduled)
    {
        const double tr = st.theta.trace();
        if (!(tr > 0.0))
        {
            throw Error(ErrorCode::NonpositiveTrace, "trace of the precision estimate is " + std::to_string(tr));
        }
        StepsizeCheck c;
        const double excess = (st.theta - st.target).trace();
        if (excess != 0.0)
        {
            c.bound_trace = std::abs(tr / (2.0 * excess));
        }
        if (fourth_moment > 0.0)
        {
            c.bound_moment = 2.0 * tr / (3.0 * st.dim() * std::sqrt(fourth_moment));
        }
        c.admissible = std::min({scheduled, 0.9 * c.bound_trace, c.bound_moment});
        c.shrunk = c.admissible < scheduled;
        return c;
    }

    struct PrecisionStepReport
    {
        double step = 0.0;        // beta * beta_hat actually applied
        double ridge = 0.0;       // b_k used
        bool shrunk = false;      // safeguard reduced beta_hat
        int floor_clamped = 0;    // eigenvalues lifted by the SPD repair
        double trace_before_repair = 0.0;
    };

    /// One stochastic gradient step on the outer objective with a given covariance S:
    /// Theta <- Theta - beta * beta_hat_k * sym(S + b_k (Theta - T) - Theta^{-1} - noise), then SPD
    /// repair. Noise entries are i.i.d. N(0, iota^2).
    inline PrecisionStepReport precision_update(PrecisionState &st, const Matrix &s, double iota, Rng &rng)
    {
        const int n = st.dim();
        require_dims(s.rows() == n && s.cols() == n, "precision_update covariance");
        const std::uint64_t k = st.update_count + 1;
        st.s = s;
        // tr(S) <= N sqrt(F) is what the trace bound relies on; keep the estimate consistent with it.
        const double tr_s = s.trace() / n;
        st.fourth_moment = std::max(st.fourth_moment, tr_s * tr_s);

        PrecisionStepReport rep;
        rep.ridge = st.ridge.at(k);
        double beta_hat = st.step.at(k);
        if (st.safeguard)
        {
            const auto check = check_outer_stepsize(st, st.fourth_moment, beta_hat);
            beta_hat = check.admissible;
            rep.shrunk = check.shrunk;
        }
        Matrix noise;
        const Matrix *noise_ptr = nullptr;
        if (iota > 0.0)
        {
            noise.resize(n, n);
            for (int c = 0; c < n; ++c)
            {
                for (int r = 0; r < n; ++r)
                {
                    noise(r, c) = iota * rng.normal();
                }
            }
            noise_ptr = &noise;
        }
        const Matrix g = outer_gradient(st.theta, s, rep.ridge, st.target, noise_ptr);
        rep.step = st.beta * beta_hat;
        const Matrix next = st.theta - rep.step * g;
        rep.trace_before_repair = next.trace();
        st.theta = enforce_spd(next, st.eig_floor, &rep.floor_clamped);
        st.update_count = k;
        if (rep.shrunk)
        {
            ++st.shrink_activations;
        }
        if (rep.floor_clamped > 0)
        {
            ++st.floor_activations;
        }
        return rep;
    }

    /// Messenger step from an assembled p x N estimate matrix: center, form S, fold the centered
    /// fourth moment into the running F_hat, then precision_update.
    inline PrecisionStepReport precision_step(PrecisionState &st, const Matrix &w_assembled, double iota, Rng &rng)
    {
        require_dims(w_assembled.cols() == st.dim(), "precision_step estimate matrix");
        const Centered c = center_estimates(w_assembled);
        st.fourth_moment = std::max(st.fourth_moment, empirical_fourth_moment(c.values));
        return precision_update(st, empirical_covariance(c.values), iota, rng);
    }

    struct AnalysisConstants
    {
        double c1p = 0.0;    // c1'
        double c2 = 0.0;
        double cp = 1.0;     // c'
        double ag_sum = 0.0; // sum_i mu_i (A_i + G_i)
        std::vector<double> iota;      // per group
        std::vector<double> phi_rates; // per group
        double beta_tilde = 1.0;       // integral of beta_hat up to t'
        int node_count = 1;
    };

    struct StepsizeAdvice
    {
        double phi = 0.0;   // outer update rate
        double beta = 0.0;  // outer constant stepsize
        double gamma = 0.0; // inner stepsize
        double zeta3 = 0.0;
        double zeta4 = 0.0;
    };

    // min{1 / x, 1} with 1/0 treated as +inf.
    inline double capped_reciprocal(double x) noexcept { return x > 0.0 ? std::min(1.0 / x, 1.0) : 1.0; }

    /// Long-run stepsize choices targeting E[V] ~ zeta1 and E[U] ~ zeta2, with
    /// zeta3 = zeta4 = zeta1 / beta_tilde.
    inline StepsizeAdvice advise_stepsizes(const AnalysisConstants &c, double zeta1, double zeta2)
    {
        const bool ok = zeta1 > 0.0 && zeta2 > 0.0 && c.beta_tilde > 0.0 && c.cp > 0.0 && c.c1p >= 0.0 &&
                        c.c2 >= 0.0 && c.ag_sum >= 0.0 && c.node_count > 0 && !c.iota.empty() &&
                        c.iota.size() == c.phi_rates.size() &&
                        std::all_of(c.iota.begin(), c.iota.end(), [](double v) { return v >= 0.0; }) &&
                        std::all_of(c.phi_rates.begin(), c.phi_rates.end(), [](double v) { return v >= 0.0; });
        if (!ok)
        {
            throw Error(ErrorCode::NonpositiveConstant, "stepsize advisor needs positive zetas, beta_tilde and c', "
                                                        "nonnegative constants and one (iota, phi) pair per group");
        }
        StepsizeAdvice a;
        a.zeta3 = zeta1 / c.beta_tilde;
        a.zeta4 = a.zeta3;
        a.phi = a.zeta3 * capped_reciprocal(c.c1p + c.c2);
        double inner = 1.0;
        for (std::size_t j = 0; j < c.iota.size(); ++j)
        {
            inner = std::min(inner, capped_reciprocal(c.node_count * std::sqrt(c.iota[j] * c.phi_rates[j])));
        }
        a.beta = a.zeta4 * inner;
        a.gamma = zeta2 * (c.ag_sum > 0.0 ? std::min(c.cp / c.ag_sum, 1.0) : 1.0);
        return a;
    }
} // namespace damtl
