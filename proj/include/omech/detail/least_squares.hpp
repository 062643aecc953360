#ifndef OMECH_DETAIL_LEAST_SQUARES_HPP
#define OMECH_DETAIL_LEAST_SQUARES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace omech::detail
{
struct LmOptions
{
    int max_iterations = 200;
    double gradient_tolerance = 1e-10;  // max_j |J_j . r| / (|J_j| |r|)
    double step_tolerance = 1e-14;      // |dz| relative to |z| + 1
    double fd_step = 1e-7;              // central-difference step in scaled coordinates
    double initial_damping = 1e-3;
    double residual_floor = 1e-15;      // rms at which the residual is treated as roundoff
};

struct LmResult
{
    Eigen::VectorXd x;
    Eigen::VectorXd sigma;            // 1-sigma from the local quadratic approximation
    Eigen::MatrixXd covariance;       // in x units, NaN when J^T J is singular
    double cost = 0.0;                // 0.5 |r|^2
    double residual_rms = 0.0;
    double gradient_measure = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> rms_history;  // one entry per accepted iterate, starting with x0
};

// Levenberg-Marquardt with Marquardt diagonal scaling and a central-difference Jacobian.
// The solver works in z with x = x0 + scale * z, so each scaled coordinate starts at 0 with unit size.
template <class ResidualFn>
LmResult levenberg_marquardt(ResidualFn &&residuals, const Eigen::VectorXd &x0, const Eigen::VectorXd &scale,
                             const LmOptions &opt = {})
{
    const Eigen::Index n = x0.size();
    auto to_x = [&](const Eigen::VectorXd &z) -> Eigen::VectorXd { return x0 + scale.cwiseProduct(z); };

    auto jacobian = [&](const Eigen::VectorXd &z, Eigen::Index m) {
        Eigen::MatrixXd J(m, n);
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const double h = opt.fd_step * std::max(1.0, std::abs(z[j]));
            Eigen::VectorXd zp = z, zm = z;
            zp[j] += h;
            zm[j] -= h;
            J.col(j) = (residuals(to_x(zp)) - residuals(to_x(zm))) / (2.0 * h);
        }
        return J;
    };

    LmResult out;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = residuals(to_x(z));
    const Eigen::Index m = r.size();
    double cost = 0.5 * r.squaredNorm();
    double lambda = opt.initial_damping;
    out.rms_history.push_back(std::sqrt(r.squaredNorm() / static_cast<double>(m)));

    Eigen::MatrixXd J = jacobian(z, m);
    for (int it = 0; it < opt.max_iterations; ++it)
    {
        out.iterations = it + 1;
        const Eigen::VectorXd g = J.transpose() * r;
        const double rnorm = r.norm();
        double gmeasure = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const double cn = J.col(j).norm();
            if (cn > 0.0 && rnorm > 0.0)
                gmeasure = std::max(gmeasure, std::abs(g[j]) / (cn * rnorm));
        }
        out.gradient_measure = gmeasure;
        if (rnorm <= opt.residual_floor * std::sqrt(static_cast<double>(m)) || gmeasure <= opt.gradient_tolerance)
        {
            out.converged = true;
            break;
        }

        const Eigen::MatrixXd JtJ = J.transpose() * J;
        bool accepted = false;
        bool tiny_step = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt)
        {
            Eigen::MatrixXd A = JtJ;
            for (Eigen::Index j = 0; j < n; ++j)
                A(j, j) += lambda * std::max(JtJ(j, j), 1e-300);
            const Eigen::VectorXd dz = A.ldlt().solve(-g);
            if (!dz.allFinite())
            {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd zt = z + dz;
            const Eigen::VectorXd rt = residuals(to_x(zt));
            const double ct = rt.allFinite() ? 0.5 * rt.squaredNorm() : std::numeric_limits<double>::infinity();
            if (ct < cost)
            {
                tiny_step = dz.norm() <= opt.step_tolerance * (z.norm() + 1.0);
                z = zt;
                r = rt;
                cost = ct;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
            }
            else
            {
                lambda *= 4.0;
            }
        }
        if (!accepted)
        {
            // No descent direction left at double precision. Accept when the Gauss-Newton model
            // predicts a relative cost reduction below the tolerance, as at a roundoff-level residual.
            const Eigen::VectorXd gn = JtJ.ldlt().solve(-g);
            const double predicted = gn.allFinite() ? 0.5 * (J * gn).squaredNorm() : 0.0;
            out.converged = gmeasure <= std::sqrt(opt.gradient_tolerance) || predicted <= opt.gradient_tolerance * cost;
            break;
        }
        out.rms_history.push_back(std::sqrt(r.squaredNorm() / static_cast<double>(m)));
        J = jacobian(z, m);
        if (tiny_step)
        {
            out.converged = true;
            break;
        }
    }

    out.x = to_x(z);
    out.cost = cost;
    out.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(m));
    out.sigma = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    out.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    if (m > n)
    {
        const double s2 = r.squaredNorm() / static_cast<double>(m - n);
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(JtJ);
        if (lu.isInvertible())
        {
            const Eigen::MatrixXd cov = lu.inverse() * s2;
            out.covariance = scale.asDiagonal() * cov * scale.asDiagonal();
            for (Eigen::Index j = 0; j < n; ++j)
                out.sigma[j] = std::sqrt(std::max(cov(j, j), 0.0)) * std::abs(scale[j]);
        }
    }
    return out;
}

} // namespace omech::detail

#endif // OMECH_DETAIL_LEAST_SQUARES_HPP
