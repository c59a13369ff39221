#pragma once

// Restarted GMRES for complex systems with a matrix-free operator.

#include "hbem/common.hpp"

#include <functional>
#include <span>
#include <vector>

namespace hbem {

using LinearOperator = std::function<std::vector<complex_t>(std::span<const complex_t>)>;

struct GmresConfig {
    double tolerance = 1e-5; // relative to ‖b‖
    std::size_t restart = 100;
    std::size_t max_iterations = 1000;
};

struct GmresResult {
    std::vector<complex_t> x;
    std::size_t iterations = 0;
    bool converged = false;
    double residual = 0.0;             // final relative residual (true residual)
    std::vector<double> history;       // relative residual estimate after each iteration
    std::vector<double> restart_residuals; // true relative residual at every restart
};

class SolverError : public Error {
public:
    SolverError(const std::string& msg, std::vector<double> history) : Error(msg), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

inline double norm2(std::span<const complex_t> v)
{
    double s = 0.0;
    for (const auto& x : v)
        s += std::norm(x);
    return std::sqrt(s);
}

inline GmresResult gmres(const LinearOperator& a, std::span<const complex_t> b, const GmresConfig& cfg,
                         std::span<const complex_t> x0 = {})
{
    if (cfg.restart < 1)
        throw ConfigError("GMRES restart length must be at least 1");
    if (!(cfg.tolerance > 0.0))
        throw ConfigError("GMRES tolerance must be positive");
    const std::size_t n = b.size();
    GmresResult res;
    res.x.assign(n, complex_t{});
    if (!x0.empty()) {
        if (x0.size() != n)
            throw DimensionError("initial guess has the wrong length");
        res.x.assign(x0.begin(), x0.end());
    }
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.x.assign(n, complex_t{});
        res.converged = true;
        return res;
    }

    auto residual = [&](std::vector<complex_t>& r) {
        const auto ax = a(res.x);
        if (ax.size() != n)
            throw DimensionError("operator returned a vector of the wrong length");
        r.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = b[i] - ax[i];
        return norm2(r);
    };

    std::vector<complex_t> r;
    double beta = residual(r);
    res.restart_residuals.push_back(beta / bnorm);
    const std::size_t m = cfg.restart;

    while (beta / bnorm > cfg.tolerance && res.iterations < cfg.max_iterations) {
        std::vector<std::vector<complex_t>> v;
        v.reserve(m + 1);
        v.emplace_back(n);
        for (std::size_t i = 0; i < n; ++i)
            v[0][i] = r[i] / beta;
        std::vector<std::vector<complex_t>> h(m + 1, std::vector<complex_t>(m, complex_t{}));
        std::vector<complex_t> cs(m), sn(m), g(m + 1, complex_t{});
        g[0] = beta;
        std::size_t k = 0;
        for (; k < m && res.iterations < cfg.max_iterations; ++k) {
            std::vector<complex_t> w = a(v[k]);
            // modified Gram-Schmidt
            for (std::size_t j = 0; j <= k; ++j) {
                complex_t hjk = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    hjk += std::conj(v[j][i]) * w[i];
                h[j][k] = hjk;
                for (std::size_t i = 0; i < n; ++i)
                    w[i] -= hjk * v[j][i];
            }
            const double wn = norm2(w);
            h[k + 1][k] = wn;
            for (std::size_t j = 0; j < k; ++j) {
                const complex_t t = std::conj(cs[j]) * h[j][k] + std::conj(sn[j]) * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            // Givens rotation annihilating h[k+1][k]
            const double hn = std::sqrt(std::norm(h[k][k]) + wn * wn);
            if (hn == 0.0) {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / hn;
                sn[k] = wn / hn;
            }
            h[k][k] = hn;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = std::conj(cs[k]) * g[k];
            ++res.iterations;
            res.history.push_back(std::abs(g[k + 1]) / bnorm);
            if (res.history.back() <= cfg.tolerance || wn == 0.0) {
                ++k;
                break;
            }
            v.emplace_back(n);
            for (std::size_t i = 0; i < n; ++i)
                v[k + 1][i] = w[i] / wn;
        }
        // back substitution for the k x k triangular system
        std::vector<complex_t> y(k);
        for (std::size_t i = k; i-- > 0;) {
            complex_t s = g[i];
            for (std::size_t j = i + 1; j < k; ++j)
                s -= h[i][j] * y[j];
            y[i] = s / h[i][i];
        }
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t i = 0; i < n; ++i)
                res.x[i] += y[j] * v[j][i];
        beta = residual(r);
        res.restart_residuals.push_back(beta / bnorm);
    }
    res.residual = beta / bnorm;
    res.converged = res.residual <= cfg.tolerance;
    return res;
}

} // namespace hbem
