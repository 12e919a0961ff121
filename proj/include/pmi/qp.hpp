// Quadratic-program solvers for the two constraint geometries the trainer
// needs:
//   - block-simplex: min ½λᵀQλ, λ restricted to one probability simplex per
//     index block (projected gradient + exact Euclidean simplex projection,
//     spectral step with exact line search)
//   - box-sum: min ½αᵀKα, 0 ≤ α ≤ upper, Σα = 1 (pairwise updates on the
//     maximally KKT-violating pair)
// plus exhaustive grid oracles used by the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmi/matrix.hpp"

namespace pmi {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BlockSimplexQP {
    Matrix q{0};
    std::vector<std::vector<std::size_t>> blocks;  // disjoint, covering 0..m-1
};

struct BoxSumQP {
    Matrix k{0};
    double upper = 1.0;  // per-variable cap; feasibility needs M·upper >= 1
};

struct QPSolution {
    std::vector<double> variables;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double kkt_residual = 0.0;
};

namespace detail {

constexpr double kActiveEps = 1e-12;

inline void validate(const BlockSimplexQP& p) {
    const std::size_t m = p.q.size();
    if (!p.q.is_symmetric(1e-10)) throw SolverError("block-simplex: matrix not symmetric");
    std::vector<char> seen(m, 0);
    std::size_t covered = 0;
    for (const auto& block : p.blocks) {
        if (block.empty()) throw SolverError("block-simplex: empty block");
        for (std::size_t idx : block) {
            if (idx >= m || seen[idx]) throw SolverError("block-simplex: blocks must partition indices");
            seen[idx] = 1;
            ++covered;
        }
    }
    if (covered != m) throw SolverError("block-simplex: blocks do not cover all indices");
}

inline void validate(const BoxSumQP& p) {
    if (!p.k.is_symmetric(1e-10)) throw SolverError("box-sum: matrix not symmetric");
    if (!(p.upper > 0.0)) throw SolverError("box-sum: upper bound must be positive");
    if (static_cast<double>(p.k.size()) * p.upper < 1.0)
        throw SolverError("box-sum: infeasible, M*upper = " +
                          std::to_string(static_cast<double>(p.k.size()) * p.upper) + " < 1");
}

// max over blocks of (max gradient over active coords − min gradient):
// zero exactly when each block's active coordinates share the block-minimal
// multiplier.
inline double block_kkt_residual(const BlockSimplexQP& p, const std::vector<double>& x,
                                 const std::vector<double>& grad) {
    double residual = 0.0;
    for (const auto& block : p.blocks) {
        double g_min = std::numeric_limits<double>::infinity();
        double g_active_max = -std::numeric_limits<double>::infinity();
        for (std::size_t idx : block) {
            g_min = std::min(g_min, grad[idx]);
            if (x[idx] > kActiveEps) g_active_max = std::max(g_active_max, grad[idx]);
        }
        residual = std::max(residual, g_active_max - g_min);
    }
    return std::max(residual, 0.0);
}

// m_dn − m_up where m_up = min gradient over coords free to grow and m_dn =
// max gradient over coords free to shrink; ≤ 0 means KKT holds.
inline double box_kkt_residual(const BoxSumQP& p, const std::vector<double>& x,
                               const std::vector<double>& grad, std::size_t* i_up = nullptr,
                               std::size_t* j_dn = nullptr) {
    const double bound_eps = 1e-8 * p.upper;
    double m_up = std::numeric_limits<double>::infinity();
    double m_dn = -std::numeric_limits<double>::infinity();
    std::size_t best_up = p.k.size(), best_dn = p.k.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < p.upper - bound_eps && grad[i] < m_up) {
            m_up = grad[i];
            best_up = i;
        }
        if (x[i] > bound_eps && grad[i] > m_dn) {
            m_dn = grad[i];
            best_dn = i;
        }
    }
    if (i_up) *i_up = best_up;
    if (j_dn) *j_dn = best_dn;
    if (best_up == p.k.size() || best_dn == p.k.size()) return 0.0;  // no feasible move
    return std::max(m_dn - m_up, 0.0);
}

inline void check_block_feasible(const BlockSimplexQP& p, const std::vector<double>& x) {
    for (const auto& block : p.blocks) {
        double sum = 0.0;
        for (std::size_t idx : block) {
            if (x[idx] < -1e-12) throw SolverError("block-simplex: negative coordinate in solution");
            sum += x[idx];
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw SolverError("block-simplex: block sum off by " + std::to_string(sum - 1.0));
    }
}

inline void check_box_feasible(const BoxSumQP& p, const std::vector<double>& x) {
    double sum = 0.0;
    for (double v : x) {
        if (v < -1e-12 || v > p.upper + 1e-12)
            throw SolverError("box-sum: coordinate outside box in solution");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw SolverError("box-sum: sum constraint off by " + std::to_string(sum - 1.0));
}

}  // namespace detail

// Euclidean projection onto {x ≥ 0, Σx = 1} (sort-and-threshold).
inline std::vector<double> project_to_simplex(const std::vector<double>& v) {
    if (v.empty()) throw SolverError("cannot project an empty vector");
    std::vector<double> u(v);
    std::sort(u.begin(), u.end(), std::greater<>());
    double running = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        running += u[j];
        double candidate = (running - 1.0) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) theta = candidate;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

// Projected gradient over the product of per-block simplices. Deterministic:
// uniform start, spectral (Barzilai-Borwein) trial step, exact line search
// along the projected direction, so the objective never increases.
inline QPSolution solve_block_simplex(const BlockSimplexQP& p, double tol, std::size_t max_iter) {
    detail::validate(p);
    const std::size_t m = p.q.size();

    QPSolution sol;
    sol.variables.assign(m, 0.0);
    for (const auto& block : p.blocks)
        for (std::size_t idx : block)
            sol.variables[idx] = 1.0 / static_cast<double>(block.size());

    std::vector<double>& x = sol.variables;
    std::vector<double> grad = p.q.multiply(x);
    const double q_scale = p.q.max_abs();
    const double lipschitz = [&] {
        double worst = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m; ++j) row += std::abs(p.q(i, j));
            worst = std::max(worst, row);
        }
        return worst;
    }();

    double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
    std::vector<double> trial(m), direction(m), q_dir(m);

    for (;;) {
        sol.kkt_residual = detail::block_kkt_residual(p, x, grad);
        if (sol.kkt_residual <= tol) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= max_iter) break;
        ++sol.iterations;

        for (const auto& block : p.blocks) {
            std::vector<double> slice(block.size());
            for (std::size_t j = 0; j < block.size(); ++j)
                slice[j] = x[block[j]] - step * grad[block[j]];
            auto projected = project_to_simplex(slice);
            for (std::size_t j = 0; j < block.size(); ++j) trial[block[j]] = projected[j];
        }

        double dir_norm2 = 0.0;
        double g_dot_d = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            direction[i] = trial[i] - x[i];
            dir_norm2 += direction[i] * direction[i];
            g_dot_d += grad[i] * direction[i];
        }
        if (dir_norm2 <= 1e-30) break;  // projection fixed point; residual already reported

        q_dir = p.q.multiply(direction);
        double curvature = std::inner_product(direction.begin(), direction.end(), q_dir.begin(), 0.0);
        if (curvature < -1e-10 * std::max(q_scale * dir_norm2, 1.0))
            throw SolverError("block-simplex: matrix is not positive semidefinite");

        double t = 1.0;
        if (curvature > 0.0) t = std::clamp(-g_dot_d / curvature, 0.0, 1.0);
        if (t <= 0.0) break;  // cannot descend along a descent direction: numerics exhausted

        for (std::size_t i = 0; i < m; ++i) {
            x[i] += t * direction[i];
            grad[i] += t * q_dir[i];
        }

        // BB1 spectral step for the next trial point (Δx = tΔd cancels)
        const double base = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
        step = curvature > 0.0 ? std::clamp(dir_norm2 / curvature, base, std::max(1e8, base))
                               : base;
    }

    // exact per-block renormalization guards against drift over many steps
    for (const auto& block : p.blocks) {
        double sum = 0.0;
        for (std::size_t idx : block) sum += x[idx];
        if (sum > 0.0)
            for (std::size_t idx : block) x[idx] /= sum;
    }
    sol.objective = 0.5 * p.q.quad(x, x);
    detail::check_block_feasible(p, x);
    return sol;
}

// Pairwise (two-coordinate) descent on the maximally violating pair. Moves
// mass from the largest-gradient shrinkable coordinate to the
// smallest-gradient growable one; exact clipped step, bounds snapped exactly.
inline QPSolution solve_box_sum(const BoxSumQP& p, double tol, std::size_t max_iter) {
    detail::validate(p);
    const std::size_t m = p.k.size();

    QPSolution sol;
    sol.variables.assign(m, 1.0 / static_cast<double>(m));
    std::vector<double>& x = sol.variables;
    std::vector<double> grad = p.k.multiply(x);

    for (;;) {
        std::size_t i_up = m, j_dn = m;
        sol.kkt_residual = detail::box_kkt_residual(p, x, grad, &i_up, &j_dn);
        if (sol.kkt_residual <= tol) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= max_iter) break;
        ++sol.iterations;

        const double room_up = p.upper - x[i_up];
        const double room_dn = x[j_dn];
        const double t_max = std::min(room_up, room_dn);
        const double eta = p.k(i_up, i_up) + p.k(j_dn, j_dn) - 2.0 * p.k(i_up, j_dn);
        double t = eta > 0.0 ? std::min((grad[j_dn] - grad[i_up]) / eta, t_max) : t_max;
        if (t <= 0.0) break;

        if (t == t_max && room_up <= room_dn) {
            x[j_dn] -= room_up;
            x[i_up] = p.upper;  // snap exactly onto the bound
        } else if (t == t_max) {
            x[i_up] += room_dn;
            x[j_dn] = 0.0;
        } else {
            x[i_up] += t;
            x[j_dn] -= t;
        }
        for (std::size_t pnt = 0; pnt < m; ++pnt)
            grad[pnt] += t * (p.k(pnt, i_up) - p.k(pnt, j_dn));
        if (sol.iterations % 128 == 0) grad = p.k.multiply(x);  // refresh drift
    }

    sol.objective = 0.5 * p.k.quad(x, x);
    detail::check_box_feasible(p, x);
    return sol;
}

// Offset of the decision function: average of (Kα)_j over strictly interior
// support coordinates; if none is interior, over every coordinate with mass.
inline double recover_rho(const Matrix& k, const std::vector<double>& alpha, double upper,
                          double tol_bound) {
    if (alpha.size() != k.size()) throw SolverError("recover_rho: size mismatch");
    std::vector<double> y = k.multiply(alpha);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        if (alpha[j] > tol_bound && alpha[j] < upper - tol_bound) {
            sum += y[j];
            ++count;
        }
    if (count == 0) {
        for (std::size_t j = 0; j < alpha.size(); ++j)
            if (alpha[j] > tol_bound) {
                sum += y[j];
                ++count;
            }
    }
    if (count == 0) throw SolverError("recover_rho: no support coordinates");
    return sum / static_cast<double>(count);
}

namespace detail {

// Depth-by-depth exhaustive enumeration with incremental objective. On
// assigning x_q = v: obj += v·y_q + ½v²Q_qq and y_p += v·Q_pq for p > q,
// where y carries contributions of already-assigned coordinates. Each depth
// builds its state fresh from the parent's, so float error cannot accumulate
// across branches and no undo step exists.
struct GridSearch {
    const Matrix& q;
    std::size_t grid;  // units per unit sum
    std::vector<double> point;
    std::vector<double> obj_stack;
    std::vector<std::vector<double>> y_stack;
    double best_obj = std::numeric_limits<double>::infinity();
    std::vector<double> best_point;
    std::size_t leaves = 0;

    explicit GridSearch(const Matrix& matrix, std::size_t grid_units)
        : q(matrix),
          grid(grid_units),
          point(matrix.size(), 0.0),
          obj_stack(matrix.size() + 1, 0.0),
          y_stack(matrix.size() + 1, std::vector<double>(matrix.size(), 0.0)) {}

    void assign(std::size_t depth, std::size_t units) {
        const double v = static_cast<double>(units) / static_cast<double>(grid);
        point[depth] = v;
        const auto& y_cur = y_stack[depth];
        obj_stack[depth + 1] = obj_stack[depth] + v * y_cur[depth] + 0.5 * v * v * q(depth, depth);
        auto& y_next = y_stack[depth + 1];
        y_next = y_cur;
        if (v != 0.0)
            for (std::size_t p = depth + 1; p < q.size(); ++p) y_next[p] += v * q(depth, p);
    }

    void leaf() {
        ++leaves;
        if (obj_stack[q.size()] < best_obj) {
            best_obj = obj_stack[q.size()];
            best_point = point;
        }
    }
};

inline std::size_t grid_units(double grid_step) {
    if (!(grid_step > 0.0) || grid_step > 0.5)
        throw SolverError("grid oracle: grid_step must lie in (0, 0.5]");
    return static_cast<std::size_t>(std::llround(1.0 / grid_step));
}

}  // namespace detail

// Exhaustive grid minimizer over the block-simplex constraint set; intended
// for tests as the ground-truth reference (small problems only).
inline QPSolution brute_force_block_simplex(const BlockSimplexQP& p, double grid_step) {
    detail::validate(p);
    if (p.q.size() > 6) throw SolverError("grid oracle: dimension too large (max 6 variables)");
    const std::size_t grid = detail::grid_units(grid_step);

    // reorder so enumeration walks blocks contiguously
    std::vector<std::size_t> order;
    for (const auto& block : p.blocks)
        for (std::size_t idx : block) order.push_back(idx);
    Matrix qq(p.q.size());
    for (std::size_t a = 0; a < order.size(); ++a)
        for (std::size_t b = 0; b < order.size(); ++b) qq(a, b) = p.q(order[a], order[b]);

    detail::GridSearch search(qq, grid);
    std::vector<std::size_t> block_sizes;
    for (const auto& block : p.blocks) block_sizes.push_back(block.size());

    // recurse block by block; inside a block the last slot takes the remainder
    auto descend = [&](auto&& self, std::size_t block_idx, std::size_t depth) -> void {
        if (block_idx == block_sizes.size()) {
            search.leaf();
            return;
        }
        auto within = [&](auto&& inner, std::size_t pos, std::size_t left, std::size_t d) -> void {
            if (pos + 1 == block_sizes[block_idx]) {
                search.assign(d, left);
                self(self, block_idx + 1, d + 1);
                return;
            }
            for (std::size_t units = 0; units <= left; ++units) {
                search.assign(d, units);
                inner(inner, pos + 1, left - units, d + 1);
            }
        };
        within(within, 0, grid, depth);
    };
    descend(descend, 0, 0);

    QPSolution sol;
    sol.variables.assign(p.q.size(), 0.0);
    for (std::size_t a = 0; a < order.size(); ++a) sol.variables[order[a]] = search.best_point[a];
    sol.objective = search.best_obj;
    sol.iterations = search.leaves;
    sol.converged = true;
    sol.kkt_residual = detail::block_kkt_residual(p, sol.variables, p.q.multiply(sol.variables));
    detail::check_block_feasible(p, sol.variables);
    return sol;
}

// Exhaustive grid minimizer over {0 ≤ x ≤ upper, Σx = 1}.
inline QPSolution brute_force_box_sum(const BoxSumQP& p, double grid_step) {
    detail::validate(p);
    if (p.k.size() > 6) throw SolverError("grid oracle: dimension too large (max 6 variables)");
    const std::size_t grid = detail::grid_units(grid_step);
    const std::size_t cap = static_cast<std::size_t>(
        std::min(static_cast<double>(grid), std::floor(p.upper * static_cast<double>(grid) + 1e-9)));

    detail::GridSearch search(p.k, grid);
    auto descend = [&](auto&& self, std::size_t depth, std::size_t left) -> void {
        if (depth + 1 == p.k.size()) {
            if (left <= cap) {
                search.assign(depth, left);
                search.leaf();
            }
            return;
        }
        const std::size_t hi = std::min(left, cap);
        for (std::size_t units = 0; units <= hi; ++units) {
            search.assign(depth, units);
            self(self, depth + 1, left - units);
        }
    };
    descend(descend, 0, grid);
    if (search.leaves == 0) throw SolverError("grid oracle: no feasible grid point");

    QPSolution sol;
    sol.variables = search.best_point;
    sol.objective = search.best_obj;
    sol.iterations = search.leaves;
    sol.converged = true;
    sol.kkt_residual = detail::box_kkt_residual(p, sol.variables, p.k.multiply(sol.variables));
    detail::check_box_feasible(p, sol.variables);
    return sol;
}

}  // namespace pmi
