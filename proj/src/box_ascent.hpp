#pragma once

// Internal box-constrained concave maximizer shared by the pessimistic DPO
// fit and the baselines. With a Hessian callback it runs projected Newton
// with an active set; otherwise projected gradient with Barzilai-Borwein
// steps. Both paths backtrack, so the objective never decreases across
// iterations.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace pepo::internal {

struct AscentOutcome {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;  // projected-gradient sup norm at exit
  long iterations = 0;
  bool converged = false;
};

struct AscentProblem {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  // optional: fills the dense row-major Hessian of the objective
  std::function<void(std::span<const double>, std::span<double>)> hessian;
  double lo = 0.0;
  double hi = 0.0;
  // Optional gauge canonicalization applied before the box clamp (e.g. the
  // reward-MLE shift of the minimum observed value to zero). Must leave the
  // objective unchanged.
  std::function<void(std::span<double>)> gauge;
};

inline double projected_grad_norm(std::span<const double> x, std::span<const double> g,
                                  double lo, double hi) {
  double norm = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double pg = g[i];
    if (x[i] >= hi && g[i] > 0.0) pg = 0.0;
    if (x[i] <= lo && g[i] < 0.0) pg = 0.0;
    norm = std::max(norm, std::abs(pg));
  }
  return norm;
}

// Dense linear solve with partial pivoting; also used by the closed-form
// member fit for the tiny per-component least-squares systems.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const size_t n = b.size();
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    const double d = a[col][col];
    if (std::abs(d) < 1e-300) continue;  // singular direction, leave at zero
    for (size_t r = col + 1; r < n; ++r) {
      const double factor = a[r][col] / d;
      if (factor == 0.0) continue;
      for (size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (size_t c = ri + 1; c < n; ++c) acc -= a[ri][c] * x[c];
    x[ri] = std::abs(a[ri][ri]) < 1e-300 ? 0.0 : acc / a[ri][ri];
  }
  return x;
}

inline AscentOutcome maximize_box(const AscentProblem& p, std::vector<double> x0,
                                  double tol, long max_iter) {
  AscentOutcome out;
  std::vector<double> x = std::move(x0);
  const size_t n = x.size();
  auto project = [&](std::vector<double>& v) {
    if (p.gauge) p.gauge(v);
    for (double& vi : v) vi = std::min(std::max(vi, p.lo), p.hi);
  };
  project(x);

  std::vector<double> g(n), cand(n);
  double f = p.value(x);
  p.gradient(x, g);

  // backtracking from a proposed step; returns true when it moved uphill
  auto try_direction = [&](const std::vector<double>& d, double t0) {
    double t = t0;
    while (t > 1e-18) {
      for (size_t i = 0; i < n; ++i) cand[i] = x[i] + t * d[i];
      project(cand);
      const double f_new = p.value(cand);
      if (f_new >= f && cand != x) {
        x = cand;
        f = f_new;
        return true;
      }
      if (f_new == f && cand == x) return false;  // pinned against the box
      t *= 0.5;
    }
    return false;
  };

  long it = 0;
  if (p.hessian) {
    // projected Newton with an active set
    std::vector<double> h(n * n), d(n);
    int polish_steps = 0;
    int stagnant = 0;
    double best_pg = std::numeric_limits<double>::infinity();
    for (; it < max_iter; ++it) {
      const double pg = projected_grad_norm(x, g, p.lo, p.hi);
      if (pg <= tol) {
        out.converged = true;
        break;
      }
      // the gradient of a large-count objective bottoms out at the rounding
      // noise floor; stop once iterations no longer reduce it
      if (pg < 0.5 * best_pg) {
        best_pg = pg;
        stagnant = 0;
      } else if (++stagnant >= 20) {
        break;
      }
      std::vector<size_t> free_idx;
      for (size_t i = 0; i < n; ++i) {
        const bool at_hi = x[i] >= p.hi - 1e-14 && g[i] > 0.0;
        const bool at_lo = x[i] <= p.lo + 1e-14 && g[i] < 0.0;
        if (!at_hi && !at_lo) free_idx.push_back(i);
      }
      bool moved = false;
      double step_norm = 0.0;
      if (!free_idx.empty()) {
        p.hessian(x, h);
        const size_t m = free_idx.size();
        // solve (-H + eps I) d = g on the free set; eps regularizes the
        // all-ones gauge direction of pairwise objectives
        std::vector<std::vector<double>> a(m, std::vector<double>(m));
        std::vector<double> rhs(m);
        double scale = 1e-8;
        for (size_t r = 0; r < m; ++r) {
          scale = std::max(scale, std::abs(h[free_idx[r] * n + free_idx[r]]));
        }
        const double eps = 1e-10 * scale;
        for (size_t r = 0; r < m; ++r) {
          for (size_t c = 0; c < m; ++c) {
            a[r][c] = -h[free_idx[r] * n + free_idx[c]] + (r == c ? eps : 0.0);
          }
          rhs[r] = g[free_idx[r]];
        }
        const std::vector<double> step = solve_dense(std::move(a), std::move(rhs));
        std::fill(d.begin(), d.end(), 0.0);
        double descent = 0.0;
        for (size_t r = 0; r < m; ++r) {
          d[free_idx[r]] = step[r];
          descent += step[r] * g[free_idx[r]];
          step_norm = std::max(step_norm, std::abs(step[r]));
        }
        if (descent > 0.0) {
          moved = try_direction(d, 1.0);
          if (moved) polish_steps = 0;
          // Near the optimum the objective is flat to machine precision long
          // before the gradient test passes; take the (tiny) pure Newton step
          // anyway, a bounded number of times.
          if (!moved && step_norm <= 1e-3 * (p.hi - p.lo) && polish_steps < 4) {
            for (size_t i = 0; i < n; ++i) cand[i] = x[i] + d[i];
            project(cand);
            if (cand != x) {
              x = cand;
              f = p.value(x);
              moved = true;
              ++polish_steps;
            }
          }
        }
      }
      if (!moved) {
        // gradient fallback keeps progress when the Newton step is rejected
        double gn = 0.0;
        for (double gi : g) gn += gi * gi;
        moved = try_direction(g, 1.0 / (1.0 + std::sqrt(gn)));
        if (moved) polish_steps = 0;
      }
      if (!moved) break;  // numerically flat
      p.gradient(x, g);
    }
  } else {
    // projected gradient with BB steps
    std::vector<double> x_prev(n), g_prev(n);
    double step;
    {
      double gn = 0.0;
      for (double gi : g) gn += gi * gi;
      step = 1.0 / (1.0 + std::sqrt(gn));
    }
    int stagnant = 0;
    double best_pg = std::numeric_limits<double>::infinity();
    for (; it < max_iter; ++it) {
      const double pg = projected_grad_norm(x, g, p.lo, p.hi);
      if (pg <= tol) {
        out.converged = true;
        break;
      }
      if (pg < 0.5 * best_pg) {
        best_pg = pg;
        stagnant = 0;
      } else if (++stagnant >= 200) {
        break;
      }
      x_prev = x;
      g_prev = g;
      if (!try_direction(g, step)) break;
      p.gradient(x, g);
      double sy = 0.0, ss = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double s = x[i] - x_prev[i];
        const double y = g[i] - g_prev[i];
        ss += s * s;
        sy += s * y;
      }
      step = (sy < 0.0 && ss > 0.0) ? ss / (-sy) : std::max(step * 2.0, 1e-12);
      step = std::min(step, 1e8);
    }
  }
  p.gradient(x, g);
  out.grad_norm = projected_grad_norm(x, g, p.lo, p.hi);
  if (out.grad_norm <= tol) out.converged = true;
  out.value = f;
  out.iterations = it;
  out.x = std::move(x);
  return out;
}

}  // namespace pepo::internal
