"""Hot numeric kernels: risk evaluation, projected fitting, feasibility search.

Everything in this module is written against the numba nopython subset and is
compiled when the selected backend is ``numba`` (see
:mod:`epoch_active._backend`); with ``EPOCH_ACTIVE_BACKEND=numpy`` the same
source runs uncompiled.

Conventions
-----------
* Parameter blocks are 2-D float64 arrays of shape ``(rows, d)``: a single
  row holding ``w`` for the binary class, ``K`` rows holding ``W`` otherwise.
* ``class_kind``: 0 = binary simplex scores ``((1+w.x)/2, (1-w.x)/2)``,
  1 = multiclass linear scores ``W x``.
* ``kind`` for losses/links: 0 = squared/identity, 1 = logistic/softmax.
* Quadratic neighbourhoods ``{P : sum_r (P-C)[r]^T A (P-C)[r] <= b}`` are
  passed via the eigendecomposition ``A = V diag(lam) V^T`` with ``lam >= 0``;
  ``Vt`` is a contiguous copy of ``V.T``.
"""

import numpy as np

from ._backend import jit_kernel

BINARY = 0
MULTICLASS = 1
SQUARED = 0
LOGISTIC = 1


@jit_kernel
def scores_at(params, x, class_kind):
    if class_kind == BINARY:
        a = np.dot(params[0], x)
        v = np.empty(2)
        v[0] = 0.5 * (1.0 + a)
        v[1] = 0.5 * (1.0 - a)
        return v
    return np.dot(params, x)


@jit_kernel
def scores_batch(params, X, class_kind):
    n = X.shape[0]
    if class_kind == BINARY:
        a = np.dot(X, params[0])
        out = np.empty((n, 2))
        for i in range(n):
            out[i, 0] = 0.5 * (1.0 + a[i])
            out[i, 1] = 0.5 * (1.0 - a[i])
        return out
    k = params.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        v = np.dot(params, X[i])
        for j in range(k):
            out[i, j] = v[j]
    return out


@jit_kernel
def link_probs(v, kind):
    if kind == SQUARED:
        return v.copy()
    m = np.max(v)
    e = np.exp(v - m)
    return e / np.sum(e)


@jit_kernel
def potential_value(v, kind):
    if kind == SQUARED:
        return 0.5 * np.sum(v * v)
    m = np.max(v)
    return m + np.log(np.sum(np.exp(v - m)))


@jit_kernel
def empirical_risk(params, X, Y, weights, class_kind, kind):
    total = 0.0
    for i in range(X.shape[0]):
        v = scores_at(params, X[i], class_kind)
        total += weights[i] * (potential_value(v, kind) - v[Y[i]])
    return total


@jit_kernel
def empirical_risk_grad(params, X, Y, weights, class_kind, kind):
    grad = np.zeros_like(params)
    total = 0.0
    for i in range(X.shape[0]):
        x = X[i]
        v = scores_at(params, x, class_kind)
        total += weights[i] * (potential_value(v, kind) - v[Y[i]])
        p = link_probs(v, kind)
        if class_kind == BINARY:
            g0 = p[0] - (1.0 if Y[i] == 0 else 0.0)
            g1 = p[1] - (1.0 if Y[i] == 1 else 0.0)
            grad[0] += (0.5 * weights[i] * (g0 - g1)) * x
        else:
            for c in range(params.shape[0]):
                gc = p[c] - (1.0 if Y[i] == c else 0.0)
                grad[c] += (weights[i] * gc) * x
    return total, grad


@jit_kernel
def project_ball(params, radius):
    norm = np.sqrt(np.sum(params * params))
    if norm <= radius:
        return params.copy()
    return params * (radius / norm)


@jit_kernel
def pgd_fit(params0, X, Y, weights, class_kind, kind, radius,
            max_iters, step0, backtracking, grad_tol):
    """Projected gradient descent on the weighted empirical surrogate risk.

    Returns ``(params, converged, iters)``.  Convergence is declared when the
    projected-gradient norm ``|P - proj(P - step*grad)| / step`` falls below
    ``grad_tol``.
    """
    params = project_ball(params0, radius)
    risk, grad = empirical_risk_grad(params, X, Y, weights, class_kind, kind)
    step = step0
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        trial = project_ball(params - step * grad, radius)
        diff = trial - params
        moved_sq = np.sum(diff * diff)
        if backtracking:
            trial_risk = empirical_risk(trial, X, Y, weights, class_kind, kind)
            # proximal sufficient-decrease condition
            while trial_risk > risk + np.sum(grad * diff) + 0.5 * moved_sq / step + 1e-15:
                step *= 0.5
                if step < 1e-18:
                    break
                trial = project_ball(params - step * grad, radius)
                diff = trial - params
                moved_sq = np.sum(diff * diff)
                trial_risk = empirical_risk(trial, X, Y, weights, class_kind, kind)
        gproj = np.sqrt(moved_sq) / step
        params = trial
        risk, grad = empirical_risk_grad(params, X, Y, weights, class_kind, kind)
        if gproj <= grad_tol:
            converged = True
            break
        if backtracking:
            step *= 2.0
    return params, converged, it


@jit_kernel
def quad_form(D, V, lam):
    """sum_r (D V)[r]^T diag(lam) (D V)[r]."""
    U = np.dot(D, V)
    q = 0.0
    for j in range(lam.shape[0]):
        s = 0.0
        for r in range(U.shape[0]):
            s += U[r, j] * U[r, j]
        q += lam[j] * s
    return q


@jit_kernel
def ellipsoid_project(D, V, Vt, lam, bound):
    """Euclidean projection of row-offsets D onto {quad_form <= bound}.

    Zero eigenvalues are flat directions and pass through unchanged.  For
    bound <= 0 the projection kills every curved component.
    """
    U = np.dot(D, V)
    q = 0.0
    for j in range(lam.shape[0]):
        s = 0.0
        for r in range(U.shape[0]):
            s += U[r, j] * U[r, j]
        q += lam[j] * s
    if q <= bound:
        return D.copy()
    if bound <= 0.0:
        for j in range(lam.shape[0]):
            if lam[j] > 0.0:
                for r in range(U.shape[0]):
                    U[r, j] = 0.0
        return np.dot(U, Vt)
    # Newton iteration on g(mu) = sum lam u^2 / (1 + mu lam)^2 - bound,
    # convex and decreasing in mu, so the iterates increase to the root.
    mu = 0.0
    for _ in range(200):
        g = -bound
        gp = 0.0
        for j in range(lam.shape[0]):
            lj = lam[j]
            if lj <= 0.0:
                continue
            s = 0.0
            for r in range(U.shape[0]):
                s += U[r, j] * U[r, j]
            den = 1.0 + mu * lj
            g += lj * s / (den * den)
            gp -= 2.0 * lj * lj * s / (den * den * den)
        if g <= bound * 1e-12 + 1e-15:
            break
        if gp >= 0.0:
            break
        mu -= g / gp
    for j in range(lam.shape[0]):
        scale = 1.0 / (1.0 + mu * lam[j])
        for r in range(U.shape[0]):
            U[r, j] *= scale
    return np.dot(U, Vt)


@jit_kernel
def project_intersection(P, C, V, Vt, lam, bound, radius, max_iters, tol):
    """Dykstra alternating projection onto ball(radius) ∩ ellipsoid(C, lam, bound)."""
    x = project_ball(P, radius)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iters):
        y = C + ellipsoid_project(x + p - C, V, Vt, lam, bound)
        p = x + p - y
        xn = project_ball(y + q, radius)
        q = y + q - xn
        d = xn - x
        moved = np.sqrt(np.sum(d * d))
        x = xn
        if moved <= tol:
            break
    return x


@jit_kernel
def linear_bounds(G, C, V, lam, bound, radius):
    """Upper bounds for max <G, P> over ball(radius) and ellipsoid(C, lam, bound).

    Returns (ball_max, ellipsoid_max); each alone bounds the intersection max
    from above.  ellipsoid_max is +inf when G has a component along a flat
    direction of the quadratic.
    """
    gnorm = np.sqrt(np.sum(G * G))
    ball_max = radius * gnorm
    lam_max = 0.0
    for j in range(lam.shape[0]):
        if lam[j] > lam_max:
            lam_max = lam[j]
    if lam_max <= 0.0:
        return ball_max, np.inf
    Gt = np.dot(G, V)
    null_cut = 1e-12 * lam_max
    s = 0.0
    has_null = False
    for j in range(lam.shape[0]):
        cj = 0.0
        for r in range(Gt.shape[0]):
            cj += Gt[r, j] * Gt[r, j]
        if lam[j] <= null_cut:
            if cj > 1e-20 * gnorm * gnorm:
                has_null = True
        else:
            s += cj / lam[j]
    if has_null:
        return ball_max, np.inf
    ell_max = np.sum(G * C) + np.sqrt(bound * s)
    return ball_max, ell_max


@jit_kernel
def linear_candidates(G, C, V, Vt, lam, bound, radius):
    """Raw argmax points of <G, .> over the ball and over the ellipsoid.

    Returns a (2, rows, d) array; either candidate may be infeasible for the
    other constraint and is meant to be checked or projected by the caller.
    """
    rows = C.shape[0]
    d = C.shape[1]
    out = np.zeros((2, rows, d))
    gnorm = np.sqrt(np.sum(G * G))
    if gnorm > 0.0:
        scale = radius / gnorm
        for r in range(rows):
            for j in range(d):
                out[0, r, j] = scale * G[r, j]
    lam_max = 0.0
    for j in range(lam.shape[0]):
        if lam[j] > lam_max:
            lam_max = lam[j]
    Gt = np.dot(G, V)
    U = np.zeros_like(Gt)
    s = 0.0
    if lam_max > 0.0:
        null_cut = 1e-12 * lam_max
        for j in range(lam.shape[0]):
            if lam[j] > null_cut:
                cj = 0.0
                for r in range(rows):
                    cj += Gt[r, j] * Gt[r, j]
                s += cj / lam[j]
        if s > 0.0:
            scale = np.sqrt(bound / s)
            for j in range(lam.shape[0]):
                if lam[j] > null_cut:
                    for r in range(rows):
                        U[r, j] = scale * Gt[r, j] / lam[j]
    delta = np.dot(U, Vt)
    for r in range(rows):
        for j in range(d):
            out[1, r, j] = C[r, j] + delta[r, j]
    return out


@jit_kernel
def ascend_linear(G, C, V, Vt, lam, bound, radius, starts,
                  max_iters, stall_tol, dyk_iters, dyk_tol):
    """Projected gradient ascent of the linear objective <G, P> over the
    intersection.  Returns (best_value, certified) where certified means every
    start reached a projection fixed point (global optimum for this concave
    problem, up to projection tolerance).
    """
    gnorm = np.sqrt(np.sum(G * G))
    if gnorm <= 0.0:
        P = project_intersection(C, C, V, Vt, lam, bound, radius, dyk_iters, dyk_tol)
        return np.sum(G * P), True
    step0 = 2.0 * radius / gnorm
    best = -np.inf
    all_stalled = True
    for si in range(starts.shape[0]):
        P = project_intersection(starts[si], C, V, Vt, lam, bound, radius,
                                 dyk_iters, dyk_tol)
        val = np.sum(G * P)
        step = step0
        stalled = False
        for _ in range(max_iters):
            Pn = project_intersection(P + step * G, C, V, Vt, lam, bound, radius,
                                      dyk_iters, dyk_tol)
            vn = np.sum(G * Pn)
            if vn < val - 1e-15:
                step *= 0.5
                if step < 1e-12 * step0:
                    stalled = True
                    break
                continue
            d = Pn - P
            moved = np.sqrt(np.sum(d * d))
            gain = vn - val
            P = Pn
            val = vn
            if moved <= stall_tol and gain <= 1e-13 * (1.0 + abs(val)):
                stalled = True
                break
        if not stalled:
            all_stalled = False
        if val > best:
            best = val
    return best, all_stalled


@jit_kernel
def _dual_inner(G_t, C_t, lam, beta, radius):
    """max_{|P| <= radius} <G, P> - beta * sum_j lam_j (P - C)_j^2, in the
    eigenbasis (G_t, C_t are (rows, d) transformed arrays).

    Separable per coordinate given the ball multiplier nu; nu is located by
    bisection on the squared-norm residual, which is decreasing in nu.
    """
    rows = G_t.shape[0]
    d = G_t.shape[1]

    # helper-free: squared norm of the unconstrained-per-nu solution
    def_norm_sq = 0.0
    needs_nu = False
    for r in range(rows):
        for j in range(d):
            a = 2.0 * beta * lam[j]
            num = G_t[r, j] + a * C_t[r, j]
            if a <= 0.0:
                if abs(num) > 0.0:
                    needs_nu = True
            else:
                p = num / a
                def_norm_sq += p * p
    nu = 0.0
    if needs_nu or def_norm_sq > radius * radius:
        lo = 0.0
        hi = 1.0
        for _ in range(200):
            s = 0.0
            for r in range(rows):
                for j in range(d):
                    a = 2.0 * (beta * lam[j] + hi)
                    num = G_t[r, j] + 2.0 * beta * lam[j] * C_t[r, j]
                    p = num / a
                    s += p * p
            if s <= radius * radius:
                break
            hi *= 4.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            s = 0.0
            for r in range(rows):
                for j in range(d):
                    a = 2.0 * (beta * lam[j] + mid)
                    num = G_t[r, j] + 2.0 * beta * lam[j] * C_t[r, j]
                    if a <= 0.0:
                        s = np.inf
                        break
                    p = num / a
                    s += p * p
                if s == np.inf:
                    break
            if s > radius * radius:
                lo = mid
            else:
                hi = mid
        nu = hi
    val = 0.0
    for r in range(rows):
        for j in range(d):
            a = 2.0 * (beta * lam[j] + nu)
            num = G_t[r, j] + 2.0 * beta * lam[j] * C_t[r, j]
            if a <= 0.0:
                p = 0.0
            else:
                p = num / a
            dcj = p - C_t[r, j]
            val += G_t[r, j] * p - beta * lam[j] * dcj * dcj
    return val


@jit_kernel
def _dual_primal_point(G_t, C_t, lam, beta, radius):
    """Argmax of the inner Lagrangian at multiplier beta, in the eigenbasis."""
    rows = G_t.shape[0]
    d = G_t.shape[1]
    P = np.zeros((rows, d))
    def_norm_sq = 0.0
    needs_nu = False
    for r in range(rows):
        for j in range(d):
            a = 2.0 * beta * lam[j]
            num = G_t[r, j] + a * C_t[r, j]
            if a <= 0.0:
                if abs(num) > 0.0:
                    needs_nu = True
            else:
                p = num / a
                def_norm_sq += p * p
    nu = 0.0
    if needs_nu or def_norm_sq > radius * radius:
        lo = 0.0
        hi = 1.0
        for _ in range(200):
            s = 0.0
            for r in range(rows):
                for j in range(d):
                    a = 2.0 * (beta * lam[j] + hi)
                    num = G_t[r, j] + 2.0 * beta * lam[j] * C_t[r, j]
                    p = num / a
                    s += p * p
            if s <= radius * radius:
                break
            hi *= 4.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            s = 0.0
            bad = False
            for r in range(rows):
                for j in range(d):
                    a = 2.0 * (beta * lam[j] + mid)
                    num = G_t[r, j] + 2.0 * beta * lam[j] * C_t[r, j]
                    if a <= 0.0:
                        bad = True
                        break
                    p = num / a
                    s += p * p
                if bad:
                    break
            if bad or s > radius * radius:
                lo = mid
            else:
                hi = mid
        nu = hi
    for r in range(rows):
        for j in range(d):
            a = 2.0 * (beta * lam[j] + nu)
            num = G_t[r, j] + 2.0 * beta * lam[j] * C_t[r, j]
            if a <= 0.0:
                P[r, j] = 0.0
            else:
                P[r, j] = num / a
    return P


@jit_kernel
def linear_dual_bound(G, C, V, Vt, lam, bound, radius):
    """Certified upper bound on max <G, P> over ball(radius) ∩ ellipsoid,
    plus a primal reconstruction.

    Weak duality in the ellipsoid multiplier beta: every beta >= 0 yields an
    upper bound; the bound is convex in beta and is minimized by a coarse
    geometric sweep followed by ternary refinement.  Returns
    ``(upper, P_hat)`` where P_hat is the inner argmax at the best beta
    (near-feasible at the optimum; callers should project it).
    """
    G_t = np.dot(G, V)
    C_t = np.dot(C, V)
    gnorm = np.sqrt(np.sum(G * G))
    lam_max = 0.0
    for j in range(lam.shape[0]):
        if lam[j] > lam_max:
            lam_max = lam[j]
    if lam_max <= 0.0 or gnorm <= 0.0:
        # ellipsoid vacuous or constant objective: ball argmax
        if gnorm > 0.0:
            return radius * gnorm, G * (radius / gnorm)
        return 0.0, C.copy()
    scale = gnorm / (lam_max * radius + 1e-30)
    best = radius * gnorm  # beta = 0
    best_beta = 0.0
    beta = scale * 1e-6
    for _ in range(45):
        val = _dual_inner(G_t, C_t, lam, beta, radius) + beta * bound
        if val < best:
            best = val
            best_beta = beta
        beta *= 4.0
    lo = best_beta / 4.0
    hi = best_beta * 4.0
    if best_beta == 0.0:
        lo = 0.0
        hi = scale * 1e-6
    beta_star = best_beta
    for _ in range(80):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        v1 = _dual_inner(G_t, C_t, lam, m1, radius) + m1 * bound
        v2 = _dual_inner(G_t, C_t, lam, m2, radius) + m2 * bound
        if v1 < best:
            best = v1
            beta_star = m1
        if v2 < best:
            best = v2
            beta_star = m2
        if v1 <= v2:
            hi = m2
        else:
            lo = m1
    P_t = _dual_primal_point(G_t, C_t, lam, beta_star, radius)
    return best, np.dot(P_t, Vt)


@jit_kernel
def class_gap_value(P, x, class_kind, kind, c, c_star):
    v = scores_at(P, x, class_kind)
    p = link_probs(v, kind)
    return p[c] - p[c_star]


@jit_kernel
def class_gap_grad(P, x, class_kind, kind, c, c_star):
    v = scores_at(P, x, class_kind)
    p = link_probs(v, kind)
    k = p.shape[0]
    gv = np.zeros(k)
    if kind == SQUARED:
        gv[c] = 1.0
        gv[c_star] -= 1.0
    else:
        for j in range(k):
            dc = 1.0 if j == c else 0.0
            ds = 1.0 if j == c_star else 0.0
            gv[j] = p[c] * (dc - p[j]) - p[c_star] * (ds - p[j])
    G = np.zeros_like(P)
    if class_kind == BINARY:
        G[0] = (0.5 * (gv[0] - gv[1])) * x
    else:
        for r in range(P.shape[0]):
            G[r] = gv[r] * x
    return G


@jit_kernel
def ascend_class_gap(C, V, Vt, lam, bound, radius, x, class_kind, kind, c, c_star,
                     starts, max_iters, stall_tol, dyk_iters, dyk_tol, step0):
    """Multi-start projected ascent of phi(f(x))[c] - phi(f(x))[c_star].

    Used for the softmax link where the objective is not concave in the
    parameters; certified=True only means every start stalled at a fixed
    point, not global optimality.
    """
    best = -np.inf
    all_stalled = True
    for si in range(starts.shape[0]):
        P = project_intersection(starts[si], C, V, Vt, lam, bound, radius,
                                 dyk_iters, dyk_tol)
        val = class_gap_value(P, x, class_kind, kind, c, c_star)
        step = step0
        stalled = False
        for _ in range(max_iters):
            G = class_gap_grad(P, x, class_kind, kind, c, c_star)
            Pn = project_intersection(P + step * G, C, V, Vt, lam, bound, radius,
                                      dyk_iters, dyk_tol)
            vn = class_gap_value(Pn, x, class_kind, kind, c, c_star)
            if vn < val - 1e-15:
                step *= 0.5
                if step < 1e-14:
                    stalled = True
                    break
                continue
            d = Pn - P
            moved = np.sqrt(np.sum(d * d))
            gain = vn - val
            P = Pn
            val = vn
            if moved <= stall_tol and gain <= 1e-13 * (1.0 + abs(val)):
                stalled = True
                break
        if not stalled:
            all_stalled = False
        if val > best:
            best = val
    return best, all_stalled


@jit_kernel
def score_dist_value(P, Pstar, x, class_kind):
    """||f_P(x) - f_Pstar(x)||_2."""
    if class_kind == BINARY:
        a = np.dot(P[0] - Pstar[0], x)
        return abs(a) / np.sqrt(2.0)
    u = np.dot(P - Pstar, x)
    return np.sqrt(np.sum(u * u))


@jit_kernel
def ascend_score_dist(Pstar, V, Vt, lam, bound, radius, x, class_kind,
                      starts, max_iters, stall_tol, dyk_iters, dyk_tol, step0):
    """Multi-start projected ascent of ||f_P(x) - f_Pstar(x)||_2 over
    ball(radius) ∩ ellipsoid(Pstar, lam, bound)."""
    best = -np.inf
    all_stalled = True
    for si in range(starts.shape[0]):
        P = project_intersection(starts[si], Pstar, V, Vt, lam, bound, radius,
                                 dyk_iters, dyk_tol)
        val = score_dist_value(P, Pstar, x, class_kind)
        step = step0
        stalled = False
        for _ in range(max_iters):
            u = np.dot(P - Pstar, x)
            unorm = np.sqrt(np.sum(u * u))
            G = np.zeros_like(P)
            if unorm > 1e-15:
                for r in range(P.shape[0]):
                    G[r] = (u[r] / unorm) * x
            else:
                for r in range(P.shape[0]):
                    G[r] = x
            Pn = project_intersection(P + step * G, Pstar, V, Vt, lam, bound,
                                      radius, dyk_iters, dyk_tol)
            vn = score_dist_value(Pn, Pstar, x, class_kind)
            if vn < val - 1e-15:
                step *= 0.5
                if step < 1e-14:
                    stalled = True
                    break
                continue
            d = Pn - P
            moved = np.sqrt(np.sum(d * d))
            gain = vn - val
            P = Pn
            val = vn
            if moved <= stall_tol and gain <= 1e-13 * (1.0 + abs(val)):
                stalled = True
                break
        if not stalled:
            all_stalled = False
        if val > best:
            best = val
    return best, all_stalled


@jit_kernel
def sum_score_dist_sq(P, Q, X, class_kind):
    """sum_i ||f_P(x_i) - f_Q(x_i)||_2^2."""
    total = 0.0
    for i in range(X.shape[0]):
        if class_kind == BINARY:
            a = np.dot(P[0] - Q[0], X[i])
            total += 0.5 * a * a
        else:
            u = np.dot(P - Q, X[i])
            total += np.sum(u * u)
    return total
