"""Brute-force references that enumerate risk sets directly.

Nothing here touches the scan machinery: inputs are raw (unsorted) arrays and
every risk set is formed by pairwise comparison of times.
"""
import numpy as np


def km_censoring_left(time, status):
    """Return a function t -> G(t-) by looping over distinct censoring times."""
    time = np.asarray(time, float)
    status = np.asarray(status)
    cens_times = sorted(set(time[status == 0].tolist()))
    factors = []
    for s in cens_times:
        n_risk = np.sum(time >= s)
        d = np.sum((time == s) & (status == 0))
        factors.append((s, 1.0 - d / n_risk))

    def g_left(t):
        val = 1.0
        for s, f in factors:
            if s < t:
                val *= f
        return val

    return g_left


def risk_weights(time, status, model):
    """N x N matrix W[i, r]: weight of subject r in the risk set at Y_i."""
    time = np.asarray(time, float)
    status = np.asarray(status)
    n = time.size
    at_risk = (time[None, :] >= time[:, None]).astype(float)
    if model == "cox":
        return at_risk
    g_left = km_censoring_left(time, status)
    W = np.zeros((n, n))
    for i in range(n):
        t = time[i]
        gi = g_left(t)
        for r in range(n):
            if time[r] >= t:
                W[i, r] = 1.0
            elif status[r] == 2:
                # competing event observed before t: C_r >= T_r holds, weight G(t-)/G(Y_r-)
                W[i, r] = gi / g_left(time[r])
            # censored before t: I(C_r >= min(T_r, t)) = 0; primary events before t are not at risk
    return W


def loglik_grad_hess(time, status, X, beta, model="cox"):
    """Log-likelihood, full gradient and full Hessian by enumeration."""
    X = np.asarray(X, float)
    beta = np.asarray(beta, float)
    W = risk_weights(time, status, model)
    e = np.exp(X @ beta)
    ll = 0.0
    p = X.shape[1]
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    for i in np.flatnonzero(np.asarray(status) == 1):
        w = W[i] * e
        s0 = w.sum()
        s1 = w @ X
        s2 = (X * w[:, None]).T @ X
        ll += X[i] @ beta - np.log(s0)
        mean = s1 / s0
        grad += X[i] - mean
        hess -= s2 / s0 - np.outer(mean, mean)
    return ll, grad, hess


def newton_maximize(time, status, X, model="cox", tol=1e-12, max_iter=100):
    """Damped full Newton with step halving on the enumerated objective."""
    beta = np.zeros(X.shape[1])
    ll, g, H = loglik_grad_hess(time, status, X, beta, model)
    for _ in range(max_iter):
        step = np.linalg.solve(H, -g)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_c, g_c, H_c = loglik_grad_hess(time, status, X, cand, model)
            if ll_c >= ll - 1e-12 or t < 1e-10:
                break
            t /= 2
        beta, ll, g, H = cand, ll_c, g_c, H_c
        if np.max(np.abs(g)) < tol:
            break
    return beta, ll, g


def random_survival(rng, n, p, density=0.05, model="cox", ties=False, dense_frac=0.0,
                    values="indicator", beta_scale=0.5):
    """Random outcomes and design; optional rounding to create tied times."""
    X = (rng.random((n, p)) < density).astype(float)
    if values == "mixed":
        vals = rng.normal(size=(n, p))
        X = np.where(X != 0, vals, 0.0)
    ndense = int(round(dense_frac * p))
    if ndense:
        X[:, :ndense] = rng.normal(size=(n, ndense))
    time = rng.exponential(size=n)
    if ties:
        time = np.round(time, 1)
    if model == "cox":
        status = (rng.random(n) < 0.7).astype(int)
    else:
        status = rng.choice([0, 1, 2], size=n, p=[0.3, 0.4, 0.3])
    beta = rng.normal(scale=beta_scale, size=p)
    return time, status, X, beta
