"""Independent reference implementations used as test oracles.

Written with plain loops and the math module wherever practical so they
share no code path with the package.
"""

import math

import numpy as np


def lag1_direct(a):
    a = [float(v) for v in a]
    m = sum(a) / len(a)
    den = sum((v - m) ** 2 for v in a)
    if den == 0:
        return 0.0
    num = sum((a[t] - m) * (a[t - 1] - m) for t in range(1, len(a)))
    return num / den


def sigmoid_dense_grid(row, q_lo=-5.0, q_hi=5.0, phi_lo=0.0, phi_hi=15.0, step=1e-3, coarse=0.05):
    """Two-stage grid minimizer of the normalized-cumulative sigmoid fit.

    A coarse pass over the whole box, then a 1e-3 pass in a small window
    around the coarse optimum.
    """
    c = np.cumsum(np.asarray(row, dtype=float))
    y = c / c[-1]
    t = np.arange(1, len(y) + 1, dtype=float)

    def best(qs, ps):
        Q, P = np.meshgrid(qs, ps, indexing="ij")
        pred = 1.0 / (1.0 + np.exp(-Q[..., None] * (t - P[..., None])))
        obj = ((pred - y) ** 2).sum(axis=-1)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        return qs[i], ps[j], obj[i, j]

    q0, p0, _ = best(np.arange(q_lo, q_hi + coarse, coarse), np.arange(phi_lo, phi_hi + coarse, coarse))
    return best(np.arange(q0 - 2 * coarse, q0 + 2 * coarse, step),
                np.arange(p0 - 2 * coarse, p0 + 2 * coarse, step))


def silhouette_brute(X, labels):
    X = np.asarray(X, dtype=float)
    n = len(X)
    out = []
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            out.append(0.0)
            continue
        dist = lambda j: math.sqrt(sum((X[i, k] - X[j, k]) ** 2 for k in range(X.shape[1])))
        a = sum(dist(j) for j in same) / len(same)
        b = min(
            sum(dist(j) for j in range(n) if labels[j] == c) / sum(1 for j in range(n) if labels[j] == c)
            for c in set(labels) if c != labels[i]
        )
        m = max(a, b)
        out.append(0.0 if m == 0 else (b - a) / m)
    return sum(out) / n


def student_t_direct(f, centers):
    kern = [1.0 / (1.0 + sum((fi - ci) ** 2 for fi, ci in zip(f, c))) for c in centers]
    s = sum(kern)
    return [k / s for k in kern]


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def lstm_direct(W, b, xs):
    """Scalar-loop LSTM recurrence; ``W`` is (H + in, 4H) over ``[h, x]``, gates i, f, c, o."""
    H = W.shape[1] // 4
    h = [0.0] * H
    c = [0.0] * H
    hs = []
    for x in xs:
        z_in = list(h) + [float(v) for v in x]
        z = [b[j] + sum(z_in[r] * W[r, j] for r in range(len(z_in))) for j in range(4 * H)]
        i = [_sig(z[j]) for j in range(H)]
        f = [_sig(z[H + j]) for j in range(H)]
        g = [math.tanh(z[2 * H + j]) for j in range(H)]
        o = [_sig(z[3 * H + j]) for j in range(H)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(H)]
        h = [o[j] * math.tanh(c[j]) for j in range(H)]
        hs.append(h)
    return np.array(h), np.array(hs)


def attention_direct(v, S):
    scores = [sum(vi * si for vi, si in zip(v, s)) for s in S]
    m = max(scores)
    e = [math.exp(x - m) for x in scores]
    w = [x / sum(e) for x in e]
    u = [sum(w[k] * S[k][j] for k in range(len(S))) for j in range(len(S[0]))]
    return np.array(w), np.array(u)


def joint_loss_direct(yhat, w, y, Q, lam):
    eps = 1e-12
    lc = 0.0
    for p, t in zip(yhat, y):
        p = min(max(p, eps), 1 - eps)
        lc += -(t * math.log(p) + (1 - t) * math.log(1 - p))
    lt = 0.0
    for wr, qr in zip(w, Q):
        for wk, qk in zip(wr, qr):
            lt += -qk * math.log(min(max(wk, eps), 1 - eps))
    return lc + lam * lt, lc, lt


def irls_logreg(X, y, alpha, iters=100):
    """Newton / IRLS for mean log loss + alpha/2 |w|^2 with an unpenalized bias."""
    n, p = X.shape
    A = np.column_stack([X, np.ones(n)])
    beta = np.zeros(p + 1)
    R = alpha * np.eye(p + 1)
    R[-1, -1] = 0.0
    for _ in range(iters):
        mu = 1.0 / (1.0 + np.exp(-A @ beta))
        g = A.T @ (mu - y) / n + R @ beta
        Hm = (A * (mu * (1 - mu))[:, None]).T @ A / n + R
        step = np.linalg.solve(Hm, g)
        beta -= step
        if np.abs(step).max() < 1e-14:
            break
    return beta[:-1], beta[-1]


def finite_difference(f, params, eps=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of every block."""
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            fp = f()
            arr[idx] = old - eps
            fm = f()
            arr[idx] = old
            g[idx] = (fp - fm) / (2 * eps)
        out[name] = g
    return out


def block_relative_error(analytic, numeric):
    """Largest entry-wise gap relative to the block's largest gradient entry."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def planted_blobs(n_blobs, per_blob=30, sigma=0.1, separation=10.0, dim=2, seed=0):
    """Gaussian blobs whose centers are at least ``separation`` apart.

    Returns ``(X, planted_centers, truth)`` where ``truth`` is the brute-force
    nearest-planted-center label of every point.
    """
    rng = np.random.default_rng(seed)
    centers = []
    while len(centers) < n_blobs:
        c = rng.uniform(0, separation * n_blobs, size=dim)
        if all(np.linalg.norm(c - o) >= separation for o in centers):
            centers.append(c)
    centers = np.array(centers)
    X = np.concatenate([c + sigma * rng.standard_normal((per_blob, dim)) for c in centers])
    truth = [min(range(n_blobs), key=lambda j: np.linalg.norm(x - centers[j])) for x in X]
    return X, centers, np.array(truth)


def same_partition(a, b):
    """True when two labelings agree up to a relabeling."""
    pairs = set(zip(a, b))
    return len(pairs) == len(set(a)) == len(set(b))
