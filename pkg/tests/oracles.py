"""Independent reference computations used as test oracles.

Nothing here imports the package's numerical code paths.
"""

import numpy as np


def operating_points(pos, neg, accept="ge"):
    """(threshold, FAR, FRR) by direct counting at every candidate threshold.

    Candidates are all score values, all midpoints between neighbouring
    distinct values, and one value beyond each end of the range.  With
    ``accept="ge"`` a trial is accepted when score >= t; ``"gt"`` uses the
    strict rule score > t.  Candidates are visited in increasing order.
    """
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    values = np.unique(np.concatenate([pos, neg]))
    mids = (values[:-1] + values[1:]) / 2
    cands = np.unique(np.concatenate([values, mids, [values[0] - 1.0, values[-1] + 1.0]]))
    # direct counting against every candidate (quadratic, no sorting tricks)
    if accept == "ge":
        far = (neg[None, :] >= cands[:, None]).mean(axis=1)
        frr = (pos[None, :] < cands[:, None]).mean(axis=1)
    else:
        far = (neg[None, :] > cands[:, None]).mean(axis=1)
        frr = (pos[None, :] <= cands[:, None]).mean(axis=1)
    return list(zip(cands.tolist(), far.tolist(), frr.tolist()))


def brute_force_eer(pos, neg, accept="ge"):
    """EER from the threshold sweep, interpolating across the FAR = FRR crossing."""
    points = operating_points(pos, neg, accept)
    prev = None
    for t, far, frr in points:
        if far - frr <= 0:
            if far == frr:
                return far
            _, far0, frr0 = prev
            d0, d1 = far0 - frr0, far - frr
            alpha = d0 / (d0 - d1)
            return far0 + alpha * (far - far0)
        prev = (t, far, frr)
    raise AssertionError("sweep never crossed")


def far_frr_at(pos, neg, t):
    far = np.mean(np.asarray(neg) >= t)
    frr = np.mean(np.asarray(pos) < t)
    return float(far), float(frr)


def occl_double_loop(emb):
    emb = [np.asarray(e, dtype=float) for e in emb]
    total = 0.0
    for i, a in enumerate(emb):
        for j, b in enumerate(emb):
            if i != j:
                total += float(np.sum((a - b) ** 2))
    return total


def mean_and_cov(points):
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    mean = [sum(pts[i, k] for i in range(n)) / n for k in range(d)]
    cov = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            cov[a, b] = sum((pts[i, a] - mean[a]) * (pts[i, b] - mean[b]) for i in range(n)) / (n - 1)
    return np.array(mean), cov


def cllr_objective(bias, weights, pos, neg, prior):
    """Prior-weighted logistic loss written out term by term."""
    off = np.log(prior / (1 - prior))
    pos = np.atleast_2d(np.asarray(pos, dtype=float).T).T
    neg = np.atleast_2d(np.asarray(neg, dtype=float).T).T
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    lp = np.log1p(np.exp(-(pos @ w + bias) - off))
    ln = np.log1p(np.exp((neg @ w + bias) + off))
    return prior * lp.mean() + (1 - prior) * ln.mean()


def grid_minimize_2d(fun, lo, hi, n=41):
    """Dense grid over [lo, hi]^2 followed by Nelder-Mead from the best cell."""
    from scipy.optimize import minimize

    axis = np.linspace(lo, hi, n)
    best = min(((fun(a, b), a, b) for a in axis for b in axis))
    res = minimize(lambda p: fun(p[0], p[1]), [best[1], best[2]], method="Nelder-Mead",
                   options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": 5000})
    return res.x, res.fun
