"""Independent reference computations shared by unit and acceptance tests."""
import numpy as np


def brute_root_split(X, g, h, lam, gamma=0.0, min_child_hessian=0.0):
    """Best (feature, threshold, gain) over every distinct value by direct summation."""
    best = None
    for f in range(X.shape[1]):
        for t in np.unique(X[:, f])[:-1]:
            left = X[:, f] <= t
            GL, HL = g[left].sum(), h[left].sum()
            GR, HR = g[~left].sum(), h[~left].sum()
            if HL < min_child_hessian or HR < min_child_hessian:
                continue
            G, H = GL + GR, HL + HR
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma
            # strict improvement keeps the lowest feature, then lowest threshold
            if best is None or gain > best[2] + 1e-10 * max(1.0, abs(best[2])):
                best = (f, float(t), float(gain))
    return best


def loss_sum(y, m, w):
    return float(np.sum(w * (np.logaddexp(0.0, m) - y * m)))


def numeric_derivatives(y, m, w, eps=1e-5, eps2=1e-3):
    """Central differences of the per-row weighted log-loss: first and second derivative.

    The second difference divides by eps2**2, so it needs a wider step to keep roundoff below 1e-9.
    """
    def f(z):
        return w * (np.logaddexp(0.0, z) - y * z)
    d1 = (f(m + eps) - f(m - eps)) / (2 * eps)
    d2 = (f(m + eps2) - 2 * f(m) + f(m - eps2)) / (eps2 * eps2)
    return d1, d2


def brute_best_threshold(scores, labels, grid, beta=1.0):
    """F_beta at every grid point by explicit counting; returns (threshold, F) with lowest-threshold ties."""
    best_t, best_f = None, -1.0
    b2 = beta * beta
    for t in grid:
        pred = scores >= t
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        fn = int(np.sum(~pred & (labels == 1)))
        denom = (1 + b2) * tp + b2 * fn + fp
        f = (1 + b2) * tp / denom if denom else 0.0
        if f > best_f + 1e-12:
            best_t, best_f = float(t), f
    return best_t, best_f


def exhaustive_best_f(scores, labels, beta=1.0):
    """Best achievable F_beta over every cut between distinct scores (midpoints plus the extremes)."""
    u = np.unique(scores)
    cuts = np.concatenate([[u[0] - 1.0], (u[:-1] + u[1:]) / 2.0, [u[-1] + 1.0]])
    return brute_best_threshold(scores, labels, cuts, beta)


def pair_auc(scores, labels):
    """Mann-Whitney AUC by explicit pair counting (ties count one half)."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (pos.size * neg.size))
