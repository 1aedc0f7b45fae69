"""Independent reference implementations used only by the tests.

Each one takes a different route from the library code it checks: Floyd-Warshall
instead of BFS, explicit loops instead of vectorized numpy, Jacobi rotations
instead of LAPACK.
"""

import math

import numpy as np


def closure_classify(n, edges):
    """Graph fields from all-pairs shortest paths (Floyd-Warshall over j -> i edges)."""
    inf = math.inf
    dist = [[0 if a == b else inf for b in range(n)] for a in range(n)]
    for j, i in edges:
        if j != i:
            dist[j][i] = 1
    for k in range(n):
        for a in range(n):
            for b in range(n):
                if dist[a][k] + dist[k][b] < dist[a][b]:
                    dist[a][b] = dist[a][k] + dist[k][b]
    centers = [a for a in range(n) if all(dist[a][b] < inf for b in range(n))]
    strong = len(centers) == n
    return {
        "has_self_loops": all((i, i) in edges for i in range(n)),
        "strongly_connected": strong,
        "quasi_strongly_connected": bool(centers),
        "center_nodes": tuple(centers),
        "radius": min(max(dist[c]) for c in centers) if centers else None,
        "diameter": max(max(row) for row in dist) if strong else None,
    }


def loop_scores(x, wq, wk, d_qk):
    n, d = x.shape
    q = [[sum(x[i, a] * wq[a, b] for a in range(d)) for b in range(wq.shape[1])] for i in range(n)]
    k = [[sum(x[i, a] * wk[a, b] for a in range(d)) for b in range(wk.shape[1])] for i in range(n)]
    r = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            r[i, j] = sum(q[i][c] * k[j][c] for c in range(len(q[i]))) / math.sqrt(d_qk)
    return r


def loop_masked_softmax(r, n, edges):
    a = np.zeros((n, n))
    for i in range(n):
        nb = [j for j in range(n) if (j, i) in edges]
        m = max(r[i, j] for j in nb)
        z = sum(math.exp(r[i, j] - m) for j in nb)
        for j in nb:
            a[i, j] = math.exp(r[i, j] - m) / z
    return a


def loop_matmul(a, b):
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            out[i, j] = sum(a[i, k] * b[k, j] for k in range(m))
    return out


def jacobi_singular_values(x, sweeps=60, tol=1e-15):
    """One-sided Jacobi: orthogonalize columns pairwise; singular values are the column norms."""
    a = np.array(x, dtype=float)
    if a.shape[0] < a.shape[1]:
        a = a.T.copy()
    n = a.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = a[:, p] @ a[:, p]
                beta = a[:, q] @ a[:, q]
                gamma = a[:, p] @ a[:, q]
                scale = math.sqrt(alpha) * math.sqrt(beta)
                if scale == 0.0 or abs(gamma) <= tol * scale:
                    continue
                off = max(off, abs(gamma) / scale)
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * a[:, q]
                a[:, q] = s * ap + c * a[:, q]
        if off <= tol:
            break
    return np.sort(np.linalg.norm(a, axis=0))[::-1]


def pairwise_mu(x):
    """mu from the identity ||X - 1 mean||_F^2 = (1/N) sum_{i<j} ||X_i - X_j||^2."""
    n = len(x)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += float(np.sum((x[i] - x[j]) ** 2))
    return math.sqrt(total / n)


def random_digraph(rng, n, p):
    return frozenset((j, i) for j in range(n) for i in range(n) if rng.random() < p)
