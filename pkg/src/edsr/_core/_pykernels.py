"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` exactly and are used when the compiled
extension is unavailable (or when ``EDSR_PURE_PYTHON=1``).
"""

import numpy as np

NEG_INF = -np.inf


def _extend(target, blank):
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    return ext


def ctc_forward_backward(logp, target, blank=0):
    """Log-space CTC forward-backward.

    Returns ``(log_likelihood, occupancy)`` where ``occupancy[t, k]`` is the
    posterior probability that frame ``t`` emits symbol ``k`` given the
    target. ``log_likelihood`` is ``-inf`` for infeasible targets.
    """
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    target = np.asarray(target, dtype=np.int64)
    T, V = logp.shape
    ext = _extend(target, blank)
    S = ext.shape[0]

    # skip[s]: transition s-2 -> s allowed
    skip = np.zeros(S, dtype=bool)
    if S > 2:
        skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    emit = logp[:, ext]  # (T, S)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a1 = np.concatenate(([NEG_INF], prev[:-1]))
        a2 = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))[:S]
        a2 = np.where(skip, a2, NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(prev, a1), a2) + emit[t]

    if S > 1:
        loglik = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        loglik = alpha[T - 1, 0]
    occupancy = np.zeros((T, V))
    if not np.isfinite(loglik):
        return float(loglik), occupancy

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        b1 = np.concatenate((nxt[1:], [NEG_INF]))
        b2 = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))[:S]
        b2 = np.where(skip_from, b2, NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(nxt, b1), b2)

    post = np.exp(alpha + beta - loglik)
    for s in range(S):
        occupancy[:, ext[s]] += post[:, s]
    return float(loglik), occupancy


def align_counts(ref, hyp, w_sub=1.0, w_del=1.0, w_ins=1.0):
    """Minimum-cost alignment; among equal-cost alignments the one with the
    most substitutions wins. Returns ``(S, D, I)``."""
    n, m = len(ref), len(hyp)
    cost = [[0.0] * (m + 1) for _ in range(n + 1)]
    subs = [[0] * (m + 1) for _ in range(n + 1)]
    dels = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i * w_del
        dels[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j * w_ins
    for i in range(1, n + 1):
        r = ref[i - 1]
        for j in range(1, m + 1):
            if r == hyp[j - 1]:
                bc, bs, bd = cost[i - 1][j - 1], subs[i - 1][j - 1], dels[i - 1][j - 1]
            else:
                bc, bs, bd = cost[i - 1][j - 1] + w_sub, subs[i - 1][j - 1] + 1, dels[i - 1][j - 1]
            c, s = cost[i - 1][j] + w_del, subs[i - 1][j]
            if c < bc or (c == bc and s > bs):
                bc, bs, bd = c, s, dels[i - 1][j] + 1
            c, s = cost[i][j - 1] + w_ins, subs[i][j - 1]
            if c < bc or (c == bc and s > bs):
                bc, bs, bd = c, s, dels[i][j - 1]
            cost[i][j], subs[i][j], dels[i][j] = bc, bs, bd
    S, D = subs[n][m], dels[n][m]
    # matched + S + D = n and matched + S + I = m
    I = m - n + D
    return S, D, I
