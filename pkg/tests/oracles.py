"""Independent reference implementations used only by the tests.

Everything here is deliberately written from first principles (power series,
brute-force play, finite differences, loop-based network evaluation) so that
agreement with the production code is evidence, not tautology.
"""
import numpy as np


def bessel_j0_series(x: float, terms: int = 40) -> float:
    """J0(x) from its power series sum_m (-1)^m (x/2)^(2m) / (m!)^2."""
    half = x / 2.0
    total = 0.0
    term = 1.0
    for m in range(terms):
        if m > 0:
            term *= -(half * half) / (m * m)
        total += term
    return total


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one coordinate at a time."""
    g = np.zeros_like(x, dtype=float)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f()
        flat[i] = keep - eps
        lo = f()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def fictitious_play(payoff: np.ndarray, iters: int = 200_000,
                    seed: int = 0) -> tuple[np.ndarray, float, float]:
    """Approximate maximin strategy for the row player of a zero-sum game.

    Both players repeatedly best-respond to the opponent's empirical mixture.
    Returns (row mixture, lower bound, upper bound) where the true game value
    lies inside [lower, upper]; the gap shrinks roughly like 1/sqrt(iters).
    """
    u = np.asarray(payoff, dtype=float)
    n_rows, n_cols = u.shape
    rng = np.random.default_rng(seed)
    row_counts = np.zeros(n_rows)
    col_counts = np.zeros(n_cols)
    r0 = int(rng.integers(n_rows))
    c0 = int(rng.integers(n_cols))
    row_counts[r0] = 1.0
    col_counts[c0] = 1.0
    # running payoff sums against the opponent's accumulated counts; dividing
    # by the count total gives the payoff against the empirical mixture
    row_sums = u[:, c0].copy()
    col_sums = u[r0, :].copy()
    total = 1.0
    lower, upper = -np.inf, np.inf
    for _ in range(iters):
        br_row = int(np.argmax(row_sums))
        upper = min(upper, float(row_sums[br_row]) / total)

        br_col = int(np.argmin(col_sums))
        lower = max(lower, float(col_sums[br_col]) / total)

        row_counts[br_row] += 1.0
        col_counts[br_col] += 1.0
        row_sums += u[:, br_col]
        col_sums += u[br_row, :]
        total += 1.0
    return row_counts / row_counts.sum(), lower, upper


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def lstm_step_reference(x, h, c, w, u, b, hidden):
    """One LSTM step with the i, f, g, o gate ordering, all python loops."""
    x = np.asarray(x, float)
    pre = w @ x + u @ h + b
    i = sigmoid(pre[0 * hidden:1 * hidden])
    f = sigmoid(pre[1 * hidden:2 * hidden])
    g = np.tanh(pre[2 * hidden:3 * hidden])
    o = sigmoid(pre[3 * hidden:4 * hidden])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def feedforward_reference(x, weights, biases, out_activation="linear"):
    """Dense ReLU stack evaluated with explicit loops over layers."""
    h = np.asarray(x, dtype=float)
    for li, (w, b) in enumerate(zip(weights, biases)):
        h = w @ h + b
        last = li == len(weights) - 1
        if not last:
            h = np.maximum(h, 0.0)
        elif out_activation == "sigmoid":
            h = sigmoid(h)
    return h


def attention_scores_reference(enc, dec, w1, w2, v=1.0):
    """Pointer scores u[k, c] = v * sum_j tanh(w1_j E_kj + w2_j D_cj)."""
    n_k, hidden = enc.shape
    n_c = dec.shape[0]
    out = np.zeros((n_k, n_c))
    for k in range(n_k):
        for c in range(n_c):
            s = 0.0
            for j in range(hidden):
                s += np.tanh(w1[j] * enc[k, j] + w2[j] * dec[c, j])
            out[k, c] = v * s
    return out


def softmax_reference(x, axis=0):
    x = np.asarray(x, dtype=float)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)
