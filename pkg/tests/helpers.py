"""Shared test utilities: finite-difference gradient checking and
independently written reference implementations (oracles).

The oracles deliberately use different formulations (explicit loops,
pair counting, log-sum-exp softmax) so agreement with the package is
evidence of correctness rather than of shared code.
"""

import numpy as np

from slotseg.autodiff import Tensor


# finite differences -----------------------------------------------------------

def fd_gradient(loss_fn, tensor: Tensor, coords, h: float = 1e-5):
    """Central-difference gradient of loss_fn() w.r.t. tensor at coords."""
    flat = tensor.data.reshape(-1)
    out = np.zeros(len(coords))
    for j, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().data)
        flat[i] = orig - h
        down = float(loss_fn().data)
        flat[i] = orig
        out[j] = (up - down) / (2.0 * h)
    return out


def check_gradients(loss_fn, tensors, h: float = 1e-5, rtol: float = 1e-4,
                    atol: float = 1e-8, max_coords: int = 32, seed: int = 0):
    """Analytic vs central-difference gradients for each tensor.

    loss_fn must rebuild the graph from the tensors' current .data on every
    call and return a scalar Tensor. Large tensors are checked on a seeded
    random subset of coordinates; atol only rescues exact zeros.
    Returns the worst relative error seen.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "no analytic gradient reached this tensor"
        analytic = t.grad.reshape(-1)
        n = analytic.size
        coords = (np.arange(n) if n <= max_coords
                  else rng.choice(n, size=max_coords, replace=False))
        fd = fd_gradient(loss_fn, t, coords, h)
        a = analytic[coords]
        err = np.abs(a - fd)
        tol = atol + rtol * np.maximum(np.abs(a), np.abs(fd))
        ok = err <= tol
        assert np.all(ok), (
            f"gradient mismatch: analytic {a[~ok][:3]} vs fd {fd[~ok][:3]} "
            f"(err {err[~ok][:3]})")
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-12)
        worst = max(worst, float(np.max(err / denom)))
    return worst


# oracle implementations --------------------------------------------------------

def oracle_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def oracle_combine(per_slot: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Alpha-softmax mixture over slots, written as an explicit loop."""
    k, n, d = per_slot.shape
    out = np.zeros((n, d))
    for pos in range(n):
        weights = oracle_softmax(alpha[:, pos], axis=0)
        for s in range(k):
            out[pos] += weights[s] * per_slot[s, pos]
    return out


def oracle_dice(p: np.ndarray, y: np.ndarray) -> float:
    p = p.reshape(-1)
    y = y.reshape(-1)
    return 1.0 - (2.0 * float(p @ y) + 1.0) / (float(p.sum())
                                               + float(y.sum()) + 1.0)


def oracle_focal(p: np.ndarray, y: np.ndarray, gamma: float = 2.0) -> float:
    p = np.clip(p.reshape(-1), 1e-7, 1.0 - 1e-7)
    y = y.reshape(-1)
    terms = -(y * (1.0 - p) ** gamma * np.log(p)
              + (1.0 - y) * p ** gamma * np.log(1.0 - p))
    return float(np.mean(terms))


def oracle_bce(p: np.ndarray, y: np.ndarray) -> float:
    return oracle_focal(p, y, gamma=0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def oracle_base_loss(student_logits: np.ndarray, teacher_logits: np.ndarray,
                     anchor_logits: np.ndarray) -> float:
    anchor_bin = (anchor_logits > 0).astype(np.float64)
    teacher_bin = (teacher_logits > 0).astype(np.float64)
    dice_pair = 0.5 * (oracle_dice(sigmoid(student_logits), anchor_bin)
                       + oracle_dice(sigmoid(teacher_logits), anchor_bin))
    return dice_pair + oracle_focal(sigmoid(student_logits), teacher_bin)


def oracle_pair_counts(a: np.ndarray, b: np.ndarray) -> tuple:
    """(together-in-both, together-a-only, together-b-only, apart-in-both)
    over all unordered element pairs; O(n^2), for small inputs."""
    a = a.reshape(-1)
    b = b.reshape(-1)
    n = a.size
    n11 = n10 = n01 = n00 = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_a = a[i] == a[j]
            same_b = b[i] == b[j]
            if same_a and same_b:
                n11 += 1
            elif same_a:
                n10 += 1
            elif same_b:
                n01 += 1
            else:
                n00 += 1
    return n11, n10, n01, n00


def oracle_ari(a: np.ndarray, b: np.ndarray) -> float:
    n11, n10, n01, n00 = oracle_pair_counts(a, b)
    num = 2.0 * (n11 * n00 - n10 * n01)
    den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    if den == 0:
        return 1.0
    return num / den


def oracle_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(bool)
    b = b.astype(bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum()) / float(union)
