"""Shared test utilities: finite-difference oracles and the two-peak
counterexample construction."""

from __future__ import annotations

import numpy as np

from smf import autodiff as ad
from smf.autodiff import Tape, Tensor, backward

FD_H = 1e-5


def rel_err(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    if scale < 1e-8:
        return abs(a - b)
    return abs(a - b) / scale


def fd_gradients(f, tensors: list[Tensor], h: float = FD_H) -> list[np.ndarray]:
    """Central finite differences of scalar f() w.r.t. each tensor's entries."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f())
            flat[i] = orig - h
            lo = float(f())
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(build_loss, tensors: list[Tensor], tol: float = 1e-5,
                    h: float = FD_H) -> float:
    """Compare backward() grads of build_loss() against finite differences.

    Returns the worst relative error; asserts it is within tol.
    """
    for t in tensors:
        t.zero_grad()
    with Tape():
        loss = build_loss()
        backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    numeric = fd_gradients(lambda: build_loss().data, tensors, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        for av, nv in zip(a.ravel(), n.ravel()):
            worst = max(worst, rel_err(av, nv))
    assert worst <= tol, f"gradient mismatch: worst rel err {worst:.3e} > {tol}"
    return worst


def check_directional(build_loss, tensors: list[Tensor], rng: np.random.Generator,
                      n_dirs: int = 8, tol: float = 1e-5, h: float = FD_H) -> float:
    """Directional finite-difference check for large parameter sets."""
    for t in tensors:
        t.zero_grad()
    with Tape():
        loss = build_loss()
        backward(loss)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for _ in range(n_dirs):
        dirs = [rng.standard_normal(t.data.shape) for t in tensors]
        norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
        dirs = [d / norm for d in dirs]
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, dirs))
        for t, d in zip(tensors, dirs):
            t.data += h * d
        hi = float(build_loss().data)
        for t, d in zip(tensors, dirs):
            t.data -= 2.0 * h * d
        lo = float(build_loss().data)
        for t, d in zip(tensors, dirs):
            t.data += h * d
        numeric = (hi - lo) / (2.0 * h)
        worst = max(worst, rel_err(analytic, numeric))
    assert worst <= tol, f"directional gradient mismatch: worst {worst:.3e} > {tol}"
    return worst


# ---------------------------------------------------------------------------
# two-peak trap: a false and a true peak with identical neighbourhoods


def two_peak_trap(length: int = 250, false_peak: int = 110, true_peak: int = 140):
    """Signal where both peaks look identical to any length-9 template.

    The +-6 neighbourhoods of the two peaks match sample for sample, so every
    length-9 window placed on one peak sees exactly what it sees on the other
    and their correlation values tie bit for bit. The only asymmetry is a
    valley at true_peak-9..true_peak-7: outside any single window centered on
    a peak, but inside the +-8 footprint two chained length-9 filters cover.

    Returns (signal, false_peak, true_peak).
    """
    x = np.zeros(length)
    shape = np.array([0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25])
    for c in (false_peak, true_peak):
        x[c - 3:c + 4] = shape
    x[true_peak - 9:true_peak - 6] = np.array([-0.7, -1.0, -0.5])
    return x, false_peak, true_peak


def two_stage_templates():
    """Hand-built pair that localises the trap's true peak exactly.

    a1 is the valley and the ascent toward the true peak (the trap signal's
    own window centered 6 left of the true peak), so the filtered signal
    descends across the true peak while merely oscillating around the false
    one. a2 is that descending pattern (the filtered window at the true peak,
    rounded), so the second pass peaks exactly on the true index.
    """
    a1 = np.array([0.0, -0.7, -1.0, -0.5, 0.0, 0.0, 0.0, 0.25, 0.5])
    a2 = np.array([0.51, 0.30, 0.15, -0.12, -0.48, -0.78, -0.93, -0.83, -0.56])
    return a1, a2
