"""Resonance residual on the cut plane and its rescaled form near a band edge."""
from __future__ import annotations

import numpy as np

from .tridiag_spectral import RescaledFrame, SpectralData

BRANCH_GUARD = 1e-14
POLE_GUARD = 1e-13


class BranchCutError(ValueError):
    pass


class PoleError(ArithmeticError):
    pass


def _on_cut(E: np.ndarray) -> np.ndarray:
    return (E.imag == 0) & (np.abs(E.real) >= 2)


def theta(E):
    """Branch of ``E = 2 cos(theta)`` with ``Re theta`` in ``(-pi, 0)``.

    Defined on ``C`` minus ``(-inf, -2] U [2, inf)``; ``Im theta > 0`` on the
    upper half-plane.  The principal arccos has its cuts exactly there.
    """
    E = np.asarray(E, dtype=complex)
    if np.any(_on_cut(E)) or np.any(np.abs(E - 2) < BRANCH_GUARD) or np.any(np.abs(E + 2) < BRANCH_GUARD):
        raise BranchCutError("theta evaluated on the cut (-inf,-2] U [2,inf)")
    out = -np.arccos(E / 2)
    return out.item() if out.ndim == 0 else out


def theta_prime(E):
    th = np.asarray(theta(E))
    s = np.sin(th)
    if np.any(np.abs(s) < 1e-12):
        raise BranchCutError("sin(theta) vanishes: derivative undefined at a branch point")
    out = -1.0 / (2 * s)
    return out.item() if out.ndim == 0 else out


def _check_poles(z: np.ndarray, poles: np.ndarray, guard: np.ndarray):
    # sorted poles: only the nearest neighbour on the real axis can be closest
    idx = np.clip(np.searchsorted(poles, z.real), 1, poles.size - 1) if poles.size > 1 else np.zeros(z.shape, int)
    near = np.minimum(
        np.abs(z - poles[idx]),
        np.abs(z - poles[idx - 1]) if poles.size > 1 else np.inf,
    )
    g = np.minimum(guard[idx], guard[idx - 1]) if poles.size > 1 else guard[idx]
    if np.any(near < g):
        raise PoleError("evaluation point within the pole guard of an eigenvalue")


def pole_sum(z, poles: np.ndarray, weights: np.ndarray, order: int = 1, guard=None):
    """``sum_k w_k / (p_k - z)^order`` in ascending index order, pairwise."""
    z = np.asarray(z, dtype=complex)
    flat = np.atleast_1d(z).ravel()
    if guard is not None:
        _check_poles(flat, poles, guard)
    out = np.empty(flat.shape, dtype=complex)
    # chunk rows so the (N, K) workspace stays bounded
    step = max(1, 2_000_000 // max(1, poles.size))
    for s in range(0, flat.size, step):
        zz = flat[s:s + step, None]
        terms = weights[None, :] / (poles[None, :] - zz) ** order
        out[s:s + step] = terms.sum(axis=1)
    out = out.reshape(z.shape)
    return out.item() if out.ndim == 0 else out


def S_L(E, sd: SpectralData):
    E = np.asarray(E, dtype=complex)
    guard = np.full(sd.lambdas.shape, 1e-300)
    return pole_sum(E, sd.lambdas, sd.weights, guard=guard)


def S_L_prime(E, sd: SpectralData):
    return pole_sum(E, sd.lambdas, sd.weights, order=2)


def residual(E, sd: SpectralData):
    """``S_L(E) + exp(-i theta(E))``; resonances are its zeros."""
    return S_L(E, sd) + np.exp(-1j * np.asarray(theta(E)))


def residual_prime(E, sd: SpectralData):
    th = np.asarray(theta(E))
    return S_L_prime(E, sd) - 1j * np.asarray(theta_prime(E)) * np.exp(-1j * th)


def _frame_guard(frame: RescaledFrame) -> np.ndarray:
    return POLE_GUARD * np.maximum(1.0, np.abs(frame.lambdas))


def f_L(z, frame: RescaledFrame):
    """``sum_k a~_k / (lambda~_k - z)``."""
    return pole_sum(z, frame.lambdas, frame.weights, guard=_frame_guard(frame))


def f_L_prime(z, frame: RescaledFrame):
    return pole_sum(z, frame.lambdas, frame.weights, order=2, guard=_frame_guard(frame))


def edge_target(frame: RescaledFrame) -> complex:
    """``-(1/L) exp(-i theta(E0))``, the frozen right-hand side."""
    return complex(-np.exp(-1j * theta(frame.E0)) / frame.L)


def rescaled_residual(z, frame: RescaledFrame):
    """``f_L(z) + (1/L) exp(-i theta(E0 + z/L^2))``."""
    z = np.asarray(z, dtype=complex)
    E = frame.E0 + z / frame.L**2
    return f_L(z, frame) + np.exp(-1j * np.asarray(theta(E))) / frame.L


def rescaled_residual_prime(z, frame: RescaledFrame):
    z = np.asarray(z, dtype=complex)
    E = frame.E0 + z / frame.L**2
    th = np.asarray(theta(E))
    tail = -1j * np.asarray(theta_prime(E)) * np.exp(-1j * th) / frame.L**3
    return f_L_prime(z, frame) + tail


def near_pole_split(z, frame: RescaledFrame, n: int):
    """``(f_{n,L}, f~_{n,L})``: the two poles bracketing ``[lambda~_n, lambda~_{n+1}]``
    (band-local numbering) and the remainder of ``f_L``."""
    lam, w = frame.local_lambdas, frame.local_weights
    if not 0 <= n < lam.size - 1:
        raise IndexError(f"band-local index n={n} needs n+1 < {lam.size}")
    z = np.asarray(z, dtype=complex)
    pair = w[n] / (lam[n] - z) + w[n + 1] / (lam[n + 1] - z)
    return pair, f_L(z, frame) - pair


def near_pole_remainder(z, frame: RescaledFrame, n: int, order: int = 1):
    """``f~_{n,L}`` (``order=2``: its derivative) summed without the pair, so
    there is no cancellation against the two dominant terms."""
    keep = np.ones(frame.lambdas.size, dtype=bool)
    keep[frame.local_indices[[n, n + 1]]] = False
    return pole_sum(z, frame.lambdas[keep], frame.weights[keep], order=order)
