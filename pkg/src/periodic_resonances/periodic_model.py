"""Floquet theory of the full-line periodic Jacobi operator.

The operator acts as ``(Hu)(n) = u(n-1) + u(n+1) + V(n) u(n)`` with a
``p``-periodic potential ``V``.  Everything here is a pure function of the
potential and the energy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROOT_TOL = 1e-12
IDENTITY_TOL = 1e-10


class BandStructureError(RuntimeError):
    pass


class NotAnEdgeError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicPotential:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("potential needs at least one value")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def p(self) -> int:
        return len(self.values)

    def __call__(self, n):
        return np.asarray(self.values)[np.asarray(n) % self.p]

    def on_sites(self, count: int) -> np.ndarray:
        """``V(0), ..., V(count-1)``."""
        return np.resize(np.asarray(self.values, dtype=float), count)

    def reflected(self) -> "PeriodicPotential":
        return PeriodicPotential(tuple(-v for v in self.values))

    def to_dict(self) -> dict:
        return {"p": self.p, "values": list(self.values)}

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicPotential":
        if not isinstance(data, dict):
            raise ValueError("potential must be a JSON object with 'p' and 'values'")
        if "values" not in data:
            raise ValueError("potential: missing field 'values'")
        values = data["values"]
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        ):
            raise ValueError("potential: field 'values' must be a list of numbers")
        if "p" in data:
            p = data["p"]
            if not isinstance(p, int) or isinstance(p, bool) or p < 1:
                raise ValueError("potential: field 'p' must be a positive integer")
            if p != len(values):
                raise ValueError(
                    f"potential: field 'p'={p} does not match len(values)={len(values)}"
                )
        return cls(tuple(values))

    @classmethod
    def load(cls, path) -> "PeriodicPotential":
        return cls.from_dict(json.loads(Path(path).read_text()))


def transfer_matrix(E, l: int, V: PeriodicPotential) -> np.ndarray:
    """One-step transfer matrix ``((E - V_l, -1), (1, 0))``."""
    E = complex(E)
    return np.array([[E - V.values[l % V.p], -1.0], [1.0, 0.0]], dtype=complex)


def _products(E, V: PeriodicPotential, start: int, count: int):
    """``T_{start+count-1} ... T_start`` and its E-derivative, vectorized over E.

    Returns arrays of shape ``E.shape + (2, 2)``.
    """
    E = np.asarray(E)
    dtype = np.result_type(E.dtype, float)
    M = np.zeros(E.shape + (2, 2), dtype=dtype)
    M[..., 0, 0] = 1
    M[..., 1, 1] = 1
    dM = np.zeros_like(M)
    for l in range(start, start + count):
        v = V.values[l % V.p]
        a, b = M[..., 0, :].copy(), M[..., 1, :].copy()
        da, db = dM[..., 0, :].copy(), dM[..., 1, :].copy()
        # new top row = (E - v) * top - bottom ; new bottom row = top
        M[..., 0, :] = (E - v)[..., None] * a - b
        M[..., 1, :] = a
        dM[..., 0, :] = a + (E - v)[..., None] * da - db
        dM[..., 1, :] = da
    return M, dM


def transfer_product(E, V: PeriodicPotential, k: int) -> np.ndarray:
    """``T_{k-1}(E) ... T_0(E)``; the identity for ``k = 0``.

    Entries are ``((a_k, b_k), (a_{k-1}, b_{k-1}))``.
    """
    M, _ = _products(np.asarray(E, dtype=complex), V, 0, k)
    return M


def monodromy(E, k: int, V: PeriodicPotential) -> np.ndarray:
    if not 0 <= k < V.p:
        raise ValueError(f"base index k={k} outside [0, {V.p - 1}]")
    M, _ = _products(np.asarray(E, dtype=complex), V, k, V.p)
    return M


def discriminant(E, V: PeriodicPotential, k: int = 0):
    """Trace of the monodromy over one period (real input stays real)."""
    E = np.asarray(E)
    M, _ = _products(E, V, k, V.p)
    out = M[..., 0, 0] + M[..., 1, 1]
    return out.item() if out.ndim == 0 else out


def discriminant_derivative(E, V: PeriodicPotential):
    E = np.asarray(E)
    _, dM = _products(E, V, 0, V.p)
    out = dM[..., 0, 0] + dM[..., 1, 1]
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class BandStructure:
    bands: tuple[tuple[float, float], ...]
    closed_gaps: tuple[tuple[float, ...], ...]
    edges: tuple[float, ...]
    tol: float = ROOT_TOL

    @property
    def q(self) -> int:
        return len(self.bands)

    def band_of(self, E: float, slack: float = 0.0) -> int | None:
        for i, (lo, hi) in enumerate(self.bands):
            if lo - slack <= E <= hi + slack:
                return i
        return None

    def contains(self, E: float, slack: float = 0.0) -> bool:
        return self.band_of(E, slack) is not None

    def left_edges(self):
        return [b[0] for b in self.bands]

    def right_edges(self):
        return [b[1] for b in self.bands]

    def sub_bands_above(self, i: int) -> int:
        """Number of sub-bands (bands split at closed gaps) above band ``i``."""
        return sum(1 + len(c) for c in self.closed_gaps[i + 1:])

    def to_dict(self) -> dict:
        return {
            "bands": [list(b) for b in self.bands],
            "closed_gaps": [list(c) for c in self.closed_gaps],
            "edges": list(self.edges),
            "tol": self.tol,
        }


def _search_interval(V: PeriodicPotential) -> tuple[float, float]:
    return min(V.values) - 3.0, max(V.values) + 3.0


def _bisect(g, lo: float, hi: float, tol: float) -> float:
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            break
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sign_change_roots(g, grid: np.ndarray, values: np.ndarray, tol: float):
    roots = []
    s = np.sign(values)
    for m in range(len(grid) - 1):
        if s[m] == 0:
            roots.append(float(grid[m]))
        elif s[m] * s[m + 1] < 0:
            roots.append(_bisect(g, float(grid[m]), float(grid[m + 1]), tol))
    if s[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


def _newton_polish(V, target, E, tol, lo, hi):
    for _ in range(8):
        d = discriminant_derivative(E, V)
        if d == 0:
            break
        step = (discriminant(E, V) - target) / d
        E_new = E - step
        if not lo <= E_new <= hi:
            break
        E = E_new
        if abs(step) < tol * 1e-2:
            break
    return float(E)


def band_structure(V: PeriodicPotential, tol: float = ROOT_TOL) -> BandStructure:
    """Bands of ``{E : |Delta(E)| <= 2}`` with closed gaps flagged.

    Roots of ``Delta -+ 2`` are bracketed by sign changes on a grid of at
    least ``16 p`` points and bisected, then Newton polished.  Tangential
    roots (closed gaps) are picked up at the critical points of ``Delta``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = V.p
    lo, hi = _search_interval(V)
    npts = max(16 * p, 4096)
    grid = np.linspace(lo, hi, npts)
    disc = discriminant(grid, V)
    ddisc = discriminant_derivative(grid, V)
    scale = max(1.0, float(np.max(np.abs(ddisc))))

    crit = _sign_change_roots(lambda e: discriminant_derivative(e, V), grid, ddisc, tol)
    closed = []
    for c in crit:
        dc = discriminant(c, V)
        if abs(abs(dc) - 2.0) < 1e-8 * max(1.0, abs(dc)):
            closed.append(c)

    simple = []
    for target in (2.0, -2.0):
        vals = disc - target
        for r in _sign_change_roots(lambda e: discriminant(e, V) - target, grid, vals, tol):
            r = _newton_polish(V, target, r, tol, lo, hi)
            if abs(discriminant_derivative(r, V)) < 1e-6 * scale:
                if not any(abs(r - c) < 1e-6 for c in closed):
                    closed.append(r)
                continue
            if any(abs(r - c) < 1e-6 for c in closed):
                continue
            simple.append(r)
    simple.sort()
    closed.sort()
    if len(simple) % 2 or not simple:
        raise BandStructureError(
            f"odd number ({len(simple)}) of simple roots of Delta(E) -+ 2 for p={p}, "
            f"values={list(V.values)}"
        )
    bands = tuple((simple[2 * i], simple[2 * i + 1]) for i in range(len(simple) // 2))
    gaps = tuple(tuple(c for c in closed if b[0] < c < b[1]) for b in bands)
    if sum(len(g) for g in gaps) != len(closed):
        raise BandStructureError(
            f"closed gap outside every band for values={list(V.values)}: {closed}"
        )
    return BandStructure(bands=bands, closed_gaps=gaps, edges=tuple(simple), tol=tol)


def quasimomentum(E: float, V: PeriodicPotential, bs: BandStructure | None = None) -> float:
    """Floquet quasi-momentum ``theta_p`` with ``2 cos(p theta_p) = Delta``.

    Sub-bands (bands split at closed gaps) are counted from the top of the
    spectrum; on the ``s``-th one ``p theta_p`` runs through ``[s pi, (s+1) pi]``.
    The branch vanishes at the top edge and decreases strictly in ``E``.
    """
    bs = bs or band_structure(V)
    E = float(E)
    i = bs.band_of(E, 10 * bs.tol)
    if i is None:
        raise ValueError(f"E={E} lies outside the spectrum")
    s = bs.sub_bands_above(i) + sum(1 for c in bs.closed_gaps[i] if c > E)
    d = float(np.real(discriminant(E, V)))
    arg = min(1.0, max(-1.0, (-1) ** s * d / 2.0))
    return (s * math.pi + math.acos(arg)) / V.p


@dataclass(frozen=True)
class EdgeClassification:
    E0: float
    j: int
    case: str
    a0_pm1: float
    d: float
    a_j1: float
    b_j1: float
    rho: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def nongeneric(self) -> bool:
        return self.case == "nongeneric"

    def to_dict(self) -> dict:
        return {
            "E0": self.E0,
            "j": self.j,
            "case": self.case,
            "a0_pm1": self.a0_pm1,
            "d": self.d,
            "a_j1": self.a_j1,
            "b_j1": self.b_j1,
            "rho": self.rho,
            **self.diagnostics,
        }


ZERO_TOL = 1e-8
DECIDED_TOL = 1e-4


def _zero_status(x: float, scale: float) -> str:
    if abs(x) < ZERO_TOL * scale:
        return "zero"
    if abs(x) > DECIDED_TOL * scale:
        return "nonzero"
    return "indeterminate"


def classify_band_edge(E0: float, j: int, V: PeriodicPotential) -> EdgeClassification:
    """Decide whether edge weights scale like ``1/L`` or ``|lambda - E0|/L``.

    ``d = a_{j+1}(a^0_p - 1/rho) + b_{j+1} a^0_{p-1}`` at the edge; the edge
    is non-generic iff ``a^0_{p-1} != 0`` and ``d == 0``.  Values between the
    zero threshold and ``1e-4`` of the scale are reported as indeterminate.
    """
    if not 0 <= j < V.p:
        raise ValueError(f"j={j} outside [0, {V.p - 1}]")
    E0 = float(E0)
    M = np.real(monodromy(E0, 0, V))
    delta = M[0, 0] + M[1, 1]
    if abs(abs(delta) - 2.0) > 1e-8:
        raise NotAnEdgeError(f"E0={E0} is not a band edge: Delta(E0)={delta}")
    rho = 1.0 if delta > 0 else -1.0
    a0_p, a0_pm1 = float(M[0, 0]), float(M[1, 0])
    P = np.real(transfer_product(E0, V, j + 1))
    a_j1, b_j1 = float(P[0, 0]), float(P[0, 1])
    d = a_j1 * (a0_p - 1.0 / rho) + b_j1 * a0_pm1

    a_status = _zero_status(a0_pm1, max(1.0, abs(a0_p)))
    d_status = _zero_status(d, max(1.0, abs(a_j1), abs(b_j1)))
    if a_status == "zero":
        case = "generic"
    elif a_status == "indeterminate" or d_status == "indeterminate":
        case = "indeterminate"
    elif d_status == "zero":
        case = "nongeneric"
    else:
        case = "generic"
    return EdgeClassification(
        E0=E0, j=j, case=case, a0_pm1=a0_pm1, d=float(d), a_j1=a_j1, b_j1=b_j1, rho=rho,
        diagnostics={"a0_p": a0_p, "delta": float(delta)},
    )
