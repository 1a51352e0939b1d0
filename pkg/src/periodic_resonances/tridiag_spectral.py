"""Dirichlet truncation H_L on [0, L] and its spectral data."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy import stats

from .periodic_model import BandStructure, PeriodicPotential, quasimomentum

CLUSTER_TOL = 1e-8
EDGE_HIT_TOL = 1e-10


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncatedOperator:
    V: PeriodicPotential
    L: int

    def __post_init__(self):
        if int(self.L) < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")

    @property
    def j(self) -> int:
        return self.L % self.V.p

    @property
    def diagonal(self) -> np.ndarray:
        return self.V.on_sites(self.L + 1)

    @property
    def offdiagonal(self) -> np.ndarray:
        return np.ones(self.L)

    def dense(self) -> np.ndarray:
        d = self.diagonal
        return np.diag(d) + np.diag(self.offdiagonal, 1) + np.diag(self.offdiagonal, -1)

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.diagonal)) + 2.0)


def assemble(V: PeriodicPotential, L: int) -> TruncatedOperator:
    return TruncatedOperator(V, int(L))


def sturm_count(op: TruncatedOperator, x) -> np.ndarray:
    """Number of eigenvalues strictly below each shift in ``x`` (LDL^T inertia)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = op.diagonal
    tiny = np.finfo(float).tiny
    count = np.zeros(x.shape, dtype=int)
    q = d[0] - x
    for i in range(op.L + 1):
        if i:
            q = d[i] - x - 1.0 / q
        q = np.where(q == 0.0, -tiny, q)
        count += q < 0
    return count


def _pairwise_sum(x: np.ndarray) -> float:
    # numpy reduces contiguous 1-d arrays pairwise, in index order
    return float(np.sum(np.ascontiguousarray(x)))


@dataclass(frozen=True)
class SpectralData:
    lambdas: np.ndarray
    weights: np.ndarray
    first_components: np.ndarray
    L: int
    V: PeriodicPotential
    clusters: tuple[tuple[int, ...], ...] = ()

    @property
    def j(self) -> int:
        return self.L % self.V.p

    def weight_sum(self) -> float:
        return _pairwise_sum(self.weights)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "lambda", "a_k", "phi0_sq"])
        for k, (lam, a, f) in enumerate(zip(self.lambdas, self.weights, self.first_components)):
            w.writerow([k, repr(float(lam)), repr(float(a)), repr(float(f))])
        return buf.getvalue()

    def to_json(self, **meta) -> str:
        doc = {
            "V": self.V.to_dict(),
            "L": self.L,
            "j": self.j,
            "tolerances": {"cluster": CLUSTER_TOL},
            **meta,
            "lambdas": [float(x) for x in self.lambdas],
            "a_k": [float(x) for x in self.weights],
            "phi0_sq": [float(x) for x in self.first_components],
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def eigen_decompose(op: TruncatedOperator, verify: bool = False) -> SpectralData:
    """All eigenvalues of ``H_L`` with boundary weights ``|phi_k(L)|^2``.

    Uses LAPACK's symmetric tridiagonal MRRR driver.  With ``verify`` every
    eigenvalue is bracketed by a Sturm count at ``lambda_k -+ 1e-9 ||H||``.
    """
    d, e = op.diagonal, op.offdiagonal
    if op.L + 1 == 1:
        lam, vec = d.copy(), np.ones((1, 1))
    else:
        try:
            lam, vec = eigh_tridiagonal(d, e, lapack_driver="stemr")
        except np.linalg.LinAlgError as exc:
            raise SpectralError(f"tridiagonal eigensolver failed for L={op.L}: {exc}") from exc
    weights = vec[-1, :] ** 2
    first = vec[0, :] ** 2

    scale = op.norm_inf()
    gaps = np.diff(lam)
    clusters = []
    run = [0]
    for k, g in enumerate(gaps):
        if g < CLUSTER_TOL * scale:
            run.append(k + 1)
        else:
            if len(run) > 1:
                clusters.append(tuple(run))
            run = [k + 1]
    if len(run) > 1:
        clusters.append(tuple(run))

    if verify:
        h = 1e-9 * scale
        below = sturm_count(op, lam - h)
        upto = sturm_count(op, lam + h)
        bad = np.nonzero((below > np.arange(lam.size)) | (upto < np.arange(lam.size) + 1))[0]
        if bad.size:
            raise SpectralError(f"Sturm bracket check failed for indices {bad[:10].tolist()}")

    return SpectralData(
        lambdas=lam, weights=weights, first_components=first, L=op.L, V=op.V,
        clusters=tuple(clusters),
    )


def free_spectrum(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues and last-site weights of the V=0 truncation."""
    m = np.arange(L + 1, 0, -1)
    theta = m * np.pi / (L + 2)
    return 2 * np.cos(theta), (2.0 / (L + 2)) * np.sin(theta) ** 2


@dataclass(frozen=True)
class BandLocalEnumeration:
    band_index: int
    band: tuple[float, float]
    lambdas: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return int(self.lambdas.size)


def enumerate_in_band(sd: SpectralData, band, band_index: int = -1,
                      slack: float = 0.0) -> BandLocalEnumeration:
    lo, hi = band
    if hi < lo:
        return BandLocalEnumeration(band_index, (lo, hi), np.empty(0), np.empty(0, dtype=int))
    mask = (sd.lambdas >= lo - slack) & (sd.lambdas <= hi + slack)
    idx = np.nonzero(mask)[0]
    # distinct values only; the first index of every degenerate cluster is kept
    keep = [int(idx[0])] if idx.size else []
    for k in idx[1:]:
        if sd.lambdas[k] - sd.lambdas[keep[-1]] > CLUSTER_TOL * max(1.0, abs(sd.lambdas[k])):
            keep.append(int(k))
    keep = np.array(keep, dtype=int)
    return BandLocalEnumeration(band_index, (lo, hi), sd.lambdas[keep], keep)


def expected_band_count(V: PeriodicPotential, bs: BandStructure, i: int, L: int) -> float:
    """``(L - j) |theta_p(B_i)| / pi`` from the quantization condition."""
    lo, hi = bs.bands[i]
    width = abs(quasimomentum(hi, V, bs) - quasimomentum(lo, V, bs))
    return (L - L % V.p) * width / math.pi


@dataclass(frozen=True)
class RescaledFrame:
    """Spectral data seen from a band edge: ``z = L^2 (E - E0)``, ``a~ = L a``."""

    E0: float
    L: int
    lambdas: np.ndarray
    weights: np.ndarray
    local_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    edge_hit: int | None = None

    def to_z(self, E):
        return self.L**2 * (np.asarray(E) - self.E0)

    def to_E(self, z):
        return self.E0 + np.asarray(z) / self.L**2

    @property
    def local_lambdas(self) -> np.ndarray:
        return self.lambdas[self.local_indices]

    @property
    def local_weights(self) -> np.ndarray:
        return self.weights[self.local_indices]


def rescale(sd: SpectralData, E0: float, L: int | None = None,
            enum: BandLocalEnumeration | None = None) -> RescaledFrame:
    """Rescale around ``E0``; ``enum`` (eigenvalues of the edge's band) fixes the
    band-local numbering, which starts at the first eigenvalue ``>= E0``."""
    L = sd.L if L is None else L
    lt = L**2 * (sd.lambdas - E0)
    hit = None
    close = np.nonzero(np.abs(sd.lambdas - E0) < EDGE_HIT_TOL)[0]
    if close.size:
        hit = int(close[0])
        lt = lt.copy()
        lt[close] = 0.0
    local = np.empty(0, dtype=int)
    if enum is not None:
        local = np.array([k for k in enum.indices if lt[k] >= 0.0], dtype=int)
    return RescaledFrame(E0=float(E0), L=L, lambdas=lt, weights=L * sd.weights,
                         local_indices=local, edge_hit=hit)


@dataclass
class SpacingReport:
    L: int
    E0: float
    count: int
    edge_ratio_min: float
    edge_ratio_max: float
    pair_ratio_min: float
    pair_ratio_max: float
    alpha: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def check_spacing_law(enum: BandLocalEnumeration, E0: float, eps: float, L: int,
                      j: int = 0, window: float | None = None) -> SpacingReport:
    """Two-sided spacing ratios near a left band edge.

    Eligible eigenvalues lie in ``(E0, E0 + eps^2]`` with local index
    ``k <= eps (L - j)``.  ``alpha`` is the smallest window ``[1/alpha, alpha]``
    holding both ratio families; with ``window`` given the report passes iff
    every ratio lies inside ``[1/window, window]``.
    """
    lam = enum.lambdas
    lam = lam[lam > E0 + EDGE_HIT_TOL]
    kmax = eps * (L - j)
    sel = [k for k in range(lam.size) if k <= kmax and lam[k] <= E0 + eps**2]
    if len(sel) < 2:
        raise SpectralError(f"only {len(sel)} eigenvalues in the spacing window at L={L}")
    ks = np.array(sel, dtype=float)
    lt = L**2 * (lam[sel] - E0)
    edge = lt / (ks + 1) ** 2
    n_idx, k_idx = np.triu_indices(len(sel), 1)
    num = np.abs(lt[k_idx] - lt[n_idx])
    den = np.abs(ks[k_idx] ** 2 - ks[n_idx] ** 2)
    pair = num / den
    lo = min(edge.min(), pair.min())
    hi = max(edge.max(), pair.max())
    alpha = max(hi, 1.0 / lo)
    passed = True if window is None else bool(1 / window <= lo and hi <= window)
    return SpacingReport(
        L=L, E0=E0, count=len(sel), edge_ratio_min=float(edge.min()),
        edge_ratio_max=float(edge.max()), pair_ratio_min=float(pair.min()),
        pair_ratio_max=float(pair.max()), alpha=float(alpha), passed=passed,
    )


@dataclass
class DecayReport:
    sequences: list
    rates: list
    r_squared: list
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_outside_band_convergence(V: PeriodicPotential, L_list, bs: BandStructure) -> DecayReport:
    """Eigenvalues outside the spectrum converge exponentially fast in ``L``.

    Each outside eigenvalue at ``L_{m+1}`` is matched to the nearest unused one
    at ``L_m``.  A sequence passes when ``log |lambda(L_{m+1}) - lambda(L_m)|``
    is linear in ``L`` with ``R^2 >= 0.9`` or already at round-off.
    """
    L_list = list(L_list)
    if any(b <= a for a, b in zip(L_list, L_list[1:])):
        raise ValueError("L_list must be strictly ascending")
    if len({L % V.p for L in L_list}) > 1:
        raise ValueError("L_list entries must share the residue mod p")
    outside = []
    for L in L_list:
        sd = eigen_decompose(assemble(V, L))
        out = [float(x) for x in sd.lambdas if not bs.contains(float(x), 1e-9)]
        outside.append(out)

    sequences = [[x] for x in outside[0]]
    for m in range(1, len(L_list)):
        used = set()
        for seq in sequences:
            if len(seq) != m:
                continue
            cands = [(abs(x - seq[-1]), i) for i, x in enumerate(outside[m]) if i not in used]
            if not cands:
                continue
            dist, i = min(cands)
            if dist < 0.1:
                used.add(i)
                seq.append(outside[m][i])
    sequences = [s for s in sequences if len(s) == len(L_list)]

    rates, r2s, ok = [], [], True
    for seq in sequences:
        diffs = np.abs(np.diff(seq))
        if diffs.size < 2 or np.all(diffs < 1e-13):
            rates.append(float("inf"))
            r2s.append(1.0)
            continue
        mask = diffs > 1e-14
        x = np.asarray(L_list[1:], dtype=float)[mask]
        y = np.log(diffs[mask])
        if x.size < 2:
            rates.append(float("inf"))
            r2s.append(1.0)
            continue
        fit = stats.linregress(x, y)
        rates.append(float(-fit.slope))
        r2 = float(fit.rvalue**2) if x.size > 2 else 1.0
        r2s.append(r2)
        if not (fit.slope < 0 and r2 >= 0.9):
            ok = False
    return DecayReport(sequences=sequences, rates=rates, r_squared=r2s, passed=ok)
