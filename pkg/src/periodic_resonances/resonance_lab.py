"""Resonances near band edges: region layouts, free-zone certificates,
root searches and the structural checks built on them.

Right band edges are handled through the unitary reflection ``V -> -V``,
``E -> -E``: a resonance ``w`` of the reflected problem near ``-E0`` is the
resonance ``E = -conj(w)`` of the original one, so only left-edge code paths
exist.  All rescaled quantities (``z``, regions, certificates) live in the
frame of the working (possibly reflected) potential.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import analytic_kernel as ak
from .contour_engine import (
    InconclusiveContour,
    Rectangle,
    RootRecord,
    ZeroCertificate,
    image_curve,
    is_simple,
    locate_all_roots,
    polygon_winding,
    winding_about,
    winding_count,
)
from .periodic_model import (
    BandStructure,
    EdgeClassification,
    PeriodicPotential,
    band_structure,
    classify_band_edge,
)
from .tridiag_spectral import (
    BandLocalEnumeration,
    RescaledFrame,
    assemble,
    eigen_decompose,
    enumerate_in_band,
    rescale,
)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
MIN_SCALING_POINTS = 5
# fraction of the region height by which pole-bearing rectangles reach into Im z > 0
UPPER_REACH = 0.05


class RegionError(ValueError):
    pass


class LabError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabParams:
    eps: float = 0.1
    kappa: float = 20.0
    delta1: float | None = None  # default: half of lambda~_0
    C1: float = 10.0
    eta: float | None = None  # default: eps / kappa
    mnop_C: float = 10.0
    grid_density: int = 64
    tol: float = RESIDUAL_TOL

    def __post_init__(self):
        for name in ("eps", "kappa", "C1", "mnop_C", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta1 is not None and not self.delta1 > 0:
            raise ValueError("delta1 must be positive")
        if self.grid_density < 64:
            raise ValueError("grid_density must be at least 64 points per side")

    @property
    def eta_value(self) -> float:
        return self.eps / self.kappa if self.eta is None else self.eta

    def to_dict(self):
        return {"eps": self.eps, "kappa": self.kappa, "delta1": self.delta1, "C1": self.C1,
                "eta": self.eta_value, "mnop_C": self.mnop_C,
                "grid_density": self.grid_density, "tol": self.tol}


def corner_size(n: int, kappa: float) -> float:
    """``Delta_n = (n+1) / (kappa (ln(n+1) + 1))``."""
    return (n + 1) / (kappa * (math.log(n + 1) + 1))


# ---------------------------------------------------------------- edge setup

@dataclass
class EdgeProblem:
    V: PeriodicPotential
    L: int
    E0: float
    band_index: int
    side: str
    reflected: bool
    work_V: PeriodicPotential
    frame: RescaledFrame
    enum: BandLocalEnumeration
    classification: EdgeClassification

    @property
    def local(self) -> np.ndarray:
        return self.frame.local_lambdas

    def to_energy(self, z) -> complex:
        E = complex(self.frame.to_E(z))
        return -E.conjugate() if self.reflected else E

    def physical_z(self, z) -> complex:
        return complex(-np.conj(z)) if self.reflected else complex(z)

    def describe(self) -> dict:
        return {"V": self.V.to_dict(), "L": self.L, "E0": self.E0, "band": self.band_index,
                "side": self.side, "reflected": self.reflected,
                "classification": self.classification.to_dict(),
                "local_lambda_first": [float(x) for x in self.local[:6]],
                "local_weight_first": [float(x) for x in self.frame.local_weights[:6]]}


def interior_edges(bs: BandStructure) -> list[tuple[int, str, float]]:
    """Band edges strictly inside ``(-2, 2)``, where the kernel is analytic."""
    out = []
    for i, (lo, hi) in enumerate(bs.bands):
        for side, E in (("left", lo), ("right", hi)):
            if abs(E) < 2 - 1e-12:
                out.append((i, side, float(E)))
    return out


def prepare_edge(V: PeriodicPotential, L: int, band_index: int, side: str,
                 bs: BandStructure | None = None) -> EdgeProblem:
    bs = band_structure(V) if bs is None else bs
    if not 0 <= band_index < bs.q:
        raise RegionError(f"band index {band_index} outside [0, {bs.q - 1}]")
    if side not in ("left", "right"):
        raise RegionError(f"side must be 'left' or 'right', got {side!r}")
    lo, hi = bs.bands[band_index]
    E0 = lo if side == "left" else hi
    reflected = side == "right"
    work = V.reflected() if reflected else V
    work_band = (-hi, -lo) if reflected else (lo, hi)
    sd = eigen_decompose(assemble(work, L))
    enum = enumerate_in_band(sd, work_band, band_index, slack=1e-9)
    frame = rescale(sd, work_band[0], L, enum)
    cls = classify_band_edge(E0, L % V.p, V)
    return EdgeProblem(V=V, L=L, E0=float(E0), band_index=band_index, side=side,
                       reflected=reflected, work_V=work, frame=frame, enum=enum,
                       classification=cls)


# ---------------------------------------------------------------- regions

@dataclass(frozen=True)
class EdgeRegions:
    lam0: float
    delta1: float
    R: Rectangle | None
    R_strip: Rectangle | None
    omega: Rectangle | None
    left: float

    def to_dict(self):
        f = lambda r: None if r is None else r.to_dict()
        return {"lambda0": self.lam0, "delta1": self.delta1, "R": f(self.R),
                "R_strip": f(self.R_strip), "omega": f(self.omega), "left": self.left}


def _rect(x0, x1, y0, y1) -> Rectangle | None:
    return Rectangle(x0, x1, y0, y1) if x0 < x1 and y0 < y1 else None


def build_edge_regions(frame: RescaledFrame, params: LabParams) -> EdgeRegions:
    """``R^i`` (depth ``eps^4 L^2``), its strip below ``-1/(eps L)`` and ``Omega^i``."""
    lam = frame.local_lambdas
    if lam.size == 0:
        raise RegionError("no eigenvalue in the band")
    lam0 = float(lam[0])
    eps, L = params.eps, frame.L
    d1 = lam0 / 2 if params.delta1 is None else params.delta1
    # a free edge at |E0| = 2 is a branch point; start just to its right
    left = 1e-9 * lam0 if abs(abs(frame.E0) - 2) < 1e-12 else 0.0
    shallow = 1 / (eps * L)
    return EdgeRegions(
        lam0=lam0, delta1=d1,
        R=_rect(left, lam0, -eps**4 * L**2, 0.0),
        R_strip=_rect(left, lam0, -eps**4 * L**2, -shallow),
        omega=_rect(left, lam0 - d1, -shallow, 0.0),
        left=left,
    )


@dataclass(frozen=True)
class RegionFamily:
    n: int
    L: int
    eps: float
    kappa: float
    lam_n: float
    lam_n1: float
    Delta_n: float
    x0: float
    shallow_depth: float  # x0^2 / (eps L)
    nominal_depth: float  # eps^5 L^2
    regime: str
    D: Rectangle
    corner_left: Rectangle
    corner_right: Rectangle
    deep_strip: Rectangle | None
    abcd: Rectangle | None
    efgh: Rectangle | None
    omega_polygon: tuple | None
    omega_tilde: Rectangle | None

    def free_regions(self) -> dict[str, Rectangle]:
        out = {"corner_left": self.corner_left, "corner_right": self.corner_right}
        if self.deep_strip is not None:
            out["deep_strip"] = self.deep_strip
        return out

    def label(self, z: complex) -> str:
        for name, r in self.free_regions().items():
            if r.contains(z):
                return name
        if self.regime == "figure1":
            if self.abcd is not None and self.abcd.contains(z):
                return "ABCD"
            if self.efgh is not None and self.efgh.contains(z):
                return "EFGH"
        if self.omega_tilde is not None and self.omega_tilde.contains(z):
            return "omega_tilde"
        return "other"

    def to_dict(self):
        f = lambda r: None if r is None else r.to_dict()
        return {
            "n": self.n, "L": self.L, "lambda_n": self.lam_n, "lambda_n1": self.lam_n1,
            "Delta_n": self.Delta_n, "x0": self.x0, "shallow_depth": self.shallow_depth,
            "nominal_depth": self.nominal_depth, "regime": self.regime, "D": f(self.D),
            "corner_left": f(self.corner_left), "corner_right": f(self.corner_right),
            "deep_strip": f(self.deep_strip), "ABCD": f(self.abcd), "EFGH": f(self.efgh),
            "omega_tilde": f(self.omega_tilde),
            "omega_polygon": None if self.omega_polygon is None
            else [[v.real, v.imag] for v in self.omega_polygon],
        }


def build_regions(frame: RescaledFrame, n: int, eps: float, kappa: float,
                  delta1: float | None = None) -> RegionFamily:
    """Rectangles around the gap ``[lambda~_n, lambda~_{n+1}]`` of the band.

    The searched rectangle ``D_n`` reaches to ``eps^5 L^2 + x0^2/(eps L)``
    below the axis so that it always contains ``Omega~_n`` and a non-empty
    deep strip.
    """
    if not (eps > 0 and kappa > 0) or (delta1 is not None and not delta1 > 0):
        raise RegionError("eps, kappa and delta1 must be positive")
    lam = frame.local_lambdas
    if not 0 <= n < lam.size - 1:
        raise RegionError(f"n={n} needs lambda~_{n + 1} inside the band ({lam.size} available)")
    L = frame.L
    a, b = float(lam[n]), float(lam[n + 1])
    Dn = corner_size(n, kappa)
    x0 = b - a
    shallow = x0**2 / (eps * L)
    nominal = eps**5 * L**2
    depth = nominal + shallow
    regime = "figure1" if Dn < shallow else "figure2"
    half = min(Dn, x0 / 2)
    corner_l = Rectangle(a, a + half, -Dn, 0.0)
    corner_r = Rectangle(b - half, b, -Dn, 0.0)
    strip_top = -shallow if regime == "figure1" else -Dn
    deep = _rect(a, b, -depth, strip_top)
    abcd = _rect(a + Dn, b - Dn, -Dn, 0.0)
    efgh = _rect(a, b, -shallow, -Dn) if regime == "figure1" else None
    poly = None
    if regime == "figure1" and abcd is not None:
        # counterclockwise: A D E F G H C B
        poly = (complex(a + Dn, 0), complex(a + Dn, -Dn), complex(a, -Dn), complex(a, -shallow),
                complex(b, -shallow), complex(b, -Dn), complex(b - Dn, -Dn), complex(b - Dn, 0))
    return RegionFamily(
        n=n, L=L, eps=eps, kappa=kappa, lam_n=a, lam_n1=b, Delta_n=Dn, x0=x0,
        shallow_depth=shallow, nominal_depth=nominal, regime=regime,
        D=Rectangle(a, b, -depth, 0.0), corner_left=corner_l, corner_right=corner_r,
        deep_strip=deep, abcd=abcd, efgh=efgh, omega_polygon=poly,
        omega_tilde=_rect(a + Dn, b - Dn, -shallow, 0.0),
    )


# ---------------------------------------------------------------- residuals

def _tail(z, frame):
    E = frame.E0 + np.asarray(z, dtype=complex) / frame.L**2
    return np.exp(-1j * np.asarray(ak.theta(E))) / frame.L


def _tail_prime(z, frame):
    E = frame.E0 + np.asarray(z, dtype=complex) / frame.L**2
    th = np.asarray(ak.theta(E))
    return -1j * np.asarray(ak.theta_prime(E)) * np.exp(-1j * th) / frame.L**3


def pole_free_residual(frame: RescaledFrame, pole_ids):
    """``h(z) = prod_k (lambda~_k - z) * rescaled_residual(z)`` for the listed poles.

    ``h`` is analytic across the removed poles and has the same zeros, so
    contours may pass through them.  Returns ``(h, h')``.
    """
    ids = np.asarray(sorted(set(int(i) for i in pole_ids)), dtype=int)
    lam, w = frame.lambdas[ids], frame.weights[ids]
    keep = np.ones(frame.lambdas.size, dtype=bool)
    keep[ids] = False
    rl, rw = frame.lambdas[keep], frame.weights[keep]
    m = ids.size

    def parts(z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        d = lam[:, None] - z[None, :]
        P = np.prod(d, axis=0) if m else np.ones_like(z)
        omit = [np.prod(np.delete(d, k, axis=0), axis=0) for k in range(m)]
        Q = sum(w[k] * omit[k] for k in range(m)) if m else np.zeros_like(z)
        rest = ak.pole_sum(z, rl, rw) + _tail(z, frame)
        return z, d, P, omit, Q, rest

    def h(z):
        _, _, P, _, Q, rest = parts(z)
        return P * rest + Q

    def hp(z):
        z, d, P, omit, Q, rest = parts(z)
        dP = -sum(omit) if m else np.zeros_like(z)
        dQ = np.zeros_like(z)
        for k in range(m):
            for j in range(m):
                if j != k:
                    rows = [r for r in range(m) if r not in (j, k)]
                    dQ = dQ - w[k] * (np.prod(d[rows], axis=0) if rows else 1.0)
        drest = ak.pole_sum(z, rl, rw, order=2) + _tail_prime(z, frame)
        return dP * rest + P * drest + dQ

    return h, hp


def _poles_near(frame: RescaledFrame, rect: Rectangle, pad: float) -> np.ndarray:
    lam = frame.lambdas
    return np.nonzero((lam >= rect.re_min - pad) & (lam <= rect.re_max + pad))[0]


def _search_functions(frame, rect):
    pad = 0.02 * rect.width
    ids = _poles_near(frame, rect, pad)
    return pole_free_residual(frame, ids)


def _reach_up(rect: Rectangle) -> Rectangle:
    """Extend into ``Im z > 0``, where the residual has no zeros."""
    return Rectangle(rect.re_min, rect.re_max, rect.im_min,
                     max(rect.im_max, 0.0) + UPPER_REACH * rect.height)


# ---------------------------------------------------------------- certificates

@dataclass
class FreeRegionCertificate:
    region_id: str
    region: Rectangle
    grid_spacing: tuple[float, float]
    grid_points: int
    skipped_points: int
    min_residual: float
    min_f: float
    min_im_f: float
    target_modulus: float
    predicted_bound: float
    predicted_kind: str
    margin_ratio: float
    target_ratio: float
    winding: int | None
    winding_valid: bool
    passed: bool

    @property
    def zero_free(self) -> bool:
        return self.winding_valid and self.winding == 0

    def to_dict(self):
        d = dict(self.__dict__)
        d["region"] = self.region.to_dict()
        d["grid_spacing"] = list(self.grid_spacing)
        d["zero_free"] = self.zero_free
        return d


def certify_free_region(region: Rectangle, frame: RescaledFrame, grid_density: int = 64,
                        region_id: str = "region", predicted: tuple[str, float] | None = None
                        ) -> FreeRegionCertificate:
    """Grid minimum of ``|rescaled_residual|`` plus a pole-removed winding count.

    ``predicted`` is ``("modulus", b)`` for a lower bound ``|f_L| >= b`` or
    ``("imag", b)`` for ``|Im f_L| >= b``; the margin ratio is the grid
    minimum of that quantity divided by ``b``.
    """
    if grid_density < 64:
        raise RegionError("grid_density must be at least 64 per side")
    xs = np.linspace(region.re_min, region.re_max, grid_density)
    ys = np.linspace(region.im_min, region.im_max, grid_density)
    Z = (xs[None, :] + 1j * ys[:, None]).ravel()
    guard = ak.POLE_GUARD * np.maximum(1.0, np.abs(frame.lambdas))
    dist = np.min(np.abs(Z[:, None] - frame.lambdas[None, _poles_near(frame, region, 1.0)]),
                  axis=1, initial=np.inf)
    near_guard = guard.max() if guard.size else ak.POLE_GUARD
    ok = dist > near_guard
    skipped = int((~ok).sum())
    if skipped:
        log.info("%s: %d grid points on poles skipped", region_id, skipped)
    Z = Z[ok]
    fl = ak.f_L(Z, frame)
    res = fl + _tail(Z, frame)
    min_res = float(np.abs(res).min())
    min_f = float(np.abs(fl).min())
    min_im = float(np.abs(fl.imag).min())
    kind, bound = predicted if predicted is not None else ("modulus", 1.0 / frame.L)
    quantity = min_im if kind == "imag" else min_f
    target = 1.0 / frame.L

    winding, wvalid = None, False
    try:
        h, _ = _search_functions(frame, region)
        cert = winding_count(h, _reach_up(region) if region.im_max >= 0 else region)
        winding, wvalid = cert.winding, cert.valid
    except (InconclusiveContour, ak.PoleError, ak.BranchCutError) as exc:
        log.info("%s: winding inconclusive: %s", region_id, exc)
    return FreeRegionCertificate(
        region_id=region_id, region=region,
        grid_spacing=(float(xs[1] - xs[0]), float(ys[1] - ys[0])),
        grid_points=int(ok.sum()), skipped_points=skipped, min_residual=min_res,
        min_f=min_f, min_im_f=min_im, target_modulus=target, predicted_bound=float(bound),
        predicted_kind=kind, margin_ratio=float(quantity / bound), target_ratio=min_f / target,
        winding=winding, winding_valid=wvalid, passed=bool(min_res > 0),
    )


# ---------------------------------------------------------------- root search

@dataclass
class ResonanceRecord:
    z: complex
    E: complex
    z_physical: complex
    n: int
    region: str
    multiplicity: int
    resolved: bool
    residual: float
    certificate: ZeroCertificate

    def check(self, tol: float) -> bool:
        return self.E.imag < 0 and self.residual <= tol

    def to_dict(self):
        return {"n": self.n, "region": self.region, "re_z": self.z.real, "im_z": self.z.imag,
                "re_E": self.E.real, "im_E": self.E.imag, "multiplicity": self.multiplicity,
                "resolved": self.resolved, "residual": self.residual,
                "certificate": self.certificate.to_dict()}


def _records(problem: EdgeProblem, roots: list[RootRecord], n: int, labeler) -> list[ResonanceRecord]:
    out = []
    frame = problem.frame
    for r in roots:
        res = float(abs(ak.rescaled_residual(r.root, frame)) * frame.L) if r.resolved else float("nan")
        out.append(ResonanceRecord(
            z=complex(r.root), E=problem.to_energy(r.root), z_physical=problem.physical_z(r.root),
            n=n, region=labeler(r.root), multiplicity=r.multiplicity, resolved=r.resolved,
            residual=res, certificate=r.certificate,
        ))
    return out


def search_rect(frame: RescaledFrame, rect: Rectangle, tol: float = 1e-12):
    """Certified zero count and all zeros of the residual in ``rect``."""
    h, hp = _search_functions(frame, rect)
    top = winding_count(h, _reach_up(rect))
    roots = locate_all_roots(h, hp, top.region, tol=tol, top=top)
    # the reach into Im z > 0 is zero-free, so nothing is lost by keeping it
    return top, roots


def n_range(problem: EdgeProblem, params: LabParams) -> range:
    nmax = int(math.floor(params.eps * problem.L / params.C1))
    return range(0, min(nmax, problem.local.size - 2) + 1)


def find_resonances_near_edge(problem: EdgeProblem, params: LabParams = LabParams(),
                              ns=None) -> dict:
    """Zeros of the rescaled residual in ``R^i`` and every ``D_n`` for ``n <= eps L / C1``."""
    frame = problem.frame
    er = build_edge_regions(frame, params)
    records, searches = [], []
    if er.R is not None:
        top, roots = search_rect(frame, er.R)

        def lab(z, er=er):
            return "omega_i" if er.omega is not None and er.omega.contains(z) else "R_i"

        records += _records(problem, roots, -1, lab)
        searches.append({"n": -1, "rect": er.R.to_dict(), "winding": top.winding,
                         "found": sum(r.multiplicity for r in roots)})
    for n in (n_range(problem, params) if ns is None else ns):
        fam = build_regions(frame, n, params.eps, params.kappa, params.delta1)
        top, roots = search_rect(frame, fam.D)
        records += _records(problem, roots, n, fam.label)
        searches.append({"n": n, "rect": fam.D.to_dict(), "winding": top.winding,
                         "found": sum(r.multiplicity for r in roots)})
    return {"edge": problem.describe(), "regions": er.to_dict(), "searches": searches,
            "records": records}


# ---------------------------------------------------------------- theorem checks

def omega_i_check(problem: EdgeProblem, params: LabParams) -> dict:
    er = build_edge_regions(problem.frame, params)
    if er.omega is None:
        return {"vacuous": True, "winding": 0, "valid": True, "passed": True}
    f = lambda z: ak.rescaled_residual(z, problem.frame)
    try:
        cert = winding_count(f, er.omega)
    except InconclusiveContour as exc:
        c = exc.certificate
        return {"vacuous": False, "winding": None, "valid": False, "passed": False,
                "certificate": None if c is None else c.to_dict()}
    return {"vacuous": False, "region": er.omega.to_dict(), "winding": cert.winding,
            "valid": cert.valid, "passed": cert.valid and cert.winding == 0,
            "certificate": cert.to_dict()}


def omega_tilde_check(problem: EdgeProblem, fam: RegionFamily, params: LabParams) -> dict:
    out = {"n": fam.n, "regime": fam.regime}
    if fam.omega_tilde is None:
        out.update(vacuous=True, passed=True)
        return out
    f = lambda z: ak.rescaled_residual(z, problem.frame)
    fp = lambda z: ak.rescaled_residual_prime(z, problem.frame)
    try:
        cert = winding_count(f, fam.omega_tilde)
    except InconclusiveContour:
        out.update(vacuous=False, winding=None, valid=False, passed=False)
        return out
    out.update(vacuous=False, region=fam.omega_tilde.to_dict(), winding=cert.winding,
               valid=cert.valid, certificate=cert.to_dict())
    if cert.winding == 1:
        roots = locate_all_roots(f, fp, cert.region, top=cert)
        z = roots[0].root
        out.update(re_z=z.real, im_z=z.imag,
                   width_ratio=abs(z.imag) * params.eps * fam.L / (fam.n + 1) ** 2)
    out["passed"] = bool(cert.valid and cert.winding == 1)
    return out


def verify_uniqueness_abcd(problem: EdgeProblem, fam: RegionFamily, params: LabParams) -> dict:
    """Dichotomy check for a Figure-1 gap.

    The image of the boundary of ABCD under ``f_L`` is traced adaptively; if
    the target ``-(1/L) exp(-i theta(E0))`` lies inside it, ABCD must carry
    exactly one zero with ``|Im z| <= Delta_n``; otherwise EFGH must carry one.
    """
    frame = problem.frame
    out = {"n": fam.n, "regime": fam.regime}
    if fam.regime != "figure1" or fam.abcd is None or fam.omega_polygon is None:
        out.update(applicable=False, passed=True)
        return out
    out["applicable"] = True
    f = lambda z: ak.rescaled_residual(z, frame)
    fp = lambda z: ak.rescaled_residual_prime(z, frame)
    try:
        om = polygon_winding(f, fam.omega_polygon)
    except (ak.PoleError, ak.BranchCutError) as exc:
        out.update(passed=False, error=str(exc))
        return out
    out["omega_winding"] = om.winding
    out["omega_valid"] = om.valid
    target = ak.edge_target(frame)
    try:
        img = image_curve(lambda z: ak.f_L(z, frame), fam.abcd.vertices(), reference=target)
        simple = is_simple(img)
        inside = winding_about(img, target) != 0
    except (RuntimeError, ak.PoleError) as exc:
        out.update(passed=False, error=f"inconclusive image: {exc}")
        return out
    ab = img.w[(img.z.imag == 0)]
    out.update(image_simple=simple, target_inside=inside, image_points=int(img.w.size),
               ab_max_imag=float(np.abs(ab.imag).max()) if ab.size else 0.0)
    # MNOP case of the dichotomy: target modulus against C / x0
    out["mnop_case"] = bool(abs(target) < params.mnop_C / fam.x0)
    try:
        if inside:
            cert = winding_count(f, fam.abcd)
            out.update(abcd_winding=cert.winding, abcd_valid=cert.valid)
            ok = cert.valid and cert.winding == 1
            if cert.winding == 1:
                z = locate_all_roots(f, fp, cert.region, top=cert)[0].root
                out.update(re_z=z.real, im_z=z.imag, within_delta=abs(z.imag) <= fam.Delta_n)
                ok = ok and abs(z.imag) <= fam.Delta_n
        else:
            cert = winding_count(f, fam.efgh)
            out.update(efgh_winding=cert.winding, efgh_valid=cert.valid)
            ok = cert.valid and cert.winding >= 1
    except InconclusiveContour as exc:
        out.update(error=str(exc))
        ok = False
    out["passed"] = bool(ok and om.valid and om.winding >= 1)
    return out


def free_certificates(problem: EdgeProblem, fam: RegionFamily, params: LabParams) -> list:
    certs = []
    for name, rect in fam.free_regions().items():
        if name == "deep_strip":
            pred = ("imag", 1 / (params.eps * fam.L))
        else:
            pred = ("modulus", 1 / fam.Delta_n)
        certs.append(certify_free_region(rect, problem.frame, params.grid_density,
                                         f"n={fam.n}:{name}", pred))
    return certs


def verify_gap(problem: EdgeProblem, n: int, params: LabParams) -> dict:
    """Everything checked for one gap ``[lambda~_n, lambda~_{n+1}]``."""
    fam = build_regions(problem.frame, n, params.eps, params.kappa, params.delta1)
    eta = params.eta_value
    L = problem.L
    out = {"n": n, "regions": fam.to_dict()}
    certs = free_certificates(problem, fam, params)
    out["free_certificates"] = [c.to_dict() for c in certs]
    top, roots = search_rect(problem.frame, fam.D)
    recs = _records(problem, roots, n, fam.label)
    out["search"] = {"winding": top.winding, "certificate": top.to_dict(),
                     "found": sum(r.multiplicity for r in recs)}
    out["records"] = [r.to_dict() for r in recs]
    out["roots_in_free_regions"] = [r.to_dict() for r in recs
                                    if r.region in fam.free_regions()]
    out["omega_tilde_regime"] = bool(n < eta * L / math.log(L))
    if out["omega_tilde_regime"]:
        out["theorem_unique"] = omega_tilde_check(problem, fam, params)
    if fam.regime == "figure1":
        out["theorem_existence"] = verify_uniqueness_abcd(problem, fam, params)
    return out, recs


def verify_edge(problem: EdgeProblem, params: LabParams = LabParams(), ns=None,
                executor=None) -> dict:
    """Full certificate report for one band edge; gap tasks may run on ``executor``."""
    ns = list(n_range(problem, params) if ns is None else ns)
    er = build_edge_regions(problem.frame, params)
    report = {"edge": problem.describe(), "params": params.to_dict(),
              "edge_regions": er.to_dict()}
    report["theorem_empty"] = omega_i_check(problem, params)
    r_certs = []
    if er.R_strip is not None:
        r_certs.append(certify_free_region(er.R_strip, problem.frame, params.grid_density,
                                           "R_strip", ("imag", 1 / (params.eps * problem.L))))
    report["edge_free_certificates"] = [c.to_dict() for c in r_certs]
    if er.R is not None:
        top, roots = search_rect(problem.frame, er.R)
        recs = _records(problem, roots, -1,
                        lambda z: "omega_i" if er.omega is not None and er.omega.contains(z) else "R_i")
        report["R_search"] = {"winding": top.winding, "records": [r.to_dict() for r in recs]}
    else:
        recs = []
    task = lambda n: verify_gap(problem, n, params)
    results = list(executor.map(task, ns)) if executor is not None else [task(n) for n in ns]
    report["gaps"] = [r[0] for r in results]
    all_recs = recs + [x for r in results for x in r[1]]
    report["lower_half_plane"] = {
        "count": len(all_recs),
        "max_im_E": max((r.E.imag for r in all_recs), default=None),
        "max_residual": max((r.residual for r in all_recs if r.resolved), default=None),
        "passed": all(r.check(params.tol) for r in all_recs if r.resolved),
    }
    report["summary"] = summarize_edge(report)
    return report


def summarize_edge(report: dict) -> dict:
    gaps = report["gaps"]
    uniq = [g["theorem_unique"] for g in gaps if "theorem_unique" in g]
    exist = [g["theorem_existence"] for g in gaps
             if g.get("theorem_existence", {}).get("applicable")]
    frees = [c for g in gaps for c in g["free_certificates"]] + report["edge_free_certificates"]
    widths = [u["width_ratio"] for u in uniq if "width_ratio" in u]
    return {
        "empty_region_passed": report["theorem_empty"]["passed"],
        "unique_passed": all(u["passed"] for u in uniq),
        "unique_count": len(uniq),
        "width_constant": max(widths) if widths else None,
        "existence_passed": all(e["passed"] for e in exist),
        "existence_count": len(exist),
        "target_inside_count": sum(1 for e in exist if e.get("target_inside")),
        "free_grid_passed": all(c["passed"] for c in frees),
        "free_zero_free": all(c["zero_free"] for c in frees),
        "free_min_margin": min((c["margin_ratio"] for c in frees), default=None),
        "roots_in_free_regions": sum(len(g["roots_in_free_regions"]) for g in gaps),
        "lower_half_plane_passed": report["lower_half_plane"]["passed"],
    }


# ---------------------------------------------------------------- studies

@dataclass
class ScalingReport:
    points: list
    slope: float | None
    intercept: float | None
    r_squared: float | None
    per_L: dict
    spearman: float | None
    bound_constant: float | None
    passed: bool
    note: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def scaling_study(V: PeriodicPotential, band_index: int, side: str, L_grid,
                  params: LabParams = LabParams()) -> ScalingReport:
    """Fit ``log |Im z_n|`` against ``log((n+1)^2 / (eps L))`` over all found gaps."""
    L_grid = list(L_grid)
    if len({L % V.p for L in L_grid}) > 1:
        raise ValueError("L_grid entries must share the residue mod p")
    bs = band_structure(V)
    pts, per_L = [], {}
    for L in L_grid:
        prob = prepare_edge(V, L, band_index, side, bs)
        found = find_resonances_near_edge(prob, params)
        best = {}
        for r in found["records"]:
            if r.n < 0 or not r.resolved or r.z.imag >= 0:
                continue
            # the resonance closest to the real axis in each gap
            if r.n not in best or abs(r.z.imag) < abs(best[r.n].z.imag):
                best[r.n] = r
        rows = []
        for n, r in sorted(best.items()):
            x = (n + 1) ** 2 / (params.eps * L)
            rows.append({"L": L, "n": n, "im_z": r.z.imag, "x": x,
                         "omega_tilde_regime": n < params.eta_value * L / math.log(L)})
        pts += rows
        per_L[L] = {"count": len(rows),
                    "bound_constant": max((abs(p["im_z"]) / p["x"] for p in rows), default=None)}
    if len(pts) < MIN_SCALING_POINTS:
        return ScalingReport(pts, None, None, None, per_L, None, None, False,
                             note=f"insufficient resonance count ({len(pts)} < {MIN_SCALING_POINTS})")
    x = np.log([p["x"] for p in pts])
    y = np.log([abs(p["im_z"]) for p in pts])
    fit = stats.linregress(x, y)
    per_L_slopes = {}
    for L in L_grid:
        sel = [i for i, p in enumerate(pts) if p["L"] == L]
        if len(sel) >= 3:
            per_L_slopes[L] = float(stats.linregress(x[sel], y[sel]).slope)
    for L, s in per_L_slopes.items():
        per_L[L]["slope"] = s
    rho = None
    spear = [stats.spearmanr([p["n"] for p in pts if p["L"] == L],
                             [abs(p["im_z"]) for p in pts if p["L"] == L]).statistic
             for L in L_grid if per_L[L]["count"] >= 3]
    if spear:
        rho = float(min(spear))
    C = max(abs(p["im_z"]) / p["x"] for p in pts)
    r2 = float(fit.rvalue**2)
    passed = bool(0.8 <= fit.slope <= 1.2 and r2 >= 0.9)
    return ScalingReport(pts, float(fit.slope), float(fit.intercept), r2, per_L, rho, C, passed)


@dataclass
class ClassificationReport:
    E0: float
    analytic: list
    empirical: list
    agree: bool

    def to_dict(self):
        return dict(self.__dict__)


def _empirical_class(frame: RescaledFrame, count: int = 8) -> dict:
    lam = frame.local_lambdas
    w = frame.local_weights
    sel = lam > 0
    lam, w = lam[sel][:count], w[sel][:count]
    if lam.size < 3:
        return {"case": "indeterminate", "slope": None}
    fit = stats.linregress(np.log(lam), np.log(w))
    # a_k ~ 1/L gives slope 0 in lambda~; a_k ~ |lambda-E0|/L gives slope 1
    case = "generic" if fit.slope > 0.5 else "nongeneric"
    return {"case": case, "slope": float(fit.slope), "r_squared": float(fit.rvalue**2),
            "first_weights": [float(x) for x in w[:4]]}


def classify_and_crosscheck(V: PeriodicPotential, band_index: int, side: str, L_grid,
                            eps: float = 0.1) -> ClassificationReport:
    """Analytic edge class for each residue ``j`` against a regression of the weights."""
    bs = band_structure(V)
    analytic, empirical = {}, []
    for L in L_grid:
        prob = prepare_edge(V, L, band_index, side, bs)
        j = L % V.p
        analytic.setdefault(j, prob.classification.to_dict())
        emp = _empirical_class(prob.frame)
        emp.update(L=L, j=j)
        empirical.append(emp)
    agree = all(e["case"] == analytic[e["j"]]["case"] for e in empirical
                if analytic[e["j"]]["case"] != "indeterminate" and e["case"] != "indeterminate")
    E0 = bs.bands[band_index][0 if side == "left" else 1]
    return ClassificationReport(float(E0), [analytic[j] for j in sorted(analytic)], empirical, agree)


def search_nongeneric(rng: np.random.Generator, trials: int = 50, periods=(2, 3),
                      amplitude: float = 2.0, check_blocks: int = 200) -> list[dict]:
    """Random potentials scanned for edges with ``d_{j+1} = 0``.

    Each hit is re-checked on ``L = check_blocks * p + j`` by regressing the
    edge weights (``empirical`` is the resulting class).
    """
    hits = []
    for _ in range(trials):
        p = int(rng.choice(periods))
        V = PeriodicPotential(tuple(rng.uniform(-amplitude, amplitude, p)))
        try:
            bs = band_structure(V)
        except RuntimeError:
            continue
        for i, (lo, hi) in enumerate(bs.bands):
            for side, E0 in (("left", lo), ("right", hi)):
                for j in range(p):
                    cls = classify_band_edge(E0, j, V)
                    if cls.case != "nongeneric":
                        continue
                    prob = prepare_edge(V, check_blocks * p + j, i, side, bs)
                    emp = _empirical_class(prob.frame)
                    hits.append({"V": V.to_dict(), "E0": float(E0), "band": i, "side": side,
                                 "j": j, "d": cls.d, "empirical": emp["case"],
                                 "weight_slope": emp["slope"]})
    return hits


def records_csv(records) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "region", "re_z", "im_z", "re_E", "im_E", "multiplicity", "residual"])
    for r in records:
        d = r if isinstance(r, dict) else r.to_dict()
        wr.writerow([d["n"], d["region"], repr(d["re_z"]), repr(d["im_z"]), repr(d["re_E"]),
                     repr(d["im_E"]), d["multiplicity"], repr(d["residual"])])
    return buf.getvalue()
