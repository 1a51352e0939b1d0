"""Zero counting and localization for analytic functions on rectangles.

Winding numbers come from tracking the argument of ``f`` along an adaptively
sampled boundary.  An interval is refined until the image chord is at most
half the distance of its endpoints from the origin, which keeps every
argument step below pi/6 and rules out the image sneaking around zero.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

Analytic = Callable[[np.ndarray], np.ndarray]

CHORD_RATIO = 0.5
BOUNDARY_ZERO_REL = 1e-10
MAX_DILATIONS = 5
MAX_SAMPLES = 400_000
MAX_INTERVAL_DEPTH = 40
SPLIT_OFFSETS = (0.0, 0.0731, -0.0613, 0.1379, -0.1171, 0.2013)


class InconclusiveContour(RuntimeError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class RefinementBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Rectangle:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def width(self) -> float:
        return self.re_max - self.re_min

    @property
    def height(self) -> float:
        return self.im_max - self.im_min

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def vertices(self) -> np.ndarray:
        """Counterclockwise, starting at the lower-left corner."""
        return np.array([
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
        ])

    def contains(self, z, slack: float = 0.0) -> bool:
        return (self.re_min - slack <= z.real <= self.re_max + slack
                and self.im_min - slack <= z.imag <= self.im_max + slack)

    def dilate(self, frac: float) -> "Rectangle":
        dx, dy = frac * self.width / 2, frac * self.height / 2
        return Rectangle(self.re_min - dx, self.re_max + dx, self.im_min - dy, self.im_max + dy)

    def quadrants(self, sx: float = 0.5, sy: float = 0.5) -> list["Rectangle"]:
        xm = self.re_min + sx * self.width
        ym = self.im_min + sy * self.height
        return [
            Rectangle(self.re_min, xm, self.im_min, ym),
            Rectangle(xm, self.re_max, self.im_min, ym),
            Rectangle(xm, self.re_max, ym, self.im_max),
            Rectangle(self.re_min, xm, ym, self.im_max),
        ]

    def to_dict(self):
        return {"re_min": self.re_min, "re_max": self.re_max,
                "im_min": self.im_min, "im_max": self.im_max}


@dataclass
class ZeroCertificate:
    winding: int
    min_modulus_on_contour: float
    samples_used: int
    refinement_depth: int
    valid: bool = True
    median_modulus: float = float("nan")
    max_arg_step: float = float("nan")
    dilations: int = 0
    region: Rectangle | None = None
    note: str = ""

    def to_dict(self):
        out = {
            "winding": self.winding,
            "min_modulus_on_contour": self.min_modulus_on_contour,
            "median_modulus": self.median_modulus,
            "samples_used": self.samples_used,
            "refinement_depth": self.refinement_depth,
            "max_arg_step": self.max_arg_step,
            "dilations": self.dilations,
            "valid": self.valid,
        }
        if self.region is not None:
            out["region"] = self.region.to_dict()
        if self.note:
            out["note"] = self.note
        return out


def _closed_polygon(vertices, per_edge: int) -> tuple[np.ndarray, np.ndarray]:
    vertices = np.asarray(vertices, dtype=complex)
    pts, edge_of = [], []
    t = np.linspace(0.0, 1.0, per_edge, endpoint=False)
    for k in range(len(vertices)):
        a, b = vertices[k], vertices[(k + 1) % len(vertices)]
        pts.append(a + (b - a) * t)
        edge_of.append(np.full(per_edge, k))
    pts.append(vertices[:1])
    edge_of.append(np.array([len(vertices) - 1]))
    return np.concatenate(pts), np.concatenate(edge_of)


def _refine(f: Analytic, z: np.ndarray, w: np.ndarray, needs, max_samples: int,
            max_depth: int):
    """Insert midpoints wherever ``needs(w_a, w_b)`` flags an interval."""
    depth = np.zeros(z.size - 1, dtype=int)
    rounds = 0
    while True:
        flag = needs(w[:-1], w[1:]) & (depth < max_depth)
        if not flag.any():
            return z, w, int(depth.max(initial=0)), True
        if z.size + flag.sum() > max_samples:
            return z, w, int(depth.max(initial=0)), False
        idx = np.nonzero(flag)[0]
        mid = 0.5 * (z[idx] + z[idx + 1])
        wm = np.asarray(f(mid), dtype=complex)
        z = np.insert(z, idx + 1, mid)
        w = np.insert(w, idx + 1, wm)
        nd = depth[idx] + 1
        depth = np.insert(depth, idx + 1, nd)
        depth[idx + np.arange(idx.size)] = nd
        rounds += 1


def _chord_flags(wa, wb):
    return np.abs(wb - wa) > CHORD_RATIO * np.minimum(np.abs(wa), np.abs(wb))


def _midpoint_refine(f: Analytic, z: np.ndarray, w: np.ndarray, max_samples: int,
                     max_depth: int):
    """Chord refinement that also probes each interval's midpoint.

    Endpoint values alone alias a nearby multiple zero: f ~ (z - r)^2 takes
    almost the same value at r - s and r + s while arg f turns by 2 pi.
    An interval is accepted only once its midpoint agrees with the chord.
    """
    depth = np.zeros(z.size - 1, dtype=int)
    done = np.zeros(z.size - 1, dtype=bool)
    while True:
        idx = np.nonzero(~done & (depth < max_depth))[0]
        if idx.size == 0:
            return z, w, int(depth.max(initial=0)), bool(done.all())
        mid = 0.5 * (z[idx] + z[idx + 1])
        wm = np.asarray(f(mid), dtype=complex)
        wa, wb = w[idx], w[idx + 1]
        small = np.minimum(np.minimum(np.abs(wa), np.abs(wb)), np.abs(wm))
        bad = _chord_flags(wa, wb) | (np.abs(wm - 0.5 * (wa + wb)) > CHORD_RATIO * small)
        done[idx[~bad]] = True
        split = idx[bad]
        if split.size == 0:
            continue
        if z.size + split.size > max_samples:
            return z, w, int(depth.max(initial=0)), False
        nd = depth[split] + 1
        z = np.insert(z, split + 1, mid[bad])
        w = np.insert(w, split + 1, wm[bad])
        depth = np.insert(depth, split + 1, nd)
        done = np.insert(done, split + 1, False)
        depth[split + np.arange(split.size)] = nd


def _arg_track(f: Analytic, vertices, per_edge: int = 32,
               max_samples: int = MAX_SAMPLES) -> ZeroCertificate:
    z, _ = _closed_polygon(vertices, per_edge)
    w = np.asarray(f(z), dtype=complex)
    z, w, depth, converged = _midpoint_refine(f, z, w, max_samples, MAX_INTERVAL_DEPTH)
    mod = np.abs(w)
    min_mod = float(mod.min())
    med = float(np.median(mod))
    if min_mod == 0.0:
        return ZeroCertificate(0, 0.0, z.size, depth, False, med, float("nan"),
                               note="exact zero on contour")
    steps = np.angle(w[1:] / w[:-1])
    total = steps.sum() / (2 * math.pi)
    winding = int(round(total))
    max_step = float(np.abs(steps).max())
    valid = (converged and min_mod > BOUNDARY_ZERO_REL * med and max_step < math.pi / 2
             and abs(total - winding) < 1e-6)
    note = "" if converged else "refinement budget exhausted"
    if converged and not min_mod > BOUNDARY_ZERO_REL * med:
        note = "boundary zero suspected"
    return ZeroCertificate(winding, min_mod, int(z.size), depth, bool(valid), med, max_step,
                           note=note)


def polygon_winding(f: Analytic, vertices, per_edge: int = 32) -> ZeroCertificate:
    """Zeros minus poles of ``f`` inside a counterclockwise polygon (no dilation)."""
    return _arg_track(f, vertices, per_edge)


def winding_count(f: Analytic, rect: Rectangle, per_edge: int = 32,
                  dilate: bool = True) -> ZeroCertificate:
    """Certified number of zeros of ``f`` inside ``rect``.

    A suspected boundary zero dilates the rectangle by 1% (at most five
    times); the certificate records the rectangle actually used.
    """
    current = rect
    for attempt in range(MAX_DILATIONS + 1):
        cert = _arg_track(f, current.vertices(), per_edge)
        cert.region = current
        cert.dilations = attempt
        if cert.valid or not dilate:
            break
        current = current.dilate(0.01)
    if not cert.valid:
        raise InconclusiveContour(f"winding on {rect} inconclusive: {cert.note}", cert)
    return cert


def refine_root(f: Analytic, fprime: Analytic, seed: complex, tol: float = 1e-12,
                box: Rectangle | None = None, scale: float = 1.0, max_steps: int = 100) -> complex:
    """Damped Newton iteration; raises if it diverges or leaves ``box``."""
    z = complex(seed)
    fz = complex(f(np.array([z]))[0])
    for _ in range(max_steps):
        d = complex(fprime(np.array([z]))[0])
        if d == 0 or not np.isfinite(d):
            break
        step = fz / d
        lam = 1.0
        for _ in range(30):
            zn = z - lam * step
            fn = complex(f(np.array([zn]))[0])
            if np.isfinite(fn) and abs(fn) < abs(fz) or abs(fn) == 0:
                break
            lam *= 0.5
        else:
            break
        if box is not None and not box.contains(zn, 0.05 * box.diameter):
            raise ArithmeticError(f"Newton left the search box from seed {seed}")
        moved = abs(zn - z)
        z, fz = zn, fn
        if fz == 0 or moved <= 4 * np.finfo(float).eps * max(1.0, abs(z)):
            break
    if not abs(fz) <= tol * scale:
        raise ArithmeticError(f"Newton did not converge from seed {seed}: |f|={abs(fz):.3e}")
    return z


@dataclass
class RootRecord:
    root: complex
    multiplicity: int
    certificate: ZeroCertificate
    resolved: bool = True


def locate_all_roots(f: Analytic, fprime: Analytic, rect: Rectangle, tol: float = 1e-12,
                     max_depth: int = 40, top: ZeroCertificate | None = None) -> list[RootRecord]:
    """All zeros inside ``rect`` by winding-driven quadrisection plus Newton.

    A cluster that is still unresolved at ``max_depth`` comes back as one
    record at its cell center carrying the cluster's winding as multiplicity.
    """
    if top is None:
        top = winding_count(f, rect)
    out: list[RootRecord] = []
    _locate(f, fprime, top.region or rect, top, tol, 0, max_depth, out)
    out.sort(key=lambda r: (r.root.real, r.root.imag))
    return out


def _locate(f, fprime, rect, cert, tol, depth, max_depth, out):
    m = cert.winding
    if m == 0:
        return
    scale = cert.median_modulus if np.isfinite(cert.median_modulus) else 1.0
    if m == 1:
        try:
            z = refine_root(f, fprime, rect.center, tol, box=rect, scale=scale)
            if rect.contains(z, 1e-9 * rect.diameter):
                out.append(RootRecord(z, 1, cert))
                return
        except ArithmeticError:
            pass
    tiny = 64 * np.finfo(float).eps * max(1.0, abs(rect.center))
    if depth >= max_depth or rect.diameter < tiny:
        z = rect.center
        try:
            z = refine_root(f, fprime, z, tol, box=rect, scale=scale) if m == 1 else z
        except ArithmeticError:
            pass
        out.append(RootRecord(z, m, cert, resolved=m == 1))
        return
    for off in SPLIT_OFFSETS:
        kids = rect.quadrants(0.5 + off, 0.5 - off)
        try:
            certs = [winding_count(f, k, dilate=False) for k in kids]
        except InconclusiveContour:
            continue
        for c, k in zip(certs, kids):
            c.region = k
        if sum(c.winding for c in certs) != m:
            continue
        for k, c in zip(kids, certs):
            _locate(f, fprime, k, c, tol, depth + 1, max_depth, out)
        return
    out.append(RootRecord(rect.center, m, replace(cert, note="unresolved cluster"), resolved=False))


@dataclass
class ContourImage:
    t: np.ndarray
    z: np.ndarray
    w: np.ndarray
    closed: bool
    depth: int = 0
    converged: bool = True
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "re_f", "im_f"])
        for t, w in zip(self.t, self.w):
            wr.writerow([repr(float(t)), repr(float(w.real)), repr(float(w.imag))])
        return buf.getvalue()


def image_curve(f: Analytic, polyline, closed: bool = True, per_edge: int = 64,
                rel_step: float = 0.01, reference: complex | None = None,
                max_samples: int = 200_000) -> ContourImage:
    """Adaptively sampled image of a polyline under ``f``.

    Intervals are refined until each image step is below ``rel_step`` of the
    image's bounding-box diagonal and, with a ``reference`` point, below half
    the distance of the endpoints from it.
    """
    vertices = np.asarray(polyline, dtype=complex)
    if closed:
        z, _ = _closed_polygon(vertices, per_edge)
    else:
        segs = [vertices[k] + (vertices[k + 1] - vertices[k]) * np.linspace(0, 1, per_edge, endpoint=False)
                for k in range(len(vertices) - 1)]
        z = np.concatenate(segs + [vertices[-1:]])
    w = np.asarray(f(z), dtype=complex)
    if not np.all(np.isfinite(w)):
        raise RefinementBudgetExceeded("non-finite image values along the polyline")

    def needs(wa, wb):
        allw = np.concatenate([wa, wb[-1:]])
        diag = math.hypot(np.ptp(allw.real), np.ptp(allw.imag)) or 1.0
        flag = np.abs(wb - wa) > rel_step * diag
        if reference is not None:
            flag |= np.abs(wb - wa) > CHORD_RATIO * np.minimum(np.abs(wa - reference),
                                                              np.abs(wb - reference))
        return flag

    z, w, depth, ok = _refine(f, z, w, needs, max_samples, MAX_INTERVAL_DEPTH)
    if not ok:
        raise RefinementBudgetExceeded(f"image refinement exceeded {max_samples} samples")
    seg = np.abs(np.diff(z))
    t = np.concatenate([[0.0], np.cumsum(seg)])
    t = t / t[-1] if t[-1] > 0 else t
    return ContourImage(t=t, z=z, w=w, closed=closed, depth=depth, converged=ok)


def _orient(a, b, c):
    return (b.real - a.real) * (c.imag - a.imag) - (b.imag - a.imag) * (c.real - a.real)


def is_simple(img: ContourImage, chunk: int = 512) -> bool:
    """True iff no two non-adjacent polyline segments cross."""
    w = img.w
    keep = np.concatenate([[True], np.abs(np.diff(w)) > 0])
    w = w[keep]
    a, b = w[:-1], w[1:]
    n = a.size
    if n < 3:
        return True
    for s in range(0, n, chunk):
        i = np.arange(s, min(n, s + chunk))[:, None]
        j = np.arange(n)[None, :]
        A, B = a[i], b[i]
        C, D = a[j], b[j]
        o1, o2 = _orient(A, B, C), _orient(A, B, D)
        o3, o4 = _orient(C, D, A), _orient(C, D, B)
        cross = (o1 * o2 <= 0) & (o3 * o4 <= 0)
        # collinear pairs only meet if their bounding boxes overlap
        flat = (o1 == 0) & (o2 == 0)
        boxes = ((np.maximum(A.real, B.real) >= np.minimum(C.real, D.real))
                 & (np.maximum(C.real, D.real) >= np.minimum(A.real, B.real))
                 & (np.maximum(A.imag, B.imag) >= np.minimum(C.imag, D.imag))
                 & (np.maximum(C.imag, D.imag) >= np.minimum(A.imag, B.imag)))
        cross &= ~flat | boxes
        adjacent = (np.abs(i - j) <= 1)
        if img.closed:
            adjacent |= ((i == 0) & (j == n - 1)) | ((i == n - 1) & (j == 0))
        if np.any(cross & ~adjacent):
            return False
    return True


def winding_about(img: ContourImage, point: complex) -> int:
    """Winding number of a closed image polyline about ``point``."""
    w = img.w - point
    if np.any(w == 0):
        raise InconclusiveContour("point lies on the image curve")
    if img.closed and w[0] != w[-1]:
        w = np.append(w, w[0])
    return int(round(np.angle(w[1:] / w[:-1]).sum() / (2 * math.pi)))
