"""Command-line front end: ``periodic-resonances <command> [options]``.

Exit codes: 0 ok, 1 usage error, 2 computation failure, 3 certificate failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from . import resonance_lab as rl
from .periodic_model import PeriodicPotential, band_structure
from .tridiag_spectral import (
    assemble,
    check_outside_band_convergence,
    check_spacing_law,
    eigen_decompose,
    enumerate_in_band,
    expected_band_count,
    free_spectrum,
)

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_CERT = 0, 1, 2, 3
COMMANDS = ("bands", "spectrum", "resonances", "verify", "classify", "scaling")
FREE_TOL = 1e-9

log = logging.getLogger("periodic_resonances")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    V: PeriodicPotential
    L_grid: list[int]
    edges: list[tuple[int, str]] | None
    params: rl.LabParams
    out: Path
    threads: int
    spacing_window: float | None = None
    seed: int = 0
    trials: int = 40
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"command": self.command, "potential": self.V.to_dict(), "L_grid": self.L_grid,
                "edges": None if self.edges is None else [list(e) for e in self.edges],
                "params": self.params.to_dict(), "spacing_window": self.spacing_window,
                "seed": self.seed, "trials": self.trials}


def _positive_int(name, v):
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise UsageError(f"config field '{name}' must be a positive integer, got {v!r}")
    return v


def build_config(args) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
    if args.potential is not None:
        try:
            raw["potential"] = {"values": [float(x) for x in args.potential.split(",")]}
        except ValueError as exc:
            raise UsageError(f"--potential: {exc}") from exc
    for key in ("L", "band", "side"):
        if getattr(args, key, None) is not None:
            raw[key] = getattr(args, key)
    if args.L_grid is not None:
        raw["L_grid"] = [int(x) for x in args.L_grid.split(",")]

    if "potential_file" in raw:
        try:
            pot = json.loads(Path(raw["potential_file"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read potential_file: {exc}") from exc
    else:
        pot = raw.get("potential")
    if pot is None:
        raise UsageError("config field 'potential' is required")
    try:
        V = PeriodicPotential.from_dict(pot)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    if "L_grid" in raw:
        if not isinstance(raw["L_grid"], list) or not raw["L_grid"]:
            raise UsageError("config field 'L_grid' must be a non-empty list")
        L_grid = [_positive_int("L_grid", x) for x in raw["L_grid"]]
    elif "L" in raw:
        L_grid = [_positive_int("L", raw["L"])]
    elif args.command in ("bands",):
        L_grid = []
    else:
        raise UsageError("config field 'L' or 'L_grid' is required")
    if args.command == "scaling" and len({L % V.p for L in L_grid}) > 1:
        raise UsageError("config field 'L_grid': entries must share the residue mod p")

    edges = None
    if "band" in raw or "side" in raw:
        band = raw.get("band", 0)
        side = raw.get("side", "left")
        if not isinstance(band, int) or side not in ("left", "right"):
            raise UsageError("config fields 'band' (int) and 'side' ('left'|'right') are invalid")
        edges = [(band, side)]

    keys = ("eps", "kappa", "delta1", "C1", "eta", "mnop_C", "grid_density", "tol")
    kw = {k: raw[k] for k in keys if k in raw}
    if args.tol is not None:
        kw["tol"] = args.tol
    try:
        params = rl.LabParams(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config parameters: {exc}") from exc

    threads = args.threads if args.threads is not None else raw.get("threads", os.cpu_count() or 1)
    _positive_int("threads", threads)
    out = Path(args.out if args.out is not None else raw.get("out", "runs"))
    return RunConfig(command=args.command, V=V, L_grid=L_grid, edges=edges, params=params,
                     out=out, threads=threads, spacing_window=raw.get("spacing_window"),
                     seed=int(raw.get("seed", 0)), trials=int(raw.get("trials", 40)), raw=raw)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)):
        x = float(o)
        return x if math.isfinite(x) else repr(x)
    return o


def dumps(doc) -> str:
    return json.dumps(_clean(doc), default=_json_default, indent=1, sort_keys=True) + "\n"


class Run:
    """Output directory with a manifest of every file written."""

    def __init__(self, cfg: RunConfig):
        stamp = dt.datetime.now().strftime("%Y%m%dT%H%M%S%f")
        self.dir = cfg.out / f"{cfg.command}-{stamp}"
        self.dir.mkdir(parents=True, exist_ok=False)
        self.files: list[str] = []
        self.cfg = cfg

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def write(self, name: str, text: str):
        self.path(name).write_text(text)

    def finish(self, status: str, code: int):
        entries = []
        for name in self.files:
            p = self.dir / name
            if p.exists():
                entries.append({"file": name,
                                "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        manifest = {"created": dt.datetime.now().isoformat(timespec="seconds"),
                    "config": self.cfg.echo(), "status": status, "exit_code": code,
                    "files": entries}
        (self.dir / "manifest.json").write_text(dumps(manifest))


def _edges(cfg: RunConfig, bs, interior_only: bool = True):
    if cfg.edges is not None:
        for band, side in cfg.edges:
            if not 0 <= band < bs.q:
                raise UsageError(f"config field 'band': {band} outside [0, {bs.q - 1}]")
        return cfg.edges
    if interior_only:
        return [(i, s) for i, s, _ in rl.interior_edges(bs)]
    return [(i, s) for i in range(bs.q) for s in ("left", "right")]


def cmd_bands(cfg: RunConfig, run: Run) -> int:
    bs = band_structure(cfg.V)
    rows = ["band,left,right"] + [f"{i},{a!r},{b!r}" for i, (a, b) in enumerate(bs.bands)]
    run.write("bands.csv", "\n".join(rows) + "\n")
    run.write("bands.json", dumps({"potential": cfg.V.to_dict(), **bs.to_dict()}))
    plotting.discriminant_figure(cfg.V, bs, run.path("discriminant.svg"))
    for i, (a, b) in enumerate(bs.bands):
        print(f"band {i}: [{a:.15g}, {b:.15g}]")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, run: Run) -> int:
    bs = band_structure(cfg.V)
    ok = True
    summary = []
    for L in cfg.L_grid:
        sd = eigen_decompose(assemble(cfg.V, L), verify=True)
        run.write(f"spectrum_L{L}.csv", sd.to_csv())
        wsum = sd.weight_sum()
        entry = {"L": L, "weight_sum": wsum, "weight_sum_ok": abs(wsum - 1) <= 1e-10}
        ok &= entry["weight_sum_ok"]
        if all(v == 0 for v in cfg.V.values):
            lam, a = free_spectrum(L)
            err = (float(np.abs(sd.lambdas - lam).max()), float(np.abs(sd.weights - a).max()))
            entry["free_case"] = {"max_lambda_error": err[0], "max_weight_error": err[1],
                                  "match": max(err) <= FREE_TOL}
            ok &= entry["free_case"]["match"]
        counts = []
        for i, band in enumerate(bs.bands):
            got = len(enumerate_in_band(sd, band, i, slack=1e-9))
            exp = expected_band_count(cfg.V, bs, i, L)
            counts.append({"band": i, "count": got, "expected": exp,
                           "within_2": abs(got - exp) <= 2})
        entry["band_counts"] = counts
        ok &= all(c["within_2"] for c in counts)
        spacing = []
        for band, side in _edges(cfg, bs):
            prob = rl.prepare_edge(cfg.V, L, band, side, bs)
            try:
                rep = check_spacing_law(prob.enum, prob.frame.E0, cfg.params.eps, L,
                                        j=L % cfg.V.p, window=cfg.spacing_window)
                spacing.append({"band": band, "side": side, **rep.to_dict()})
                ok &= rep.passed
            except RuntimeError as exc:
                spacing.append({"band": band, "side": side, "error": str(exc)})
        entry["spacing"] = spacing
        summary.append(entry)
        print(f"L={L}: sum a_k = {wsum:.16f}")
    doc = {"config": cfg.echo(), "spectra": summary}
    if len(cfg.L_grid) > 1 and len({L % cfg.V.p for L in cfg.L_grid}) == 1:
        doc["outside_band"] = check_outside_band_convergence(cfg.V, sorted(cfg.L_grid), bs).to_dict()
    run.write("spectrum_report.json", dumps(doc))
    return EXIT_OK if ok else EXIT_CERT


def cmd_resonances(cfg: RunConfig, run: Run) -> int:
    bs = band_structure(cfg.V)
    ok = True
    docs = []
    for L in cfg.L_grid:
        for band, side in _edges(cfg, bs):
            prob = rl.prepare_edge(cfg.V, L, band, side, bs)
            found = rl.find_resonances_near_edge(prob, cfg.params)
            recs = found["records"]
            tag = f"L{L}_b{band}{side[0]}"
            run.write(f"resonances_{tag}.csv", rl.records_csv(recs))
            doc = {**found, "records": [r.to_dict() for r in recs]}
            ok &= all(r.check(cfg.params.tol) for r in recs if r.resolved)
            docs.append(doc)
            plotting.edge_figure({"edge": doc["edge"], "gaps": [{"records": doc["records"]}]},
                                 run.path(f"resonances_{tag}.svg"))
            for r in recs:
                print(f"L={L} band {band} {side}: n={r.n:3d} {r.region:12s} E={r.E:.15g}")
    run.write("resonances.json", dumps({"config": cfg.echo(), "edges": docs}))
    return EXIT_OK if ok else EXIT_CERT


def verify_document(cfg: RunConfig) -> tuple[dict, bool]:
    bs = band_structure(cfg.V)
    reports = []
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        for L in cfg.L_grid:
            for band, side in _edges(cfg, bs):
                prob = rl.prepare_edge(cfg.V, L, band, side, bs)
                reports.append(rl.verify_edge(prob, cfg.params, executor=pool))
    keys = ("empty_region_passed", "unique_passed", "existence_passed", "free_grid_passed",
            "lower_half_plane_passed")
    passed = all(r["summary"][k] for r in reports for k in keys)
    return {"config": cfg.echo(), "reports": reports, "passed": passed}, passed


def cmd_verify(cfg: RunConfig, run: Run) -> int:
    doc, passed = verify_document(cfg)
    run.write("verify.json", dumps(doc))
    for rep in doc["reports"]:
        e = rep["edge"]
        tag = f"L{e['L']}_b{e['band']}{e['side'][0]}"
        plotting.edge_figure(rep, run.path(f"edge_{tag}.svg"))
        if rep["gaps"]:
            g = rep["gaps"][0]
            plotting.region_figure(g, run.path(f"regions_{tag}_n0.svg"), g["records"])
        s = rep["summary"]
        print(f"L={e['L']} band {e['band']} {e['side']} ({e['classification']['case']}): "
              + ", ".join(f"{k}={v}" for k, v in s.items()))
    return EXIT_OK if passed else EXIT_CERT


def cmd_classify(cfg: RunConfig, run: Run) -> int:
    bs = band_structure(cfg.V)
    reports = []
    for band, side in _edges(cfg, bs, interior_only=False):
        rep = rl.classify_and_crosscheck(cfg.V, band, side, cfg.L_grid, cfg.params.eps)
        reports.append({"band": band, "side": side, **rep.to_dict()})
        cases = ", ".join(f"j={a['j']}:{a['case']}" for a in rep.analytic)
        print(f"band {band} {side} E0={rep.E0:.15g}: {cases}; empirical agrees={rep.agree}")
    hits = rl.search_nongeneric(np.random.default_rng(cfg.seed), cfg.trials)
    run.write("classify.json", dumps({"config": cfg.echo(), "edges": reports,
                                      "nongeneric_search": {"seed": cfg.seed,
                                                            "trials": cfg.trials,
                                                            "hits": hits}}))
    return EXIT_OK if all(r["agree"] for r in reports) else EXIT_CERT


def cmd_scaling(cfg: RunConfig, run: Run) -> int:
    bs = band_structure(cfg.V)
    reports, ok = [], True
    for band, side in _edges(cfg, bs):
        rep = rl.scaling_study(cfg.V, band, side, cfg.L_grid, cfg.params)
        reports.append({"band": band, "side": side, **rep.to_dict()})
        plotting.scaling_figure(rep.points, rep.slope, rep.intercept,
                                run.path(f"scaling_b{band}{side[0]}.svg"))
        ok &= rep.passed
        print(f"band {band} {side}: slope={rep.slope} R2={rep.r_squared} passed={rep.passed}"
              + (f" ({rep.note})" if rep.note else ""))
    run.write("scaling.json", dumps({"config": cfg.echo(), "studies": reports}))
    return EXIT_OK if ok else EXIT_CERT


HANDLERS = {"bands": cmd_bands, "spectrum": cmd_spectrum, "resonances": cmd_resonances,
            "verify": cmd_verify, "classify": cmd_classify, "scaling": cmd_scaling}


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="periodic-resonances",
                description="Resonances of truncated periodic Jacobi operators near band edges.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="parent directory for run outputs (default: runs)")
    p.add_argument("--threads", type=int, help="worker threads (default: CPU count)")
    p.add_argument("--tol", type=float, help="residual tolerance for reported resonances")
    p.add_argument("--potential", help="comma-separated potential values (overrides config)")
    p.add_argument("--L", type=int, help="truncation length (overrides config)")
    p.add_argument("--L-grid", dest="L_grid", help="comma-separated truncation lengths")
    p.add_argument("--band", type=int, help="band index of the edge")
    p.add_argument("--side", choices=("left", "right"), help="which edge of the band")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        cfg = build_config(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = Run(cfg)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        code = HANDLERS[cfg.command](cfg, run)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        run.finish("usage error", EXIT_USAGE)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 2
        log.exception("computation failed")
        print(f"computation failure: {exc}", file=sys.stderr)
        run.finish(f"computation failure: {exc}", EXIT_COMPUTE)
        return EXIT_COMPUTE
    run.finish("ok" if code == EXIT_OK else "certificate failure", code)
    print(f"outputs: {run.dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
