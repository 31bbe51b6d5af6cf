"""Command-line front end and benchmark harness.

Subcommands::

    fracrkm bench        sweep (method, s, k), write CSV + JSON sidecar, fit rates
    fracrkm solve        one solve, write the solution vector and metadata
    fracrkm poles        list snapshots / poles of a generator
    fracrkm bura-export  write a best approximation of z^{-s} to JSON

Every option can also come from a flat JSON config (``--config``); flags given
on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import densecore, rational, schemes
from .errors import FracRKMError, InvalidArgument, ResourceLimit
from .krylov import PoleSet
from .operator import (
    OperatorPencil,
    SpectralInterval,
    load_pencil,
    m_norm,
    make_fd_laplacian_1d,
    make_fd_laplacian_2d,
    spectral_interval,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "s", "k", "n", "error_M", "wall_time_s")
DEFAULT_METHODS = ("zolo", "greedy", "bura", "sinc", "direct")
FIT_WINDOW = (1e-12, 1e-1)

DEFAULTS = {
    "problem": "fd2d",
    "n": 100,
    "nx": 31,
    "stiffness": None,
    "mass": None,
    "rhs": "ones",
    "seed": 0,
    "methods": ",".join(DEFAULT_METHODS),
    "s": "0.2,0.5,0.8",
    "k_min": 1,
    "k_max": 20,
    "kstar": 0.15,
    "s_min": 0.2,
    "s_max": 0.8,
    "greedy_size": schemes.GREEDY_GRID_SIZE,
    "tol": 1e-3,
    "workers": 4,
    "out_dir": "fracrkm-out",
}


# ---------------------------------------------------------------------------
# records and rate fits


@dataclass
class ConvergenceRecord:
    method: str
    s: float
    k: int
    n: int
    error_M: float
    wall_time_s: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 0:
            raise InvalidArgument(f"k must be nonnegative, got {self.k}")
        if not (math.isnan(self.error_M) or self.error_M >= 0):
            raise InvalidArgument(f"error must be nonnegative, got {self.error_M}")

    def row(self) -> list[str]:
        return [self.method, repr(self.s), str(self.k), str(self.n), repr(self.error_M), repr(self.wall_time_s)]


@dataclass
class RateFit:
    method: str
    s: float
    rate: float
    r_squared: float
    k_window: tuple = ()


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(rec.row())


def read_csv(path) -> list[ConvergenceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise InvalidArgument(f"{path}: unexpected CSV header {rows[0] if rows else None}")
    return [
        ConvergenceRecord(m, float(s), int(k), int(n), float(e), float(t)) for m, s, k, n, e, t in rows[1:]
    ]


def fit_rate(ks, errors, method: str = "", s: float = math.nan, window=FIT_WINDOW) -> RateFit:
    """Least-squares fit of log(error) = log(A) - rate * k.

    Uses the longest run of consecutive entries with error inside ``window``,
    which cuts off the pre-asymptotic head and the rounding floor.  A
    stagnation plateau above the window's lower edge is cut as well: the run
    ends at the first entry after which the error stops decreasing and never
    gains another decade.  Fewer than two usable points give a nan rate.
    """
    ks = np.asarray(ks, dtype=float)
    errs = np.asarray(errors, dtype=float)
    order = np.argsort(ks)
    ks, errs = ks[order], errs[order]
    ok = np.isfinite(errs) & (errs >= window[0]) & (errs <= window[1])
    best, start = (0, 0), None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    lo, hi = best
    for i in range(lo, hi - 1):
        if errs[i + 1] >= errs[i] and errs[i + 1 : hi].min() > 0.1 * errs[i]:
            hi = i + 1
            break
    if hi - lo < 2:
        return RateFit(method, s, math.nan, math.nan, ())
    x, y = ks[lo:hi], np.log(errs[lo:hi])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(method, s, float(-slope), r2, (int(x[0]), int(x[-1])))


# ---------------------------------------------------------------------------
# problem setup


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _names(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        names = [str(v) for v in text]
    else:
        names = [v.strip() for v in str(text).split(",") if v.strip()]
    if names == ["all"]:
        names = list(DEFAULT_METHODS)
    bad = [m for m in names if m not in schemes.METHODS]
    if bad:
        raise InvalidArgument(f"unknown method(s) {bad}; choose from {list(schemes.METHODS)}")
    return names


def build_problem(cfg: dict) -> tuple[OperatorPencil, np.ndarray]:
    kind = cfg["problem"]
    if kind == "fd1d":
        pencil = make_fd_laplacian_1d(int(cfg["n"]))
    elif kind == "fd2d":
        pencil = make_fd_laplacian_2d(int(cfg["nx"]))
    elif kind == "files":
        if not cfg.get("stiffness"):
            raise InvalidArgument("problem 'files' needs --stiffness (and optionally --mass)")
        pencil = load_pencil(cfg["stiffness"], cfg.get("mass"))
    else:
        raise InvalidArgument(f"unknown problem {kind!r}; choose fd1d, fd2d or files")
    if cfg["rhs"] == "ones":
        b = np.ones(pencil.n)
    elif cfg["rhs"] == "random":
        b = np.random.default_rng(int(cfg["seed"])).standard_normal(pencil.n)
    else:
        raise InvalidArgument(f"unknown right-hand side {cfg['rhs']!r}; choose ones or random")
    return pencil, b


class _Memo:
    """Thread-safe compute-once table."""

    def __init__(self):
        self._lock = threading.Lock()
        self._events: dict = {}
        self._values: dict = {}

    def get(self, key, fn):
        with self._lock:
            ev = self._events.get(key)
            owner = ev is None
            if owner:
                ev = self._events[key] = threading.Event()
        if owner:
            try:
                self._values[key] = (True, fn())
            except Exception as exc:  # re-raised in every caller
                self._values[key] = (False, exc)
            finally:
                ev.set()
        ev.wait()
        ok, value = self._values[key]
        if not ok:
            raise value
        return value


class Workbench:
    """Shared state for a sweep: pencil, interval, oracle solutions, snapshot sets."""

    def __init__(self, pencil: OperatorPencil, b: np.ndarray, cfg: dict):
        self.pencil = pencil
        self.b = b
        self.cfg = cfg
        self.b_norm = m_norm(pencil, b)
        self._memo = _Memo()

    @property
    def interval(self) -> SpectralInterval:
        return self._memo.get("interval", lambda: spectral_interval(self.pencil))

    def oracle(self, s: float) -> np.ndarray:
        return self._memo.get(("oracle", s), lambda: schemes.solve_oracle(self.pencil, self.b, s).solution)

    def greedy(self, k: int) -> PoleSet:
        # the greedy is nested, so one run up to k_max serves every k
        k_top = max(int(self.cfg["k_max"]), k)

        def run():
            xi = schemes.greedy_grid(
                float(self.cfg["kstar"]), float(self.cfg["s_min"]), float(self.cfg["s_max"]), int(self.cfg["greedy_size"])
            )
            return schemes.greedy_snapshots(self.pencil, self.b, xi, k_top)

        full = self._memo.get(("greedy", k_top), run)
        return PoleSet(full.poles[: k + 1])

    def best_approx(self, s: float, k: int):
        tol = float(self.cfg["tol"])
        return self._memo.get(
            ("bura", s, k), lambda: schemes.best_approx(s, self.interval, k, tol=tol)
        )

    def sinc_grid(self) -> schemes.SincGrid:
        return schemes.sinc_grid(float(self.cfg["kstar"]), float(self.cfg["s_min"]), float(self.cfg["s_max"]))

    def run(self, method: str, s: float, k: int) -> schemes.MethodResult:
        p, b = self.pencil, self.b
        if method == "oracle":
            return schemes.solve_oracle(p, b, s)
        if method == "zolo":
            return schemes.solve_rkm(p, b, s, schemes.zolotarev_snapshots(k, self.interval), "zolo")
        if method == "greedy":
            return schemes.solve_rkm(p, b, s, self.greedy(k), "greedy")
        if method == "sinc":
            return schemes.solve_sinc_rbm(p, b, s, self.greedy(k), self.sinc_grid())
        if method == "gauss":
            snaps = self.greedy(k)
            return schemes.solve_gauss_rbm(p, b, s, snaps, snaps, float(self.cfg["kstar"]))
        if method == "bura":
            rep = self.best_approx(s, k) if k > 0 else None
            return schemes.solve_rkm(p, b, s, schemes.bura_poles(s, self.interval, k, report=rep), "bura")
        if method == "direct":
            return schemes.solve_direct(p, b, s, k, approximant=self.best_approx(s, k))
        if method == "dual":
            return schemes.solve_dual(p, b, s, schemes.zolotarev_snapshots(k, self.interval))
        raise InvalidArgument(f"unknown method {method!r}")

    def error(self, u: np.ndarray, s: float) -> float:
        return m_norm(self.pencil, u - self.oracle(s))


# ---------------------------------------------------------------------------
# subcommands


def _require_oracle(pencil: OperatorPencil) -> None:
    if pencil.n > densecore.DENSE_CAP:
        raise ResourceLimit(
            f"reference solution needs a dense eigendecomposition, but n = {pencil.n} exceeds "
            f"{densecore.DENSE_CAP}; choose a smaller --n/--nx"
        )


def run_bench(cfg: dict) -> tuple[list[ConvergenceRecord], list[RateFit], list[dict]]:
    pencil, b = build_problem(cfg)
    _require_oracle(pencil)
    methods = _names(cfg["methods"])
    s_list = _floats(cfg["s"])
    k_lo, k_hi = int(cfg["k_min"]), int(cfg["k_max"])
    if not 0 <= k_lo <= k_hi:
        raise InvalidArgument(f"need 0 <= k_min <= k_max, got {k_lo}, {k_hi}")
    bench = Workbench(pencil, b, cfg)
    cells = [(m, s, k) for m in sorted(methods) for s in sorted(s_list) for k in range(k_lo, k_hi + 1)]

    def cell(job):
        method, s, k = job
        if method in ("zolo", "dual") and k == 0:
            raise InvalidArgument(f"{method} needs k >= 1")
        res = bench.run(method, s, k)
        err = 0.0 if method == "oracle" else bench.error(res.solution, s)
        return ConvergenceRecord(method, s, k, pencil.n, err, res.wall_time, res.metadata)

    def guarded(job):
        try:
            return cell(job), None
        except FracRKMError as exc:
            log.warning("cell %s failed: %s", job, exc)
            method, s, k = job
            rec = ConvergenceRecord(method, s, k, pencil.n, math.nan, math.nan)
            return rec, {"method": method, "s": s, "k": k, "error": f"{type(exc).__name__}: {exc}"}

    workers = max(1, int(cfg["workers"]))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(guarded, cells))
    else:
        out = [guarded(c) for c in cells]
    records = [r for r, _ in out]
    failures = [f for _, f in out if f is not None]
    records.sort(key=lambda r: (r.method, r.s, r.k))
    fits = []
    for m in sorted(methods):
        if m == "oracle":
            continue
        for s in sorted(s_list):
            rs = [r for r in records if r.method == m and r.s == s]
            fits.append(fit_rate([r.k for r in rs], [r.error_M for r in rs], m, s))
    return records, fits, failures


def cmd_bench(cfg: dict) -> int:
    t0 = time.perf_counter()
    records, fits, failures = run_bench(cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(records, out / "bench.csv")
    sidecar = {
        "config": cfg,
        "rates": [asdict(f) for f in fits],
        "failures": failures,
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "bench.json").write_text(json.dumps(sidecar, indent=2, default=_json_default) + "\n")
    print(f"wrote {out / 'bench.csv'} ({len(records)} rows, {len(failures)} failed)")
    for f in fits:
        window = f"k={f.k_window[0]}..{f.k_window[1]}" if f.k_window else "no window"
        print(f"{f.method:>7s}  s={f.s:<4g} rate={f.rate:.4g}  r2={f.r_squared:.4f}  ({window})")
    return 0


def cmd_solve(cfg: dict) -> int:
    pencil, b = build_problem(cfg)
    method = cfg["method"]
    s = float(cfg["s_value"])
    k = int(cfg["k"])
    bench = Workbench(pencil, b, cfg)
    if cfg.get("approximant"):
        if method != "direct":
            raise InvalidArgument("--approximant applies to --method direct only")
        r, _ = rational.load_approximant(cfg["approximant"])
        res = schemes.solve_direct(pencil, b, s, k, approximant=r)
    else:
        res = bench.run(method, s, k)
    meta = {"method": res.method, "s": res.s, "k": res.k, "n": pencil.n, "config": cfg}
    meta.update({key: v for key, v in res.metadata.items() if not key.startswith("time_")})
    if pencil.n <= densecore.DENSE_CAP:
        meta["error_M"] = 0.0 if method == "oracle" else bench.error(res.solution, s)
        meta["relative_error_M"] = meta["error_M"] / bench.b_norm
    timings = {"wall_time": res.wall_time}
    timings.update({key: v for key, v in res.metadata.items() if key.startswith("time_")})
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{method}_s{s:g}_k{k}"
    write_vector(out / f"{stem}.txt", res.solution)
    (out / f"{stem}.json").write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")
    (out / f"{stem}.timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    print(f"wrote {out / (stem + '.txt')}")
    if "error_M" in meta:
        print(f"error_M = {meta['error_M']!r}")
    return 0


def format_poles(cfg: dict) -> str:
    kind = cfg["kind"]
    k = int(cfg["k"])
    lines = [f"kind: {kind}", f"k: {k}"]
    if kind == "sinc":
        g = schemes.sinc_grid(float(cfg["kstar"]), float(cfg["s_min"]), float(cfg["s_max"]))
        lines += [f"k_star: {g.k_star!r}", f"M: {g.M_s}", f"N: {g.N_s}", f"nodes: {g.size}"]
        return "\n".join(lines) + "\n"
    if cfg.get("interval"):
        interval = SpectralInterval(*_floats(cfg["interval"]))
    else:
        interval = spectral_interval(build_problem(cfg)[0])
    lines.append(f"interval: {interval.lambda_min!r} {interval.lambda_max!r}")
    if kind == "zolotarev":
        poles = schemes.zolotarev_snapshots(k, interval)
    elif kind == "bura":
        s = float(cfg["s_value"])
        poles = schemes.bura_poles(s, interval, k, tol=float(cfg["tol"]))
        lines.append(f"s: {s!r}")
    elif kind == "greedy":
        pencil, b = build_problem(cfg)
        xi = schemes.greedy_grid(float(cfg["kstar"]), float(cfg["s_min"]), float(cfg["s_max"]), int(cfg["greedy_size"]))
        poles = schemes.greedy_snapshots(pencil, b, xi, k)
    else:
        raise InvalidArgument(f"unknown pole kind {kind!r}; choose zolotarev, bura, greedy or sinc")
    lines.append("snapshots:")
    lines += ["inf" if t == math.inf else repr(t) for t in poles.snapshots]
    return "\n".join(lines) + "\n"


def cmd_poles(cfg: dict) -> int:
    sys.stdout.write(format_poles(cfg))
    return 0


def cmd_bura_export(cfg: dict) -> int:
    s = float(cfg["s_value"])
    k = int(cfg["k"])
    if cfg.get("interval"):
        interval = SpectralInterval(*_floats(cfg["interval"]))
    else:
        interval = spectral_interval(build_problem(cfg)[0])
    rep = schemes.best_approx(s, interval, k, tol=float(cfg["tol"]))
    path = Path(cfg["output"] or Path(cfg["out_dir"]) / f"bura_s{s:g}_k{k}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    rational.save_approximant(
        path,
        rep.approximant,
        s=s,
        k=rep.k,
        interval=[interval.lambda_min, interval.lambda_max],
        max_error=rep.max_error,
        deviation=rep.equioscillation_deviation,
        iterations=rep.iterations,
        floor_limited=rep.floor_limited,
    )
    print(f"wrote {path} (max error {rep.max_error:.6g}, {rep.iterations} iterations)")
    return 0


# ---------------------------------------------------------------------------
# I/O helpers


def write_vector(path, v) -> None:
    Path(path).write_text("".join(f"{float(x)!r}\n" for x in v))


def read_vector(path) -> np.ndarray:
    return np.array([float(line) for line in Path(path).read_text().split()])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return repr(obj)


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON file with default option values")
    p.add_argument("--problem", choices=["fd1d", "fd2d", "files"])
    p.add_argument("--n", type=int, help="interior grid points for fd1d")
    p.add_argument("--nx", type=int, help="interior grid points per direction for fd2d")
    p.add_argument("--stiffness", help="Matrix Market file with K (problem 'files')")
    p.add_argument("--mass", help="Matrix Market file with M (problem 'files')")
    p.add_argument("--rhs", choices=["ones", "random"])
    p.add_argument("--seed", type=int)
    p.add_argument("--kstar", type=float, help="sinc step / quadrature accuracy parameter")
    p.add_argument("--s-min", dest="s_min", type=float)
    p.add_argument("--s-max", dest="s_max", type=float)
    p.add_argument("--greedy-size", dest="greedy_size", type=int)
    p.add_argument("--tol", type=float, help="equioscillation tolerance of the best approximation")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracrkm", description="Solvers for L^{-s} b.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="convergence sweep over methods, exponents and k")
    _common(p)
    p.add_argument("--methods", help="comma-separated method ids, or 'all'")
    p.add_argument("--s", help="comma-separated exponents")
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("solve", help="solve once and write the solution vector")
    _common(p)
    p.add_argument("--method", required=True, choices=list(schemes.METHODS))
    p.add_argument("--s", dest="s_value", type=float, required=True)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--approximant", help="JSON approximant from bura-export (method direct)")

    p = sub.add_parser("poles", help="print snapshots or poles of a generator")
    _common(p)
    p.add_argument("--kind", required=True, choices=["zolotarev", "bura", "greedy", "sinc"])
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--s", dest="s_value", type=float, default=0.5)
    p.add_argument("--interval", nargs=2, type=float, metavar=("LO", "HI"))

    p = sub.add_parser("bura-export", help="compute and save a best approximation of z^{-s}")
    _common(p)
    p.add_argument("--s", dest="s_value", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--interval", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--output", help="target file (default: <out-dir>/bura_s<s>_k<k>.json)")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        if not isinstance(loaded, dict) or any(isinstance(v, dict) for v in loaded.values()):
            raise InvalidArgument(f"{args.config}: config must be a flat JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "verbose")})
    return cfg


COMMANDS = {"bench": cmd_bench, "solve": cmd_solve, "poles": cmd_poles, "bura-export": cmd_bura_export}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (FracRKMError, OSError, json.JSONDecodeError) as exc:
        print(f"fracrkm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
