"""Parameter scans of the order parameter and the fits built on them.

A scan walks a uniform ``g`` grid for each ``delta`` with one of four
solvers. DMRG points are warm-started from the previous ``g`` of the same
``delta`` block, so blocks are the unit of parallel work for DMRG while the
closed-form and ED methods parallelize point by point. Rows are always
returned in grid order.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CutoffViolation,
    InsufficientDecay,
    InsufficientPoints,
    InvalidParams,
    NonUniformGrid,
    RabiLatticeError,
)
from .model import ModelParams

METHODS = ("ED", "BO", "SH", "DMRG")
CSV_HEADER = ["delta", "g", "method", "energy", "n", "dn_dg", "chi", "flags"]
DECAY_FLOOR = 1e-12
MIN_DECAY_POINTS = 4
GRID_RTOL = 1e-9


@dataclass
class ScanRow:
    delta: float
    g: float
    method: str
    energy: float = math.nan
    n: float = math.nan
    dn_dg: float = math.nan
    chi: float = math.nan
    flags: tuple = ()
    error: str | None = None

    @property
    def usable(self) -> bool:
        """Row may enter fits: finite ``n`` and no cutoff or solver flag."""
        return math.isfinite(self.n) and not self.flags


@dataclass
class ScanTable:
    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for delta, block in self.blocks().items():
            gs = [r.g for r in block]
            if any(b <= a for a, b in zip(gs, gs[1:])):
                raise InvalidParams(f"g not strictly increasing in delta={delta} block")
            for g in gs:
                if (delta, g) in seen:
                    raise InvalidParams(f"duplicate point ({delta}, {g})")
                seen.add((delta, g))

    def blocks(self) -> dict:
        out: dict = {}
        for row in self.rows:
            out.setdefault(row.delta, []).append(row)
        return out

    def column(self, name: str, delta: float | None = None) -> np.ndarray:
        rows = self.rows if delta is None else self.blocks()[delta]
        return np.array([getattr(r, name) for r in rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(r.delta), _fmt(r.g), r.method, _fmt(r.energy), _fmt(r.n),
                             _fmt(r.dn_dg), _fmt(r.chi), ";".join(r.flags)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, meta: dict | None = None) -> "ScanTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != CSV_HEADER:
            raise InvalidParams(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            d, g, method, e, n, dn, chi, flags = rec
            rows.append(ScanRow(float(d), float(g), method, float(e), float(n), float(dn),
                                float(chi), tuple(f for f in flags.split(";") if f)))
        return cls(rows, dict(meta or {}))


def _fmt(x: float) -> str:
    return "%.17g" % x


def g_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Uniform grid ``lo, lo + step, ...`` up to ``hi`` inclusive (within rounding)."""
    if step <= 0:
        raise InvalidParams("step must be > 0")
    if hi < lo:
        raise InvalidParams("g range is empty")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


def _closed_form_point(args):
    method, p = args
    from .variational import minimize_bo, minimize_sh

    row = ScanRow(p.delta, p.g, method)
    try:
        if method == "BO":
            res = minimize_bo(p)
            row.energy, row.n = res.energy_per_site * p.n_sites, res.n
        elif method == "SH":
            res = minimize_sh(p)
            row.energy, row.n = res.energy, res.n
        else:
            from .exact import ground_space, observables

            res = ground_space(p, k=1)
            row.energy = float(res.energies[0])
            row.n = observables(res.states[:, 0], p).n
    except RabiLatticeError as exc:
        row.flags, row.error = ("error",), str(exc)
    return row


def _dmrg_block(args):
    delta, grid, p_base, cfg = args
    from .dmrg import dmrg_ground_state, mps_observables

    rows, state = [], None
    for g in grid:
        p = p_base.replace(delta=float(delta), g=float(g))
        row = ScanRow(p.delta, p.g, "DMRG")
        result = None
        try:
            result = dmrg_ground_state(p, cfg, initial=state)
        except CutoffViolation as exc:
            result, row.flags = exc.result, ("cutoff",)
            row.error = str(exc)
        except RabiLatticeError as exc:
            row.flags, row.error = ("error",), str(exc)
        if result is not None:
            state = result.state
            row.energy, row.n = result.energy, result.n
            row.chi = _chi_or_nan(mps_observables(result.state, p))
        rows.append(row)
    return rows


def _chi_or_nan(obs) -> float:
    try:
        return correlation_length(decay_profile(obs.cz_row, obs.ref_site))
    except InsufficientDecay:
        return math.nan


def decay_profile(cz_row, ref_site: int) -> list:
    """``(separation, C_z)`` pairs to the right of the reference site, separation >= 1."""
    cz_row = np.asarray(cz_row, dtype=float)
    return [(j - ref_site, float(cz_row[j])) for j in range(ref_site + 1, len(cz_row))]


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def default_jobs() -> int:
    value = os.environ.get("RABI_LATTICE_JOBS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise InvalidParams(f"RABI_LATTICE_JOBS={value!r} is not an integer") from None


def scan_order_parameter(deltas, g_range, p_base: ModelParams, method: str,
                         jobs: int | None = None, dmrg_cfg=None) -> ScanTable:
    """Mean boson number over a ``(delta, g)`` grid.

    Parameters
    ----------
    deltas : sequence of float
    g_range : (lo, hi, step)
        Inclusive uniform grid.
    p_base : ModelParams
        Supplies ``n_sites``, ``j_ising`` and ``n_fock``; its ``delta`` and
        ``g`` are ignored.
    method : {"ED", "BO", "SH", "DMRG"}
    jobs : int, optional
        Worker processes; defaults to ``RABI_LATTICE_JOBS`` or 1.
    dmrg_cfg : DMRGConfig, optional

    Returns
    -------
    ScanTable
        One row per grid point. Solver failures are recorded in the row
        (``flags`` contains ``"error"``) and the scan carries on. DMRG rows
        whose state breaks ``2 n <= n_fock`` are flagged ``"cutoff"``.
        Flagged rows are skipped by the fits.
    """
    method = method.upper()
    if method not in METHODS:
        raise InvalidParams(f"unknown method {method!r}; expected one of {METHODS}")
    grid = g_grid(*g_range)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    deltas = [float(d) for d in deltas]
    if method == "ED":
        from .model import _check_dimension

        _check_dimension(p_base)
    if method == "DMRG":
        from .dmrg import DMRGConfig

        cfg = dmrg_cfg or DMRGConfig()
        blocks = _map(_dmrg_block, [(d, grid, p_base, cfg) for d in deltas], jobs)
        rows = [r for block in blocks for r in block]
    else:
        tasks = [(method, p_base.replace(delta=d, g=float(g))) for d in deltas for g in grid]
        rows = _map(_closed_form_point, tasks, jobs)
    meta = {
        "method": method,
        "deltas": deltas,
        "g_range": [float(x) for x in g_range],
        "n_sites": p_base.n_sites,
        "n_fock": p_base.n_fock,
        "j_ising": p_base.j_ising,
    }
    if method == "DMRG":
        meta["max_bond"] = cfg.max_bond
    return ScanTable(rows, meta)


def numerical_derivative(table: ScanTable) -> ScanTable:
    """Fill ``dn_dg``: central differences inside each block, one-sided at the ends.

    Raises
    ------
    NonUniformGrid
        If a block's ``g`` spacing is not constant.
    """
    out = []
    for delta, block in table.blocks().items():
        g = np.array([r.g for r in block])
        n = np.array([r.n for r in block])
        if len(g) < 2:
            raise NonUniformGrid(f"delta={delta} block has fewer than two points")
        steps = np.diff(g)
        if np.max(np.abs(steps - steps[0])) > GRID_RTOL * max(1.0, abs(steps[0])) + 1e-12:
            raise NonUniformGrid(f"delta={delta}: g spacing varies between "
                                 f"{steps.min():.6g} and {steps.max():.6g}")
        deriv = np.gradient(n, steps[0], edge_order=1)
        out.extend(replace(r, dn_dg=float(dv)) for r, dv in zip(block, deriv))
    return ScanTable(out, dict(table.meta))


def peak_location(table: ScanTable, delta: float) -> tuple:
    """Position and height of the largest ``dn/dg`` in one block.

    Rows flagged by the scan are ignored. The discrete argmax is refined by
    a parabola through it and its two neighbours.
    """
    block = [r for r in table.blocks()[delta] if r.usable and math.isfinite(r.dn_dg)]
    if not block:
        raise InsufficientPoints(f"no usable derivative rows for delta={delta}")
    vals = np.array([r.dn_dg for r in block])
    i = int(np.argmax(vals))
    g_i, h_i = block[i].g, vals[i]
    if 0 < i < len(block) - 1:
        step = block[i + 1].g - block[i].g
        if abs((block[i].g - block[i - 1].g) - step) <= 1e-9:
            y0, y1, y2 = vals[i - 1], vals[i], vals[i + 1]
            curv = y0 - 2 * y1 + y2
            if curv < 0:
                shift = 0.5 * (y0 - y2) / curv
                return float(g_i + shift * step), float(h_i - 0.25 * (y0 - y2) * shift)
    return float(g_i), float(h_i)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    point_count: int
    residuals: list


def linear_fit(x, y) -> FitResult:
    """Ordinary least-squares line ``y = slope x + intercept``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise InsufficientPoints(f"need at least 3 points, got {len(x)}")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), min(max(r2, 0.0), 1.0), len(x),
                     resid.tolist())


def correlation_fit(profile) -> FitResult:
    """Fit ``log|C_z|`` against separation over points above the noise floor."""
    pts = [(float(s), abs(float(c))) for s, c in profile if abs(float(c)) > DECAY_FLOOR]
    if len(pts) < MIN_DECAY_POINTS:
        raise InsufficientDecay(
            f"only {len(pts)} points above {DECAY_FLOOR:g}; need {MIN_DECAY_POINTS}"
        )
    sep, val = np.array(pts).T
    return linear_fit(sep, np.log(val))


def correlation_length(profile) -> float:
    """Decay length ``chi = -1/slope`` of ``C_z`` along the chain.

    Parameters
    ----------
    profile : sequence of (separation, value)

    Raises
    ------
    InsufficientDecay
        Fewer than four points with ``|C_z| > 1e-12``, or no decay at all.
    """
    fit = correlation_fit(profile)
    # a flat profile fits a slope of order machine epsilon, either sign
    if fit.slope >= -1e-10:
        raise InsufficientDecay(f"correlations do not decay (slope {fit.slope:.3g})")
    return -1.0 / fit.slope


def fit_critical_line(peaks) -> FitResult:
    """Power law ``g_peak ~ delta^alpha`` fitted in log-log space; slope is ``alpha``."""
    peaks = list(peaks)
    if len(peaks) < 3:
        raise InsufficientPoints("critical line fit needs at least 3 peaks")
    d, g = np.array(peaks, dtype=float).T
    if np.any(d <= 0) or np.any(g <= 0):
        raise InvalidParams("peaks must have positive delta and g")
    return linear_fit(np.log(d), np.log(g))


def fit_chi_scaling(points) -> FitResult:
    """Straight line through ``1/chi_c`` against ``delta``."""
    points = list(points)
    if len(points) < 3:
        raise InsufficientPoints("chi scaling fit needs at least 3 points")
    d, chi = np.array(points, dtype=float).T
    if np.any(chi <= 0) or not np.all(np.isfinite(chi)):
        raise InvalidParams("chi values must be finite and positive")
    return linear_fit(d, 1.0 / chi)


def critical_points(table: ScanTable) -> list:
    """Per block: ``(delta, g_peak, peak_height, chi)`` with ``chi`` read off the
    grid point nearest the refined peak.

    Coarse: near a sharp transition the grid straddles the critical point.
    :func:`refine_critical_point` evaluates ``chi`` at ``g_peak`` itself.
    """
    if any(math.isnan(r.dn_dg) for r in table.rows):
        table = numerical_derivative(table)
    out = []
    for delta, block in table.blocks().items():
        g_peak, height = peak_location(table, delta)
        nearest = min((r for r in block if r.usable), key=lambda r: abs(r.g - g_peak))
        out.append((delta, g_peak, height, nearest.chi))
    return out


@dataclass
class CriticalPoint:
    delta: float
    g_peak: float
    peak_height: float
    n: float
    chi: float
    chi_fit: FitResult | None


def refine_critical_point(table: ScanTable, delta: float, p_base: ModelParams,
                          dmrg_cfg=None) -> CriticalPoint:
    """Correlation length on the critical line of one DMRG block.

    The peak of ``dn/dg`` gives ``g_c``. A DMRG run at the last grid point
    below ``g_c`` seeds a warm-started run at ``g_c`` itself, whose centre
    ``C_z`` profile yields ``chi_c`` and the quality of the exponential fit.
    """
    from .dmrg import DMRGConfig, dmrg_ground_state, mps_observables

    cfg = dmrg_cfg or DMRGConfig()
    if any(math.isnan(r.dn_dg) for r in table.blocks()[delta]):
        table = numerical_derivative(table)
    g_peak, height = peak_location(table, delta)
    below = [r.g for r in table.blocks()[delta] if r.g <= g_peak]
    g_start = below[-1] if below else table.blocks()[delta][0].g
    p = p_base.replace(delta=float(delta), g=float(g_start))
    seed = dmrg_ground_state(p, cfg, check_cutoff=False).state
    q = p.replace(g=float(g_peak))
    res = dmrg_ground_state(q, cfg, initial=seed, check_cutoff=False)
    obs = mps_observables(res.state, q)
    try:
        fit = correlation_fit(decay_profile(obs.cz_row, obs.ref_site))
        chi = -1.0 / fit.slope if fit.slope < 0 else math.inf
    except InsufficientDecay:
        fit, chi = None, math.nan
    return CriticalPoint(float(delta), g_peak, height, res.n, chi, fit)
