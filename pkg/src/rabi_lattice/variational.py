r"""Mean-field solvers for slow (Born-Oppenheimer) and fast (Silbey-Harris) bosons.

Born-Oppenheimer treats the boson amplitudes as classical displacements
``alpha``; what remains is a transverse-field Ising chain with field
``h = 2 alpha g`` whose thermodynamic-limit energy is known in closed form:

.. math ::
    \frac{E}{N} = \delta\alpha^2 - h \frac{2}{\pi} (1 + \lambda)
        E\!\left[\frac{4\lambda}{(1+\lambda)^2}\right],\qquad \lambda = J / h

with ``E[m]`` the complete elliptic integral of the second kind in the
parameter convention (``m = k^2``), i.e. :func:`scipy.special.ellipe`.

Silbey-Harris uses a product of partially displaced vacua with a variational
displacement fraction ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ellipe

from .errors import InvalidParams
from .model import ModelParams

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BO_SCAN_POINTS = 2000
SH_SCAN_POINTS = 10_000
SH_ETA_MAX = 1.2


@dataclass
class BOResult:
    alpha0: float
    energy_per_site: float
    n: float
    critical_g: float


@dataclass
class SHResult:
    eta0: float
    energy: float
    n: float


def tfim_energy_per_site(h: float, j_ising: float) -> float:
    """Ground energy per site of the infinite transverse-field Ising chain."""
    h = abs(h)
    if h == 0.0:
        return -j_ising
    lam = j_ising / h
    return -(h + j_ising) * (2.0 / math.pi) * float(ellipe(4.0 * lam / (1.0 + lam) ** 2))


def bo_energy_per_site(alpha: float, p: ModelParams) -> float:
    """Born-Oppenheimer energy per site at displacement ``alpha``.

    Even in ``alpha``: a negative value is a gauge copy of the positive one.
    """
    return p.delta * alpha**2 + tfim_energy_per_site(2.0 * alpha * p.g, p.j_ising)


def golden_section(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200):
    """Minimize a unimodal function on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    fx, x = min(candidates)
    return x, fx


def _scan_then_refine(f, lo, hi, n_points):
    grid = np.linspace(lo, hi, n_points)
    values = np.array([f(x) for x in grid])
    i = int(np.argmin(values))
    left = grid[max(i - 1, 0)]
    right = grid[min(i + 1, n_points - 1)]
    x, fx = golden_section(f, left, right)
    if values[i] <= fx:
        return float(grid[i]), float(values[i])
    return float(x), float(fx)


def minimize_bo(p: ModelParams) -> BOResult:
    """Global minimum of the Born-Oppenheimer energy over ``alpha >= 0``.

    Deterministic: a coarse scan of ``[0, 4g/delta + 1]`` followed by
    golden-section refinement in the winning cell. The undisplaced solution
    is reported as exactly zero whenever no displacement lowers the energy.
    """
    if p.delta <= 0:
        raise InvalidParams("Born-Oppenheimer minimization needs delta > 0")
    f = lambda a: bo_energy_per_site(a, p)
    hi = 4.0 * p.g / p.delta + 1.0
    alpha, energy = _scan_then_refine(f, 0.0, hi, BO_SCAN_POINTS)
    e0 = f(0.0)
    if energy >= e0 - 1e-14 * max(1.0, abs(e0)):
        alpha, energy = 0.0, e0
    return BOResult(
        alpha0=alpha,
        energy_per_site=energy,
        n=alpha**2,
        critical_g=math.sqrt(p.delta * p.j_ising),
    )


def bo_curvature_at_origin(p: ModelParams, step: float = 1e-4) -> float:
    """Second derivative of the BO energy at ``alpha = 0`` by a symmetric difference."""
    e0 = bo_energy_per_site(0.0, p)
    return 2.0 * (bo_energy_per_site(step, p) - e0) / step**2


def bo_curvature_flip(delta: float, j_ising: float = 1.0, tol: float = 1e-12) -> float:
    """Coupling where the BO curvature at the origin changes sign, by bisection.

    Purely numerical; its agreement with ``sqrt(delta J)`` checks the
    elliptic kernel near ``h = 0``.
    """
    if delta <= 0 or j_ising <= 0:
        raise InvalidParams("delta and J must be > 0")
    curv = lambda g: bo_curvature_at_origin(ModelParams(2, delta, g, j_ising, n_fock=2))
    lo, hi = 0.0, 1.0
    while curv(hi) > 0:
        hi *= 2.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if curv(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bo_alpha_strong_coupling(p: ModelParams) -> float:
    """Large-``g`` estimate of the optimal displacement."""
    return p.g / p.delta * (1.0 - p.j_ising**2 * p.delta**2 / (16.0 * p.g**4))


def sh_energy(eta: float, p: ModelParams) -> float:
    """Silbey-Harris energy of the whole chain at displacement fraction ``eta``."""
    if p.delta == 0:
        raise InvalidParams("Silbey-Harris energy needs delta > 0")
    ratio = p.g / p.delta
    return (p.n_sites * p.g**2 / p.delta * (eta**2 - 2.0 * eta)
            - p.j_ising * (p.n_sites - 1) * math.exp(-4.0 * eta**2 * ratio**2))


def minimize_sh(p: ModelParams) -> SHResult:
    """Global Silbey-Harris minimum on ``eta in [0, 1.2]``.

    When two local minima coexist the lower one wins; the switch between
    them as ``g`` grows is the first-order jump.
    """
    if p.delta <= 0:
        raise InvalidParams("Silbey-Harris minimization needs delta > 0")
    f = lambda eta: sh_energy(eta, p)
    eta, energy = _scan_then_refine(f, 0.0, SH_ETA_MAX, SH_SCAN_POINTS)
    return SHResult(eta0=eta, energy=energy, n=(eta * p.g / p.delta) ** 2)
