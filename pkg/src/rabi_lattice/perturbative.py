"""Closed-form energies of the ferromagnetic and dressed-ferromagnetic phases."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import InvalidParams, NoRootInBracket
from .model import ModelParams

P_TOL = 1e-12
P_MAX_TERMS = 10_000


@dataclass
class PerturbativeEnergies:
    e_ferro: float
    e_dressed: float
    alpha: float
    p_alpha: float
    crossing_g: float | None = None


def energy_ferro(p: ModelParams) -> float:
    """Ferromagnetic energy with the second-order spin-boson correction.

    Bulk spins pay ``delta + 4J`` for a virtual boson plus flipped spin,
    the two chain ends only ``delta + 2J``.
    """
    n, d, g, j = p.n_sites, p.delta, p.g, p.j_ising
    if g > 0.2 * (d + 4 * j):
        warnings.warn(f"g={g} is not small against delta + 4J; expansion unreliable",
                      stacklevel=2)
    return -j * (n - 1) - g**2 * ((n - 2) / (d + 4 * j) + 2 / (d + 2 * j))


def _log_term(p: int, x: float) -> float:
    return -x + p * math.log(x) - math.lgamma(p + 1) - math.log(p)


def p_function(alpha: float, tol: float = P_TOL) -> float:
    """Poisson average of ``1/p`` over ``p >= 1`` with mean ``8 alpha^2``.

    The sum starts at the Poisson mode and walks outward in both directions,
    stopping on each side once a term drops below ``tol`` times the running
    sum. Terms are evaluated in log space, so large ``alpha`` is safe.
    """
    if alpha < 0:
        raise InvalidParams("alpha must be >= 0")
    x = 8.0 * alpha**2
    if x == 0.0:
        return 0.0
    mode = max(1, int(x))
    total = math.exp(_log_term(mode, x))
    count = 1
    p = mode + 1
    while count < P_MAX_TERMS:
        term = math.exp(_log_term(p, x))
        total += term
        count += 1
        if term < tol * total:
            break
        p += 1
    p = mode - 1
    while p >= 1 and count < P_MAX_TERMS:
        term = math.exp(_log_term(p, x))
        total += term
        count += 1
        if term < tol * total:
            break
        p -= 1
    return total


def energy_dressed_ferro(p: ModelParams) -> float:
    """Dressed-ferromagnet energy: polaron shift, renormalized Ising bond and
    the second-order correction from virtual boson excitations."""
    n, d, g, j = p.n_sites, p.delta, p.g, p.j_ising
    if d == 0:
        raise InvalidParams("delta = 0 has no dressed-ferromagnet expansion")
    alpha = g / d
    if not (d > 5 * j or g**2 > 5 * j * d):
        warnings.warn("dressed-ferromagnet correction is not small for these parameters",
                      stacklevel=2)
    return (-n * g**2 / d
            - j * (n - 1) * math.exp(-4 * alpha**2)
            - (n - 1) * j**2 / d * p_function(alpha))


def _energy_difference(delta, j_ising, n_sites):
    def diff(g):
        q = ModelParams(n_sites, delta, g, j_ising, n_fock=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return energy_ferro(q) - energy_dressed_ferro(q)
    return diff


def _scan_bracket(diff, delta, j_ising, steps=2000):
    # the dressed expansion fails at small alpha and produces a spurious low-g
    # root; the physical crossing is the last change from F to DF
    hi = max(j_ising, 2.0 * math.sqrt(delta * j_ising))
    grid = [hi * (k + 1) / steps for k in range(steps)]
    values = [diff(g) for g in grid]
    for k in range(steps - 1, 0, -1):
        if values[k - 1] < 0 <= values[k]:
            return grid[k - 1], grid[k]
    raise NoRootInBracket(f"no F -> DF crossing on (0, {hi:.6g}] for delta={delta}")


def crossing_estimate(delta: float, j_ising: float, n_sites: int,
                      bracket: tuple | str | None = None, rtol: float = 1e-10) -> float | None:
    """Coupling where the ferromagnetic and dressed energies cross.

    Parameters
    ----------
    bracket : (lo, hi), "scan" or None
        ``None`` uses ``(sqrt(delta J), J)`` and returns ``None`` (with a
        warning) when ``delta >= J`` since that interval is empty.
        ``"scan"`` tabulates the energy difference on ``(0, max(J, 2
        sqrt(delta J))]`` and brackets the largest-``g`` change from the
        ferromagnet to the dressed state.

    Raises
    ------
    NoRootInBracket
        The energy difference keeps its sign on the bracket.
    """
    diff = _energy_difference(delta, j_ising, n_sites)
    if bracket is None:
        if delta >= j_ising:
            warnings.warn("crossing estimate needs delta < J", stacklevel=2)
            return None
        lo, hi = math.sqrt(delta * j_ising), j_ising
    elif isinstance(bracket, str):
        if bracket != "scan":
            raise InvalidParams(f"unknown bracket mode {bracket!r}")
        lo, hi = _scan_bracket(diff, delta, j_ising)
    else:
        lo, hi = bracket

    f_lo, f_hi = diff(lo), diff(hi)
    if f_lo == 0.0:
        return lo
    if f_lo * f_hi > 0:
        raise NoRootInBracket(
            f"E_F - E_DF keeps sign on [{lo:.6g}, {hi:.6g}] "
            f"({f_lo:.4g}, {f_hi:.4g}) for delta={delta}"
        )
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        f_mid = diff(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def perturbative_energies(p: ModelParams) -> PerturbativeEnergies:
    alpha = p.g / p.delta
    crossing = None
    if p.delta < p.j_ising:
        try:
            crossing = crossing_estimate(p.delta, p.j_ising, p.n_sites, bracket="scan")
        except NoRootInBracket:
            crossing = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return PerturbativeEnergies(
            e_ferro=energy_ferro(p),
            e_dressed=energy_dressed_ferro(p),
            alpha=alpha,
            p_alpha=p_function(alpha),
            crossing_g=crossing,
        )
