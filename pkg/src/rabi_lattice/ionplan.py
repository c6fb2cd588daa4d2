"""Trapped-ion microtrap planner.

Frequencies follow the usual lab convention: a value ``f`` stands for the
angular frequency ``2 pi f`` (quoted as "(2 pi) Hz"). Inputs and outputs are
in these units; the physics is evaluated with angular frequencies in SI.

The Coulomb prefactor ``e^2 / (4 pi eps0)`` is taken from CODATA through
:mod:`scipy.constants`. A second route in Gaussian units (grams, centimetres,
statcoulomb) is kept to cross-check the unit bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import constants as sc

from .errors import InvalidParams, SameIonIndex

COULOMB_SI = sc.e**2 / (4 * math.pi * sc.epsilon_0)  # J m
# statC^2 from J m: 1 J = 1e7 erg, 1 m = 100 cm
E2_GAUSSIAN = COULOMB_SI * 1e9
C_AXIS = {"x": 1.0, "z": -2.0}
ATOMIC_MASS_U = {
    "9Be+": 9.0121831,
    "25Mg+": 24.98583696,
    "40Ca+": 39.962590863,
    "171Yb+": 170.9363302,
}
LAMB_DICKE_MAX = 0.3
RWA_MAX = 1e-2
RESIDUAL_MAX = 0.05


def ion_mass(species: str) -> float:
    """Mass in kg of a singly charged ion (neutral atomic mass minus one electron)."""
    try:
        u = ATOMIC_MASS_U[species]
    except KeyError:
        raise InvalidParams(f"unknown species {species!r}; known: {sorted(ATOMIC_MASS_U)}") from None
    return u * sc.atomic_mass - sc.m_e


@dataclass
class IonChainSpec:
    """Microtrap array description. Frequencies in (2 pi) Hz, lengths in metres.

    ``delta_boson`` is the effective boson energy of the simulated model; it
    defaults to ``gx_force`` (the ``delta ~ g`` regime).
    """

    n_ions: int = 50
    spacing_d0: float = 30e-6
    species: str = "9Be+"
    omega_z: float = 500e3
    omega_x_pattern: list = field(default_factory=lambda: [10e6, 9e6, 8e6])
    laser_wavelength_axial: float = 870e-9
    laser_wavelength_transverse: float = 320e-9
    gz_force: float = 100e3
    gx_force: float = 100e3
    axial_detuning_factor: float = 2.0
    delta_boson: float | None = None

    def __post_init__(self):
        self.omega_x_pattern = [float(w) for w in self.omega_x_pattern]
        if self.n_ions < 2:
            raise InvalidParams("need at least two ions")
        if self.spacing_d0 <= 0:
            raise InvalidParams("trap spacing must be > 0")
        positive = [self.omega_z, self.laser_wavelength_axial, self.laser_wavelength_transverse,
                    *self.omega_x_pattern]
        if any(v <= 0 for v in positive):
            raise InvalidParams("frequencies and wavelengths must be > 0")
        if not self.omega_x_pattern:
            raise InvalidParams("omega_x_pattern is empty")
        if len(set(self.omega_x_pattern)) != len(self.omega_x_pattern):
            raise InvalidParams("omega_x_pattern entries must be pairwise distinct")
        if self.gz_force < 0 or self.gx_force < 0:
            raise InvalidParams("forces must be >= 0")
        ion_mass(self.species)

    @property
    def mass(self) -> float:
        return ion_mass(self.species)

    def omega(self, axis: str, i: int) -> float:
        """Trap frequency of ion ``i`` (0-based) along ``axis``, (2 pi) Hz."""
        if not 0 <= i < self.n_ions:
            raise InvalidParams(f"ion index {i} outside 0..{self.n_ions - 1}")
        if axis == "z":
            return self.omega_z
        if axis == "x":
            return self.omega_x_pattern[i % len(self.omega_x_pattern)]
        raise InvalidParams(f"axis must be 'x' or 'z', got {axis!r}")


def _hopping(c, mass, w_i, w_l, distance, units="si"):
    wi, wl = 2 * math.pi * w_i, 2 * math.pi * w_l
    if units == "si":
        t = c * COULOMB_SI / (2 * mass * math.sqrt(wi * wl) * distance**3)
    else:
        t = c * E2_GAUSSIAN / (2 * (mass * 1e3) * math.sqrt(wi * wl) * (distance * 1e2) ** 3)
    return t / (2 * math.pi)


def hopping_strength(spec: IonChainSpec, axis: str, i: int, l: int, units: str = "si") -> float:
    """Phonon hopping ``t^axis_{i,l}`` in (2 pi) Hz; negative along ``z``.

    Ions sit at their trap centres, so the separation is ``|i - l| d0``.
    ``units="gaussian"`` evaluates the same expression in CGS.
    """
    if i == l:
        raise SameIonIndex(f"hopping needs two distinct ions, got {i} twice")
    if axis not in C_AXIS:
        raise InvalidParams(f"axis must be 'x' or 'z', got {axis!r}")
    return _hopping(C_AXIS[axis], spec.mass, spec.omega(axis, i), spec.omega(axis, l),
                    abs(i - l) * spec.spacing_d0, units)


def axial_spectrum(spec: IonChainSpec, units: str = "si") -> np.ndarray:
    """Axial normal-mode frequencies, ascending, in (2 pi) Hz.

    Diagonal ``omega_z``, off-diagonal ``t^z_{j,l}`` for every pair.
    """
    n = spec.n_ions
    h = np.diag(np.full(n, float(spec.omega_z)))
    for i in range(n):
        for l in range(i + 1, n):
            h[i, l] = h[l, i] = hopping_strength(spec, "z", i, l, units)
    return np.linalg.eigvalsh(h)


def lamb_dicke(wavelength: float, mass: float, omega: float) -> float:
    """``(2 pi / lambda) sqrt(hbar / (2 m omega))`` with ``omega`` in (2 pi) Hz."""
    if wavelength <= 0 or mass <= 0 or omega <= 0:
        raise InvalidParams("wavelength, mass and frequency must be > 0")
    return (2 * math.pi / wavelength) * math.sqrt(sc.hbar / (2 * mass * 2 * math.pi * omega))


def effective_exchange(spec: IonChainSpec, units: str = "si") -> float:
    """Nearest-neighbour Ising coupling mediated by the axial modes, (2 pi) Hz."""
    if spec.axial_detuning_factor <= 0:
        raise InvalidParams("axial_detuning_factor must be > 0")
    if spec.gz_force == 0:
        return 0.0
    t_nn = abs(hopping_strength(spec, "z", 0, 1, units))
    return t_nn / spec.axial_detuning_factor**2


@dataclass
class IonPlanReport:
    t_axial_nn: float
    axial_mode_frequencies: list
    omega_com: float
    eta_axial: float
    eta_transverse: float
    eta_transverse_per_set: list
    rabi_frequency_per_set: list
    j_effective: float
    t_transverse_max: float
    residual_same_freq_coupling: float
    rwa_ratio: float
    adiabatic_timescale: float
    feasibility_flags: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        lines = [
            f"t^z nearest neighbour     {self.t_axial_nn / 1e3:10.3f} (2pi) kHz",
            f"lowest axial mode         {self.omega_com / 1e3:10.3f} (2pi) kHz",
            f"eta axial                 {self.eta_axial:10.4f}",
            f"eta transverse (max)      {self.eta_transverse:10.4f}",
            f"J effective               {self.j_effective / 1e3:10.3f} (2pi) kHz",
            f"max t^x nearest neighbour {self.t_transverse_max / 1e3:10.3f} (2pi) kHz",
            f"residual same-frequency   {self.residual_same_freq_coupling:10.3f} (2pi) Hz",
            f"RWA ratio                 {self.rwa_ratio:10.3e}",
            f"adiabatic timescale       {self.adiabatic_timescale * 1e6:10.3f} us",
        ]
        lines += [f"[{'PASS' if ok else 'FAIL'}] {name}" for name, ok in self.feasibility_flags.items()]
        return "\n".join(lines) + "\n"


def feasibility_report(spec: IonChainSpec) -> IonPlanReport:
    """Every derived quantity of the microtrap proposal plus pass/fail checks.

    Checks: Lamb-Dicke parameters below 0.3 on both axes; RWA ratio
    ``max t^x_{j,l} / |omega_j - omega_l|`` over partners inside one
    frequency set at most 1e-2; residual coupling between equal-frequency
    ions (``n`` sites apart, ``n`` the pattern length) at most 5% of
    ``min(delta, g, J)``. The adiabatic timescale is ``1 / J`` in angular
    units.
    """
    n_set = len(spec.omega_x_pattern)
    mass = spec.mass
    modes = axial_spectrum(spec)
    omega_com = float(modes[0])
    if omega_com <= 0:
        raise InvalidParams(
            f"axial chain unstable: lowest mode {omega_com:.4g} Hz; increase spacing or omega_z")
    eta_z = lamb_dicke(spec.laser_wavelength_axial, mass, omega_com)
    eta_x_set = [lamb_dicke(spec.laser_wavelength_transverse, mass, w) for w in spec.omega_x_pattern]
    rabi = [spec.gx_force / eta if eta > 0 else math.inf for eta in eta_x_set]
    j_eff = effective_exchange(spec)

    last = spec.n_ions - 1
    t_x_nn = max(hopping_strength(spec, "x", j, j + 1) for j in range(last))
    rwa = 0.0
    for j in range(spec.n_ions):
        for l in range(j + 1, min(j + n_set, spec.n_ions)):
            gap = abs(spec.omega("x", j) - spec.omega("x", l))
            rwa = max(rwa, abs(hopping_strength(spec, "x", j, l)) / gap)
    if n_set < spec.n_ions:
        residual = max(abs(hopping_strength(spec, "x", j, j + n_set))
                       for j in range(spec.n_ions - n_set))
    else:
        residual = 0.0
    delta = spec.delta_boson if spec.delta_boson is not None else spec.gx_force
    scale = min(delta, spec.gx_force, j_eff)
    flags = {
        "lamb_dicke_axial": eta_z < LAMB_DICKE_MAX,
        "lamb_dicke_transverse": max(eta_x_set) < LAMB_DICKE_MAX,
        "rwa": rwa <= RWA_MAX,
        "residual_coupling": scale > 0 and residual / scale <= RESIDUAL_MAX,
    }
    return IonPlanReport(
        t_axial_nn=abs(hopping_strength(spec, "z", 0, 1)),
        axial_mode_frequencies=modes.tolist(),
        omega_com=omega_com,
        eta_axial=eta_z,
        eta_transverse=max(eta_x_set),
        eta_transverse_per_set=eta_x_set,
        rabi_frequency_per_set=rabi,
        j_effective=j_eff,
        t_transverse_max=t_x_nn,
        residual_same_freq_coupling=residual,
        rwa_ratio=rwa,
        adiabatic_timescale=1.0 / (2 * math.pi * j_eff) if j_eff > 0 else math.inf,
        feasibility_flags=flags,
    )
