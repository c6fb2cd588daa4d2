"""Exact diagonalization of small chains.

This is the reference every approximate method is validated against. States
are plain normalized numpy vectors in the basis documented in
:mod:`rabi_lattice.model`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .errors import DegeneracyResolutionFailure, InvalidParams, NoConvergence
from .model import (
    ModelParams,
    ObservableSet,
    build_hamiltonian,
    build_sector_hamiltonian,
    embed_sector_state,
    gauge_operator,
    local_operators,
    parity_operator,
)

DENSE_LIMIT = 4096
EIGEN_TOL = 1e-10
DEGENERACY_TOL = 1e-8
DEFAULT_SEED = 1234


@dataclass
class EigenResult:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors
    residuals: np.ndarray


def ground_space(p: ModelParams, k: int = 2, seed: int = DEFAULT_SEED) -> EigenResult:
    """Lowest ``k`` eigenpairs of the full Hamiltonian.

    Dense ``eigh`` below :data:`DENSE_LIMIT` basis states, ARPACK Lanczos
    above it with a seeded starting vector.
    """
    if k < 1:
        raise InvalidParams("k must be >= 1")
    h = build_hamiltonian(p)
    dim = h.shape[0]
    if dim <= DENSE_LIMIT:
        w, v = la.eigh(h.toarray(), subset_by_index=[0, min(k, dim) - 1])
        iterations = None
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(dim)
        try:
            w, v = sla.eigsh(h, k=k, which="SA", v0=v0, tol=1e-13,
                             ncv=max(4 * k + 1, 24), maxiter=20 * dim)
        except sla.ArpackNoConvergence as exc:
            raise NoConvergence(
                f"ARPACK did not converge for {p}", iterations=20 * dim
            ) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        iterations = "arpack"
    residuals = np.linalg.norm(h @ v - v * w, axis=0)
    bound = 1e-9 * np.maximum(1.0, np.abs(w))
    if np.any(residuals > bound):
        raise NoConvergence(
            f"eigen-residual {residuals.max():.3e} above bound",
            iterations=iterations,
            residual=float(residuals.max()),
        )
    return EigenResult(energies=w, states=v, residuals=residuals)


def degeneracy_gap(p: ModelParams) -> float:
    """``E1 - E0`` of the two lowest levels (clipped at zero)."""
    res = ground_space(p, k=2)
    return max(float(res.energies[1] - res.energies[0]), 0.0)


def _eigh_lowest(h, k, seed):
    dim = h.shape[0]
    if dim <= DENSE_LIMIT:
        return la.eigh(h.toarray(), subset_by_index=[0, min(k, dim) - 1])
    v0 = np.random.default_rng(seed).standard_normal(dim)
    w, v = sla.eigsh(h, k=k, which="SA", v0=v0, tol=1e-13, ncv=max(4 * k + 1, 24))
    order = np.argsort(w)
    return w[order], v[:, order]


def gauge_sector_ground_state(p: ModelParams, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Ground state inside the uniform ``+i`` sector of all gauge operators.

    Diagonalizes the sector-restricted Hamiltonian, so other (possibly
    near-degenerate) gauge sectors cannot leak in. The sector energy is
    checked against the unrestricted ground energy. This is the
    parity-broken member of the ground pair and the state DMRG targets.
    """
    w, v = _eigh_lowest(build_sector_hamiltonian(p), 1, seed)
    e_full = ground_space(p, k=1, seed=seed).energies[0]
    if w[0] - e_full > DEGENERACY_TOL * max(1.0, abs(e_full)):
        raise DegeneracyResolutionFailure(
            f"uniform gauge sector energy {w[0]} above ground energy {e_full}"
        )
    return _fix_phase(embed_sector_state(v[:, 0], p))


def symmetry_resolved_ground_state(p: ModelParams) -> np.ndarray:
    """Global-parity eigenstate inside the two-fold ground manifold.

    Parity anticommutes with every local gauge operator, so the manifold is
    spanned by a gauge-sector state and its parity image and no state is an
    eigenvector of both. Parity is diagonalized on that span: the result has
    ``<sigma^z_j> = 0`` and, like any state of the pair, ``<a_j> =
    <sigma^x_j> = 0``. Ties go to the eigenvalue with the largest real part,
    then the largest imaginary part.
    """
    psi = gauge_sector_ground_state(p)
    parity = parity_operator(p)
    basis = np.column_stack([psi, parity @ psi])
    if abs(np.vdot(basis[:, 0], basis[:, 1])) > 1e-9:
        raise DegeneracyResolutionFailure("parity image is not orthogonal to the sector state")
    restricted = _restrict(parity, basis)
    if np.linalg.norm(restricted.conj().T @ restricted - np.eye(2)) > 1e-9:
        raise DegeneracyResolutionFailure("ground manifold is not closed under parity")
    gauges = [_restrict(gauge_operator(p, j), basis) for j in range(p.n_sites)]
    for i in range(len(gauges)):
        for j in range(i):
            if np.max(np.abs(gauges[i] @ gauges[j] - gauges[j] @ gauges[i])) > 1e-9:
                raise DegeneracyResolutionFailure("restricted gauge operators do not commute")
    w, u = np.linalg.eig(restricted)
    best = max(range(2), key=lambda i: (round(w[i].real, 9), round(w[i].imag, 9)))
    return _fix_phase(basis @ u[:, best])


def _restrict(op, basis):
    return basis.conj().T @ (op @ basis)


def _fix_phase(psi):
    psi = psi / np.linalg.norm(psi)
    pivot = psi[np.argmax(np.abs(psi))]
    psi = psi * (abs(pivot) / pivot)
    if np.max(np.abs(psi.imag)) < 1e-14:
        psi = psi.real.copy()
    return psi


def _apply(psi, op, site, n_sites, d):
    t = psi.reshape(d**site, d, d ** (n_sites - site - 1))
    return np.einsum("ij,ajb->aib", op, t).reshape(-1)


def observables(psi: np.ndarray, p: ModelParams, ref_site: int | None = None) -> ObservableSet:
    """Boson number, local spin/boson expectations and the connected ``C_z`` matrix."""
    n_sites, d = p.n_sites, p.local_dim
    ops = local_operators(p.n_fock)
    psi = np.asarray(psi)

    def expect(op, site):
        return np.vdot(psi, _apply(psi, op, site, n_sites, d))

    nb = np.array([expect(ops["n"], j).real for j in range(n_sites)])
    sx = np.array([expect(ops["sx"], j).real for j in range(n_sites)])
    sz = np.array([expect(ops["sz"], j).real for j in range(n_sites)])
    a = np.array([expect(ops["a"], j) for j in range(n_sites)])
    sz_psi = [_apply(psi, ops["sz"], j, n_sites, d) for j in range(n_sites)]
    zz = np.array([[np.vdot(sz_psi[i], sz_psi[j]).real for j in range(n_sites)]
                   for i in range(n_sites)])
    cz = zz - np.outer(sz, sz)
    if ref_site is None:
        ref_site = center_site(n_sites)
    return ObservableSet(
        n=float(nb.mean()),
        boson_number=nb,
        sigma_x=sx,
        sigma_z=sz,
        a=a,
        ref_site=ref_site,
        cz_row=cz[ref_site].copy(),
        cz_matrix=cz,
    )


def center_site(n_sites: int) -> int:
    """0-based index of site ceil(N/2) in 1-based counting."""
    return math.ceil(n_sites / 2) - 1


def ferro_state(p: ModelParams, up: bool = True) -> np.ndarray:
    """Boson vacuum with all spins up (or down) along z."""
    local = np.zeros(p.local_dim)
    local[0 if up else p.n_fock] = 1.0
    return _product([local] * p.n_sites)


def coherent_state(alpha: float, n_fock: int) -> np.ndarray:
    """Truncated coherent state, renormalized inside the retained Fock space."""
    v = np.zeros(n_fock)
    if alpha == 0:
        v[0] = 1.0
        return v
    k = np.arange(n_fock)
    log_fact = np.array([math.lgamma(i + 1) for i in k])
    v = np.sign(alpha) ** k * np.exp(k * np.log(abs(alpha)) - 0.5 * log_fact - 0.5 * alpha**2)
    return v / np.linalg.norm(v)


def dressed_ferro_state(p: ModelParams, sign: int = +1) -> np.ndarray:
    """Product of ``|-alpha, up_x> + sign |alpha, down_x>`` over sites, alpha = g/delta."""
    if p.delta == 0:
        raise InvalidParams("dressed states need delta > 0")
    alpha = p.g / p.delta
    up_x = np.array([1.0, 1.0]) / np.sqrt(2)
    down_x = np.array([1.0, -1.0]) / np.sqrt(2)
    local = (np.kron(up_x, coherent_state(-alpha, p.n_fock))
             + sign * np.kron(down_x, coherent_state(alpha, p.n_fock)))
    local /= np.linalg.norm(local)
    return _product([local] * p.n_sites)


def _product(vectors):
    out = np.ones(1)
    for v in vectors:
        out = np.kron(out, v)
    return out


def tfim_chain_gap(h: float, j_ising: float, n_sites: int) -> float:
    """Lowest gap of the open transverse-field Ising chain (dense, 2^N states).

    Control case: unlike the spin-boson chain, a static field splits the
    ferromagnetic pair by an amount that shrinks like ``h^N``.
    """
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.diag([1.0, -1.0])
    dim = 2**n_sites
    ham = np.zeros((dim, dim))
    for j in range(n_sites):
        ham += h * np.kron(np.kron(np.eye(2**j), sx), np.eye(2 ** (n_sites - j - 1)))
    for j in range(n_sites - 1):
        ham -= j_ising * np.kron(np.kron(np.eye(2**j), np.kron(sz, sz)),
                                 np.eye(2 ** (n_sites - j - 2)))
    w = np.linalg.eigvalsh(ham)
    return float(w[1] - w[0])
