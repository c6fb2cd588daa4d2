"""Two-site DMRG for the open spin-boson chain.

Every local gauge operator commutes with the Hamiltonian and acts on a single
site, so the Hilbert space splits into sectors labelled site by site. The
ground pair lives in the uniform ``+i`` sector and its parity image. The
sweeps run inside that sector, where each site keeps ``n_fock`` states
(see :func:`rabi_lattice.model.gauge_sector_isometry`). Local gauge symmetry
is therefore exact in every converged state, including the dressed phase
where other sectors are exponentially close in energy. Returned states are
embedded back into the full ``2 * n_fock`` site space.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import CutoffViolation, InvalidParams, NoConvergence
from .exact import center_site
from .model import ModelParams, ObservableSet, gauge_sector_isometry, local_operators, sector_local_terms

log = logging.getLogger(__name__)

DENSE_SOLVE_LIMIT = 300
CHECKPOINT_MAGIC = b"RLMPS"
CHECKPOINT_VERSION = 1


@dataclass
class DMRGConfig:
    """Sweep hyperparameters.

    ``energy_tol`` defaults to ``1e-9 * N`` when left as ``None``.
    """

    max_bond: int = 10
    n_sweeps: int = 50
    energy_tol: float | None = None
    svd_floor: float = 1e-12
    seed: int = 0
    min_sweeps: int = 2

    def __post_init__(self):
        if self.max_bond < 1:
            raise InvalidParams("max_bond must be >= 1")
        if self.energy_tol is not None and self.energy_tol <= 0:
            raise InvalidParams("energy_tol must be > 0")
        if self.n_sweeps < 1:
            raise InvalidParams("n_sweeps must be >= 1")

    def tolerance(self, n_sites: int) -> float:
        return self.energy_tol if self.energy_tol is not None else 1e-9 * n_sites


@dataclass
class MPSState:
    """Open-boundary MPS; tensors have legs ``(left bond, physical, right bond)``."""

    tensors: list
    canonical_center: int = 0

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def local_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list:
        return [t.shape[2] for t in self.tensors[:-1]]

    def norm(self) -> float:
        env = np.ones((1, 1))
        for a in self.tensors:
            env = np.tensordot(env, a, axes=(1, 0))
            env = np.tensordot(a.conj(), env, axes=([0, 1], [0, 1]))
        return float(np.sqrt(abs(env[0, 0])))

    def to_dense(self) -> np.ndarray:
        psi = self.tensors[0]
        for a in self.tensors[1:]:
            psi = np.tensordot(psi, a, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)

    def canonical_error(self) -> float:
        """Largest deviation from the isometry conditions around the center."""
        err = 0.0
        for i, a in enumerate(self.tensors):
            if i < self.canonical_center:
                m = a.reshape(-1, a.shape[2])
                err = max(err, np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))))
            elif i > self.canonical_center:
                m = a.reshape(a.shape[0], -1)
                err = max(err, np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))))
        return float(err)


@dataclass
class DMRGResult:
    state: MPSState
    energy: float
    converged: bool
    sweeps: int
    max_discarded_weight: float
    sweep_energies: list = field(default_factory=list)
    canonical_error: float = 0.0
    n: float = float("nan")

    def __iter__(self):
        # allows ``state, energy = dmrg_ground_state(...)``
        return iter((self.state, self.energy))


def build_mpo(site_terms, bond_terms) -> list:
    """MPO tensors ``(w_left, w_right, out, in)`` for nearest-neighbour terms.

    Bond dimension is ``2 + max pairs per bond``. Index 0 carries "finished",
    the last index carries "not started".
    """
    n_sites = len(site_terms)
    d = site_terms[0].shape[0]
    n_pairs = max((len(b) for b in bond_terms), default=0)
    w = 2 + n_pairs
    eye = np.eye(d)
    tensors = []
    for j in range(n_sites):
        m = np.zeros((w, w, d, d))
        m[0, 0] = eye
        m[w - 1, w - 1] = eye
        m[w - 1, 0] = site_terms[j]
        if j < n_sites - 1:
            for k, (left, _) in enumerate(bond_terms[j]):
                m[w - 1, 1 + k] = left
        if j > 0:
            for k, (_, right) in enumerate(bond_terms[j - 1]):
                m[1 + k, 0] = right
        tensors.append(m)
    tensors[0] = tensors[0][w - 1:w]
    tensors[-1] = tensors[-1][:, 0:1]
    return tensors


def _random_mps(n_sites, d, max_bond, rng):
    dims = [1]
    for i in range(1, n_sites):
        dims.append(int(min(max_bond, d**i, d ** (n_sites - i))))
    dims.append(1)
    return [rng.standard_normal((dims[i], d, dims[i + 1])) for i in range(n_sites)]


def _right_canonicalize(tensors):
    tensors = [t.copy() for t in tensors]
    for i in range(len(tensors) - 1, 0, -1):
        dl, d, dr = tensors[i].shape
        q, r = la.qr(tensors[i].reshape(dl, d * dr).T, mode="economic")
        tensors[i] = q.T.reshape(-1, d, dr)
        tensors[i - 1] = np.tensordot(tensors[i - 1], r.T, axes=(2, 0))
    tensors[0] /= np.linalg.norm(tensors[0])
    return tensors


def _update_left(env, a, w):
    t = np.tensordot(env, a, axes=(2, 0))
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))
    return t.transpose(0, 2, 1)


def _update_right(env, b, w):
    t = np.tensordot(b, env, axes=(2, 2))
    t = np.tensordot(t, w, axes=([1, 3], [3, 1]))
    t = np.tensordot(b.conj(), t, axes=([1, 2], [3, 1]))
    return t.transpose(0, 2, 1)


def _apply_two_site(theta, left, w1, w2, right):
    t = np.tensordot(left, theta, axes=(2, 0))
    t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))
    t = np.tensordot(t, w2, axes=([3, 1], [0, 3]))
    t = np.tensordot(t, right, axes=([1, 3], [2, 1]))
    return t


def lanczos_lowest(matvec, v0, max_krylov=30, tol=1e-9, restarts=20):
    """Lowest eigenpair of a symmetric operator by restarted Lanczos.

    Full reorthogonalization; each cycle restarts from the current Ritz
    vector. Converged when the residual norm falls below ``tol * max(1, |E|)``.
    """
    dim = v0.size
    max_krylov = min(max_krylov, dim)
    basis = np.empty((max_krylov, dim))
    basis[0] = v0 / np.linalg.norm(v0)
    theta = np.inf
    for _ in range(restarts):
        alphas, betas = [], []
        for k in range(max_krylov):
            w = matvec(basis[k])
            alpha = float(np.dot(basis[k], w))
            alphas.append(alpha)
            q = basis[:k + 1]
            w -= q.T @ (q @ w)
            w -= q.T @ (q @ w)
            beta = float(np.linalg.norm(w))
            evals, evecs = la.eigh_tridiagonal(np.array(alphas), np.array(betas),
                                               select="i", select_range=(0, 0))
            theta, y = float(evals[0]), evecs[:, 0]
            if beta * abs(y[-1]) < tol * max(1.0, abs(theta)) or beta < 1e-14:
                return theta, y @ basis[:k + 1], True
            if k + 1 < max_krylov:
                betas.append(beta)
                basis[k + 1] = w / beta
        v = y @ basis[:len(alphas)]
        basis[0] = v / np.linalg.norm(v)
    return theta, basis[0].copy(), False


def _solve_local(theta, left, w1, w2, right):
    shape = theta.shape
    dim = theta.size
    if dim <= DENSE_SOLVE_LIMIT:
        h = np.einsum("awb,wvij,vukl,cud->aikcbjld", left, w1, w2, right, optimize=True)
        h = h.reshape(dim, dim)
        e, v = la.eigh(0.5 * (h + h.T), subset_by_index=[0, 0])
        return float(e[0]), v[:, 0].reshape(shape)

    def matvec(x):
        return _apply_two_site(x.reshape(shape), left, w1, w2, right).reshape(-1)

    v0 = theta.reshape(-1)
    if not np.any(v0):
        v0 = np.ones(dim)
    e, v, _ = lanczos_lowest(matvec, v0)
    return e, v.reshape(shape)


def _split(theta, max_bond, floor):
    dl, d1, d2, dr = theta.shape
    u, s, vh = la.svd(theta.reshape(dl * d1, d2 * dr), full_matrices=False,
                      lapack_driver="gesdd")
    weights = s**2
    total = weights.sum()
    tail = np.cumsum(weights[::-1])[::-1] / total  # tail[k] = discarded weight if keeping k
    keep = len(s)
    for k in range(1, len(s)):
        if tail[k] <= floor:
            keep = k
            break
    keep = max(1, min(keep, max_bond))
    discarded = float(tail[keep]) if keep < len(s) else 0.0
    s = s[:keep] / np.linalg.norm(s[:keep])
    return u[:, :keep].reshape(dl, d1, keep), s, vh[:keep].reshape(keep, d2, dr), discarded


def _project_to_sector(state: MPSState, q: np.ndarray) -> list:
    return [np.tensordot(t, q, axes=(1, 0)).transpose(0, 2, 1) for t in state.tensors]


def _embed(tensors, q) -> list:
    return [np.tensordot(t, q, axes=(1, 1)).transpose(0, 2, 1) for t in tensors]


def dmrg_ground_state(p: ModelParams, cfg: DMRGConfig | None = None,
                      initial: MPSState | None = None, check_cutoff: bool = True) -> DMRGResult:
    """Ground state of the chain by two-site DMRG sweeps.

    One sweep is a left-to-right pass followed by a right-to-left pass. The
    run stops once the energy changes by less than the tolerance between
    sweeps (after at least ``cfg.min_sweeps``). ``initial`` warm-starts from a
    previous state (any bond dimension); otherwise a seeded random MPS is
    used.

    Raises :class:`CutoffViolation` (carrying the result) when the converged
    state has ``2 n > n_fock``, and :class:`NoConvergence` when the sweep cap
    is reached.
    """
    cfg = cfg or DMRGConfig()
    n_sites = p.n_sites
    q = gauge_sector_isometry(p.n_fock)
    terms = sector_local_terms(p)
    mpo = build_mpo(terms.site_terms, terms.bond_terms)
    d = p.n_fock
    if initial is not None:
        if initial.n_sites != n_sites or initial.local_dim != p.local_dim:
            raise InvalidParams("initial state does not match the model dimensions")
        tensors = _project_to_sector(initial, q)
    else:
        tensors = _random_mps(n_sites, d, cfg.max_bond, np.random.default_rng(cfg.seed))
    tensors = _right_canonicalize(tensors)

    right_env = [None] * (n_sites + 1)
    left_env = [None] * (n_sites + 1)
    right_env[n_sites] = np.ones((1, 1, 1))
    left_env[0] = np.ones((1, 1, 1))
    for i in range(n_sites - 1, 0, -1):
        right_env[i] = _update_right(right_env[i + 1], tensors[i], mpo[i])

    tol = cfg.tolerance(n_sites)
    energies = []
    max_discarded = 0.0
    canonical_err = 0.0
    energy = np.inf
    converged = False
    for sweep in range(1, cfg.n_sweeps + 1):
        sweep_discarded = 0.0
        for i in range(n_sites - 1):
            theta = np.tensordot(tensors[i], tensors[i + 1], axes=(2, 0))
            energy, theta = _solve_local(theta, left_env[i], mpo[i], mpo[i + 1], right_env[i + 2])
            a, s, b, disc = _split(theta, cfg.max_bond, cfg.svd_floor)
            sweep_discarded = max(sweep_discarded, disc)
            tensors[i] = a
            tensors[i + 1] = s[:, None, None] * b
            left_env[i + 1] = _update_left(left_env[i], a, mpo[i])
        for i in range(n_sites - 2, -1, -1):
            theta = np.tensordot(tensors[i], tensors[i + 1], axes=(2, 0))
            energy, theta = _solve_local(theta, left_env[i], mpo[i], mpo[i + 1], right_env[i + 2])
            a, s, b, disc = _split(theta, cfg.max_bond, cfg.svd_floor)
            sweep_discarded = max(sweep_discarded, disc)
            tensors[i] = a * s[None, None, :]
            tensors[i + 1] = b
            right_env[i + 1] = _update_right(right_env[i + 2], b, mpo[i + 1])
        max_discarded = sweep_discarded
        canonical_err = MPSState(tensors, 0).canonical_error()
        energies.append(energy)
        log.debug("sweep %d energy %.12f discarded %.2e", sweep, energy, sweep_discarded)
        if sweep >= cfg.min_sweeps and abs(energies[-1] - energies[-2]) < tol:
            converged = True
            break

    state = MPSState(_embed(tensors, q), canonical_center=0)
    result = DMRGResult(
        state=state,
        energy=float(energy),
        converged=converged,
        sweeps=len(energies),
        max_discarded_weight=max_discarded,
        sweep_energies=energies,
        canonical_error=canonical_err,
    )
    result.n = _mean_boson_number(tensors)
    if not converged:
        delta_e = abs(energies[-1] - energies[-2]) if len(energies) > 1 else float("nan")
        raise NoConvergence(f"DMRG not converged after {len(energies)} sweeps (last dE {delta_e:.3e})",
                            iterations=len(energies), residual=delta_e)
    if check_cutoff and 2 * result.n > p.n_fock:
        raise CutoffViolation(
            f"2n = {2 * result.n:.3f} exceeds the cutoff n_fock = {p.n_fock}", result=result
        )
    return result


def _mean_boson_number(tensors) -> float:
    # sector basis: occupation equals the local index
    d = tensors[0].shape[1]
    return float(np.mean(_local_expectations(tensors, np.diag(np.arange(d, dtype=float)))))


def _environments(tensors):
    n_sites = len(tensors)
    left = [np.ones((1, 1))]
    for a in tensors:
        env = np.tensordot(left[-1], a, axes=(1, 0))
        left.append(np.tensordot(a.conj(), env, axes=([0, 1], [0, 1])))
    right = [None] * (n_sites + 1)
    right[n_sites] = np.ones((1, 1))
    for i in range(n_sites - 1, -1, -1):
        a = tensors[i]
        env = np.tensordot(a, right[i + 1], axes=(2, 1))
        right[i] = np.tensordot(a.conj(), env, axes=([1, 2], [1, 2]))
    return left, right


def _local_expectations(tensors, op, envs=None):
    left, right = envs if envs is not None else _environments(tensors)
    norm = left[-1][0, 0].real
    out = []
    for i, a in enumerate(tensors):
        t = np.tensordot(left[i], a, axes=(1, 0))           # (bra, s, b_ket)
        t = np.tensordot(op, t, axes=(1, 1))                # (s_out, bra, b_ket)
        t = np.tensordot(a.conj(), t, axes=([0, 1], [1, 0]))  # (b_bra, b_ket)
        out.append(np.tensordot(t, right[i + 1], axes=([0, 1], [0, 1])) / norm)
    return np.array(out)


def _two_point_row(tensors, op, ref, envs):
    """``<op_ref op_j>`` for all ``j``; the diagonal uses ``op @ op``."""
    left, right = envs
    norm = left[-1][0, 0].real
    n_sites = len(tensors)
    row = np.zeros(n_sites, dtype=complex)
    row[ref] = _site_sandwich(left[ref], tensors[ref], op @ op, right[ref + 1]) / norm

    # to the right: carry the environment with op inserted at ref
    env = _transfer(left[ref], tensors[ref], op)
    for j in range(ref + 1, n_sites):
        row[j] = _site_sandwich(env, tensors[j], op, right[j + 1]) / norm
        env = _transfer(env, tensors[j], None)
    # to the left: mirror with right environments
    env = _transfer_right(right[ref + 1], tensors[ref], op)
    for j in range(ref - 1, -1, -1):
        a = tensors[j]
        t = np.tensordot(a, env, axes=(2, 1))
        t = np.tensordot(op, t, axes=(1, 1)).transpose(1, 0, 2)
        row[j] = np.tensordot(left[j], np.tensordot(a.conj(), t, axes=([1, 2], [1, 2])),
                              axes=([0, 1], [0, 1])) / norm
        env = _transfer_right(env, a, None)
    return row


def _site_sandwich(env_left, a, op, env_right):
    t = np.tensordot(env_left, a, axes=(1, 0))
    t = np.tensordot(op, t, axes=(1, 1))
    t = np.tensordot(a.conj(), t, axes=([0, 1], [1, 0]))
    return np.tensordot(t, env_right, axes=([0, 1], [0, 1]))


def _transfer(env, a, op):
    t = np.tensordot(env, a, axes=(1, 0))
    if op is not None:
        t = np.tensordot(op, t, axes=(1, 1)).transpose(1, 0, 2)
    return np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))


def _transfer_right(env, a, op):
    t = np.tensordot(a, env, axes=(2, 1))  # (a_ket_left, s, b_bra)
    if op is not None:
        t = np.tensordot(op, t, axes=(1, 1)).transpose(1, 0, 2)
    return np.tensordot(a.conj(), t, axes=([1, 2], [1, 2]))


def mps_observables(state: MPSState, p: ModelParams, ref_site: int | None = None) -> ObservableSet:
    """Exact contraction of the order parameter, local expectations and ``C_z`` row."""
    ops = local_operators(p.n_fock)
    tensors = state.tensors
    envs = _environments(tensors)
    nb = _local_expectations(tensors, ops["n"], envs).real
    sx = _local_expectations(tensors, ops["sx"], envs).real
    sz = _local_expectations(tensors, ops["sz"], envs).real
    a = _local_expectations(tensors, ops["a"], envs)
    if ref_site is None:
        ref_site = center_site(p.n_sites)
    zz = _two_point_row(tensors, ops["sz"], ref_site, envs).real
    return ObservableSet(
        n=float(nb.mean()),
        boson_number=nb,
        sigma_x=sx,
        sigma_z=sz,
        a=a,
        ref_site=ref_site,
        cz_row=zz - sz[ref_site] * sz,
    )


def save_checkpoint(state: MPSState, path) -> None:
    """Binary layout (little endian):

    ``b"RLMPS"``, uint32 version, uint32 n_sites, uint32 local_dim,
    uint32 canonical_center, n_sites + 1 uint32 bond dimensions (including
    the trivial outer ones), then each tensor as row-major float64 with shape
    ``(bond[i], local_dim, bond[i + 1])``.
    """
    dims = [1] + state.bond_dims + [1]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<4I", CHECKPOINT_VERSION, state.n_sites, state.local_dim,
                             state.canonical_center))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for t in state.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path) -> MPSState:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != CHECKPOINT_MAGIC:
        raise InvalidParams(f"{path} is not an MPS checkpoint")
    version, n_sites, d, center = struct.unpack_from("<4I", data, 5)
    if version != CHECKPOINT_VERSION:
        raise InvalidParams(f"unsupported checkpoint version {version}")
    offset = 5 + 16
    dims = struct.unpack_from(f"<{n_sites + 1}I", data, offset)
    offset += 4 * (n_sites + 1)
    tensors = []
    for i in range(n_sites):
        shape = (dims[i], d, dims[i + 1])
        count = int(np.prod(shape))
        tensors.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy())
        offset += 8 * count
    return MPSState(tensors, canonical_center=center)
