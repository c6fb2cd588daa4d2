r"""Ising-Rabi lattice Hamiltonian and its symmetry operators.

The chain of ``N`` spins, each coupled to its own truncated boson mode, reads

.. math ::
    H = \delta \sum_j a^\dagger_j a_j + g \sum_j \sigma^x_j (a_j + a^\dagger_j)
        - J \sum_{j=0}^{N-2} \sigma^z_j \sigma^z_{j+1}

with open boundary conditions.

Basis ordering is site-major; inside a site the spin index is the slow one and
the Fock index the fast one, so the local index is ``s * n_fock + k`` with
``s = 0`` for spin up along z. Sites are indexed from 0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, DimensionOverflow, IndexOutOfRange, InvalidParams

MAX_BASIS_STATES = 2**26

__all__ = [
    "ModelParams",
    "LocalTermList",
    "ObservableSet",
    "local_operators",
    "embed",
    "build_hamiltonian",
    "build_local_terms",
    "gauge_operator",
    "parity_operator",
    "commutator_norm",
    "gauge_sector_isometry",
    "sector_local_terms",
    "build_sector_hamiltonian",
    "embed_sector_state",
    "to_triplets",
    "from_triplets",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical inputs of the chain.

    Parameters
    ----------
    n_sites : int
        Number of spins ``N`` (at least 2).
    delta : float
        Boson energy, in units of the Ising coupling by convention.
    g : float
        Spin-boson coupling.
    j_ising : float
        Ising coupling ``J``; ``J = 0`` is accepted for the decoupled limit.
    n_fock : int
        Retained Fock states per site, occupations ``0 .. n_fock - 1``.
    """

    n_sites: int
    delta: float
    g: float
    j_ising: float = 1.0
    n_fock: int = 6

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise InvalidParams(f"n_sites must be an integer >= 2, got {self.n_sites}")
        if int(self.n_fock) != self.n_fock or self.n_fock < 2:
            raise InvalidParams(f"n_fock must be an integer >= 2, got {self.n_fock}")
        for name in ("delta", "g", "j_ising"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidParams(f"{name} must be finite and >= 0, got {value}")

    @property
    def local_dim(self) -> int:
        return 2 * self.n_fock

    @property
    def dim(self) -> int:
        return self.local_dim**self.n_sites

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


@dataclass
class LocalTermList:
    """Hamiltonian split into on-site blocks and nearest-neighbour products.

    ``site_terms[j]`` is a dense ``(d, d)`` block acting on site ``j``.
    ``bond_terms[j]`` is a list of ``(left, right)`` pairs acting on sites
    ``j, j + 1``; the bond operator is ``sum(kron(left, right))``.
    """

    site_terms: list
    bond_terms: list

    def assemble(self) -> sp.csr_matrix:
        n_sites = len(self.site_terms)
        d = self.site_terms[0].shape[0]
        h = sp.csr_matrix((d**n_sites, d**n_sites))
        for j, block in enumerate(self.site_terms):
            h = h + embed(block, j, n_sites)
        for j, pairs in enumerate(self.bond_terms):
            for left, right in pairs:
                h = h + embed(np.kron(left, right), j, n_sites, width=2)
        return h.tocsr()


@dataclass
class ObservableSet:
    """Ground-state observables shared by the ED and MPS routes.

    ``cz_row[j]`` is the connected correlator between ``ref_site`` and ``j``.
    ``cz_matrix`` holds all pairs when the producer computed them.
    """

    n: float
    boson_number: np.ndarray
    sigma_x: np.ndarray
    sigma_z: np.ndarray
    a: np.ndarray
    ref_site: int
    cz_row: np.ndarray
    cz_matrix: np.ndarray | None = None

    @property
    def elitzur_max(self) -> float:
        return float(max(np.max(np.abs(self.a)), np.max(np.abs(self.sigma_x))))


def local_operators(n_fock: int) -> dict:
    """Single-site operators on the ``2 * n_fock`` dimensional site space."""
    b = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), k=1)
    eye_b = np.eye(n_fock)
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.diag([1.0, -1.0])
    eye_s = np.eye(2)
    return {
        "id": np.eye(2 * n_fock),
        "a": np.kron(eye_s, b),
        "adag": np.kron(eye_s, b.T),
        "n": np.kron(eye_s, b.T @ b),
        "sx": np.kron(sx, eye_b),
        "sz": np.kron(sz, eye_b),
    }


def embed(op, site: int, n_sites: int, width: int = 1) -> sp.csr_matrix:
    """Place an operator acting on ``width`` consecutive sites into the chain."""
    op = sp.csr_matrix(op)
    d = round(op.shape[0] ** (1.0 / width))
    left = sp.identity(d**site, format="csr")
    right = sp.identity(d ** (n_sites - site - width), format="csr")
    return sp.kron(sp.kron(left, op, format="csr"), right, format="csr")


def _check_dimension(p: ModelParams):
    if p.dim > MAX_BASIS_STATES:
        raise DimensionOverflow(
            f"Hilbert space dimension {p.dim} exceeds the limit {MAX_BASIS_STATES}"
        )


def build_hamiltonian(p: ModelParams) -> sp.csr_matrix:
    """Full sparse Hamiltonian of the open chain (real symmetric)."""
    _check_dimension(p)
    ops = local_operators(p.n_fock)
    n = p.n_sites
    d = p.local_dim
    h = sp.csr_matrix((d**n, d**n))
    x_coupling = ops["sx"] @ (ops["a"] + ops["adag"])
    for j in range(n):
        h = h + p.delta * embed(ops["n"], j, n) + p.g * embed(x_coupling, j, n)
    for j in range(n - 1):
        h = h - p.j_ising * (embed(ops["sz"], j, n) @ embed(ops["sz"], j + 1, n))
    h = h.tocsr()
    h.eliminate_zeros()
    return h


def build_local_terms(p: ModelParams) -> LocalTermList:
    ops = local_operators(p.n_fock)
    site = p.delta * ops["n"] + p.g * ops["sx"] @ (ops["a"] + ops["adag"])
    site_terms = [site.copy() for _ in range(p.n_sites)]
    bond_terms = [[(-p.j_ising * ops["sz"], ops["sz"])] for _ in range(p.n_sites - 1)]
    return LocalTermList(site_terms=site_terms, bond_terms=bond_terms)


def _check_site(p: ModelParams, site: int):
    if not 0 <= site < p.n_sites:
        raise IndexOutOfRange(f"site {site} outside 0..{p.n_sites - 1}")


def local_gauge_phases(n_fock: int) -> np.ndarray:
    """Diagonal of exp[i pi (a^dag a + sigma^z / 2)] on one site.

    Principal branch: spin up contributes ``+i``, spin down ``-i``.
    """
    parity = (-1.0) ** np.arange(n_fock)
    return np.concatenate([1j * parity, -1j * parity])


def gauge_operator(p: ModelParams, site: int) -> sp.csr_matrix:
    """Local Z2 gauge transformation at ``site`` (diagonal, unitary)."""
    _check_site(p, site)
    _check_dimension(p)
    local = sp.diags(local_gauge_phases(p.n_fock))
    return embed(local, site, p.n_sites).astype(complex)


def parity_operator(p: ModelParams) -> sp.csr_matrix:
    """Global parity exp[i pi sum_j sigma^x_j / 2] = prod_j (i sigma^x_j)."""
    _check_dimension(p)
    local = sp.csr_matrix(1j * local_operators(p.n_fock)["sx"])
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), [local] * p.n_sites)


def commutator_norm(a, b) -> float:
    """Largest absolute entry of ``AB - BA``."""
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} do not match")
    c = a @ b - b @ a
    if sp.issparse(c):
        c = c.tocoo()
        return float(np.max(np.abs(c.data))) if c.nnz else 0.0
    return float(np.max(np.abs(c)))


def gauge_sector_isometry(n_fock: int) -> np.ndarray:
    """Columns span the ``+i`` eigenspace of the local gauge operator.

    Column ``k`` is the product state with ``k`` bosons and spin up for even
    ``k``, spin down for odd ``k``. Inside this sector sigma^z equals the boson
    parity and sigma^x (a + a^dag) acts as a plain displacement.
    """
    q = np.zeros((2 * n_fock, n_fock))
    for k in range(n_fock):
        spin = k % 2
        q[spin * n_fock + k, k] = 1.0
    return q


def sector_local_terms(p: ModelParams) -> LocalTermList:
    """Local terms projected onto the uniform ``+i`` gauge sector of every site."""
    q = gauge_sector_isometry(p.n_fock)
    terms = build_local_terms(p)
    return LocalTermList(
        site_terms=[q.T @ h @ q for h in terms.site_terms],
        bond_terms=[[(q.T @ a @ q, q.T @ b @ q) for a, b in pairs] for pairs in terms.bond_terms],
    )


def build_sector_hamiltonian(p: ModelParams) -> sp.csr_matrix:
    """Hamiltonian restricted to the uniform gauge sector (``n_fock ** N`` states)."""
    if p.n_fock**p.n_sites > MAX_BASIS_STATES:
        raise DimensionOverflow(f"sector dimension {p.n_fock ** p.n_sites} too large")
    return sector_local_terms(p).assemble()


def embed_sector_state(psi_sector: np.ndarray, p: ModelParams) -> np.ndarray:
    """Map a sector-basis vector back into the full product basis."""
    q = gauge_sector_isometry(p.n_fock)
    t = np.asarray(psi_sector).reshape((p.n_fock,) * p.n_sites)
    for site in range(p.n_sites):
        t = np.moveaxis(np.tensordot(q, t, axes=(1, site)), 0, site)
    return t.reshape(-1)


def to_triplets(op) -> str:
    """Coordinate text dump, one ``row col re im`` line per stored entry."""
    coo = sp.coo_matrix(op)
    lines = [f"# dim {coo.shape[0]}"]
    for r, c, v in zip(coo.row, coo.col, coo.data):
        v = complex(v)
        lines.append(f"{r} {c} {v.real!r} {v.imag!r}")
    return "\n".join(lines) + "\n"


def from_triplets(text: str) -> sp.csr_matrix:
    dim = None
    rows, cols, vals = [], [], []
    for line in text.splitlines():
        if line.startswith("# dim"):
            dim = int(line.split()[2])
            continue
        if not line.strip():
            continue
        r, c, re, im = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re), float(im)))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
