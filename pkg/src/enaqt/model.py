"""Model construction: Hamiltonians, attenuation, and master-equation generators.

Site geometry
-------------
Sites are indexed 0..n-1 internally.  A chain couples nearest neighbours
with strength v; a ring adds the (0, n-1) bond.  The truncated-infinite
geometry is an open chain whose leftmost sites all carry the trapping rate,
with the initial site a fixed offset to the right of the trap edge.

All rates are expressed in units of the coupling v, with hbar = 1, so time
is measured in 1/v.

Vectorization convention: row-major, vec index(n, m) = n*N + m, 0-based.
The population of site s sits at index s*N + s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ValidationError

__all__ = [
    "Topology",
    "SystemSpec",
    "DensityState",
    "Superoperator",
    "semi_infinite_spec",
    "build_chain_hamiltonian",
    "build_ring_hamiltonian",
    "build_attenuation",
    "build_hamiltonian",
    "build_liouvillian",
    "build_augmented_liouvillian",
    "population_index",
    "site_density",
    "state_density",
]

# Above this size the dense n^2 x n^2 superoperator is not materialized.
DENSE_LIMIT = 64


class Topology(str, Enum):
    CHAIN = "chain"
    RING = "ring"
    SEMI_INFINITE = "semi-infinite"


@dataclass(frozen=True)
class SystemSpec:
    """Complete description of one transport problem.

    Parameters
    ----------
    topology : Topology or str
        Chain, ring, or the truncated-infinite chain geometry.
    n : int
        Number of sites (>= 2 for chains, >= 3 for rings).
    trap_sites : iterable of int
        0-based sites carrying the trapping rate kappa.  Duplicates are
        dropped; the stored value is a sorted tuple.
    initial_site : int
        0-based site holding the particle at t = 0.
    kappa, mu, gamma : float
        Trapping, loss, and dephasing rates, all >= 0 and finite,
        in units of the coupling.
    v : float, optional
        Nearest-neighbour coupling strength.  Defaults to 1, which sets
        the energy scale.
    offset : int, optional
        Distance of the initial site from the trap-region edge.  Only
        meaningful for the semi-infinite topology, where it must be >= 1.
    """

    topology: Topology
    n: int
    trap_sites: tuple[int, ...]
    initial_site: int
    kappa: float
    mu: float
    gamma: float
    v: float = 1.0
    offset: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        traps = tuple(sorted({int(t) for t in self.trap_sites}))
        object.__setattr__(self, "trap_sites", traps)
        n = self.n
        min_n = 3 if self.topology is Topology.RING else 2
        if not isinstance(n, int) or n < min_n:
            raise ValidationError(
                f"n={n!r} invalid: {self.topology.value} needs at least "
                f"{min_n} sites")
        for name in ("kappa", "mu", "gamma", "v"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValidationError(f"{name}={val!r} must be finite")
            if name != "v" and val < 0:
                raise ValidationError(f"{name}={val!r} must be >= 0")
        for s in traps + (self.initial_site,):
            if not 0 <= s < n:
                raise ValidationError(
                    f"site index {s} outside [0, {n})")
        if (self.topology is not Topology.SEMI_INFINITE
                and len(traps) == 1 and self.initial_site in traps):
            # The efficiency gain is undefined when the particle starts
            # on the single trap site.
            raise ValidationError(
                f"initial site {self.initial_site} coincides with the trap")
        if self.topology is Topology.SEMI_INFINITE:
            if self.offset is None or self.offset < 1:
                raise ValidationError(
                    "semi-infinite topology requires offset >= 1")
            if not traps:
                raise ValidationError(
                    "semi-infinite topology requires a trap region")

    def with_gamma(self, gamma: float) -> "SystemSpec":
        """Copy of this spec at a different dephasing rate."""
        return replace(self, gamma=float(gamma))

    def with_rates(self, kappa=None, mu=None, gamma=None) -> "SystemSpec":
        kw = {}
        if kappa is not None:
            kw["kappa"] = float(kappa)
        if mu is not None:
            kw["mu"] = float(mu)
        if gamma is not None:
            kw["gamma"] = float(gamma)
        return replace(self, **kw)


def semi_infinite_spec(kappa, mu, gamma, offset=1, left=None, right=None):
    """Truncated realization of the infinite chain with a left trap region.

    Sites 0..left-1 all trap; the initial site is `offset` sites right of
    the trap edge; `right` further sites extend the free region.  Callers
    that do not pass explicit sizes get left = right = ceil(16/mu), sized
    so the ballistic front never reaches the boundary within the survival
    horizon.
    """
    if mu <= 0:
        raise ValidationError("semi-infinite sizing needs mu > 0")
    if left is None:
        left = math.ceil(16.0 / mu)
    if right is None:
        right = math.ceil(16.0 / mu)
    n = left + offset + right
    return SystemSpec(
        topology=Topology.SEMI_INFINITE,
        n=n,
        trap_sites=tuple(range(left)),
        initial_site=left - 1 + offset,
        kappa=kappa,
        mu=mu,
        gamma=gamma,
        offset=offset,
    )


def build_chain_hamiltonian(n: int, v: float = 1.0) -> np.ndarray:
    """Open-chain hopping Hamiltonian: v on the two off-diagonals."""
    if not isinstance(n, int) or n < 2:
        raise ValidationError(f"chain needs n >= 2, got {n!r}")
    h = np.zeros((n, n), dtype=complex)
    idx = np.arange(n - 1)
    h[idx, idx + 1] = v
    h[idx + 1, idx] = v
    return h


def build_ring_hamiltonian(n: int, v: float = 1.0) -> np.ndarray:
    """Chain Hamiltonian closed into a ring by the (0, n-1) bond."""
    if not isinstance(n, int) or n < 3:
        raise ValidationError(f"ring needs n >= 3, got {n!r}")
    h = build_chain_hamiltonian(n, v)
    h[0, n - 1] += v
    h[n - 1, 0] += v
    return h


def build_attenuation(n, trap_sites, kappa, mu) -> np.ndarray:
    """Anti-hermitian attenuation term -i(mu + kappa) / -i*mu on the diagonal.

    Trap sites decay at mu + kappa, all other sites at mu.  Returned as a
    dense complex matrix so it can be added directly to the hopping part.
    """
    if kappa < 0 or mu < 0:
        raise ValidationError(f"rates must be >= 0, got kappa={kappa}, mu={mu}")
    traps = sorted({int(t) for t in trap_sites})
    for t in traps:
        if not 0 <= t < n:
            raise ValidationError(f"trap site {t} outside [0, {n})")
    diag = np.full(n, -1j * mu, dtype=complex)
    diag[traps] += -1j * kappa
    return np.diag(diag)


def build_hamiltonian(spec: SystemSpec) -> np.ndarray:
    """Total single-particle generator H = hopping + attenuation."""
    if spec.topology is Topology.RING:
        h0 = build_ring_hamiltonian(spec.n, spec.v)
    else:
        # The truncated-infinite geometry is an open chain.
        h0 = build_chain_hamiltonian(spec.n, spec.v)
    return h0 + build_attenuation(spec.n, spec.trap_sites, spec.kappa, spec.mu)


def population_index(n: int, site: int) -> int:
    """Vec index of the population rho[site, site] under row-major layout."""
    return site * n + site


def site_density(n: int, site: int) -> np.ndarray:
    """Vectorized density matrix of a particle localized on one site."""
    if not 0 <= site < n:
        raise ValidationError(f"site {site} outside [0, {n})")
    rho = np.zeros(n * n, dtype=complex)
    rho[population_index(n, site)] = 1.0
    return rho


def state_density(state: np.ndarray) -> np.ndarray:
    """Vectorized |psi><psi| for a normalized state vector."""
    psi = np.asarray(state, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValidationError("zero state vector")
    psi = psi / norm
    return np.outer(psi, psi.conj()).reshape(-1)


@dataclass(frozen=True)
class DensityState:
    """Vectorized density matrix with its time stamp.

    vec holds rho[n, m] at index n*N + m.  Solver routines accept either a
    DensityState, a length-N^2 vector, or an N x N matrix.
    """

    vec: np.ndarray
    time: float = 0.0

    @property
    def n(self) -> int:
        return int(round(math.sqrt(self.vec.size)))

    @property
    def matrix(self) -> np.ndarray:
        return self.vec.reshape(self.n, self.n)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def as_density_vec(rho, n: int) -> np.ndarray:
    """Normalize the accepted density inputs to a length-n^2 complex vector."""
    if rho is None:
        raise ValidationError("missing density matrix")
    if isinstance(rho, DensityState):
        vec = rho.vec
    else:
        arr = np.asarray(rho, dtype=complex)
        vec = arr.reshape(-1) if arr.ndim == 2 else arr
    if vec.size != n * n:
        raise ValidationError(
            f"density size {vec.size} does not match n^2 = {n * n}")
    return np.array(vec, dtype=complex)


class Superoperator:
    """Master-equation generator acting on vectorized density matrices.

    Dense representation stores the full dim x dim matrix; the matrix-free
    representation applies H and the dephasing projector directly to the
    N x N matrix form, which is the only option for several hundred sites.

    The dense element formula, testable entrywise, is

        L[(n,m),(p,q)] = -i H[n,p] d(m,q) + i conj(H[m,q]) d(n,p)
                         - 2 gamma (1 - d(n,m)) d(n,p) d(m,q)

    with d the Kronecker delta.
    """

    def __init__(self, n, gamma, hamiltonian, matrix=None,
                 accumulator_index=None, trap_sites=(), kappa=0.0):
        self.n = n
        self.gamma = gamma
        self.hamiltonian = hamiltonian
        self._matrix = matrix
        self.accumulator_index = accumulator_index
        self.trap_sites = tuple(trap_sites)
        self.kappa = kappa
        self.dim = (n * n) if accumulator_index is None else (n * n + 1)
        self.representation = "dense" if matrix is not None else "matrix-free"

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            raise ValidationError(
                f"dim {self.dim} exceeds the dense limit; use apply()")
        return self._matrix

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Action of the generator on a vectorized state."""
        if self._matrix is not None:
            return self._matrix @ vec
        n, h = self.n, self.hamiltonian
        rho = vec[: n * n].reshape(n, n)
        out = -1j * (h @ rho - rho @ h.conj().T)
        if self.gamma != 0.0:
            # Dephasing removes coherences at 2*gamma, populations untouched.
            diag = np.diagonal(out).copy()
            out = out - 2.0 * self.gamma * rho
            np.fill_diagonal(out, diag)
        if self.accumulator_index is None:
            return out.reshape(-1)
        raise ValidationError("matrix-free augmented form is not supported")


def build_liouvillian(spec: SystemSpec, dense: bool | None = None) -> Superoperator:
    """Generator of d/dt vec(rho) for the given spec.

    Parameters
    ----------
    spec : SystemSpec
    dense : bool, optional
        Force or forbid the dense representation.  Default: dense for
        n <= 64, matrix-free above.
    """
    h = build_hamiltonian(spec)
    n = spec.n
    if dense is None:
        dense = n <= DENSE_LIMIT
    if not dense:
        return Superoperator(n, spec.gamma, h)
    eye = np.eye(n)
    mat = -1j * np.kron(h, eye) + 1j * np.kron(eye, h.conj())
    mat[np.diag_indices(n * n)] += (
        -2.0 * spec.gamma * (1.0 - eye).reshape(-1))
    return Superoperator(n, spec.gamma, h, matrix=mat,
                         trap_sites=spec.trap_sites, kappa=spec.kappa)


def build_augmented_liouvillian(spec: SystemSpec, epsilon: float) -> Superoperator:
    """Generator extended by one accumulator coordinate.

    The extra row receives 2*kappa from every trap-population coordinate and
    epsilon on its own diagonal; nothing couples back from the accumulator
    into the state sector, so the state evolution is unchanged.  At the
    steady state of the epsilon-augmented solve the accumulator carries the
    total trapped probability.
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon!r}")
    n = spec.n
    if n > DENSE_LIMIT:
        raise ValidationError(
            f"augmented form is dense-only (n <= {DENSE_LIMIT}), got n={n}")
    base = build_liouvillian(spec, dense=True).matrix
    dim = n * n + 1
    mat = np.zeros((dim, dim), dtype=complex)
    mat[: n * n, : n * n] = base
    for t in spec.trap_sites:
        mat[dim - 1, population_index(n, t)] = 2.0 * spec.kappa
    mat[dim - 1, dim - 1] = epsilon
    return Superoperator(n, spec.gamma, build_hamiltonian(spec), matrix=mat,
                         accumulator_index=dim - 1,
                         trap_sites=spec.trap_sites, kappa=spec.kappa)
