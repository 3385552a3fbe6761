"""Transmission-network graph model and its spectral reduction.

Lines are series-RL branches; the graph Laplacian uses edge weights
1/l_pu.  Passive buses are eliminated by Kron (Schur-complement)
reduction, which preserves the terminal behavior seen by the remaining
dynamic buses.  The reduced Laplacian is rescaled on both sides by
Gamma^(-1/2), where gamma_n is twice the summed weight of the edges
incident to bus n; the rescaled Laplacian has spectrum inside [0, 1] and
constant diagonal 1/2.

Per-unit convention: l_pu is the per-unit inductance, numerically equal
to the per-unit reactance at the base frequency (x = w0 * l in physical
units), so rho = r_pu / l_pu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .devices import ConverterParams, MachineParams, NonPositiveRho


class NetworkError(Exception):
    """Base class for network construction errors."""


class Disconnected(NetworkError):
    """The line graph has more than one connected component."""


class SingularInterior(NetworkError):
    """Kron elimination block is singular beyond tolerance."""


class ZeroGamma(NetworkError):
    """A bus ended up with no incident edges after reduction."""


Device = MachineParams | ConverterParams


@dataclass(frozen=True)
class LineParams:
    """One branch: endpoints plus per-unit series resistance and inductance."""

    from_bus: str
    to_bus: str
    r_pu: float
    l_pu: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"self-loop at bus {self.from_bus!r}")
        if self.l_pu <= 0:
            raise ValueError(f"line {self.from_bus}-{self.to_bus}: l_pu must be positive")
        if self.r_pu < 0:
            raise ValueError(f"line {self.from_bus}-{self.to_bus}: r_pu must be nonnegative")


@dataclass(frozen=True)
class NetworkSpec:
    """Ingested system description: buses (device or passive) and lines.

    ``buses`` maps bus id to a device record, or to None for a passive bus.
    """

    buses: dict[str, Device | None]
    lines: tuple[LineParams, ...]
    omega0: float

    def __init__(self, buses, lines, omega0):
        object.__setattr__(self, "buses", dict(buses))
        object.__setattr__(self, "lines", tuple(lines))
        object.__setattr__(self, "omega0", float(omega0))
        if not any(dev is not None for dev in self.buses.values()):
            raise ValueError("network needs at least one non-passive bus")
        for ln in self.lines:
            for b in (ln.from_bus, ln.to_bus):
                if b not in self.buses:
                    raise ValueError(f"line references unknown bus {b!r}")

    @property
    def dynamic_ids(self) -> list[str]:
        return [b for b, dev in self.buses.items() if dev is not None]


def line_rho(line: LineParams) -> float:
    """Resistance-reactance ratio r/x of one branch (x_pu = l_pu)."""
    return line.r_pu / line.l_pu


def rho_extrema(spec: NetworkSpec, rho_floor: float = 0.0) -> tuple[float, float]:
    """(rho_min, rho_max) over all branches, transformer/stator branches
    included since they are modeled as lines.

    A lossless branch (r = 0) makes the certificate framework
    inapplicable; pass a positive ``rho_floor`` to clamp such branches to
    a documented synthetic ratio instead of refusing.
    """
    rhos = [max(line_rho(ln), rho_floor) for ln in spec.lines]
    if not rhos:
        raise NetworkError("network has no lines")
    lo = min(rhos)
    if lo <= 0:
        raise NonPositiveRho(
            "network contains a lossless (r = 0) branch; certification "
            "requires rho > 0 on every branch (set an explicit rho floor "
            "to override)"
        )
    return lo, max(rhos)


def build_laplacian(spec: NetworkSpec) -> tuple[np.ndarray, list[str]]:
    """Weighted Laplacian over all buses, edge weight 1/l_pu.

    Parallel lines merge by weight addition.  Raises :class:`Disconnected`
    if the graph has more than one component.
    """
    ids = list(spec.buses.keys())
    index = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    L = np.zeros((n, n))
    for ln in spec.lines:
        i, j = index[ln.from_bus], index[ln.to_bus]
        w = 1.0 / ln.l_pu
        L[i, j] -= w
        L[j, i] -= w
        L[i, i] += w
        L[j, j] += w
    _check_connected(L, ids)
    return L, ids


def _check_connected(L: np.ndarray, ids: list[str]):
    n = L.shape[0]
    if n == 0:
        raise NetworkError("empty network")
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(L[i] < 0)[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    if not seen.all():
        missing = [ids[i] for i in np.nonzero(~seen)[0]]
        raise Disconnected(f"buses unreachable from {ids[0]!r}: {missing}")


def kron_reduce(L_tot: np.ndarray, keep: list[int]) -> np.ndarray:
    """Schur complement of the eliminated block: L_kk - L_ke L_ee^-1 L_ek.

    The result is again a Laplacian (symmetric, zero row sums, nonpositive
    off-diagonals).  ``keep`` indexes rows of L_tot; every other index is
    eliminated.
    """
    n = L_tot.shape[0]
    keep = list(keep)
    elim = [i for i in range(n) if i not in set(keep)]
    if not elim:
        return L_tot[np.ix_(keep, keep)].copy()
    Lee = L_tot[np.ix_(elim, elim)]
    Lke = L_tot[np.ix_(keep, elim)]
    try:
        X = np.linalg.solve(Lee, Lke.T)
    except np.linalg.LinAlgError as exc:
        raise SingularInterior(f"elimination block is singular: {exc}") from exc
    scale = np.abs(Lee).max()
    if np.abs(Lee @ X - Lke.T).max() > 1e-12 * max(scale, 1.0) * max(np.abs(X).max(), 1.0):
        raise SingularInterior("elimination block is singular beyond tolerance")
    L = L_tot[np.ix_(keep, keep)] - Lke @ X
    return 0.5 * (L + L.T)  # exact symmetry against roundoff


def normalize(L: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Two-sided Gamma^(-1/2) rescaling of a reduced Laplacian.

    gamma_n = 2 * sum of incident edge weights = 2 * diag(L).  Returns
    (gamma, Lnorm, spectrum-ascending, lambda2).  Spectrum is computed
    with a dense symmetric eigensolver.
    """
    diag = np.diag(L).copy()
    if np.any(diag <= 1e-300):
        bad = int(np.argmin(diag))
        raise ZeroGamma(f"bus index {bad} has no incident edges after reduction")
    gamma = 2.0 * diag
    d = 1.0 / np.sqrt(gamma)
    Lnorm = d[:, None] * L * d[None, :]
    spectrum = np.linalg.eigvalsh(0.5 * (Lnorm + Lnorm.T))
    if L.shape[0] < 2:
        lambda2 = np.inf  # single-bus network: no coupling modes at all
    else:
        lambda2 = float(spectrum[1])
    return gamma, Lnorm, spectrum, lambda2


def effective_resistance(L: np.ndarray, i: int, j: int) -> float:
    """Pairwise effective resistance via the Laplacian pseudoinverse.

    rcond must be loose enough to drop the Laplacian's exact zero mode,
    whose computed singular value can sit just above machine epsilon.
    """
    pinv = np.linalg.pinv(L, rcond=1e-10)
    e = np.zeros(L.shape[0])
    e[i], e[j] = 1.0, -1.0
    return float(e @ pinv @ e)


@dataclass(frozen=True)
class ReducedNetwork:
    """Kron-reduced, Gamma-normalized network over the dynamic buses."""

    nodes: tuple[str, ...]
    L: np.ndarray
    gamma: np.ndarray
    Lnorm: np.ndarray
    spectrum: np.ndarray
    lambda2: float
    omega0: float
    rho_min: float
    rho_max: float
    devices: dict[str, Device] = field(default_factory=dict)

    def device(self, bus: str) -> Device:
        return self.devices[bus]

    def gamma_of(self, bus: str) -> float:
        return float(self.gamma[self.nodes.index(bus)])

    def edges(self) -> list[tuple[int, int, float]]:
        """(i, j, weight) for every reduced-network edge, i < j."""
        out = []
        n = len(self.nodes)
        tol = 1e-12 * max(np.abs(self.L).max(), 1.0)
        for i in range(n):
            for j in range(i + 1, n):
                w = -self.L[i, j]
                if w > tol:
                    out.append((i, j, float(w)))
        return out


def reduce_network(spec: NetworkSpec, rho_floor: float = 0.0) -> ReducedNetwork:
    """Build, Kron-reduce to the dynamic buses, and normalize a network."""
    L_tot, ids = build_laplacian(spec)
    keep_ids = spec.dynamic_ids
    keep = [ids.index(b) for b in keep_ids]
    L = kron_reduce(L_tot, keep)
    if len(keep) == 1:
        # single dynamic bus: reduction collapses every branch, leaving no
        # synchronizing coupling at all (gamma = 0, no lambda2 constraint)
        gamma = np.zeros(1)
        Lnorm = np.zeros((1, 1))
        spectrum = np.zeros(1)
        lambda2 = np.inf
    else:
        gamma, Lnorm, spectrum, lambda2 = normalize(L)
    lo, hi = rho_extrema(spec, rho_floor=rho_floor)
    devices = {b: spec.buses[b] for b in keep_ids}
    return ReducedNetwork(
        nodes=tuple(keep_ids),
        L=L,
        gamma=gamma,
        Lnorm=Lnorm,
        spectrum=spectrum,
        lambda2=lambda2,
        omega0=spec.omega0,
        rho_min=lo,
        rho_max=hi,
        devices=devices,
    )
