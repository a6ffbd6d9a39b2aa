"""Stratified group backends and horizontal finite-difference stencils.

Two backends are provided: Euclidean space (a single stratum, so the
horizontal fields are plain partial derivatives) and the first Heisenberg
group with

    X1 = d/dx1 - (x2/2) d/dx3,    X2 = d/dx2 + (x1/2) d/dx3.

All derivatives use second-order central differences in the interior and
second-order one-sided differences on the box faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np

# (target axis, coefficient as a function of the coordinate arrays)
Coefficient = tuple[int, Callable[[Sequence[np.ndarray]], np.ndarray]]


@dataclass(frozen=True)
class GroupSpec:
    """A stratified group in exponential coordinates.

    ``coefficients[j]`` lists the higher-stratum terms of the horizontal
    field ``X_j``: each entry ``(m, a)`` contributes ``a(x) * d/dx_m``.
    """

    name: str
    stratum_sizes: tuple[int, ...]
    coefficients: tuple[tuple[Coefficient, ...], ...] = field(repr=False)

    def __post_init__(self):
        if not self.stratum_sizes or any(s < 1 for s in self.stratum_sizes):
            raise ValueError("stratum sizes must be positive integers")
        if len(self.coefficients) != self.stratum_sizes[0]:
            raise ValueError("need one coefficient list per horizontal field")
        for terms in self.coefficients:
            for m, _ in terms:
                if not self.N1 <= m < self.N:
                    raise ValueError(f"coefficient targets axis {m}, which is not a higher-stratum axis")

    @property
    def N(self) -> int:
        return sum(self.stratum_sizes)

    @property
    def N1(self) -> int:
        return self.stratum_sizes[0]

    @property
    def is_euclidean(self) -> bool:
        return len(self.stratum_sizes) == 1

    def label(self) -> str:
        return f"euclidean:{self.N1}" if self.is_euclidean else self.name

    def horizontal_weight(self, grid: "Grid") -> float:
        """max over nodes of sum_j |X_j|^2, the squared Euclidean length of
        the field coefficient vectors. Equals N1 for the Euclidean backend."""
        return _horizontal_weight(self, grid)


@lru_cache(maxsize=32)
def _horizontal_weight(group: GroupSpec, grid: "Grid") -> float:
    if group.is_euclidean:
        return float(group.N1)
    coords = grid.coords()
    total = np.zeros(grid.extents)
    for terms in group.coefficients:
        total = total + 1.0
        for _, a in terms:
            total = total + np.broadcast_to(a(coords), grid.extents) ** 2
    return float(total.max())


def make_euclidean(N1: int) -> GroupSpec:
    if int(N1) != N1 or N1 < 1:
        raise ValueError(f"N1 must be a positive integer, got {N1!r}")
    N1 = int(N1)
    return GroupSpec("euclidean", (N1,), tuple(() for _ in range(N1)))


def make_heisenberg() -> GroupSpec:
    return GroupSpec(
        "heisenberg",
        (2, 1),
        (
            ((2, lambda x: -0.5 * x[1]),),
            ((2, lambda x: 0.5 * x[0]),),
        ),
    )


def parse_group(text: str) -> GroupSpec:
    """Parse ``euclidean:N1`` or ``heisenberg``."""
    text = text.strip().lower()
    if text == "heisenberg":
        return make_heisenberg()
    if text.startswith("euclidean"):
        _, _, n = text.partition(":")
        return make_euclidean(int(n) if n else 2)
    raise ValueError(f"unknown group backend {text!r}")


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred grid on an axis-aligned box."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        if not (len(self.lower) == len(self.upper) == len(self.extents)):
            raise ValueError("lower, upper and extents must have the same length")
        if any(n < 3 for n in self.extents):
            raise ValueError(f"every axis needs at least 3 nodes, got {self.extents}")
        widths = [(hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.extents)]
        if any(w <= 0 for w in widths):
            raise ValueError("upper corner must exceed lower corner on every axis")
        if not np.allclose(widths, widths[0], rtol=1e-9, atol=0):
            raise ValueError(f"spacing is not uniform across axes: {widths}")

    @classmethod
    def box(cls, dim: int, n: int, half_width: float = 0.5) -> "Grid":
        """Centred cube [-half_width, half_width]^dim with n nodes per axis."""
        return cls((-half_width,) * dim, (half_width,) * dim, (n,) * dim)

    @property
    def ndim(self) -> int:
        return len(self.extents)

    @property
    def h(self) -> float:
        return (self.upper[0] - self.lower[0]) / (self.extents[0] - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    def axis(self, k: int) -> np.ndarray:
        return np.linspace(self.lower[k], self.upper[k], self.extents[k])

    @cached_property
    def _coords(self) -> tuple[np.ndarray, ...]:
        mesh = np.meshgrid(*(self.axis(k) for k in range(self.ndim)), indexing="ij")
        for c in mesh:
            c.flags.writeable = False
        return tuple(mesh)

    def coords(self) -> list[np.ndarray]:
        return list(self._coords)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.extents)

    def boundary_mask(self) -> np.ndarray:
        return self._boundary.copy()

    @cached_property
    def _boundary(self) -> np.ndarray:
        mask = np.zeros(self.extents, dtype=bool)
        for k in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def quadrature_weights(self) -> np.ndarray:
        """Dual-cell volumes: h^N per node, halved once per face the node lies on."""
        w = np.full(self.extents, self.h ** self.ndim)
        for k in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[k] = 0
            w[tuple(idx)] *= 0.5
            idx[k] = -1
            w[tuple(idx)] *= 0.5
        return w


def apply_dirichlet(grid: Grid, u: np.ndarray, value: float = 0.0) -> np.ndarray:
    """Set boundary nodes of ``u`` to ``value`` in place and return it."""
    u[grid._boundary] = value
    return u


def _check_shape(grid: Grid, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != grid.extents:
        raise ValueError(f"field shape {u.shape} does not match grid extents {grid.extents}")
    return u


def partial(grid: Grid, u: np.ndarray, axis: int) -> np.ndarray:
    if grid.extents[axis] < 3:
        raise ValueError(f"axis {axis} has fewer than 3 nodes")
    return np.gradient(u, grid.h, axis=axis, edge_order=2)


def _apply_field(group: GroupSpec, grid: Grid, u: np.ndarray, j: int, coords, cache) -> np.ndarray:
    if j not in cache:
        cache[j] = partial(grid, u, j)
    out = cache[j]
    for m, a in group.coefficients[j]:
        if m not in cache:
            cache[m] = partial(grid, u, m)
        out = out + a(coords) * cache[m]
    return out


def horizontal_gradient(group: GroupSpec, grid: Grid, u: np.ndarray) -> list[np.ndarray]:
    """Discrete (X_1 u, ..., X_N1 u) on every node of ``grid``."""
    if grid.ndim != group.N:
        raise ValueError(f"grid is {grid.ndim}-dimensional but group has dimension {group.N}")
    u = _check_shape(grid, u)
    coords = grid.coords() if not group.is_euclidean else None
    cache: dict[int, np.ndarray] = {}
    return [_apply_field(group, grid, u, j, coords, cache) for j in range(group.N1)]


def horizontal_divergence(group: GroupSpec, grid: Grid, F: Sequence[np.ndarray]) -> np.ndarray:
    """Discrete sum_j X_j F_j."""
    if len(F) != group.N1:
        raise ValueError(f"expected {group.N1} components, got {len(F)}")
    if grid.ndim != group.N:
        raise ValueError(f"grid is {grid.ndim}-dimensional but group has dimension {group.N}")
    coords = grid.coords() if not group.is_euclidean else None
    out = np.zeros(grid.extents)
    for j, Fj in enumerate(F):
        out += _apply_field(group, grid, _check_shape(grid, Fj), j, coords, {})
    return out


def horizontal_norm(components: Sequence[np.ndarray]) -> np.ndarray:
    return np.sqrt(sum(c * c for c in components))


def first_stratum_radius(group: GroupSpec, grid: Grid, center: Sequence[float] | None = None) -> np.ndarray:
    """|x' - center'| at every node (center defaults to the origin)."""
    coords = grid.coords()[: group.N1]
    if center is None:
        center = np.zeros(group.N1)
    return np.sqrt(sum((c - c0) ** 2 for c, c0 in zip(coords, center)))


def radial_gradient_norm(radius, b: float):
    """Closed form of |grad_H |x'|^b|, namely b |x'|^(b-1)."""
    return b * np.asarray(radius, dtype=float) ** (b - 1)


def radial_divergence(radius, b: float, N1: int):
    """Closed form of the horizontal divergence of x'/|x'|^b: (N1 - b)/|x'|^b."""
    return (N1 - b) / np.asarray(radius, dtype=float) ** b
