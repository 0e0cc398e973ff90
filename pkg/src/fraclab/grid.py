"""Truncated Cartesian grids, domain partitions and coefficient fields.

The whole space is replaced by the box ``[-Lbox, Lbox]^n`` (``n`` is 1 or 2)
sampled on ``N`` points per axis. Node masses follow the trapezoidal rule so
that the diagonal mass matrix integrates constants exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .exceptions import CoefficientError, GridError

BOUNDARY_CONDITIONS = ("reflecting", "absorbing")

_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "cosh",
        "sinh", "arctan", "minimum", "maximum", "where", "pi", "e",
    )
}


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def trapezoid_weights(N, h):
    """1-D trapezoidal cell volumes: ``h`` inside, ``h/2`` at both ends."""
    w = np.full(N, float(h))
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``[-Lbox, Lbox]^n`` in lexicographic order.

    For ``n = 2`` node ``(i, j)`` (``i`` along x, ``j`` along y) has flat
    index ``i * N + j``.
    """

    n: int
    Lbox: float
    N: int
    bc: str
    h: float
    axis: np.ndarray
    coords: np.ndarray
    masses: np.ndarray

    @property
    def size(self):
        return self.coords.shape[0]

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def volume(self):
        return (2.0 * self.Lbox) ** self.n

    def on_truncation_boundary(self):
        """Boolean mask of nodes lying on a face of the box."""
        idx = np.indices(self.shape).reshape(self.n, -1)
        return np.any((idx == 0) | (idx == self.N - 1), axis=0)


def build_grid(n, Lbox, N, bc="reflecting"):
    """Build the truncated grid standing in for the whole space.

    Parameters
    ----------
    n : int
        Spatial dimension, 1 or 2.
    Lbox : float
        Half-extent of the box.
    N : int
        Points per axis, at least 3.
    bc : {"reflecting", "absorbing"}
        Truncation condition carried along for operator assembly.

    Returns
    -------
    Grid
    """
    if n not in (1, 2):
        raise GridError(f"dimension must be 1 or 2, got {n}")
    if int(N) != N or N < 3:
        raise GridError(f"need at least 3 points per axis, got N={N}")
    if not Lbox > 0:
        raise GridError(f"half-extent must be positive, got Lbox={Lbox}")
    if bc not in BOUNDARY_CONDITIONS:
        raise GridError(f"unknown truncation condition {bc!r}")
    N = int(N)
    Lbox = float(Lbox)
    h = 2.0 * Lbox / (N - 1)
    axis = np.linspace(-Lbox, Lbox, N)
    w = trapezoid_weights(N, h)
    if n == 1:
        coords = axis[:, None]
        masses = w.copy()
    else:
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        coords = np.column_stack([X.ravel(), Y.ravel()])
        masses = np.outer(w, w).ravel()
    return Grid(n, Lbox, N, bc, h, _frozen(axis), _frozen(coords), _frozen(masses))


# --------------------------------------------------------------------------
# regions and partitions


@dataclass(frozen=True)
class Box:
    """Axis-aligned half-open box ``lo <= x < hi`` (per axis)."""

    lo: tuple
    hi: tuple

    def contains(self, coords):
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        return np.all((coords >= lo) & (coords < hi), axis=1)


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball ``|x - center| < radius``."""

    center: tuple
    radius: float

    def contains(self, coords):
        c = np.asarray(self.center, float)
        return np.linalg.norm(coords - c, axis=1) < self.radius


@dataclass(frozen=True)
class OpenInterval:
    """Open box ``lo < x < hi`` (per axis)."""

    lo: tuple
    hi: tuple

    def contains(self, coords):
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        return np.all((coords > lo) & (coords < hi), axis=1)


@dataclass(frozen=True)
class RegionUnion:
    """Union of several regions."""

    parts: tuple

    def contains(self, coords):
        mask = np.zeros(coords.shape[0], dtype=bool)
        for part in self.parts:
            mask |= part.contains(coords)
        return mask


RegionSpec = Union[Box, Ball, OpenInterval, Mapping, np.ndarray, Sequence[int], Callable, None]


def region_from_dict(spec):
    """Turn a config mapping (``box``/``ball``/``interval``/``union``) into a region."""
    if "union" in spec:
        return RegionUnion(tuple(region_from_dict(part) for part in spec["union"]))
    if "box" in spec:
        lo, hi = spec["box"]
        return Box(tuple(np.atleast_1d(lo).tolist()), tuple(np.atleast_1d(hi).tolist()))
    if "interval" in spec:
        lo, hi = spec["interval"]
        return OpenInterval(tuple(np.atleast_1d(lo).tolist()), tuple(np.atleast_1d(hi).tolist()))
    if "ball" in spec:
        b = spec["ball"]
        return Ball(tuple(np.atleast_1d(b["center"]).tolist()), float(b["radius"]))
    raise GridError(f"unrecognised region spec {dict(spec)!r}")


def select_nodes(grid, spec):
    """Return sorted node indices selected by a region spec."""
    if spec is None:
        return np.zeros(0, dtype=int)
    if isinstance(spec, Mapping):
        spec = region_from_dict(spec)
    if hasattr(spec, "contains"):
        mask = spec.contains(grid.coords)
    elif callable(spec):
        mask = np.asarray(spec(grid.coords), dtype=bool)
    else:
        arr = np.asarray(spec)
        if arr.dtype == bool:
            mask = arr
        else:
            return np.unique(arr.astype(int))
    if mask.shape != (grid.size,):
        raise GridError("region mask does not match the grid")
    return np.flatnonzero(mask)


@dataclass(frozen=True)
class DomainPartition:
    """Index sets of the interior, the exterior and two exterior control regions."""

    interior: np.ndarray
    exterior: np.ndarray
    O1: np.ndarray
    O2: np.ndarray
    size: int

    def restrict(self, v, which="interior"):
        return np.asarray(v)[getattr(self, which)]

    def extend(self, values, which="interior"):
        """Zero-extend values given on an index set to the whole grid."""
        out = np.zeros(self.size)
        out[getattr(self, which)] = values
        return out

    def exterior_positions(self, which):
        """Positions of ``O1``/``O2`` nodes inside the exterior ordering."""
        lookup = np.full(self.size, -1)
        lookup[self.exterior] = np.arange(self.exterior.size)
        return lookup[getattr(self, which)]


def partition_domain(grid, omega, O1=None, O2=None):
    """Split grid nodes into Omega, its exterior and control regions.

    Raises
    ------
    GridError
        If Omega is empty, covers every node, touches the truncation
        boundary, or a control region meets Omega.
    """
    interior = select_nodes(grid, omega)
    if interior.size == 0:
        raise GridError("Omega selects no nodes")
    if interior.size == grid.size:
        raise GridError("Omega covers every node; the exterior is empty")
    if np.any(grid.on_truncation_boundary()[interior]):
        raise GridError("Omega touches the truncation boundary")
    exterior = np.setdiff1d(np.arange(grid.size), interior)
    regions = []
    for name, spec in (("O1", O1), ("O2", O2)):
        idx = select_nodes(grid, spec)
        if np.intersect1d(idx, interior).size:
            raise GridError(f"{name} intersects Omega")
        regions.append(idx)
    return DomainPartition(
        _frozen(interior), _frozen(exterior), _frozen(regions[0]), _frozen(regions[1]), grid.size
    )


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientField:
    """Node-sampled symmetric matrices ``A_i`` with ellipticity constant ``Lambda``."""

    A: np.ndarray
    Lambda: float
    lower: float
    upper: float
    is_diagonal: bool = field(default=True)

    @property
    def n(self):
        return self.A.shape[1]


def _evaluate_entry(entry, coords):
    if callable(entry):
        val = entry(coords)
    elif isinstance(entry, str):
        names = dict(_EXPR_NAMESPACE)
        for k, label in enumerate("xy"[: coords.shape[1]]):
            names[label] = coords[:, k]
        val = eval(entry, {"__builtins__": {}}, names)
    else:
        val = float(entry)
    return np.broadcast_to(np.asarray(val, float), coords.shape[:1]).copy()


def _round_up(value):
    return float(np.ceil(value - 1e-9))


def sample_coefficient(grid, spec="identity"):
    """Sample the coefficient matrix field on the grid nodes.

    ``spec`` is ``"identity"``, a mapping with ``kind`` in
    ``{"identity", "diagonal", "full"}`` and string/callable ``entries``, or a
    callable ``coords -> (K, n, n)`` array.
    """
    n, K = grid.n, grid.size
    coords = grid.coords
    declared = None
    if callable(spec):
        A = np.asarray(spec(coords), float).reshape(K, n, n)
    else:
        if isinstance(spec, str):
            spec = {"kind": spec}
        declared = spec.get("Lambda")
        kind = spec.get("kind", "identity")
        if kind == "identity":
            A = np.broadcast_to(np.eye(n), (K, n, n)).copy()
        elif kind == "diagonal":
            entries = list(spec["entries"])
            if len(entries) != n:
                raise CoefficientError(f"diagonal spec needs {n} entries")
            A = np.zeros((K, n, n))
            for d, e in enumerate(entries):
                A[:, d, d] = _evaluate_entry(e, coords)
        elif kind == "full":
            entries = spec["entries"]
            A = np.zeros((K, n, n))
            for a in range(n):
                for b in range(n):
                    A[:, a, b] = _evaluate_entry(entries[a][b], coords)
        else:
            raise CoefficientError(f"unknown coefficient kind {kind!r}")

    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    eig = np.linalg.eigvalsh(A)
    if not np.all(np.isfinite(eig)):
        raise CoefficientError("coefficient field has non-finite entries")
    if np.any(eig[:, 0] <= 0):
        bad = int(np.argmin(eig[:, 0]))
        raise CoefficientError(f"coefficient not positive definite at node {bad}")
    lower = float(eig[:, 0].min())
    upper = float(eig[:, -1].max())
    Lam = _round_up(max(upper, 1.0 / lower, 1.0))
    if declared is not None:
        if declared < max(upper, 1.0 / lower) * (1 - 1e-12):
            raise CoefficientError(
                f"declared Lambda={declared} is below the sampled bound {max(upper, 1 / lower):.6g}"
            )
        Lam = float(declared)
    offdiag = A.copy()
    offdiag[:, np.arange(n), np.arange(n)] = 0.0
    return CoefficientField(_frozen(A), Lam, lower, upper, bool(np.all(offdiag == 0)))
