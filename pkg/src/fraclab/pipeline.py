"""One-call construction of the objects most experiments need."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import DiscreteEllipticOperator, assemble_local_operator
from .grid import CoefficientField, DomainPartition, Grid, build_grid, partition_domain, sample_coefficient
from .spectral import FractionalOperator, SpectralDecomposition, eigendecompose, fractional_power


@dataclass(frozen=True)
class Lab:
    """Grid, coefficient, local operator, its decomposition and ``L^s``."""

    grid: Grid
    coeff: CoefficientField
    op: DiscreteEllipticOperator
    decomp: SpectralDecomposition
    S: FractionalOperator
    partition: Optional[DomainPartition] = None

    @property
    def s(self):
        return self.S.s

    def with_power(self, s):
        """Same setup at another exponent (the decomposition is reused)."""
        return Lab(self.grid, self.coeff, self.op, self.decomp, fractional_power(self.decomp, s), self.partition)


def build_lab(n=1, Lbox=2.0, N=65, bc="reflecting", coefficient="identity", s=0.5,
              omega=None, O1=None, O2=None):
    """Assemble everything from plain parameters; the partition is built when ``omega`` is given."""
    grid = build_grid(n, Lbox, N, bc)
    coeff = sample_coefficient(grid, coefficient)
    op = assemble_local_operator(grid, coeff)
    decomp = eigendecompose(op)
    S = fractional_power(decomp, s)
    part = partition_domain(grid, omega, O1, O2) if omega is not None else None
    return Lab(grid, coeff, op, decomp, S, part)


def smooth_random_field(coords, rng, modes=4, length=1.0):
    """Random trigonometric field ``sum_k a_k cos(k . x / length + phi_k)``.

    The field is a function of physical position, so the same ``rng`` state
    gives the same function on every grid.
    """
    coords = np.atleast_2d(np.asarray(coords, float))
    n = coords.shape[1]
    out = np.zeros(coords.shape[0])
    for _ in range(modes):
        k = rng.uniform(0.5, 3.0, n)
        out += rng.standard_normal() * np.cos(coords @ k / length + rng.uniform(0.0, 2.0 * np.pi))
    return out


def bump(coords, center, width, amplitude=1.0):
    """``amplitude cos^2(pi r / (2 width))`` for ``r < width``, zero outside."""
    coords = np.atleast_2d(np.asarray(coords, float))
    r = np.linalg.norm(coords - np.asarray(center, float), axis=1)
    return np.where(r < width, amplitude * np.cos(0.5 * np.pi * r / width) ** 2, 0.0)
