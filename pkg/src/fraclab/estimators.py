"""scikit-learn style wrappers around the functional core.

Each estimator keeps its configuration as plain constructor arguments (so
``get_params``/``set_params``/``clone`` work) and builds the numerical
objects in ``fit``. Rows of ``X`` are grid functions or interior targets.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .forward import assemble_dn_map
from .inverse import RungeProblem, measurement_block, noise_norm, reconstruct_potential
from .pipeline import build_lab


class _LabMixin:
    def _lab(self, with_partition):
        return build_lab(
            n=self.n, Lbox=self.Lbox, N=self.N, bc=self.bc, coefficient=self.coefficient, s=self.s,
            omega=self.omega if with_partition else None,
            O1=getattr(self, "O1", None), O2=getattr(self, "O2", None),
        )


class FractionalPowerTransformer(_LabMixin, TransformerMixin, BaseEstimator):
    """Apply ``L^s`` to grid functions given as rows.

    Parameters
    ----------
    n, Lbox, N, bc : grid parameters.
    coefficient : coefficient spec understood by :func:`fraclab.grid.sample_coefficient`.
    s : float
        Exponent in ``(0, 1]``.
    """

    def __init__(self, n=1, Lbox=2.0, N=65, bc="reflecting", coefficient="identity", s=0.5):
        self.n = n
        self.Lbox = Lbox
        self.N = N
        self.bc = bc
        self.coefficient = coefficient
        self.s = s

    def fit(self, X=None, y=None):
        lab = self._lab(with_partition=False)
        self.grid_ = lab.grid
        self.decomp_ = lab.decomp
        self.operator_ = lab.S
        self.n_features_in_ = lab.grid.size
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} grid values per row, got {X.shape[1]}")
        return X @ self.operator_.matrix.T


class RungeApproximator(_LabMixin, RegressorMixin, BaseEstimator):
    """Tikhonov Runge approximation of interior targets by controls on ``O1``.

    ``transform`` returns exterior controls, ``predict`` the interior traces
    they produce; ``score`` is the mean relative approximation accuracy
    ``1 - error``.
    """

    def __init__(self, n=1, Lbox=2.0, N=65, bc="reflecting", coefficient="identity", s=0.5,
                 omega=None, O1=None, q=0.0, alpha=1e-8):
        self.n = n
        self.Lbox = Lbox
        self.N = N
        self.bc = bc
        self.coefficient = coefficient
        self.s = s
        self.omega = omega
        self.O1 = O1
        self.q = q
        self.alpha = alpha

    def fit(self, X=None, y=None):
        if self.omega is None or self.O1 is None:
            raise ValueError("omega and O1 are required")
        lab = self._lab(with_partition=True)
        self.partition_ = lab.partition
        self.problem_ = RungeProblem(lab.S, self.q, lab.partition, "O1")
        self.n_features_in_ = lab.partition.interior.size
        return self

    def _results(self, X):
        check_is_fitted(self, "problem_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} interior values per row")
        return [self.problem_.solve(t, self.alpha) for t in X]

    def transform(self, X):
        return np.array([r.exterior_datum for r in self._results(X)])

    def predict(self, X):
        return np.array([r.trace for r in self._results(X)])

    def score(self, X, y=None, sample_weight=None):
        errs = np.array([r.relative_error for r in self._results(X)])
        return float(1.0 - np.average(errs, weights=sample_weight))


class PotentialReconstructor(_LabMixin, RegressorMixin, BaseEstimator):
    """Recover the interior potential from an observed DN pairing matrix.

    ``fit(P_obs)`` runs the damped Gauss-Newton iteration and stores ``q_``;
    ``predict(G)`` applies the DN map of ``q_`` to exterior data rows;
    ``score(P_obs)`` is minus the mass-weighted misfit of the fitted potential.
    """

    def __init__(self, n=1, Lbox=2.0, N=65, bc="reflecting", coefficient="identity", s=0.5,
                 omega=None, O1=None, O2=None, alpha_q=0.0, max_iter=25, partial_data=False):
        self.n = n
        self.Lbox = Lbox
        self.N = N
        self.bc = bc
        self.coefficient = coefficient
        self.s = s
        self.omega = omega
        self.O1 = O1
        self.O2 = O2
        self.alpha_q = alpha_q
        self.max_iter = max_iter
        self.partial_data = partial_data

    def fit(self, X, y=None):
        if self.omega is None:
            raise ValueError("omega is required")
        lab = self._lab(with_partition=True)
        ne = lab.partition.exterior.size
        P_obs = check_array(X)
        if P_obs.shape != (ne, ne):
            raise ValueError(f"expected a {ne} x {ne} pairing matrix")
        block = measurement_block(lab.partition) if self.partial_data else None
        self.result_ = reconstruct_potential(
            lab.S, lab.partition, P_obs, 0.0, self.alpha_q, self.max_iter, block=block
        )
        self.q_ = self.result_.q
        self.lab_ = lab
        self.dn_ = assemble_dn_map(lab.S, self.q_, lab.partition)
        return self

    def predict(self, X):
        check_is_fitted(self, "q_")
        G = check_array(X)
        return G @ self.dn_.matrix.T

    def score(self, X, y=None, sample_weight=None):
        check_is_fitted(self, "q_")
        P_obs = check_array(X)
        part = self.lab_.partition
        block = measurement_block(part) if self.partial_data else None
        me = self.lab_.S.masses[part.exterior]
        return -noise_norm(self.dn_.pairing_matrix, P_obs, me, block)
