"""Scikit-learn style front end.

>>> from meshless_pricing import LRPIPricer, parameter_sets
>>> pricer = LRPIPricer(model=parameter_sets()["test1-european"], nx=32, nz=16)
>>> pricer.fit().predict([[10.0, 0.0625]]).shape
(1,)
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .models import ModelSpec
from .solver import Discretization, build_system, price_surface


class LRPIPricer(BaseEstimator):
    """Option pricer returning values at ``(S, y)`` query points.

    ``fit`` assembles and solves the pricing problem once; ``predict``
    interpolates the resulting surface. Inputs are arrays with two columns:
    asset price ``S`` and instantaneous variance ``y``.

    Parameters
    ----------
    model : ModelSpec
        Contract and model parameters.
    nx, nz : int
        Cells in the price and variance directions.
    steps : int, optional
        Time steps (default ``nz``).
    kernel : {"C2", "C4", "C6"}
    support_factor, rq_factor : float
        Support and sub-domain radii in units of the grid step.
    augmentation : {"quadratic", "bilinear"}
    anisotropic : bool
    xi_s, xi_y : float
        Stretching intensities.
    y0 : float, optional
        Variance level where variance nodes concentrate. Defaults to the
        median variance of the ``X`` passed to ``fit`` or, without ``X``, to
        the long-run variance of the model.
    extrapolate : bool
        Richardson extrapolation in time (``2 V_2M - V_M``).
    linear_solver : {"auto", "banded", "sparse"}
    """

    def __init__(self, model: Optional[ModelSpec] = None, nx: int = 64, nz: int = 32,
                 steps: Optional[int] = None, kernel: str = "C6", support_factor: float = 2.0,
                 rq_factor: float = 0.52, augmentation: str = "quadratic", anisotropic: bool = True,
                 xi_s: float = 1.0, xi_y: float = 10.0, y0: Optional[float] = None,
                 extrapolate: bool = True, linear_solver: str = "auto"):
        self.model = model
        self.nx = nx
        self.nz = nz
        self.steps = steps
        self.kernel = kernel
        self.support_factor = support_factor
        self.rq_factor = rq_factor
        self.augmentation = augmentation
        self.anisotropic = anisotropic
        self.xi_s = xi_s
        self.xi_y = xi_y
        self.y0 = y0
        self.extrapolate = extrapolate
        self.linear_solver = linear_solver

    def _discretization(self) -> Discretization:
        for name in ("nx", "nz"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
                raise TypeError(f"{name} must be an integer, got {val!r}")
        return Discretization(
            nx=int(self.nx), nz=int(self.nz), steps=self.steps, kernel=self.kernel,
            support_factor=self.support_factor, rq_factor=self.rq_factor,
            augmentation=self.augmentation, anisotropic=self.anisotropic,
            xi_s=self.xi_s, xi_y=self.xi_y, linear_solver=self.linear_solver)

    def _check_X(self, X):
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != 2:
            raise ValueError(f"X must have two columns (S, y), got {X.shape[1]}")
        if np.any(X < 0):
            raise ValueError("prices and variances must be non-negative")
        return X

    def fit(self, X=None, y=None):
        """Solve the pricing problem.

        ``X`` is optional and only used to pick ``y0``; ``y`` is ignored.
        """
        if not isinstance(self.model, ModelSpec):
            raise TypeError("model must be a ModelSpec")
        disc = self._discretization()
        if self.y0 is not None:
            y0 = float(self.y0)
        elif X is not None:
            y0 = float(np.median(self._check_X(X)[:, 1]))
        else:
            y0 = float(self.model.eta)
        y0 = min(max(y0, 0.0), disc.y_max)
        t0 = time.perf_counter()
        system = build_system(self.model, disc, y0)
        self.surface_ = price_surface(system, disc.n_steps, self.extrapolate)
        self.fit_time_ = time.perf_counter() - t0
        self.grid_ = system.grid
        self.y0_ = y0
        self.n_features_in_ = 2
        return self

    def predict(self, X) -> np.ndarray:
        """Option values at the rows ``(S, y)`` of ``X``."""
        check_is_fitted(self, "surface_")
        X = self._check_X(X)
        st = self.grid_.stretch
        if np.any(X[:, 0] > st.s_max) or np.any(X[:, 1] > st.y_max):
            raise ValueError(f"queries must lie in [0, {st.s_max}] x [0, {st.y_max}]")
        return self.surface_.price(X[:, 0], X[:, 1])
