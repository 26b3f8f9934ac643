"""scikit-learn style front end.

Each estimator designs a link-adaptation policy in ``fit``. ``X`` always has
two columns of linear SNR samples: column 0 for the source-destination link
and column 1 for the relay-destination link. When ``fit`` receives samples,
their column means replace the nominal mean SNRs.

* ``predict(X)``: selected mode per link (0 means outage), shape (n, 2).
* ``transform(X)``: transmit power per link, shape (n, 2). The relay column
  is the power the relay would use if asked to resend.
* ``score()``: analytic spectral efficiency of the fitted policy.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .amc import load_mode_table
from .analytic import DEFAULT_OMEGA, Scenario
from .constpower import direct_transmission_report, optimize_const_power
from .optimizer import OptimizerConfig, optimize


def _snr_matrix(X) -> np.ndarray:
    X = check_array(X, dtype=float, ensure_min_features=2)
    if X.shape[1] != 2:
        raise ValueError(f"expected 2 columns (source, relay SNR), got {X.shape[1]}")
    if np.any(X < 0):
        raise ValueError("SNR samples must be non-negative")
    return X


class _LinkAdaptationEstimator(BaseEstimator):
    def __init__(
        self,
        p_bar_db=10.0,
        mu_db=0.0,
        p_loss=1e-3,
        alpha=0.5,
        mode_table=None,
        omega_variant=DEFAULT_OMEGA,
    ):
        self.p_bar_db = p_bar_db
        self.mu_db = mu_db
        self.p_loss = p_loss
        self.alpha = alpha
        self.mode_table = mode_table
        self.omega_variant = omega_variant

    def _scenario(self, X):
        table = self.mode_table if hasattr(self.mode_table, "modes") else load_mode_table(self.mode_table)
        kw = {}
        if X is not None:
            X = _snr_matrix(X)
            if np.any(X.mean(axis=0) <= 0):
                raise ValueError("SNR samples must have positive means")
            kw = {
                "source_mean_snr_db": float(10 * np.log10(X[:, 0].mean())),
                "relay_mean_snr_db": float(10 * np.log10(X[:, 1].mean())),
            }
        return Scenario.from_db(
            p_bar_db=self.p_bar_db, mu_db=self.mu_db, p_loss=self.p_loss, alpha=self.alpha, table=table, **kw
        )

    def _design(self, scenario):
        raise NotImplementedError

    def fit(self, X=None, y=None):
        self.scenario_ = self._scenario(X)
        self.policy_, self.p_t1_, self.report_ = self._design(self.scenario_)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "policy_")
        X = _snr_matrix(X)
        return np.column_stack(
            [
                np.searchsorted(self.policy_.source_thresholds, X[:, 0], side="right"),
                np.searchsorted(self.policy_.relay_thresholds, X[:, 1], side="right"),
            ]
        )

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "policy_")
        X = _snr_matrix(X)
        modes = self.predict(X)
        sc, pol = self.scenario_, self.policy_
        out = np.zeros(X.shape)
        for col, (p_bar, gains) in enumerate(((sc.p_bar_s, pol.source_gains), (sc.p_bar_r, pol.relay_gains))):
            on = modes[:, col] > 0
            if pol.power_adaptive:
                out[on, col] = p_bar * gains[modes[on, col] - 1] / X[on, col]
            else:
                out[on, col] = p_bar
        return out

    def score(self, X=None, y=None) -> float:
        check_is_fitted(self, "report_")
        return float(self.report_.spectral_efficiency)


class AdaptivePowerCARQ(_LinkAdaptationEstimator):
    """Joint switching-level and power adaptation under an average-power budget."""

    def __init__(
        self,
        p_bar_db=10.0,
        mu_db=0.0,
        p_loss=1e-3,
        alpha=0.5,
        mode_table=None,
        omega_variant=DEFAULT_OMEGA,
        max_iterations=50,
        se_convergence_tol=1e-4,
        pt1_search_tol=1e-4,
    ):
        super().__init__(p_bar_db, mu_db, p_loss, alpha, mode_table, omega_variant)
        self.max_iterations = max_iterations
        self.se_convergence_tol = se_convergence_tol
        self.pt1_search_tol = pt1_search_tol

    def _design(self, scenario):
        cfg = OptimizerConfig(
            max_iterations=self.max_iterations,
            se_convergence_tol=self.se_convergence_tol,
            pt1_search_tol=self.pt1_search_tol,
            omega_variant=self.omega_variant,
        )
        return optimize(scenario, cfg)


class ConstantPowerCARQ(_LinkAdaptationEstimator):
    """Rate adaptation at fixed power; only the target-PER split is tuned."""

    def _design(self, scenario):
        return optimize_const_power(scenario, omega_variant=self.omega_variant)


class DirectTransmissionAMC(_LinkAdaptationEstimator):
    """Constant-power AMC on the direct link, target PER equal to ``p_loss``.

    ``policy_`` is ``None``; ``predict`` returns the relay column as zeros.
    """

    def _design(self, scenario):
        return None, scenario.p_loss, direct_transmission_report(scenario)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "report_")
        X = _snr_matrix(X)
        levels = self.report_.extras["thresholds"]
        return np.column_stack([np.searchsorted(levels, X[:, 0], side="right"), np.zeros(len(X), dtype=int)])

    def transform(self, X) -> np.ndarray:
        modes = self.predict(X)
        return np.column_stack([np.where(modes[:, 0] > 0, self.scenario_.p_bar_s, 0.0), np.zeros(len(modes))])
