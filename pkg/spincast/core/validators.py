"""Parameter validation and physical-domain checks"""

import numpy as np


class ParameterValidator:
    """Handles parameter validation for the compute modules"""

    @staticmethod
    def validate_zfs(D, E, gamma_e):
        """Check zero-field splitting parameters"""
        errors = []
        warnings = []

        for name, value in (("D", D), ("E", E), ("gamma_e", gamma_e)):
            if value is None or not np.isfinite(value):
                errors.append(f"{name} must be a finite number")
        if errors:
            return errors, warnings

        if E < 0:
            errors.append(f"E must be >= 0, got {E}")
        if gamma_e == 0:
            errors.append("gamma_e must be non-zero")
        if abs(E) > abs(D):
            warnings.append("|E| > |D|: no level anticrossing exists for this parameter set")

        return errors, warnings

    @staticmethod
    def validate_rates(tau_e, k_isc, branching, tau_0, tau_plus, tau_minus, pump_coeff, detrap_coeff):
        """Check lifetimes, branching fractions and optical coefficients"""
        errors = []
        warnings = []

        lifetimes = {"tau_e": tau_e, "tau_0": tau_0, "tau_plus": tau_plus, "tau_minus": tau_minus}
        for name, value in lifetimes.items():
            if value is None or not np.isfinite(value) or value <= 0:
                errors.append(f"{name} must be > 0, got {value}")

        for name, value in (("k_isc", k_isc), ("pump_coeff", pump_coeff), ("detrap_coeff", detrap_coeff)):
            if value is None or not np.isfinite(value) or value < 0:
                errors.append(f"{name} must be >= 0, got {value}")

        branching = np.asarray(branching, dtype=float)
        if branching.shape != (3,):
            errors.append(f"branching must have 3 entries, got {branching.size}")
        elif np.any(branching < 0) or np.any(branching > 1):
            errors.append("branching fractions must lie in [0, 1]")
        elif abs(branching.sum() - 1.0) > 1e-12:
            errors.append(f"branching fractions must sum to 1, got {branching.sum():.15g}")

        if errors:
            return errors, warnings

        # ES -> GS radiative rate is 1/tau_e - k_isc
        if k_isc * tau_e > 1:
            errors.append(f"k_isc * tau_e must be <= 1, got {k_isc * tau_e:.4g}")
        if tau_0 > min(tau_plus, tau_minus):
            warnings.append("tau_0 exceeds the |+>/|-> lifetimes; ODMR contrast changes sign")

        return errors, warnings

    @staticmethod
    def validate_coherence(t2_star, gamma_phi_dyn, rabi_decay, pi_half_ns, quadrature_nodes):
        """Check dephasing parameters and quadrature size"""
        errors = []
        warnings = []

        if t2_star is None or not np.isfinite(t2_star) or t2_star <= 0:
            errors.append(f"t2_star must be > 0, got {t2_star}")
        if gamma_phi_dyn is None or not np.isfinite(gamma_phi_dyn) or gamma_phi_dyn < 0:
            errors.append(f"gamma_phi_dyn must be >= 0, got {gamma_phi_dyn}")
        if rabi_decay is not None and (not np.isfinite(rabi_decay) or rabi_decay <= 0):
            errors.append(f"rabi_decay must be > 0 or null, got {rabi_decay}")
        if pi_half_ns is None or not np.isfinite(pi_half_ns) or pi_half_ns <= 0:
            errors.append(f"pi_half_ns must be > 0, got {pi_half_ns}")
        if not isinstance(quadrature_nodes, int) or quadrature_nodes < 201 or quadrature_nodes % 2 == 0:
            errors.append(f"quadrature_nodes must be an odd integer >= 201, got {quadrature_nodes}")

        return errors, warnings

    @staticmethod
    def validate_sweep(values, name, positive=False, ascending=True):
        """Check a sweep axis: finite, non-empty, ordered"""
        errors = []
        warnings = []

        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            errors.append(f"{name} must be a non-empty list of numbers")
            return errors, warnings
        if not np.all(np.isfinite(values)):
            errors.append(f"{name} contains non-finite values")
            return errors, warnings
        if positive and np.any(values <= 0):
            errors.append(f"{name} values must be > 0")
        elif np.any(values < 0):
            errors.append(f"{name} values must be >= 0")
        if ascending and np.any(np.diff(values) <= 0):
            errors.append(f"{name} must be strictly ascending")
        if values.size > 20000:
            warnings.append(f"{name} has {values.size} points; the run may be slow")

        return errors, warnings
