"""
Density oracles for two-bidder continuous priors on [0,1]^2.

An oracle evaluates the joint density on arrays of points and declares a
Lipschitz constant (in the l1 norm) and a strictly positive floor. Both
declarations are spot-checked before an oracle is used.
"""

import importlib
import logging
import math
import re
from abc import ABC, abstractmethod
from typing import Callable, Dict, Optional

import numpy as np

from optauction.config import get_settings
from optauction.errors import OracleRejectedError
from optauction.utils.warning_suppressor import suppress_numeric_warnings

logger = logging.getLogger(__name__)

# Finite-difference Lipschitz estimates are inflated by this factor.
LIPSCHITZ_SAFETY = 1.25


class DensityOracle(ABC):
    """Joint density phi(x, y) with declared Lipschitz constant and floor."""

    name = "oracle"

    def __init__(self, lipschitz: float, floor: float, tolerance: float = 1e-9):
        self.lipschitz = float(lipschitz)
        self.floor = float(floor)
        self.tolerance = float(tolerance)

    @abstractmethod
    def density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    @suppress_numeric_warnings
    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.asarray(self.density(x, y), dtype=float)

    def transposed(self) -> "DensityOracle":
        return TransposedOracle(self)

    def describe(self) -> Dict[str, object]:
        return {"name": self.name, "lipschitz": self.lipschitz, "floor": self.floor}

    def check(self, samples: Optional[int] = None, seed: Optional[int] = None) -> "DensityOracle":
        """Probabilistic check of the floor and Lipschitz declarations."""
        settings = get_settings()
        samples = samples or settings.spot_checks
        rng = np.random.default_rng(settings.seed if seed is None else seed)

        p = rng.random((samples, 2))
        q = np.clip(p + rng.normal(scale=0.05, size=(samples, 2)), 0.0, 1.0)
        dp = self(p[:, 0], p[:, 1])
        dq = self(q[:, 0], q[:, 1])

        if not np.all(np.isfinite(dp)):
            raise OracleRejectedError(f"Oracle {self.name} returned non-finite densities")
        low = int(np.argmin(dp))
        if dp[low] < self.floor - self.tolerance or self.floor <= 0:
            raise OracleRejectedError(
                f"Oracle {self.name} density {dp[low]:.6g} below floor {self.floor:.6g}",
                {"point": p[low].tolist(), "density": float(dp[low]), "floor": self.floor},
            )

        gaps = np.abs(dp - dq) - self.lipschitz * np.abs(p - q).sum(axis=1)
        worst = int(np.argmax(gaps))
        if gaps[worst] > self.tolerance:
            raise OracleRejectedError(
                f"Oracle {self.name} violates Lipschitz bound {self.lipschitz:.6g}",
                {"p": p[worst].tolist(), "q": q[worst].tolist(), "excess": float(gaps[worst])},
            )
        logger.debug(f"Oracle {self.name} passed {samples} spot checks")
        return self


class UniformOracle(DensityOracle):
    name = "uniform"

    def __init__(self):
        super().__init__(lipschitz=0.0, floor=1.0)

    def density(self, x, y):
        return np.ones_like(x)


class ProductBetaOracle(DensityOracle):
    """floor + (1 - floor) * Beta(a,b)(x) * Beta(a,b)(y)."""

    name = "product-beta"

    def __init__(self, a: float, b: float, floor: float = 0.1):
        for shape in (a, b):
            if not (shape == 1 or shape >= 2):
                raise OracleRejectedError(f"Beta shape {shape} gives an unbounded derivative; use 1 or >= 2")
        if not 0 < floor < 1:
            raise OracleRejectedError(f"Floor must lie in (0, 1), got {floor}")
        self.a, self.b, self.mix = float(a), float(b), float(floor)
        self._log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)

        grid = np.linspace(0.0, 1.0, 4097)
        pdf = self._pdf(grid)
        slope = np.max(np.abs(np.diff(pdf))) / (grid[1] - grid[0])
        lipschitz = LIPSCHITZ_SAFETY * (1 - floor) * slope * np.max(pdf)
        super().__init__(lipschitz=lipschitz, floor=floor)
        self.name = f"product-beta({a:g},{b:g})"

    def _pdf(self, t):
        return np.exp(self._log_norm) * np.power(t, self.a - 1) * np.power(1 - t, self.b - 1)

    def density(self, x, y):
        return self.mix + (1 - self.mix) * self._pdf(x) * self._pdf(y)


class GaussianBumpOracle(DensityOracle):
    """floor + (1 - floor) * truncated Gaussian bump, normalised on [0,1]^2."""

    name = "gaussian-bump"

    def __init__(self, cx: float, cy: float, sigma: float, floor: float = 0.1):
        if sigma <= 0:
            raise OracleRejectedError(f"Bump width must be positive, got {sigma}")
        if not 0 < floor < 1:
            raise OracleRejectedError(f"Floor must lie in (0, 1), got {floor}")
        self.cx, self.cy, self.sigma, self.mix = float(cx), float(cy), float(sigma), float(floor)
        self._zx = self._mass(self.cx)
        self._zy = self._mass(self.cy)
        # |d/dx exp(-(x-c)^2 / 2s^2)| peaks at exp(-1/2)/s; the other factor is at most 1
        slope = math.exp(-0.5) / sigma / (self._zx * self._zy)
        super().__init__(lipschitz=(1 - floor) * slope, floor=floor)
        self.name = f"gaussian-bump({cx:g},{cy:g},{sigma:g},{floor:g})"

    def _mass(self, c: float) -> float:
        s = self.sigma * math.sqrt(2.0)
        return self.sigma * math.sqrt(math.pi / 2.0) * (math.erf((1 - c) / s) - math.erf(-c / s))

    def density(self, x, y):
        bump = np.exp(-((x - self.cx) ** 2 + (y - self.cy) ** 2) / (2 * self.sigma ** 2))
        return self.mix + (1 - self.mix) * bump / (self._zx * self._zy)


class CallableOracle(DensityOracle):
    """User density given as a vectorised callable plus explicit constants."""

    def __init__(self, func: Callable, lipschitz: float, floor: float, name: str = "callable"):
        super().__init__(lipschitz=lipschitz, floor=floor)
        self._func = func
        self.name = name

    def density(self, x, y):
        return self._func(x, y)


class TransposedOracle(DensityOracle):
    def __init__(self, base: DensityOracle):
        super().__init__(lipschitz=base.lipschitz, floor=base.floor, tolerance=base.tolerance)
        self.base = base
        self.name = f"{base.name}^T"

    def density(self, x, y):
        return self.base.density(y, x)

    def transposed(self) -> DensityOracle:
        return self.base


_SPEC_PATTERN = re.compile(r"^\s*([a-z\-]+)\s*(?:\((.*)\))?\s*$")


def parse_oracle(spec: str, lipschitz: Optional[float] = None, floor: Optional[float] = None) -> DensityOracle:
    """
    Build an oracle from a CLI spec string.

    Accepted forms: ``uniform``, ``product-beta(a,b[,floor])``,
    ``gaussian-bump(cx,cy,sigma[,floor])`` and ``package.module:function``
    (the latter needs explicit lipschitz and floor).
    """
    if ":" in spec:
        module_name, attr = spec.split(":", 1)
        if lipschitz is None or floor is None:
            raise OracleRejectedError("Custom oracles need explicit --lipschitz and --floor")
        func = getattr(importlib.import_module(module_name), attr)
        oracle: DensityOracle = CallableOracle(func, lipschitz, floor, name=spec)
    else:
        match = _SPEC_PATTERN.match(spec)
        if not match:
            raise OracleRejectedError(f"Unrecognised oracle: {spec}")
        kind, raw_args = match.group(1), match.group(2)
        try:
            args = [float(a) for a in raw_args.split(",")] if raw_args else []
        except ValueError as exc:
            raise OracleRejectedError(f"Bad oracle parameters: {spec}") from exc

        if kind == "uniform" and not args:
            oracle = UniformOracle()
        elif kind == "product-beta" and len(args) in (2, 3):
            oracle = ProductBetaOracle(*args)
        elif kind == "gaussian-bump" and len(args) in (3, 4):
            oracle = GaussianBumpOracle(*args)
        else:
            raise OracleRejectedError(f"Unrecognised oracle: {spec}")

        if lipschitz is not None:
            oracle.lipschitz = float(lipschitz)
        if floor is not None:
            oracle.floor = float(floor)

    logger.info(f"Using oracle {oracle.name} (lambda={oracle.lipschitz:.4g}, floor={oracle.floor:.4g})")
    return oracle.check()
