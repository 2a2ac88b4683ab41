"""
Warning Suppressor for numeric evaluation
Silences floating point noise raised while sampling density oracles, and
third-party deprecation chatter when the CLI starts.
"""

import functools
import warnings
from typing import Callable

import numpy as np


def suppress_numeric_warnings(func: Callable) -> Callable:
    """Decorator: run func with numpy floating point warnings silenced."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        with warnings.catch_warnings(), np.errstate(over="ignore", under="ignore", invalid="ignore"):
            warnings.filterwarnings("ignore", category=RuntimeWarning, module="numpy")
            return func(*args, **kwargs)
    return wrapper


def suppress_all_solver_warnings():
    """Globally suppress library warnings that would pollute CLI output."""
    warnings.filterwarnings("ignore", category=FutureWarning, module="networkx")
    warnings.filterwarnings("ignore", category=DeprecationWarning, module="networkx")

    warnings.filterwarnings("ignore", category=FutureWarning, module="pandas")

    warnings.filterwarnings("ignore", category=UserWarning, module="joblib")
