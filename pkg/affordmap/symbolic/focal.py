"""Symbolic form of the soft-target focal loss.

The per-pixel loss is written once as a sympy expression; the loss and its
derivative with respect to the predicted probability are generated from it
and compiled with numba. The numpy reference implementation in
:mod:`affordmap.losses` uses the compiled gradient, and the tests compare the
torch training loss against both.
"""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Any, Callable, Dict, Tuple

import numba
import numpy as np
import sympy as sym


__all__ = ["focal_expression", "make_focal_gradient", "make_focal_loss"]


logger = logging.getLogger("affordmap.symbolic.focal")


ARGNAMES = ("p", "y", "alpha_pos", "alpha_neg", "gamma")


def focal_expression() -> Tuple[sym.Expr, Dict[str, sym.Symbol]]:
    p = sym.Symbol("p", positive=True)
    y = sym.Symbol("y", nonnegative=True)
    alpha_pos = sym.Symbol("alpha_pos", positive=True)
    alpha_neg = sym.Symbol("alpha_neg", positive=True)
    gamma = sym.Symbol("gamma", nonnegative=True)
    expr = (
        alpha_pos * y * (1 - p) ** gamma * (-sym.log(p))
        + alpha_neg * (1 - y) * p ** gamma * (-sym.log(1 - p))
    )
    symbols = {
        "p": p, "y": y, "alpha_pos": alpha_pos, "alpha_neg": alpha_neg, "gamma": gamma,
    }
    return expr, symbols


def _compile(name: str, expr: sym.Expr, symbols: Dict[str, sym.Symbol]) -> Callable[..., Any]:
    args = [symbols[arg] for arg in ARGNAMES]
    func = sym.lambdify(args, expr, modules="numpy", cse=True)
    logger.debug("Compiling %s: %s", name, expr)
    compiled = numba.njit(func)

    def call(p: np.ndarray, y: np.ndarray, alpha_pos: float, alpha_neg: float,
             gamma: float) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        out = compiled(p, y, float(alpha_pos), float(alpha_neg), float(gamma))
        out = np.broadcast_to(np.asarray(out, dtype=np.float64), p.shape)
        if (~np.isfinite(out)).any():
            raise FloatingPointError(f"Non-finite values from symbolic {name}.")
        return out

    call.__name__ = name
    return call


@lru_cache(maxsize=None)
def make_focal_loss() -> Callable[..., np.ndarray]:
    expr, symbols = focal_expression()
    return _compile("focal_loss", expr, symbols)


@lru_cache(maxsize=None)
def make_focal_gradient() -> Callable[..., np.ndarray]:
    """Elementwise d(loss)/dp as a compiled function of (p, y, alpha_pos, alpha_neg, gamma)."""
    expr, symbols = focal_expression()
    grad = sym.diff(expr, symbols["p"])
    return _compile("focal_gradient", grad, symbols)
