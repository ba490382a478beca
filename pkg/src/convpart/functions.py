"""Test functions with closed-form gradients and Hessians.

Every function acts on arrays of points of shape ``(..., d)`` and returns
values of shape ``(...)``, gradients ``(..., d)`` and Hessians
``(..., d, d)``.  The domain is the unit cube ``(0, 1)^d`` unless stated
otherwise.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray

E_INV = math.exp(-1.0)


@dataclass(frozen=True)
class FieldFunction:
    """A scalar field ``f`` together with its first and second derivatives.

    ``singular_points`` lists points where the derivatives blow up;
    quadrature drops nodes inside a small ball around them.
    """

    label: str
    d: int
    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]
    hessian: Callable[[Array], Array]
    smoothness_note: str = ""
    singular_points: tuple[tuple[float, ...], ...] = ()
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x) -> Array:
        return self.value(np.asarray(x, dtype=float))

    def eval(self, x) -> Array:
        return self.value(np.asarray(x, dtype=float))

    def grad(self, x) -> Array:
        return self.gradient(np.asarray(x, dtype=float))

    def hess(self, x) -> Array:
        return self.hessian(np.asarray(x, dtype=float))


def _eye_like(x: Array) -> Array:
    d = x.shape[-1]
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()


def constant(d: int, c: float = 1.0) -> FieldFunction:
    return FieldFunction(
        "const",
        d,
        lambda x: np.full(x.shape[:-1], float(c)),
        lambda x: np.zeros(x.shape),
        lambda x: np.zeros(x.shape + (d,)),
        "C-infinity, all seminorms vanish",
        params={"c": c},
    )


def affine(a, b: float = 0.0, label: str = "linear") -> FieldFunction:
    """``f(x) = <a, x> + b``."""
    a = np.asarray(a, dtype=float)
    d = a.size
    return FieldFunction(
        label,
        d,
        lambda x: x @ a + b,
        lambda x: np.broadcast_to(a, x.shape).copy(),
        lambda x: np.zeros(x.shape + (d,)),
        "affine, W^2_q seminorm zero",
        params={"a": tuple(a), "b": b},
    )


def quad(d: int) -> FieldFunction:
    """``f(x) = |x|^2 / 2``; Hessian is the identity."""
    return FieldFunction(
        "quad",
        d,
        lambda x: 0.5 * np.einsum("...i,...i->...", x, x),
        lambda x: x.copy(),
        _eye_like,
        "C-infinity, in W^2_q for every q",
    )


def _diag_dir(d: int) -> Array:
    return np.full(d, 1.0 / math.sqrt(d))


def expdir(d: int) -> FieldFunction:
    """``f(x) = exp(<a, x>)`` with ``a = (1, ..., 1) / sqrt(d)``."""
    a = _diag_dir(d)
    aa = np.outer(a, a)

    def value(x):
        return np.exp(x @ a)

    return FieldFunction(
        "expdir",
        d,
        value,
        lambda x: value(x)[..., None] * a,
        lambda x: value(x)[..., None, None] * aa,
        "C-infinity",
    )


def ridge(d: int) -> FieldFunction:
    """``f(x) = <a, x>^2``; the gradient is everywhere parallel to ``a``."""
    a = _diag_dir(d)
    aa = np.outer(a, a)
    return FieldFunction(
        "ridge",
        d,
        lambda x: (x @ a) ** 2,
        lambda x: 2.0 * (x @ a)[..., None] * a,
        lambda x: np.broadcast_to(2.0 * aa, x.shape + (d,)).copy(),
        "C-infinity",
    )


def singular_beta(d: int, beta: float = 0.5, center=None) -> FieldFunction:
    """``f(x) = |x - c|^beta``, by default with ``c`` the domain center.

    For ``beta = 1/2`` and ``d = 2`` this lies in ``W^2_1`` but not in
    ``W^2_2``.  Derivatives at ``c`` itself are reported as zero.
    """
    c = np.full(d, 0.5) if center is None else np.asarray(center, dtype=float)

    def radius(x):
        y = x - c
        return y, np.sqrt(np.sum(y * y, axis=-1))

    def value(x):
        _, r = radius(x)
        return r**beta

    def gradient(x):
        y, r = radius(x)
        safe = np.where(r > 0, r, 1.0)
        coef = np.where(r > 0, beta * safe ** (beta - 2.0), 0.0)
        return coef[..., None] * y

    def hessian(x):
        y, r = radius(x)
        safe = np.where(r > 0, r, 1.0)
        c1 = np.where(r > 0, beta * safe ** (beta - 2.0), 0.0)
        c2 = np.where(r > 0, beta * (beta - 2.0) * safe ** (beta - 4.0), 0.0)
        return c1[..., None, None] * np.eye(d) + c2[..., None, None] * (
            y[..., :, None] * y[..., None, :]
        )

    return FieldFunction(
        "singular_beta",
        d,
        value,
        gradient,
        hessian,
        f"|x-c|^{beta}: W^2_q iff q < d/(2-beta)",
        singular_points=(tuple(c),),
        params={"beta": beta, "center": tuple(c)},
    )


def _phi_parts(y: Array):
    """Bump value and the factor ``w = -1/(1-s)^2`` at ``y = 2x - 1``."""
    s = np.sum(y * y, axis=-1)
    inside = s < 1.0
    one_minus = np.where(inside, 1.0 - s, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        phi = np.where(inside, np.exp(-1.0 / one_minus), 0.0)
        w = np.where(inside, -1.0 / one_minus**2, 0.0)
        dw = np.where(inside, -2.0 / one_minus**3, 0.0)
    return phi, w, dw


def bump_phi(x) -> Array:
    """``exp(-1 / (1 - |2x - 1|^2))`` inside the ball, 0 outside."""
    x = np.asarray(x, dtype=float)
    return _phi_parts(2.0 * x - 1.0)[0]


def _bump_phi_grad(x: Array) -> Array:
    y = 2.0 * x - 1.0
    phi, w, _ = _phi_parts(y)
    with np.errstate(invalid="ignore", over="ignore"):
        g = 4.0 * (phi * w)[..., None] * y
    return np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)


def _bump_phi_hess(x: Array) -> Array:
    y = 2.0 * x - 1.0
    d = x.shape[-1]
    phi, w, dw = _phi_parts(y)
    with np.errstate(invalid="ignore", over="ignore"):
        outer = (16.0 * phi * (w * w + dw))[..., None, None] * (y[..., :, None] * y[..., None, :])
        diag = (8.0 * phi * w)[..., None, None] * np.eye(d)
        h = outer + diag
    return np.nan_to_num(h, nan=0.0, posinf=0.0, neginf=0.0)


def _local_coords(m: int, x: Array) -> Array:
    # the only bump that can be non-zero at x is the one of the sub-cube holding x
    mx = m * x
    i = np.clip(np.floor(mx), 0, m - 1)
    return mx - i


def bump_fm(m: int, x) -> Array:
    """Sum of ``m**d`` disjoint scaled bumps ``phi(m x - i + 1)``."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    x = np.asarray(x, dtype=float)
    return bump_phi(_local_coords(m, x))


def bump_phi_i(m: int, i, x) -> Array:
    """The single scaled bump attached to the sub-cube with 1-based index ``i``."""
    x = np.asarray(x, dtype=float)
    return bump_phi(m * x - np.asarray(i, dtype=float) + 1.0)


def bump(m: int, d: int) -> FieldFunction:
    return FieldFunction(
        f"bump:m={m}",
        d,
        lambda x: bump_fm(m, x),
        lambda x: m * _bump_phi_grad(_local_coords(m, x)),
        lambda x: (m * m) * _bump_phi_hess(_local_coords(m, x)),
        "C-infinity, compactly supported in the inscribed balls",
        params={"m": m},
    )


def bump_single(d: int) -> FieldFunction:
    """The reference bump ``phi`` itself (``m = 1``)."""
    return bump(1, d)


BUMP_MS = (1, 2, 4, 8)


def corpus(d: int = 2) -> list[FieldFunction]:
    """Default set of test functions in dimension ``d``."""
    return [
        quad(d),
        expdir(d),
        ridge(d),
        singular_beta(d),
        *[bump(m, d) for m in BUMP_MS],
        constant(d),
        affine(_diag_dir(d)),
    ]


_BUMP_RE = re.compile(r"^bump(?::m=(\d+))?$")


def get_function(label: str, d: int) -> FieldFunction:
    """Look up a corpus member by label, e.g. ``quad`` or ``bump:m=4``.

    ``bump`` without a parameter means ``m = 1``; other values of ``m``
    than the default corpus ones are accepted.
    """
    match = _BUMP_RE.match(label)
    if match:
        return bump(int(match.group(1) or 1), d)
    makers = {
        "quad": quad,
        "expdir": expdir,
        "ridge": ridge,
        "singular_beta": singular_beta,
        "const": constant,
        "linear": lambda d: affine(_diag_dir(d)),
    }
    try:
        return makers[label](d)
    except KeyError:
        raise ValueError(f"unknown function label {label!r}") from None
