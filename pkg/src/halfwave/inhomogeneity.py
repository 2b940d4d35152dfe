"""Inhomogeneity factors ``k(x)`` multiplying the cubic nonlinearity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Fn = Callable[[np.ndarray], np.ndarray]


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class InhomogeneityProfile:
    """An even factor ``k`` with analytic first and second derivatives.

    ``k1`` is the declared lower bound.  ``tag`` identifies the family and is
    written into every report; ``params`` holds the family parameters.
    """

    k: Fn
    dk: Fn
    d2k: Fn
    k1: float
    tag: str
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.k(np.asarray(x, dtype=float))

    @property
    def homogeneous(self) -> bool:
        return self.tag == "homogeneous"

    @property
    def second_derivative_at_0(self) -> float:
        return float(self.d2k(np.zeros(1))[0])

    def max_on(self, x: np.ndarray) -> float:
        return float(np.max(self.k(x)))

    def check_admissible(self, x: np.ndarray, relaxed: bool = False) -> None:
        """Raise :class:`AdmissibilityError` unless ``0 < k1 <= k <= 1`` on ``x``,
        ``k`` is even, ``k(0) = 1``, ``k'(0) = 0`` and ``k''(0) < 0``.

        ``relaxed`` keeps only positivity and evenness (used by diagnostics such
        as constant factors other than one).
        """
        x = np.asarray(x, dtype=float)
        kx = self.k(x)
        if not self.k1 > 0 or np.any(kx < self.k1 - 1e-14):
            raise AdmissibilityError(f"k drops below its lower bound k1={self.k1}")
        if np.max(np.abs(kx - self.k(-x))) > 1e-12:
            raise AdmissibilityError("k is not even")
        if relaxed:
            return
        if np.any(kx > 1 + 1e-14):
            raise AdmissibilityError("k exceeds 1")
        zero = np.zeros(1)
        if abs(self.k(zero)[0] - 1.0) > 1e-14 or abs(self.dk(zero)[0]) > 1e-14:
            raise AdmissibilityError("k must satisfy k(0) = 1 and k'(0) = 0")
        if not self.homogeneous and not self.d2k(zero)[0] < 0:
            raise AdmissibilityError("k''(0) must be negative")

    def describe(self) -> dict:
        return {"tag": self.tag, "k1": self.k1, "k2_at_0": self.second_derivative_at_0, **self.params}


def rational(k1: float = 0.5, width: float = 1.0) -> InhomogeneityProfile:
    """``k(x) = (1 + k1 z^2) / (1 + z^2)`` with ``z = x / width``; ``k''(0) = -2(1 - k1)/width^2``."""
    if not 0 < k1 < 1:
        raise ValueError("k1 must lie in (0, 1)")
    a = float(width)
    c = 1.0 - k1

    def k(x):
        z2 = (np.asarray(x) / a) ** 2
        return 1.0 - c * z2 / (1.0 + z2)

    def dk(x):
        z = np.asarray(x) / a
        return -2.0 * c * z / (a * (1.0 + z**2) ** 2)

    def d2k(x):
        z2 = (np.asarray(x) / a) ** 2
        return -2.0 * c * (1.0 - 3.0 * z2) / (a**2 * (1.0 + z2) ** 3)

    tag = "default" if (k1 == 0.5 and a == 1.0) else "custom"
    return InhomogeneityProfile(k, dk, d2k, k1=k1, tag=tag, params={"family": "rational", "k1": k1, "width": a})


def constant(value: float = 1.0) -> InhomogeneityProfile:
    """``k`` identically ``value``; ``value = 1`` is the homogeneous equation."""
    v = float(value)
    tag = "homogeneous" if v == 1.0 else "constant"
    return InhomogeneityProfile(
        lambda x: np.full(np.shape(x), v),
        lambda x: np.zeros(np.shape(x)),
        lambda x: np.zeros(np.shape(x)),
        k1=v,
        tag=tag,
        params={"family": "constant", "value": v},
    )


def default() -> InhomogeneityProfile:
    return rational(0.5, 1.0)


def homogeneous() -> InhomogeneityProfile:
    return constant(1.0)


def parse(text: str) -> InhomogeneityProfile:
    """Build a profile from ``default``, ``homogeneous``, ``constant:<value>`` or
    ``custom:k1=<v>[,width=<w>]`` (the rational family)."""
    text = text.strip()
    if text == "default":
        return default()
    if text == "homogeneous":
        return homogeneous()
    name, _, rest = text.partition(":")
    if name == "constant":
        return constant(float(rest))
    if name == "custom":
        kwargs = {}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in ("k1", "width"):
                raise ValueError(f"unknown k parameter {key!r}")
            kwargs[key] = float(val)
        return rational(**kwargs)
    raise ValueError(f"cannot parse k specification {text!r}")
