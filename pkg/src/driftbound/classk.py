"""Comparison functions: class-K, class-K-infinity, class-KL.

Named parametric forms with evaluators and inverses where defined.  A
class-K function is strictly increasing, continuous, and 0 at 0; class-K
-infinity additionally grows without bound; a class-KL function is class-K
in its first argument and decays to 0 in the second.
"""

from __future__ import annotations

import numpy as np


class ClassKFunction:
    """Named parametric class-K function.

    Forms: ``linear`` (c*r), ``power`` (c*r^p), ``saturating``
    (c*r/(1 + r/s), bounded by c*s so class-K but not K-infinity).
    """

    def __init__(self, form: str, **params):
        self.form = form
        self.params = params
        if form == "linear":
            if params["c"] <= 0:
                raise ValueError("linear form needs c > 0")
        elif form == "power":
            if params["c"] <= 0 or params["p"] <= 0:
                raise ValueError("power form needs c > 0 and p > 0")
        elif form == "saturating":
            if params["c"] <= 0 or params["s"] <= 0:
                raise ValueError("saturating form needs c > 0 and s > 0")
        else:
            raise ValueError(f"unknown class-K form {form!r}")

    @classmethod
    def linear(cls, c: float = 1.0) -> "ClassKFunction":
        return cls("linear", c=float(c))

    @classmethod
    def power(cls, c: float, p: float) -> "ClassKFunction":
        return cls("power", c=float(c), p=float(p))

    @classmethod
    def saturating(cls, c: float, s: float) -> "ClassKFunction":
        return cls("saturating", c=float(c), s=float(s))

    @property
    def unbounded(self) -> bool:
        return self.form in ("linear", "power")

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        if (r < 0).any():
            raise ValueError("class-K functions are defined on r >= 0")
        if self.form == "linear":
            out = self.params["c"] * r
        elif self.form == "power":
            out = self.params["c"] * r ** self.params["p"]
        else:
            out = self.params["c"] * r / (1.0 + r / self.params["s"])
        return float(out) if out.ndim == 0 else out

    def inverse(self, v):
        v = np.asarray(v, dtype=np.float64)
        if (v < 0).any():
            raise ValueError("inverse defined on v >= 0")
        if self.form == "linear":
            out = v / self.params["c"]
        elif self.form == "power":
            out = (v / self.params["c"]) ** (1.0 / self.params["p"])
        else:
            c, s = self.params["c"], self.params["s"]
            if (v >= c * s).any():
                raise ValueError(f"saturating form never reaches {v}")
            out = v * s / (c * s - v)
        return float(out) if out.ndim == 0 else out

    def check_monotone(self, r_max: float = 10.0, n: int = 200) -> bool:
        """Sampled strict-monotonicity and zero-at-zero check."""
        rs = np.linspace(0.0, r_max, n)
        vals = self(rs)
        return bool(vals[0] == 0.0 and (np.diff(vals) > 0).all())
