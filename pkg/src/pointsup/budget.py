"""Annotation-time arithmetic: per-instance costs for box / mask / point
supervision, dataset totals, the break-even stage-time interval, and the
time axis for equal-budget comparisons.

Stage timings are decimal quantities (0.9 s/point, 79.2 s/mask, ...);
internally all sums run in exact decimal arithmetic so that, e.g.,
28.8 + 14.4 + 7.0 + 9.0 is 59.2 and not 59.199999999999996. The public API
accepts and returns floats.
"""

import math
from dataclasses import dataclass
from decimal import Decimal

SECONDS_PER_DAY = 86400


def _dec(x):
    return x if isinstance(x, Decimal) else Decimal(str(x))


@dataclass(frozen=True)
class BudgetParams:
    """Per-stage timings in seconds per instance."""

    t_category: float = 28.8
    t_spotting: float = 14.4
    t_box: float = 7.0
    t_point: float = 0.9
    t_mask: float = 79.2

    def __post_init__(self):
        for name in ("t_category", "t_spotting", "t_box", "t_point", "t_mask"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def t_stages(self):
        return float(_dec(self.t_category) + _dec(self.t_spotting))


@dataclass(frozen=True)
class SupervisionKind:
    """box | mask | points(N)."""

    form: str
    n_points: int = 0

    def __post_init__(self):
        if self.form not in ("box", "mask", "points"):
            raise ValueError(f"unknown supervision form {self.form!r}")
        if self.n_points < 0:
            raise ValueError("point count must be >= 0")

    @classmethod
    def box(cls):
        return cls("box")

    @classmethod
    def mask(cls):
        return cls("mask")

    @classmethod
    def points(cls, n):
        return cls("points", n)


def _form_time(kind, params):
    if kind.form == "box":
        return _dec(params.t_box)
    if kind.form == "mask":
        return _dec(params.t_mask)
    return _dec(params.t_box) + kind.n_points * _dec(params.t_point)


def instance_form_time(kind, params=BudgetParams()):
    """Seconds to annotate one spotted instance, excluding the shared stages."""
    return float(_form_time(kind, params))


def per_instance_time(kind, params=BudgetParams(), include_spotting=True):
    """Seconds per instance; optionally includes category labeling + spotting."""
    stages = _dec(params.t_category) + _dec(params.t_spotting) if include_spotting else Decimal(0)
    return float(stages + _form_time(kind, params))


def dataset_time(kind, n_instances, params=BudgetParams(), include_spotting=True):
    """Days to annotate n instances with the given supervision form."""
    if n_instances < 0:
        raise ValueError("instance count must be >= 0")
    total = n_instances * _dec(per_instance_time(kind, params, include_spotting))
    return float(total / SECONDS_PER_DAY)


def break_even_interval(fraction_box, fraction_mask, fraction_point, params=BudgetParams(), n_points=10):
    """Stage-time interval where point annotation is the cheapest route.

    Each supervision form reaches a fixed quality target with its own data
    fraction f; the total per-instance cost at stage time t is
    f * (t + form time). Solves f_p*(t + t_box + N*t_point) < f_b*(t + t_box)
    and < f_m*(t + t_mask) in closed form. Returns (t_low, t_high): t_low is
    clamped to 0, math.inf means no upper bound, and the interval may be
    empty (t_low >= t_high). Equal fractions with equal intercepts are a
    degenerate comparison and raise ValueError.
    """
    for f in (fraction_box, fraction_mask, fraction_point):
        if not 0 < f <= 1:
            raise ValueError("fractions must be in (0, 1]")
    f_p = _dec(fraction_point)
    c_p = _form_time(SupervisionKind.points(n_points), params)
    lo, hi = Decimal(0), None
    for f_other, kind in (
        (_dec(fraction_box), SupervisionKind.box()),
        (_dec(fraction_mask), SupervisionKind.mask()),
    ):
        a = f_p - f_other
        b = f_other * _form_time(kind, params) - f_p * c_p
        if a == 0:
            if b == 0:
                raise ValueError("degenerate comparison: identical cost lines")
            if b < 0:
                return (0.0, 0.0)  # never cheaper: empty interval
            continue  # always cheaper than this form: no constraint
        t = b / a
        if a > 0:
            hi = t if hi is None else min(hi, t)
        else:
            lo = max(lo, t)
    lo = max(lo, Decimal(0))
    if hi is None:
        return (float(lo), math.inf)
    if hi < lo:
        hi = lo
    return (float(lo), float(hi))


def tradeoff_curve(kind, data_fractions, params=BudgetParams(), n_instances=849949, include_spotting=True):
    """(annotation_days, fraction) rows for ascending training-set fractions."""
    fr = list(data_fractions)
    if any(not 0 < f <= 1 for f in fr):
        raise ValueError("fractions must be in (0, 1]")
    if sorted(fr) != fr:
        raise ValueError("fractions must be sorted ascending")
    full = _dec(dataset_time(kind, n_instances, params, include_spotting))
    return [(float(full * _dec(f)), f) for f in fr]
