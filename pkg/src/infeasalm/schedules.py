"""Step-size and error schedules with a checker for the standing assumptions.

The five conditions, with ``S_k = gamma_0 + ... + gamma_k``:

* A1: ``sum_{k>=1} eps_k < inf``
* A2: ``(eps_{k+1} / gamma_k) * S_k * sqrt(S_k)`` stays bounded
* A3: ``sum_{k>=1} (eps_k / gamma_k)**2 * S_{k-1} < inf``
* A4: ``sum_{k>=1} (eps_k / gamma_k) * S_{k-1} < inf``
* A5: ``sum_k gamma_k = inf``

For the built-in families the verdicts follow from the asymptotic exponents
and are returned directly.  Anything else goes through a finite-horizon
partial-sum heuristic that may answer ``Inconclusive``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

A2_BOUND = 1e3
DEFAULT_HORIZON = 10**6
ITEMS = ("A1", "A2", "A3", "A4", "A5")


# ---------------------------------------------------------------- families


@dataclass(frozen=True)
class Constant:
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("constant step size must be positive")

    def values(self, k):
        return np.full(np.shape(k), float(self.gamma))

    @property
    def exponent(self):
        return 0.0

    def spec(self):
        return f"const:gamma={self.gamma!r}"


@dataclass(frozen=True)
class Geometric:
    """``min(g0 * ratio**k, cap)``; an infinite cap gives pure geometric growth."""

    g0: float = 1.0
    ratio: float = 2.0
    cap: float = math.inf

    def __post_init__(self):
        if not self.g0 > 0:
            raise ConfigError("g0 must be positive")
        if not self.ratio > 1:
            raise ConfigError("geometric ratio must exceed 1")
        if not self.cap >= self.g0:
            raise ConfigError("cap must be at least g0")

    def values(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(over="ignore"):
            log_g = math.log(self.g0) + k * math.log(self.ratio)
            return np.minimum(np.exp(np.minimum(log_g, 709.0)), self.cap)

    @property
    def exponent(self):
        # eventually constant once capped
        return 0.0 if math.isfinite(self.cap) else None

    def spec(self):
        return f"geom:g0={self.g0!r},ratio={self.ratio!r},cap={self.cap!r}"


@dataclass(frozen=True)
class Polynomial:
    """``g0 * (k + 1)**p``."""

    g0: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if not self.g0 > 0:
            raise ConfigError("g0 must be positive")
        if not self.p >= 0:
            raise ConfigError("polynomial exponent must be nonnegative")

    def values(self, k):
        return self.g0 * np.power(np.asarray(k, dtype=float) + 1.0, self.p)

    @property
    def exponent(self):
        return float(self.p)

    def spec(self):
        return f"poly:g0={self.g0!r},p={self.p!r}"


@dataclass(frozen=True)
class Zero:
    def values(self, k):
        return np.zeros(np.shape(k))

    def spec(self):
        return "zero"


@dataclass(frozen=True)
class LogPoly:
    """``c / ((k + 1) * ln(k + 1))**2``."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c >= 0:
            raise ConfigError("c must be nonnegative")

    def values(self, k):
        k1 = np.asarray(k, dtype=float) + 1.0
        return self.c / (k1 * np.log(k1)) ** 2

    def spec(self):
        return f"logpoly:c={self.c!r}"


@dataclass(frozen=True)
class PowerLaw:
    """``c * (k + 1)**(-a)``."""

    c: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if not self.c >= 0:
            raise ConfigError("c must be nonnegative")
        if not self.a >= 0:
            raise ConfigError("power-law exponent must be nonnegative")

    def values(self, k):
        return self.c * np.power(np.asarray(k, dtype=float) + 1.0, -self.a)

    def spec(self):
        return f"powerlaw:c={self.c!r},a={self.a!r}"


GAMMA_FAMILIES = (Constant, Geometric, Polynomial)
EPS_FAMILIES = (Zero, LogPoly, PowerLaw)


@dataclass(frozen=True)
class Schedule:
    """A step-size family paired with an error family."""

    gamma_family: object = field(default_factory=Constant)
    eps_family: object = field(default_factory=Zero)

    def gamma(self, k):
        if k < 0:
            raise IndexError("step sizes are indexed from 0")
        return float(self.gamma_family.values(k))

    def epsilon(self, k):
        if k < 1:
            raise IndexError("errors are indexed from 1")
        return float(self.eps_family.values(k))

    def gammas(self, n):
        """``gamma_0 .. gamma_{n-1}`` as an array."""
        return self.gamma_family.values(np.arange(n))

    def epsilons(self, n):
        """``eps_1 .. eps_n`` as an array."""
        return self.eps_family.values(np.arange(1, n + 1))

    def spec(self):
        return f"{self.gamma_family.spec()} eps={self.eps_family.spec()}"


def gamma(schedule, k):
    return schedule.gamma(k)


def epsilon(schedule, k):
    return schedule.epsilon(k)


# ---------------------------------------------------------------- validator


class Verdict(str, enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ItemResult:
    verdict: Verdict
    method: str
    partial_sums: tuple = ()
    note: str = ""

    def to_dict(self):
        return {
            "verdict": self.verdict.value,
            "method": self.method,
            "partial_sums": [float(v) for v in self.partial_sums],
            "note": self.note,
        }


@dataclass(frozen=True)
class AssumptionReport:
    items: dict
    horizon: int
    checkpoints: tuple

    def __post_init__(self):
        if tuple(self.items) != ITEMS:
            raise ValueError("a report carries exactly the five items in order")

    def __getitem__(self, key):
        return self.items[key].verdict

    @property
    def has_fails(self):
        return any(r.verdict is Verdict.FAILS for r in self.items.values())

    @property
    def has_inconclusive(self):
        return any(r.verdict is Verdict.INCONCLUSIVE for r in self.items.values())

    def failed(self):
        return [k for k, r in self.items.items() if r.verdict is Verdict.FAILS]

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "checkpoints": list(self.checkpoints),
            "a2_bound": A2_BOUND,
            "items": {k: r.to_dict() for k, r in self.items.items()},
        }

    def format(self):
        lines = [f"horizon {self.horizon}"]
        for k, r in self.items.items():
            sums = ", ".join(f"{v:.6g}" for v in r.partial_sums)
            line = f"{k}: {r.verdict.value} ({r.method})"
            if sums:
                line += f" partial sums [{sums}]"
            if r.note:
                line += f"  {r.note}"
            lines.append(line)
        return "\n".join(lines)


def _closed_form(schedule):
    """Verdicts from asymptotic exponents, or ``None`` when not cataloged."""
    p = getattr(schedule.gamma_family, "exponent", None)
    eps = schedule.eps_family
    if p is None or not isinstance(eps, EPS_FAMILIES):
        return None
    H, F = Verdict.HOLDS, Verdict.FAILS
    if isinstance(eps, Zero) or (isinstance(eps, (LogPoly, PowerLaw)) and eps.c == 0):
        v = {k: H for k in ITEMS}
        why = {k: "zero errors" for k in ITEMS[:4]}
    elif isinstance(eps, LogPoly):
        v = {"A1": H, "A2": H if p <= 1 else F, "A3": H, "A4": H}
        why = {
            "A1": "terms ~ 1/(k ln k)^2",
            "A2": f"ratio ~ k^{0.5 * p - 0.5:g}/ln(k)^2",
            "A3": f"terms ~ k^{-3 - p:g}/ln(k)^4",
            "A4": "terms ~ 1/(k ln(k)^2)",
        }
    else:
        a = eps.a
        v = {
            "A1": H if a > 1 else F,
            "A2": H if a >= 0.5 * p + 1.5 else F,
            "A3": H if 2 * a + p > 2 else F,
            "A4": H if a > 2 else F,
        }
        why = {
            "A1": f"terms ~ k^{-a:g}",
            "A2": f"ratio ~ k^{0.5 * p + 1.5 - a:g}",
            "A3": f"terms ~ k^{1 - p - 2 * a:g}",
            "A4": f"terms ~ k^{1 - a:g}",
        }
    v["A5"] = H
    why["A5"] = f"gamma_k ~ k^{p:g}"
    return v, why


def _series_verdict(t1, t2, t3):
    d1, d2 = t2 - t1, t3 - t2
    if not all(math.isfinite(x) for x in (t1, t2, t3)):
        return Verdict.FAILS if t3 == math.inf else Verdict.INCONCLUSIVE
    if d2 == 0 and d1 == 0:
        return Verdict.HOLDS
    if d2 <= 0.5 * d1:
        return Verdict.HOLDS
    if d2 >= 0.9 * d1:
        return Verdict.FAILS
    return Verdict.INCONCLUSIVE


def _numeric(schedule, horizon):
    K = horizon
    cps = (K // 100, K // 10, K)
    k = np.arange(K + 1)
    g = schedule.gamma_family.values(k)
    e = np.concatenate(([0.0], schedule.eps_family.values(k[1:])))
    with np.errstate(over="ignore", invalid="ignore"):
        S = np.cumsum(g)
        S_prev = np.concatenate(([0.0], S[:-1]))
        t1 = e
        ratio = np.concatenate((e[1:], [float(schedule.eps_family.values(K + 1))])) / g * S * np.sqrt(S)
        t3 = (e / g) ** 2 * S_prev
        t4 = (e / g) * S_prev

    def partial(terms):
        return tuple(math.fsum(terms[: c + 1]) for c in cps)

    res = {}
    for name, terms in (("A1", t1), ("A3", t3), ("A4", t4)):
        ps = partial(terms)
        res[name] = ItemResult(_series_verdict(*ps), "partial sums", ps)
    r = tuple(float(ratio[c]) for c in cps)
    if not all(math.isfinite(x) for x in r):
        v2 = Verdict.INCONCLUSIVE
    else:
        growth = r[2] / r[1] if r[1] > 0 else (1.0 if r[2] == 0 else math.inf)
        if r[2] <= A2_BOUND and growth <= 1.05:
            v2 = Verdict.HOLDS
        elif growth >= 1.5 or (r[2] > A2_BOUND and growth > 1.05):
            v2 = Verdict.FAILS
        else:
            v2 = Verdict.INCONCLUSIVE
    res["A2"] = ItemResult(v2, "ratio at checkpoints", r, f"bound {A2_BOUND:g} is a heuristic constant")
    ps = partial(g)
    d1, d2 = ps[1] - ps[0], ps[2] - ps[1]
    if not math.isfinite(ps[2]) or d2 >= 0.9 * d1:
        v5 = Verdict.HOLDS
    elif d2 <= 1e-3 * ps[2]:
        v5 = Verdict.FAILS
    else:
        v5 = Verdict.INCONCLUSIVE
    res["A5"] = ItemResult(v5, "partial sums", ps)
    return {name: res[name] for name in ITEMS}, cps


def validate_assumptions(schedule, horizon=DEFAULT_HORIZON, closed_form=True):
    """Classify each assumption as Holds, Fails or Inconclusive.

    Parameters
    ----------
    schedule : Schedule
    horizon : int
        Last index used by the partial sums; at least 1000.
    closed_form : bool
        Use exponent-based verdicts for cataloged families.  With ``False``
        the partial-sum heuristic runs for every item.
    """
    horizon = int(horizon)
    if horizon < 1000:
        raise ConfigError("horizon must be at least 1000")
    numeric, cps = _numeric(schedule, horizon)
    cf = _closed_form(schedule) if closed_form else None
    if cf is None:
        return AssumptionReport(numeric, horizon, cps)
    verdicts, why = cf
    items = {
        name: ItemResult(verdicts[name], "closed form", numeric[name].partial_sums, why[name])
        for name in ITEMS
    }
    return AssumptionReport(items, horizon, cps)


# ---------------------------------------------------------------- parsing

_GAMMA_KEYS = {
    "const": (Constant, ("gamma",)),
    "constant": (Constant, ("gamma",)),
    "poly": (Polynomial, ("g0", "p")),
    "polynomial": (Polynomial, ("g0", "p")),
    "geom": (Geometric, ("g0", "ratio", "cap")),
    "geometric": (Geometric, ("g0", "ratio", "cap")),
}
_EPS_KEYS = {
    "zero": (Zero, ()),
    "logpoly": (LogPoly, ("c",)),
    "powerlaw": (PowerLaw, ("c", "a")),
    "power": (PowerLaw, ("c", "a")),
}


def _parse_family(text, table, what):
    text = text.strip()
    head, _, body = text.partition(":")
    key = head.strip().lower()
    if key not in table:
        raise ConfigError(f"unknown {what} family {head!r}; expected one of {sorted(table)}")
    cls, names = table[key]
    kwargs = {}
    positional = []
    for part in filter(None, (p.strip() for p in body.split(","))):
        if "=" in part:
            name, _, val = part.partition("=")
            name = name.strip()
            if name not in names:
                raise ConfigError(f"{what} family {key!r} has no parameter {name!r}")
            kwargs[name] = _num(val)
        else:
            positional.append(_num(part))
    if len(positional) > len(names):
        raise ConfigError(f"too many parameters for {what} family {key!r}")
    for name, val in zip(names, positional):
        if name in kwargs:
            raise ConfigError(f"parameter {name!r} given twice")
        kwargs[name] = val
    return cls(**kwargs)


def _num(text):
    try:
        return float(text.strip())
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_gamma(text):
    """Parse ``const:1``, ``const:gamma=1.0``, ``poly:g0=1,p=0.5`` or ``geom:g0=1,ratio=2,cap=8``."""
    return _parse_family(text, _GAMMA_KEYS, "step-size")


def parse_eps(text):
    """Parse ``zero``, ``logpoly:c=1`` or ``powerlaw:c=1,a=1`` (an ``eps=`` prefix is allowed)."""
    text = text.strip()
    if text.lower().startswith("eps="):
        text = text[4:]
    return _parse_family(text, _EPS_KEYS, "error")


def parse_schedule(gamma_text, eps_text="zero"):
    return Schedule(parse_gamma(gamma_text), parse_eps(eps_text))
