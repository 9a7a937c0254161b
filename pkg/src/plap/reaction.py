"""Piecewise-continuous reactions, their envelopes, truncation and mollification.

A :class:`Reaction` is described by open pieces covering ``(0, inf)``, each
carrying a formula that is continuous on the piece, plus explicit values at the
declared breakpoints.  Countable families of jumps inside a piece (for
instance at ``1/k``) are declared through :class:`BreakpointGenerator`.
Because every formula is continuous between breakpoints, the essential lower
and upper envelopes reduce to one-sided limits.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "Piece",
    "BreakpointGenerator",
    "Reaction",
    "UnrepresentableReaction",
    "HypothesisReport",
    "GrowthConstants",
    "MollifiedReaction",
    "compile_formula",
    "eval_f",
    "eval_envelopes",
    "check_hypotheses",
    "truncate",
    "mollifier_rho",
    "mollifier_drho",
    "mollify",
    "primitive_G",
    "growth_constants",
    "preset",
]

# relative offset used to read one-sided limits of a formula at a jump
_NUDGE = 1e-9


class UnrepresentableReaction(ValueError):
    """The requested reaction cannot be expressed with countably many jumps."""


# {{{ formulas

_FUNCS = {
    "floor": np.floor,
    "ceil": np.ceil,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e, "inf": math.inf}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def compile_formula(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression in ``s`` into a vectorised function.

    Supports ``+ - * / ^`` (``**`` also accepted), numeric constants, ``pi``,
    ``inf``, the functions ``floor ceil sqrt exp log abs min max`` and
    ``chi(a, b)``, the indicator of the open interval ``(a, b)``.
    """
    tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"unsupported syntax in formula {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"non-numeric constant in formula {text!r}")
        if isinstance(node, ast.Name) and node.id not in (
            {"s", "chi"} | set(_FUNCS) | set(_CONSTS)
        ):
            raise ValueError(f"unknown name {node.id!r} in formula {text!r}")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in set(_FUNCS) | {"chi"}
        ):
            raise ValueError(f"unsupported function call in formula {text!r}")
    code = compile(tree, "<formula>", "eval")

    def fn(s):
        s = np.asarray(s, dtype=float)

        def chi(a, b):
            return ((s > a) & (s < b)).astype(float)

        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = eval(code, {"__builtins__": {}}, {**_FUNCS, **_CONSTS, "chi": chi, "s": s})
        return np.broadcast_to(np.asarray(out, dtype=float), s.shape).copy()

    return fn


# }}}


# {{{ representation


@dataclass(frozen=True)
class Piece:
    """Formula on the open interval ``(lo, hi)`` with its end limits."""

    lo: float
    hi: float
    formula: str
    left_limit: float | None = None
    right_limit: float | None = None

    @cached_property
    def fn(self) -> Callable[[np.ndarray], np.ndarray]:
        return compile_formula(self.formula)


_GENERATOR_KINDS = ("reciprocal_integers", "integers")


@dataclass(frozen=True)
class BreakpointGenerator:
    """Countable family of jump points inside the pieces.

    ``reciprocal_integers`` yields ``1/k`` for ``k >= start``, truncated below
    ``cutoff``; ``integers`` yields ``k`` for ``k >= start``.
    """

    kind: str
    cutoff: float = 1e-4
    start: int = 2

    def __post_init__(self) -> None:
        if self.kind not in _GENERATOR_KINDS:
            raise UnrepresentableReaction(
                f"breakpoint family {self.kind!r} is not supported; only the "
                f"countable families {_GENERATOR_KINDS} can be declared, so "
                "discontinuity sets of positive measure are not representable"
            )

    @property
    def _kmax(self) -> float:
        if self.kind == "reciprocal_integers":
            return math.floor(1.0 / self.cutoff * (1 + 1e-12))
        return math.inf

    def in_range(self, lo: float, hi: float) -> np.ndarray:
        """Breakpoints in the closed range ``[lo, hi]``."""
        if hi < lo or hi <= 0:
            return np.empty(0)
        if self.kind == "reciprocal_integers":
            lo = max(lo, 1e-300)
            k0 = max(self.start, math.ceil(1 / hi - 1e-9))
            k1 = min(self._kmax, math.floor(1 / lo + 1e-9))
            if k1 < k0:
                return np.empty(0)
            b = 1.0 / np.arange(k1, k0 - 1, -1, dtype=float)
        else:
            k0 = max(self.start, math.ceil(lo))
            k1 = math.floor(hi)
            if k1 < k0:
                return np.empty(0)
            b = np.arange(k0, k1 + 1, dtype=float)
        return b[(b >= lo) & (b <= hi)]

    def nearest(self, s: np.ndarray, truncated: bool = True) -> np.ndarray:
        """Nearest family member to each ``s``.

        With ``truncated=False`` the reciprocal family is not cut off, which is
        what the true discontinuity set looks like near zero.
        """
        s = np.asarray(s, dtype=float)
        if self.kind == "reciprocal_integers":
            kmax = self._kmax if truncated else np.inf
            with np.errstate(divide="ignore"):
                inv = 1.0 / s
            cands = []
            for k in (np.floor(inv), np.ceil(inv)):
                k = np.clip(k, self.start, kmax)
                cands.append(1.0 / k)
            c0, c1 = cands
            return np.where(np.abs(s - c0) <= np.abs(s - c1), c0, c1)
        return np.maximum(np.round(s), self.start)

    def contains(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        b = self.nearest(s)
        return np.abs(s - b) <= 1e-12 * np.maximum(np.abs(s), 1e-300)


def _as_float(v) -> float | None:
    if v is None:
        return None
    if isinstance(v, str):
        return float(v.replace("infinity", "inf"))
    return float(v)


@dataclass(frozen=True, eq=False)
class Reaction:
    """Piecewise-continuous reaction ``f: (0, inf) -> [0, inf)``."""

    pieces: tuple[Piece, ...]
    point_values: Mapping[float, float]
    gamma: float | None = None
    generators: tuple[BreakpointGenerator, ...] = ()
    name: str = "custom"

    def __post_init__(self) -> None:
        pieces = tuple(self.pieces)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(
            self, "point_values", {float(k): float(v) for k, v in self.point_values.items()}
        )
        if not pieces:
            raise ValueError("a reaction needs at least one piece")
        if pieces[0].lo != 0.0 or pieces[-1].hi != math.inf:
            raise ValueError("pieces must cover (0, inf)")
        for a, b in zip(pieces[:-1], pieces[1:]):
            if a.hi != b.lo:
                raise ValueError(
                    f"pieces leave a gap or overlap between {a.hi} and {b.lo}"
                )
        for p in pieces:
            if not p.lo < p.hi:
                raise ValueError(f"empty piece ({p.lo}, {p.hi})")
        for b in self.breakpoints:
            if float(b) not in self.point_values:
                raise ValueError(f"missing point value at breakpoint {b}")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")

        # sample every piece: formulas must be finite and nonnegative
        for p in pieces:
            lo = p.lo if p.lo > 0 else 1e-8
            hi = p.hi if math.isfinite(p.hi) else max(10.0 * lo, 1e3)
            t = np.geomspace(lo, hi, 67)[1:-1]
            vals = p.fn(t)
            if np.any(vals < 0):
                raise ValueError(f"formula {p.formula!r} takes negative values")
        if any(v < 0 for v in self.point_values.values()):
            raise ValueError("point values must be nonnegative")

    # {{{ structure

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """Declared breakpoints between pieces."""
        return np.array([p.hi for p in self.pieces[:-1]], dtype=float)

    def breakpoints_in(self, lo: float, hi: float) -> np.ndarray:
        """All declared and generated breakpoints in ``[lo, hi]``, sorted."""
        parts = [self.breakpoints[(self.breakpoints >= lo) & (self.breakpoints <= hi)]]
        parts += [g.in_range(lo, hi) for g in self.generators]
        return np.unique(np.concatenate(parts))

    def discontinuity_distance(self, s: np.ndarray) -> np.ndarray:
        """Distance from each ``s`` to the discontinuity set (untruncated)."""
        s = np.asarray(s, dtype=float)
        dist = np.full(s.shape, np.inf)
        for b in self.breakpoints:
            dist = np.minimum(dist, np.abs(s - b))
        for g in self.generators:
            dist = np.minimum(dist, np.abs(s - g.nearest(s, truncated=False)))
        return dist

    def _piece_index(self, s: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breakpoints, s, side="right")

    # }}}

    # {{{ evaluation

    def formula(self, s) -> np.ndarray:
        """Piece formulas evaluated at ``s``, ignoring stored point values."""
        s = np.asarray(s, dtype=float)
        idx = self._piece_index(s)
        out = np.empty(s.shape)
        for i, p in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = p.fn(s[mask])
        return out

    def __call__(self, s) -> np.ndarray:
        return eval_f(self, s)

    def one_sided_limits(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Limits from the left and from the right at each ``s``."""
        s = np.asarray(s, dtype=float)
        left = self.formula(s)
        right = left.copy()

        for g in self.generators:
            mask = g.contains(s)
            if np.any(mask):
                left[mask] = self.formula(s[mask] * (1 - _NUDGE))
                right[mask] = self.formula(s[mask] * (1 + _NUDGE))

        for i, b in enumerate(self.breakpoints):
            mask = s == b
            if not np.any(mask):
                continue
            lp, rp = self.pieces[i], self.pieces[i + 1]
            left[mask] = (
                lp.right_limit if lp.right_limit is not None
                else lp.fn(np.array([b * (1 - _NUDGE)]))[0]
            )
            right[mask] = (
                rp.left_limit if rp.left_limit is not None
                else rp.fn(np.array([b * (1 + _NUDGE)]))[0]
            )
        return left, right

    # }}}

    # {{{ serialization

    def to_dict(self) -> dict:
        gens = [asdict(g) for g in self.generators]
        return {
            "name": self.name,
            "pieces": [
                {
                    "interval": [p.lo, "inf" if math.isinf(p.hi) else p.hi],
                    "formula": p.formula,
                    "left_limit": _json_num(p.left_limit),
                    "right_limit": _json_num(p.right_limit),
                }
                for p in self.pieces
            ],
            "point_values": {repr(k): v for k, v in self.point_values.items()},
            "gamma": self.gamma,
            "breakpoint_generator": gens if len(gens) != 1 else gens[0],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> Reaction:
        if "preset" in doc:
            return preset(doc["preset"], **doc.get("params", {}))
        pieces = tuple(
            Piece(
                float(pc["interval"][0]),
                _as_float(pc["interval"][1]),
                str(pc["formula"]),
                _as_float(pc.get("left_limit")),
                _as_float(pc.get("right_limit")),
            )
            for pc in doc["pieces"]
        )
        gen = doc.get("breakpoint_generator")
        if gen is None:
            gens = ()
        elif isinstance(gen, Mapping):
            gens = (BreakpointGenerator(**gen),)
        else:
            gens = tuple(BreakpointGenerator(**g) for g in gen)
        return cls(
            pieces,
            {float(k): float(v) for k, v in doc.get("point_values", {}).items()},
            None if doc.get("gamma") is None else float(doc["gamma"]),
            gens,
            str(doc.get("name", "custom")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> Reaction:
        return cls.from_dict(json.loads(text))

    # }}}


def _json_num(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _check_positive(s: np.ndarray) -> None:
    if np.any(~(s > 0)):
        raise ValueError("the reaction is defined for s > 0 only")


def eval_f(r: Reaction, s):
    """Value of the reaction; stored point values win at declared breakpoints."""
    arr = np.asarray(s, dtype=float)
    _check_positive(arr)
    out = r.formula(arr)
    for b, v in r.point_values.items():
        out[arr == b] = v
    return out if arr.ndim else float(out)


def eval_envelopes(r: Reaction, s):
    """Essential lower and upper envelopes ``(f_lower, f_upper)``.

    Point values never enter: they only modify ``f`` on a null set.
    """
    arr = np.asarray(s, dtype=float)
    _check_positive(arr)
    left, right = r.one_sided_limits(arr)
    lo, hi = np.minimum(left, right), np.maximum(left, right)
    if arr.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


# }}}


# {{{ presets


def preset(name: str, **params) -> Reaction:
    """Built-in reactions.

    ``paper_nonsingular``
        ``(g(s) + sigma) chi_(0,1)(s)`` with ``g`` a formula string (default 0).
    ``paper_singular``
        ``floor(1/s)^gamma chi_(0,1)(s) + lam floor(s)^(p-1) chi_[1,inf)(s)``.
    ``inverse_power``
        ``c s^-gamma`` on the whole half-line.
    ``constant``
        ``value`` everywhere.
    ``power``
        ``coef s^(p-1)``, used for the borderline sub-solution test.
    ``plateau_step``
        ``sigma`` on ``(0, level)`` and zero above, with ``f(level) = 0``; with
        ``kappa, tau > 0`` the value drops to ``kappa`` on ``(level - tau, level)``
        first, so the jump at ``level`` is from ``kappa`` to 0.
    """
    if name == "paper_nonsingular":
        sigma = float(params.get("sigma", 1.0))
        g = str(params.get("g", "0"))
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return Reaction(
            (Piece(0.0, 1.0, f"({g}) + {sigma!r}"), Piece(1.0, math.inf, "0", 0.0, 0.0)),
            {1.0: 0.0},
            None,
            (),
            name,
        )
    if name == "paper_singular":
        gamma = float(params.get("gamma", 0.5))
        lam = float(params.get("lam", 0.0))
        p = float(params.get("p", 2.0))
        cutoff = float(params.get("cutoff", 1e-4))
        gens = [BreakpointGenerator("reciprocal_integers", cutoff=cutoff, start=2)]
        if lam > 0:
            gens.append(BreakpointGenerator("integers", start=2))
        return Reaction(
            (
                Piece(0.0, 1.0, f"floor(1/s)^{gamma!r}", math.inf, 1.0),
                Piece(1.0, math.inf, f"{lam!r}*floor(s)^{p - 1!r}", lam, None),
            ),
            {1.0: lam},
            gamma,
            tuple(gens),
            name,
        )
    if name == "inverse_power":
        gamma = float(params.get("gamma", 0.5))
        c = float(params.get("c", 1.0))
        return Reaction((Piece(0.0, math.inf, f"{c!r}*s^(-{gamma!r})"),), {}, gamma, (), name)
    if name == "constant":
        value = float(params.get("value", 1.0))
        return Reaction((Piece(0.0, math.inf, repr(value)),), {}, None, (), name)
    if name == "power":
        coef = float(params["coef"])
        p = float(params.get("p", 2.0))
        return Reaction((Piece(0.0, math.inf, f"{coef!r}*s^({p - 1!r})"),), {}, None, (), name)
    if name == "plateau_step":
        sigma = float(params.get("sigma", 50.0))
        level = float(params.get("level", 1.0))
        kappa = float(params.get("kappa", 0.0))
        tau = float(params.get("tau", 0.0))
        if kappa > 0 and tau > 0:
            low = level - tau
            return Reaction(
                (
                    Piece(0.0, low, repr(sigma)),
                    Piece(low, level, repr(kappa)),
                    Piece(level, math.inf, "0"),
                ),
                {low: kappa, level: 0.0},
                None,
                (),
                name,
            )
        return Reaction(
            (Piece(0.0, level, repr(sigma)), Piece(level, math.inf, "0")),
            {level: 0.0},
            None,
            (),
            name,
        )
    raise ValueError(f"unknown preset {name!r}")


# }}}


# {{{ hypotheses


@dataclass
class HypothesisReport:
    """Sampling-based evidence for the six structural hypotheses on ``f``."""

    holds_i: bool
    holds_ii: bool
    holds_iii: bool
    holds_iv: bool
    holds_v: bool
    holds_vi: bool
    gamma_witness: dict
    delta_witness: dict
    sublinear_witness: dict
    M: float
    p: float
    lambda1: float
    notes: dict = field(default_factory=dict)

    @property
    def holds_all(self) -> bool:
        return all(
            (self.holds_i, self.holds_ii, self.holds_iii,
             self.holds_iv, self.holds_v, self.holds_vi)
        )

    @property
    def delta(self) -> float | None:
        return self.delta_witness.get("delta")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def _sample_net(r: Reaction, s_min: float, s_max: float, per_decade: int) -> np.ndarray:
    n = int(round(per_decade * math.log10(s_max / s_min))) + 1
    net = np.geomspace(s_min, s_max, n)
    return np.unique(np.concatenate([net, r.breakpoints_in(s_min, s_max)]))


def check_hypotheses(
    r: Reaction,
    p: float,
    lambda1: float,
    samples: int = 512,
    *,
    s_min: float = 1e-12,
    s_max: float = 1e4,
    r_fit: float = 1.0,
    margin: float = 1e-3,
) -> HypothesisReport:
    """Check the hypotheses on geometric sample nets (``samples`` per decade).

    Failed hypotheses are reported, not raised.  Structural malformation
    (negative or non-numeric values) raises :class:`ValueError`.
    """
    if not lambda1 > 0:
        raise ValueError("lambda1 must be positive")
    if not p > 1:
        raise ValueError("p must be > 1")
    net = _sample_net(r, s_min, s_max, samples)
    f_lo, f_hi = eval_envelopes(r, net)
    f_val = eval_f(r, net)
    if np.any(np.isnan(f_hi)) or np.any(f_lo < 0) or np.any(f_val < 0):
        raise ValueError("reaction takes negative or undefined values on the sample net")
    notes: dict[str, str] = {}

    # (i) local boundedness
    holds_i = bool(np.all(np.isfinite(f_hi)) and np.all(np.isfinite(f_val)))
    notes["i"] = "finite on every sample point of the net"

    # (ii) singular growth at zero
    gamma = r.gamma
    if gamma is None:
        gamma = 0.5
        notes["ii"] = "no singular exponent declared; witness uses gamma = 0.5"
    weighted = net**gamma * f_hi
    near = net <= r_fit
    c1 = float(np.max(weighted[near]))
    low = weighted[net <= 10 * s_min]
    ref = weighted[(net >= 1e3 * s_min) & (net <= 1e4 * s_min)]
    growth = 1000.0**0.01
    holds_ii = bool(np.isfinite(c1) and np.max(low) <= growth * np.max(ref) + 1e-300)
    notes.setdefault("ii", "s^gamma f(s) stays bounded over the lowest decades")

    # (iii) superlinear behaviour at zero
    ratio = f_lo / net ** (p - 1)
    ok = ratio >= lambda1 * (1 + margin)
    if ok[0]:
        bad = np.flatnonzero(~ok)
        if bad.size:
            delta = float(net[bad[0]])
            sampled_margin = float(np.min(ratio[: bad[0]]) / lambda1 - 1)
        else:
            delta = float(net[-1])
            sampled_margin = float(np.min(ratio) / lambda1 - 1)
        holds_iii = True
    else:
        delta, sampled_margin, holds_iii = None, float(ratio[0] / lambda1 - 1), False
    notes["iii"] = f"required f_lower(s) >= lambda1 (1 + {margin}) s^(p-1) near zero"

    # (iv) sublinear behaviour at infinity
    holds_iv, chat, R = False, math.inf, None
    R_cand = r_fit * 10.0 ** (np.arange(1, 4 * int(math.log10(s_max / r_fit)) - 3) / 4)
    up = f_hi / net ** (p - 1)
    for Rc in R_cand:
        c = float(np.max(up[net >= Rc]))
        if c < lambda1:
            holds_iv, chat, R = True, c, float(Rc)
            break
    if holds_iv and chat <= 0:
        chat = 1e-6 * lambda1
        notes["iv"] = "f vanishes at infinity; witness chat set to 1e-6 lambda1"
    notes.setdefault("iv", f"sampled up to s = {s_max:g}")

    # (v) discontinuities form a null set
    holds_v = True
    notes["v"] = "finitely many declared breakpoints plus countable generated families"

    # (vi) f_lower(s) = 0 forces f(s) = 0
    zero = f_lo == 0
    holds_vi = bool(np.all(f_val[zero] == 0))
    notes["vi"] = "checked at breakpoints and sampled zeros of the envelope"

    M = math.nan
    if R is not None:
        band = (net >= r_fit) & (net <= R)
        M = float(np.max(f_hi[band])) if np.any(band) else 0.0

    return HypothesisReport(
        holds_i, holds_ii, holds_iii, holds_iv, holds_v, holds_vi,
        {"gamma": gamma, "c1": c1, "r": r_fit},
        {"delta": delta, "margin": sampled_margin},
        {"chat": chat, "R": R},
        M, float(p), float(lambda1), notes,
    )


# }}}


# {{{ truncation and mollification


def truncate(r: Reaction, ubar_value, s):
    """``f(max(ubar_value, s))``; defined for every real ``s``."""
    ub = np.asarray(ubar_value, dtype=float)
    if np.any(~(ub > 0)):
        raise ValueError("the sub-solution value must be positive")
    return eval_f(r, np.maximum(ub, np.asarray(s, dtype=float)))


def _bump_mass() -> float:
    val, _ = integrate.quad(
        lambda t: math.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0, epsabs=1e-15, epsrel=1e-13,
        limit=200,
    )
    return val


_RHO_Z = 1.0 / _bump_mass()


def mollifier_rho(t):
    """Smooth even bump supported in ``[-1, 1]`` with unit mass."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    out = np.zeros(t.shape)
    ti = t[inside]
    out[inside] = _RHO_Z * np.exp(-1.0 / (1.0 - ti * ti))
    return out if t.ndim else float(out)


def mollifier_drho(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    out = np.zeros(t.shape)
    ti = t[inside]
    out[inside] = _RHO_Z * np.exp(-1.0 / (1.0 - ti * ti)) * (-2 * ti / (1 - ti * ti) ** 2)
    return out if t.ndim else float(out)


_GL10 = np.polynomial.legendre.leggauss(10)


def _check_eps(eps: float) -> None:
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")


def _window_cuts(r: Reaction, ubar_value: float, s: float, eps: float) -> np.ndarray:
    lo, hi = s - eps, s + eps
    cuts = [np.linspace(lo, hi, 9)]
    if lo < ubar_value < hi:
        cuts.append(np.array([ubar_value]))
    cuts.append(r.breakpoints_in(max(lo, ubar_value), hi))
    c = np.unique(np.concatenate(cuts))
    return c[(c >= lo) & (c <= hi)]


def mollify(r: Reaction, ubar_value: float, s: float, eps: float) -> float:
    """Convolution of the truncated reaction with the scaled bump at ``s``.

    The window ``[s - eps, s + eps]`` is split at every breakpoint of the
    truncated reaction (and into eight base panels); each smooth sub-interval
    gets a 10-point Gauss rule.  The result is normalised by the discrete
    kernel mass, so it is a convex combination of reaction values in the window.
    """
    _check_eps(eps)
    if not ubar_value > 0:
        raise ValueError("the sub-solution value must be positive")
    cuts = _window_cuts(r, ubar_value, s, eps)
    a, b = cuts[:-1], cuts[1:]
    x, w = _GL10
    t = (a + b)[:, None] / 2 + (b - a)[:, None] / 2 * x[None, :]
    wt = (b - a)[:, None] / 2 * w[None, :]
    kern = wt * mollifier_rho((s - t) / eps)
    g = r.formula(np.maximum(t, ubar_value))
    below = t <= ubar_value
    if np.any(below):
        g[below] = eval_f(r, ubar_value)
    return float(np.sum(kern * g) / np.sum(kern))


def primitive_G(r: Reaction, ubar_value: float, s: float, eps: float) -> float:
    """Integral of :func:`mollify` from 0 to ``s`` by adaptive quadrature."""
    _check_eps(eps)
    if s == 0:
        return 0.0
    lo, hi = min(0.0, s), max(0.0, s)
    marks = np.concatenate([
        [ubar_value - eps, ubar_value + eps],
        r.breakpoints_in(max(lo - eps, 1e-300), hi + eps) - eps,
        r.breakpoints_in(max(lo - eps, 1e-300), hi + eps) + eps,
    ])
    marks = marks[(marks > lo) & (marks < hi)]
    val, _ = integrate.quad(
        lambda t: mollify(r, ubar_value, t, eps), lo, hi,
        points=np.unique(marks)[:100] if marks.size else None,
        limit=400, epsabs=1e-12, epsrel=1e-10,
    )
    return val if s > 0 else -val


# }}}


# {{{ growth constants


@dataclass(frozen=True)
class GrowthConstants:
    r"""Constants of :math:`g_\varepsilon \le c_1 \underline u^{-\gamma} + c_2 |s|^{p-1} + c_3`."""

    c1: float
    c2: float
    c3: float
    gamma: float
    chat: float
    M: float
    r: float
    R: float
    ubar_sup: float
    lambda1: float
    p: float

    def bound(self, ubar_value, s):
        ub = np.asarray(ubar_value, dtype=float)
        return (
            self.c1 * ub ** (-self.gamma)
            + self.c2 * np.abs(s) ** (self.p - 1)
            + self.c3
        )


class _RangeMax:
    """Sparse table answering maxima of a sampled array over index ranges."""

    def __init__(self, values: np.ndarray):
        levels = [values]
        k = 1
        while 2 * k <= len(values):
            prev = levels[-1]
            levels.append(np.maximum(prev[:-k], prev[k:]))
            k *= 2
        self.levels = levels

    def query(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        length = j - i + 1
        lvl = np.floor(np.log2(np.maximum(length, 1))).astype(int)
        out = np.empty(i.shape)
        for L in np.unique(lvl):
            mask = lvl == L
            tab = self.levels[L]
            out[mask] = np.maximum(tab[i[mask]], tab[j[mask] - (1 << L) + 1])
        return out


def growth_constants(
    r: Reaction,
    p: float,
    lambda1: float,
    report: HypothesisReport | None = None,
    ubar_sup: float | None = None,
    samples: int = 512,
) -> GrowthConstants:
    """Constants of the growth bound on the mollified truncated reaction.

    ``c2 = (chat + lambda1) / 2`` and ``c3 = M + chat ubar_sup^(p-1) + C`` where
    ``C`` bounds ``chat (|s| + 1)^(p-1) - c2 |s|^(p-1)``.  The bound is
    validated on a net of ``(ubar, s)`` pairs against window suprema of the
    truncated reaction; a violation raises :class:`ArithmeticError`.
    """
    if report is None:
        report = check_hypotheses(r, p, lambda1, samples)
    if not (report.holds_i and report.holds_ii and report.holds_iii and report.holds_iv):
        raise ValueError("growth constants need hypotheses (i)-(iv)")
    if ubar_sup is None:
        ubar_sup = report.delta / 2

    gamma = report.gamma_witness["gamma"]
    c1 = report.gamma_witness["c1"] * (1 + 1e-9)
    r_fit = report.gamma_witness["r"]
    chat, R = report.sublinear_witness["chat"], report.sublinear_witness["R"]
    M = report.M * (1 + 1e-9)
    c2 = 0.5 * (chat + lambda1)

    def excess(s):
        return chat * (s + 1) ** (p - 1) - c2 * s ** (p - 1)

    grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e8, 2000)])
    j = int(np.argmax(excess(grid)))
    C = float(excess(grid[j]))
    if 0 < j < len(grid) - 1:
        res = optimize.minimize_scalar(
            lambda s: -excess(s), bounds=(grid[j - 1], grid[j + 1]), method="bounded"
        )
        C = max(C, float(-res.fun))
    C = max(C, 0.0) * (1 + 1e-9) + 1e-12
    c3 = M + chat * ubar_sup ** (p - 1) + C

    gc = GrowthConstants(c1, c2, c3, gamma, chat, M, r_fit, R, ubar_sup, lambda1, p)
    _validate_growth(r, gc, samples)
    return gc


def _validate_growth(r: Reaction, gc: GrowthConstants, samples: int) -> None:
    s_top = 1e4
    net = _sample_net(r, 1e-12, s_top, samples)
    f_lo, f_hi = eval_envelopes(r, net)
    f_hi = np.maximum(f_hi, eval_f(r, net))
    rmq = _RangeMax(f_hi)

    ub = np.geomspace(1e-8, gc.ubar_sup, 40)
    s_abs = np.geomspace(1e-8, s_top / 10, 200)
    s = np.concatenate([-s_abs[::-1], [0.0], s_abs])
    UB, S = np.meshgrid(ub, s, indexing="ij")
    UB, S = UB.ravel(), S.ravel()
    # eps -> 1 is the widest window; truncation maps it to [ubar, max(ubar, s + 1)]
    lo = UB
    hi = np.maximum(UB, S + 1.0)
    i = np.searchsorted(net, lo, side="left")
    jdx = np.searchsorted(net, hi, side="right") - 1
    i = np.clip(i, 0, len(net) - 1)
    jdx = np.clip(np.maximum(jdx, i), 0, len(net) - 1)
    sup = np.maximum(rmq.query(i, jdx), eval_f(r, UB))
    bound = gc.bound(UB, S)
    bad = sup > bound * (1 + 1e-12)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ArithmeticError(
            f"growth bound violated at ubar={UB[k]:g}, s={S[k]:g}: "
            f"sup g = {sup[k]:g} > {bound[k]:g}"
        )


# }}}


# {{{ vectorised regularisation used by the solver


class PrimitiveTable:
    """First and second primitives of the reaction formula.

    ``F(t) = int_0^t f`` and ``F2(t) = int_0^t F`` are tabulated on a geometric
    grid joined with every breakpoint, so that ``f`` is smooth between table
    nodes; partial intervals use an 8-point Gauss rule.
    """

    _x, _w = np.polynomial.legendre.leggauss(8)

    def __init__(self, r: Reaction, t_max: float = 8.0, t0: float = 1e-14, per_decade: int = 32):
        self.r = r
        self.t0 = t0
        self.per_decade = per_decade
        self.gamma = r.gamma or 0.0
        self._build(t_max)

    def _build(self, t_max: float) -> None:
        r = self.r
        n = int(math.ceil(self.per_decade * math.log10(t_max / self.t0))) + 1
        nodes = np.unique(
            np.concatenate([np.geomspace(self.t0, t_max, n), r.breakpoints_in(self.t0, t_max)])
        )
        a, b = nodes[:-1], nodes[1:]
        x8, w8 = np.polynomial.legendre.leggauss(8)
        y = (a + b)[:, None] / 2 + (b - a)[:, None] / 2 * x8
        hw = (b - a)[:, None] / 2 * w8
        fy = r.formula(y)
        dF = np.sum(hw * fy, axis=1)
        dF2_partial = np.sum(hw * (b[:, None] - y) * fy, axis=1)

        f0 = float(r.formula(np.array([self.t0]))[0])
        F0 = f0 * self.t0 / (1 - self.gamma)
        F20 = F0 * self.t0 / (2 - self.gamma)
        F = np.concatenate([[F0], F0 + np.cumsum(dF)])
        F2 = np.empty_like(F)
        F2[0] = F20
        F2[1:] = F20 + np.cumsum(F[:-1] * (b - a) + dF2_partial)
        self.nodes, self.F, self.F2 = nodes, F, F2
        self.t_max = t_max

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        tmax = float(np.max(t)) if t.size else 0.0
        if tmax > self.t_max:
            self._build(2.0 * tmax)
        small = t < self.t0
        tt = np.where(small, self.t0, t)
        j = np.clip(np.searchsorted(self.nodes, tt, side="right") - 1, 0, len(self.nodes) - 1)
        a = self.nodes[j]
        half = (tt - a) / 2
        y = (a + half)[..., None] + half[..., None] * self._x
        fy = self.r.formula(y)
        hw = half[..., None] * self._w
        F = self.F[j] + np.sum(hw * fy, axis=-1)
        F2 = self.F2[j] + self.F[j] * (tt - a) + np.sum(hw * (tt[..., None] - y) * fy, axis=-1)
        if np.any(small):
            ratio = np.where(small, np.maximum(t, 0.0) / self.t0, 1.0)
            F = np.where(small, self.F[0] * ratio ** (1 - self.gamma), F)
            F2 = np.where(small, self.F2[0] * ratio ** (2 - self.gamma), F2)
        return F, F2


class MollifiedReaction:
    r"""Vectorised :math:`g_\varepsilon`, its derivative and primitive.

    The convolution is written against the kernel derivative and the
    primitives of the truncated reaction,

    .. math::

        g_\varepsilon(s) = \frac{1}{\varepsilon}\int \Gamma(s - \varepsilon\tau)\rho'(\tau)\,d\tau,
        \qquad
        G_\varepsilon(s) = \frac{1}{\varepsilon}\int
            [\Gamma_2(s - \varepsilon\tau) - \Gamma_2(-\varepsilon\tau)]\rho'(\tau)\,d\tau,

    and discretised with one fixed composite Gauss rule in ``tau``.  With a
    fixed rule ``G`` is exactly the primitive of ``g`` and ``g`` is Lipschitz,
    so energies and gradients stay consistent for discontinuous reactions.
    """

    def __init__(self, r: Reaction, eps: float, panels: int = 32, order: int = 4,
                 table: PrimitiveTable | None = None):
        _check_eps(eps)
        self.r = r
        self.eps = float(eps)
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(-1.0, 1.0, panels + 1)
        a, b = edges[:-1], edges[1:]
        tau = ((a + b)[:, None] / 2 + (b - a)[:, None] / 2 * x).ravel()
        wt = ((b - a)[:, None] / 2 * w).ravel()
        drho = mollifier_drho(tau)
        norm = -np.sum(wt * drho * tau)
        self.tau = tau
        self.A = wt * drho / (self.eps * norm)
        self.table = table if table is not None else PrimitiveTable(r)
        self._shift_cache: tuple[bytes, np.ndarray] | None = None

    def _primitives(self, ub: np.ndarray, t: np.ndarray, need_second: bool):
        """Truncated primitives Gamma(t), Gamma2(t) for t broadcast against ub."""
        f_ub = eval_f(self.r, ub)
        F_ub, F2_ub = self.table(ub)
        above = t > ub
        ta = np.where(above, t, ub)
        F_t, F2_t = self.table(ta)
        gam = np.where(above, ub * f_ub + F_t - F_ub, t * f_ub)
        gam2 = None
        if need_second:
            gam2 = np.where(
                above,
                0.5 * ub**2 * f_ub + ub * f_ub * (t - ub) + F2_t - F2_ub - F_ub * (t - ub),
                0.5 * t**2 * f_ub,
            )
        return gam, gam2

    def g(self, ubar_value, s) -> np.ndarray:
        ub, s = np.broadcast_arrays(np.asarray(ubar_value, float), np.asarray(s, float))
        t = s[..., None] - self.eps * self.tau
        gam, _ = self._primitives(ub[..., None], t, False)
        return gam @ self.A

    def dg(self, ubar_value, s) -> np.ndarray:
        ub, s = np.broadcast_arrays(np.asarray(ubar_value, float), np.asarray(s, float))
        t = s[..., None] - self.eps * self.tau
        vals = self.r.formula(np.maximum(t, ub[..., None]))
        return vals @ self.A

    def G(self, ubar_value, s) -> np.ndarray:
        ub, s = np.broadcast_arrays(np.asarray(ubar_value, float), np.asarray(s, float))
        t = s[..., None] - self.eps * self.tau
        _, gam2 = self._primitives(ub[..., None], t, True)
        return gam2 @ self.A - self._shift(ub)

    def g_and_G(self, ubar_value, s) -> tuple[np.ndarray, np.ndarray]:
        ub, s = np.broadcast_arrays(np.asarray(ubar_value, float), np.asarray(s, float))
        t = s[..., None] - self.eps * self.tau
        gam, gam2 = self._primitives(ub[..., None], t, True)
        return gam @ self.A, gam2 @ self.A - self._shift(ub)

    def _shift(self, ub: np.ndarray) -> np.ndarray:
        # sum_q A_q Gamma2(-eps tau_q); depends on ubar only, so it is cached
        key = ub.tobytes()
        if self._shift_cache is not None and self._shift_cache[0] == key:
            return self._shift_cache[1]
        t0 = np.broadcast_to(-self.eps * self.tau, ub.shape + self.tau.shape)
        _, gam2 = self._primitives(ub[..., None], t0, True)
        out = gam2 @ self.A
        self._shift_cache = (key, out)
        return out


# }}}
