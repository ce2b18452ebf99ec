"""Potential terms sigma(x, t) for the free-boundary energy, and their moduli.

A potential is a base family (power-law, indicator, step table, ...) together
with an accumulated transform record produced by rescaling and affine
conjugation.  Every spec evaluates as

    sigma(x, t) = prefactor * base(t_scale * t + t_shift + x_grad . x)

which is closed under both transform operations, so the record stays O(1).
The working range for the t variable is [-2, 2]; solutions are normalized to
[0, 1] and competitors stay within the margin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

# Working range for the t variable; sup norms of parametric families are
# closed-form suprema over this interval.
T_MIN, T_MAX = -2.0, 2.0

FAMILIES = (
    "zero",
    "obstacle",
    "alt_phillips",
    "alt_caffarelli",
    "two_phase_alt_phillips",
    "step_bounded",
    "log_modulus",
    "custom",
)


@dataclass(frozen=True)
class AffineMap:
    """Affine map ell(y) = value + gradient . y."""

    value: float
    gradient: tuple[float, ...]

    def __call__(self, y: Sequence[float]) -> float:
        return self.value + float(np.dot(self.gradient, np.asarray(y)[: len(self.gradient)]))

    def is_zero(self) -> bool:
        return self.value == 0.0 and all(g == 0.0 for g in self.gradient)


@dataclass(frozen=True)
class PotentialFlags:
    one_phase: bool
    continuous: bool
    vanishes_at_zero: bool


@dataclass(frozen=True)
class Transform:
    """Accumulated rescale/conjugation record; identity when all neutral.

    ``centers`` keeps the sequence of recentering points for provenance; the
    evaluation only needs the four algebraic fields.
    """

    prefactor: float = 1.0
    t_scale: float = 1.0
    t_shift: float = 0.0
    x_grad: tuple[float, ...] = ()
    centers: tuple[tuple[float, ...], ...] = ()

    def is_identity(self) -> bool:
        return (
            self.prefactor == 1.0
            and self.t_scale == 1.0
            and self.t_shift == 0.0
            and not any(self.x_grad)
        )


_IDENTITY = Transform()


@dataclass(frozen=True)
class PotentialSpec:
    """A sigma-function descriptor: family + parameters + transform record."""

    family: str
    params: dict
    flags: PotentialFlags
    sup_norm: float
    transform: Transform = _IDENTITY

    @property
    def x_dependent(self) -> bool:
        return any(self.x_grad)

    @property
    def x_grad(self) -> tuple[float, ...]:
        return self.transform.x_grad

    def __call__(self, x: Sequence[float] | None, t: float) -> float:
        return eval_potential(self, x, t)

    def to_json(self) -> dict:
        obj = {
            "family": self.family,
            "params": dict(self.params),
            "flags": {
                "one_phase": self.flags.one_phase,
                "continuous": self.flags.continuous,
                "vanishes_at_zero": self.flags.vanishes_at_zero,
            },
        }
        if not self.transform.is_identity() or self.transform.centers:
            obj["transform"] = {
                "prefactor": self.transform.prefactor,
                "t_scale": self.transform.t_scale,
                "t_shift": self.transform.t_shift,
                "x_grad": list(self.transform.x_grad),
                "centers": [list(c) for c in self.transform.centers],
            }
            obj["sup_norm"] = self.sup_norm
        return obj


def from_json(obj: dict | str) -> PotentialSpec:
    """Rebuild a PotentialSpec from its JSON object (see schemas/potential.schema.json)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or "family" not in obj:
        raise ValueError("potential JSON must be an object with a 'family' key")
    family = obj["family"]
    params = obj.get("params", {})
    spec = make(family, **params)
    tr = obj.get("transform")
    if tr is not None:
        transform = Transform(
            prefactor=float(tr.get("prefactor", 1.0)),
            t_scale=float(tr.get("t_scale", 1.0)),
            t_shift=float(tr.get("t_shift", 0.0)),
            x_grad=tuple(float(g) for g in tr.get("x_grad", ())),
            centers=tuple(tuple(float(v) for v in c) for c in tr.get("centers", ())),
        )
        flags = _transformed_flags(spec, transform)
        sup = float(obj.get("sup_norm", spec.sup_norm * transform.prefactor))
        spec = replace(spec, transform=transform, flags=flags, sup_norm=sup)
    return spec


# ---------------------------------------------------------------------------
# constructors

def make(family: str, **params) -> PotentialSpec:
    """Construct a base-family spec by name (JSON entry point)."""
    builders = {
        "zero": zero,
        "obstacle": obstacle,
        "alt_phillips": alt_phillips,
        "alt_caffarelli": alt_caffarelli,
        "two_phase_alt_phillips": two_phase_alt_phillips,
        "step_bounded": step_bounded,
        "log_modulus": log_modulus,
        "custom": custom,
    }
    if family not in builders:
        raise ValueError(f"unknown potential family {family!r}; expected one of {FAMILIES}")
    return builders[family](**params)


def zero() -> PotentialSpec:
    return PotentialSpec("zero", {}, PotentialFlags(True, True, True), 0.0)


def obstacle() -> PotentialSpec:
    """sigma(t) = t_+ (quadratic growth of minimizers at the free boundary)."""
    return PotentialSpec("obstacle", {}, PotentialFlags(True, True, True), T_MAX)


def alt_phillips(gamma: float, lam: float = 1.0) -> PotentialSpec:
    """sigma(t) = lam * t_+^gamma with gamma in (0, 2)."""
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"alt_phillips exponent must lie in (0, 2), got {gamma}")
    if lam <= 0.0:
        raise ValueError("alt_phillips weight must be positive")
    sup = lam * T_MAX**gamma
    return PotentialSpec(
        "alt_phillips", {"gamma": gamma, "lam": lam}, PotentialFlags(True, True, True), sup
    )


def alt_caffarelli(lam: float = 1.0) -> PotentialSpec:
    """sigma(t) = lam * chi_{t > 0} (cavity problem; linear growth at the FB)."""
    if lam <= 0.0:
        raise ValueError("alt_caffarelli weight must be positive")
    return PotentialSpec(
        "alt_caffarelli", {"lam": lam}, PotentialFlags(True, False, True), lam
    )


def two_phase_alt_phillips(gamma: float, lam_minus: float, lam_plus: float) -> PotentialSpec:
    """sigma(t) = lam_minus * t_-^gamma + lam_plus * t_+^gamma (sign-changing phase)."""
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"two-phase exponent must lie in (0, 2), got {gamma}")
    if lam_minus <= 0.0 or lam_plus <= 0.0:
        raise ValueError("two-phase weights must be positive")
    sup = max(lam_minus, lam_plus) * (-T_MIN) ** gamma
    return PotentialSpec(
        "two_phase_alt_phillips",
        {"gamma": gamma, "lam_minus": lam_minus, "lam_plus": lam_plus},
        PotentialFlags(False, True, True),
        sup,
    )


def step_bounded(breakpoints: Sequence[float], values: Sequence[float]) -> PotentialSpec:
    """Right-continuous step function: sigma(t) = values[i+1] on [breakpoints[i], breakpoints[i+1])."""
    bks = [float(b) for b in breakpoints]
    vals = [float(v) for v in values]
    if len(vals) != len(bks) + 1:
        raise ValueError("step_bounded needs len(values) == len(breakpoints) + 1")
    if any(b2 <= b1 for b1, b2 in zip(bks, bks[1:])):
        raise ValueError("step_bounded breakpoints must be strictly increasing")
    sig0 = vals[int(np.searchsorted(bks, 0.0, side="right"))]
    one_phase = all(
        vals[i] == sig0 for i in range(int(np.searchsorted(bks, 0.0, side="right")) + 1)
    )
    return PotentialSpec(
        "step_bounded",
        {"breakpoints": bks, "values": vals},
        PotentialFlags(one_phase, len(set(vals)) <= 1, sig0 == 0.0),
        max(abs(v) for v in vals),
    )


def log_modulus(delta_bar: float) -> PotentialSpec:
    """sigma(t) = delta_bar / (1 + ln(1/t_+)): continuous but not Dini at 0."""
    if delta_bar < 0.0:
        raise ValueError("log_modulus amplitude must be nonnegative")
    sup = delta_bar / (1.0 + math.log(1.0 / T_MAX))
    return PotentialSpec(
        "log_modulus", {"delta_bar": delta_bar}, PotentialFlags(True, True, True), sup
    )


def custom(breakpoints: Sequence[float], values: Sequence[float]) -> PotentialSpec:
    """Piecewise-linear interpolation of a sampled table (clamped outside)."""
    bks = [float(b) for b in breakpoints]
    vals = [float(v) for v in values]
    if len(bks) != len(vals) or len(bks) < 2:
        raise ValueError("custom needs matching breakpoint/value lists of length >= 2")
    if any(b2 <= b1 for b1, b2 in zip(bks, bks[1:])):
        raise ValueError("custom breakpoints must be strictly increasing")
    sig0 = float(np.interp(0.0, bks, vals))
    one_phase = all(v == sig0 for b, v in zip(bks, vals) if b <= 0.0)
    return PotentialSpec(
        "custom",
        {"breakpoints": bks, "values": vals},
        PotentialFlags(one_phase, True, sig0 == 0.0),
        max(abs(v) for v in vals),
    )


# ---------------------------------------------------------------------------
# evaluation

def _eval_base(family: str, params: dict, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if family == "zero":
        return np.zeros_like(t)
    if family == "obstacle":
        return np.maximum(t, 0.0)
    if family == "alt_phillips":
        return params["lam"] * np.maximum(t, 0.0) ** params["gamma"]
    if family == "alt_caffarelli":
        return params["lam"] * (t > 0.0).astype(float)
    if family == "two_phase_alt_phillips":
        g = params["gamma"]
        return (
            params["lam_minus"] * np.maximum(-t, 0.0) ** g
            + params["lam_plus"] * np.maximum(t, 0.0) ** g
        )
    if family == "step_bounded":
        idx = np.searchsorted(params["breakpoints"], t, side="right")
        return np.asarray(params["values"], dtype=float)[idx]
    if family == "log_modulus":
        # saturate above the working range so the formula stays defined
        tp = np.minimum(np.maximum(t, 0.0), T_MAX)
        out = np.zeros_like(tp)
        pos = tp > 0.0
        out[pos] = params["delta_bar"] / (1.0 - np.log(tp[pos]))
        return out
    if family == "custom":
        return np.interp(t, params["breakpoints"], params["values"])
    raise ValueError(f"unknown family {family!r}")


def eval_potential(spec: PotentialSpec, x: Sequence[float] | None, t: float) -> float:
    """Evaluate sigma(x, t); total on finite inputs."""
    return float(eval_potential_array(spec, None if x is None else np.asarray(x, float), t))


def _slope_base(family: str, params: dict, t: np.ndarray) -> np.ndarray:
    """d sigma / dt where defined; 0 across jumps (subgradient choice)."""
    t = np.asarray(t, dtype=float)
    if family in ("zero", "alt_caffarelli", "step_bounded"):
        return np.zeros_like(t)
    if family == "obstacle":
        return (t > 0.0).astype(float)
    if family == "alt_phillips":
        g, lam = params["gamma"], params["lam"]
        pos = t > 0.0
        return np.where(pos, g * lam * np.where(pos, t, 1.0) ** (g - 1.0), 0.0)
    if family == "two_phase_alt_phillips":
        g = params["gamma"]
        pos = t > 0.0
        neg = t < 0.0
        out = np.zeros_like(t)
        out = np.where(pos, g * params["lam_plus"] * np.where(pos, t, 1.0) ** (g - 1.0), out)
        out = np.where(neg, -g * params["lam_minus"] * np.where(neg, -t, 1.0) ** (g - 1.0), out)
        return out
    if family == "log_modulus":
        tp = np.minimum(np.maximum(t, 0.0), T_MAX)
        pos = (tp > 0.0) & (t < T_MAX)
        safe = np.where(pos, tp, 1.0)
        return np.where(pos, params["delta_bar"] / (safe * (1.0 - np.log(safe)) ** 2), 0.0)
    if family == "custom":
        bks = np.asarray(params["breakpoints"], dtype=float)
        vs = np.asarray(params["values"], dtype=float)
        slopes = np.concatenate([[0.0], np.diff(vs) / np.diff(bks), [0.0]])
        return slopes[np.searchsorted(bks, t, side="right")]
    raise ValueError(f"unknown family {family!r}")


def eval_potential_slope_array(
    spec: PotentialSpec, x: np.ndarray | None, t: np.ndarray | float
) -> np.ndarray:
    """Vectorized d sigma(x, t) / dt; 0 at jumps, unbounded derivatives raw."""
    tr = spec.transform
    arg = tr.t_scale * np.asarray(t, dtype=float) + tr.t_shift
    if any(tr.x_grad):
        if x is None:
            raise ValueError("x-dependent potential requires point coordinates")
        g = np.asarray(tr.x_grad, dtype=float)
        arg = arg + np.asarray(x, dtype=float)[..., : g.size] @ g
    return tr.prefactor * tr.t_scale * _slope_base(spec.family, spec.params, arg)


def eval_potential_array(
    spec: PotentialSpec, x: np.ndarray | None, t: np.ndarray | float
) -> np.ndarray:
    """Vectorized evaluation.

    ``x`` is an (..., dim) coordinate array, or None for x-independent specs;
    broadcasting against ``t`` follows numpy rules.
    """
    tr = spec.transform
    arg = tr.t_scale * np.asarray(t, dtype=float) + tr.t_shift
    if any(tr.x_grad):
        if x is None:
            raise ValueError("x-dependent potential requires point coordinates")
        g = np.asarray(tr.x_grad, dtype=float)
        arg = arg + np.asarray(x, dtype=float)[..., : g.size] @ g
    return tr.prefactor * _eval_base(spec.family, spec.params, arg)


# ---------------------------------------------------------------------------
# transforms

def rescale_potential(spec: PotentialSpec, x0: Sequence[float], a: float, b: float) -> PotentialSpec:
    """Zoom transform: the returned spec evaluates to (a/b)^2 sigma(x0 + a x, b t).

    The cached sup norm is updated multiplicatively by (a/b)^2, matching the
    L-infinity bookkeeping of the rescaled functional.
    """
    if a <= 0.0 or b <= 0.0:
        raise ValueError("rescale factors a, b must be positive")
    return _compose(spec, x0, a, b, None)


def affine_conjugate_potential(
    spec: PotentialSpec, x0: Sequence[float], a: float, b: float, ell: AffineMap
) -> PotentialSpec:
    """Conjugation by an affine subtraction from the competitor class.

    The returned spec evaluates to b^{-2} a^2 sigma(x0 + a x, b t + ell(a x));
    it pairs with the field transform w(x) = (u(x0 + a x) - ell(a x)) / b.  The
    transform record becomes x-dependent whenever ell has a nonzero gradient.
    """
    if a <= 0.0 or b <= 0.0:
        raise ValueError("conjugation factors a, b must be positive")
    return _compose(spec, x0, a, b, ell)


def _compose(
    spec: PotentialSpec, x0: Sequence[float], a: float, b: float, ell: AffineMap | None
) -> PotentialSpec:
    tr = spec.transform
    x0t = tuple(float(v) for v in np.atleast_1d(np.asarray(x0, dtype=float)))
    g_old = np.asarray(tr.x_grad, dtype=float)
    shift = tr.t_shift + float(np.dot(g_old, np.asarray(x0t)[: g_old.size]))
    dim = max(len(x0t), g_old.size, len(ell.gradient) if ell is not None else 0)
    g_new = np.zeros(dim)
    g_new[: g_old.size] += g_old
    if ell is not None:
        shift += tr.t_scale * ell.value
        lg = np.asarray(ell.gradient, dtype=float)
        g_new[: lg.size] += tr.t_scale * lg
    g_new *= a
    transform = Transform(
        prefactor=(a / b) ** 2 * tr.prefactor,
        t_scale=tr.t_scale * b,
        t_shift=shift,
        x_grad=tuple(g_new) if g_new.any() else (),
        centers=tr.centers + (x0t,),
    )
    new = replace(
        spec,
        transform=transform,
        sup_norm=(a / b) ** 2 * spec.sup_norm,
    )
    return replace(new, flags=_transformed_flags(spec, transform))


def _transformed_flags(spec: PotentialSpec, transform: Transform) -> PotentialFlags:
    base = spec.flags
    if spec.family == "zero":
        return base
    shifted = transform.t_shift != 0.0 or any(transform.x_grad)
    return PotentialFlags(
        one_phase=base.one_phase and not shifted,
        continuous=base.continuous,
        vanishes_at_zero=base.vanishes_at_zero and not shifted,
    )


def normalize_for_flatness(
    spec: PotentialSpec, u_sup: float, delta: float
) -> tuple[float, PotentialSpec]:
    """Flatness normalization: scale = u_sup + sqrt(sup_norm / delta).

    Returns the scale and the half-zoom rescale (a = 1/2, b = scale), whose
    sup norm is at most delta whenever u_sup >= 0.  A fully degenerate input
    (zero field, zero potential) normalizes with scale 1.
    """
    if delta <= 0.0:
        raise ValueError("flatness threshold delta must be positive")
    if u_sup < 0.0:
        raise ValueError("u_sup must be nonnegative")
    scale = u_sup + math.sqrt(spec.sup_norm / delta)
    if scale == 0.0:
        scale = 1.0
    dim = max(1, len(spec.transform.x_grad))
    return scale, rescale_potential(spec, (0.0,) * dim, 0.5, scale)


# ---------------------------------------------------------------------------
# moduli of continuity

@dataclass(frozen=True)
class ModulusDescriptor:
    """Nondecreasing m with m(0) = 0, evaluable on [0, 1] (and beyond).

    kinds: power (amplitude * t^gamma), log (amplitude / (1 + ln(1/t))),
    sampled (piecewise-linear monotone table), zero.
    """

    kind: str
    amplitude: float = 0.0
    gamma: float = 1.0
    table_t: tuple[float, ...] = ()
    table_m: tuple[float, ...] = ()
    lip: float = math.inf  # slope cap for sampled majorants

    def __call__(self, t: np.ndarray | float) -> np.ndarray | float:
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "power":
            out = self.amplitude * t**self.gamma
        elif self.kind == "log":
            out = np.zeros_like(t)
            pos = t > 0.0
            out = np.where(pos, self.amplitude / (1.0 - np.log(np.where(pos, t, 1.0))), 0.0)
        elif self.kind == "sampled":
            out = np.minimum(np.interp(t, self.table_t, self.table_m), self.lip * t)
        else:
            raise ValueError(f"unknown modulus kind {self.kind!r}")
        return out if isinstance(out, np.ndarray) and out.ndim else float(out)

    def log2_eval(self, log2_t: float) -> float:
        """log2(m(2^log2_t)), stable for arguments far below float underflow."""
        if self.kind == "zero" or self.amplitude == 0.0:
            return -math.inf
        if self.kind == "power":
            return math.log2(self.amplitude) + self.gamma * log2_t
        if self.kind == "log":
            return math.log2(self.amplitude) - math.log2(1.0 - math.log(2.0) * log2_t)
        if self.kind == "sampled":
            t0 = self.table_t[1] if len(self.table_t) > 1 else 0.0
            if t0 > 0.0 and log2_t < math.log2(t0):
                # linear leading segment through the origin
                slope = min(self.table_m[1] / t0, self.lip)
                if slope == 0.0:
                    return -math.inf
                return math.log2(slope) + log2_t
            val = float(self(2.0**log2_t))
            return math.log2(val) if val > 0.0 else -math.inf
        raise ValueError(f"unknown modulus kind {self.kind!r}")


def power_modulus(gamma: float, amplitude: float) -> ModulusDescriptor:
    if gamma <= 0.0:
        raise ValueError("power modulus exponent must be positive")
    return ModulusDescriptor("power", amplitude=amplitude, gamma=gamma)


def log_modulus_descriptor(amplitude: float) -> ModulusDescriptor:
    return ModulusDescriptor("log", amplitude=amplitude)


def zero_modulus() -> ModulusDescriptor:
    return ModulusDescriptor("zero")


def sampled_modulus(table_t: Sequence[float], table_m: Sequence[float], lip: float = math.inf) -> ModulusDescriptor:
    ts = tuple(float(t) for t in table_t)
    ms = tuple(float(m) for m in table_m)
    if len(ts) != len(ms) or len(ts) < 2 or ts[0] != 0.0 or ms[0] != 0.0:
        raise ValueError("sampled modulus table must start at (0, 0)")
    if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])) or any(m2 < m1 for m1, m2 in zip(ms, ms[1:])):
        raise ValueError("sampled modulus table must be increasing in t and nondecreasing in m")
    return ModulusDescriptor("sampled", table_t=ts, table_m=ms, lip=lip)


def potential_modulus(spec: PotentialSpec) -> ModulusDescriptor:
    """Modulus of continuity of an x-independent continuous potential on [0, 1].

    Parametric families map to their exact parametric modulus; sampled tables
    map to the least nondecreasing majorant of measured oscillations.  For
    power exponents above 1 the returned descriptor is the generalized power
    modulus used by the renormalization recursion (it bounds oscillations only
    in the concave range gamma <= 1).
    """
    if not spec.flags.continuous:
        raise ValueError(f"potential family {spec.family!r} is not continuous")
    if spec.x_dependent:
        raise ValueError("potential_modulus requires an x-independent spec")
    tr = spec.transform
    p, s = tr.prefactor, tr.t_scale
    if spec.family == "zero":
        return zero_modulus()
    if spec.family == "obstacle":
        return power_modulus(1.0, p * s)
    if spec.family == "alt_phillips":
        return power_modulus(spec.params["gamma"], p * spec.params["lam"] * s ** spec.params["gamma"])
    if spec.family == "two_phase_alt_phillips":
        lam = max(spec.params["lam_minus"], spec.params["lam_plus"])
        return power_modulus(spec.params["gamma"], p * lam * s ** spec.params["gamma"])
    if spec.family == "log_modulus":
        if s > 1.0:
            raise ValueError("log-modulus descriptor supports t_scale <= 1 only")
        return log_modulus_descriptor(p * spec.params["delta_bar"])
    if spec.family == "custom":
        return _custom_modulus(spec)
    raise ValueError(f"no modulus for family {spec.family!r}")


def _custom_modulus(spec: PotentialSpec, samples: int = 2048) -> ModulusDescriptor:
    """Least nondecreasing majorant of sampled oscillations on [0, 1]."""
    ts = np.linspace(0.0, 1.0, samples + 1)
    tr = spec.transform
    vals = tr.prefactor * _eval_base(spec.family, spec.params, tr.t_scale * ts + tr.t_shift)
    gap_osc = np.zeros(samples + 1)
    for g in range(1, samples + 1):
        gap_osc[g] = max(gap_osc[g - 1], float(np.max(np.abs(vals[g:] - vals[:-g]))))
    # shift up one gap so linear interpolation majorizes intermediate gaps;
    # the slope cap keeps the leading segment tight near 0
    table_m = np.concatenate([[0.0], gap_osc[2:], [gap_osc[-1]]])
    bks = np.asarray(spec.params["breakpoints"], dtype=float)
    vs = np.asarray(spec.params["values"], dtype=float)
    slopes = np.abs(np.diff(vs) / np.diff(bks))
    lip = tr.prefactor * float(np.max(slopes)) * abs(tr.t_scale) if slopes.size else 0.0
    return sampled_modulus(tuple(ts), tuple(np.maximum.accumulate(table_m)), lip=lip)
