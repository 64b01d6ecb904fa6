"""Parameter extraction from I-V sweeps.

Small-signal quantities (g_m, mu_eff, R_SD, V_T), a damped least-squares
fit of the compact model, and the empirical piecewise-linear V_TG -> I map
used to drive the neuron.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (DegenerateFit, InputError, NonUniformBias, SbNeuroError, TooFewPoints,
                     ZeroVds)
from .io import check_schema
from .sbmodel import DeviceParams, IVCurve, drain_current

EPS0 = 8.8541878128e-12
I_FLOOR = 1e-14

FITTABLE = ("phi_b0", "gamma_tg", "gamma_bg", "v_t0", "n_ideality", "rho_sheet", "r_sd_ext")

# (lower, upper, finite-difference scale)
_BOUNDS = {
    "phi_b0": (0.0, 5.0, 0.01),
    "gamma_tg": (1e-6, 5.0, 0.01),
    "gamma_bg": (-5.0, 5.0, 0.01),
    "v_t0": (-50.0, 50.0, 0.01),
    "n_ideality": (1.0, 100.0, 0.01),
    "rho_sheet": (1e-6, 1e15, 1.0),
    "r_sd_ext": (0.0, 1e15, 1.0),
}

VCCS_SCHEMA = "vccs-v1"
FIT_SCHEMA = "fit-report-v1"


def oxide_capacitance(t_ox: float, eps_ox_rel: float) -> float:
    """Areal gate-oxide capacitance in F/m^2."""
    return eps_ox_rel * EPS0 / t_ox


@dataclass(frozen=True)
class ExtractedParams:
    gm_curve: tuple
    mu_eff_curve: tuple
    r_sd: float
    v_t_extracted: float
    c_ox_areal: float


def _transfer_arrays(curve: IVCurve):
    if len(curve) < 3:
        raise TooFewPoints(f"need >= 3 records, got {len(curve)}")
    v = curve.v_tg
    d = np.diff(v)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise InputError("v_tg must be strictly monotone")
    for name in ("v_bg", "v_ds"):
        col = curve.column(name)
        if np.any(col != col[0]):
            raise NonUniformBias(f"{name} varies within the transfer curve")
    return v, curve.i_d


def compute_gm(curve: IVCurve) -> list[tuple[float, float]]:
    """Transconductance dI_D/dV_TG at interior points.

    Uses the second-order three-point formula, which reduces to the plain
    central difference on a uniform grid.
    """
    v, i = _transfer_arrays(curve)
    g = np.gradient(i, v)[1:-1]
    return [(float(a), float(b)) for a, b in zip(v[1:-1], g)]


def extract_mobility(gm: Sequence[tuple[float, float]], geom: tuple[float, float, float],
                     v_ds: float) -> list[tuple[float, float]]:
    """Linear-region mobility mu = g_m * L / (W * C_ox * V_DS)."""
    if v_ds == 0:
        raise ZeroVds("mobility extraction needs v_ds != 0")
    l_g, w, c_ox = geom
    k = l_g / (w * c_ox * v_ds)
    return [(v, g * k) for v, g in gm]


def extract_rsd(low_vds_curves: Iterable[IVCurve], v_t: float) -> tuple[float, dict]:
    """Series resistance from the total-resistance extrapolation.

    Each curve is a low-V_DS output sweep at one V_TG. The total resistance
    (inverse of the fitted I-V slope) is regressed on 1/(V_TG - V_T); the
    intercept at infinite overdrive is R_SD.
    """
    curves = list(low_vds_curves)
    if len(curves) < 3:
        raise TooFewPoints("need >= 3 curves at distinct overdrives")
    x, r_tot = [], []
    for c in curves:
        if len(c) < 2:
            raise TooFewPoints("each curve needs >= 2 low-v_ds points")
        vtg = c.v_tg
        if np.any(vtg != vtg[0]):
            raise NonUniformBias("v_tg varies within an output curve")
        overdrive = vtg[0] - v_t
        if overdrive <= 0:
            raise InputError(f"v_tg={vtg[0]} is not above v_t={v_t}")
        g = np.polyfit(c.v_ds, c.i_d, 1)[0]
        if g <= 0:
            raise DegenerateFit(f"non-positive conductance at v_tg={vtg[0]}")
        x.append(1.0 / overdrive)
        r_tot.append(1.0 / g)
    x, r_tot = np.array(x), np.array(r_tot)
    if len(np.unique(x)) < 2:
        raise DegenerateFit("fewer than 2 distinct overdrives")
    slope, icpt = np.polyfit(x, r_tot, 1)
    resid = r_tot - (slope * x + icpt)
    ss_tot = np.sum((r_tot - r_tot.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    diag = {"slope": float(slope), "r2": float(r2),
            "inv_overdrive": x.tolist(), "r_tot": r_tot.tolist()}
    return float(icpt), diag


def extract_vt(curve: IVCurve) -> float:
    """Threshold by linear extrapolation of the tangent at maximum g_m."""
    v, i = _transfer_arrays(curve)
    order = np.argsort(v, kind="stable")
    v, i = v[order], i[order]
    g = np.gradient(i, v)[1:-1]
    k = int(np.argmax(g))  # first maximum = smallest v_tg
    if not g[k] > 0:
        raise DegenerateFit("transconductance is nowhere positive")
    return float(v[k + 1] - i[k + 1] / g[k])


def extract_all(transfer: IVCurve, low_vds_curves: Sequence[IVCurve],
                params: DeviceParams) -> ExtractedParams:
    c_ox = oxide_capacitance(params.t_ox, params.eps_ox_rel)
    gm = compute_gm(transfer)
    v_ds = float(transfer.v_ds[0])
    mu = extract_mobility(gm, (params.l_g, params.w, c_ox), v_ds)
    v_t = extract_vt(transfer)
    r_sd, _ = extract_rsd(low_vds_curves, v_t)
    return ExtractedParams(tuple(gm), tuple(mu), r_sd, v_t, c_ox)


# ---- compact-model fit ------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    fitted: DeviceParams
    residual_rms_log: float
    iterations: int
    converged: bool
    residuals: tuple
    initial_rms_log: float = math.nan
    cost_history: tuple = ()  # sum of squared residuals after each accepted step

    def to_dict(self) -> dict:
        return {
            "schema": FIT_SCHEMA,
            "fitted": self.fitted.to_dict(),
            "residual_rms_log": self.residual_rms_log,
            "initial_rms_log": self.initial_rms_log,
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": list(self.residuals),
            "cost_history": list(self.cost_history),
        }


def _log_residuals(curves, params):
    out = []
    for c in curves:
        for b, i_meas in c.records:
            i_mod = drain_current(params, b)
            out.append(math.log10(abs(i_mod) + I_FLOOR) - math.log10(abs(i_meas) + I_FLOOR))
    return np.array(out)


def fit_device(curves: Sequence[IVCurve], initial: DeviceParams,
               free: Iterable[str] = (), max_iter: int = 200, rtol: float = 1e-9) -> FitReport:
    """Levenberg-Marquardt fit of selected parameters in log-current space.

    Marquardt scaling (damping proportional to diag(J^T J)) makes the step
    invariant to parameter units. Damping is divided by 10 after an
    accepted step and multiplied by 10 after a rejected one; bounds are
    enforced by projecting each trial point.
    """
    curves = list(curves)
    if not curves or not any(len(c) for c in curves):
        raise InputError("fit_device needs at least one non-empty curve")
    free = list(dict.fromkeys(free))
    unknown = set(free) - set(FITTABLE)
    if unknown:
        raise InputError(f"cannot fit {sorted(unknown)}; choose from {FITTABLE}")

    lower = np.array([_BOUNDS[n][0] for n in free])
    upper = np.array([_BOUNDS[n][1] for n in free])
    if "phi_b0" in free:
        lower[free.index("phi_b0")] = initial.phi_min
    scale = np.array([_BOUNDS[n][2] for n in free])

    def build(x):
        return replace(initial, **{n: float(v) for n, v in zip(free, x)})

    def project(x):
        return np.minimum(np.maximum(x, lower), upper)

    x = project(np.array([getattr(initial, n) for n in free], dtype=float))
    r = _log_residuals(curves, build(x))
    cost = float(r @ r)
    initial_rms = math.sqrt(cost / len(r))
    if not free:
        return FitReport(initial, initial_rms, 0, True, tuple(r.tolist()), initial_rms, (cost,))

    lam = 1e-3
    history = [cost]
    converged = False
    it = 0
    while it < max_iter and not converged:
        it += 1
        jac = np.empty((len(r), len(free)))
        for k in range(len(free)):
            h = 1e-6 * max(abs(x[k]), scale[k])
            xp = x.copy()
            if xp[k] + h > upper[k]:
                h = -h
            xp[k] += h
            jac[:, k] = (_log_residuals(curves, build(xp)) - r) / h
        jtj = jac.T @ jac
        grad = jac.T @ r
        d = np.maximum(np.diag(jtj), 1e-30)
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(d), -grad)
            except np.linalg.LinAlgError:
                step = np.full_like(x, np.nan)
            x_new = project(x + step) if np.all(np.isfinite(step)) else x
            if np.array_equal(x_new, x):
                cost_new = math.inf
            else:
                try:
                    r_new = _log_residuals(curves, build(x_new))
                    cost_new = float(r_new @ r_new)
                except SbNeuroError:
                    cost_new = math.inf
            if cost_new < cost:
                rel = (cost - cost_new) / cost
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                lam = max(lam / 10.0, 1e-12)
                if rel < rtol or cost == 0.0:
                    converged = True
                break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left: stationary point
                converged = True
                break
    return FitReport(build(x), math.sqrt(cost / len(r)), it, converged,
                     tuple(r.tolist()), initial_rms, tuple(history))


# ---- empirical VCCS ---------------------------------------------------------

@dataclass(frozen=True)
class VccsModel:
    """Continuous piecewise-linear V_TG -> I_in map, clamped outside its knots."""

    knots: tuple
    valid_range: tuple = field(default=None)
    extrapolation: str = "clamp"

    def __post_init__(self):
        knots = tuple((float(v), float(i)) for v, i in self.knots)
        if len(knots) < 1:
            raise InputError("VccsModel needs at least one knot")
        v = np.array([k[0] for k in knots])
        i = np.array([k[1] for k in knots])
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
            raise InputError("VccsModel knots must be finite")
        if np.any(np.diff(v) <= 0):
            raise InputError("VccsModel knots must be strictly increasing in v_tg")
        if np.any(i < 0) or np.any(np.diff(i) < 0):
            raise InputError("VccsModel currents must be non-negative and non-decreasing")
        if self.extrapolation != "clamp":
            raise InputError("only clamp extrapolation is supported")
        object.__setattr__(self, "knots", knots)
        if self.valid_range is None:
            object.__setattr__(self, "valid_range", (knots[0][0], knots[-1][0]))
        else:
            object.__setattr__(self, "valid_range", tuple(float(x) for x in self.valid_range))

    @classmethod
    def constant(cls, i_in: float, v_range=(0.0, 1.0)) -> "VccsModel":
        return cls(((v_range[0], i_in), (v_range[1], i_in)))

    @property
    def v(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def i(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    @property
    def i_max(self) -> float:
        return self.knots[-1][1]

    def __call__(self, v_tg):
        out = np.interp(v_tg, self.v, self.i)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {"schema": VCCS_SCHEMA, "knots": [list(k) for k in self.knots],
                "valid_range": list(self.valid_range), "extrapolation": self.extrapolation}

    @classmethod
    def from_dict(cls, doc: dict) -> "VccsModel":
        check_schema(doc, VCCS_SCHEMA, "vccs model")
        try:
            return cls(tuple(tuple(k) for k in doc["knots"]),
                       tuple(doc["valid_range"]) if "valid_range" in doc else None,
                       doc.get("extrapolation", "clamp"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad vccs model: {exc}") from exc


def isotonic(y: Sequence[float]) -> np.ndarray:
    """Least-squares non-decreasing projection (pool adjacent violators)."""
    blocks = []  # [mean, weight]
    for val in y:
        blocks.append([float(val), 1.0])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2 = blocks.pop()
            m1, w1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2])
    return np.concatenate([np.full(int(w), m) for m, w in blocks])


def fit_vccs(curve: IVCurve, n_knots: int) -> VccsModel:
    """Least-squares piecewise-linear fit on uniformly spaced knots.

    The knot currents are then projected onto non-decreasing, non-negative
    values so the source can only speed the neuron up as V_TG rises.
    """
    if n_knots < 2 or len(curve) < n_knots:
        raise TooFewPoints(f"need n_knots >= 2 and >= n_knots records (got {len(curve)}, {n_knots})")
    v, i = curve.v_tg, curve.i_d
    knots = np.linspace(v.min(), v.max(), n_knots)
    basis = np.column_stack([np.interp(v, knots, np.eye(n_knots)[k]) for k in range(n_knots)])
    coef, *_ = np.linalg.lstsq(basis, i, rcond=None)
    coef = np.maximum(isotonic(coef), 0.0)
    return VccsModel(tuple(zip(knots.tolist(), coef.tolist())), (float(knots[0]), float(knots[-1])))
