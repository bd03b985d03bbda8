"""
Scenario registry, configuration validation and batch execution.

A configuration is a flat JSON object.  ``scenario`` picks an entry of
:data:`SCENARIOS`; every other key must appear in that scenario's schema
(or in :data:`COMMON`).  Refinement studies (``refine: K``) run ``K`` grids
with ``N`` doubling and report convergence slopes.
"""

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import __version__
from .constraint import S as S_SYM, build_normal_form, constraint_residual, get_family, \
    registry as FAMILIES, u_profile
from .diagnostics import REPORT_FIELDS, DiagnosticsError, DiagnosticsReport, convergence_order, \
    residual_suite
from .evolver import EvolutionError, evolve
from .grid import make_grid
from .initial_data import assemble_state, ppwave_state

__all__ = [
    "ConfigError",
    "Param",
    "Scenario",
    "SCENARIOS",
    "COMMON",
    "validate_config",
    "config_hash",
    "apply_overrides",
    "run_scenario",
    "RunOutcome",
]


class ConfigError(ValueError):
    pass


@dataclass
class Param:
    type: type
    default: object
    doc: str
    choices: tuple = None


@dataclass
class Scenario:
    name: str
    doc: str
    params: dict
    runner: object = None


COMMON = {
    "out": Param(str, "out", "output directory"),
    "selftest": Param(bool, False, "exit with code 4 when a built-in check fails"),
    "seed": Param(int, 0, "seed for randomised checks"),
}

_EVOL = {
    "cfl": Param(float, 0.25, "Courant factor, dt = cfl * dx / c_max"),
    "sigma": Param(float, 0.0, "Kreiss-Oliger dissipation strength"),
    "diag_every": Param(int, 1, "steps between diagnostics rows"),
    "checkpoint_every": Param(int, 0, "steps between state_<step>.bin files (0: final state only)"),
    "lam": Param(float, 1.0, "lapse lam of the background at t = 0"),
    "lamdot": Param(float, 0.0, "d_t lam of the background"),
}


def _p(**kw):
    out = dict(_EVOL)
    out.update(kw)
    return out


# ---------------------------------------------------------------- config


def _coerce(name, p, value):
    if p.type is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if p.type is list:
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
    elif not isinstance(value, p.type) or (p.type is int and isinstance(value, bool)):
        raise ConfigError(f"{name}: expected {p.type.__name__}, got {value!r}")
    if p.choices is not None:
        vals = value if p.type is list else [value]
        bad = [v for v in vals if v not in p.choices]
        if bad:
            raise ConfigError(f"{name}: {bad[0]!r} not in {list(p.choices)}")
    return value


def validate_config(cfg):
    """Fill defaults and type-check; raises :class:`ConfigError`."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    name = cfg.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    schema = dict(COMMON)
    schema.update(SCENARIOS[name].params)
    out = {"scenario": name}
    for key, value in cfg.items():
        if key == "scenario":
            continue
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for scenario {name!r}")
        out[key] = _coerce(key, schema[key], value)
    for key, p in schema.items():
        out.setdefault(key, list(p.default) if isinstance(p.default, list) else p.default)
    for key in ("N", "refine", "steps", "diag_every", "instances"):
        if key in out and out[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if out.get("checkpoint_every", 0) < 0:
        raise ConfigError("checkpoint_every must be >= 0")
    if "cfl" in out and not 0 < out["cfl"] < 1:
        raise ConfigError("cfl must lie in (0, 1)")
    if "t_end" in out and out["t_end"] < 0:
        raise ConfigError("t_end must be >= 0")
    if "dim" in out:
        try:
            make_grid(out["dim"], [out["N"]] * out["dim"], [1.0] * out["dim"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return out


def config_hash(cfg):
    """Git blob hash of the canonical JSON form of ``cfg``."""
    body = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def apply_overrides(cfg, pairs):
    """``key=value`` strings; values are parsed as JSON, falling back to plain strings."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    cfg = dict(cfg)
    for item in pairs or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    return cfg


# ---------------------------------------------------------------- helpers


@dataclass
class RunOutcome:
    status: str
    report: dict
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def failed_checks(self):
        return [c for c in self.checks if not c["pass"]]


def _check(checks, name, value, threshold, kind="le"):
    ok = bool(np.isfinite(value)) and (value <= threshold if kind == "le" else value >= threshold)
    checks.append({"name": name, "value": float(value), "threshold": float(threshold),
                   "kind": kind, "pass": ok})


ROUNDOFF = 1e-13


def _slopes(per_level, Ns):
    """Convergence order per quantity; ``None`` when the values sit at round-off level."""
    out = {}
    for key in per_level[0]:
        vals = [lv[key] for lv in per_level]
        if max(vals) <= ROUNDOFF:
            out[key] = None
            continue
        try:
            out[key] = convergence_order(vals, [1.0 / N for N in Ns])
        except DiagnosticsError:
            out[key] = None
    return out


def _sizes(cfg):
    return [cfg["N"] * 2 ** i for i in range(cfg.get("refine", 1))]


def _grid(cfg, N):
    return make_grid(cfg["dim"], [N] * cfg["dim"], [2 * np.pi] * cfg["dim"])


def _maxima(reports, which):
    return {k: max(r.linf(k) for r in reports) for k in which}


def _evolve_level(cfg, st, bg, which, N, out_dir, last):
    """Evolve one refinement level; rows are ``(N, step, report)``."""
    rows = []

    def monitor(s, i, rate):
        rep = residual_suite(s, bg, which=which, rate=rate, point_checks=False)
        rows.append((N, i, rep))
        return rep

    def checkpoint(s, i):
        s.to_file(os.path.join(out_dir, f"state_{i}.bin"), {"N": N, "scenario": cfg["scenario"]})

    every = cfg["checkpoint_every"]
    kw = dict(cfl=cfg["cfl"], diag_every=cfg["diag_every"], sigma=cfg["sigma"], monitor=monitor,
              checkpoint=checkpoint if last else None, checkpoint_every=every)
    if "steps" in cfg:
        res = evolve(st, bg, steps=cfg["steps"], **kw)
    else:
        res = evolve(st, bg, t_end=cfg["t_end"], **kw)
    for _, _, rep in rows:
        rep.meta["dt"] = res.dt
    if last and (not every or res.steps % every):
        checkpoint(res.state, res.steps)
    return res, rows


def _normal_form_state(cfg, fam, grid, u):
    d = build_normal_form(u, fam, grid)
    st, bg = assemble_state(d.g, d.U, d.W, cfg["lam"], cfg["lamdot"])
    return st, bg, d


def _level_summary(N, init, res=None, rows=(), which=()):
    out = {"N": N, "initial": {k: v[0] for k, v in init.norms.items()}}
    out["initial_meta"] = {k: float(v) for k, v in init.meta.items()}
    if res is not None:
        out.update(status=res.status, message=res.message, steps=res.steps, dt=res.dt,
                   c_max=res.c_max, t_final=res.state.t,
                   time_max=_maxima([r for _, _, r in rows], which) if rows else {})
    return out


def _slope_checks(checks, slopes, finest, lo, hi=None, floor=ROUNDOFF, prefix=""):
    for k, v in slopes.items():
        if v is None:
            _check(checks, f"{prefix}{k} below floor", finest[k], floor)
            continue
        _check(checks, f"{prefix}{k} order", v, lo, "ge")
        if hi is not None:
            _check(checks, f"{prefix}{k} order upper", v, hi)


# ---------------------------------------------------------------- scenarios


def _run_minkowski(cfg, out_dir):
    grid = _grid(cfg, cfg["N"])
    fam = get_family("flat_static", grid.dim - 1)
    st, bg, _ = _normal_form_state(cfg, fam, grid, u_profile(grid.dim - 1))
    init = residual_suite(st, bg)
    which = tuple(REPORT_FIELDS)
    res, rows = _evolve_level(cfg, st, bg, which, grid.sizes[0], out_dir, True)
    lvl = _level_summary(grid.sizes[0], init, res, rows, which)
    lvl["max_state_change"] = res.state.max_abs_diff(st)
    checks = []
    _check(checks, "max state change", lvl["max_state_change"], cfg["tol"])
    for k, v in lvl["time_max"].items():
        _check(checks, f"{k} time max", v, cfg["tol"])
    return res.status, [lvl], rows, {}, checks


def _run_brinkmann(cfg, out_dir):
    m = cfg["dim"] - 1
    fam = get_family(cfg["family"], m, eps=cfg["eps"], conformal=cfg["conformal"])
    which = tuple(cfg["residuals"])
    Ns = _sizes(cfg)
    levels, rows, status = [], [], "ok"
    for N in Ns:
        grid = _grid(cfg, N)
        if cfg["data"] == "exact":
            st, bg = ppwave_state(fam, grid, 0.0)
        else:
            st, bg, _ = _normal_form_state(cfg, fam, grid, u_profile(m))
        init = residual_suite(st, bg)
        if cfg["t_end"] > 0:
            res, r = _evolve_level(cfg, st, bg, which, N, out_dir, N == Ns[-1])
            rows += r
            lvl = _level_summary(N, init, res, r, which)
            if cfg["data"] == "exact" and res.status == "ok":
                lvl["exact_error"] = res.state.max_abs_diff(ppwave_state(fam, grid, res.state.t)[0])
            status = res.status if res.status != "ok" else status
        else:
            rows.append((N, 0, init))
            lvl = _level_summary(N, init)
        levels.append(lvl)
        if status != "ok":
            break
    slopes, checks = {}, []
    if len(levels) > 1 and status == "ok":
        slopes["initial"] = _slopes([lv["initial"] for lv in levels], Ns)
        _slope_checks(checks, {k: v for k, v in slopes["initial"].items() if k != "alpha_purity"},
                      levels[-1]["initial"], cfg["min_order"], prefix="initial ")
        if cfg["t_end"] > 0:
            tm = [lv["time_max"] for lv in levels]
            slopes["time_max"] = _slopes(tm, Ns)
            _slope_checks(checks, {k: v for k, v in slopes["time_max"].items() if k != "alpha_purity"},
                          tm[-1], cfg["min_order"], prefix="time-max ")
            if "exact_error" in levels[0]:
                slopes["exact_error"] = _slopes([{"e": lv["exact_error"]} for lv in levels], Ns)["e"]
    if cfg["t_end"] > 0 and "alpha_purity" in which and status == "ok":
        _check(checks, "alpha purity", levels[-1]["time_max"]["alpha_purity"], cfg["purity_tol"])
    return status, levels, rows, slopes, checks


def _run_warped(cfg, out_dir):
    m = cfg["dim"] - 1
    fam = get_family(cfg["family"], m, eps=cfg["eps"], conformal=cfg["conformal"])
    u = u_profile(m, "warp", cfg["u_a"], cfg["u_b"])
    Ns = _sizes(cfg)
    levels, rows, status = [], [], "ok"
    which = tuple(cfg["residuals"])
    for N in Ns:
        grid = _grid(cfg, N)
        st, bg, d = _normal_form_state(cfg, fam, grid, u)
        cres = float(np.max(np.abs(constraint_residual(d.g, d.U, d.W).data)))
        init = residual_suite(st, bg) if cfg["initial_suite"] else residual_suite(st, bg, which=())
        if cfg["t_end"] > 0:
            res, r = _evolve_level(cfg, st, bg, which, N, out_dir, N == Ns[-1])
            rows += r
            lvl = _level_summary(N, init, res, r, which)
            status = res.status if res.status != "ok" else status
        else:
            rows.append((N, 0, init))
            lvl = _level_summary(N, init)
        lvl["constraint"] = cres
        levels.append(lvl)
        if status != "ok":
            break
    slopes, checks = {}, []
    if len(levels) > 1 and status == "ok":
        slopes["constraint"] = _slopes([{"c": lv["constraint"]} for lv in levels], Ns)["c"]
        _slope_checks(checks, {"constraint": slopes["constraint"]}, {"constraint": levels[-1]["constraint"]},
                      cfg["min_order"], cfg["max_order"])
        if cfg["initial_suite"]:
            slopes["initial"] = _slopes([lv["initial"] for lv in levels], Ns)
    return status, levels, rows, slopes, checks


def _run_flow_demo(cfg, out_dir):
    from .flows import TRIPLES, endo_action, form_from_components, g2_decompose, g2_projectors, \
        kaehler_checks, kaehler_instance, phi0, reference_comparison, volume_flow_error

    rng = np.random.default_rng(cfg["seed"])
    checks, out = [], {}
    out["volume_rel_err"] = volume_flow_error(cfg["steps"])
    _check(checks, "volume form oracle", out["volume_rel_err"], cfg["tol"])
    out["generic_rel_err"] = reference_comparison(rng, cfg["steps"], cfg["generic"])
    _check(checks, "generic flows vs reference", out["generic_rel_err"], cfg["tol"])
    wrong = 0
    for i in range(cfg["instances"]):
        flow = i % 2 == 0
        res = kaehler_checks(*kaehler_instance(rng, 4, flow=flow))
        wrong += (not res.lemma_verdict) or ((max(res.flow_res_J, res.flow_res_omega) < 1e-10) != flow)
    out["kaehler_misclassified"] = wrong
    _check(checks, "Kaehler misclassifications", wrong, 0)
    phi = phi0()
    out["g2_ranks"] = [int(np.linalg.matrix_rank(P)) for P in g2_projectors()]
    _check(checks, "G2 projector ranks", float(out["g2_ranks"] != [1, 27, 7]), 0)
    beta = form_from_components({I: rng.standard_normal() for I in TRIPLES}, 7, 3)
    out["g2_reconstruction"] = float(np.max(np.abs(g2_decompose(beta).reconstruct() - beta)))
    _check(checks, "G2 reconstruction", out["g2_reconstruction"], 1e-10)
    out["g2_identity_r"] = float(g2_decompose(endo_action(np.eye(7), phi, "lll")).r)
    _check(checks, "Id.phi decomposes to -3", abs(out["g2_identity_r"] + 3), 0)
    return "ok", [out], [], {}, checks


def _fibre_oracle(fam, grid):
    """``-Delta F`` with ``h = exp(2F) delta`` (zero for a flat fibre) on ``grid``."""
    if fam.name == "anisotropic_torus" or fam.name == "flat_static":
        return np.zeros(grid.shape)
    x = fam.expr.free_symbols - {S_SYM}
    F = sp.log(fam.expr[0, 0]) / 2
    lap = sum((sp.diff(F, xi, 2) for xi in x), sp.Integer(0))
    f = sp.lambdify((S_SYM,) + tuple(sorted(x, key=str)), -lap, "numpy")
    c = grid.coords()
    return np.broadcast_to(f(*c[:1 + len(x)]), grid.shape).astype(float)


def _run_screen_demo(cfg, out_dir):
    from .screen import holonomy_span, screen_curvature, su_screen_test

    fam = get_family(cfg["family"], 2, eps=cfg["eps"], conformal=cfg["conformal"])
    Ns = _sizes(cfg)
    levels = []
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    for N in Ns:
        grid = make_grid(3, [N] * 3, [2 * np.pi] * 3)
        st, bg = ppwave_state(fam, grid, 0.0)
        RS, fr = screen_curvature(st, bg)
        # frame orientation is not fixed, compare the magnitude of the single entry
        oracle = _fibre_oracle(fam, grid)
        err = float(np.max(np.abs(np.abs(RS[..., 2, 3, 0, 1]) - np.abs(oracle))))
        others = max(float(np.max(np.abs(RS[..., a, b, :, :])))
                     for a in range(4) for b in range(4) if {a, b} != {2, 3})
        hs = holonomy_span(st, bg, (0, 0, 0), stride=cfg["stride"], floor=cfg["floor"])
        su = float(np.max(np.abs(su_screen_test(st, bg, J))))
        levels.append({"N": N, "curvature_error": err, "other_planes": others, "su_trace": su,
                       "holonomy": hs.to_json()})
    slopes, checks = {}, []
    if len(levels) > 1:
        slopes = _slopes([{"curvature_error": lv["curvature_error"], "su_trace": lv["su_trace"]}
                          for lv in levels], Ns)
        if slopes["curvature_error"] is not None:
            _check(checks, "screen curvature order", slopes["curvature_error"], cfg["min_order"], "ge")
    flat = fam.name in ("anisotropic_torus", "flat_static") or cfg["conformal"] == 0
    expect = 0 if flat else 1
    if not flat or cfg["floor"] > 0:
        _check(checks, "holonomy dimension", abs(levels[-1]["holonomy"]["dimension"] - expect), 0)
    return "ok", levels, [], slopes, checks


_BRINK = _p(
    dim=Param(int, 3, "grid dimension n (slice), fibre T^(n-1)"),
    N=Param(int, 24, "points per axis on the coarsest grid"),
    refine=Param(int, 1, "number of grids, N doubling"),
    family=Param(str, "brinkmann_wave", "fibre family h_w", FAMILIES),
    eps=Param(float, 0.1, "amplitude eps of the w dependence, h_w = (1 + eps sin w) delta"),
    conformal=Param(float, 0.0, "amplitude of the fibre conformal factor exp(2f(x))"),
    data=Param(str, "normal_form", "normal_form: g = ds^2 + h_s with static background; "
               "exact: the exact slice with the exact solution as background", ("normal_form", "exact")),
    t_end=Param(float, 0.25, "final time (0: initial slice only)"),
    residuals=Param(list, ["nablaV", "nullV", "alpha_purity"], "residuals monitored in time", REPORT_FIELDS),
    min_order=Param(float, 3.5, "minimum convergence order in self-test"),
    purity_tol=Param(float, 1e-6, "bound on the non-degree-1 part of alpha"),
)

SCENARIOS = {
    "minkowski": Scenario(
        "minkowski", "flat data, checks that nothing moves",
        _p(dim=Param(int, 3, "grid dimension"), N=Param(int, 16, "points per axis"),
           steps=Param(int, 50, "RK4 steps"), tol=Param(float, 1e-11, "bound on every change and residual")),
        _run_minkowski),
    "brinkmann": Scenario(
        "brinkmann", "pp-wave -dt^2 + ds^2 + h_(t+s) from registry fibre families", _BRINK, _run_brinkmann),
    "warped_product": Scenario(
        "warped_product", "normal-form data u^-2 ds^2 + h_s with non-constant u",
        _p(dim=Param(int, 2, "grid dimension"), N=Param(int, 16, "points per axis on the coarsest grid"),
           refine=Param(int, 1, "number of grids, N doubling"),
           family=Param(str, "conformal_exp", "fibre family h_s", FAMILIES),
           eps=Param(float, 0.1, "amplitude of the s dependence"),
           conformal=Param(float, 0.1, "amplitude of the fibre conformal factor"),
           u_a=Param(float, 0.1, "u = 1 + u_a sin s + u_b sin s cos x1"),
           u_b=Param(float, 0.1, "see u_a"),
           t_end=Param(float, 0.0, "final time (0: initial slice only)"),
           initial_suite=Param(bool, True, "evaluate the full residual suite at t = 0"),
           residuals=Param(list, ["nablaV", "nullV", "alpha_purity"], "residuals monitored in time",
                           REPORT_FIELDS),
           min_order=Param(float, 3.5, "lower bound on the constraint order in self-test"),
           max_order=Param(float, 4.5, "upper bound on the constraint order in self-test")),
        _run_warped),
    "flow_demo": Scenario(
        "flow_demo", "tensor flows: volume-form oracle, reference integrator, Kaehler and G2 checks",
        {"steps": Param(int, 200, "RK4 steps on s in [0, 1]"),
         "generic": Param(int, 6, "random polynomial families compared to the reference"),
         "instances": Param(int, 100, "random Kaehler instances"),
         "tol": Param(float, 1e-8, "relative tolerance of the flow checks")},
        _run_flow_demo),
    "screen_demo": Scenario(
        "screen_demo", "screen curvature, holonomy span and SU trace on exact pp-wave slices",
        {"N": Param(int, 24, "points per axis (3-d grid)"),
         "refine": Param(int, 1, "number of grids, N doubling"),
         "family": Param(str, "conformal_exp", "fibre family on T^2", FAMILIES),
         "eps": Param(float, 0.1, "amplitude of the w dependence"),
         "conformal": Param(float, 0.2, "amplitude of the fibre conformal factor"),
         "stride": Param(int, 7, "sample stride for the holonomy span"),
         "floor": Param(float, 0.0, "absolute singular-value floor of the holonomy span"),
         "min_order": Param(float, 3.5, "minimum curvature order in self-test")},
        _run_screen_demo),
}


# ---------------------------------------------------------------- run


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _write_rows(path, rows, checks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if rows:
            w.writerow(["N", "step"] + DiagnosticsReport.header())
            for N, step, rep in rows:
                w.writerow([N, step] + [f"{v:.10e}" for v in rep.row()])
        else:
            w.writerow(["check", "value", "threshold", "pass"])
            for c in checks:
                w.writerow([c["name"], f"{c['value']:.10e}", f"{c['threshold']:.10e}", int(c["pass"])])


def run_scenario(cfg, out_dir=None):
    """Run a validated configuration and write ``diagnostics.csv`` and ``report.json``.

    Returns a :class:`RunOutcome`; its ``status`` is ``"ok"`` or
    ``"inadmissible"``.
    """
    cfg = validate_config(cfg)
    out_dir = cfg["out"] if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    status, levels, rows, slopes, checks = SCENARIOS[cfg["scenario"]].runner(cfg, out_dir)
    report = {
        "scenario": cfg["scenario"],
        "version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "status": status,
        "levels": levels,
        "slopes": slopes,
        "checks": checks,
        "all_checks_pass": all(c["pass"] for c in checks),
        "wall_time_s": time.perf_counter() - t0,
    }
    _write_rows(os.path.join(out_dir, "diagnostics.csv"), rows, checks)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
    return RunOutcome(status, report, rows, checks)
