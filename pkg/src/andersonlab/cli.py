"""Config-driven experiment runner.

One experiment per invocation::

    andersonlab KIND --config cfg.json [--seed N] [--out DIR] [--workers N] [--format csv|json]

Output goes to ``DIR/KIND.csv`` or ``DIR/KIND.json``. Exit status is 0 when
every asserted bound passes, 1 when one fails, 2 on a configuration or
runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dos, dynamics, green, msa
from .disorder import Distribution, sample_potential
from .errors import CapabilityError, ConfigError, DomainError, HypothesisError, PreconditionError
from .lattice import Cube
from .operators import BoundaryKind, build_h

KINDS = (
    "dos", "wegner", "two_cube_wegner", "lifshitz", "green_check", "ct_check",
    "msa_single", "msa_two_cube", "msa_schedule", "initial_scale", "dynamics",
)
# fields that never change the numbers
NON_SEMANTIC = ("workers", "out", "format", "timestamp")


def config_digest(config: dict) -> str:
    """sha256 of the canonical JSON of the semantically relevant fields."""
    core = {k: v for k, v in config.items() if k not in NON_SEMANTIC}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ResultRecord:
    experiment: str
    digest: str
    columns: dict
    seed: int | None = None
    trials: int | None = None
    asserted: list = field(default_factory=list)

    def row(self) -> dict:
        out = {"experiment": self.experiment, "config_digest": self.digest, "seed": self.seed, "trials": self.trials}
        out.update(self.columns)
        return out

    @property
    def passed(self) -> bool:
        return all(bool(self.columns[k]) for k in self.asserted if self.columns.get(k) is not None)


# ------------------------------------------------------------------ config


class _Checker:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.errors: list[str] = []

    def get(self, key, default=None, kind=float, required=False, low=None, high=None, strict_low=False):
        if key not in self.cfg:
            if required:
                self.errors.append(f"missing required field {key!r}")
            return default
        v = self.cfg[key]
        try:
            if kind is int and (isinstance(v, bool) or float(v) != int(v)):
                raise ValueError
            v = kind(v)
        except (TypeError, ValueError):
            self.errors.append(f"{key} must be {kind.__name__}, got {v!r}")
            return default
        if low is not None and (v <= low if strict_low else v < low):
            self.errors.append(f"{key} must be {'>' if strict_low else '>='} {low}, got {v}")
        if high is not None and v > high:
            self.errors.append(f"{key} must be <= {high}, got {v}")
        return v

    def dist(self, required=True) -> Distribution | None:
        if "dist" not in self.cfg:
            if required:
                self.errors.append("missing required field 'dist'")
            return None
        try:
            return Distribution.from_config(self.cfg["dist"])
        except (DomainError, TypeError, AttributeError) as exc:
            self.errors.append(f"dist: {exc}")
            return None

    def done(self):
        if self.errors:
            raise ConfigError(self.errors)


def load_config(path, kind: str | None = None, seed: int | None = None) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(cfg, dict):
        raise ConfigError(["config must be a JSON object"])
    if kind is not None:
        if "kind" in cfg and cfg["kind"] != kind:
            raise ConfigError([f"config kind {cfg['kind']!r} does not match subcommand {kind!r}"])
        cfg["kind"] = kind
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


# ------------------------------------------------------------- experiments


def _mc_cols(est, prefix="") -> dict:
    return {
        f"{prefix}estimate": est.estimate,
        f"{prefix}ci_lo": est.ci_lo,
        f"{prefix}ci_hi": est.ci_hi,
    }


def _run_dos(c: _Checker, w: int):
    L = c.get("L", kind=int, required=True, low=0)
    d = c.get("d", 1, kind=int, low=1)
    trials = c.get("trials", kind=int, required=True, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    bc = c.cfg.get("bc", "simple")
    energies = c.cfg.get("energies")
    if energies is None:
        c.errors.append("missing required field 'energies'")
    try:
        BoundaryKind.parse(bc)
    except DomainError as exc:
        c.errors.append(str(exc))
    c.done()
    curve = dos.ids_curve(energies, L, bc, dist, trials, seed, d, w)
    return [({k: v for k, v in r.items() if k not in ("trials", "seed")}, []) for r in curve.rows()], seed, trials


def _run_wegner(c: _Checker, w: int):
    L = c.get("L", kind=int, required=True, low=0)
    d = c.get("d", 1, kind=int, low=1)
    E = c.get("E", kind=float, required=True)
    trials = c.get("trials", kind=int, required=True, low=1)
    seed = c.get("seed", 0, kind=int)
    eps = c.cfg.get("eps", c.cfg.get("eps_list"))
    dist = c.dist()
    if eps is None:
        c.errors.append("missing required field 'eps'")
    c.done()
    eps = [float(e) for e in np.atleast_1d(eps)]
    cube = Cube.at_origin(L, d)
    out = []
    first = None
    for e in eps:
        r = dos.wegner_experiment(E, e, cube, dist, trials, seed, w)
        first = first or r
        cols = {"E": E, "eps": e, "sites": cube.size, "mean": r.estimate.estimate, "ci_lo": r.estimate.ci_lo,
                "ci_hi": r.estimate.ci_hi, "bound": r.bound, "pass": r.passed,
                "ratio_to_first": r.estimate.estimate / first.estimate.estimate if first.estimate.estimate else None}
        out.append((cols, ["pass"]))
    return out, seed, trials


def _run_two_cube_wegner(c: _Checker, w: int):
    L1 = c.get("L1", kind=int, required=True, low=0)
    L2 = c.get("L2", kind=int, required=True, low=0)
    d = c.get("d", 1, kind=int, low=1)
    eps = c.get("eps", kind=float, required=True, low=0)
    trials = c.get("trials", kind=int, required=True, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    c.done()
    sep = int(c.cfg.get("separation", L1 + L2 + 1))
    c2 = (sep,) + (0,) * (d - 1)
    r = dos.two_cube_resonance_experiment(Cube.at_origin(L1, d), Cube(c2, L2), eps, dist, trials, seed, w)
    cols = {"eps": eps, **_mc_cols(r.estimate), "bound": r.bound, "lemma_bound": r.lemma_bound, "pass": r.passed}
    return [(cols, ["pass"])], seed, trials


def _run_lifshitz(c: _Checker, w: int):
    d = c.get("d", 1, kind=int, low=1)
    trials = c.get("trials", 0, kind=int, low=0)
    seed = c.get("seed", 0, kind=int)
    Ls = c.cfg.get("Ls")
    if not Ls:
        c.errors.append("missing required field 'Ls'")
    dist = c.dist(required=trials > 0) or Distribution.uniform()
    c.done()
    rep = dos.lifshitz_probes(d, Ls, dist, trials, seed, c.cfg.get("tail_Ls"), c.cfg.get("slope_L"), w)
    out = []
    for L in rep.gap_scaled:
        g = rep.gap_scaled[L]
        out.append(({"quantity": "L2_gap", "L": L, "value": g, "pass": bool(1.0 <= g <= 15.0)}, ["pass"]))
        out.append(({"quantity": "L2_tent", "L": L, "value": rep.tent_scaled[L], "pass": None}, []))
    for L, est in rep.tails.items():
        out.append(({"quantity": "tail", "L": L, "value": est.estimate, "ci_lo": est.ci_lo, "ci_hi": est.ci_hi}, []))
    out.append(({"quantity": "double_log_slope", "value": rep.double_log_slope}, []))
    return out, seed, trials


def _instance_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))


def _run_green_check(c: _Checker, w: int):
    d = c.get("d", 1, kind=int, low=1)
    count = c.get("instances", 10, kind=int, low=1)
    inner_r = c.get("inner_radius", 2, kind=int, low=0)
    outer_r = c.get("ambient_radius", inner_r + 2, kind=int, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    if outer_r < inner_r + 1:
        c.errors.append("ambient_radius must exceed inner_radius")
    c.done()
    rng = _instance_rng(seed)
    amb = Cube.at_origin(outer_r, d)
    out = []
    k = 0
    tries = 0
    while k < count and tries < 50 * count:
        tries += 1
        shift = outer_r - inner_r - 1
        ic = tuple(int(x) for x in rng.integers(-shift, shift + 1, d))
        inner = Cube(ic, inner_r)
        pot = sample_potential(amb, dist, seed, tries)
        n = tuple(int(x) for x in np.asarray(ic) + rng.integers(-inner_r, inner_r + 1, d))
        m = tuple(int(x) for x in rng.integers(-outer_r, outer_r + 1, d))
        if inner.contains(m):
            continue
        E = float(rng.uniform(dist.support[0] - 1, dist.support[1] + 4 * d + 1))
        try:
            r = green.geometric_resolvent_check(inner, amb, E, n, m, pot)
        except PreconditionError:
            continue
        rel = r.residual / max(abs(r.lhs), 1e-300)
        out.append(({"instance": k, "E": E, "lhs": r.lhs, "rhs": r.rhs, "relative_residual": rel,
                     "pass": bool(r.passed)}, ["pass"]))
        k += 1
    return out, seed, None


def _run_ct_check(c: _Checker, w: int):
    d = c.get("d", 1, kind=int, low=1)
    L = c.get("L", 4, kind=int, low=0)
    count = c.get("instances", 10, kind=int, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    c.done()
    rng = _instance_rng(seed)
    cube = Cube.at_origin(L, d)
    out = []
    for k in range(count):
        h = build_h(cube, BoundaryKind.SIMPLE, sample_potential(cube, dist, seed, k))
        ev = np.linalg.eigvalsh(h.dense())
        j = int(rng.integers(len(ev)))
        E = float(ev[j] + rng.choice([-1, 1]) * rng.uniform(0.05, 1.0))
        delta = float(np.min(np.abs(ev - E)))
        if delta > 1.0 or delta < 1e-6:
            E = float(ev[j] + 0.5 * (delta if delta <= 1 else 1.0))
        r = green.combes_thomas_check(h, E)
        out.append(({"instance": k, "E": E, "delta": r.delta, "worst_ratio": r.worst_ratio,
                     "commutator_norm": r.commutator_norm, "commutator_bound": r.commutator_bound,
                     "pass": r.passed}, ["pass"]))
    return out, seed, None


def _msa_params(c: _Checker) -> msa.MsaParams:
    d = c.get("d", 1, kind=int, low=1)
    p = c.get("p", None, kind=float)
    alpha = c.get("alpha", None, kind=float)
    L0 = c.get("L0", None, kind=int, low=2)
    gamma0 = c.get("gamma0", None, kind=float)
    params = msa.MsaParams(d=d, L0=L0, p=p, alpha=alpha, gamma0=gamma0, path=c.cfg.get("path", "weak"))
    c.errors.extend(params.violations())
    return params


def _run_msa_single(c: _Checker, w: int):
    params = _msa_params(c)
    L = c.get("L", kind=int, required=True, low=1)
    E = c.get("E", kind=float, required=True)
    gamma = c.get("gamma", kind=float, required=True, low=0)
    trials = c.get("trials", kind=int, required=True, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    c.done()
    r = msa.single_scale_probability(L, E, gamma, dist, trials, seed, params.d, params.p, w)
    cols = {"L": L, "E": E, "gamma": gamma, **_mc_cols(r.estimate), "bound": r.bound, "within_bound": r.passed}
    return [(cols, [])], seed, trials


def _run_msa_two_cube(c: _Checker, w: int):
    params = _msa_params(c)
    L = c.get("L", kind=int, required=True, low=1)
    gamma = c.get("gamma", kind=float, required=True, low=0)
    step = c.get("step", 0.05, kind=float, low=0, strict_low=True)
    trials = c.get("trials", kind=int, required=True, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    interval = c.cfg.get("interval", c.cfg.get("E"))
    if interval is None:
        c.errors.append("missing required field 'interval'")
    c.done()
    r = msa.two_cube_probability(L, interval, step, gamma, dist, trials, seed, params.d, params.p, workers=w)
    cols = {"L": L, "gamma": gamma, "step": step, "grid_points": r.grid_points, **_mc_cols(r.estimate),
            **_mc_cols(r.interval_upper, "interval_upper_"), "label": r.label, "bound": r.bound,
            "within_bound": r.passed}
    return [(cols, [])], seed, trials


def _run_msa_schedule(c: _Checker, w: int):
    params = _msa_params(c)
    k_max = c.get("k_max", 20, kind=int, low=1)
    c.done()
    s = msa.build_schedule(params, k_max)
    out = []
    for g in s.gates + s.floor_gates:
        out.append(({"section": "gate", "name": g["gate"], "value": g["value"], "threshold": g["threshold"],
                     "pass": g["pass"]}, ["pass"] if g in s.gates else []))
    for t in s.tail_sums:
        out.append(({"section": "tail_sum", "name": f"beta={t['beta']:.6g}", "value": t["sum"],
                     "threshold": t["bound"], "pass": t["pass"], "precondition": t["precondition"]},
                    ["pass"] if t["precondition"] else []))
    for row in s.per_scale:
        out.append(({"section": "scale", "k": row["k"], "L": row["L"], "value": row["gamma"],
                     "threshold": row["floor"], "pass": row["half_pass"]}, ["pass"] if s.gates_pass else []))
    for b in s.budgets:
        out.append(({"section": "budget", "k": b["k"], "L": b["L"], "count": b["count"], "value": b["p_k"],
                     "C_implied": b["C_implied"]}, []))
    return out, None, None


def _run_initial_scale(c: _Checker, w: int):
    mode = c.cfg.get("mode", "large_disorder")
    d = c.get("d", 1, kind=int, low=1)
    trials = c.get("trials", 0, kind=int, low=0)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist()
    if mode == "large_disorder":
        L0 = c.get("L0", kind=int, required=True, low=1)
        gamma = c.get("gamma", kind=float, required=True, low=0)
        p = c.get("p", None, kind=float)
        c.done()
        r = msa.initial_scale_large_disorder(L0, gamma, dist, p, d, trials, seed, c.cfg.get("step", 0.05), w)
        cols = {"mode": mode, "L0": L0, "gamma": gamma, "norm_g": r.norm_g, "bound": r.bound,
                "threshold": r.threshold, "bound_below_target": r.passed}
        if r.mc is not None:
            cols.update(_mc_cols(r.mc.estimate))
            cols["pass"] = r.mc_within_bound
        return [(cols, ["pass"])], seed, trials
    if mode == "low_energy":
        ell0 = c.get("ell0", kind=int, required=True, low=1)
        r_ = c.get("r", kind=int, required=True, low=1)
        if r_ is not None and r_ % 2 == 0:
            c.errors.append(f"r must be odd, got {r_}")
        if trials < 1:
            c.errors.append("low_energy needs trials >= 1")
        c.done()
        rep = msa.initial_scale_low_energy(ell0, r_, dist, trials, seed, d, c.cfg.get("tail_ells"), workers=w)
        out = [({"mode": mode, "quantity": "tiling", "L0": rep.L0, "value": rep.tiling_violation,
                 "pass": rep.tiling_holds}, ["pass"])]
        for ell, est in rep.tails.items():
            out.append(({"mode": mode, "quantity": "tail", "ell": ell, "value": est.estimate, "ci_lo": est.ci_lo,
                         "ci_hi": est.ci_hi, "rate": rep.tail_rates[ell]}, []))
        out.append(({"mode": mode, "quantity": "decreasing", "pass": rep.decreasing}, ["pass"]))
        out.append(({"mode": mode, "quantity": "union_bound", "value": rep.union_bound}, []))
        return out, seed, trials
    c.errors.append(f"mode must be 'large_disorder' or 'low_energy', got {mode!r}")
    c.done()


def _run_dynamics(c: _Checker, w: int):
    L = c.get("L", kind=int, required=True, low=1)
    d = c.get("d", 1, kind=int, low=1)
    T = c.get("T", kind=float, required=True, low=0)
    n_t = c.get("n_times", 101, kind=int, low=1)
    seed = c.get("seed", 0, kind=int)
    dist = c.dist(required=False)
    radii = c.cfg.get("radii", [L // 2, L])
    moments = c.cfg.get("moments", [2])
    c.done()
    cube = Cube.at_origin(L, d)
    pot = sample_potential(cube, dist, seed, 0) if dist is not None else None
    h = build_h(cube, BoundaryKind.SIMPLE, pot)
    psi0 = np.zeros(cube.size)
    psi0[cube.index_of((0,) * d)] = 1.0
    plan = dynamics.EvolutionPlan.from_matrix(h, psi0)
    times = np.linspace(0.0, T, n_t)
    states = dynamics.evolve(plan, times)
    dens = np.abs(states) ** 2
    rad = np.max(np.abs(h.sites), axis=1)
    out = []
    for i, t in enumerate(times):
        cols = {"t": float(t)}
        for r in radii:
            cols[f"inside_r{r}"] = float(dens[i, rad <= r].sum())
        for p in moments:
            cols[f"moment_p{p}"] = float(math.sqrt(dens[i] @ rad.astype(float) ** (2 * p)))
        cols["unitary"] = bool(abs(dens[i].sum() - 1.0) <= 1e-10)
        out.append((cols, ["unitary"]))
    return out, seed, None


RUNNERS = {
    "dos": _run_dos, "wegner": _run_wegner, "two_cube_wegner": _run_two_cube_wegner, "lifshitz": _run_lifshitz,
    "green_check": _run_green_check, "ct_check": _run_ct_check, "msa_single": _run_msa_single,
    "msa_two_cube": _run_msa_two_cube, "msa_schedule": _run_msa_schedule, "initial_scale": _run_initial_scale,
    "dynamics": _run_dynamics,
}


def run(config: dict, workers: int = 1) -> list[ResultRecord]:
    """Validate ``config`` and run it; deterministic for a fixed config."""
    kind = config.get("kind")
    if kind not in RUNNERS:
        raise ConfigError([f"kind must be one of {', '.join(KINDS)}, got {kind!r}"])
    if int(workers) < 1:
        raise ConfigError([f"workers must be >= 1, got {workers}"])
    digest = config_digest(config)
    rows, seed, trials = RUNNERS[kind](_Checker(config), int(workers))
    return [ResultRecord(kind, digest, cols, seed, trials, asserted) for cols, asserted in rows]


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def render(records: list[ResultRecord], fmt: str) -> str:
    if not records:
        raise DomainError("nothing to emit")
    rows = [r.row() for r in records]
    if fmt == "json":
        return json.dumps([{k: _plain(v) for k, v in row.items()} for row in rows], indent=1) + "\n"
    if fmt != "csv":
        raise DomainError(f"unknown format {fmt!r}")
    header: list[str] = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row.get(k)) for k in header])
    return buf.getvalue()


def emit(records: list[ResultRecord], out_dir, fmt: str = "csv") -> Path:
    """Write the records to ``out_dir/<experiment>.<fmt>`` (single writer)."""
    text = render(records, fmt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{records[0].experiment}.{fmt}"
    path.write_bytes(text.encode())
    return path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="andersonlab", description="Run one Anderson-model experiment.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--seed", type=int, default=None, help="override the config base seed")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.kind, args.seed)
        records = run(cfg, args.workers)
        path = emit(records, args.out, args.format)
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    except (DomainError, HypothesisError, PreconditionError, CapabilityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ok = all(r.passed for r in records)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    print(f"{path} records={len(records)} sha256={digest} {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
