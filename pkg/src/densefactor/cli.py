"""Configuration-driven experiment runner.

Config files hold ``section.key = value`` lines (``#`` starts a comment);
flags given on the command line override file values.  Every CSV starts with
a ``# key = value`` preamble holding the command, the full config and the
package version, which is enough to re-run the experiment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import AdditiveGaussian, PriorKind, Sign, SpreadingKind, parse_channel, parse_prior, parse_spreading
from .hypergraph import sample_mixed
from .instance import generate_instance, save_instance
from .models import GaussGauss, GaussSign, IsingGauss, MixedGaussGauss, family_name
from .mp_engine import Algorithm, InitScheme, default_damping, parse_scheme, run_mp
from .replica import PHASE_HEADER, TRANSITION_HEADER, solve_eos, trace_phase_diagram
from .state_evolution import SEModel, run_se
from .trajectory import CSV_HEADER, Trajectory, write_csv, write_trajectory

COMMANDS = ("generate", "run-rbp", "run-gamp", "run-se", "solve-eos", "phase-diagram", "compare")


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class ExperimentConfig:
    command: str = "run-se"
    # model
    N: int = 1000
    M: int = 100
    p: int = 2
    species: str = ""  # "p1:alpha1,p2:alpha2" for mixed models; overrides p/alpha
    alpha: float = 1.6
    lam: float = 2.0
    delta: float = 1.0
    prior: str = "ising"
    channel: str = "gaussian"
    spreading: str = ""  # empty: rademacher for p=2 and mixed, deterministic otherwise
    # algorithm
    scheme: str = "uninformative:0.01"
    damping: float | None = None
    max_t: int = 200
    tol: float = 1e-8
    magnetization: str = "plain"  # plain | corrected
    algorithm: str = "gamp"  # used by compare
    # replication
    instances: int = 1
    seed: int = 0
    jobs: int = 1
    out: str = ""
    # phase diagram grids "lo:hi:count"
    alpha_grid: str = "1.0:3.0:11"
    lambda_grid: str = "0.2:3.0:15"


# config-file keys are section.key; flags use the bare key
_SECTIONS = {
    "run": ("command", "instances", "seed", "jobs", "out"),
    "model": ("N", "M", "p", "species", "alpha", "lam", "delta", "prior", "channel", "spreading"),
    "algo": ("scheme", "damping", "max_t", "tol", "magnetization", "algorithm"),
    "grid": ("alpha_grid", "lambda_grid"),
}
_ALIASES = {"lambda": "lam", "n_instances": "instances", "base_seed": "seed", "conv_tol": "tol", "max-t": "max_t"}
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    f = _FIELDS[key]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float | None"):
            return None if raw in ("", "none", "None", None) else float(raw)
        if kind.startswith("float"):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {raw!r} as {kind}") from None


def _canonical(key: str) -> str:
    key = key.strip()
    if "." in key:
        section, _, name = key.partition(".")
        name = _ALIASES.get(name, name)
        if section not in _SECTIONS or name not in _SECTIONS[section]:
            raise ConfigError(key, "unknown key")
        return name
    name = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
    if name not in _FIELDS:
        raise ConfigError(key, "unknown key")
    return name


def read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'section.key = value'")
        k, _, v = line.partition("=")
        values[_canonical(k)] = v.strip()
    return values


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
    for key in ("N", "M", "p", "max_t", "instances", "jobs"):
        if getattr(cfg, key) < 1:
            raise ConfigError(key, "must be >= 1")
    for key in ("alpha", "lam", "delta", "tol"):
        v = getattr(cfg, key)
        if not (math.isfinite(v) and v > 0) and not (key == "lam" and v == math.inf):
            raise ConfigError(key, "must be positive")
    if cfg.damping is not None and not 0.0 < cfg.damping <= 1.0:
        raise ConfigError("damping", "must lie in (0, 1]")
    if cfg.magnetization not in ("plain", "corrected"):
        raise ConfigError("magnetization", "must be plain or corrected")
    if cfg.algorithm not in ("gamp", "rbp"):
        raise ConfigError("algorithm", "must be gamp or rbp")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be >= 0")
    for key, fn in (("prior", parse_prior), ("spreading", parse_spreading), ("scheme", parse_scheme)):
        if key == "spreading" and not cfg.spreading:
            continue
        try:
            fn(getattr(cfg, key))
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    try:
        parse_channel(cfg.channel, cfg.delta)
    except ValueError as exc:
        raise ConfigError("channel", str(exc)) from None
    species_list(cfg)
    for key in ("alpha_grid", "lambda_grid"):
        _grid(cfg, key)
    return cfg


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = read_config_file(path) if path else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            values[_canonical(k)] = v
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return validate(cfg)


# ---- config helpers ---------------------------------------------------------


def species_list(cfg) -> list[tuple[int, float]]:
    if not cfg.species:
        return [(cfg.p, cfg.alpha)]
    out = []
    for part in cfg.species.split(","):
        try:
            p, a = part.split(":")
            out.append((int(p), float(a)))
        except ValueError:
            raise ConfigError("species", f"cannot parse {part!r}; expected p:alpha") from None
    if not out or any(p < 2 or a <= 0 for p, a in out):
        raise ConfigError("species", "need p >= 2 and alpha > 0 for every species")
    return out


def _grid(cfg, key):
    try:
        lo, hi, n = getattr(cfg, key).split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(key, "expected lo:hi:count") from None
    if n < 1 or hi < lo:
        raise ConfigError(key, "need count >= 1 and hi >= lo")
    return list(np.linspace(lo, hi, n)) if n > 1 else [lo]


def spreading_of(cfg) -> SpreadingKind:
    if cfg.spreading:
        return parse_spreading(cfg.spreading)
    sp = species_list(cfg)
    if len(sp) > 1 or sp[0][0] == 2:
        return SpreadingKind.RADEMACHER
    return SpreadingKind.DETERMINISTIC


def family_of(cfg):
    """Model family for the replica solvers (unit noise)."""
    prior = parse_prior(cfg.prior)
    channel = parse_channel(cfg.channel, cfg.delta)
    sp = species_list(cfg)
    if len(sp) == 2 and prior is PriorKind.GAUSSIAN and isinstance(channel, AdditiveGaussian):
        (p1, a1), (p2, _) = sp
        return MixedGaussGauss(p1, a1, p2)
    if len(sp) != 1:
        raise ConfigError("species", "replica analytics support one species or the Gaussian two-species mix")
    p = sp[0][0]
    if isinstance(channel, Sign):
        if prior is not PriorKind.GAUSSIAN:
            raise ConfigError("prior", "sign-channel analytics need the Gaussian prior")
        return GaussSign(p)
    return IsingGauss(p) if prior is PriorKind.ISING else GaussGauss(p)


def effective_lambda(cfg) -> float:
    """Additive noise of std delta is equivalent to lambda / delta at unit noise."""
    channel = parse_channel(cfg.channel, cfg.delta)
    return cfg.lam / cfg.delta if isinstance(channel, AdditiveGaussian) else cfg.lam


def se_model(cfg) -> SEModel:
    return SEModel(parse_prior(cfg.prior), parse_channel(cfg.channel, cfg.delta), tuple(species_list(cfg)), cfg.lam)


def se_start(scheme: InitScheme):
    a = scheme.a
    return {
        "informative": (1.0, 1.0, 1.0),
        "uninformative": (a, a, 1.0),
        "truly_random": (0.0, a, 1.0),
        "sign_informative": (a, a, 1.0),
    }[scheme.kind]


def output_dir(cfg) -> Path:
    d = Path(cfg.out or os.environ.get("DENSEFACTOR_OUT", "") or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def metadata(cfg, **extra) -> dict:
    meta = {"artifact_version": __version__, "command": cfg.command}
    meta.update({f"config.{k}": v for k, v in dataclasses.asdict(cfg).items()})
    meta.update(extra)
    return meta


# ---- runs -------------------------------------------------------------------


def make_instance(cfg, seed: int):
    sp = species_list(cfg)
    graph = sample_mixed(cfg.N, cfg.M, sp, seed)
    return generate_instance(
        graph, cfg.M, cfg.lam, parse_prior(cfg.prior), parse_channel(cfg.channel, cfg.delta), spreading_of(cfg), seed
    )


def run_instance(cfg, algorithm: Algorithm, k: int) -> Trajectory:
    seed = cfg.seed + k
    inst = make_instance(cfg, seed)
    traj = run_mp(
        algorithm, inst, parse_scheme(cfg.scheme), damping=cfg.damping, max_t=cfg.max_t,
        conv_tol=cfg.tol, seed=seed, corrected=cfg.magnetization == "corrected",
    )
    traj.final_state = None  # keep the pickled result small
    return traj


def run_instances(cfg, algorithm: Algorithm) -> list[Trajectory]:
    ks = range(cfg.instances)
    if cfg.jobs > 1 and cfg.instances > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(run_instance, [cfg] * len(ks), [algorithm] * len(ks), ks))
    return [run_instance(cfg, algorithm, k) for k in ks]


def average_trajectories(trajs) -> list[tuple]:
    """Per-step mean over the instances that reached that step, with the count."""
    n_steps = max(len(t.records) for t in trajs)
    rows = []
    for s in range(n_steps):
        recs = [t.records[s] for t in trajs if len(t.records) > s]
        arr = np.array([r[1:] for r in recs], dtype=float)
        with np.errstate(invalid="ignore"):
            means = [float(np.nanmean(col)) if np.isfinite(col).any() else math.nan for col in arr.T]
        rows.append((s, *means, len(recs)))
    return rows


AVERAGE_HEADER = CSV_HEADER + ",count"
COMPARE_HEADER = "t,m_amp,m_se,dev_m,q_amp,q_se,dev_q,Q_amp,Q_se,dev_Q,count"


def compare_rows(avg_rows, se_traj: Trajectory) -> list[tuple]:
    se = se_traj.records
    rows = []
    for r in avg_rows:
        t = r[0]
        s = se[min(t, len(se) - 1)]  # SE holds its fixed point after convergence
        rows.append((t, r[1], s[1], abs(r[1] - s[1]), r[2], s[2], abs(r[2] - s[2]), r[3], s[3], abs(r[3] - s[3]), r[-1]))
    return rows


# ---- report ------------------------------------------------------------------


def emit_report(artifacts: dict) -> str:
    lines = []
    trajs = artifacts.get("trajectories")
    if trajs:
        n_conv = sum(t.converged for t in trajs)
        lines.append(f"converged {n_conv}/{len(trajs)}")
        for k, t in enumerate(trajs):
            _, m, q, Q, D, *_ = t.final
            status = "converged" if t.converged else ("diverged" if t.diverged else "max_t reached")
            extra = f" at step {t.diverged_step}" if t.diverged else ""
            lines.append(f"instance {k}: {status}{extra}; final m={m:.6g} q={q:.6g} Q={Q:.6g} D={D:.3g}")
    se = artifacts.get("se")
    if se is not None:
        _, m, q, Q, *_ = se.final
        state = "converged" if se.converged else "not converged"
        lines.append(f"state evolution {state} after {se.steps} steps: m={m:.6g} q={q:.6g} Q={Q:.6g}")
    cmp_rows = artifacts.get("compare")
    if cmp_rows:
        devs = [r[3] for r in cmp_rows]
        k = int(np.nanargmax(devs))
        lines.append(f"max |m_amp - m_se| = {devs[k]:.4g} at step {cmp_rows[k][0]}")
    eos = artifacts.get("eos")
    if eos is not None:
        ms = ", ".join(f"{s.m:.6g}({s.kind}{'' if s.stable else ', unstable'})" for s in eos.solutions)
        lines.append(f"equation of state roots: {ms}; dominant m={eos.solutions[eos.dominant].m:.6g}")
    lines_ = artifacts.get("transitions")
    if lines_:
        for tl in lines_:
            parts = [f"{n}={v:.6g}" for n, v in (("lambda_star", tl.lambda_star), ("lambda_d", tl.lambda_d), ("lambda_c", tl.lambda_c)) if v is not None]
            lines.append(f"alpha={tl.alpha:.6g}: " + (", ".join(parts) if parts else "no transition located"))
    for path in artifacts.get("files", []):
        lines.append(f"wrote {path}")
    return "\n".join(lines)


# ---- dispatch ------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> dict:
    out = output_dir(cfg)
    art: dict = {"files": []}
    cmd = cfg.command
    if cmd == "generate":
        for k in range(cfg.instances):
            path = out / f"instance_{k}.dfin"
            save_instance(make_instance(cfg, cfg.seed + k), path)
            art["files"].append(str(path))
    elif cmd in ("run-rbp", "run-gamp"):
        alg = Algorithm.RBP if cmd == "run-rbp" else Algorithm.GAMP
        trajs = run_instances(cfg, alg)
        art["trajectories"] = trajs
        damping = cfg.damping if cfg.damping is not None else default_damping(alg, parse_prior(cfg.prior))
        for k, t in enumerate(trajs):
            path = out / f"{alg.value}_instance_{k}.csv"
            write_trajectory(path, t, metadata(cfg, instance=k, instance_seed=cfg.seed + k, damping_used=damping))
            art["files"].append(str(path))
        if cfg.instances > 1:
            path = out / f"{alg.value}_average.csv"
            write_csv(path, AVERAGE_HEADER, average_trajectories(trajs), metadata(cfg, damping_used=damping))
            art["files"].append(str(path))
    elif cmd == "run-se":
        se = run_se(se_start(parse_scheme(cfg.scheme)), se_model(cfg), max_t=cfg.max_t, conv_tol=cfg.tol)
        art["se"] = se
        path = out / "se.csv"
        write_trajectory(path, se, metadata(cfg))
        art["files"].append(str(path))
    elif cmd == "solve-eos":
        fam = family_of(cfg)
        eos = solve_eos(fam, cfg.alpha, effective_lambda(cfg))
        art["eos"] = eos
        path = out / "eos.csv"
        rows = [(s.m, s.free_energy, s.kind, s.stable, k == eos.dominant) for k, s in enumerate(eos.solutions)]
        write_csv(path, "m,free_energy,kind,stable,dominant", rows, metadata(cfg, family=family_name(fam)))
        art["files"].append(str(path))
    elif cmd == "phase-diagram":
        fam = family_of(cfg)
        lam_grid = [l / cfg.delta for l in _grid(cfg, "lambda_grid")] if isinstance(
            parse_channel(cfg.channel, cfg.delta), AdditiveGaussian) else _grid(cfg, "lambda_grid")
        points, lines = trace_phase_diagram(fam, _grid(cfg, "alpha_grid"), lam_grid)
        art["transitions"] = lines
        p1, p2 = out / "phase_diagram.csv", out / "transition_lines.csv"
        write_csv(p1, PHASE_HEADER, [pt.row() for pt in points], metadata(cfg, family=family_name(fam)))
        write_csv(p2, TRANSITION_HEADER, [tl.row() for tl in lines], metadata(cfg, family=family_name(fam)))
        art["files"] += [str(p1), str(p2)]
    elif cmd == "compare":
        alg = Algorithm.RBP if cfg.algorithm == "rbp" else Algorithm.GAMP
        trajs = run_instances(cfg, alg)
        se = run_se(se_start(parse_scheme(cfg.scheme)), se_model(cfg), max_t=max(cfg.max_t, 1), conv_tol=1e-12)
        rows = compare_rows(average_trajectories(trajs), se)
        art.update(trajectories=trajs, se=se, compare=rows)
        path = out / "compare.csv"
        write_csv(path, COMPARE_HEADER, rows, metadata(cfg))
        art["files"].append(str(path))
    return art


# ---- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="densefactor", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--config")
    ap.add_argument("--jobs", type=str)
    ap.add_argument("--seed", type=str)
    ap.add_argument("--out", type=str)
    for flag in ("alpha", "lambda", "N", "M", "p", "delta", "prior", "channel", "spreading", "scheme",
                 "damping", "max-t", "tol", "instances", "species", "magnetization", "algorithm",
                 "alpha-grid", "lambda-grid"):
        ap.add_argument(f"--{flag}", type=str, dest=flag.replace("-", "_"))
    return ap


def error_line(exc: BaseException) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["key"] = exc.key
    return "ERROR " + json.dumps(payload, sort_keys=True)


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    path = args.pop("config")
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        cfg = parse_config(path, overrides)
    except ConfigError as exc:
        print(error_line(exc), file=sys.stderr)
        return 2
    try:
        art = run_experiment(cfg)
    except Exception as exc:  # surfaced as a machine-readable line
        print(error_line(exc), file=sys.stderr)
        return 1
    print(emit_report(art))
    return 0


if __name__ == "__main__":
    sys.exit(main())
