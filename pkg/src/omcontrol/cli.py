"""Command-line driver: solve, rollout, verify.

Configuration comes from an optional key=value text file overridden by
flags.  All outputs land under the configured output directory: solution
JSON, human-readable summary, trajectory CSV and SVG, and a PASS/FAIL
verification report.  The pipeline is fully deterministic, so repeated
runs with the same configuration produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import model, silp, synthesis, verify
from .basis import MonomialBasis
from .errors import SolverError
from .model import builtin_problem
from .silp import CandidateSpec, GridSpec

_PROBLEM_DEFAULTS = {
    "example1": dict(degree=7, state_grid=(9,), control_grid=(9,),
                     candidate_state=(33,), candidate_control=(9,),
                     rollout_control_grid=(201,), vi_state_grid=(41,), vi_control_grid=(21,),
                     steps=50, slack=0.25, psi_slack=0.2, gap_slack=0.35),
    "shift": dict(degree=3, state_grid=(21,), control_grid=(21,),
                  candidate_state=(41,), candidate_control=(41,),
                  rollout_control_grid=(21,), vi_state_grid=(21,), vi_control_grid=(21,),
                  steps=50, slack=1e-6, psi_slack=1e-6, gap_slack=1e-6),
}


@dataclass
class RunConfig:
    problem: str = "example1"
    alpha: Optional[float] = None
    y0: Optional[tuple] = None
    degree: Optional[int] = None
    state_grid: Optional[tuple] = None
    control_grid: Optional[tuple] = None
    candidate_state: Optional[tuple] = None
    candidate_control: Optional[tuple] = None
    rollout_control_grid: Optional[tuple] = None
    vi_state_grid: Optional[tuple] = None
    vi_control_grid: Optional[tuple] = None
    tol: float = 1e-6
    pivot_tol: float = 1e-9
    epsilon: Optional[float] = None
    steps: Optional[int] = None
    policy: str = "minimizer"
    discard: float = 1e-2
    batch: int = 8
    max_rounds: int = 80
    slack: Optional[float] = None
    psi_slack: Optional[float] = None
    gap_slack: Optional[float] = None
    out: str = "out"
    seed: int = 0  # reserved; the pipeline is deterministic

    def resolved(self) -> "RunConfig":
        """Fill unset fields from the per-problem defaults."""
        defaults = _PROBLEM_DEFAULTS.get(self.problem, _PROBLEM_DEFAULTS["example1"])
        cfg = self
        for key, val in defaults.items():
            if getattr(cfg, key, None) is None:
                cfg = replace(cfg, **{key: val})
        return cfg


def _parse_counts(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(","))


def _parse_floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(","))


_CONFIG_PARSERS = {
    "problem": str,
    "alpha": float,
    "y0": _parse_floats,
    "degree": int,
    "state_grid": _parse_counts,
    "control_grid": _parse_counts,
    "candidate_state": _parse_counts,
    "candidate_control": _parse_counts,
    "rollout_control_grid": _parse_counts,
    "vi_state_grid": _parse_counts,
    "vi_control_grid": _parse_counts,
    "tol": float,
    "pivot_tol": float,
    "epsilon": float,
    "steps": int,
    "policy": str,
    "discard": float,
    "batch": int,
    "max_rounds": int,
    "slack": float,
    "psi_slack": float,
    "gap_slack": float,
    "out": str,
    "seed": int,
}


def read_config_file(path) -> RunConfig:
    cfg = RunConfig()
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        cfg = replace(cfg, **{key: _CONFIG_PARSERS[key](val.strip())})
    return cfg


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    mapping = {
        "problem": "problem", "alpha": "alpha", "degree": "degree",
        "tol": "tol", "epsilon": "epsilon", "steps": "steps",
        "policy": "policy", "discard": "discard", "out": "out",
        "batch": "batch", "max_rounds": "max_rounds",
    }
    for flag, key in mapping.items():
        val = getattr(args, flag, None)
        if val is not None:
            cfg = replace(cfg, **{key: val})
    if getattr(args, "y0", None) is not None:
        cfg = replace(cfg, y0=_parse_floats(args.y0))
    if getattr(args, "state_grid", None) is not None:
        cfg = replace(cfg, state_grid=_parse_counts(args.state_grid))
    if getattr(args, "control_grid", None) is not None:
        key = "rollout_control_grid" if args.command == "rollout" else "control_grid"
        cfg = replace(cfg, **{key: _parse_counts(args.control_grid)})
    if getattr(args, "candidate_grid", None) is not None:
        txt = str(args.candidate_grid)
        if ":" in txt:
            s_txt, c_txt = txt.split(":", 1)
            cfg = replace(cfg, candidate_state=_parse_counts(s_txt),
                          candidate_control=_parse_counts(c_txt))
        else:
            cfg = replace(cfg, candidate_state=_parse_counts(txt))
    return cfg


def _build(cfg: RunConfig):
    problem = builtin_problem(cfg.problem, alpha=cfg.alpha, y0=cfg.y0)
    basis = MonomialBasis(problem.state_dim, cfg.degree)
    return problem, basis


def _grid_specs(cfg: RunConfig):
    grid = GridSpec(state=cfg.state_grid, control=cfg.control_grid)
    cand = CandidateSpec(state=cfg.candidate_state, control=cfg.candidate_control,
                         max_new_columns=cfg.batch)
    return grid, cand


def cmd_solve(cfg: RunConfig) -> int:
    cfg = cfg.resolved()
    problem, basis = _build(cfg)
    grid, cand = _grid_specs(cfg)
    history: list = []
    measure, certificate, rounds = silp.solve_refined(
        problem, basis, grid, cand, tol=cfg.tol, max_rounds=cfg.max_rounds,
        pivot_tol=cfg.pivot_tol, history=history)
    value = measure.value(problem)
    lp = silp.assemble(problem, basis, grid)
    min_rc, _, _ = silp.scan_candidates(problem, basis, certificate, lp,
                                        cand, cfg.tol, measure)
    violation = max(0.0, -min_rc)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "problem": problem.name,
        "alpha": problem.discount,
        "y0": [float(v) for v in problem.initial_state],
        "degree": basis.max_degree,
    }
    (out / "solution.json").write_text(
        silp.solution_to_json(measure, certificate, value, rounds, violation, meta) + "\n")

    scale = 1.0 / (1.0 - problem.discount)
    lines = [
        f"problem            {problem.name}",
        f"discount           {problem.discount:.6g}",
        f"initial state      {tuple(float(v) for v in problem.initial_state)}",
        f"basis functions    {basis.count} (degree cap {basis.max_degree})",
        f"lp columns         {history[-1]['columns']}",
        f"refinement rounds  {rounds}",
        f"primal value       {value:.6f}",
        f"dual value         {certificate.mu:.6f}",
        f"value / (1-alpha)  {value * scale:.6f}",
        f"atoms              {len(measure)}",
        f"max dual violation {violation:.3e}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _load_solution(cfg: RunConfig):
    path = Path(cfg.out) / "solution.json"
    if not path.exists():
        raise FileNotFoundError(f"no solution file at {path}; run solve first")
    return silp.solution_from_json(path.read_text())


def cmd_rollout(cfg: RunConfig) -> int:
    cfg = cfg.resolved()
    if cfg.steps is not None and cfg.steps < 1:
        raise ValueError("steps must be at least 1")
    problem, basis = _build(cfg)
    measure, certificate, _ = _load_solution(cfg)

    if cfg.policy == "minimizer":
        policy = synthesis.minimizer_policy(problem, basis, certificate,
                                            cfg.rollout_control_grid)
    elif cfg.policy == "heuristic":
        trimmed = silp.discard_small_atoms(measure, cfg.discard)
        policy = synthesis.heuristic_policy(trimmed)
    else:
        raise ValueError(f"unknown policy {cfg.policy!r}")

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        roll = synthesis.rollout(problem, policy, epsilon=cfg.epsilon, steps=cfg.steps)
    except SolverError as exc:
        partial = getattr(exc, "steps", [])
        states = np.array([s[1] for s in partial]).reshape(len(partial), problem.state_dim)
        controls = np.array([s[2] for s in partial]).reshape(len(partial), problem.control_dim)
        part = synthesis.Rollout(states=states, controls=controls,
                                 truncated_value=float("nan"),
                                 truncation_bound=float("nan"),
                                 discount=problem.discount)
        synthesis.write_trajectory_csv(out / "trajectory.csv", part)
        raise

    synthesis.gap_certificate(roll, certificate)
    synthesis.write_trajectory_csv(out / "trajectory.csv", roll)
    overlay = silp.discard_small_atoms(measure, cfg.discard) if len(measure) else measure
    synthesis.write_trajectory_svg(out / "trajectory.svg", roll, overlay)
    print(f"policy {cfg.policy}: horizon {roll.horizon}, "
          f"value {roll.truncated_value:.6f}, gap {roll.gap:.6f}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    cfg = cfg.resolved()
    problem, basis = _build(cfg)
    measure, certificate, doc = _load_solution(cfg)
    states, controls, meta = synthesis.read_trajectory_csv(Path(cfg.out) / "trajectory.csv")
    roll = synthesis.Rollout(states=states, controls=controls,
                             truncated_value=meta["truncated_value"],
                             truncation_bound=meta["truncation_bound"],
                             discount=problem.discount)

    alpha = problem.discount
    checks = []

    gap_duality = abs(doc["value"] - certificate.mu)
    checks.append(("strong duality |value - mu|", gap_duality, 1e-6))

    support_ok = len(measure) <= basis.count + 1
    checks.append(("support size <= N+1", 0.0 if support_ok else float(len(measure)),
                   float(basis.count + 1)))

    residuals = verify.measure_residuals(measure, basis, problem)
    checks.append(("measure residuals", float(np.abs(residuals).max()), 1e-9))

    oracle = verify.value_iteration(problem, cfg.vi_state_grid, cfg.vi_control_grid,
                                    tol=1e-8)
    report = verify.check_optimality_conditions(
        problem, roll, certificate, oracle, basis, cfg.vi_control_grid, cfg.slack)
    checks.append(("stationarity residual", float(report.stationarity.max()), cfg.slack))
    checks.append(("value agreement spread", report.value_agreement_std, cfg.slack))
    checks.append(("one-step identity residual", float(report.hamiltonian.max()), cfg.slack))

    psi_violation = verify.check_psi_bound(certificate, oracle, problem, basis)
    checks.append(("surrogate bound violation", psi_violation, cfg.psi_slack))

    shifted = verify.check_shifted_inequality(
        certificate, certificate.mu / (1.0 - alpha), problem,
        model.tensor_points(oracle.axes), basis, cfg.vi_control_grid)
    checks.append(("shifted inequality violation", shifted, cfg.psi_slack))

    gap = abs(roll.truncated_value - certificate.mu / (1.0 - alpha))
    checks.append(("gap certificate", gap, cfg.gap_slack))

    grid, _ = _grid_specs(cfg)
    kappa = verify.estimate_kappa(problem, basis, grid, certificate.mu,
                                  oracle(problem.initial_state),
                                  pivot_tol=cfg.pivot_tol)

    lines = []
    all_ok = True
    for name, residual, threshold in checks:
        ok = residual <= threshold
        all_ok &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {residual:.3e} (tol {threshold:.3e})")
    lines.append(f"INFO kappa estimate: {kappa:.3e}")
    lines.append(f"INFO oracle value at y0: {oracle(problem.initial_state):.6f}")
    lines.append(f"INFO mu/(1-alpha): {certificate.mu / (1.0 - alpha):.6f}")
    text = "\n".join(lines) + "\n"
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    print(text, end="")
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omcontrol",
        description="Occupational-measure LP solver for discounted optimal control.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--problem", help="built-in problem name")
        p.add_argument("--alpha", type=float, help="discount factor override")
        p.add_argument("--y0", help="initial state, comma separated")
        p.add_argument("--degree", type=int, help="per-coordinate monomial degree cap")
        p.add_argument("--state-grid", help="state grid points per axis")
        p.add_argument("--control-grid", help="control grid points per axis "
                       "(rollout: the policy's search grid)")
        p.add_argument("--candidate-grid", help="refinement candidates, STATE[:CONTROL]")
        p.add_argument("--tol", type=float, help="dual feasibility tolerance")
        p.add_argument("--epsilon", type=float, help="truncation error target")
        p.add_argument("--steps", type=int, help="fixed rollout horizon")
        p.add_argument("--policy", choices=["minimizer", "heuristic"])
        p.add_argument("--discard", type=float, help="atom discard threshold")
        p.add_argument("--batch", type=int, help="columns added per refinement pass")
        p.add_argument("--max-rounds", dest="max_rounds", type=int)
        p.add_argument("--out", help="output directory")

    for name in ("solve", "rollout", "verify"):
        common(sub.add_parser(name))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config_file(args.config) if args.config else RunConfig()
        cfg = _apply_flags(cfg, args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "rollout":
            return cmd_rollout(cfg)
        return cmd_verify(cfg)
    except (SolverError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
