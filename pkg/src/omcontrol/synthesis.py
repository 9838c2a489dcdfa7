"""Near-optimal feedback synthesis and trajectory simulation.

Two feedback rules are provided: the surrogate minimizer, which picks the
control minimizing g(y, u) + alpha * psi(f(y, u)) over an admissible
control grid by exhaustive search (the inner problem is generally not
convex, and the control spaces here are low-dimensional), and the
nearest-atom heuristic, which copies the control of the concentration
point whose state component is closest to the current state, breaking
distance ties by weight.  ``rollout`` simulates either rule for long
enough that the discounted tail is below a requested truncation error,
and the gap against the LP value certifies near-optimality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .basis import MonomialBasis
from .errors import (AssumptionIIViolation, AssumptionIViolation,
                     InadmissibleTransition, RolloutAborted)
from .model import (Box, DiscreteControlProblem, admissible_controls,
                    admissible_mask, control_grid_points, step)
from .silp import AtomicMeasure, DualCertificate

_TIE_TOL = 1e-9
_DISTANCE_TIE_TOL = 1e-12
_MAX_HORIZON = 100_000


@dataclass
class Rollout:
    """Simulated trajectory with its truncated discounted value."""

    states: np.ndarray     # (T+1, m)
    controls: np.ndarray   # (T+1, d)
    truncated_value: float
    truncation_bound: float
    discount: float
    gap: Optional[float] = None

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def steps(self) -> list:
        return [(t, self.states[t].copy(), self.controls[t].copy())
                for t in range(self.states.shape[0])]


def minimizer_control(problem: DiscreteControlProblem, basis: MonomialBasis,
                      certificate: DualCertificate, y, control_grid,
                      polish: bool = False, polish_iters: int = 32) -> np.ndarray:
    """Exhaustive argmin of g(y, u) + alpha * psi(f(y, u)) over the grid.

    Values within an absolute tie tolerance of the minimum count as tied
    and the lexicographically smallest control wins, so corner optima and
    exact symmetric ties resolve deterministically.  With ``polish`` the
    grid argmin is refined by coordinatewise golden-section search within
    one grid cell (the objective is generally nonconvex globally, so the
    search never leaves the winning cell); inadmissible probes are scored
    +inf, and polishing is skipped for finite control sets.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    grid = admissible_controls(problem, y, control_grid)
    tiled = np.broadcast_to(y, (len(grid), y.size))
    psi_f = certificate.psi(basis, problem.f(tiled, grid))
    vals = problem.g(tiled, grid) + problem.discount * psi_f
    tied = np.nonzero(vals <= vals.min() + _TIE_TOL)[0]
    pick = tied[np.lexsort(tuple(grid[tied, a] for a in range(grid.shape[1] - 1, -1, -1)))[0]]
    best = grid[pick].copy()
    if polish and isinstance(problem.control_region, Box):
        cells = _grid_cells(grid)
        if np.all(cells > 0):
            best = _polish_control(problem, basis, certificate, y, best, cells, polish_iters)
    return best


def _grid_cells(grid: np.ndarray) -> np.ndarray:
    cells = np.zeros(grid.shape[1])
    for a in range(grid.shape[1]):
        vals = np.unique(grid[:, a])
        cells[a] = np.diff(vals).min() if vals.size > 1 else 0.0
    return cells


def _polish_control(problem, basis, certificate, y, u0, cells, iters):
    """Two coordinatewise golden-section sweeps inside the winning cell."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    region = problem.control_region

    def objective(u):
        if not admissible_mask(problem, y[None, :], u[None, :])[0]:
            return np.inf
        psi_f = float(certificate.psi(basis, problem.f(y[None, :], u[None, :])[0]))
        return float(problem.g(y[None, :], u[None, :])[0]) + problem.discount * psi_f

    u = u0.copy()
    f_u = objective(u)
    for _ in range(2):
        for axis in range(u.size):
            lo = max(u[axis] - cells[axis], region.lower[axis])
            hi = min(u[axis] + cells[axis], region.upper[axis])
            a, b = lo, hi
            c = b - invphi * (b - a)
            d = a + invphi * (b - a)
            uc, ud = u.copy(), u.copy()
            uc[axis], ud[axis] = c, d
            fc, fd = objective(uc), objective(ud)
            for _ in range(iters):
                if fc <= fd:
                    b, d, fd = d, c, fc
                    c = b - invphi * (b - a)
                    uc[axis] = c
                    fc = objective(uc)
                else:
                    a, c, fc = c, d, fd
                    d = a + invphi * (b - a)
                    ud[axis] = d
                    fd = objective(ud)
            mid = u.copy()
            mid[axis] = 0.5 * (a + b)
            f_mid = objective(mid)
            if f_mid < f_u:
                u, f_u = mid, f_mid
    return u


def heuristic_control(measure: AtomicMeasure, y) -> np.ndarray:
    """Control of the atom nearest to y in state space.

    Among atoms at (numerically) equal distance the greatest weight wins,
    then lexicographic order on (y, u).  If the winning state coincides
    with another equidistant atom's state but their controls differ, the
    finite policy is ill-defined and the call fails.
    """
    if len(measure) == 0:
        raise ValueError("empty measure")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dist = np.linalg.norm(measure.states - y[None, :], axis=1)
    tied = np.nonzero(dist <= dist.min() + _DISTANCE_TIE_TOL)[0]
    order = np.lexsort(
        tuple(measure.controls[tied, a] for a in range(measure.controls.shape[1] - 1, -1, -1))
        + tuple(measure.states[tied, a] for a in range(measure.states.shape[1] - 1, -1, -1))
        + (-measure.weights[tied],)
    )
    winner = tied[order[0]]
    for k in tied:
        if k == winner:
            continue
        same_y = np.max(np.abs(measure.states[k] - measure.states[winner])) <= _DISTANCE_TIE_TOL
        diff_u = np.max(np.abs(measure.controls[k] - measure.controls[winner])) > _DISTANCE_TIE_TOL
        if same_y and diff_u:
            raise AssumptionIIViolation(
                f"atoms {k} and {winner} share state {tuple(measure.states[winner])} "
                "with different controls")
    return measure.controls[winner].copy()


def minimizer_policy(problem, basis, certificate, control_grid) -> Callable:
    grid = control_grid_points(problem, control_grid)
    return lambda y: minimizer_control(problem, basis, certificate, y, grid)


def heuristic_policy(measure: AtomicMeasure) -> Callable:
    return lambda y: heuristic_control(measure, y)


def cost_bound(problem: DiscreteControlProblem, sample: int = 9) -> float:
    """max |g| over a coarse state-control tensor sample, computed once."""
    s_pts = problem.state_region.grid(sample)
    c_pts = control_grid_points(problem, sample)
    states = np.repeat(s_pts, len(c_pts), axis=0)
    controls = np.tile(c_pts, (len(s_pts), 1))
    return float(np.abs(problem.g(states, controls)).max())


def truncation_horizon(alpha: float, g_max: float, epsilon: float) -> int:
    """Smallest T with alpha^(T+1) / (1 - alpha) * g_max <= epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    tail = g_max / (1.0 - alpha)
    horizon = 0
    while tail * alpha ** (horizon + 1) > epsilon and horizon < _MAX_HORIZON:
        horizon += 1
    return horizon


def rollout(problem: DiscreteControlProblem, policy: Callable,
            epsilon: Optional[float] = None, steps: Optional[int] = None,
            g_max: Optional[float] = None) -> Rollout:
    """Simulate the feedback rule from the initial state.

    The horizon is ``steps`` when given, otherwise the smallest T whose
    discounted-tail bound drops below ``epsilon`` (default 1e-3 of the
    worst-case total cost).  Admissibility is re-verified at every step; a
    policy failure aborts with the partial trajectory attached.
    """
    alpha = problem.discount
    if g_max is None:
        g_max = cost_bound(problem)
    if steps is not None:
        horizon = int(steps)
        if horizon < 0:
            raise ValueError("steps must be nonnegative")
    else:
        if epsilon is None:
            epsilon = 1e-3 * g_max / (1.0 - alpha)
        horizon = truncation_horizon(alpha, g_max, epsilon)

    states, controls = [], []
    y = problem.initial_state.copy()
    partial = []
    for t in range(horizon + 1):
        try:
            u = np.atleast_1d(np.asarray(policy(y), dtype=float))
            states.append(y.copy())
            controls.append(u.copy())
            partial.append((t, y.copy(), u.copy()))
            y = step(problem, y, u)
        except (AssumptionIViolation, AssumptionIIViolation, InadmissibleTransition) as exc:
            raise RolloutAborted(partial, exc) from exc

    states = np.array(states)
    controls = np.array(controls)
    costs = problem.g(states, controls)
    value = float(np.sum(costs * alpha ** np.arange(horizon + 1)))
    bound = float(alpha ** (horizon + 1) / (1.0 - alpha) * g_max)
    return Rollout(states=states, controls=controls, truncated_value=value,
                   truncation_bound=bound, discount=alpha)


def gap_certificate(roll: Rollout, certificate: DualCertificate) -> float:
    """|truncated value - mu / (1 - alpha)|; upper-bounds the suboptimality
    of the rolled-out policy up to truncation error."""
    gap = abs(roll.truncated_value - certificate.mu / (1.0 - roll.discount))
    roll.gap = gap
    return gap


def control_pattern(roll: Rollout, from_t: int, tol: float = 1e-9) -> Optional[int]:
    """Smallest period of the control sequence from ``from_t`` on, or None."""
    horizon = roll.horizon
    if from_t >= horizon:
        raise ValueError("from_t must precede the final step")
    u = roll.controls
    for period in range(1, horizon - from_t + 1):
        ts = np.arange(from_t, horizon - period + 1)
        if ts.size == 0:
            break
        if np.all(np.abs(u[ts + period] - u[ts]) <= tol):
            return period
    return None


# ---------------------------------------------------------------------------
# Trajectory exports.

def _fmt(x: float) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0  # normalize -0.0
    return f"{x:.6g}"


def write_trajectory_csv(path, roll: Rollout) -> None:
    m = roll.states.shape[1]
    d = roll.controls.shape[1]
    header = ["t"] + [f"y{i+1}" for i in range(m)] + [f"u{i+1}" for i in range(d)]
    lines = [",".join(header)]
    for t in range(roll.horizon + 1):
        row = [str(t)] + [_fmt(v) for v in roll.states[t]] + [_fmt(v) for v in roll.controls[t]]
        lines.append(",".join(row))
    lines.append(f"# truncated_value,{_fmt(roll.truncated_value)}")
    lines.append(f"# truncation_bound,{_fmt(roll.truncation_bound)}")
    if roll.gap is not None:
        lines.append(f"# gap,{_fmt(roll.gap)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read states, controls and footer metadata back from a trajectory file."""
    rows, meta = [], {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        m = sum(1 for h in header if h.startswith("y"))
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(",")
                meta[key.strip()] = float(val)
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows)
    states = data[:, 1:1 + m]
    controls = data[:, 1 + m:]
    return states, controls, meta


def write_trajectory_svg(path, roll: Rollout, measure: Optional[AtomicMeasure] = None,
                         size: int = 480, margin: float = 24.0) -> None:
    """State trajectory as an SVG polyline with atoms as weight-scaled circles.

    Two-dimensional states plot as (y1, y2); one-dimensional states plot
    against time with atoms pinned to the left edge.
    """
    m = roll.states.shape[1]
    if m >= 2:
        xs, ys = roll.states[:, 0], roll.states[:, 1]
        ax, ay = (None, None)
        if measure is not None and len(measure):
            ax, ay = measure.states[:, 0], measure.states[:, 1]
    else:
        xs = np.arange(roll.horizon + 1, dtype=float)
        ys = roll.states[:, 0]
        ax = ay = None
        if measure is not None and len(measure):
            ax = np.zeros(len(measure))
            ay = measure.states[:, 0]

    all_x = xs if ax is None else np.concatenate([xs, ax])
    all_y = ys if ay is None else np.concatenate([ys, ay])
    lo_x, hi_x = float(all_x.min()), float(all_x.max())
    lo_y, hi_y = float(all_y.min()), float(all_y.max())
    span_x = hi_x - lo_x or 1.0
    span_y = hi_y - lo_y or 1.0
    inner = size - 2 * margin

    def sx(v):
        return margin + (v - lo_x) / span_x * inner

    def sy(v):
        return size - margin - (v - lo_y) / span_y * inner

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1"/>')
    if ax is not None:
        for x, y, w in zip(ax, ay, measure.weights):
            r = max(50.0 * float(w), 0.6)
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="{r:.2f}" '
                         f'fill="steelblue" fill-opacity="0.6"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
