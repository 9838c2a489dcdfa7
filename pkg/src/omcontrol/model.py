"""Problem data for infinite-horizon discounted control in discrete time.

A :class:`DiscreteControlProblem` bundles the transition map ``f``, the
running cost ``g``, the state box ``Y``, the control region ``U`` (a box or
an explicit finite set, optionally narrowed by a state-dependent predicate),
a discount factor in (0, 1) and the initial state.  A state-control pair is
*admissible* when the control is allowed at the state and the successor
``f(y, u)`` stays inside ``Y``; every downstream module (LP assembly, policy
synthesis, value iteration) works on grids of admissible pairs.

Dynamics and cost callables must accept batched inputs: arrays of shape
``(K, m)`` / ``(K, d)`` in, ``(K, m)`` / ``(K,)`` out.  Plain elementwise
numpy expressions satisfy this automatically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import AssumptionIViolation, InadmissibleTransition, UnknownProblem

# Tolerance band on box faces: dynamics values landing exactly on a face
# must not flip admissibility under floating-point drift.
MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with a tolerant membership test and tensor grids."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(hi < lo):
            raise ValueError("box upper bound below lower bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, points, tol: float = MEMBERSHIP_TOL):
        """Membership mask; scalar for a single point, (K,) for a batch."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        ok = np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=1)
        return bool(ok[0]) if single else ok

    def axes(self, counts) -> list[np.ndarray]:
        counts = _per_axis_counts(counts, self.dim)
        return [np.linspace(self.lower[a], self.upper[a], counts[a]) for a in range(self.dim)]

    def grid(self, counts) -> np.ndarray:
        """Uniform tensor grid, rows in ascending lexicographic order."""
        return tensor_points(self.axes(counts))

    def clip(self, points) -> np.ndarray:
        return np.clip(np.asarray(points, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class FiniteSet:
    """Explicit finite control set, kept in lexicographic order."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        order = np.lexsort(pts.T[::-1])
        object.__setattr__(self, "points", pts[order])

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def contains(self, points, tol: float = MEMBERSHIP_TOL):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        ok = np.array([
            bool(np.any(np.all(np.abs(self.points - p) <= tol, axis=1))) for p in pts
        ])
        return bool(ok[0]) if single else ok

    def grid(self, counts=None) -> np.ndarray:
        return self.points


def _per_axis_counts(counts, dim: int) -> tuple[int, ...]:
    if np.isscalar(counts):
        counts = (int(counts),) * dim
    counts = tuple(int(c) for c in counts)
    if len(counts) == 1 and dim > 1:
        counts = counts * dim
    if len(counts) != dim:
        raise ValueError(f"expected {dim} per-axis counts, got {counts}")
    if any(c < 1 for c in counts):
        raise ValueError("grid counts must be positive")
    return counts


def tensor_points(axes) -> np.ndarray:
    """Cartesian product of 1-D axes, first axis varying slowest."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class StateActionPoint:
    """An admissible pair (y, u) of the graph of the admissible-action map."""

    state: tuple
    control: tuple

    @staticmethod
    def of(state, control) -> "StateActionPoint":
        return StateActionPoint(
            tuple(float(v) for v in np.atleast_1d(state)),
            tuple(float(v) for v in np.atleast_1d(control)),
        )


@dataclass(frozen=True)
class DiscreteControlProblem:
    """Immutable description of one discounted control problem.

    Attributes
    ----------
    state_dim : dimension m of the state space.
    dynamics : batched map (y, u) -> next state.
    cost : batched running cost (y, u) -> scalar.
    state_region : box Y the trajectory must stay in.
    control_region : box or finite set of raw controls.
    discount : discount factor in (0, 1).
    initial_state : starting state, must lie in Y.
    control_predicate : optional batched mask (y, u) -> bool narrowing the
        control region per state.
    """

    state_dim: int
    dynamics: Callable
    cost: Callable
    state_region: Box
    control_region: Union[Box, FiniteSet]
    discount: float
    initial_state: np.ndarray
    control_predicate: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount factor must lie in (0, 1), got {self.discount}")
        y0 = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        if y0.size != self.state_dim:
            raise ValueError("initial state dimension mismatch")
        if not self.state_region.contains(y0):
            raise ValueError(f"initial state {y0} outside the state region")
        object.__setattr__(self, "initial_state", y0)

    @property
    def control_dim(self) -> int:
        return self.control_region.dim

    def f(self, states, controls) -> np.ndarray:
        out = self.dynamics(np.asarray(states, dtype=float), np.asarray(controls, dtype=float))
        return np.asarray(out, dtype=float)

    def g(self, states, controls):
        out = self.cost(np.asarray(states, dtype=float), np.asarray(controls, dtype=float))
        return np.asarray(out, dtype=float)


def control_grid_points(problem: DiscreteControlProblem, spec=None) -> np.ndarray:
    """Resolve a control discretization spec into an ordered (K, d) array.

    ``spec`` may be per-axis counts for a box region, an explicit array of
    controls (used as given), or None for a finite-set region.
    """
    region = problem.control_region
    if isinstance(spec, np.ndarray):
        pts = spec.astype(float)
        return pts[:, None] if pts.ndim == 1 else pts
    if isinstance(region, FiniteSet):
        return region.points
    if spec is None:
        raise ValueError("a box control region needs a grid spec")
    return region.grid(spec)


def state_grid_points(problem: DiscreteControlProblem, spec) -> np.ndarray:
    if isinstance(spec, np.ndarray):
        pts = spec.astype(float)
        return pts[:, None] if pts.ndim == 1 else pts
    return problem.state_region.grid(spec)


def admissible_mask(problem: DiscreteControlProblem, states, controls) -> np.ndarray:
    """Admissibility of aligned (K, m)/(K, d) state-control pairs."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    ok = problem.state_region.contains(problem.f(states, controls))
    ok = np.atleast_1d(ok)
    if problem.control_predicate is not None:
        ok = ok & np.asarray(problem.control_predicate(states, controls), dtype=bool)
    return ok


def admissible_controls(problem: DiscreteControlProblem, y, control_grid) -> np.ndarray:
    """Grid controls u with f(y, u) in Y, in grid enumeration order.

    Raises :class:`AssumptionIViolation` when the admissible set is empty.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    grid = control_grid_points(problem, control_grid)
    tiled = np.broadcast_to(y, (len(grid), y.size))
    mask = admissible_mask(problem, tiled, grid)
    if not mask.any():
        raise AssumptionIViolation(tuple(y))
    return grid[mask]


def step(problem: DiscreteControlProblem, y, u) -> np.ndarray:
    """Apply the dynamics once; the successor must stay inside Y."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nxt = problem.f(y, u)
    if not problem.state_region.contains(nxt):
        raise InadmissibleTransition(f"f({tuple(y)}, {tuple(u)}) = {tuple(nxt)} leaves the state region")
    return nxt


# ---------------------------------------------------------------------------
# Built-in benchmark problems.  The registry is the extension point for
# additional problem families; arbitrary f, g from config text is out of
# scope by design.

def _example1(alpha: float = 0.9, y0=(0.5, 0.25)) -> DiscreteControlProblem:
    box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))

    def f(y, u):
        return 0.5 * y - 0.5 * u

    def g(y, u):
        return -y[..., 0] * u[..., 1] + y[..., 1] * u[..., 0]

    return DiscreteControlProblem(
        state_dim=2,
        dynamics=f,
        cost=g,
        state_region=box,
        control_region=Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
        discount=alpha,
        initial_state=np.asarray(y0, dtype=float),
        name="example1",
    )


def _shift(alpha: float = 0.5, y0=0.4) -> DiscreteControlProblem:
    # One-dimensional benchmark with f(y, u) = u and increasing cost g(y) = y,
    # g(0) = 0; the optimal control is u = 0 and V(y) = g(y) in closed form.
    box = Box(np.array([0.0]), np.array([1.0]))

    def f(y, u):
        return np.array(u, dtype=float, copy=True)

    def g(y, u):
        return y[..., 0]

    return DiscreteControlProblem(
        state_dim=1,
        dynamics=f,
        cost=g,
        state_region=box,
        control_region=Box(np.array([0.0]), np.array([1.0])),
        discount=alpha,
        initial_state=np.atleast_1d(np.asarray(y0, dtype=float)),
        name="shift",
    )


PROBLEM_REGISTRY: dict[str, Callable[..., DiscreteControlProblem]] = {
    "example1": _example1,
    "shift": _shift,
}


def builtin_problem(name: str, alpha: float | None = None, y0=None) -> DiscreteControlProblem:
    """Instantiate a registered benchmark problem with optional overrides."""
    try:
        factory = PROBLEM_REGISTRY[name]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; known: {sorted(PROBLEM_REGISTRY)}") from None
    kwargs = {}
    if alpha is not None:
        kwargs["alpha"] = float(alpha)
    if y0 is not None:
        kwargs["y0"] = y0
    return factory(**kwargs)


def check_assumption_i(problem: DiscreteControlProblem, state_grid, control_grid) -> None:
    """Verify every sampled state has an admissible control (hard error)."""
    for y in state_grid_points(problem, state_grid):
        admissible_controls(problem, y, control_grid)
