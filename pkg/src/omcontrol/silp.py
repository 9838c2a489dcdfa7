"""Finitely-constrained LP over discounted occupational measures.

``assemble`` discretizes the admissible graph into columns of an equality-
form LP: one row per nonconstant test function (the constant row is
identically zero and omitted) plus a probability-normalization row.
``solve`` runs the dense simplex and extracts the primal atomic measure
together with the dual certificate (the coefficient vector of the
polynomial surrogate and the optimal value).  ``refine`` prices a dense
candidate set against the certificate and appends the most-violating
admissible points, and ``solve_refined`` alternates the two until the
certificate is dually feasible on the candidate set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import model
from .basis import MonomialBasis, constraint_columns
from .errors import EmptyMeasure, InsufficientGrid, NonConverged
from .model import DiscreteControlProblem, StateActionPoint, admissible_mask
from .simplex import solve_equality_lp

_SCAN_CHUNK = 1 << 16
_WEIGHT_CLIP = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Per-axis point counts for the base discretization of the graph."""

    state: object = 9      # int, per-axis tuple, or explicit (K, m) array
    control: object = 9


@dataclass(frozen=True)
class CandidateSpec:
    """Candidate set the refinement pass prices against the certificate.

    A uniform tensor grid (typically 2-4x the base resolution) plus, when
    ``perturb_atoms`` is set, axis-aligned offsets of one base cell around
    every current atom.  At most ``max_new_columns`` points are appended
    per pass.
    """

    state: object = 17
    control: object = 17
    perturb_atoms: bool = True
    max_new_columns: int = 8


@dataclass
class FiniteLP:
    """Columns (admissible pairs), cost vector and equality rows."""

    states: np.ndarray        # (K, m)
    controls: np.ndarray      # (K, d)
    cost: np.ndarray          # (K,)
    matrix: np.ndarray        # (R, K); rows = nonconstant test functions, then normalization
    rhs: np.ndarray           # (R,)
    state_step: Optional[np.ndarray] = None    # base cell sizes, for atom perturbation
    control_step: Optional[np.ndarray] = None

    @property
    def n_columns(self) -> int:
        return self.states.shape[0]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def point(self, k: int) -> StateActionPoint:
        return StateActionPoint.of(self.states[k], self.controls[k])

    def extended(self, problem: DiscreteControlProblem, basis: MonomialBasis,
                 states, controls) -> "FiniteLP":
        """New LP with extra admissible columns appended in the given order."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        controls = np.atleast_2d(np.asarray(controls, dtype=float))
        cols = constraint_columns(basis, problem, states, controls)[1:]
        block = np.vstack([cols, np.ones((1, states.shape[0]))])
        return FiniteLP(
            states=np.vstack([self.states, states]),
            controls=np.vstack([self.controls, controls]),
            cost=np.concatenate([self.cost, problem.g(states, controls)]),
            matrix=np.hstack([self.matrix, block]),
            rhs=self.rhs,
            state_step=self.state_step,
            control_step=self.control_step,
        )


@dataclass
class AtomicMeasure:
    """Finitely supported probability measure on the admissible graph."""

    states: np.ndarray    # (K, m)
    controls: np.ndarray  # (K, d)
    weights: np.ndarray   # (K,) positive

    def __len__(self) -> int:
        return self.weights.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def atoms(self) -> Iterator[tuple[StateActionPoint, float]]:
        for k in range(len(self)):
            yield StateActionPoint.of(self.states[k], self.controls[k]), float(self.weights[k])

    def value(self, problem: DiscreteControlProblem) -> float:
        return float(self.weights @ problem.g(self.states, self.controls))


@dataclass
class DualCertificate:
    """Coefficients of the polynomial surrogate and the LP optimal value.

    ``lam[0]`` multiplies the constant test function; its row is omitted
    from the LP, so it is pinned to zero to make outputs reproducible.
    """

    lam: np.ndarray
    mu: float

    def psi(self, basis: MonomialBasis, y) -> np.ndarray:
        return basis.evaluate(y) @ self.lam

    def psi_fn(self, basis: MonomialBasis):
        return lambda y: basis.evaluate(y) @ self.lam


def assemble(problem: DiscreteControlProblem, basis: MonomialBasis,
             grid_spec: GridSpec) -> FiniteLP:
    """Discretize the admissible graph and build the equality-form LP."""
    if basis.dim != problem.state_dim:
        raise ValueError("basis dimension does not match the problem")
    s_pts = model.state_grid_points(problem, grid_spec.state)
    c_pts = model.control_grid_points(problem, grid_spec.control)
    ks, kc = len(s_pts), len(c_pts)
    states = np.repeat(s_pts, kc, axis=0)
    controls = np.tile(c_pts, (ks, 1))
    mask = admissible_mask(problem, states, controls)
    states, controls = states[mask], controls[mask]
    n_rows = basis.count
    if states.shape[0] < n_rows:
        raise InsufficientGrid(
            f"{states.shape[0]} admissible grid points for {n_rows} LP rows")
    cols = constraint_columns(basis, problem, states, controls)[1:]
    matrix = np.vstack([cols, np.ones((1, states.shape[0]))])
    rhs = np.zeros(n_rows)
    rhs[-1] = 1.0
    return FiniteLP(
        states=states,
        controls=controls,
        cost=problem.g(states, controls),
        matrix=matrix,
        rhs=rhs,
        state_step=_axis_steps(s_pts),
        control_step=_axis_steps(c_pts),
    )


def _axis_steps(points: np.ndarray) -> Optional[np.ndarray]:
    steps = np.empty(points.shape[1])
    for a in range(points.shape[1]):
        vals = np.unique(points[:, a])
        steps[a] = np.diff(vals).min() if vals.size > 1 else 0.0
    return steps


def solve(lp: FiniteLP, pivot_tol: float = 1e-9,
          stall_limit: int = 1000) -> tuple[AtomicMeasure, DualCertificate]:
    """Solve the finite LP; atoms are the positive basic variables.

    The dual of the normalization row is the optimal value ``mu``; the
    duals of the test-function rows give the surrogate coefficients (sign
    flipped so that the reduced cost reads g + shifted surrogate - mu).
    """
    res = solve_equality_lp(lp.matrix, lp.rhs, lp.cost,
                            pivot_tol=pivot_tol, stall_limit=stall_limit)
    x = np.where(np.abs(res.x) < _WEIGHT_CLIP, 0.0, res.x)
    support = np.nonzero(x > 0.0)[0]
    measure = AtomicMeasure(
        states=lp.states[support].copy(),
        controls=lp.controls[support].copy(),
        weights=x[support].copy(),
    )
    lam = np.concatenate([[0.0], -res.duals[:-1]])
    certificate = DualCertificate(lam=lam, mu=float(res.duals[-1]))
    return measure, certificate


def reduced_costs(problem: DiscreteControlProblem, basis: MonomialBasis,
                  certificate: DualCertificate, states, controls) -> np.ndarray:
    """g + shifted surrogate terms - mu at aligned admissible pairs.

    Negative values identify points the current certificate misprices;
    at atoms of the optimal measure the value is zero.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    a = problem.discount
    lam = certificate.lam
    psi_y0 = float(basis.evaluate(problem.initial_state) @ lam)
    out = np.empty(states.shape[0])
    for s in range(0, states.shape[0], _SCAN_CHUNK):
        sl = slice(s, min(s + _SCAN_CHUNK, states.shape[0]))
        ys, us = states[sl], controls[sl]
        psi_y = basis.evaluate(ys) @ lam
        psi_f = basis.evaluate(problem.f(ys, us)) @ lam
        out[sl] = (problem.g(ys, us) + a * (psi_f - psi_y)
                   + (1.0 - a) * (psi_y0 - psi_y) - certificate.mu)
    return out


def _candidate_blocks(problem, lp, measure, spec):
    """Yield (states, controls) blocks of the candidate set, admissibility unfiltered."""
    s_pts = model.state_grid_points(problem, spec.state)
    c_pts = model.control_grid_points(problem, spec.control)
    ks, kc = len(s_pts), len(c_pts)
    total = ks * kc
    for start in range(0, total, _SCAN_CHUNK):
        idx = np.arange(start, min(start + _SCAN_CHUNK, total))
        yield s_pts[idx // kc], c_pts[idx % kc]
    if spec.perturb_atoms and measure is not None and len(measure):
        yield _atom_perturbations(problem, lp, measure)


def _atom_perturbations(problem, lp, measure):
    """Axis-aligned offsets of one base cell around every atom, clipped to the boxes."""
    states, controls = [], []
    m, d = measure.states.shape[1], measure.controls.shape[1]
    s_step = lp.state_step if lp.state_step is not None else np.zeros(m)
    c_step = lp.control_step if lp.control_step is not None else np.zeros(d)
    control_is_box = isinstance(problem.control_region, model.Box)
    for k in range(len(measure)):
        y, u = measure.states[k], measure.controls[k]
        for a in range(m):
            if s_step[a] <= 0:
                continue
            for sign in (-1.0, 1.0):
                yp = y.copy()
                yp[a] += sign * s_step[a]
                states.append(problem.state_region.clip(yp))
                controls.append(u.copy())
        if not control_is_box:
            continue
        for a in range(d):
            if c_step[a] <= 0:
                continue
            for sign in (-1.0, 1.0):
                up = u.copy()
                up[a] += sign * c_step[a]
                states.append(y.copy())
                controls.append(problem.control_region.clip(up))
    if not states:
        return np.empty((0, m)), np.empty((0, d))
    return np.array(states), np.array(controls)


def scan_candidates(problem: DiscreteControlProblem, basis: MonomialBasis,
                    certificate: DualCertificate, lp: FiniteLP,
                    candidate_spec: CandidateSpec, tol: float,
                    measure: Optional[AtomicMeasure] = None):
    """Price the candidate set; return (min reduced cost, worst violators).

    The violators are the at most ``max_new_columns`` admissible candidates
    with reduced cost below -tol, most violating first, ties broken
    lexicographically on (y, u).
    """
    best_rc, best_y, best_u = [], [], []
    min_rc = np.inf
    cap = candidate_spec.max_new_columns
    for ys, us in _candidate_blocks(problem, lp, measure, candidate_spec):
        if ys.shape[0] == 0:
            continue
        mask = admissible_mask(problem, ys, us)
        ys, us = ys[mask], us[mask]
        if ys.shape[0] == 0:
            continue
        rc = reduced_costs(problem, basis, certificate, ys, us)
        min_rc = min(min_rc, float(rc.min()))
        viol = np.nonzero(rc < -tol)[0]
        if viol.size:
            keep = viol[np.argsort(rc[viol], kind="stable")[:cap]]
            best_rc.append(rc[keep])
            best_y.append(ys[keep])
            best_u.append(us[keep])
    if not best_rc:
        return min_rc, np.empty((0, problem.state_dim)), np.empty((0, problem.control_dim))
    rc = np.concatenate(best_rc)
    ys = np.vstack(best_y)
    us = np.vstack(best_u)
    keys = tuple(us[:, a] for a in range(us.shape[1] - 1, -1, -1)) \
        + tuple(ys[:, a] for a in range(ys.shape[1] - 1, -1, -1)) + (rc,)
    order = np.lexsort(keys)
    seen, picked = set(), []
    for k in order:
        key = (ys[k].tobytes(), us[k].tobytes())
        if key in seen:
            continue
        seen.add(key)
        picked.append(k)
        if len(picked) >= cap:
            break
    picked = np.array(picked, dtype=int)
    return min_rc, ys[picked], us[picked]


def refine(problem: DiscreteControlProblem, basis: MonomialBasis, lp: FiniteLP,
           certificate: DualCertificate, candidate_spec: CandidateSpec,
           tol: float, measure: Optional[AtomicMeasure] = None) -> Optional[FiniteLP]:
    """One cutting-plane pass: augmented LP, or None when dually feasible."""
    min_rc, ys, us = scan_candidates(problem, basis, certificate, lp,
                                     candidate_spec, tol, measure)
    if min_rc >= -tol:
        return None
    return lp.extended(problem, basis, ys, us)


def solve_refined(problem: DiscreteControlProblem, basis: MonomialBasis,
                  grid_spec: GridSpec, candidate_spec: CandidateSpec,
                  tol: float = 1e-6, max_rounds: int = 50,
                  pivot_tol: float = 1e-9,
                  history: Optional[list] = None) -> tuple[AtomicMeasure, DualCertificate, int]:
    """Alternate solve and refine until the candidate set certifies the dual.

    ``history``, when given, collects one record per round with the primal
    value, dual value, atom count and the scan's worst violation.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    lp = assemble(problem, basis, grid_spec)
    measure = certificate = None
    for rounds in range(1, max_rounds + 1):
        measure, certificate = solve(lp, pivot_tol=pivot_tol)
        min_rc, ys, us = scan_candidates(problem, basis, certificate, lp,
                                         candidate_spec, tol, measure)
        if history is not None:
            history.append({
                "round": rounds,
                "value": measure.value(problem),
                "mu": certificate.mu,
                "atoms": len(measure),
                "columns": lp.n_columns,
                "max_violation": max(0.0, -min_rc),
            })
        if min_rc >= -tol:
            return measure, certificate, rounds
        lp = lp.extended(problem, basis, ys, us)
    raise NonConverged(measure, certificate, max_rounds)


def discard_small_atoms(measure: AtomicMeasure, threshold: float) -> AtomicMeasure:
    """Drop atoms below the weight threshold and renormalize the rest."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    keep = measure.weights >= threshold
    if not keep.any():
        raise EmptyMeasure(f"every atom weighs less than {threshold}")
    w = measure.weights[keep]
    return AtomicMeasure(
        states=measure.states[keep].copy(),
        controls=measure.controls[keep].copy(),
        weights=w / w.sum(),
    )


# ---------------------------------------------------------------------------
# Solution file format.

def solution_to_json(measure: AtomicMeasure, certificate: DualCertificate,
                     value: float, rounds: int, max_dual_violation: float,
                     meta: Optional[dict] = None) -> str:
    doc = {
        "atoms": [[list(map(float, y)), list(map(float, u)), float(w)]
                  for (y, u), w in _atom_rows(measure)],
        "lambda": [float(v) for v in certificate.lam],
        "mu": float(certificate.mu),
        "value": float(value),
        "rounds": int(rounds),
        "max_dual_violation": float(max_dual_violation),
    }
    if meta:
        doc.update(meta)
    return json.dumps(doc, indent=2)


def _atom_rows(measure: AtomicMeasure):
    for k in range(len(measure)):
        yield (measure.states[k], measure.controls[k]), float(measure.weights[k])


def solution_from_json(text: str) -> tuple[AtomicMeasure, DualCertificate, dict]:
    doc = json.loads(text)
    atoms = doc["atoms"]
    if atoms:
        states = np.array([a[0] for a in atoms], dtype=float)
        controls = np.array([a[1] for a in atoms], dtype=float)
        weights = np.array([a[2] for a in atoms], dtype=float)
    else:
        states = np.empty((0, 0))
        controls = np.empty((0, 0))
        weights = np.empty(0)
    measure = AtomicMeasure(states=states, controls=controls, weights=weights)
    certificate = DualCertificate(lam=np.array(doc["lambda"], dtype=float), mu=float(doc["mu"]))
    return measure, certificate, doc
