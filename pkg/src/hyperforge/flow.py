"""Endpoint-parameterized flow matching utilities.

States follow straight-line interpolants x_t = t * x1 + (1 - t) * x0.  Models
predict the endpoint x1; the induced velocity is (x1_hat - x_t) / (1 - t).
Binary/ternary structure targets live in [-1, 1]; budget-split fractions live
on per-group probability simplices and travel through the affine map
x -> 2x - 1.  Noise for split heads comes from a symmetric Dirichlet; noise
within expanded sibling pairs can be optimal-transport coupled by a cost-based
swap that preserves the per-slot noise marginals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "FlowHeadSpec",
    "FlowState",
    "TERMINAL_TIME_EPS",
    "interpolate",
    "endpoint_velocity",
    "fm_loss",
    "sample_prior",
    "simplex_project",
    "project_split_groups",
    "ot_couple",
    "integrate",
    "signed_from_unit",
    "unit_from_signed",
]

TERMINAL_TIME_EPS = 1e-5


@dataclass(frozen=True)
class FlowHeadSpec:
    """Name, prior family and Dirichlet concentration of one flow head."""

    name: str
    prior: str = "gaussian"
    dirichlet_alpha: float = 1.5

    def __post_init__(self):
        if self.prior not in ("gaussian", "dirichlet"):
            raise ValueError(f"unknown prior family {self.prior!r}")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be positive")


@dataclass
class FlowState:
    """Per-head arrays of noisy values at a common time t."""

    values: dict[str, np.ndarray]
    t: float


def signed_from_unit(x: np.ndarray) -> np.ndarray:
    """[0, 1] fractions -> [-1, 1] flow coordinates."""
    return 2.0 * np.asarray(x, dtype=np.float64) - 1.0


def unit_from_signed(x: np.ndarray) -> np.ndarray:
    """[-1, 1] flow coordinates -> [0, 1] fractions."""
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def interpolate(x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
    """Straight-line interpolant t * x1 + (1 - t) * x0."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("endpoint shapes differ")
    return t * x1 + (1.0 - t) * x0


def endpoint_velocity(x_t: np.ndarray, x1_hat: np.ndarray, t: float) -> np.ndarray:
    """Velocity induced by an endpoint prediction: (x1_hat - x_t) / (1 - t).

    Raises:
        ValueError: once t is within 1e-5 of 1; callers must switch to the
            terminal rule (assign the predicted endpoint directly).
    """
    if t >= 1.0 - TERMINAL_TIME_EPS:
        raise ValueError("velocity is singular near t = 1; use the terminal rule")
    x_t = np.asarray(x_t, dtype=np.float64)
    x1_hat = np.asarray(x1_hat, dtype=np.float64)
    if x_t.shape != x1_hat.shape:
        raise ValueError("shapes differ")
    return (x1_hat - x_t) / (1.0 - t)


def fm_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean squared endpoint error over unmasked entries (0.0 when empty)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction/target shapes differ")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ValueError("mask shape differs")
        pred, target = pred[mask], target[mask]
    if pred.size == 0:
        return 0.0
    diff = pred - target
    return float(np.mean(diff * diff))


def _check_groups(groups: Sequence[Sequence[int]], size: int, max_size: int | None) -> None:
    seen: set[int] = set()
    for g in groups:
        if len(g) == 0:
            raise ValueError("empty sibling group")
        if max_size is not None and len(g) > max_size:
            raise ValueError(f"sibling group of size {len(g)} not supported here")
        for i in g:
            if not 0 <= int(i) < size:
                raise ValueError("group index out of range")
            if int(i) in seen:
                raise ValueError("groups must be disjoint")
            seen.add(int(i))
    if len(seen) != size:
        raise ValueError("groups must cover every index")


def sample_prior(
    spec: FlowHeadSpec,
    shape: tuple[int, ...],
    rng: np.random.Generator,
    sibling_groups: Sequence[Sequence[int]] | None = None,
) -> np.ndarray:
    """Draw x0 noise for one head.

    Gaussian heads get i.i.d. standard normals.  Dirichlet heads (budget
    splits) draw one symmetric Dirichlet per sibling group, mapped by 2x - 1;
    singleton groups are the constant 1.
    """
    if spec.prior == "gaussian":
        return rng.standard_normal(shape)
    if len(shape) != 1:
        raise ValueError("dirichlet prior is defined over a flat per-child vector")
    if sibling_groups is None:
        raise ValueError("dirichlet prior needs sibling groups")
    _check_groups(sibling_groups, shape[0], max_size=None)
    out = np.empty(shape[0], dtype=np.float64)
    for g in sibling_groups:
        if len(g) == 1:
            out[int(g[0])] = 1.0
        else:
            draw = rng.dirichlet([spec.dirichlet_alpha] * len(g))
            for slot, val in zip(g, draw):
                out[int(slot)] = 2.0 * val - 1.0
    return out


def simplex_project(z) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex.

    Sorted-threshold procedure: sort descending, find the largest prefix whose
    running mean stays under its last element, subtract that threshold, clip
    at zero.  The result sums to one with non-negative entries.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise ValueError("cannot project an empty vector")
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, z.size + 1)
    cond = u - css / idx > 0
    rho = int(np.nonzero(cond)[0][-1]) + 1
    tau = css[rho - 1] / rho
    return np.maximum(z - tau, 0.0)


def project_split_groups(values: np.ndarray, sibling_groups: Sequence[Sequence[int]]) -> np.ndarray:
    """Project mapped split coordinates group-wise back onto valid splits.

    Values live in the 2x - 1 coordinates; each sibling group is mapped to
    fraction space, projected onto its simplex, and mapped back.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    _check_groups(sibling_groups, values.shape[0], max_size=None)
    out = np.empty_like(values)
    for g in sibling_groups:
        idx = [int(i) for i in g]
        if len(idx) == 1:
            out[idx[0]] = 1.0
            continue
        frac = simplex_project(unit_from_signed(values[idx]))
        out[idx] = signed_from_unit(frac)
    return out


def ot_couple(
    noise: np.ndarray,
    targets: np.ndarray,
    sibling_groups: Sequence[Sequence[int]],
) -> np.ndarray:
    """Optimal-transport coupling inside sibling pairs.

    For every group {i, j} the noise rows are swapped iff the swapped
    assignment has strictly lower total squared distance to the targets.
    Targets are never modified; singleton groups pass through.

    Raises:
        ValueError: for groups larger than two or mismatched shapes.
    """
    noise = np.array(noise, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if noise.shape != targets.shape:
        raise ValueError("noise/target shapes differ")
    flat_noise = noise.reshape(noise.shape[0], -1)
    flat_targets = targets.reshape(targets.shape[0], -1)
    _check_groups(sibling_groups, noise.shape[0], max_size=2)
    for g in sibling_groups:
        if len(g) != 2:
            continue
        i, j = int(g[0]), int(g[1])
        keep = np.sum((flat_noise[i] - flat_targets[i]) ** 2) + np.sum(
            (flat_noise[j] - flat_targets[j]) ** 2
        )
        swap = np.sum((flat_noise[j] - flat_targets[i]) ** 2) + np.sum(
            (flat_noise[i] - flat_targets[j]) ** 2
        )
        if swap < keep:
            noise[[i, j]] = noise[[j, i]]
    return noise


def integrate(
    endpoint_fn: Callable[[Mapping[str, np.ndarray], float], Mapping[str, np.ndarray]],
    initial: Mapping[str, np.ndarray],
    steps: int,
    project: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]] | None = None,
) -> dict[str, np.ndarray]:
    """Explicit Euler integration of the endpoint-parameterized flow.

    Uniform grid t_i = i / steps.  Every endpoint prediction is passed through
    ``project`` (e.g. group-wise simplex projection of the split head) before
    use.  The final step assigns the predicted endpoint directly, avoiding the
    1 / (1 - t) singularity; with steps = 1 the output is the first endpoint
    prediction.

    Raises:
        ValueError: on non-finite values, with the offending head and step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    state = {k: np.array(v, dtype=np.float64) for k, v in initial.items()}
    dt = 1.0 / steps
    for i in range(steps):
        t = i / steps
        pred = dict(endpoint_fn(state, t))
        if set(pred) != set(state):
            raise ValueError("endpoint prediction must cover every head")
        if project is not None:
            pred = dict(project(pred))
        for name, arr in pred.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != state[name].shape:
                raise ValueError(f"head {name!r}: prediction shape changed")
            bad = ~np.isfinite(arr)
            if bad.any():
                raise ValueError(
                    f"non-finite endpoint for head {name!r} at step {i} "
                    f"({int(bad.sum())} entries)"
                )
            if i == steps - 1:
                state[name] = arr
            else:
                state[name] = state[name] + dt * (arr - state[name]) / (1.0 - t)
    return state
