"""End-to-end training, size-conditioned sampling, evaluation, and export.

Training draws coarsening levels from a per-graph cache, rebuilds the
expanded graph for one level, noises every head with optimal-transport
coupled priors, and regresses the denoiser onto clean endpoints.  Sampling
starts from the minimal one-node graph carrying the full budget and
alternates deterministic-size expansion with learned refinement until the
target node count is reached, enforcing the budget inpainting rules along
the way.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import load_checkpoint
from .coarsening import CoarseningCache, CoarseningParams, CoarseningSequence, sample_coarsening_sequence
from .denoiser import Denoiser, DenoiserConfig, DenoiserInput, spectral_rows
from .expansion import (
    ExpansionVectors,
    RefinementDecision,
    expand,
    perturb_expand,
    refine,
    split_budget,
)
from .flow import (
    FlowHeadSpec,
    fm_loss,
    integrate,
    interpolate,
    project_split_groups,
    sample_prior,
)
from .hypergraph import (
    BipartiteGraph,
    Hypergraph,
    collapse_bipartite,
    read_graphs_jsonl,
    write_graphs_jsonl,
)
from .datasets import load_dataset_split, read_manifest
from .metrics import (
    MetricReport,
    chamfer_nearest,
    degree_multiset,
    edge_size_multiset,
    node_num_diff,
    spectral_mmd,
    validity_fraction,
    wasserstein_1d,
)

__all__ = [
    "TrainConfig",
    "SampleRequest",
    "TrainingExample",
    "build_training_example",
    "train",
    "sample",
    "sample_one",
    "apply_inpainting",
    "least_expansion_count",
    "evaluate",
    "export",
    "write_dot",
]

RIGHT_THRESHOLD_LOW = 1.66
RIGHT_THRESHOLD_HIGH = 2.33
EDGE_KEEP_THRESHOLD = 0.5

HEAD_SPECS = {
    "left_expansion": FlowHeadSpec("left_expansion"),
    "left_split": FlowHeadSpec("left_split", prior="dirichlet"),
    "left_features": FlowHeadSpec("left_features"),
    "right_expansion": FlowHeadSpec("right_expansion"),
    "right_features": FlowHeadSpec("right_features"),
    "edge_keep": FlowHeadSpec("edge_keep"),
}

_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass
class TrainConfig:
    """Everything one training run needs; parsable from key=value lines."""

    data_dir: str = ""
    hidden_dim: int = 64
    num_layers: int = 4
    mlp_hidden: int = 128
    spectral_k: int = 8
    steps: int = 25
    lr: float = 1e-3
    max_steps: int = 2000
    seed: int = 0
    rho_min: float = 0.1
    rho_max: float = 0.3
    gate_lambda: float = 0.3
    preserve_k: int = 8
    perturb_radius: int = 2
    perturb_prob: float = 0.5
    perturbation: bool = True
    ot_coupling: bool = True
    checkpoint_dir: str = "runs/default"
    checkpoint_every: int = 500
    val_every: int = 250
    val_batches: int = 8
    log_path: str = ""

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """Parse a plain-text config of key=value lines (# comments allowed)."""
        known = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, val, known[key])
        return cls(**values)

    def coarsening_params(self) -> CoarseningParams:
        return CoarseningParams(
            rho_min=self.rho_min,
            rho_max=self.rho_max,
            gate_lambda=self.gate_lambda,
            preserve_k=self.preserve_k,
        )


def _coerce(key: str, val: str, typename: str):
    if "bool" in typename:
        low = val.lower()
        if low not in _BOOL_STRINGS:
            raise ValueError(f"config key {key!r}: cannot parse bool from {val!r}")
        return _BOOL_STRINGS[low]
    if "int" in typename:
        return int(val)
    if "float" in typename:
        return float(val)
    return val


@dataclass(frozen=True)
class SampleRequest:
    """One sampling job: how many graphs of which size from which checkpoint."""

    checkpoint: str
    n_nodes: int
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def _feat(arr: np.ndarray | None, rows: int, dim: int) -> np.ndarray:
    if arr is None:
        return np.zeros((rows, dim))
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != (rows, dim):
        raise ValueError(f"feature block has shape {arr.shape}, expected {(rows, dim)}")
    return arr


def _sibling_groups(cluster_map: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    start = 0
    n = cluster_map.shape[0]
    for i in range(1, n + 1):
        if i == n or cluster_map[i] != cluster_map[start]:
            groups.append(list(range(start, i)))
            start = i
    return groups


@dataclass
class TrainingExample:
    """One assembled supervision instance at a sampled coarsening level."""

    expanded: BipartiteGraph
    parent: BipartiteGraph
    v_parent: ExpansionVectors
    targets: dict[str, np.ndarray]
    rho_hat: float
    total_left: int
    left_groups: list[list[int]]
    right_groups: list[list[int]]


def build_training_example(
    seq: CoarseningSequence,
    level_index: int,
    rng: np.random.Generator,
    node_feature_dim: int,
    edge_feature_dim: int,
    perturbation: bool = True,
    perturb_radius: int = 2,
    perturb_prob: float = 0.5,
) -> TrainingExample:
    """Rebuild the expanded graph at one level and derive endpoint targets.

    The input graph is the (optionally perturbed) expansion of the next
    coarser level; refinement targets come from the stored decision via edge
    membership in the finer level, and expansion targets come from the finer
    level's own stored expansion (all-ones at the finest level).
    """
    levels = seq.levels
    top = len(levels) - 1
    l = level_index
    if not 0 <= l <= top:
        raise ValueError("level index out of range")

    if l < top:
        parent = levels[l + 1].bipartite
        v_parent = levels[l + 1].expansion
        stored = levels[l + 1].refinement
        fine = levels[l].bipartite
        split_fracs = stored.budget_split
        left_feat_target = _feat(fine.left_features, fine.num_left, node_feature_dim)
        right_feat_target = _feat(fine.right_features, fine.num_right, edge_feature_dim)
    else:
        parent = levels[top].bipartite
        v_parent = ExpansionVectors(
            np.ones(parent.num_left, dtype=np.int64), np.ones(parent.num_right, dtype=np.int64)
        )
        fine = parent
        split_fracs = np.ones(parent.num_left)
        left_feat_target = np.zeros((parent.num_left, node_feature_dim))
        right_feat_target = np.zeros((parent.num_right, edge_feature_dim))

    if perturbation:
        expanded = perturb_expand(parent, v_parent, perturb_radius, perturb_prob, rng)
    else:
        expanded = expand(parent, v_parent)
    if expanded.num_left != fine.num_left or expanded.num_right != fine.num_right:
        raise AssertionError("expanded level size drifted from the stored level")

    fine_edges = {(int(a), int(b)) for a, b in fine.edges}
    edge_target = np.array(
        [1.0 if (int(a), int(b)) in fine_edges else -1.0 for a, b in expanded.edges]
    ).reshape(-1, 1)

    if l >= 1:
        v_next = levels[l].expansion
        left_v_target = (v_next.left.astype(np.float64) * 2.0 - 3.0).reshape(-1, 1)
        right_v_target = (v_next.right.astype(np.float64) - 2.0).reshape(-1, 1)
        rho_hat = 1.0 - levels[l].bipartite.num_left / levels[l - 1].bipartite.num_left
    else:
        left_v_target = np.full((fine.num_left, 1), -1.0)
        right_v_target = np.full((fine.num_right, 1), -1.0)
        rho_hat = 0.0

    targets = {
        "left_expansion": left_v_target,
        "left_split": (2.0 * np.asarray(split_fracs, dtype=np.float64) - 1.0).reshape(-1, 1),
        "left_features": left_feat_target,
        "right_expansion": right_v_target,
        "right_features": right_feat_target,
        "edge_keep": edge_target,
    }
    return TrainingExample(
        expanded=expanded,
        parent=parent,
        v_parent=v_parent,
        targets=targets,
        rho_hat=float(rho_hat),
        total_left=levels[0].bipartite.num_left,
        left_groups=_sibling_groups(expanded.cluster_of_left),
        right_groups=_sibling_groups(expanded.cluster_of_right),
    )


@dataclass
class _Conditioning:
    """Per-level tensors that stay fixed across flow evaluations."""

    left_spectral: np.ndarray
    right_spectral: np.ndarray
    eigenvalues: np.ndarray
    left_parent_features: np.ndarray
    right_parent_features: np.ndarray


def _conditioning(
    parent: BipartiteGraph,
    v_parent: ExpansionVectors,
    spectral_k: int,
    node_feature_dim: int,
    edge_feature_dim: int,
) -> _Conditioning:
    lrows, rrows, lam = spectral_rows(parent, spectral_k)
    plf = _feat(parent.left_features, parent.num_left, node_feature_dim)
    prf = _feat(parent.right_features, parent.num_right, edge_feature_dim)
    return _Conditioning(
        left_spectral=np.repeat(lrows, v_parent.left, axis=0),
        right_spectral=np.repeat(rrows, v_parent.right, axis=0),
        eigenvalues=lam,
        left_parent_features=np.repeat(plf, v_parent.left, axis=0),
        right_parent_features=np.repeat(prf, v_parent.right, axis=0),
    )


def _make_input(
    expanded: BipartiteGraph,
    cond: _Conditioning,
    state: dict[str, np.ndarray],
    t: float,
    rho_hat: float,
    total_left: float,
) -> DenoiserInput:
    return DenoiserInput(
        edges=expanded.edges,
        left_spectral=cond.left_spectral,
        right_spectral=cond.right_spectral,
        eigenvalues=cond.eigenvalues,
        left_budgets=expanded.left_budgets.astype(np.float64),
        left_parent_features=cond.left_parent_features,
        right_parent_features=cond.right_parent_features,
        left_state=np.hstack([state["left_expansion"], state["left_split"]]),
        right_state=state["right_expansion"],
        edge_state=state["edge_keep"],
        left_feature_state=state["left_features"],
        right_feature_state=state["right_features"],
        t=t,
        rho_hat=rho_hat,
        total_left=total_left,
    )


def _head_shapes(expanded: BipartiteGraph, fm: int, fl: int) -> dict[str, tuple[int, ...]]:
    n, m, e = expanded.num_left, expanded.num_right, expanded.num_edges
    return {
        "left_expansion": (n, 1),
        "left_split": (n, 1),
        "left_features": (n, fm),
        "right_expansion": (m, 1),
        "right_features": (m, fl),
        "edge_keep": (e, 1),
    }


def _sample_noise(
    expanded: BipartiteGraph,
    left_groups: list[list[int]],
    fm: int,
    fl: int,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    shapes = _head_shapes(expanded, fm, fl)
    noise: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        spec = HEAD_SPECS[name]
        if spec.prior == "dirichlet":
            noise[name] = sample_prior(spec, (shape[0],), rng, sibling_groups=left_groups).reshape(-1, 1)
        else:
            noise[name] = sample_prior(spec, shape, rng)
    return noise


def _incident_edges(expanded: BipartiteGraph) -> tuple[list[dict[int, int]], list[dict[int, int]]]:
    left_inc: list[dict[int, int]] = [dict() for _ in range(expanded.num_left)]
    right_inc: list[dict[int, int]] = [dict() for _ in range(expanded.num_right)]
    for idx, (a, b) in enumerate(expanded.edges):
        left_inc[int(a)][int(b)] = idx
        right_inc[int(b)][int(a)] = idx
    return left_inc, right_inc


def couple_noise(
    noise: dict[str, np.ndarray],
    targets: dict[str, np.ndarray],
    example: TrainingExample,
) -> dict[str, np.ndarray]:
    """Optimal-transport coupling of prior noise within sibling pairs.

    For each left (then right) sibling pair, the joint row of node-head
    noise plus the noise on corresponding incident edges (matched through
    the shared opposite endpoint) is swapped between the two siblings
    whenever that strictly lowers the squared distance to the targets.
    Sibling triples pass through unchanged.
    """
    noise = {k: v.copy() for k, v in noise.items()}
    left_inc, right_inc = _incident_edges(example.expanded)

    def _rows(i, j, inc, head_names):
        shared = sorted(set(inc[i]) & set(inc[j]))
        ei = [inc[i][s] for s in shared]
        ej = [inc[j][s] for s in shared]
        zi = np.concatenate([noise[h][i] for h in head_names] + [noise["edge_keep"][ei, 0]])
        zj = np.concatenate([noise[h][j] for h in head_names] + [noise["edge_keep"][ej, 0]])
        xi = np.concatenate([targets[h][i] for h in head_names] + [targets["edge_keep"][ei, 0]])
        xj = np.concatenate([targets[h][j] for h in head_names] + [targets["edge_keep"][ej, 0]])
        return zi, zj, xi, xj, ei, ej

    def _couple(groups, inc, head_names):
        for g in groups:
            if len(g) != 2:
                continue
            i, j = g
            zi, zj, xi, xj, ei, ej = _rows(i, j, inc, head_names)
            keep = np.sum((zi - xi) ** 2) + np.sum((zj - xj) ** 2)
            swap = np.sum((zj - xi) ** 2) + np.sum((zi - xj) ** 2)
            if swap < keep:
                for h in head_names:
                    noise[h][[i, j]] = noise[h][[j, i]]
                eki, ekj = noise["edge_keep"][ei, 0].copy(), noise["edge_keep"][ej, 0].copy()
                noise["edge_keep"][ei, 0] = ekj
                noise["edge_keep"][ej, 0] = eki

    _couple(example.left_groups, left_inc, ("left_expansion", "left_split", "left_features"))
    _couple(example.right_groups, right_inc, ("right_expansion", "right_features"))
    return noise


def prepare_step(
    example: TrainingExample,
    rng: np.random.Generator,
    spectral_k: int,
    fm: int,
    fl: int,
    ot_coupling: bool = True,
) -> tuple[DenoiserInput, dict[str, np.ndarray]]:
    """Noise the targets at a uniform time and build the network input."""
    noise = _sample_noise(example.expanded, example.left_groups, fm, fl, rng)
    if ot_coupling:
        noise = couple_noise(noise, example.targets, example)
    t = float(rng.uniform())
    state = {k: interpolate(noise[k], example.targets[k], t) for k in noise}
    cond = _conditioning(example.parent, example.v_parent, spectral_k, fm, fl)
    inp = _make_input(example.expanded, cond, state, t, example.rho_hat, float(example.total_left))
    return inp, example.targets


def _feature_dims(graphs: list[Hypergraph]) -> tuple[int, int]:
    fm = fl = 0
    for h in graphs:
        if h.node_features is not None:
            fm = max(fm, h.node_features.shape[1])
        if h.hyperedge_features is not None:
            fl = max(fl, h.hyperedge_features.shape[1])
    return fm, fl


def _step_loss_tensor(denoiser: Denoiser, inp: DenoiserInput, targets: dict[str, np.ndarray]):
    out = denoiser.forward(inp)
    total = None
    for name in sorted(targets):
        if targets[name].size == 0:
            continue
        term = ad.mse_loss(out[name], targets[name])
        total = term if total is None else ad.add(total, term)
    return total


def _step_loss_value(denoiser: Denoiser, inp: DenoiserInput, targets: dict[str, np.ndarray]) -> float:
    preds = denoiser.predict(inp)
    return sum(
        fm_loss(preds[name], targets[name]) for name in sorted(targets) if targets[name].size
    )


def _validation_loss(
    denoiser: Denoiser,
    val_graphs: list[Hypergraph],
    cfg: TrainConfig,
    fm: int,
    fl: int,
) -> float:
    """Flow-matching loss on a fixed, reproducible validation draw."""
    vrng = np.random.default_rng([cfg.seed, 2])
    params = cfg.coarsening_params()
    losses = []
    for j in range(cfg.val_batches):
        g = val_graphs[j % len(val_graphs)]
        seq = sample_coarsening_sequence(g, params, vrng)
        level = int(vrng.integers(seq.num_levels))
        example = build_training_example(
            seq, level, vrng, fm, fl,
            perturbation=cfg.perturbation,
            perturb_radius=cfg.perturb_radius,
            perturb_prob=cfg.perturb_prob,
        )
        inp, targets = prepare_step(example, vrng, cfg.spectral_k, fm, fl, cfg.ot_coupling)
        losses.append(_step_loss_value(denoiser, inp, targets))
    return float(np.mean(losses))


def train(cfg: TrainConfig) -> dict:
    """Run the training loop; returns a summary with checkpoint paths.

    Writes ``checkpoint.hfck`` (latest), ``best.hfck`` (best validation
    loss), and a CSV loss log.  Aborts with a state dump on non-finite loss.
    """
    data_dir = Path(cfg.data_dir)
    if not (data_dir / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset manifest under {data_dir}")
    manifest = read_manifest(data_dir)
    train_graphs = load_dataset_split(data_dir, "train")
    val_graphs = load_dataset_split(data_dir, "val")
    if not train_graphs:
        raise ValueError("empty training split")
    fm, fl = _feature_dims(train_graphs)

    dconfig = DenoiserConfig(
        hidden_dim=cfg.hidden_dim,
        num_layers=cfg.num_layers,
        mlp_hidden=cfg.mlp_hidden,
        spectral_k=cfg.spectral_k,
        node_feature_dim=fm,
        edge_feature_dim=fl,
    )
    denoiser = Denoiser(dconfig, rng=np.random.default_rng([cfg.seed, 1]))
    rng = np.random.default_rng([cfg.seed, 0])
    cache = CoarseningCache(train_graphs, cfg.coarsening_params())

    ckpt_dir = Path(cfg.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = Path(cfg.log_path) if cfg.log_path else ckpt_dir / "loss_log.csv"
    latest_path = ckpt_dir / "checkpoint.hfck"
    best_path = ckpt_dir / "best.hfck"
    extra = {
        "train": {k: v for k, v in asdict(cfg).items()},
        "dataset_kind": manifest.get("kind"),
    }

    best_val = np.inf
    start = time.time()
    with log_path.open("w") as log:
        log.write("step,train_loss,val_loss\n")
        for step in range(1, cfg.max_steps + 1):
            graph_id = int(rng.integers(len(train_graphs)))
            item = cache.take(graph_id, rng)
            example = build_training_example(
                item.sequence, item.level_index, rng, fm, fl,
                perturbation=cfg.perturbation,
                perturb_radius=cfg.perturb_radius,
                perturb_prob=cfg.perturb_prob,
            )
            inp, targets = prepare_step(example, rng, cfg.spectral_k, fm, fl, cfg.ot_coupling)
            denoiser.store.zero_grad()
            loss = _step_loss_tensor(denoiser, inp, targets)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                dump = ckpt_dir / "abort_state.json"
                dump.write_text(json.dumps({
                    "step": step,
                    "graph_id": graph_id,
                    "level_index": item.level_index,
                    "t": inp.t,
                    "rho_hat": inp.rho_hat,
                    "loss": loss_val,
                }, indent=2))
                raise RuntimeError(f"non-finite loss at step {step}; state dumped to {dump}")
            ad.backward(loss)
            denoiser.store.adam_step(cfg.lr)

            val_str = ""
            if cfg.val_every and step % cfg.val_every == 0:
                val = _validation_loss(denoiser, val_graphs, cfg, fm, fl)
                val_str = f"{val:.8f}"
                if val < best_val:
                    best_val = val
                    denoiser.save(best_path, extra_config=extra)
            log.write(f"{step},{loss_val:.8f},{val_str}\n")
            log.flush()
            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                denoiser.save(latest_path, extra_config=extra)
    denoiser.save(latest_path, extra_config=extra)
    return {
        "checkpoint": str(latest_path),
        "best_checkpoint": str(best_path) if best_path.exists() else None,
        "best_val_loss": None if np.isinf(best_val) else float(best_val),
        "loss_log": str(log_path),
        "steps": cfg.max_steps,
        "wall_time_s": time.time() - start,
    }


def least_expansion_count(n: int, rho: float) -> int:
    """Smallest n⁺ with n⁺ = ceil(rho · (n + n⁺)), found by fixed iteration."""
    x = 0
    while True:
        nx = int(np.ceil(rho * (n + x)))
        if nx <= x:
            return x
        x = nx


def apply_inpainting(
    predictions: dict[str, np.ndarray],
    expanded: BipartiteGraph,
    left_groups: list[list[int]],
    right_groups: list[list[int]],
    v_parent: ExpansionVectors,
    n_plus: int,
    cond: _Conditioning,
    fm: int,
    fl: int,
) -> tuple[ExpansionVectors, RefinementDecision]:
    """Turn integrated endpoints into hard expansion and refinement choices.

    Applies the budget constraints: splits are 1 on singletons, (0.5, 0.5)
    on budget-2 pairs, clusters whose post-split budget is 1 cannot be
    expanded (n⁺ shrinks to the expandable count), and unexpanded children
    keep their parent's features on both sides.
    """
    budgets = expanded.left_budgets
    fractions = (predictions["left_split"].ravel() + 1.0) / 2.0
    for g in left_groups:
        if len(g) == 1:
            fractions[g[0]] = 1.0
        elif int(budgets[g[0]]) == 2:
            fractions[g] = 0.5
    child_budgets = np.empty(expanded.num_left, dtype=np.int64)
    for g in left_groups:
        child_budgets[g] = split_budget(int(budgets[g[0]]), fractions[g])

    scores = predictions["left_expansion"].ravel()
    expandable = np.flatnonzero(child_budgets >= 2)
    n_sel = min(n_plus, expandable.size)
    v_left = np.ones(expanded.num_left, dtype=np.int64)
    if n_sel > 0:
        order = expandable[np.lexsort((expandable, -scores[expandable]))]
        v_left[order[:n_sel]] = 2

    right_scaled = predictions["right_expansion"].ravel() + 2.0
    v_right = np.where(
        right_scaled < RIGHT_THRESHOLD_LOW,
        1,
        np.where(right_scaled < RIGHT_THRESHOLD_HIGH, 2, 3),
    ).astype(np.int64)

    edge_keep = (predictions["edge_keep"].ravel() > EDGE_KEEP_THRESHOLD).astype(np.int8)

    left_features = predictions["left_features"].copy() if fm else None
    right_features = predictions["right_features"].copy() if fl else None
    if fm:
        for g in left_groups:
            if len(g) == 1:
                left_features[g[0]] = cond.left_parent_features[g[0]]
    if fl:
        for g in right_groups:
            if len(g) == 1:
                right_features[g[0]] = cond.right_parent_features[g[0]]

    decision = RefinementDecision(
        edge_keep=edge_keep,
        budget_split=fractions,
        left_features=left_features,
        right_features=right_features,
    )
    return ExpansionVectors(v_left, v_right), decision


def _drop_empty_right(b: BipartiteGraph) -> tuple[BipartiteGraph, np.ndarray]:
    """Remove zero-degree right nodes, reindexing edges; returns kept indices."""
    deg = b.right_degrees()
    keep = np.flatnonzero(deg > 0)
    if keep.size == b.num_right:
        return b, keep
    right_map = -np.ones(b.num_right, dtype=np.int64)
    right_map[keep] = np.arange(keep.size)
    edges = b.edges.copy()
    if edges.size:
        edges[:, 1] = right_map[edges[:, 1]]
    rf = None if b.right_features is None else b.right_features[keep]
    reduced = BipartiteGraph(
        num_left=b.num_left,
        num_right=int(keep.size),
        edges=edges,
        left_budgets=b.left_budgets,
        left_features=b.left_features,
        right_features=rf,
    )
    return reduced, keep


def sample_one(
    denoiser: Denoiser,
    n_nodes: int,
    rng: np.random.Generator,
    steps: int = 25,
    rho_min: float = 0.1,
    rho_max: float = 0.3,
    perturbation: bool = False,
    perturb_radius: int = 2,
    perturb_prob: float = 0.5,
) -> tuple[Hypergraph, dict]:
    """Generate one hypergraph with exactly ``n_nodes`` nodes.

    Expansion is deterministic by default; the perturbed variant is a
    training-time augmentation and stays off during generation.
    """
    c = denoiser.config
    fm, fl = c.node_feature_dim, c.edge_feature_dim
    N = int(n_nodes)
    b = BipartiteGraph(
        num_left=1,
        num_right=1,
        edges=np.array([[0, 0]], dtype=np.int64),
        left_budgets=np.array([N], dtype=np.int64),
        left_features=np.zeros((1, fm)) if fm else None,
        right_features=np.zeros((1, fl)) if fl else None,
    )
    v = ExpansionVectors([1], [1])
    cap = int(4 * np.log2(max(N, 2)) + 16)
    iterations = 0
    dropped = 0
    budget_sums: list[int] = []

    while b.num_left < N or iterations == 0:
        iterations += 1
        if iterations > cap:
            raise RuntimeError(
                f"sampling exceeded {cap} iterations at {b.num_left}/{N} nodes"
            )
        if perturbation:
            expanded = perturb_expand(b, v, perturb_radius, perturb_prob, rng)
        else:
            expanded = expand(b, v)
        cond = _conditioning(b, v, c.spectral_k, fm, fl)
        n = expanded.num_left
        if n < N:
            rho = float(rng.uniform(rho_min, rho_max))
            n_plus = min(least_expansion_count(n, rho), N - n)
            rho_hat = 1.0 - n / (n + n_plus)
        else:
            n_plus = 0
            rho_hat = 0.0

        left_groups = _sibling_groups(expanded.cluster_of_left)
        right_groups = _sibling_groups(expanded.cluster_of_right)
        x0 = _sample_noise(expanded, left_groups, fm, fl, rng)

        def endpoint_fn(state, t):
            inp = _make_input(expanded, cond, state, t, rho_hat, float(N))
            return denoiser.predict(inp)

        def project(preds):
            preds = dict(preds)
            preds["left_split"] = project_split_groups(
                preds["left_split"].ravel(), left_groups
            ).reshape(-1, 1)
            return preds

        final = integrate(endpoint_fn, x0, steps, project=project)
        v, decision = apply_inpainting(
            final, expanded, left_groups, right_groups, v, n_plus, cond, fm, fl
        )
        b = refine(expanded, decision)
        total_budget = int(b.left_budgets.sum())
        budget_sums.append(total_budget)
        if total_budget != N:
            raise AssertionError(f"budget sum drifted to {total_budget}, expected {N}")
        if b.num_right:
            # every intermediate level must stay a valid hypergraph picture:
            # a right node whose edges were all dropped would otherwise be
            # cloned again next round and snowball
            pruned, kept = _drop_empty_right(b)
            if kept.size != b.num_right:
                dropped += int(b.num_right - kept.size)
                b = pruned
                v = ExpansionVectors(v.left, np.asarray(v.right)[kept])
        if b.num_left == N:
            break

    if b.num_right:
        isolated = int(np.sum(b.left_degrees() == 0))
        h = collapse_bipartite(b)
    else:
        isolated = b.num_left
        h = Hypergraph(
            b.num_left,
            [],
            node_features=b.left_features,
        )
    diag = {
        "iterations": iterations,
        "empty_hyperedges_dropped": dropped,
        "isolated_nodes": isolated,
        "valid_structure": isolated == 0,
        "budget_sums": budget_sums,
    }
    return h, diag


def _load_for_sampling(checkpoint: str | Path) -> tuple[Denoiser, dict]:
    store, manifest = load_checkpoint(checkpoint)
    config = DenoiserConfig.from_dict(manifest["config"])
    denoiser = Denoiser(config, rng=np.random.default_rng(0), store=store)
    extras = manifest["config"].get("train", {})
    return denoiser, extras


def sample(req: SampleRequest) -> tuple[list[Hypergraph], list[dict]]:
    """Generate ``count`` hypergraphs of ``n_nodes`` nodes from a checkpoint."""
    denoiser, extras = _load_for_sampling(req.checkpoint)
    graphs: list[Hypergraph] = []
    diags: list[dict] = []
    for i in range(req.count):
        rng = np.random.default_rng([req.seed, i])
        h, diag = sample_one(
            denoiser,
            req.n_nodes,
            rng,
            steps=int(extras.get("steps", 25)),
            rho_min=float(extras.get("rho_min", 0.1)),
            rho_max=float(extras.get("rho_max", 0.3)),
        )
        diag["index"] = i
        graphs.append(h)
        diags.append(diag)
    return graphs, diags


def _read_graph_source(path: str | Path) -> list[Hypergraph]:
    path = Path(path)
    if path.is_file():
        return read_graphs_jsonl(path)
    if path.is_dir():
        test = path / "test.jsonl"
        if test.exists():
            return read_graphs_jsonl(test)
        files = sorted(path.glob("*.jsonl"))
        if not files:
            raise FileNotFoundError(f"no JSONL files under {path}")
        out: list[Hypergraph] = []
        for f in files:
            out.extend(read_graphs_jsonl(f))
        return out
    raise FileNotFoundError(str(path))


def evaluate(gen_path: str | Path, ref_path: str | Path, kind: str) -> MetricReport:
    """Metric report of a generated set against a reference set.

    Degree and hyperedge-size distributions are pooled across each set
    before the Wasserstein comparison; node counts are compared against
    cyclically paired reference sizes.
    """
    gen = _read_graph_source(gen_path)
    ref = _read_graph_source(ref_path)
    if not gen or not ref:
        raise ValueError("evaluate needs nonempty generated and reference sets")
    gen_deg = np.concatenate([degree_multiset(h) for h in gen])
    ref_deg = np.concatenate([degree_multiset(h) for h in ref])
    gen_sizes = np.concatenate([edge_size_multiset(h) for h in gen])
    ref_sizes = np.concatenate([edge_size_multiset(h) for h in ref])
    if gen_sizes.size == 0 or ref_sizes.size == 0:
        edge_w = 0.0 if gen_sizes.size == ref_sizes.size else float("inf")
    else:
        edge_w = wasserstein_1d(gen_sizes, ref_sizes)
    valid = None
    if kind in ("sbm", "ego", "tree"):
        valid = validity_fraction(kind, gen)
    chamfer = None
    if kind in ("mesh", "mesh-dir"):
        vals = [chamfer_nearest(g, ref) for g in gen]
        chamfer = float(np.mean(vals))
    return MetricReport(
        node_num_diff=node_num_diff(gen, ref),
        degree_wasserstein=wasserstein_1d(gen_deg, ref_deg),
        edge_size_wasserstein=edge_w,
        spectral_mmd=spectral_mmd(gen, ref),
        validity_fraction=valid,
        chamfer_nearest=chamfer,
    )


def write_dot(h: Hypergraph, path: str | Path) -> None:
    """Write the incidence topology as an undirected DOT graph."""
    lines = ["graph hypergraph {"]
    for v in range(h.num_nodes):
        lines.append(f"  v{v};")
    for j in range(h.num_hyperedges):
        lines.append(f"  e{j} [shape=box];")
    for j, e in enumerate(h.hyperedges):
        for v in e:
            lines.append(f"  v{v} -- e{j};")
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n")


def export(graphs: list[Hypergraph], fmt: str, out_dir: str | Path, stem: str = "graph") -> list[Path]:
    """Write graphs as DOT, OBJ, or JSONL files; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if fmt == "jsonl":
        path = out / f"{stem}.jsonl"
        write_graphs_jsonl(path, graphs)
        written.append(path)
    elif fmt == "dot":
        for i, h in enumerate(graphs):
            path = out / f"{stem}_{i:04d}.dot"
            write_dot(h, path)
            written.append(path)
    elif fmt == "obj":
        from .datasets import save_obj

        for i, h in enumerate(graphs):
            path = out / f"{stem}_{i:04d}.obj"
            save_obj(path, h)
            written.append(path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return written
