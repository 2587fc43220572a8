"""Training orchestration for the four problem classes.

A run is one network, one fixed family of collocation points, and a
two-phase schedule: full-batch Adam followed by L-BFGS.  Forward flow
trains everything on the flow terms; step-wise heat loads a flow
checkpoint, bolts on fresh enthalpy and solid-temperature branches, and
trains only those on the energy terms; inverse runs swap the outlet flux
conditions for labeled outlet data; transfer runs fine-tune selected
components of an existing checkpoint on a modified case.

Every run is bitwise reproducible from (config, seed): the same seed
produces the same point sets, the same initialization, and the same trace
rows.  Wall-clock timings live on the TrainingTrace, never in the trace
CSV.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from . import physics
from .autodiff.api import NonFiniteParameterError, eval_jets, frozen_trunk_block
from .autodiff.tape import Tape, TapeNaNError
from .collocation import PointCounts, PointSet, case_point_sets
from .config import CaseConfig
from .loss import LossBreakdown, LossNaNError, WeightVector, assemble_loss
from .metrics import sample_indices
from .model import (ParamNet, TBNet, extend_tbnet, init_fnn, init_tbnet,
                    load_checkpoint, save_checkpoint)
from .optimizers import AdamState, adam_step, lbfgs_init, lbfgs_step
from .oracle import ReferenceDataset, add_noise

EXIT_CONVERGED = 0
EXIT_DIVERGED = 2
EXIT_STALLED = 3

# loss growing by more than this factor over the guard window means the run
# is beyond saving and must halt before the parameters are destroyed
GUARD_FACTOR = 1e6
GUARD_WINDOW = 100

MODES = ("flow", "heat_stepwise", "joint", "inverse", "transfer")


@dataclass(frozen=True)
class Schedule:
    """Two-phase optimization plan for one run."""

    adam_epochs: int
    adam_lr: float
    lbfgs_max_iters: int
    mode: str
    source_checkpoint: Optional[str] = None
    frozen_components: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.adam_epochs < 0 or self.lbfgs_max_iters < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.adam_lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.mode == "transfer" and self.source_checkpoint is None:
            raise ValueError("transfer mode requires a source checkpoint")
        object.__setattr__(self, "frozen_components",
                           tuple(self.frozen_components))

    def replace(self, **kw) -> "Schedule":
        from dataclasses import replace as _replace
        return _replace(self, **kw)


@dataclass
class TrainingTrace:
    """Per-epoch loss history plus phase timings and final state."""

    rows: list = field(default_factory=list)
    divergent: bool = False
    divergence_epoch: Optional[int] = None
    adam_seconds: float = 0.0
    lbfgs_seconds: float = 0.0
    lbfgs_iterations: int = 0
    checkpoint_path: Optional[str] = None
    exit_code: int = EXIT_CONVERGED

    @property
    def first_epoch_total(self) -> float:
        if not self.rows:
            raise ValueError("trace has no rows")
        return self.rows[0][1]

    @property
    def final_total(self) -> float:
        if not self.rows:
            raise ValueError("trace has no rows")
        return self.rows[-1][1]

    def write_csv(self, path) -> None:
        header = ["epoch"] + LossBreakdown.row_header()
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in self.rows:
                fh.write(f"{int(row[0])},"
                         + ",".join(repr(float(v)) for v in row[1:]) + "\n")


def divergence_guard(totals: Sequence[float]) -> str:
    """'halt' when the newest total is non-finite or has grown more than
    GUARD_FACTOR over the last GUARD_WINDOW epochs, else 'ok'."""
    if len(totals) == 0:
        return "ok"
    last = totals[-1]
    if not np.isfinite(last):
        return "halt"
    if len(totals) > GUARD_WINDOW:
        ref = totals[-1 - GUARD_WINDOW]
        if np.isfinite(ref) and last > GUARD_FACTOR * ref:
            return "halt"
    return "ok"


# ---------------------------------------------------------------------------
# run internals


def _trunk_caches(net: ParamNet, sets: Dict[str, PointSet],
                  need_second: bool) -> Optional[Dict[str, object]]:
    """Constant trunk blocks per point set, valid while the trunk is frozen.

    Only the interior set ever needs second derivatives.
    """
    first_component = net.segments()[0].component
    if not net.is_frozen(first_component):
        return None
    caches = {}
    for name, ps in sets.items():
        second = need_second and name == "interior"
        caches[name] = frozen_trunk_block(net, ps.coordinates, second=second)
    return caches


def _needs_second(weights: WeightVector) -> bool:
    return weights.is_active(4) or weights.is_active(5)


class _Run:
    """Mutable state of one training run shared by both phases."""

    def __init__(self, net: ParamNet, sets: Dict[str, PointSet],
                 case: CaseConfig, weights: WeightVector,
                 labeled: Optional[Tuple[np.ndarray, np.ndarray]] = None):
        self.net = net
        self.sets = sets
        self.case = case
        self.weights = weights
        self.labeled = labeled
        self.trunk_cache = _trunk_caches(net, sets, _needs_second(weights))
        self.trace = TrainingTrace()
        self.totals: list = []
        self.last_good = net.theta.copy()
        self.epoch = 0

    def loss_and_grad(self) -> Tuple[LossBreakdown, np.ndarray]:
        tape = Tape(self.net.n_params, self.net.frozen_param_mask())
        bd = assemble_loss(self.net, self.sets, self.case, self.weights,
                           tape=tape, labeled=self.labeled,
                           trunk_cache=self.trunk_cache)
        return bd, tape.param_gradient()

    def record(self, bd: LossBreakdown) -> None:
        self.trace.rows.append([self.epoch] + bd.row())
        self.totals.append(bd.total)
        self.epoch += 1

    def halt_divergent(self) -> None:
        """Restore the last valid parameters; the trace ends at the flag epoch."""
        self.net.theta[...] = self.last_good
        self.trace.divergent = True
        self.trace.divergence_epoch = (int(self.trace.rows[-1][0])
                                       if self.trace.rows else None)
        self.trace.exit_code = EXIT_DIVERGED

    def run_adam(self, epochs: int, lr: float) -> None:
        if epochs == 0:
            return
        t0 = time.perf_counter()
        adam = AdamState(lr=lr)
        for _ in range(epochs):
            try:
                bd, grad = self.loss_and_grad()
            except (LossNaNError, TapeNaNError, NonFiniteParameterError):
                self.halt_divergent()
                break
            self.record(bd)
            if divergence_guard(self.totals) == "halt":
                self.halt_divergent()
                break
            self.last_good = self.net.theta.copy()
            adam_step(adam, self.net.theta, grad)
            if adam.diverged:
                self.halt_divergent()
                break
        self.trace.adam_seconds = time.perf_counter() - t0

    def run_lbfgs(self, max_iters: int) -> None:
        if max_iters == 0 or self.trace.divergent:
            return
        t0 = time.perf_counter()
        cell: dict = {}

        def evaluator(x):
            self.net.theta[...] = x
            try:
                bd, grad = self.loss_and_grad()
            except (LossNaNError, TapeNaNError, NonFiniteParameterError):
                return np.inf, np.zeros(self.net.n_params)
            cell["bd"] = bd
            return bd.total, grad

        state = lbfgs_init(self.net.theta.copy(), evaluator)
        if not state.diverged:
            self.last_good = state.x.copy()
        while (state.iteration < max_iters and not state.diverged
               and not state.stalled and not state.converged):
            before = state.iteration
            lbfgs_step(state, evaluator)
            if state.iteration > before and "bd" in cell:
                self.net.theta[...] = state.x
                self.last_good = state.x.copy()
                self.record(cell["bd"])
                if divergence_guard(self.totals) == "halt":
                    self.halt_divergent()
                    break
        if self.trace.divergent:
            pass  # guard already restored the last valid parameters
        elif state.diverged:
            self.net.theta[...] = self.last_good
            self.trace.divergent = True
            self.trace.divergence_epoch = (int(self.trace.rows[-1][0])
                                           if self.trace.rows else None)
            self.trace.exit_code = EXIT_DIVERGED
        elif state.stalled:
            self.net.theta[...] = state.x
            self.trace.exit_code = EXIT_STALLED
        else:
            self.net.theta[...] = state.x
        self.trace.lbfgs_iterations = state.iteration
        self.trace.lbfgs_seconds = time.perf_counter() - t0

    def finish(self, checkpoint_path, trace_path, case_name: str,
               seed: int) -> TrainingTrace:
        if checkpoint_path is not None:
            save_checkpoint(self.net, checkpoint_path, case=case_name,
                            epochs=self.epoch, seed=seed)
            self.trace.checkpoint_path = str(checkpoint_path)
        if trace_path is not None:
            self.trace.write_csv(trace_path)
        return self.trace


def _resolve_net(checkpoint: Union[str, ParamNet]) -> ParamNet:
    if isinstance(checkpoint, ParamNet):
        return checkpoint
    net, _ = load_checkpoint(checkpoint)
    return net


def _point_sets(case: CaseConfig, counts: PointCounts, seed: int
                ) -> Dict[str, PointSet]:
    return case_point_sets(case.domain, counts, seed)


# ---------------------------------------------------------------------------
# the four problem classes


def train_forward_flow(case: CaseConfig, schedule: Schedule, seed: int, *,
                       arch: dict, counts: PointCounts,
                       weights: WeightVector,
                       checkpoint_path=None, trace_path=None
                       ) -> Tuple[ParamNet, TrainingTrace]:
    """Train a fresh network on the flow terms of `case`.

    An arch dict with a "trunk" key builds the trunk-branch net; one with
    a "layers" key builds the single-stack baseline.
    """
    net = init_fnn(arch, seed) if "layers" in arch else init_tbnet(arch, seed)
    sets = _point_sets(case, counts, seed)
    run = _Run(net, sets, case, weights)
    run.run_adam(schedule.adam_epochs, schedule.adam_lr)
    run.run_lbfgs(schedule.lbfgs_max_iters)
    trace = run.finish(checkpoint_path, trace_path, case.name, seed)
    return net, trace


def train_forward_heat(case: CaseConfig, flow_checkpoint, schedule: Schedule,
                       seed: int, *, heat_arch: dict, counts: PointCounts,
                       weights: WeightVector,
                       checkpoint_path=None, trace_path=None
                       ) -> Tuple[ParamNet, TrainingTrace]:
    """Step-wise heat training: freeze the flow model, train hk and Ts branches.

    `heat_arch` maps the new branch names to their hidden layers.  The flow
    outputs of the returned net are bit-identical to the checkpoint's.
    """
    base = _resolve_net(flow_checkpoint)
    net = extend_tbnet(base, heat_arch, seed)
    net.freeze(("trunk",) + tuple(base.output_order))
    sets = _point_sets(case, counts, seed)
    run = _Run(net, sets, case, weights)
    run.run_adam(schedule.adam_epochs, schedule.adam_lr)
    run.run_lbfgs(schedule.lbfgs_max_iters)
    trace = run.finish(checkpoint_path, trace_path, case.name, seed)
    return net, trace


def outlet_labels(case: CaseConfig, reference: ReferenceDataset,
                  n_points: int, noise_level: float, seed: int
                  ) -> Tuple[PointSet, Tuple[np.ndarray, np.ndarray]]:
    """Draw labeled outlet samples from a reference dataset.

    Returns the non-dimensional data point set and the (hk, Ts) label
    arrays.  Points are a seeded uniform choice from the outlet row; noise
    is multiplicative uniform on the dimensional temperatures.
    """
    grid = reference.grid
    if grid.dim != 2:
        raise ValueError("labeled data sampling expects a 2-D reference")
    nx, ny = grid.shape
    if n_points > nx:
        raise ValueError(f"{n_points} labeled points requested but the outlet "
                         f"row has only {nx} samples")
    pick_seed, noise_seed = (int(s) for s in
                             np.random.SeedSequence(seed).generate_state(2))
    idx = sample_indices(n_points, nx, pick_seed)
    x_dim = grid.axis(0)[idx]
    y_dim = np.full(n_points, grid.extent[1][1])
    values = {"Ts": reference.fields["Ts"][idx, -1],
              "Tf": reference.fields["Tf"][idx, -1]}
    noisy = add_noise(values, noise_level, noise_seed)
    coords = np.column_stack([physics.nondim(case, "x", x_dim),
                              physics.nondim(case, "y", y_dim)])
    labels = (physics.nondim(case, "Tf", noisy["Tf"]),
              physics.nondim(case, "Ts", noisy["Ts"]))
    return PointSet("data", coords, seed, facet="data"), labels


def train_inverse(case: CaseConfig, labeled: ReferenceDataset, n_points: int,
                  noise_level: float, schedule: Schedule, seed: int, *,
                  flow_checkpoint, heat_arch: dict, counts: PointCounts,
                  weights: WeightVector,
                  checkpoint_path=None, trace_path=None
                  ) -> Tuple[ParamNet, TrainingTrace]:
    """Inverse heat run: outlet flux terms off, labeled outlet data on.

    With n_points = 0 the data terms drop out and the run is the forward
    problem minus the flux conditions.
    """
    base = _resolve_net(flow_checkpoint)
    net = extend_tbnet(base, heat_arch, seed)
    net.freeze(("trunk",) + tuple(base.output_order))
    sets = _point_sets(case, counts, seed)
    label_values = None
    if n_points > 0:
        data_set, label_values = outlet_labels(case, labeled, n_points,
                                               noise_level, seed)
        sets["data"] = data_set
    else:
        mask = weights.active.copy()
        mask[16:18] = False
        weights = WeightVector(weights.lam.copy(), mask)
    run = _Run(net, sets, case, weights, labeled=label_values)
    run.run_adam(schedule.adam_epochs, schedule.adam_lr)
    run.run_lbfgs(schedule.lbfgs_max_iters)
    trace = run.finish(checkpoint_path, trace_path, case.name, seed)
    return net, trace


def train_transfer(case_target: CaseConfig, source_checkpoint,
                   schedule: Schedule, seed: int, *, counts: PointCounts,
                   weights: WeightVector,
                   labeled: Optional[ReferenceDataset] = None,
                   n_points: int = 0, noise_level: float = 0.0,
                   checkpoint_path=None, trace_path=None
                   ) -> Tuple[ParamNet, TrainingTrace]:
    """Fine-tune a trained checkpoint on a modified case.

    schedule.frozen_components decides what stays fixed: the trunk for flow
    transfer, trunk plus flow branches for heat transfer.  Passing a
    reference with n_points > 0 attaches labeled outlet data, for
    fine-tuning on inverse problems.
    """
    net = _resolve_net(source_checkpoint)
    missing = [c for c in schedule.frozen_components
               if c not in net.component_names()]
    if missing:
        raise ValueError(f"cannot freeze unknown components {missing}")
    net.unfreeze(net.component_names())
    net.freeze(schedule.frozen_components)
    sets = _point_sets(case_target, counts, seed)
    label_values = None
    if n_points > 0:
        if labeled is None:
            raise ValueError("labeled data requested but no reference given")
        data_set, label_values = outlet_labels(case_target, labeled, n_points,
                                               noise_level, seed)
        sets["data"] = data_set
    run = _Run(net, sets, case_target, weights, labeled=label_values)
    run.run_adam(schedule.adam_epochs, schedule.adam_lr)
    run.run_lbfgs(schedule.lbfgs_max_iters)
    trace = run.finish(checkpoint_path, trace_path, case_target.name, seed)
    return net, trace


def train_joint(case: CaseConfig, schedule: Schedule, seed: int, *,
                arch: dict, counts: PointCounts, weights: WeightVector,
                checkpoint_path=None, trace_path=None
                ) -> Tuple[ParamNet, TrainingTrace]:
    """All sixteen physics terms from scratch, no freezing.

    Shipped for the stability comparison against the step-wise scheme; the
    divergence guard is expected to end these runs early.
    """
    net = init_tbnet(arch, seed)
    sets = _point_sets(case, counts, seed)
    run = _Run(net, sets, case, weights)
    run.run_adam(schedule.adam_epochs, schedule.adam_lr)
    run.run_lbfgs(schedule.lbfgs_max_iters)
    trace = run.finish(checkpoint_path, trace_path, case.name, seed)
    return net, trace
