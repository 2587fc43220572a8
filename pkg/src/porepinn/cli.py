"""Command-line entry point.

Every experiment runs through one of seven subcommands:

  generate-reference   finite-volume reference dataset for a preset
  train                one training run (flow, heat, inverse, joint, transfer)
  evaluate             score a checkpoint against a reference dataset
  sweep-inverse        labeled-point or noise sweep over inverse runs
  sweep-weights        inlet-weight sweep, one run per scale
  compare-architectures  trunk-branch net vs the single-stack baseline
  transfer             fine-tune leg plus optional from-scratch comparison

One training run per process; sweeps spawn child processes, up to
``--jobs`` at a time (default from POREPINN_JOBS, else 1).  A relative
``--out`` is resolved against POREPINN_OUT when that variable is set.

Artifact tree of a training run:

  config.json      effective configuration, written before any compute
  trace.csv        per-epoch loss trace; header
                   ``epoch,total,L_pde,L_inlet,L_outlet,L_wall,L_data,
                   e1_ms,...,e18_ms``
  checkpoint.ckpt  network parameters (JSON header line + float64 payload)
  metrics.json     per-field error report, when a reference is supplied
  run.json         exit code, epoch counts, wall-clock timings

Reference datasets are CSV with header ``x,y,u,v,p,Ts,Tf`` (2-D) or
``x,y,z,u,v,w,p,Ts,Tf`` (3-D) plus a JSON sidecar.  Sweep directories add
an aggregated ``trend.csv`` or ``table.csv``.  Rerunning any command with
the same configuration and seed reproduces every numeric artifact
bit-exactly; ``run.json`` carries the wall-clock timings and is the one
file allowed to differ.

Exit codes: 0 completed, 1 invalid configuration or missing artifact,
2 halted divergent, 3 stalled.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace as dc_replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import cases
from .cases import Preset, flux_preset, preset, preset_names
from .evaluate import (evaluate_against_reference, evaluate_planes,
                       predict_fields)
from .loss import WeightVector
from .metrics import kde_density, re_histogram, write_kde_csv
from .model import init_fnn, init_tbnet, load_checkpoint
from .oracle import (ReferenceDataset, export_dataset, import_dataset,
                     solve_energy_ltne, solve_flow_2d, solve_flow_3d)
from .trainer import (EXIT_CONVERGED, Schedule, train_forward_flow,
                      train_forward_heat, train_inverse, train_joint,
                      train_transfer)

ENV_OUT = "POREPINN_OUT"
ENV_JOBS = "POREPINN_JOBS"

EXIT_OK = 0
EXIT_BAD_CONFIG = 1


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 1."""


# ---------------------------------------------------------------------------
# plumbing


def _resolve_out(out: str) -> str:
    root = os.environ.get(ENV_OUT)
    if root and not os.path.isabs(out):
        return os.path.join(root, out)
    return out


def _default_jobs() -> int:
    raw = os.environ.get(ENV_JOBS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{ENV_JOBS} must be an integer, got {raw!r}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _apply_config_file(args: argparse.Namespace,
                       parser: argparse.ArgumentParser) -> None:
    """Merge a JSON config file under explicit command-line flags."""
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a JSON object")
    allowed = {a.dest for a in parser._actions} - {"help", "config"}
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {a.dest: a.default for a in parser._actions}
    for key, value in payload.items():
        # a flag given on the command line wins over the file
        if getattr(args, key) == defaults.get(key):
            setattr(args, key, value)


def _load_preset(name: str, scale: str) -> Preset:
    try:
        return preset(name, scale)
    except KeyError as exc:
        raise ConfigError(str(exc))


def _snapshot(outdir: str, payload: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    _write_json(os.path.join(outdir, "config.json"), payload)


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _parse_ints(text: str) -> List[int]:
    vals = _parse_floats(text)
    out = []
    for v in vals:
        if v != int(v):
            raise ConfigError(f"expected integers, got {text!r}")
        out.append(int(v))
    return out


def _solve_reference(p: Preset, shape: Sequence[int]) -> ReferenceDataset:
    shape = tuple(int(s) for s in shape)
    if p.case.dim == 3:
        return solve_flow_3d(p.case, shape=shape)
    flow = solve_flow_2d(p.case, shape=shape)
    if p.case.heat:
        return solve_energy_ltne(p.case, flow)
    return flow


def _reference_path(outdir: str, p: Preset, shape: Sequence[int]) -> str:
    tag = "x".join(str(int(s)) for s in shape)
    return os.path.join(outdir, f"{p.name}-{tag}.csv")


def _ensure_reference(p: Preset, path: Optional[str], outdir: str) -> str:
    """Return a dataset path, generating one under outdir when absent."""
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"reference dataset not found: {path}")
        return path
    refdir = os.path.join(outdir, "reference")
    os.makedirs(refdir, exist_ok=True)
    target = _reference_path(refdir, p, p.oracle_shape)
    if not os.path.exists(target):
        export_dataset(_solve_reference(p, p.oracle_shape), target)
    return target


def _run_child(argv: List[str]) -> int:
    cmd = [sys.executable, "-m", "porepinn"] + argv
    return subprocess.run(cmd).returncode


def _run_children(arg_lists: List[List[str]], jobs: int) -> List[int]:
    if jobs <= 1:
        return [_run_child(a) for a in arg_lists]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_child, arg_lists))


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _trace_rows(path: str) -> List[List[float]]:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[float(x) for x in row] for row in reader]


# ---------------------------------------------------------------------------
# train


def _override_weights(weights: WeightVector,
                      overrides: Sequence[str]) -> WeightVector:
    if not overrides:
        return weights
    lam = weights.lam.copy()
    for text in overrides:
        try:
            term, value = text.split("=")
            term = int(term)
            value = float(value)
        except ValueError:
            raise ConfigError(f"--set-weight wants TERM=VALUE, got {text!r}")
        if not 1 <= term <= lam.size:
            raise ConfigError(f"loss term {term} out of range")
        lam[term - 1] = value
    return WeightVector(lam, weights.active.copy())


def _sched_overrides(args) -> dict:
    fields = {"adam_epochs": args.adam_epochs, "adam_lr": args.adam_lr,
              "lbfgs_max_iters": args.lbfgs_iters}
    return {k: v for k, v in fields.items() if v is not None}


def _sched_child_args(args) -> List[str]:
    out = []
    if getattr(args, "adam_epochs", None) is not None:
        out += ["--adam-epochs", str(args.adam_epochs)]
    if getattr(args, "adam_lr", None) is not None:
        out += ["--adam-lr", repr(float(args.adam_lr))]
    if getattr(args, "lbfgs_iters", None) is not None:
        out += ["--lbfgs-iters", str(args.lbfgs_iters)]
    return out


def _train_run(p: Preset, args) -> int:
    outdir = args.out
    ckpt = os.path.join(outdir, "checkpoint.ckpt")
    trace_path = os.path.join(outdir, "trace.csv")
    weights = _override_weights(p.weights, args.set_weight or [])
    n_points = p.n_labeled if args.points is None else args.points
    noise = p.noise_level if args.noise is None else args.noise
    seed = args.seed
    overrides = _sched_overrides(args)
    if overrides:
        p = dc_replace(p, schedule=p.schedule.replace(**overrides),
                       transfer=(p.transfer.replace(**overrides)
                                 if p.transfer is not None else None))

    reference = None
    if args.reference:
        if not os.path.exists(args.reference):
            raise ConfigError(f"reference dataset not found: {args.reference}")
        reference = import_dataset(args.reference)

    def need_source():
        if not args.source:
            raise ConfigError(f"preset {p.name!r} ({p.mode}) needs --source")
        if not os.path.exists(args.source):
            raise ConfigError(f"source checkpoint not found: {args.source}")
        return args.source

    t0 = time.perf_counter()
    if p.mode == "flow":
        if p.transfer is not None and not args.from_scratch:
            source = need_source()
            schedule = p.transfer.replace(source_checkpoint=source)
            net, trace = train_transfer(
                p.case, source, schedule, seed, counts=p.counts,
                weights=weights, checkpoint_path=ckpt, trace_path=trace_path)
        else:
            arch = cases.fnn_arch(args.scale) if args.fnn else p.arch
            net, trace = train_forward_flow(
                p.case, p.schedule, seed, arch=arch, counts=p.counts,
                weights=weights, checkpoint_path=ckpt, trace_path=trace_path)
    elif p.mode == "heat_stepwise":
        net, trace = train_forward_heat(
            p.case, need_source(), p.schedule, seed, heat_arch=p.heat_arch,
            counts=p.counts, weights=weights, checkpoint_path=ckpt,
            trace_path=trace_path)
    elif p.mode == "inverse":
        if reference is None:
            raise ConfigError("inverse runs need --reference for the labels")
        if p.transfer is not None and not args.from_scratch and args.source:
            schedule = p.transfer.replace(source_checkpoint=args.source)
            net, trace = train_transfer(
                p.case, need_source(), schedule, seed, counts=p.counts,
                weights=weights, labeled=reference, n_points=n_points,
                noise_level=noise, checkpoint_path=ckpt,
                trace_path=trace_path)
        else:
            net, trace = train_inverse(
                p.case, reference, n_points, noise, p.schedule, seed,
                flow_checkpoint=need_source(), heat_arch=p.heat_arch,
                counts=p.counts, weights=weights, checkpoint_path=ckpt,
                trace_path=trace_path)
    elif p.mode == "joint":
        net, trace = train_joint(
            p.case, p.schedule, seed, arch=p.arch, counts=p.counts,
            weights=weights, checkpoint_path=ckpt, trace_path=trace_path)
    else:
        raise ConfigError(f"preset mode {p.mode!r} is not runnable")
    wall = time.perf_counter() - t0

    sched = (p.transfer if (p.transfer is not None and not args.from_scratch
                            and args.source) else p.schedule)
    run_meta = {
        "preset": p.name, "scale": args.scale, "seed": seed, "mode": p.mode,
        "n_params": net.n_params,
        "exit_code": trace.exit_code,
        "divergent": trace.divergent,
        "divergence_epoch": trace.divergence_epoch,
        "epochs": len(trace.rows),
        "adam_epochs": sched.adam_epochs,
        "adam_seconds": trace.adam_seconds,
        "adam_seconds_per_epoch": (trace.adam_seconds / sched.adam_epochs
                                   if sched.adam_epochs else None),
        "lbfgs_seconds": trace.lbfgs_seconds,
        "lbfgs_iterations": trace.lbfgs_iterations,
        "first_epoch_total": trace.first_epoch_total,
        "final_total": trace.final_total,
        "n_labeled": n_points if p.mode == "inverse" else None,
        "noise_level": noise if p.mode == "inverse" else None,
        "wall_seconds": wall,
    }
    _write_json(os.path.join(outdir, "run.json"), run_meta)

    if reference is not None and not trace.divergent:
        report = evaluate_against_reference(net, p.case, reference)
        with open(os.path.join(outdir, "metrics.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")

    print(f"{p.name}: exit {trace.exit_code}, epochs {len(trace.rows)}, "
          f"final total {trace.final_total:.6e}" if trace.rows else
          f"{p.name}: exit {trace.exit_code}, no epochs run")
    return trace.exit_code


def _cmd_train(args, parser) -> int:
    _apply_config_file(args, parser)
    if not args.preset:
        raise ConfigError("--preset is required")
    if args.mass_flux is not None:
        p = flux_preset(args.mass_flux, args.scale)
    else:
        p = _load_preset(args.preset, args.scale)
    args.out = _resolve_out(args.out)
    _snapshot(args.out, {
        "command": "train", "preset": p.name, "scale": args.scale,
        "seed": args.seed, "source": args.source, "reference": args.reference,
        "points": args.points, "noise": args.noise, "fnn": args.fnn,
        "from_scratch": args.from_scratch,
        "set_weight": args.set_weight or [],
        "mass_flux": args.mass_flux,
        "adam_epochs": args.adam_epochs, "adam_lr": args.adam_lr,
        "lbfgs_iters": args.lbfgs_iters,
    })
    return _train_run(p, args)


# ---------------------------------------------------------------------------
# generate-reference


def _cmd_generate_reference(args, parser) -> int:
    _apply_config_file(args, parser)
    if not args.preset:
        raise ConfigError("--preset is required")
    p = _load_preset(args.preset, args.scale)
    shape = tuple(_parse_ints(args.shape)) if args.shape else p.oracle_shape
    if len(shape) != p.case.dim:
        raise ConfigError(f"shape {shape} does not match a "
                          f"{p.case.dim}-D case")
    args.out = _resolve_out(args.out)
    _snapshot(args.out, {"command": "generate-reference", "preset": p.name,
                         "scale": args.scale, "shape": list(shape)})
    dataset = _solve_reference(p, shape)
    path = _reference_path(args.out, p, shape)
    export_dataset(dataset, path)
    print(f"wrote {path}")
    for name, value in sorted(dataset.residuals.items()):
        print(f"  residual {name}: {value:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _cmd_evaluate(args, parser) -> int:
    _apply_config_file(args, parser)
    for required in ("checkpoint", "preset", "reference"):
        if not getattr(args, required):
            raise ConfigError(f"--{required} is required")
    p = _load_preset(args.preset, args.scale)
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    if not os.path.exists(args.reference):
        raise ConfigError(f"reference dataset not found: {args.reference}")
    args.out = _resolve_out(args.out)
    _snapshot(args.out, {
        "command": "evaluate", "preset": p.name, "scale": args.scale,
        "checkpoint": args.checkpoint, "reference": args.reference,
        "fields": args.fields, "planes": args.planes,
        "plane_axis": args.plane_axis, "plot_data": args.plot_data,
    })
    net, _ = load_checkpoint(args.checkpoint)
    reference = import_dataset(args.reference)
    fields = args.fields.split(",") if args.fields else None
    report = evaluate_against_reference(net, p.case, reference, fields=fields)
    with open(os.path.join(args.out, "metrics.json"), "w",
              encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")

    if args.planes:
        coords = _parse_floats(args.planes)
        reports = evaluate_planes(net, p.case, reference, args.plane_axis,
                                  coords, fields=fields)
        payload = [json.loads(r.to_json()) for r in reports]
        _write_json(os.path.join(args.out, "plane_metrics.json"),
                    {"axis": args.plane_axis, "planes": payload})

    if args.plot_data:
        pred = predict_fields(net, p.case, reference.grid)
        edges = np.logspace(-10, 1, 45)
        for name in report.variables:
            exact = reference.fields[name].ravel()
            got = pred[name].ravel()
            nz = exact != 0.0
            if np.count_nonzero(nz) >= 10 and np.std(exact[nz]) > 0:
                gx, gy, dens = kde_density(
                    np.column_stack([exact[nz], got[nz]]), grid_size=100)
                write_kde_csv(gx, gy, dens,
                              os.path.join(args.out, f"kde_{name}.csv"))
                counts = re_histogram(got[nz], exact[nz], edges)
                with open(os.path.join(args.out, f"rehist_{name}.csv"), "w",
                          newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["bin_left", "bin_right", "count"])
                    for i, c in enumerate(counts):
                        writer.writerow([repr(float(edges[i])),
                                         repr(float(edges[i + 1])), int(c)])

    for name in sorted(report.variables):
        block = report.variables[name]
        rel = block.get("relative_l2")
        rel_text = f"{rel:.6e}" if rel is not None else "n/a"
        print(f"{name}: relative_l2 {rel_text}, rmse {block['rmse']:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep-inverse


def _cmd_sweep_inverse(args, parser) -> int:
    _apply_config_file(args, parser)
    p = _load_preset(args.preset, args.scale)
    if p.mode != "inverse":
        raise ConfigError(f"preset {p.name!r} is not an inverse preset")
    args.out = _resolve_out(args.out)
    jobs = args.jobs if args.jobs else _default_jobs()

    if args.noise_levels:
        levels = _parse_floats(args.noise_levels)
        points = [args.points if args.points is not None else p.n_labeled]
        sweep_axis = "noise_level"
        grid = [(points[0], lv) for lv in levels]
    else:
        points = (_parse_ints(args.points_list) if args.points_list
                  else list(cases.INVERSE_POINT_COUNTS))
        sweep_axis = "n_points"
        noise = args.noise if args.noise is not None else p.noise_level
        grid = [(n, noise) for n in points]

    _snapshot(args.out, {
        "command": "sweep-inverse", "preset": p.name, "scale": args.scale,
        "seed": args.seed, "sweep_axis": sweep_axis,
        "grid": [list(g) for g in grid], "jobs": jobs,
        "source": args.source, "reference": args.reference,
    })

    reference = _ensure_reference(p, args.reference, args.out)
    source = args.source
    if not source:
        flow = _load_preset(p.source or "B", args.scale)
        flow_dir = os.path.join(args.out, "flow-source")
        source = os.path.join(flow_dir, "checkpoint.ckpt")
        if not os.path.exists(source):
            code = _run_child(["train", "--preset", flow.name,
                               "--scale", args.scale,
                               "--seed", str(args.seed), "--out", flow_dir])
            if code != EXIT_OK:
                return code

    children = []
    dirs = []
    for n, lv in grid:
        tag = (f"noise-{lv:g}" if sweep_axis == "noise_level"
               else f"points-{n}")
        child_dir = os.path.join(args.out, tag)
        dirs.append(child_dir)
        children.append(["train", "--preset", p.name, "--scale", args.scale,
                         "--seed", str(args.seed), "--out", child_dir,
                         "--source", source, "--reference", reference,
                         "--points", str(n), "--noise", repr(float(lv))]
                        + _sched_child_args(args))
    codes = _run_children(children, jobs)

    rows = []
    for (n, lv), child_dir, code in zip(grid, dirs, codes):
        row = {"n_points": n, "noise_level": lv, "exit_code": code}
        run_path = os.path.join(child_dir, "run.json")
        metrics_path = os.path.join(child_dir, "metrics.json")
        if os.path.exists(run_path):
            meta = _read_json(run_path)
            row["final_total"] = meta.get("final_total")
        if os.path.exists(metrics_path):
            metrics = _read_json(metrics_path)
            for fname in ("Ts", "Tf"):
                block = metrics.get("variables", {}).get(fname)
                if block:
                    row[f"{fname}_relative_l2"] = block.get("relative_l2")
        rows.append(row)

    trend = os.path.join(args.out, "trend.csv")
    cols = ["n_points", "noise_level", "Ts_relative_l2", "Tf_relative_l2",
            "final_total", "exit_code"]
    with open(trend, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row.get(c, "") for c in cols])
    print(f"wrote {trend}")
    bad = [c for c in codes if c != EXIT_OK]
    return bad[0] if bad else EXIT_OK


# ---------------------------------------------------------------------------
# sweep-weights


def _cmd_sweep_weights(args, parser) -> int:
    _apply_config_file(args, parser)
    p = _load_preset(args.preset, args.scale)
    if p.mode != "flow":
        raise ConfigError("the weight sweep runs on a flow preset")
    scales = (_parse_floats(args.scales) if args.scales
              else list(cases.WEIGHT_SWEEP_SCALES))
    if not scales:
        raise ConfigError("at least one scale is required")
    term = args.term
    args.out = _resolve_out(args.out)
    jobs = args.jobs if args.jobs else _default_jobs()
    _snapshot(args.out, {
        "command": "sweep-weights", "preset": p.name, "scale": args.scale,
        "seed": args.seed, "term": term, "scales": scales, "jobs": jobs,
    })

    reference = _ensure_reference(p, args.reference, args.out)

    children = []
    dirs = []
    for s in scales:
        child_dir = os.path.join(args.out, f"lam{term}-{s:g}")
        dirs.append(child_dir)
        children.append(["train", "--preset", p.name, "--scale", args.scale,
                         "--seed", str(args.seed), "--out", child_dir,
                         "--reference", reference,
                         "--set-weight", f"{term}={repr(float(s))}"]
                        + _sched_child_args(args))
    codes = _run_children(children, jobs)

    ref_ds = import_dataset(reference)
    table = os.path.join(args.out, "table.csv")
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"lam{term}", f"e{term}_final", "remaining_loss",
                         "inlet_v_relative_l2", "p_relative_l2",
                         "exit_code"])
        for s, child_dir, code in zip(scales, dirs, codes):
            row = [repr(float(s))]
            trace_path = os.path.join(child_dir, "trace.csv")
            metrics_path = os.path.join(child_dir, "metrics.json")
            ckpt = os.path.join(child_dir, "checkpoint.ckpt")
            if code == EXIT_OK and os.path.exists(trace_path):
                header, rows_ = _trace_rows(trace_path)
                last = rows_[-1]
                e_term = last[header.index(f"e{term}_ms")]
                total = last[header.index("total")]
                row.append(repr(float(e_term)))
                row.append(repr(float(total - s * e_term)))
                net, _ = load_checkpoint(ckpt)
                inlet = evaluate_planes(net, p.case, ref_ds, axis=1,
                                        coords_nd=(0.0,), fields=("v",))[0]
                row.append(repr(inlet.variables["v"]["relative_l2"]))
                metrics = _read_json(metrics_path)
                row.append(repr(metrics["variables"]["p"]["relative_l2"]))
            else:
                row += ["", "", "", ""]
            row.append(code)
            writer.writerow(row)
    print(f"wrote {table}")
    bad = [c for c in codes if c != EXIT_OK]
    return bad[0] if bad else EXIT_OK


# ---------------------------------------------------------------------------
# compare-architectures


def _cmd_compare_architectures(args, parser) -> int:
    _apply_config_file(args, parser)
    fluxes = (_parse_floats(args.fluxes) if args.fluxes else [0.1])
    args.out = _resolve_out(args.out)
    jobs = args.jobs if args.jobs else _default_jobs()
    _snapshot(args.out, {
        "command": "compare-architectures", "scale": args.scale,
        "seed": args.seed, "fluxes": fluxes, "jobs": jobs,
    })

    children = []
    runs = []
    for flux in fluxes:
        p = flux_preset(flux, args.scale)
        refdir = os.path.join(args.out, "reference")
        os.makedirs(refdir, exist_ok=True)
        ref = _reference_path(refdir, p, p.oracle_shape)
        if not os.path.exists(ref):
            export_dataset(_solve_reference(p, p.oracle_shape), ref)
        for kind in ("tb", "fnn"):
            child_dir = os.path.join(args.out, f"m{flux:g}-{kind}")
            argv = (["train", "--preset", p.name, "--scale", args.scale,
                     "--seed", str(args.seed), "--out", child_dir,
                     "--reference", ref, "--mass-flux", repr(float(flux))]
                    + _sched_child_args(args))
            if kind == "fnn":
                argv.append("--fnn")
            children.append(argv)
            runs.append((flux, kind, child_dir))
    codes = _run_children(children, jobs)

    table = os.path.join(args.out, "table.csv")
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m_dot", "arch", "n_params", "p_relative_l2",
                         "p_max_relative", "v_relative_l2", "final_total",
                         "exit_code"])
        for (flux, kind, child_dir), code in zip(runs, codes):
            row = [repr(float(flux)), kind]
            metrics_path = os.path.join(child_dir, "metrics.json")
            run_path = os.path.join(child_dir, "run.json")
            if code == EXIT_OK and os.path.exists(metrics_path):
                meta = _read_json(run_path)
                metrics = _read_json(metrics_path)["variables"]
                row.append(meta["n_params"])
                row.append(repr(metrics["p"]["relative_l2"]))
                row.append(repr(metrics["p"]["max_relative"]))
                row.append(repr(metrics["v"]["relative_l2"]))
                row.append(repr(meta["final_total"]))
            else:
                row += ["", "", "", "", ""]
            row.append(code)
            writer.writerow(row)
    print(f"wrote {table}")
    bad = [c for c in codes if c != EXIT_OK]
    return bad[0] if bad else EXIT_OK


# ---------------------------------------------------------------------------
# transfer


def _cmd_transfer(args, parser) -> int:
    _apply_config_file(args, parser)
    if not args.preset:
        raise ConfigError("--preset is required")
    p = _load_preset(args.preset, args.scale)
    if p.transfer is None:
        raise ConfigError(f"preset {p.name!r} has no published transfer leg")
    if not args.source or not os.path.exists(args.source):
        raise ConfigError("--source checkpoint is required and must exist")
    args.out = _resolve_out(args.out)
    jobs = args.jobs if args.jobs else _default_jobs()
    _snapshot(args.out, {
        "command": "transfer", "preset": p.name, "scale": args.scale,
        "seed": args.seed, "source": args.source,
        "with_scratch": args.with_scratch, "reference": args.reference,
        "points": args.points, "noise": args.noise, "jobs": jobs,
    })

    reference = args.reference
    if reference is None and (p.case.heat or True):
        reference = _ensure_reference(p, None, args.out)

    common = (["--preset", p.name, "--scale", args.scale,
               "--seed", str(args.seed), "--reference", reference]
              + _sched_child_args(args))
    if args.points is not None:
        common += ["--points", str(args.points)]
    if args.noise is not None:
        common += ["--noise", repr(float(args.noise))]

    legs = [("transfer", ["train", "--out",
                          os.path.join(args.out, "transfer"),
                          "--source", args.source] + common)]
    if args.with_scratch:
        scratch = ["train", "--out", os.path.join(args.out, "scratch"),
                   "--from-scratch"] + common
        if p.mode == "inverse":
            scratch += ["--source", args.source]
        legs.append(("scratch", scratch))
    codes = _run_children([argv for _, argv in legs], min(jobs, len(legs)))

    comparison = {}
    for (leg, _), code in zip(legs, codes):
        leg_dir = os.path.join(args.out, leg)
        entry = {"exit_code": code}
        run_path = os.path.join(leg_dir, "run.json")
        metrics_path = os.path.join(leg_dir, "metrics.json")
        if os.path.exists(run_path):
            meta = _read_json(run_path)
            for key in ("first_epoch_total", "final_total", "adam_seconds",
                        "adam_epochs", "adam_seconds_per_epoch",
                        "lbfgs_seconds", "epochs", "divergent"):
                entry[key] = meta.get(key)
        if os.path.exists(metrics_path):
            metrics = _read_json(metrics_path)["variables"]
            for fname, block in metrics.items():
                if "relative_l2" in block:
                    entry[f"{fname}_relative_l2"] = block["relative_l2"]
        comparison[leg] = entry
    _write_json(os.path.join(args.out, "comparison.json"), comparison)
    print(f"wrote {os.path.join(args.out, 'comparison.json')}")
    bad = [c for c in codes if c != EXIT_OK]
    return bad[0] if bad else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", choices=("desk", "full"), default="desk",
                   help="preset scale (default desk)")
    p.add_argument("--full", dest="scale", action="store_const", const="full",
                   help="shorthand for --scale full")
    p.add_argument("--desk", dest="scale", action="store_const", const="desk",
                   help="shorthand for --scale desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/out", help="output directory")
    p.add_argument("--config", default=None,
                   help="JSON file supplying any of this command's options")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="porepinn",
        description="physics-informed solvers for porous-media flow and heat")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-reference",
                       help="finite-volume reference dataset for a preset")
    _add_common(g)
    g.add_argument("--preset", default=None, choices=None,
                   help=f"one of: {', '.join(preset_names())}")
    g.add_argument("--shape", default=None,
                   help="override grid shape, e.g. 200,250")
    g.set_defaults(func=_cmd_generate_reference, parser_ref=g)

    t = sub.add_parser("train", help="one training run")
    _add_common(t)
    t.add_argument("--preset", default=None)
    t.add_argument("--source", default=None,
                   help="checkpoint supplying the frozen or warm-started parts")
    t.add_argument("--reference", default=None,
                   help="reference dataset CSV (labels and/or evaluation)")
    t.add_argument("--points", type=int, default=None,
                   help="labeled outlet points for inverse runs")
    t.add_argument("--noise", type=float, default=None,
                   help="multiplicative label noise level (fraction)")
    t.add_argument("--fnn", action="store_true",
                   help="train the single-stack baseline instead")
    t.add_argument("--from-scratch", action="store_true",
                   help="ignore the preset's transfer leg; fresh start")
    t.add_argument("--set-weight", action="append", default=None,
                   metavar="TERM=VALUE", help="override one loss weight")
    t.add_argument("--mass-flux", type=float, default=None,
                   help="synthesize a flow preset for this mass flux")
    t.add_argument("--adam-epochs", type=int, default=None,
                   help="override the preset's Adam epoch count")
    t.add_argument("--adam-lr", type=float, default=None,
                   help="override the preset's Adam learning rate")
    t.add_argument("--lbfgs-iters", type=int, default=None,
                   help="override the preset's L-BFGS iteration cap")
    t.set_defaults(func=_cmd_train, parser_ref=t)

    e = sub.add_parser("evaluate",
                       help="score a checkpoint against a reference dataset")
    _add_common(e)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--preset", default=None)
    e.add_argument("--reference", default=None)
    e.add_argument("--fields", default=None,
                   help="comma-separated field subset, e.g. p,v")
    e.add_argument("--planes", default=None,
                   help="per-plane reports at these coordinates, e.g. 0.3,0.7")
    e.add_argument("--plane-axis", type=int, default=0)
    e.add_argument("--plot-data", action="store_true",
                   help="emit KDE and error-histogram CSVs")
    e.set_defaults(func=_cmd_evaluate, parser_ref=e)

    si = sub.add_parser("sweep-inverse",
                        help="labeled-point or noise sweep of inverse runs")
    _add_common(si)
    si.add_argument("--preset", default="inverse-D")
    si.add_argument("--points-list", default=None,
                    help="comma-separated point counts "
                         "(default 0,5,10,20,30,50,100)")
    si.add_argument("--points", type=int, default=None,
                    help="fixed point count for a noise sweep")
    si.add_argument("--noise", type=float, default=None,
                    help="fixed noise level for a point sweep")
    si.add_argument("--noise-levels", default=None,
                    help="comma-separated noise levels; switches the sweep axis")
    si.add_argument("--source", default=None,
                    help="flow checkpoint (trained when omitted)")
    si.add_argument("--reference", default=None,
                    help="heat reference dataset (generated when omitted)")
    si.add_argument("--adam-epochs", type=int, default=None)
    si.add_argument("--adam-lr", type=float, default=None)
    si.add_argument("--lbfgs-iters", type=int, default=None)
    si.add_argument("--jobs", type=int, default=None)
    si.set_defaults(func=_cmd_sweep_inverse, parser_ref=si)

    sw = sub.add_parser("sweep-weights",
                        help="inlet-weight sweep, one run per scale")
    _add_common(sw)
    sw.add_argument("--preset", default="B")
    sw.add_argument("--term", type=int, default=6)
    sw.add_argument("--scales", default=None,
                    help="comma-separated weight values (default 1,10,100,1000)")
    sw.add_argument("--reference", default=None)
    sw.add_argument("--adam-epochs", type=int, default=None)
    sw.add_argument("--adam-lr", type=float, default=None)
    sw.add_argument("--lbfgs-iters", type=int, default=None)
    sw.add_argument("--jobs", type=int, default=None)
    sw.set_defaults(func=_cmd_sweep_weights, parser_ref=sw)

    ca = sub.add_parser("compare-architectures",
                        help="trunk-branch net vs the single-stack baseline")
    _add_common(ca)
    ca.add_argument("--fluxes", default=None,
                    help="comma-separated mass fluxes (default 0.1)")
    ca.add_argument("--adam-epochs", type=int, default=None)
    ca.add_argument("--adam-lr", type=float, default=None)
    ca.add_argument("--lbfgs-iters", type=int, default=None)
    ca.add_argument("--jobs", type=int, default=None)
    ca.set_defaults(func=_cmd_compare_architectures, parser_ref=ca)

    tr = sub.add_parser("transfer",
                        help="fine-tune a checkpoint, optionally vs scratch")
    _add_common(tr)
    tr.add_argument("--preset", default=None)
    tr.add_argument("--source", default=None)
    tr.add_argument("--with-scratch", action="store_true",
                    help="also run the from-scratch comparison leg")
    tr.add_argument("--reference", default=None)
    tr.add_argument("--points", type=int, default=None)
    tr.add_argument("--noise", type=float, default=None)
    tr.add_argument("--adam-epochs", type=int, default=None)
    tr.add_argument("--adam-lr", type=float, default=None)
    tr.add_argument("--lbfgs-iters", type=int, default=None)
    tr.add_argument("--jobs", type=int, default=None)
    tr.set_defaults(func=_cmd_transfer, parser_ref=tr)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; that is an invalid configuration
        return EXIT_BAD_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args, args.parser_ref)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
