"""Command-line surface: simulate, decompose, project, evaluate.

Exit codes: 0 success, 1 validation error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from wassfact import datagen, fileio, ot, solver
from wassfact.datagen import AtomSpec
from wassfact.fileio import ConfigError, TensorFormatError


def _simulate_mixture(params: dict) -> np.ndarray:
    allowed = {"recipe", "grid_n", "order", "domain", "atoms", "weights",
               "samples", "seed"}
    fileio._reject_unknown(params, allowed, "simulate")
    n = int(params.get("grid_n", 32))
    order = int(params.get("order", 3))
    domain = tuple(params.get("domain", (0.0, 1.0)))
    seed = int(params.get("seed", 0))
    raw_atoms = params.get("atoms")
    if raw_atoms is None:
        specs = datagen.default_atom_specs(n, domain)
        components = [[gaussian] * order
                      for gaussian in map(datagen.gaussian_atom, specs)]
    else:
        components = []
        for atom in raw_atoms:
            fileio._reject_unknown(atom, {"means", "stds"}, "atom")
            means = atom["means"]
            stds = atom["stds"]
            if np.isscalar(means):
                means = [means] * order
            if np.isscalar(stds):
                stds = [stds] * order
            components.append([
                datagen.gaussian_atom(AtomSpec(n, domain, m, s))
                for m, s in zip(means, stds)
            ])
    weights = params.get("weights", [1.0 / len(components)] * len(components))
    X = datagen.separable_mixture(components, weights)
    samples = params.get("samples")
    if samples is not None:
        X = datagen.empirical_sample(X / X.sum(), int(samples), seed)
    return X


def _simulate_shifted_slices(params: dict) -> np.ndarray:
    allowed = {"recipe", "grid_n", "domain", "n_slices", "shift_std", "atoms", "seed"}
    fileio._reject_unknown(params, allowed, "simulate")
    n = int(params.get("grid_n", 32))
    domain = tuple(params.get("domain", (-1.0, 1.0)))
    raw_atoms = params.get("atoms")
    if raw_atoms is None:
        specs = datagen.default_atom_specs(n, domain)
        pairs = [(spec, spec) for spec in specs]
    else:
        pairs = []
        for atom in raw_atoms:
            fileio._reject_unknown(atom, {"means", "stds"}, "atom")
            means, stds = atom["means"], atom["stds"]
            pairs.append((AtomSpec(n, domain, means[0], stds[0]),
                          AtomSpec(n, domain, means[1], stds[1])))
    return datagen.shifted_slice_dataset(
        pairs, int(params.get("n_slices", 100)),
        float(params.get("shift_std", 0.05)), int(params.get("seed", 0)),
    )


def cmd_simulate(args) -> int:
    run = fileio.load_config(args.config)
    if run.simulate is None:
        raise ConfigError("config has no 'simulate' section")
    recipe = run.simulate.get("recipe", "mixture")
    if recipe == "mixture":
        X = _simulate_mixture(run.simulate)
    elif recipe == "shifted_slices":
        X = _simulate_shifted_slices(run.simulate)
    else:
        raise ConfigError(f"unknown simulate recipe {recipe!r}")
    fileio.write_tensor(X, args.out)
    print(f"wrote {X.shape} tensor to {args.out}")
    return 0


def cmd_decompose(args) -> int:
    run = fileio.load_config(args.config)
    X = fileio.read_tensor(args.data)
    cfg = run.solver_config(X.shape)
    model, trace = solver.block_coordinate_descent(X, cfg)
    os.makedirs(args.out, exist_ok=True)
    fileio.export_model(model, args.out)
    fileio.export_trace(trace, os.path.join(args.out, "trace.csv"))
    with open(args.config) as fh:
        config_copy = fh.read()
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        fh.write(config_copy)
    metrics = datagen.reconstruction_metrics(X, model, cfg)
    fileio.export_metrics(metrics, os.path.join(args.out, "metrics.txt"))
    if not trace.converged:
        print("decompose: an inner solve hit its iteration cap; results are best-so-far")
        return 2
    print(f"decompose: wrote model to {args.out} "
          f"(rel. Frobenius error {metrics['frobenius_rel_error']:.4g})")
    return 0


def cmd_project(args) -> int:
    model = fileio.import_model(args.model)
    run = fileio.load_config(os.path.join(args.model, "config.json"))
    X_new = fileio.read_tensor(args.data)
    cfg = run.solver_config(X_new.shape)
    block, result = solver.project_onto_basis(X_new, model, cfg, args.block)
    fileio.write_tensor(np.asarray(block), args.out)
    if not result.converged:
        print(f"project: inner solve stopped at gradient norm {result.grad_norm:.3g}")
        return 2
    print(f"project: wrote block {args.block} coefficients to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    run = fileio.load_config(args.config)
    A = fileio.read_tensor(args.data)
    B = fileio.read_tensor(args.data2)
    if A.shape != B.shape:
        raise ConfigError(f"tensor shapes differ: {A.shape} vs {B.shape}")
    kernel = run.kernel(A.shape)
    if run.loss_mode == "slices":
        pairs = list(zip(np.moveaxis(A, run.loss_axis, 0),
                         np.moveaxis(B, run.loss_axis, 0)))
    else:
        pairs = [(A, B)]
    value, converged = 0.0, True
    for a, b in pairs:
        if np.isinf(run.lam):
            res = ot.sinkhorn_balanced(a, b, kernel)
        else:
            res = ot.sinkhorn_semiunbalanced(a, b, kernel, run.lam)
        value += res.value
        converged &= res.converged
    print(f"ot_value: {value:.12g}")
    print(f"frobenius: {float(np.linalg.norm(A - B)):.12g}")
    if not converged:
        print("evaluate: Sinkhorn did not reach tolerance")
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wassfact",
        description="Non-negative tensor factorisation under a smoothed "
                    "Wasserstein loss",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset tensor")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decompose", help="run block coordinate descent")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("project", help="project data onto a fixed basis")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--block", type=int, required=True,
                   help="0 for the core, k >= 1 for factor k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("evaluate", help="OT and Frobenius distance of two tensors")
    p.add_argument("--data", required=True)
    p.add_argument("--data2", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TensorFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
