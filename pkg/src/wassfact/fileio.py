"""Plain-text file formats: WTF1 tensors, CSV exports, JSON run configs.

WTF1 layout: line 1 is the magic ``wtf-tensor v1``, line 2 the
space-separated shape, then the row-major entries as whitespace-separated
decimals. Values are printed with 17 significant digits so round trips are
lossless.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from wassfact import ot
from wassfact.entropy import Constraint
from wassfact.solver import InnerConfig, SolverConfig, SolveTrace, TuckerModel
from wassfact.tensor import superdiagonal

MAGIC = "wtf-tensor v1"

_CONSTRAINT_NAMES = {c.value: c for c in Constraint}


class TensorFormatError(Exception):
    """Malformed WTF1 tensor file."""


class ConfigError(Exception):
    """Invalid run configuration."""


def write_tensor(tensor: np.ndarray, path) -> None:
    tensor = np.asarray(tensor, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(MAGIC + "\n")
        fh.write(" ".join(str(n) for n in tensor.shape) + "\n")
        flat = tensor.ravel()
        for lo in range(0, flat.size, 8):
            fh.write(" ".join(f"{v:.17g}" for v in flat[lo : lo + 8]) + "\n")


def read_tensor(path) -> np.ndarray:
    with open(path) as fh:
        magic = fh.readline().rstrip("\n")
        if magic != MAGIC:
            raise TensorFormatError(f"bad magic line {magic!r}, expected {MAGIC!r}")
        shape_line = fh.readline().split()
        try:
            shape = tuple(int(tok) for tok in shape_line)
        except ValueError:
            raise TensorFormatError(f"non-integer shape entry in {shape_line}") from None
        if not shape or any(n < 1 for n in shape):
            raise TensorFormatError(f"invalid shape {shape}")
        payload = fh.read().split()
    expected = int(np.prod(shape, dtype=np.int64))
    if len(payload) != expected:
        raise TensorFormatError(
            f"data length mismatch: expected {expected} values, found {len(payload)}"
        )
    try:
        data = np.array([float(tok) for tok in payload])
    except ValueError:
        raise TensorFormatError("non-numeric payload value") from None
    return data.reshape(shape)


# ---------------------------------------------------------------------------
# Model and trace export


def export_model(model: TuckerModel, directory) -> None:
    """One CSV per factor (rows = grid points, columns = atoms), the core as
    a WTF1 file, and a small JSON manifest of constraints."""
    os.makedirs(directory, exist_ok=True)
    for k, A in enumerate(model.factors):
        header = ",".join(f"atom{j + 1}" for j in range(A.shape[1]))
        np.savetxt(
            os.path.join(directory, f"factor{k + 1}.csv"),
            A, delimiter=",", header=header, comments="", fmt="%.17g",
        )
    write_tensor(model.core, os.path.join(directory, "core.wtf"))
    manifest = {
        "order": model.order,
        "constraints": [c.value for c in model.constraints],
        "core_fixed": model.core_fixed,
    }
    with open(os.path.join(directory, "model.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def import_model(directory) -> TuckerModel:
    with open(os.path.join(directory, "model.json")) as fh:
        manifest = json.load(fh)
    factors = [
        np.loadtxt(os.path.join(directory, f"factor{k + 1}.csv"),
                   delimiter=",", skiprows=1, ndmin=2)
        for k in range(manifest["order"])
    ]
    core = read_tensor(os.path.join(directory, "core.wtf"))
    constraints = [_CONSTRAINT_NAMES[name] for name in manifest["constraints"]]
    return TuckerModel(core, factors, constraints, manifest["core_fixed"])


def export_trace(trace: SolveTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write("sweep,block,dual_value,grad_norm,primal_objective,seconds\n")
        for rec in trace.records:
            fh.write(
                f"{rec.sweep},{rec.block},{rec.dual_value:.17g},"
                f"{rec.grad_norm:.17g},{rec.primal_objective:.17g},"
                f"{rec.seconds:.6f}\n"
            )


def export_metrics(metrics: dict, path) -> None:
    with open(path, "w") as fh:
        for key, value in metrics.items():
            fh.write(f"{key}: {value}\n")


# ---------------------------------------------------------------------------
# Run configuration


@dataclass
class RunConfig:
    """Validated contents of a JSON config document."""

    epsilon: float
    lam: float
    loss_mode: str
    loss_axis: int
    cost_domain: tuple
    cost_exponent: float
    cost_normalize: bool
    ranks: tuple | None
    constraints: tuple | None
    rho: tuple | None
    cp: bool
    outer_iters: int
    outer_tol: float
    inner: InnerConfig
    init: str
    seed: int
    simulate: dict | None

    def solver_config(self, data_shape) -> SolverConfig:
        """Instantiate a solver config for a concrete data tensor."""
        if self.ranks is None:
            raise ConfigError("config is missing 'ranks'")
        if len(self.ranks) != len(data_shape) and self.loss_mode == "tensor":
            raise ConfigError(
                f"{len(self.ranks)} ranks for an order-{len(data_shape)} tensor"
            )
        for r, n in zip(self.ranks, data_shape):
            if r > n:
                raise ConfigError(f"infeasible rank {r} for mode of size {n}")
        kernel = self.kernel(data_shape)
        loss = ot.LossSpec(kernel, self.lam, self.loss_mode, self.loss_axis)
        return SolverConfig(
            loss=loss, ranks=self.ranks, rho=self.rho,
            constraints=self.constraints, cp=self.cp,
            outer_iters=self.outer_iters, outer_tol=self.outer_tol,
            inner=self.inner, init=self.init, seed=self.seed,
        )

    def kernel(self, data_shape) -> ot.GibbsKernel:
        if self.loss_mode == "slices":
            if not 0 <= self.loss_axis < len(data_shape):
                raise ConfigError(f"slice axis {self.loss_axis} out of range")
            sizes = [n for i, n in enumerate(data_shape) if i != self.loss_axis]
        else:
            sizes = list(data_shape)
        costs = [
            ot.build_grid_cost(n, self.cost_domain, self.cost_exponent,
                               self.cost_normalize)
            for n in sizes
        ]
        return ot.gibbs_kernel(costs, self.epsilon)


def _reject_unknown(mapping: dict, allowed, context: str) -> None:
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {context} key(s): {sorted(unknown)}")


def _parse_constraints(raw, n_factors) -> tuple:
    if not isinstance(raw, dict):
        raise ConfigError("'constraints' must be an object with core/factors")
    _reject_unknown(raw, {"core", "factors"}, "constraints")
    names = [raw.get("core", "simplex")] + list(raw.get("factors", []))
    if len(names) != n_factors + 1:
        raise ConfigError(f"need {n_factors} factor constraints, got {len(names) - 1}")
    out = []
    for name in names:
        if name not in _CONSTRAINT_NAMES:
            raise ConfigError(
                f"unknown constraint name {name!r}; choose from "
                f"{sorted(_CONSTRAINT_NAMES)}"
            )
        out.append(_CONSTRAINT_NAMES[name])
    return tuple(out)


_TOP_KEYS = {
    "epsilon", "lambda", "loss", "cost", "ranks", "constraints", "rho", "cp",
    "outer_iters", "outer_tol", "inner", "init", "seed", "simulate",
}


def parse_config(document: dict) -> RunConfig:
    """Validate a parsed JSON config; unknown keys are rejected."""
    if not isinstance(document, dict):
        raise ConfigError("config document must be a JSON object")
    _reject_unknown(document, _TOP_KEYS, "config")

    epsilon = float(document.get("epsilon", 0.01))
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")

    raw_lam = document.get("lambda", "balanced")
    if raw_lam == "balanced":
        lam = np.inf
    else:
        lam = float(raw_lam)
        if lam <= 0:
            raise ConfigError(f"lambda must be positive or 'balanced', got {lam}")

    loss = document.get("loss", {"mode": "tensor"})
    _reject_unknown(loss, {"mode", "axis"}, "loss")
    loss_mode = loss.get("mode", "tensor")
    if loss_mode not in ("tensor", "slices"):
        raise ConfigError(f"unknown loss mode {loss_mode!r}")
    loss_axis = int(loss.get("axis", 0))

    cost = document.get("cost", {})
    _reject_unknown(cost, {"domain", "exponent", "normalize_unit_mean"}, "cost")
    domain = tuple(cost.get("domain", (0.0, 1.0)))
    exponent = float(cost.get("exponent", 2.0))
    normalize = bool(cost.get("normalize_unit_mean", True))

    ranks = document.get("ranks")
    if ranks is not None:
        ranks = tuple(int(r) for r in ranks)
        if any(r < 1 for r in ranks):
            raise ConfigError(f"ranks must be positive, got {ranks}")

    constraints = None
    rho = None
    if ranks is not None:
        constraints = _parse_constraints(
            document.get("constraints",
                         {"core": "simplex", "factors": ["columns"] * len(ranks)}),
            len(ranks),
        )
        raw_rho = document.get("rho", 1e-3)
        if isinstance(raw_rho, (int, float)):
            rho = (float(raw_rho),) * (len(ranks) + 1)
        else:
            rho = tuple(float(v) for v in raw_rho)
        if len(rho) != len(ranks) + 1:
            raise ConfigError(f"need {len(ranks) + 1} rho values, got {len(rho)}")
        if any(v <= 0 for v in rho):
            raise ConfigError(f"rho must be positive, got {rho}")

    inner_raw = document.get("inner", {})
    _reject_unknown(
        inner_raw, {"method", "grad_tol", "max_iters", "memory"}, "inner"
    )
    method = inner_raw.get("method", "lbfgs")
    if method not in ("lbfgs", "gd"):
        raise ConfigError(f"unknown inner method {method!r}")
    inner = InnerConfig(
        method=method,
        grad_tol=float(inner_raw.get("grad_tol", 1e-7)),
        max_iters=int(inner_raw.get("max_iters", 500)),
        memory=int(inner_raw.get("memory", 10)),
    )
    if inner.grad_tol <= 0:
        raise ConfigError("inner grad_tol must be positive")

    init = document.get("init", "nnsvd")
    if init not in ("nnsvd", "random"):
        raise ConfigError(f"unknown init mode {init!r}")

    outer_tol = float(document.get("outer_tol", 1e-5))
    if outer_tol <= 0:
        raise ConfigError("outer_tol must be positive")

    return RunConfig(
        epsilon=epsilon, lam=lam, loss_mode=loss_mode, loss_axis=loss_axis,
        cost_domain=domain, cost_exponent=exponent, cost_normalize=normalize,
        ranks=ranks, constraints=constraints, rho=rho,
        cp=bool(document.get("cp", False)),
        outer_iters=int(document.get("outer_iters", 100)),
        outer_tol=outer_tol, inner=inner, init=init,
        seed=int(document.get("seed", 0)),
        simulate=document.get("simulate"),
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(document)
