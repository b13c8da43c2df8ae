"""Experiment harness: configs, presets, runners, exports, and checks.

A run is fully determined by its config (topology seed, data seed,
algorithm parameters, budgets); re-running the same config reproduces
every trace value bit for bit.  Wall-clock columns are measured, not
derived, so they are the one exception to byte determinism across runs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import algorithms as alg
from . import analysis
from .objectives import (LogisticFamily, QuadraticFamily, convexity_bounds,
                         generate_logistic_data, generate_quadratic_set)
from .topology import (Graph, MixingMatrix, build_topology, metropolis_weights,
                       spectral_stats, topology_from_doc, topology_to_doc)


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    n: int
    tau: float | None = None
    seed: int | None = None
    file: str | None = None  # pinned topology JSON overrides the generator

    def to_doc(self) -> dict:
        return {"kind": self.kind, "n": self.n, "tau": self.tau,
                "seed": self.seed, "file": self.file}

    @staticmethod
    def from_doc(doc: dict) -> "TopologySpec":
        return TopologySpec(kind=doc["kind"], n=int(doc["n"]),
                            tau=doc.get("tau"), seed=doc.get("seed"),
                            file=doc.get("file"))


@dataclass(frozen=True)
class DataSpec:
    family: str  # "logistic" or "quadratic"
    p: int
    m: int | None = None
    rho: float | None = None
    seed: int = 0

    def to_doc(self) -> dict:
        return {"family": self.family, "p": self.p, "m": self.m,
                "rho": self.rho, "seed": self.seed}

    @staticmethod
    def from_doc(doc: dict) -> "DataSpec":
        return DataSpec(family=doc["family"], p=int(doc["p"]),
                        m=doc.get("m"), rho=doc.get("rho"),
                        seed=int(doc["seed"]))


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str  # "nt", "gt", "extra", "dlm"
    alpha: float
    eps: float | None = None

    def to_doc(self) -> dict:
        return {"name": self.name, "alpha": self.alpha, "eps": self.eps}

    @staticmethod
    def from_doc(doc: dict) -> "AlgorithmSpec":
        return AlgorithmSpec(name=doc["name"], alpha=float(doc["alpha"]),
                             eps=None if doc.get("eps") is None
                             else float(doc["eps"]))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one experiment."""

    name: str
    topology: TopologySpec
    data: DataSpec
    algorithms: tuple[AlgorithmSpec, ...]
    iters: int
    stop_tol: float | None = None
    ref_tol: float = 1e-12
    beta: float = 2.0
    phi: float = 2.0
    remainder_metrics: bool = True

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "topology": self.topology.to_doc(),
            "data": self.data.to_doc(),
            "algorithms": [a.to_doc() for a in self.algorithms],
            "iters": self.iters,
            "stop_tol": self.stop_tol,
            "ref_tol": self.ref_tol,
            "beta": self.beta,
            "phi": self.phi,
            "remainder_metrics": self.remainder_metrics,
        }

    @staticmethod
    def from_doc(doc: dict) -> "RunConfig":
        return RunConfig(
            name=doc["name"],
            topology=TopologySpec.from_doc(doc["topology"]),
            data=DataSpec.from_doc(doc["data"]),
            algorithms=tuple(AlgorithmSpec.from_doc(a) for a in doc["algorithms"]),
            iters=int(doc["iters"]),
            stop_tol=doc.get("stop_tol"),
            ref_tol=float(doc.get("ref_tol", 1e-12)),
            beta=float(doc.get("beta", 2.0)),
            phi=float(doc.get("phi", 2.0)),
            remainder_metrics=bool(doc.get("remainder_metrics", True)),
        )


@dataclass
class ConvergenceTrace:
    """Per-iteration metrics for one algorithm; entry t is iterate x^t.

    Optional lists hold None where a quantity is not defined for the
    algorithm (dual-based metrics exist only for the curvature-tracked
    method) or for the parameters (squared metric error only under a
    feasible certificate).
    """

    algorithm: str
    alpha: float
    eps: float | None
    rel_error: list = field(default_factory=list)
    gnorm_error: list = field(default_factory=list)
    tracking_residual: list = field(default_factory=list)
    kkt_primal: list = field(default_factory=list)
    kkt_dual: list = field(default_factory=list)
    remainder_norm: list = field(default_factory=list)
    remainder_bound: list = field(default_factory=list)
    comm_rounds: list = field(default_factory=list)
    scalars_sent: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rel_error)

    def first_below(self, tol: float) -> int | None:
        """Smallest t with rel_error[t] <= tol, or None."""
        for t, e in enumerate(self.rel_error):
            if e <= tol:
                return t
        return None

    def to_doc(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_doc(doc: dict) -> "ConvergenceTrace":
        return ConvergenceTrace(**doc)


@dataclass
class RunRecord:
    """Outputs of run_experiment, serializable to a single JSON file."""

    config: RunConfig
    dataset_digest: str
    x_star: np.ndarray
    ref_residual: float
    spectra: dict
    certificates: dict
    traces: dict
    topology: dict

    def to_doc(self) -> dict:
        return {
            "config": self.config.to_doc(),
            "dataset_digest": self.dataset_digest,
            "x_star": self.x_star.tolist(),
            "ref_residual": self.ref_residual,
            "spectra": self.spectra,
            "certificates": self.certificates,
            "traces": {k: v.to_doc() for k, v in self.traces.items()},
            "topology": self.topology,
        }

    @staticmethod
    def from_doc(doc: dict) -> "RunRecord":
        return RunRecord(
            config=RunConfig.from_doc(doc["config"]),
            dataset_digest=doc["dataset_digest"],
            x_star=np.asarray(doc["x_star"], dtype=float),
            ref_residual=float(doc["ref_residual"]),
            spectra=doc["spectra"],
            certificates=doc["certificates"],
            traces={k: ConvergenceTrace.from_doc(v)
                    for k, v in doc["traces"].items()},
            topology=doc["topology"],
        )


def save_record(record: RunRecord, path) -> None:
    Path(path).write_text(json.dumps(record.to_doc()) + "\n")


def load_record(path) -> RunRecord:
    return RunRecord.from_doc(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Presets.  Step sizes follow the published settings for each scenario;
# topology and data seeds are fixed here since the original random
# instances are not reproducible.
# ---------------------------------------------------------------------------

def preset(name: str) -> RunConfig:
    if name == "fig1":
        return RunConfig(
            name="fig1",
            topology=TopologySpec(kind="random", n=10, tau=0.5, seed=7),
            data=DataSpec(family="logistic", p=8, m=12, rho=1e-3, seed=1),
            algorithms=(AlgorithmSpec("nt", alpha=3.3, eps=3.0),),
            iters=2000,
        )
    if name == "fig4-n50":
        return RunConfig(
            name="fig4-n50",
            topology=TopologySpec(kind="random", n=50, tau=0.5, seed=7),
            data=DataSpec(family="logistic", p=20, m=10, rho=1e-3, seed=1),
            algorithms=(
                AlgorithmSpec("gt", alpha=0.16),
                AlgorithmSpec("extra", alpha=0.07),
                AlgorithmSpec("dlm", alpha=0.1, eps=0.1),
                AlgorithmSpec("nt", alpha=1.1, eps=1.2),
            ),
            iters=20000,
        )
    if name == "fig5-n100":
        return RunConfig(
            name="fig5-n100",
            topology=TopologySpec(kind="random", n=100, tau=0.5, seed=7),
            data=DataSpec(family="logistic", p=40, m=10, rho=1e-3, seed=1),
            algorithms=(
                AlgorithmSpec("gt", alpha=0.6),
                AlgorithmSpec("extra", alpha=1.6),
                AlgorithmSpec("dlm", alpha=0.008, eps=0.001),
                AlgorithmSpec("nt", alpha=0.08, eps=0.08),
            ),
            iters=20000,
        )
    if name == "topo-n10":
        # More samples per node than fig1 so the local curvature dominates
        # the consensus penalty; that is the regime where the topology
        # (through lambda-hat-min) is the rate-limiting factor.
        return RunConfig(
            name="topo-n10",
            topology=TopologySpec(kind="complete", n=10),
            data=DataSpec(family="logistic", p=8, m=50, rho=1e-3, seed=1),
            algorithms=(AlgorithmSpec("nt", alpha=2.3, eps=2.4),),
            iters=5000,
            stop_tol=1e-9,
        )
    raise ValueError(f"unknown preset {name!r}")


PRESET_NAMES = ("fig1", "fig4-n50", "fig5-n100", "topo-n10")


def _build_network(spec: TopologySpec) -> tuple[Graph, MixingMatrix]:
    if spec.file is not None:
        return topology_from_doc(json.loads(Path(spec.file).read_text()))
    graph = build_topology(spec.kind, spec.n, tau=spec.tau, seed=spec.seed)
    return graph, metropolis_weights(graph)


def _make_family(spec: DataSpec, n: int):
    """Instantiate the objective family for n nodes; returns (family, digest)."""
    if spec.family == "logistic":
        data = generate_logistic_data(n, spec.m, spec.p, spec.rho, spec.seed)
        return LogisticFamily(data), data.digest()
    if spec.family == "quadratic":
        fam = generate_quadratic_set(n, spec.p, spec.seed)
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(fam.a).tobytes())
        h.update(np.ascontiguousarray(fam.b).tobytes())
        return fam, "sha256:" + h.hexdigest()
    raise ValueError(f"unknown data family {spec.family!r}")


def run_experiment(config: RunConfig) -> RunRecord:
    """Build the network and data, solve the reference, run every algorithm."""
    graph, mix = _build_network(config.topology)
    spectra = spectral_stats(mix)
    family, digest = _make_family(config.data, graph.n)
    x_star = alg.centralized_reference(family, tol=config.ref_tol)
    ref_residual = float(np.linalg.norm(family.grad_total(x_star)))
    bounds = convexity_bounds(family)

    certificates = {}
    traces = {}
    for spec in config.algorithms:
        cert = None
        if spec.name == "nt":
            cert = analysis.rate_certificate(bounds, spectra, spec.alpha,
                                             spec.eps, config.beta, config.phi)
            certificates[spec.name] = _cert_doc(cert)
        traces[spec.name] = _run_algorithm(spec, family, graph, mix.w,
                                           spectra, x_star, cert, config)
    return RunRecord(config=config, dataset_digest=digest, x_star=x_star,
                     ref_residual=ref_residual,
                     spectra={"lambda_max": spectra.lambda_max,
                              "lambda_min_nz": spectra.lambda_min_nz},
                     certificates=certificates, traces=traces,
                     topology=topology_to_doc(graph, mix))


def _cert_doc(cert: analysis.RateCertificate) -> dict:
    doc = dataclasses.asdict(cert)
    doc["contraction"] = cert.contraction if cert.feasible else None
    return doc


def _run_algorithm(spec: AlgorithmSpec, family, graph: Graph, w: np.ndarray,
                   spectra, x_star: np.ndarray, cert, config: RunConfig
                   ) -> ConvergenceTrace:
    n, p = family.n, family.p
    root = spectra.root
    target = np.tile(x_star, (n, 1))
    denom = max(float(np.linalg.norm(target)), 1e-300)
    trace = ConvergenceTrace(algorithm=spec.name, alpha=spec.alpha, eps=spec.eps)

    track_dual = spec.name == "nt"
    feasible = cert is not None and cert.feasible
    if feasible:
        q_mat = analysis.consensus_penalty_matrix(w, spec.alpha, spec.eps)
        v_star = analysis.dual_optimum(family, x_star, root)

    rounds = 0
    scalars = 0

    def push(x, wall, tracking=None, v=None, rem=None, rem_bound=None):
        trace.rel_error.append(float(np.linalg.norm(x - target)) / denom)
        trace.kkt_primal.append(float(np.linalg.norm(root @ x)))
        if track_dual and v is not None:
            g = family.grad_stack(x)
            trace.kkt_dual.append(float(np.linalg.norm(g + root @ v)))
            trace.gnorm_error.append(
                analysis.g_norm_error(x, v, x_star, v_star, q_mat, spec.alpha)
                if feasible else None)
        else:
            trace.kkt_dual.append(None)
            trace.gnorm_error.append(None)
        trace.tracking_residual.append(tracking)
        trace.remainder_norm.append(rem)
        trace.remainder_bound.append(rem_bound)
        trace.comm_rounds.append(rounds)
        trace.scalars_sent.append(scalars)
        trace.wall_ms.append(wall)

    def stop() -> bool:
        return config.stop_tol is not None and trace.rel_error[-1] <= config.stop_tol

    if spec.name == "nt":
        state = alg.nt_init(family, w, spec.alpha, spec.eps)
        v = np.zeros((n, p))
        push(state.x, 0.0, tracking=alg.conservation_residual(state), v=v)
        for _ in range(config.iters):
            tic = time.perf_counter()
            new = alg.nt_step(state, family, w)
            wall = (time.perf_counter() - tic) * 1e3
            rounds += 1
            scalars += alg.comm_cost("nt", n, p)[1]
            v = v + spec.alpha * (root @ new.x)
            rem = rem_bound = None
            if config.remainder_metrics:
                d = new.x - state.x
                # hess cache is regularized; remove eps I to get the raw
                # curvature term of the remainder.
                e = state.grad - new.grad \
                    + np.einsum("npq,nq->np", state.hess, d) - spec.eps * d \
                    - spec.alpha * (d - w @ d)
                rem = float(np.linalg.norm(e))
                rem_bound = cert.kappa * float(np.linalg.norm(d))
            state = new
            push(state.x, wall, tracking=alg.conservation_residual(state),
                 v=v, rem=rem, rem_bound=rem_bound)
            if stop():
                break
    elif spec.name == "gt":
        state = alg.gt_init(family, spec.alpha)
        push(state.x, 0.0)
        for _ in range(config.iters):
            tic = time.perf_counter()
            state = alg.gt_step(state, family, w)
            wall = (time.perf_counter() - tic) * 1e3
            rounds += 1
            scalars += alg.comm_cost("gt", n, p)[1]
            push(state.x, wall)
            if stop():
                break
    elif spec.name in ("extra", "dlm"):
        push(np.zeros((n, p)), 0.0)
        tic = time.perf_counter()
        if spec.name == "extra":
            state = alg.extra_init(family, w, spec.alpha)
        else:
            state = alg.dlm_init(family, graph, spec.alpha, spec.eps)
        wall = (time.perf_counter() - tic) * 1e3
        rounds += 1
        scalars += alg.comm_cost(spec.name, n, p)[1]
        push(state.x, wall)
        for _ in range(config.iters - 1):
            if stop():
                break
            tic = time.perf_counter()
            if spec.name == "extra":
                state = alg.extra_step(state, family, w)
            else:
                state = alg.dlm_step(state, family)
            wall = (time.perf_counter() - tic) * 1e3
            rounds += 1
            scalars += alg.comm_cost(spec.name, n, p)[1]
            push(state.x, wall)
    else:
        raise ValueError(f"unknown algorithm {spec.name!r}")
    return trace


def topology_sweep(config: RunConfig, kinds=("line", "cycle", "complete")
                   ) -> dict:
    """Re-run one config across topology kinds; returns kind -> RunRecord."""
    out = {}
    for kind in kinds:
        topo = TopologySpec(kind=kind, n=config.topology.n,
                            tau=config.topology.tau if kind == "random" else None,
                            seed=config.topology.seed if kind == "random" else None)
        out[kind] = run_experiment(dataclasses.replace(
            config, name=f"{config.name}-{kind}", topology=topo))
    return out


# ---------------------------------------------------------------------------
# Exports.
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("iter", "comm_rounds", "scalars_sent", "rel_error",
               "gnorm_error", "tracking_residual", "kkt_primal", "kkt_dual",
               "wall_ms")


def _fmt(value) -> str:
    # repr of a float is its shortest round-trip decimal form.
    return "" if value is None else repr(float(value))


def export_csv(record: RunRecord, out_dir) -> list[Path]:
    """One CSV per algorithm with the fixed column set; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, trace in record.traces.items():
        lines = [",".join(CSV_COLUMNS)]
        for t in range(len(trace)):
            lines.append(",".join((
                str(t),
                str(trace.comm_rounds[t]),
                str(trace.scalars_sent[t]),
                _fmt(trace.rel_error[t]),
                _fmt(trace.gnorm_error[t]),
                _fmt(trace.tracking_residual[t]),
                _fmt(trace.kkt_primal[t]),
                _fmt(trace.kkt_dual[t]),
                _fmt(trace.wall_ms[t]),
            )))
        path = out_dir / f"{name}.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


PLOT_STUB = '''#!/usr/bin/env python3
"""Quick look at exported traces: python plot.py"""
import csv
import glob

import matplotlib.pyplot as plt

for path in sorted(glob.glob("*.csv")):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    iters = [int(r["iter"]) for r in rows if r["rel_error"]]
    err = [float(r["rel_error"]) for r in rows if r["rel_error"]]
    plt.semilogy(iters, err, label=path[:-4])
plt.xlabel("iteration")
plt.ylabel("relative error")
plt.legend()
plt.tight_layout()
plt.savefig("traces.png", dpi=150)
print("wrote traces.png")
'''


def write_outputs(record: RunRecord, out_dir) -> dict:
    """record.json + per-algorithm CSVs + a plot stub under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record_path = out_dir / "record.json"
    save_record(record, record_path)
    csv_paths = export_csv(record, out_dir)
    stub = out_dir / "plot.py"
    stub.write_text(PLOT_STUB)
    return {"record": str(record_path),
            "csv": [str(p) for p in csv_paths],
            "plot": str(stub)}


# ---------------------------------------------------------------------------
# Invariant suite over a recorded run.
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_doc(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def run_checks(record: RunRecord, window: int = 100) -> CheckReport:
    """Re-derive everything the record claims and test the core identities.

    Re-runs the config (determinism), then replays short trajectories to
    test conservation, formulation equivalence, the remainder bound, the
    per-step stationarity identity, and (when certified) contraction.
    """
    checks = {}
    config = record.config
    fresh = run_experiment(config)

    same_digest = fresh.dataset_digest == record.dataset_digest
    same_traces = all(
        name in fresh.traces
        and fresh.traces[name].rel_error == record.traces[name].rel_error
        for name in record.traces)
    checks["determinism"] = {
        "passed": bool(same_digest and same_traces),
        "detail": {"digest_match": same_digest, "trace_match": same_traces}}

    graph, mix = _build_network(config.topology)
    spectra = spectral_stats(mix)
    family, _ = _make_family(config.data, graph.n)
    bounds = convexity_bounds(family)
    x_star = alg.centralized_reference(family, tol=config.ref_tol)

    nt_specs = [s for s in config.algorithms if s.name == "nt"]
    if nt_specs:
        spec = nt_specs[0]
        steps = min(config.iters, window)
        state = alg.nt_init(family, mix.w, spec.alpha, spec.eps)
        pd = alg.pd_init(family, spectra.root, spec.alpha, spec.eps)
        sq = alg.sq_init(family, spec.alpha, spec.eps)
        xs, vs = [pd.x], [pd.v]
        cons_worst = alg.conservation_residual(state)
        equiv_worst = 0.0
        for _ in range(steps):
            state = alg.nt_step(state, family, mix.w)
            pd = alg.pd_step(pd, family, mix.w)
            sq = alg.sq_step(sq, family, mix.w)
            xs.append(pd.x)
            vs.append(pd.v)
            cons_worst = max(cons_worst, alg.conservation_residual(state))
            equiv_worst = max(equiv_worst,
                              float(np.max(np.abs(state.x - pd.x))),
                              float(np.max(np.abs(state.x - sq.x))))
        checks["conservation"] = {"passed": cons_worst < 1e-9,
                                  "detail": {"worst": cons_worst}}
        checks["equivalence"] = {"passed": equiv_worst < 1e-8,
                                 "detail": {"worst": equiv_worst,
                                            "steps": steps}}
        rem = analysis.lemma_remainder_check(xs, family, mix.w, spec.alpha,
                                             bounds)
        checks["remainder_bound"] = {"passed": rem.passed,
                                     "detail": {"violations": rem.violations,
                                                "worst": rem.worst}}
        cert = analysis.rate_certificate(bounds, spectra, spec.alpha, spec.eps,
                                         config.beta, config.phi)
        v_star = analysis.dual_optimum(family, x_star, spectra.root)
        ident = analysis.stationarity_identity_check(
            xs, vs, family, mix.w, spectra.root, spec.alpha, spec.eps,
            x_star, v_star)
        checks["stationarity_identity"] = {
            "passed": ident.passed,
            "detail": {"worst": ident.worst}}
        if cert.feasible:
            contr = analysis.contraction_check(xs, vs, x_star, v_star,
                                               mix.w, cert)
            checks["contraction"] = {
                "passed": contr.passed,
                "detail": {"violations": contr.violations,
                           "worst_ratio": contr.worst,
                           "bound": cert.contraction}}

    if any(s.name == "gt" for s in config.algorithms):
        spec = next(s for s in config.algorithms if s.name == "gt")
        state = alg.gt_init(family, spec.alpha)
        worst = 0.0
        for _ in range(min(config.iters, window)):
            state = alg.gt_step(state, family, mix.w)
            g = family.grad_stack(state.x)
            diff = np.linalg.norm(state.y.mean(axis=0) - g.mean(axis=0))
            worst = max(worst, float(diff / (np.linalg.norm(g.mean(axis=0)) + 1.0)))
        checks["tracker_mean"] = {"passed": worst < 1e-9,
                                  "detail": {"worst": worst}}
    return CheckReport(checks=checks)
