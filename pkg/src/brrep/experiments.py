"""Declarative experiment runner: parameter sweeps, persistence, resume.

Each experiment expands into a list of grid points; every point is one
evolution (reused across all measurement times) that emits CSV rows with
the fixed schema  experiment,N,t,lambda,seed,observable,log2_value,
discarded_weight.  Rows are written incrementally so an interrupted run
can resume by skipping completed points.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .fitting import Curve, collapse_fit, find_crossing, threshold_crossing_time
from .mps import NEG_INF, TruncationPolicy
from .observables import (
    EncodingLayout,
    collision_trace,
    equal_tripartition,
    haar_for_layout,
    left_encoding_layout,
    mutual_purity_trace,
    qec_bound_log2,
    renyi2_cmi_trace,
    right_encoding_layout,
    xeb_and_fidelity_trace,
)
from .replica_algebra import NoiseSpec
from .exact_oracle import TrajectoryConfig, sample_brownian_trajectories

CSV_COLUMNS = ("experiment", "N", "t", "lambda", "seed", "observable",
               "log2_value", "discarded_weight")

EXPERIMENTS = ("anticoncentration", "cmi", "xeb_fixed_noise", "xeb_scaled_noise",
               "noisy_cmi", "mutual_purity_depth", "mutual_purity_threshold",
               "lightcone_purity", "oracle_check")

LN2 = np.log(2.0)


@dataclass
class ExperimentConfig:
    experiment: str
    n_list: list[int] = field(default_factory=list)
    t_max: int | None = None
    t_over_n: float | None = None  # t_max = ceil(t_over_n * N)
    # production convention: two symmetric brickwork sub-pairs per unit step
    # with J*delta_t calibrated so the effective domain-wall tension matches
    # the reported transition constants (see README, decisions ledger)
    coupling: float = 0.138
    delta_t: float = 1.0
    substeps: int = 2
    lam: float | None = None
    lambda_n_list: list[float] = field(default_factory=list)  # scaled noise: lam = u/N
    mu: float | None = None  # noisy CMI: lam = mu/N
    p: float | None = None
    p_list: list[float] = field(default_factory=list)
    placement: str = "left_contiguous"
    seeds: list[int] = field(default_factory=lambda: [0])
    chi_max: int = 64
    discard_tolerance: float = 1e-12
    de_convention: str = "noisy_only"
    output: str = "run"
    # oracle_check knobs
    oracle_n: int = 3
    oracle_t: float = 2.0
    oracle_delta_t: float = 0.01
    oracle_trajectories: int = 10000
    oracle_engine_delta_t: float = 0.05

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {EXPERIMENTS}")
        self._validate()

    def _validate(self):
        need_sizes = self.experiment != "oracle_check"
        if need_sizes:
            if not self.n_list:
                raise ValueError(f"{self.experiment} requires n_list")
            if any(n <= 1 for n in self.n_list):
                raise ValueError("all n_list entries must exceed 1")
            if self.t_max is None and self.t_over_n is None:
                raise ValueError(f"{self.experiment} requires t_max or t_over_n")
        if self.experiment in ("cmi", "noisy_cmi"):
            bad = [n for n in self.n_list if n % 3 != 0]
            if bad:
                raise ValueError(f"cmi needs N divisible by 3, got {bad}")
        if self.experiment == "xeb_fixed_noise" and self.lam is None:
            raise ValueError("xeb_fixed_noise requires lam")
        if self.experiment == "xeb_scaled_noise" and not self.lambda_n_list:
            raise ValueError("xeb_scaled_noise requires lambda_n_list")
        if self.experiment == "noisy_cmi" and self.mu is None:
            raise ValueError("noisy_cmi requires mu")
        if self.experiment in ("mutual_purity_depth", "lightcone_purity") \
                and (self.p is None or self.lam is None):
            raise ValueError(f"{self.experiment} requires p and lam")
        if self.experiment == "mutual_purity_threshold" \
                and (not self.p_list or self.lam is None):
            raise ValueError("mutual_purity_threshold requires p_list and lam")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.chi_max, self.discard_tolerance)

    def t_for(self, n: int) -> int:
        if self.t_max is not None:
            return self.t_max
        return int(np.ceil(self.t_over_n * n))

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(**raw)


@dataclass
class RunRecord:
    config_hash: str
    experiment: str
    n_rows: int
    wall_time: float
    engine_version: str
    warnings: list[str] = field(default_factory=list)
    csv_path: str = ""
    summary_path: str = ""


def _fmt(x: float) -> str:
    if x == NEG_INF:
        return "-inf"
    return format(float(x), ".12g")


def _row(experiment, n, t, lam, seed, observable, log2_value, discarded) -> dict:
    return {"experiment": experiment, "N": n, "t": t, "lambda": _fmt(lam),
            "seed": seed, "observable": observable,
            "log2_value": _fmt(log2_value), "discarded_weight": _fmt(discarded)}


def _worst_discard(audits) -> float:
    return max((a.max_discarded_weight for a in audits), default=0.0)


# ---------------------------------------------------------------------------
# grid points

def _grid(config: ExperimentConfig) -> list[dict]:
    e = config.experiment
    if e in ("anticoncentration", "cmi", "xeb_fixed_noise", "mutual_purity_depth",
             "lightcone_purity", "noisy_cmi"):
        return [{"n": n} for n in config.n_list]
    if e == "xeb_scaled_noise":
        return [{"n": n, "u": u} for n in config.n_list for u in config.lambda_n_list]
    if e == "mutual_purity_threshold":
        return [{"n": n, "p": p} for n in config.n_list for p in config.p_list]
    if e == "oracle_check":
        return [{"n": config.oracle_n}]
    raise ValueError(e)


def _point_key(config: ExperimentConfig, point: dict) -> tuple:
    return tuple(sorted(point.items()))


def _run_point(config: ExperimentConfig, point: dict) -> list[dict]:
    e = config.experiment
    pol = config.policy()
    n = point["n"]
    rows = []
    if e == "anticoncentration":
        trace = collision_trace(n, config.t_for(n), config.coupling, pol,
                                substeps=config.substeps)
        audits = trace[0].audits
        for t, res in enumerate(trace):
            disc = audits[t - 1].max_discarded_weight if t > 0 else 0.0
            rows.append(_row(e, n, t, 0.0, 0, "collision_log2_z", res.log2_z, disc))
    elif e in ("cmi", "noisy_cmi"):
        part = equal_tripartition(n)
        noise = None
        lam = 0.0
        if e == "noisy_cmi":
            lam = config.mu / n
            noise = NoiseSpec(lam=lam, replica_mask="both_replicas")
        cmi, logs, audits = renyi2_cmi_trace(part, config.t_for(n), noise=noise, policy=pol,
                                             substeps=config.substeps,
                                             coupling=config.coupling)
        for t in range(len(cmi)):
            disc = audits[t - 1].max_discarded_weight if t > 0 else 0.0
            rows.append(_row(e, n, t, lam, 0, "cmi_bits", cmi[t] / LN2, disc))
            for k in ("ab", "bc", "b", "abc"):
                rows.append(_row(e, n, t, lam, 0, f"log2_sum_p2_{k}", logs[k][t] / LN2, disc))
    elif e == "xeb_fixed_noise":
        lam = config.lam
        pts, audits = xeb_and_fidelity_trace(n, config.t_for(n), NoiseSpec(lam=lam), pol,
                                             coupling=config.coupling,
                                             substeps=config.substeps)
        for t, pt in enumerate(pts):
            disc = audits[t - 1].max_discarded_weight if t > 0 else 0.0
            rows.append(_row(e, n, t, lam, 0, "log2_chi", pt.log2_chi, disc))
            rows.append(_row(e, n, t, lam, 0, "log2_fidelity", pt.log2_fidelity, disc))
    elif e == "xeb_scaled_noise":
        u = point["u"]
        lam = u / n
        t_n = config.t_for(n)
        pts, audits = xeb_and_fidelity_trace(n, t_n, NoiseSpec(lam=lam), pol,
                                             coupling=config.coupling,
                                             substeps=config.substeps)
        for t, pt in enumerate(pts):
            disc = audits[t - 1].max_discarded_weight if t > 0 else 0.0
            rows.append(_row(e, n, t, lam, 0, "log2_chi", pt.log2_chi, disc))
            rows.append(_row(e, n, t, lam, 0, "log2_fidelity", pt.log2_fidelity, disc))
        ratio = pts[t_n].ratio
        rows.append(_row(e, n, t_n, lam, 0, "log2_f_over_chi",
                         np.log2(ratio) if ratio > 0 else NEG_INF,
                         _worst_discard(audits)))
    elif e == "mutual_purity_depth":
        for seed in config.seeds:
            layout = left_encoding_layout(n, config.p, config.placement,
                                          seed=seed, de_convention=config.de_convention)
            amps, audits = mutual_purity_trace(layout, config.t_for(n), config.lam, pol,
                                               coupling=config.coupling,
                                               substeps=config.substeps)
            haar = haar_for_layout(layout, config.lam)
            for t, amp in enumerate(amps):
                disc = audits[t - 1].max_discarded_weight if audits and t > 0 else 0.0
                rows.append(_row(e, n, t, config.lam, seed, "log2_f_re",
                                 amp.log2_abs, disc))
            rows.append(_row(e, n, -1, config.lam, seed, "log2_f_haar",
                             haar.log2_value, 0.0))
            if config.placement != "random":
                break
    elif e == "lightcone_purity":
        layout = right_encoding_layout(n, config.p, de_convention=config.de_convention)
        amps, audits = mutual_purity_trace(layout, config.t_for(n), config.lam, pol,
                                           coupling=config.coupling,
                                           substeps=config.substeps)
        haar = haar_for_layout(layout, config.lam)
        for t, amp in enumerate(amps):
            disc = audits[t - 1].max_discarded_weight if audits and t > 0 else 0.0
            rows.append(_row(e, n, t, config.lam, 0, "log2_f_re", amp.log2_abs, disc))
        rows.append(_row(e, n, -1, config.lam, 0, "log2_f_haar", haar.log2_value, 0.0))
    elif e == "mutual_purity_threshold":
        p = point["p"]
        t_n = config.t_for(n)
        layout = left_encoding_layout(n, p, "left_contiguous",
                                      de_convention=config.de_convention)
        amps, audits = mutual_purity_trace(layout, t_n, config.lam, pol,
                                           coupling=config.coupling,
                                           substeps=config.substeps)
        disc = _worst_discard(audits)
        l2f = amps[t_n].log2_abs
        rows.append(_row(e, n, t_n, config.lam, 0, f"log2_f_re_p{_fmt(p)}", l2f, disc))
        bound = qec_bound_log2(l2f, layout.log2_d_r, layout.log2_d_e)
        rows.append(_row(e, n, t_n, config.lam, 0, f"log2_bound_p{_fmt(p)}", bound, disc))
    elif e == "oracle_check":
        rows.extend(_oracle_check_rows(config))
    return rows


def _oracle_check_rows(config: ExperimentConfig) -> list[dict]:
    from .observables import evolve_trace, _uniform

    n = config.oracle_n
    t_phys = config.oracle_t
    seed = config.seeds[0]
    rows = []
    # replica-engine Z at fine Trotter step (J=1 physical units)
    dt = config.oracle_engine_delta_t
    steps = int(round(t_phys / dt))
    res, _ = evolve_trace(_uniform("zero4", n), steps, {"coll": _uniform("coll", n)},
                          policy=config.policy(), coupling=config.coupling, delta_t=dt)
    z_log2 = res["coll"][steps].log2_abs
    rows.append(_row("oracle_check", n, steps, 0.0, seed, "replica_log2_z", z_log2, 0.0))
    cfg = TrajectoryConfig(n, config.oracle_delta_t, int(round(t_phys / config.oracle_delta_t)),
                           config.oracle_trajectories, rng_seed=seed,
                           coupling=config.coupling)
    mean, err = sample_brownian_trajectories(cfg, "collision")
    rows.append(_row("oracle_check", n, cfg.n_steps, 0.0, seed, "mc_collision_mean",
                     np.log2(mean), 0.0))
    rows.append(_row("oracle_check", n, cfg.n_steps, 0.0, seed, "mc_collision_stderr",
                     np.log2(err), 0.0))
    lam = config.lam if config.lam is not None else 0.05
    noise = NoiseSpec(lam=lam)
    res, _ = evolve_trace(_uniform("zero4", n), steps,
                          {"coll": _uniform("coll", n)}, noise=noise,
                          policy=config.policy(), coupling=config.coupling, delta_t=dt)
    rows.append(_row("oracle_check", n, steps, lam, seed, "replica_log2_sum_pq",
                     res["coll"][steps].log2_abs, 0.0))
    mean, err = sample_brownian_trajectories(cfg, "xeb", lam=lam)
    rows.append(_row("oracle_check", n, cfg.n_steps, lam, seed, "mc_sum_pq_mean",
                     np.log2(mean), 0.0))
    rows.append(_row("oracle_check", n, cfg.n_steps, lam, seed, "mc_sum_pq_stderr",
                     np.log2(err), 0.0))
    return rows


def _point_worker(args):
    config_json, point = args
    try:
        config = ExperimentConfig(**json.loads(config_json))
        return _run_point(config, point), None
    except Exception as err:  # partial-failure policy: record and continue
        return [], f"point {point} failed: {err!r}"


def _jobs(requested: int | None) -> int:
    env = os.environ.get("BRREP_THREADS")
    if env:
        return max(1, int(env))
    if requested:
        return max(1, requested)
    return 1


def _load_progress(config: ExperimentConfig, csv_path: str, progress_path: str):
    """Rows and per-point counts of the completed prefix of an earlier run."""
    if not (os.path.exists(progress_path) and os.path.exists(csv_path)):
        return [], []
    try:
        with open(progress_path) as fh:
            prog = json.load(fh)
    except json.JSONDecodeError:
        return [], []
    if prog.get("config_hash") != config.config_hash():
        return [], []
    counts = prog.get("row_counts", [])
    expected = sum(counts)
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < expected:
        # partially written final point: drop back to the last complete one
        while counts and sum(counts) > len(rows):
            counts.pop()
        expected = sum(counts)
    return rows[:expected], counts


def run_experiment(config: ExperimentConfig, jobs: int | None = None,
                   resume: bool = True) -> RunRecord:
    """Execute the grid, one evolution per point, writing rows incrementally.

    Interrupted runs resume at grid-point granularity (prefix replay via the
    progress sidecar); individual point failures become warnings and the run
    continues.  Identical configs, seeds included, give byte-identical CSVs.
    """
    t0 = time.time()
    csv_path = config.output + ".csv"
    summary_path = config.output + ".json"
    progress_path = config.output + ".progress.json"
    points = _grid(config)
    cfg_json = config.canonical_json()
    kept_rows, counts = _load_progress(config, csv_path, progress_path) if resume else ([], [])
    start = len(counts)
    warnings: list[str] = []

    fh = open(csv_path, "w", newline="")
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in kept_rows:
        writer.writerow(row)
    fh.flush()

    def checkpoint():
        with open(progress_path, "w") as pf:
            json.dump({"config_hash": config.config_hash(), "row_counts": counts}, pf)

    todo = points[start:]
    n_workers = _jobs(jobs)
    try:
        if n_workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as ex:
                for rows, warning in ex.map(_point_worker,
                                            [(cfg_json, p) for p in todo]):
                    if warning:
                        warnings.append(warning)
                    for row in rows:
                        writer.writerow(row)
                    fh.flush()
                    counts.append(len(rows))
                    checkpoint()
        else:
            for point in todo:
                rows, warning = _point_worker((cfg_json, point))
                if warning:
                    warnings.append(warning)
                for row in rows:
                    writer.writerow(row)
                fh.flush()
                counts.append(len(rows))
                checkpoint()
    finally:
        fh.close()

    record = RunRecord(config.config_hash(), config.experiment, sum(counts),
                       time.time() - t0, __version__, warnings, csv_path, summary_path)
    summary = {
        "config_hash": record.config_hash,
        "experiment": config.experiment,
        "config": json.loads(cfg_json),
        "n_rows": record.n_rows,
        "wall_time_s": record.wall_time,
        "engine_version": record.engine_version,
        "warnings": warnings,
        "row_counts": counts,
        "conventions": {
            "log_base_collapse": "log2 values in CSV; shift_log collapse uses ln N",
            "anticoncentration_threshold": "2^N Z <= 3",
            "default_measurement_time": "t = N for threshold experiments",
        },
    }
    with open(summary_path, "w") as fh2:
        json.dump(summary, fh2, indent=1, sort_keys=True)
    return record


# ---------------------------------------------------------------------------
# CSV -> curves helpers (used by CLI and the secondary plot package)

def load_rows(csv_path: str) -> list[dict]:
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = [c for c in CSV_COLUMNS if rows and c not in rows[0]]
    if missing:
        raise ValueError(f"CSV missing columns: {missing}")
    return rows


def curves_from_rows(rows: list[dict], observable: str, x_column: str = "t",
                     x_transform=None, y_transform=None) -> list[Curve]:
    by_n: dict[float, list[tuple[float, float]]] = {}
    for row in rows:
        if row["observable"] != observable:
            continue
        n = float(row["N"])
        x = float(row[x_column])
        y = float(row["log2_value"])
        by_n.setdefault(n, []).append((x, y))
    out = []
    for n in sorted(by_n):
        pts = sorted(by_n[n])
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        if x_transform is not None:
            x = x_transform(n, x, y)
        if y_transform is not None:
            y = y_transform(n, x, y)
        out.append(Curve(n, x, y))
    return out
