"""Monte-Carlo success-rate experiments.

Instances are generated per trial: a random rank-r PSD matrix from a
Gaussian factor, plus a nonnegative diagonal noise matrix with
prescribed Frobenius norm, rejected and redrawn until the sum is
positive definite.  A method succeeds on a trial when its recovered
rank is at most the planted rank.  Per-trial random streams derive
from numpy's SeedSequence with the (level, trial) index as spawn key,
so tables are reproducible for a fixed config regardless of execution
order.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, frisch_kalman as fk, linalg, matio
from .conic import SolverConfig, SolverFailure

log = logging.getLogger(__name__)

PROPOSED = "proposed"
NUCLEAR = "nuclear"
RSTAR = "rstar"
LOGDET = "logdet"
ALL_METHODS = (PROPOSED, NUCLEAR, RSTAR, LOGDET)

CSV_HEADER = "method,noise_frob,trials,successes,success_rate,mean_rank,mean_seconds"

# Desk-scale solver settings: enough accuracy for the feasibility reads,
# capped so that degenerate wrong-rank solves cannot stall a trial.
BENCH_SDP = SolverConfig(tol=1e-7, max_iters=20_000)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    r: int
    noise_levels: tuple[float, ...]
    trials: int
    methods: tuple[str, ...]
    seed: int
    omega_fixed: np.ndarray | None = None  # None draws a fresh low-rank matrix per trial
    record_timing: bool = True
    sdp: SolverConfig = field(default_factory=lambda: BENCH_SDP)
    max_redraws: int = 1000

    def __post_init__(self):
        if not (1 <= self.r < self.n):
            raise ValueError(f"need 1 <= r < n, got r={self.r}, n={self.n}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        levels = tuple(float(x) for x in self.noise_levels)
        if any(x <= 0 for x in levels):
            raise ValueError("noise levels must be positive")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("noise levels must be strictly increasing")
        object.__setattr__(self, "noise_levels", levels)
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.omega_fixed is not None:
            om = linalg.symmetrize(self.omega_fixed)
            if linalg.numerical_rank(om) != self.r:
                raise ValueError(
                    f"fixed matrix has rank {linalg.numerical_rank(om)}, expected {self.r}"
                )
            object.__setattr__(self, "omega_fixed", om)


@dataclass(frozen=True)
class TableRow:
    method: str
    noise_frob: float
    trials: int
    successes: int
    mean_rank: float
    mean_seconds: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class SuccessTable:
    rows: tuple[TableRow, ...]

    def row(self, method: str, noise_frob: float) -> TableRow:
        for row in self.rows:
            if row.method == method and row.noise_frob == noise_frob:
                return row
        raise KeyError((method, noise_frob))

    def rates(self, method: str) -> list[float]:
        return [row.success_rate for row in self.rows if row.method == method]


def gen_low_rank(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Random rank-r PSD matrix X^T X from an r x n standard normal factor."""
    if not (1 <= r < n):
        raise ValueError(f"need 1 <= r < n, got r={r}, n={n}")
    x = rng.standard_normal((r, n))
    return x.T @ x


def gen_noise(n: int, norm_f: float, rng: np.random.Generator) -> np.ndarray:
    """Nonnegative diagonal entries with exact Frobenius norm norm_f."""
    if norm_f <= 0:
        raise ValueError("norm_f must be positive")
    while True:
        d = rng.uniform(0.0, 1.0, n)
        nd = float(np.linalg.norm(d))
        if nd > 0.0:
            return norm_f * d / nd


def _trial_rng(seed: int, level_index: int, trial_index: int) -> np.random.Generator:
    # fixed, published derivation of per-trial streams
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(level_index, trial_index))
    )


def _recovered_rank(method: str, sigma: np.ndarray, cfg: ExperimentConfig) -> int:
    n = sigma.shape[0]
    if method == PROPOSED:
        res = fk.solve(fk.FkInstance(sigma), r_init=1, config=fk.FkConfig(sdp=cfg.sdp))
        return res.r_star
    if method == NUCLEAR:
        return baselines.nuclear_norm_solve(sigma, cfg.sdp).implied_rank
    if method == RSTAR:
        # sequential target ranks; accept the first self-consistent read
        last = n
        for r in range(1, cfg.r + 1):
            res = baselines.rstar_solve(sigma, r, cfg.sdp)
            last = res.implied_rank
            if res.implied_rank <= r:
                return res.implied_rank
        return last
    if method == LOGDET:
        return baselines.logdet_solve(sigma, config=cfg.sdp).implied_rank
    raise ValueError(f"unknown method {method!r}")


def run_experiment(cfg: ExperimentConfig) -> SuccessTable:
    """Run all (method, level, trial) cells and tally success rates."""
    stats = {
        (m, lvl): {"trials": 0, "successes": 0, "rank_sum": 0.0, "time_sum": 0.0}
        for m in cfg.methods
        for lvl in cfg.noise_levels
    }
    for li, level in enumerate(cfg.noise_levels):
        for ti in range(cfg.trials):
            rng = _trial_rng(cfg.seed, li, ti)
            sigma = None
            for _ in range(cfg.max_redraws):
                omega = (
                    cfg.omega_fixed
                    if cfg.omega_fixed is not None
                    else gen_low_rank(cfg.n, cfg.r, rng)
                )
                noise = gen_noise(cfg.n, level, rng)
                cand = omega + np.diag(noise)
                if linalg.is_pd(cand):
                    sigma = cand
                    break
            if sigma is None:
                log.warning(
                    "skipping trial (level=%g, trial=%d): no PD draw in %d attempts",
                    level, ti, cfg.max_redraws,
                )
                continue
            for method in cfg.methods:
                t0 = time.perf_counter()
                try:
                    rank = _recovered_rank(method, sigma, cfg)
                except SolverFailure as exc:
                    log.warning(
                        "method %s failed at level=%g trial=%d: %s",
                        method, level, ti, exc,
                    )
                    rank = cfg.n
                elapsed = time.perf_counter() - t0
                cell = stats[(method, level)]
                cell["trials"] += 1
                cell["successes"] += int(rank <= cfg.r)
                cell["rank_sum"] += rank
                cell["time_sum"] += elapsed if cfg.record_timing else 0.0

    rows = []
    for method in cfg.methods:
        for level in cfg.noise_levels:
            cell = stats[(method, level)]
            t = cell["trials"]
            rows.append(
                TableRow(
                    method=method,
                    noise_frob=level,
                    trials=t,
                    successes=cell["successes"],
                    mean_rank=cell["rank_sum"] / t if t else 0.0,
                    mean_seconds=cell["time_sum"] / t if t else 0.0,
                )
            )
    return SuccessTable(rows=tuple(rows))


def table_to_csv(table: SuccessTable) -> str:
    lines = [CSV_HEADER]
    for row in table.rows:
        lines.append(
            f"{row.method},{row.noise_frob:.6g},{row.trials},{row.successes},"
            f"{row.success_rate:.6f},{row.mean_rank:.6f},{row.mean_seconds:.6f}"
        )
    return "\n".join(lines) + "\n"


def export(table: SuccessTable, path: str) -> None:
    """Write the success table as CSV."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(table_to_csv(table))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def export_gnuplot(table: SuccessTable, path: str) -> None:
    """Per-method data blocks (noise vs rate), gnuplot index-style."""
    methods: list[str] = []
    for row in table.rows:
        if row.method not in methods:
            methods.append(row.method)
    blocks = []
    for method in methods:
        lines = [f"# method={method}", "# noise_frob success_rate"]
        for row in table.rows:
            if row.method == method:
                lines.append(f"{row.noise_frob:.6g} {row.success_rate:.6f}")
        blocks.append("\n".join(lines))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n\n\n".join(blocks) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# config file parsing (plain key = value lines)

_REQUIRED_KEYS = ("n", "r", "levels", "trials", "methods", "seed")


def parse_config_text(text: str, base_dir: str = ".") -> ExperimentConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()

    for key in _REQUIRED_KEYS:
        if key not in values:
            raise ValueError(f"missing config key: {key}")

    def _int(key: str) -> int:
        try:
            return int(values[key])
        except ValueError as exc:
            raise ValueError(f"config key {key}: not an integer ({values[key]!r})") from exc

    try:
        levels = tuple(float(tok) for tok in values["levels"].replace(",", " ").split())
    except ValueError as exc:
        raise ValueError(f"config key levels: {exc}") from exc
    methods = tuple(
        tok for tok in values["methods"].replace(",", " ").split() if tok
    )

    omega_fixed = None
    omega_spec = values.get("omega", "random")
    if omega_spec != "random":
        if not omega_spec.startswith("fixed:"):
            raise ValueError(
                f"config key omega: expected 'random' or 'fixed:<path>', got {omega_spec!r}"
            )
        path = omega_spec[len("fixed:"):]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        omega_fixed = matio.load_matrix(path)

    record_timing = values.get("record_timing", "true").lower()
    if record_timing not in ("true", "false"):
        raise ValueError("config key record_timing: expected true or false")

    sdp = BENCH_SDP
    if "sdp_tol" in values:
        try:
            sdp = replace(sdp, tol=float(values["sdp_tol"]))
        except ValueError as exc:
            raise ValueError(f"config key sdp_tol: {exc}") from exc
    if "sdp_max_iters" in values:
        sdp = replace(sdp, max_iters=_int("sdp_max_iters"))

    known = {
        "n", "r", "levels", "trials", "methods", "seed", "omega",
        "record_timing", "sdp_tol", "sdp_max_iters",
    }
    for key in values:
        if key not in known:
            raise ValueError(f"unknown config key: {key}")

    return ExperimentConfig(
        n=_int("n"),
        r=_int("r"),
        noise_levels=levels,
        trials=_int("trials"),
        methods=methods,
        seed=_int("seed"),
        omega_fixed=omega_fixed,
        record_timing=record_timing == "true",
        sdp=sdp,
    )


def parse_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base_dir=os.path.dirname(path) or ".")
