"""Experiment population and training-corpus construction.

Builds (or ingests) wholesale price days and baseline demand profiles,
expands seed profiles into a consumer population with incomes and
flexibility parameters, groups consumers by baseline energy burden, and
runs the agent model over price days to produce per-group
(price, demand-change) training pairs.

Dataset arrays are stored in normalized units (per-group z-scores computed
on the training split); the normalization statistics travel with the
dataset and with every trained model so raw-unit predictions are always
recoverable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import agent
from .domain import (
    Consumer,
    DemandProfile,
    DomainError,
    FlexParams,
    Group,
    PriceProfile,
    energy_burden,
)

__all__ = [
    "FlexSampling",
    "Population",
    "NormStats",
    "GroupSamples",
    "Dataset",
    "gen_population",
    "group_by_burden",
    "build_dataset",
    "gen_price_days",
    "ingest_csv",
    "default_seed_profiles",
    "default_base_price",
    "save_population",
    "load_population",
    "save_dataset",
    "load_dataset",
]

_DATA_DIR = Path(__file__).parent / "data"


class ParseError(ValueError):
    """Malformed CSV input; message carries line and column."""


@dataclass(frozen=True)
class FlexSampling:
    """Sampling law for per-consumer flexibility.

    c1/c2 are drawn lognormally around the given means ($/kWh^2); shift and
    reduce bounds are +/- gamma_shift * baseline and [-gamma_reduce *
    baseline, 0]. income_flex_corr in [0, 1] tilts flexibility with income:
    a consumer at income percentile u gets multiplier
    1 + corr * (u - 1/2) on bound widths and its inverse on c1/c2, so
    higher-income consumers respond more.
    """

    c1_mean: float = 0.4
    c2_mean: float = 0.4
    sigma: float = 0.25
    gamma_shift: float = 0.2
    gamma_reduce: float = 0.1
    income_flex_corr: float = 0.5
    baseline_jitter: float = 0.15


@dataclass(frozen=True)
class Population:
    """All consumers plus their burden groups (a partition)."""

    consumers: tuple
    groups: tuple

    def __post_init__(self):
        seen = [cid for g in self.groups for cid in g.members]
        if sorted(seen) != sorted(c.id for c in self.consumers):
            raise DomainError("groups must partition the consumer set")

    @property
    def horizon(self) -> int:
        return self.consumers[0].baseline.horizon

    def by_id(self, cid: int) -> Consumer:
        return self._index()[cid]

    def members_of(self, group: Group):
        idx = self._index()
        return [idx[cid] for cid in group.members]

    def _index(self):
        cache = getattr(self, "_idx", None)
        if cache is None:
            cache = {c.id: c for c in self.consumers}
            object.__setattr__(self, "_idx", cache)
        return cache


def _consumer_rng(seed: int, index: int) -> np.random.Generator:
    # One child stream per consumer: order-independent and reproducible.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def gen_population(
    n_consumers: int,
    seed: int,
    income_range: tuple,
    seed_profiles: Sequence[DemandProfile],
    n_groups: int = 10,
    wholesale: Optional[PriceProfile] = None,
    flex: FlexSampling = FlexSampling(),
) -> Population:
    """Expand seed demand profiles into a grouped synthetic population.

    Incomes are uniform on income_range ($/year). Each consumer's baseline
    is a randomly chosen seed profile with multiplicative lognormal jitter.
    Grouping ranks baseline energy burden at `wholesale` (a flat 1 $/kWh
    reference when omitted, which ranks by kWh-per-income).
    """
    if not seed_profiles:
        raise DomainError("seed_profiles must be non-empty")
    if n_consumers < n_groups:
        raise DomainError(
            f"need at least one consumer per group ({n_consumers} < {n_groups})"
        )
    low, high = float(income_range[0]), float(income_range[1])
    if not 0.0 < low <= high:
        raise DomainError(f"invalid income range [{low}, {high}]")
    T = seed_profiles[0].horizon
    bases = np.stack([p.values for p in seed_profiles])

    consumers = []
    for i in range(n_consumers):
        rng = _consumer_rng(seed, i)
        income = rng.uniform(low, high)
        base = bases[rng.integers(len(bases))]
        jit = flex.baseline_jitter
        jitter = np.exp(rng.standard_normal(T) * jit - 0.5 * jit**2) if jit > 0 else 1.0
        baseline = base * jitter

        u = 0.5 if high == low else (income - low) / (high - low)
        f_mult = 1.0 + flex.income_flex_corr * (u - 0.5)
        c1 = flex.c1_mean * np.exp(rng.standard_normal() * flex.sigma) / f_mult
        c2 = flex.c2_mean * np.exp(rng.standard_normal() * flex.sigma) / f_mult
        half_shift = flex.gamma_shift * f_mult * baseline
        reduce_lo = -flex.gamma_reduce * f_mult * baseline
        consumers.append(
            Consumer(
                id=i,
                annual_income=float(income),
                baseline=DemandProfile(baseline),
                flex=FlexParams(
                    c1=float(c1),
                    c2=float(c2),
                    shift_lo=-half_shift,
                    shift_hi=half_shift,
                    reduce_lo=reduce_lo,
                    reduce_hi=np.zeros(T),
                ),
            )
        )

    ref = wholesale if wholesale is not None else PriceProfile(np.ones(T))
    return group_by_burden(consumers, ref, n_groups)


def group_by_burden(
    consumers: Sequence[Consumer], wholesale: PriceProfile, n_groups: int
) -> Population:
    """Rank consumers by baseline burden at `wholesale` and chunk them into
    n_groups contiguous groups of equal size (+/- 1), lowest burden first.

    Ties are broken by ascending consumer id.
    """
    if n_groups < 1:
        raise DomainError("n_groups must be >= 1")
    if n_groups > len(consumers):
        raise DomainError(
            f"n_groups {n_groups} exceeds consumer count {len(consumers)}"
        )
    burdens = {
        c.id: energy_burden(c.baseline, wholesale, c.daily_income) for c in consumers
    }
    ordered = sorted(consumers, key=lambda c: (burdens[c.id], c.id))
    chunks = np.array_split(np.arange(len(ordered)), n_groups)
    groups = []
    for gi, chunk in enumerate(chunks):
        members = [ordered[j] for j in chunk]
        avg_base = np.mean(np.stack([m.baseline.values for m in members]), axis=0)
        groups.append(
            Group(
                id=gi + 1,
                members=tuple(m.id for m in members),
                avg_baseline=DemandProfile(avg_base),
                avg_daily_income=float(np.mean([m.daily_income for m in members])),
                model_id=gi + 1,
            )
        )
    return Population(consumers=tuple(consumers), groups=tuple(groups))


@dataclass(frozen=True)
class NormStats:
    """Scalar z-score statistics for one group's prices and demand changes."""

    p_mean: float
    p_std: float
    y_mean: float
    y_std: float

    def normalize_price(self, p: np.ndarray) -> np.ndarray:
        return (p - self.p_mean) / self.p_std

    def denormalize_dd(self, y: np.ndarray) -> np.ndarray:
        return y * self.y_std + self.y_mean


@dataclass(frozen=True)
class GroupSamples:
    """One group's training corpus in normalized units.

    prices_n and dd_n are (n_days, T); the first n_train rows are the
    training split (day-level split, no shuffling within a day).
    """

    group_id: int
    prices_n: np.ndarray
    dd_n: np.ndarray
    stats: NormStats
    n_train: int

    @property
    def n_days(self) -> int:
        return self.prices_n.shape[0]

    @property
    def horizon(self) -> int:
        return self.prices_n.shape[1]

    def train_arrays(self):
        return self.prices_n[: self.n_train], self.dd_n[: self.n_train]

    def val_arrays(self):
        return self.prices_n[self.n_train :], self.dd_n[self.n_train :]


@dataclass(frozen=True)
class Dataset:
    """Per-group corpora plus provenance (seeds, split)."""

    groups: tuple
    train_fraction: float
    seeds: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.groups[0].horizon

    def group(self, group_id: int) -> GroupSamples:
        for g in self.groups:
            if g.group_id == group_id:
                return g
        raise KeyError(f"no samples for group {group_id}")


def _zstats(arr: np.ndarray):
    mean = float(arr.mean())
    std = float(arr.std())
    if std < 1e-12:
        std = 1.0
    return mean, std


def build_dataset(
    population: Population,
    price_days: Sequence[PriceProfile],
    train_fraction: float = 0.8,
    seeds: Optional[dict] = None,
) -> Dataset:
    """Run the agent model over all (group, day) pairs.

    Each sample is the group's member-average demand change for one price
    day. Agent solves are deterministic, so the corpus depends only on the
    population and the price days.
    """
    if not price_days:
        raise DomainError("price_days must be non-empty")
    T = population.horizon
    prices = np.stack([p.values for p in price_days])  # (n_days, T)
    if prices.shape[1] != T:
        raise DomainError("price days and population horizons differ")
    n_days = prices.shape[0]
    n_train = max(1, int(round(train_fraction * n_days)))
    if n_days > 1:
        n_train = min(n_train, n_days - 1)

    group_samples = []
    for g in population.groups:
        members = population.members_of(g)
        m = len(members)
        # Stack (member, day) pairs into one batch solve.
        tiled_prices = np.repeat(prices, m, axis=0)  # rows: day-major, member-minor
        base = np.tile(np.stack([c.baseline.values for c in members]), (n_days, 1))
        out = agent.solve_batch(
            tiled_prices,
            base,
            np.tile(np.array([c.flex.c1 for c in members]), n_days),
            np.tile(np.array([c.flex.c2 for c in members]), n_days),
            np.tile(np.stack([c.flex.shift_lo for c in members]), (n_days, 1)),
            np.tile(np.stack([c.flex.shift_hi for c in members]), (n_days, 1)),
            np.tile(np.stack([c.flex.reduce_lo for c in members]), (n_days, 1)),
            np.tile(np.stack([c.flex.reduce_hi for c in members]), (n_days, 1)),
        )
        dd = (out.demand - base).reshape(n_days, m, T).mean(axis=1)

        p_mean, p_std = _zstats(prices[:n_train])
        y_mean, y_std = _zstats(dd[:n_train])
        stats = NormStats(p_mean=p_mean, p_std=p_std, y_mean=y_mean, y_std=y_std)
        group_samples.append(
            GroupSamples(
                group_id=g.id,
                prices_n=(prices - p_mean) / p_std,
                dd_n=(dd - y_mean) / y_std,
                stats=stats,
                n_train=n_train,
            )
        )
    return Dataset(
        groups=tuple(group_samples),
        train_fraction=train_fraction,
        seeds=dict(seeds or {}),
    )


def gen_price_days(
    n_days: int, seed: int, base: PriceProfile, volatility: float
) -> list:
    """Synthetic wholesale price days: base scaled by lognormal jitter.

    The jitter has a day-wide component and an hourly component (equal log
    variance shares summing to volatility^2) so generated days vary in both
    level and shape; every factor has mean 1, so the elementwise expectation
    is the base profile. volatility = 0 returns exact copies.
    """
    if not 0.0 <= volatility <= 1.0:
        raise DomainError(f"volatility must lie in [0, 1], got {volatility}")
    T = base.horizon
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if volatility == 0.0:
        return [PriceProfile(base.values.copy()) for _ in range(n_days)]
    s = volatility / np.sqrt(2.0)
    day = np.exp(rng.standard_normal(n_days) * s - 0.5 * s**2)
    hour = np.exp(rng.standard_normal((n_days, T)) * s - 0.5 * s**2)
    days = np.clip(base.values * day[:, None] * hour, 0.0, None)
    return [PriceProfile(row) for row in days]


def ingest_csv(path, kind: str, T: int = 24) -> list:
    """Read one profile per row from a CSV of T (or 4T quarter-hourly,
    averaged down to hourly) numeric columns.

    kind is "price" or "demand"; a non-numeric first row is treated as a
    header. Malformed cells raise ParseError naming line and column.
    """
    if kind not in ("price", "demand"):
        raise ValueError(f"kind must be 'price' or 'demand', got {kind!r}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            values = []
            for col, cell in enumerate(cells, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    if lineno == 1 and not rows:
                        values = None  # header row
                        break
                    raise ParseError(
                        f"{path}: line {lineno}, column {col}: "
                        f"not a number: {cell.strip()!r}"
                    ) from None
            if values is None:
                continue
            if len(values) == 4 * T:
                values = np.asarray(values).reshape(T, 4).mean(axis=1)
            elif len(values) == T:
                values = np.asarray(values)
            else:
                raise ParseError(
                    f"{path}: line {lineno}: expected {T} or {4 * T} columns, "
                    f"got {len(values)}"
                )
            if not np.all(np.isfinite(values)):
                col = int(np.argmax(~np.isfinite(values))) + 1
                raise ParseError(f"{path}: line {lineno}, column {col}: non-finite value")
            try:
                profile = (
                    PriceProfile(values) if kind == "price" else DemandProfile(values)
                )
            except DomainError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            rows.append(profile)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return rows


def default_seed_profiles() -> list:
    """The 25 shipped ERCOT-like double-peak daily demand profiles (kWh)."""
    return ingest_csv(_DATA_DIR / "seed_profiles.csv", "demand")


def default_base_price() -> PriceProfile:
    """The shipped reference wholesale price day ($/kWh)."""
    return ingest_csv(_DATA_DIR / "base_price.csv", "price")[0]


# ---------------------------------------------------------------------------
# Directory round-trip. All floats use repr-exact formatting so reruns with
# identical seeds produce byte-identical files.
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def _write_matrix(path, header: list, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(matrix):
            writer.writerow([_FMT % v for v in row])


def _read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        return np.array([[float(c) for c in row] for row in reader if row])


def save_population(population: Population, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = population.horizon
    header = (
        ["id", "annual_income", "c1", "c2"]
        + [f"base_{t}" for t in range(1, T + 1)]
        + [f"shift_lo_{t}" for t in range(1, T + 1)]
        + [f"shift_hi_{t}" for t in range(1, T + 1)]
        + [f"reduce_lo_{t}" for t in range(1, T + 1)]
        + [f"reduce_hi_{t}" for t in range(1, T + 1)]
    )
    with open(out / "consumers.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in population.consumers:
            row = [str(c.id), _FMT % c.annual_income, _FMT % c.flex.c1, _FMT % c.flex.c2]
            for vec in (
                c.baseline.values,
                c.flex.shift_lo,
                c.flex.shift_hi,
                c.flex.reduce_lo,
                c.flex.reduce_hi,
            ):
                row.extend(_FMT % v for v in vec)
            writer.writerow(row)
    with open(out / "groups.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_id", "consumer_id"])
        for g in population.groups:
            for cid in g.members:
                writer.writerow([str(g.id), str(cid)])


def load_population(in_dir) -> Population:
    src = Path(in_dir)
    consumers = []
    with open(src / "consumers.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        T = (len(header) - 4) // 5
        for row in reader:
            if not row:
                continue
            cid = int(row[0])
            income, c1, c2 = (float(v) for v in row[1:4])
            vecs = np.array([float(v) for v in row[4:]]).reshape(5, T)
            consumers.append(
                Consumer(
                    id=cid,
                    annual_income=income,
                    baseline=DemandProfile(vecs[0]),
                    flex=FlexParams(
                        c1=c1,
                        c2=c2,
                        shift_lo=vecs[1],
                        shift_hi=vecs[2],
                        reduce_lo=vecs[3],
                        reduce_hi=vecs[4],
                    ),
                )
            )
    memberships: dict = {}
    with open(src / "groups.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                memberships.setdefault(int(row[0]), []).append(int(row[1]))
    by_id = {c.id: c for c in consumers}
    groups = []
    for gid in sorted(memberships):
        members = memberships[gid]
        avg_base = np.mean(np.stack([by_id[m].baseline.values for m in members]), axis=0)
        groups.append(
            Group(
                id=gid,
                members=tuple(members),
                avg_baseline=DemandProfile(avg_base),
                avg_daily_income=float(np.mean([by_id[m].daily_income for m in members])),
                model_id=gid,
            )
        )
    return Population(consumers=tuple(consumers), groups=tuple(groups))


def save_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = dataset.horizon
    hours = [f"h{t}" for t in range(1, T + 1)]
    stats = {}
    for g in dataset.groups:
        _write_matrix(out / f"group_{g.group_id}_prices.csv", hours, g.prices_n)
        _write_matrix(out / f"group_{g.group_id}_dd.csv", hours, g.dd_n)
        stats[str(g.group_id)] = {
            "p_mean": g.stats.p_mean,
            "p_std": g.stats.p_std,
            "y_mean": g.stats.y_mean,
            "y_std": g.stats.y_std,
            "n_train": g.n_train,
        }
    manifest = {
        "T": T,
        "n_groups": len(dataset.groups),
        "n_days": dataset.groups[0].n_days,
        "train_fraction": dataset.train_fraction,
        "seeds": dataset.seeds,
        "norm_stats": stats,
    }
    with open(out / "dataset_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(in_dir) -> Dataset:
    src = Path(in_dir)
    with open(src / "dataset_manifest.json") as fh:
        manifest = json.load(fh)
    groups = []
    for gid_str, st in sorted(manifest["norm_stats"].items(), key=lambda kv: int(kv[0])):
        gid = int(gid_str)
        groups.append(
            GroupSamples(
                group_id=gid,
                prices_n=_read_matrix(src / f"group_{gid}_prices.csv"),
                dd_n=_read_matrix(src / f"group_{gid}_dd.csv"),
                stats=NormStats(
                    p_mean=st["p_mean"],
                    p_std=st["p_std"],
                    y_mean=st["y_mean"],
                    y_std=st["y_std"],
                ),
                n_train=st["n_train"],
            )
        )
    return Dataset(
        groups=tuple(groups),
        train_fraction=manifest["train_fraction"],
        seeds=manifest.get("seeds", {}),
    )
