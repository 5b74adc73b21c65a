"""Seeded, stratified, margin-balanced selection of images, pairs and groups.

All operations are pure functions of (inputs, seed). Selection never depends
on the incoming pool ordering: candidates are sorted by image_id before any
draw, so two pools with the same contents yield the same sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from . import rng
from .domain import (
    SYNTHETIC_GENERATORS,
    Category,
    Generator,
    GroupingPolicy,
    ImageRecord,
    Origin,
    Procedure,
    Source,
)
from .errors import GroupingError, PairingError, PlanningError, StratumError

#: Stratification dimensions and their enumerated values, in fixed order.
DIMENSIONS: dict[str, tuple[str, ...]] = {
    "source": tuple(s.value for s in Source),
    "category": tuple(c.value for c in Category),
    "origin": tuple(o.value for o in Origin),
    "generator": tuple(g.value for g in SYNTHETIC_GENERATORS),
}


@dataclass(frozen=True)
class StratumKey:
    """One cell of the cross-product of balancing dimensions."""

    dims: tuple[str, ...]
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.dims:
            raise PlanningError("a stratum needs at least one dimension")
        if len(self.dims) != len(self.values):
            raise PlanningError("dims and values must align")
        for dim, value in zip(self.dims, self.values):
            if dim not in DIMENSIONS:
                raise PlanningError(f"unknown balancing dimension {dim!r}")
            if value not in DIMENSIONS[dim]:
                raise PlanningError(f"value {value!r} not valid for dimension {dim!r}")

    def flipped(self) -> "StratumKey":
        """The complementary cell: every (two-valued) dimension flipped."""
        flipped_values = []
        for dim, value in zip(self.dims, self.values):
            choices = DIMENSIONS[dim]
            if len(choices) != 2:
                raise PlanningError(
                    f"dimension {dim!r} is not two-valued; no complementary cell exists"
                )
            flipped_values.append(choices[1] if value == choices[0] else choices[0])
        return StratumKey(self.dims, tuple(flipped_values))

    def describe(self) -> str:
        return "(" + ", ".join(f"{d}={v}" for d, v in zip(self.dims, self.values)) + ")"


@dataclass(frozen=True)
class SamplingPlan:
    procedure: Procedure
    quotas: Mapping[StratumKey, int]
    seed: int
    stream_name: str = ""

    @property
    def total(self) -> int:
        return sum(self.quotas.values())


def _cells(dims: Sequence[str]) -> list[StratumKey]:
    cells = [()]
    for dim in dims:
        cells = [prev + (value,) for prev in cells for value in DIMENSIONS[dim]]
    return [StratumKey(tuple(dims), values) for values in cells]


def plan_quotas(total: int, dims: Sequence[str], rnd=None) -> dict[StratumKey, int]:
    """Quota per stratum cell such that every marginal total is equal.

    Base quota is floor(total / #cells); the remainder is distributed as
    complementary cell pairs (a cell plus the cell with every dimension
    flipped) picked by the seeded generator, which preserves all margins.
    """
    dims = list(dims)
    if total <= 0:
        raise PlanningError(f"total must be positive, got {total}")
    if not dims:
        raise PlanningError("at least one balancing dimension is required")
    if len(set(dims)) != len(dims):
        raise PlanningError(f"duplicate balancing dimension in {dims}")
    for dim in dims:
        if dim not in DIMENSIONS:
            raise PlanningError(f"unknown balancing dimension {dim!r}")
        if total % len(DIMENSIONS[dim]) != 0:
            raise PlanningError(
                f"total {total} is not divisible by the {len(DIMENSIONS[dim])} values "
                f"of dimension {dim!r}; margins cannot balance"
            )

    cells = _cells(dims)
    base, remainder = divmod(total, len(cells))
    quotas = {cell: base for cell in cells}
    if remainder:
        if remainder % 2 != 0:
            raise PlanningError(
                f"remainder {remainder} over {len(cells)} cells is odd; "
                "complementary-pair balancing is infeasible"
            )
        if any(len(DIMENSIONS[dim]) != 2 for dim in dims):
            raise PlanningError(
                "remainder distribution requires all balancing dimensions to be two-valued"
            )
        # Each unordered {cell, flipped(cell)} pair, listed once.
        pairs = sorted(
            {tuple(sorted((c, c.flipped()), key=lambda k: k.values)) for c in cells},
            key=lambda pair: pair[0].values,
        )
        needed = remainder // 2
        if rnd is None:
            rnd = rng.stream(0, "plan")
        picks = rnd.choice(len(pairs), size=needed, replace=False)
        for index in picks:
            a, b = pairs[int(index)]
            quotas[a] += 1
            quotas[b] += 1
    return quotas


def _cell_of(record: ImageRecord, dims: Sequence[str]) -> StratumKey:
    values = []
    for dim in dims:
        raw = getattr(record, dim)
        values.append(raw.value)
    return StratumKey(tuple(dims), tuple(values))


def sample_individual_set(pool: Iterable[ImageRecord], plan: SamplingPlan) -> list[str]:
    """Draw image_ids meeting the plan's quotas exactly, in seeded order."""
    dims = next(iter(plan.quotas)).dims
    by_cell: dict[StratumKey, list[str]] = {cell: [] for cell in plan.quotas}
    for record in pool:
        cell = _cell_of(record, dims)
        if cell in by_cell:
            by_cell[cell].append(record.image_id)

    gen = rng.stream(plan.seed, plan.stream_name or f"{plan.procedure.value}.draw")
    chosen: list[str] = []
    for cell in sorted(plan.quotas, key=lambda c: c.values):
        quota = plan.quotas[cell]
        candidates = sorted(by_cell[cell])
        if len(candidates) < quota:
            raise StratumError(
                f"stratum {cell.describe()} has {len(candidates)} image(s), "
                f"needs {quota}"
            )
        if quota:
            picks = gen.choice(len(candidates), size=quota, replace=False)
            chosen.extend(candidates[int(i)] for i in picks)
    order = gen.permutation(len(chosen))
    return [chosen[int(i)] for i in order]


@dataclass(frozen=True)
class OrderedPair:
    """A presentable pair; slots are what the expert sees as Image 1 / Image 2."""

    slot1: str
    slot2: str


_PAIR_DIMS = ("category", "origin")


def build_a4_pairs(
    real_images: Sequence[ImageRecord],
    synth_images: Sequence[ImageRecord],
    seed: int,
    stream_name: str = "A4.pairs",
) -> list[OrderedPair]:
    """Match each real image to a synthetic one with the same (category, origin).

    Both subsets must have been drawn with identical quota vectors. Slot
    assignment (which image appears as Image 1) is a seeded fair coin per pair.
    """
    def cells(records: Sequence[ImageRecord], want: Source) -> dict[StratumKey, list[str]]:
        out: dict[StratumKey, list[str]] = {}
        for record in records:
            if record.source is not want:
                raise PairingError(
                    f"image {record.image_id!r} is {record.source.value}, "
                    f"expected {want.value} in this subset"
                )
            out.setdefault(_cell_of(record, _PAIR_DIMS), []).append(record.image_id)
        return {cell: sorted(ids) for cell, ids in out.items()}

    real_cells = cells(real_images, Source.REAL)
    synth_cells = cells(synth_images, Source.SYNTHETIC)
    real_vec = {cell: len(ids) for cell, ids in real_cells.items()}
    synth_vec = {cell: len(ids) for cell, ids in synth_cells.items()}
    if real_vec != synth_vec:
        mismatches = sorted(
            set(real_vec) | set(synth_vec), key=lambda c: c.values
        )
        detail = "; ".join(
            f"{c.describe()}: real={real_vec.get(c, 0)} synthetic={synth_vec.get(c, 0)}"
            for c in mismatches
            if real_vec.get(c, 0) != synth_vec.get(c, 0)
        )
        raise PairingError(f"quota vectors differ over (category, origin): {detail}")

    gen = rng.stream(seed, stream_name)
    pairs: list[OrderedPair] = []
    for cell in sorted(real_cells, key=lambda c: c.values):
        reals = list(real_cells[cell])
        synths = list(synth_cells[cell])
        gen.shuffle(reals)
        gen.shuffle(synths)
        for real_id, synth_id in zip(reals, synths):
            if int(gen.integers(0, 2)) == 0:
                pairs.append(OrderedPair(real_id, synth_id))
            else:
                pairs.append(OrderedPair(synth_id, real_id))
    order = gen.permutation(len(pairs))
    return [pairs[int(i)] for i in order]


@dataclass(frozen=True)
class GroupLabel:
    """Provenance of an A5 group: the single source, plus category when homogeneous."""

    source: str  # "real" or a generator name
    category: Optional[str] = None


@dataclass(frozen=True)
class ImageGroup:
    group_id: str
    image_ids: tuple[str, ...]
    label: GroupLabel


@dataclass(frozen=True)
class GroupingResult:
    groups: tuple[ImageGroup, ...]
    #: image_ids that did not fill a complete group, per source label.
    leftovers: dict = field(default_factory=dict)


def build_a5_groups(
    real_pool: Sequence[ImageRecord],
    synth_pools_by_generator: Mapping[Generator, Sequence[ImageRecord]],
    policy: GroupingPolicy,
    seed: int,
    group_size: int = 10,
    stream_name: str = "A5.groups",
) -> GroupingResult:
    """Partition the A5 image sets into presentable groups of `group_size`.

    Every group holds images from a single source (one generator, or real).
    Under HOMOGENEOUS_SOURCE_CATEGORY groups are additionally single-category.
    Group presentation order is a seeded permutation; incomplete groups are
    left unassigned and reported.
    """
    if group_size <= 0:
        raise GroupingError(f"group size must be positive, got {group_size}")
    if not real_pool:
        raise GroupingError("real image part is empty")
    if not synth_pools_by_generator:
        raise GroupingError("no generator subsets supplied")
    sizes = {gen_.value: len(records) for gen_, records in synth_pools_by_generator.items()}
    for name, size in sorted(sizes.items()):
        if size == 0:
            raise GroupingError(f"generator subset {name!r} is empty")
    if len(set(sizes.values())) > 1:
        raise GroupingError(f"generator subsets differ in size: {sizes}")

    gen = rng.stream(seed, stream_name)
    groups: list[ImageGroup] = []
    leftovers: dict[str, list[str]] = {}

    def partition(source_label: str, records: Sequence[ImageRecord]):
        if policy is GroupingPolicy.HOMOGENEOUS_SOURCE_CATEGORY:
            strata = {}
            for record in records:
                strata.setdefault(record.category.value, []).append(record.image_id)
            buckets = [
                (source_label, category, sorted(ids))
                for category, ids in sorted(strata.items())
            ]
        else:
            buckets = [(source_label, None, sorted(r.image_id for r in records))]
        for label_source, label_category, ids in buckets:
            ids = list(ids)
            gen.shuffle(ids)
            n_full = len(ids) // group_size
            for g in range(n_full):
                chunk = tuple(ids[g * group_size:(g + 1) * group_size])
                suffix = f"-{label_category}" if label_category else ""
                groups.append(
                    ImageGroup(
                        group_id=f"{label_source}{suffix}-{g + 1:02d}",
                        image_ids=chunk,
                        label=GroupLabel(label_source, label_category),
                    )
                )
            rest = ids[n_full * group_size:]
            if rest:
                leftovers.setdefault(label_source, []).extend(sorted(rest))

    partition("real", real_pool)
    for generator in SYNTHETIC_GENERATORS:
        if generator in synth_pools_by_generator:
            partition(generator.value, synth_pools_by_generator[generator])

    order = gen.permutation(len(groups))
    ordered = tuple(groups[int(i)] for i in order)
    return GroupingResult(groups=ordered, leftovers=leftovers)
