"""Class-structured response generator with surface local item dependence.

Each respondent class is meant to do well on its own item groups. Step 1
perturbs that intention per respondent and group, step 2 draws responses from
the realized inside/outside status, and step 3 makes items within a group copy
an anchor item's response (surface local dependence).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .data import ItemResponseMatrix

__all__ = [
    "SimDesign",
    "SimDataset",
    "assign_groups",
    "generate_responses",
    "inject_dependence",
    "simulate",
    "drv_design",
    "STUDY_GRID",
]

# (p11, p12) cells of the standard six-condition study; p21 = p22 = 0.5, rho = 0.8
STUDY_GRID = tuple((p11, p12) for p11 in (0.7, 0.8, 0.9) for p12 in (0.7, 0.8))


@dataclass(frozen=True)
class SimDesign:
    n_classes: int = 3
    respondents_per_class: Union[int, tuple[int, ...]] = 100
    n_item_groups: int = 6
    items_per_group: int = 4
    # zero-based: class -> item groups it is meant to answer correctly
    class_to_groups: tuple[tuple[int, ...], ...] = ((0, 1), (2, 3), (4, 5))
    p11: float = 0.8
    p12: float = 0.8
    p21: float = 0.5
    p22: float = 0.5
    rho: float = 0.8
    # position of the anchor item inside each group
    anchor: int = 0
    seed: int = 0

    def __post_init__(self):
        sizes = self.class_sizes
        if len(sizes) != self.n_classes or min(sizes) < 1:
            raise ValueError("respondents_per_class must give one positive size per class")
        if len(self.class_to_groups) != self.n_classes:
            raise ValueError("class_to_groups needs one entry per class")
        for groups in self.class_to_groups:
            if any(not 0 <= g < self.n_item_groups for g in groups):
                raise ValueError(f"group index out of range in {groups}")
        for name in ("p11", "p12", "p21", "p22"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.p11 <= self.p21 or self.p12 <= self.p22:
            warnings.warn("inside-class probabilities should exceed the outside-class ones", stacklevel=3)
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if not 0 <= self.anchor < self.items_per_group:
            raise ValueError("anchor must index an item inside a group")

    @property
    def class_sizes(self) -> tuple[int, ...]:
        r = self.respondents_per_class
        if isinstance(r, (int, np.integer)):
            return (int(r),) * self.n_classes
        return tuple(int(v) for v in r)

    @property
    def n(self) -> int:
        return sum(self.class_sizes)

    @property
    def p(self) -> int:
        return self.n_item_groups * self.items_per_group

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_classes), self.class_sizes)

    def item_groups(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_item_groups), self.items_per_group)

    def intended_inside(self) -> np.ndarray:
        """``(n, n_item_groups)`` boolean: group is meant to be answered well by the row's class."""
        member = np.zeros((self.n_classes, self.n_item_groups), dtype=bool)
        for c, groups in enumerate(self.class_to_groups):
            member[c, list(groups)] = True
        return member[self.labels()]


@dataclass
class SimDataset:
    responses: ItemResponseMatrix
    labels: np.ndarray
    inside: np.ndarray  # (n, n_item_groups) realized inside flags
    copied: np.ndarray  # (n, p) True where the response was copied from the anchor
    design: SimDesign = field(repr=False)


def assign_groups(design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    """Realized inside/outside flag for every (respondent, item group).

    Intended-inside groups stay inside with probability ``p11``; intended-outside
    groups stay outside with probability ``p21``.
    """
    intended = design.intended_inside()
    u = rng.random(intended.shape)
    return np.where(intended, u < design.p11, u >= design.p21)


def generate_responses(flags: np.ndarray, design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    cell_inside = flags[:, design.item_groups()]
    prob = np.where(cell_inside, design.p12, design.p22)
    return (rng.random(prob.shape) < prob).astype(np.int8)


def inject_dependence(raw: np.ndarray, design: SimDesign, rng: np.random.Generator):
    """Copy each group's anchor response onto the other items of the group with probability ``rho``.

    Returns the final matrix and the boolean copy mask.
    """
    out = np.array(raw, dtype=np.int8, copy=True)
    copied = np.zeros(out.shape, dtype=bool)
    u = rng.random(out.shape)
    g = design.items_per_group
    for start in range(0, design.p, g):
        anchor = start + design.anchor
        for j in range(start, start + g):
            if j == anchor:
                continue
            hit = u[:, j] < design.rho
            out[hit, j] = out[hit, anchor]
            copied[hit, j] = True
    return out, copied


def simulate(design: SimDesign, seed: Optional[Union[int, np.random.SeedSequence]] = None) -> SimDataset:
    """Run the three generation steps with one RNG seeded from ``seed`` (default ``design.seed``)."""
    rng = np.random.default_rng(design.seed if seed is None else seed)
    flags = assign_groups(design, rng)
    raw = generate_responses(flags, design, rng)
    final, copied = inject_dependence(raw, design, rng)
    return SimDataset(ItemResponseMatrix(final), design.labels(), flags, copied, design)


def drv_design(**overrides) -> SimDesign:
    """Design shaped like the deductive-reasoning test: 418 respondents, 24 items."""
    params = dict(respondents_per_class=(140, 139, 139), p11=0.8, p12=0.8)
    params.update(overrides)
    return SimDesign(**params)


def class_sizes_for(n: int, n_classes: int) -> tuple[int, ...]:
    base, extra = divmod(n, n_classes)
    return tuple(base + (1 if c < extra else 0) for c in range(n_classes))


def design_grid(grid: Sequence[tuple[float, float]] = STUDY_GRID, **common) -> list[SimDesign]:
    return [SimDesign(p11=p11, p12=p12, **common) for p11, p12 in grid]
