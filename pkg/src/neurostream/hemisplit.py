"""Left/right hemisphere electrode streams.

Both lists carry the midline electrodes Fz and Cz; Pz (the recording
reference) is in neither. Homologous electrodes sit at the same position
in the two lists, so mirroring a recording swaps the streams exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import Channel, Recording
from .errors import ShapeError
from .spectral import SpectralConfig, SpectralTensor, spectral_features

C = Channel
LEFT = (C.Fp1, C.F7, C.C3, C.P3, C.O1, C.F3, C.T3, C.T5, C.Fz, C.Cz, C.A1)
RIGHT = (C.Fp2, C.F8, C.C4, C.P4, C.O2, C.F4, C.T4, C.T6, C.Fz, C.Cz, C.A2)
MIDLINE = frozenset({C.Fz, C.Cz})


@dataclass(frozen=True)
class HemiPair:
    left: SpectralTensor
    right: SpectralTensor

    def __post_init__(self):
        if self.left.frames != self.right.frames or list(self.left.bins) != list(self.right.bins):
            raise ShapeError("left and right streams disagree on frames or bins")

    @property
    def frames(self) -> int:
        return self.left.frames


def split(rec: Recording, cfg: SpectralConfig = SpectralConfig()) -> HemiPair:
    return HemiPair(spectral_features(rec, cfg, LEFT), spectral_features(rec, cfg, RIGHT))


@dataclass(frozen=True)
class PartitionReport:
    left_size: int
    right_size: int
    intersection: frozenset
    uncovered: frozenset
    symmetric_difference: frozenset
    problems: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.problems

    def lines(self) -> list[str]:
        names = lambda s: ", ".join(c.name for c in sorted(s)) or "-"
        return [
            "left:  " + ", ".join(c.name for c in LEFT),
            "right: " + ", ".join(c.name for c in RIGHT),
            f"sizes: {self.left_size}/{self.right_size}",
            f"shared: {names(self.intersection)}",
            f"uncovered: {names(self.uncovered)}",
            "status: " + ("ok" if self.ok else "; ".join(self.problems)),
        ]


def partition_check(left=LEFT, right=RIGHT) -> PartitionReport:
    ls, rs = set(left), set(right)
    everything = set(Channel)
    problems = []
    if len(left) != 11 or len(right) != 11:
        problems.append(f"expected 11 electrodes per side, got {len(left)}/{len(right)}")
    if len(ls) != len(left) or len(rs) != len(right):
        problems.append("duplicate electrode within one side")
    if ls & rs != MIDLINE:
        problems.append(f"shared electrodes {sorted(c.name for c in ls & rs)} != Fz, Cz")
    if C.Pz in ls | rs:
        problems.append("Pz must not appear in either stream")
    if (ls | rs | {C.Pz}) != everything:
        problems.append("streams plus Pz do not cover all 21 electrodes")
    return PartitionReport(
        left_size=len(left),
        right_size=len(right),
        intersection=frozenset(ls & rs),
        uncovered=frozenset(everything - (ls | rs)),
        symmetric_difference=frozenset(everything ^ (ls | rs)),
        problems=tuple(problems),
    )
