"""
Tick schedules of a hierarchy of recurrent levels.

Level 0 ticks at every step. Level j+1 ticks on a subset of the ticks of level j, the steps between two consecutive
ticks of level j+1 form a segment of level j. Fixed schedules tick level j every prod(k_0 .. k_{j-1}) steps starting
at 0, boundary schedules tick the upper level at 0 and right after every flagged step (e.g. after each space of a text).
"""
import math
from typing import List, Optional, Sequence, Tuple

from grhrnn.common.errors import ScheduleError

FIXED = "fixed"
BOUNDARY = "boundary"


class TickSchedule(object):

    def __init__(self, ticks: Sequence[Sequence[int]], length: int, k_max: Sequence[int], mode: str = FIXED):
        self.length = int(length)
        self.ticks: List[List[int]] = [sorted(int(t) for t in level_ticks) for level_ticks in ticks]
        self.k_max: List[int] = [int(k) for k in k_max]
        self.mode = mode
        self._validate()
        self._tick_sets = [set(level_ticks) for level_ticks in self.ticks]

    def _validate(self):
        if self.length < 1:
            raise ScheduleError(f"Schedule length must be positive, got {self.length}")
        if len(self.ticks) < 2:
            raise ScheduleError(f"A hierarchy needs at least 2 levels, got {len(self.ticks)}")
        if len(self.k_max) != len(self.ticks) - 1:
            raise ScheduleError(f"Expected {len(self.ticks) - 1} k_max values, got {len(self.k_max)}")
        if self.ticks[0] != list(range(self.length)):
            raise ScheduleError("Level 0 must tick at every step")
        for level, level_ticks in enumerate(self.ticks):
            if len(set(level_ticks)) != len(level_ticks):
                raise ScheduleError(f"Level {level} has repeated ticks")
            if len(level_ticks) > 0 and (level_ticks[0] < 0 or level_ticks[-1] >= self.length):
                raise ScheduleError(f"Level {level} ticks outside [0, {self.length})")
        for level in range(len(self.ticks) - 1):
            if not set(self.ticks[level + 1]).issubset(self.ticks[level]):
                raise ScheduleError(f"Ticks of level {level + 1} are not nested in the ticks of level {level}")
            longest = self.longest_segment(level)
            if self.k_max[level] < longest:
                raise ScheduleError(f"k_max {self.k_max[level]} of level {level} is shorter than its longest "
                                    f"segment ({longest})")

    @property
    def num_levels(self) -> int:
        return len(self.ticks)

    def __repr__(self):
        counts = [len(level_ticks) for level_ticks in self.ticks]
        return f"TickSchedule(mode={self.mode}, length={self.length}, ticks per level={counts}, k_max={self.k_max})"

    def is_tick(self, level: int, t: int) -> bool:
        if not 0 <= t < self.length:
            raise ScheduleError(f"Step {t} outside the schedule of length {self.length}")
        if not 0 <= level < self.num_levels:
            raise ScheduleError(f"Level {level} outside a {self.num_levels}-level schedule")
        return t in self._tick_sets[level]

    def count_ticks(self, level: int) -> int:
        return len(self.ticks[level])

    def ticks_between(self, level: int, start: int, stop: int) -> List[int]:
        """
        Ticks of a level in [start, stop)
        """
        return [t for t in self.ticks[level] if start <= t < stop]

    def segment_start(self, level: int, t: int) -> Optional[int]:
        """
        Start of the level segment step t belongs to (last tick of level + 1 not after t), None before the first
        """
        if not 0 <= t < self.length:
            raise ScheduleError(f"Step {t} outside the schedule of length {self.length}")
        starts = [tick for tick in self.ticks[level + 1] if tick <= t]
        return starts[-1] if len(starts) > 0 else None

    def segments(self, level: int) -> List[Tuple[int, int]]:
        """
        [start, stop) step ranges of the segments of a level, the first one is open when step 0 is not a tick
        of the level above
        """
        bounds = list(self.ticks[level + 1])
        if len(bounds) == 0 or bounds[0] != 0:
            bounds = [0] + bounds
        bounds.append(self.length)
        return [(bounds[ix], bounds[ix + 1]) for ix in range(len(bounds) - 1)]

    def segment_lengths(self, level: int) -> List[int]:
        """
        Number of level ticks in each segment
        """
        return [len(self.ticks_between(level, start, stop)) for start, stop in self.segments(level)]

    def longest_segment(self, level: int) -> int:
        return max(self.segment_lengths(level), default=0)

    def window(self, start: int, stop: int) -> "TickSchedule":
        """
        Sub-schedule of steps [start, stop) re-indexed from 0, the k_max values are kept
        """
        if not 0 <= start < stop <= self.length:
            raise ScheduleError(f"Window [{start}, {stop}) outside the schedule of length {self.length}")
        ticks = [[t - start for t in level_ticks if start <= t < stop] for level_ticks in self.ticks]
        return TickSchedule(ticks, stop - start, self.k_max, self.mode)

    def signature(self) -> Tuple:
        return self.length, tuple(tuple(level_ticks) for level_ticks in self.ticks)


def fixed(num_levels: int, ks: Sequence[int], length: int) -> TickSchedule:
    """
    Level j ticks every prod(ks[:j]) steps starting at step 0
    """
    if num_levels < 2:
        raise ScheduleError(f"A hierarchy needs at least 2 levels, got {num_levels}")
    if len(ks) != num_levels - 1:
        raise ScheduleError(f"Expected {num_levels - 1} tick ratios for {num_levels} levels, got {list(ks)}")
    if any(k < 1 for k in ks):
        raise ScheduleError(f"Tick ratios must be positive, got {list(ks)}")
    ticks = [list(range(0, length, math.prod(ks[:level]))) for level in range(num_levels)]
    return TickSchedule(ticks, length, list(ks), FIXED)


def make_boundary_schedule(flags: Sequence[bool], num_levels: int = 2, k_max: Optional[int] = None) -> TickSchedule:
    """
    Two-level schedule from per-step flags, a flag marks the last step of a segment: the upper level ticks
    at step 0 and at p + 1 for every flagged step p < T - 1
    """
    length = len(flags)
    if length == 0:
        raise ScheduleError("Cannot build a boundary schedule for an empty sequence")
    if num_levels != 2:
        raise ScheduleError(f"Boundary schedules drive 2 levels, got {num_levels}")
    upper = [0] + [p + 1 for p in range(length - 1) if flags[p]]
    bounds = upper + [length]
    longest = max(bounds[ix + 1] - bounds[ix] for ix in range(len(upper)))
    if k_max is not None and k_max < longest:
        raise ScheduleError(f"k_max {k_max} is shorter than the longest segment ({longest})")
    return TickSchedule([list(range(length)), upper], length, [longest if k_max is None else k_max], BOUNDARY)
