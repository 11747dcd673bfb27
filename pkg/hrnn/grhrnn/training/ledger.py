"""
Memory ledger of the streaming sweep.

Counts are kept in two units: vectors of the size of a hidden state (one per retained state h and one per stored
gradient, the unit memory is usually quoted in), and exact scalars (2H per state for h and c, H per stored gradient).
"""
import math
from dataclasses import dataclass
from typing import Dict, Hashable, List, Tuple

from grhrnn.common.errors import LedgerError
from grhrnn.hierarchy.schedule import TickSchedule

STATE = "state"
GRAD = "grad"


@dataclass(frozen=True)
class LedgerEvent:
    action: str
    level: int
    kind: str
    key: Hashable
    total: int


class MemoryLedger(object):

    def __init__(self, num_levels: int):
        self.num_levels = num_levels
        self.current = [0] * num_levels
        self.peak = [0] * num_levels
        self.total = 0
        self.peak_total = 0
        self.scalars = 0
        self.peak_scalars = 0
        self.events: List[LedgerEvent] = []
        self._retained: Dict[Hashable, Tuple[int, str, int]] = {}

    def retain(self, level: int, kind: str, key: Hashable, scalars: int):
        if key in self._retained:
            raise LedgerError(f"Vector {key} is already retained")
        self._retained[key] = (level, kind, scalars)
        self.current[level] += 1
        self.peak[level] = max(self.peak[level], self.current[level])
        self.total += 1
        self.peak_total = max(self.peak_total, self.total)
        self.scalars += scalars
        self.peak_scalars = max(self.peak_scalars, self.scalars)
        self.events.append(LedgerEvent("retain", level, kind, key, self.total))

    def release(self, key: Hashable):
        entry = self._retained.pop(key, None)
        if entry is None:
            raise LedgerError(f"Release of vector {key} which is not retained")
        level, kind, scalars = entry
        self.current[level] -= 1
        self.total -= 1
        self.scalars -= scalars
        self.events.append(LedgerEvent("release", level, kind, key, self.total))

    def retained(self, level: int, kind: str) -> int:
        return sum(1 for entry in self._retained.values() if entry[0] == level and entry[1] == kind)

    def summary(self) -> Dict[str, int]:
        record = {"ledger_peak": self.peak_total, "ledger_peak_scalars": self.peak_scalars}
        for level, peak in enumerate(self.peak):
            record[f"ledger_peak_{level}"] = peak
        return record


def memory_formula(num_levels: int, k: int, length: int) -> int:
    """
    k + 2 ceil(T / k) for two levels, 2 (l - 1) k + 2 ceil(T / k^(l-1)) for deeper hierarchies
    (states and stored gradients of every intermediate level, states and stored gradients of the top level)
    """
    if num_levels < 2 or k < 1 or length < k:
        raise LedgerError(f"Invalid memory formula arguments: levels {num_levels}, k {k}, T {length}")
    top_ticks = math.ceil(length / k ** (num_levels - 1))
    if num_levels == 2:
        return k + 2 * top_ticks
    return 2 * (num_levels - 1) * k + 2 * top_ticks


def predicted_peak(schedule: TickSchedule) -> int:
    """
    Peak of the ledger for one window over a schedule, replaying the retain/release order of the streaming sweep.
    For two levels this is max over segments m of (L_m + 2 m).
    """
    num_levels = schedule.num_levels
    states = [0] * num_levels
    grads = [0] * num_levels
    # Only levels holding a segment fed from above send a stored gradient upward
    injected = [False] * num_levels
    peak = 0

    def finish(level: int):
        nonlocal peak
        if injected[level]:
            grads[level + 1] += 1
            peak = max(peak, sum(states) + sum(grads))
        states[level] = 0
        grads[level] = 0
        injected[level] = False

    for t in range(schedule.length):
        if t > 0:
            for level in range(num_levels - 1):
                if schedule.is_tick(level + 1, t):
                    finish(level)
        for level in range(num_levels):
            if schedule.is_tick(level, t):
                states[level] += 1
                if level < num_levels - 1 and schedule.is_tick(level + 1, t):
                    injected[level] = True
        peak = max(peak, sum(states) + sum(grads))
    for level in range(num_levels - 1):
        finish(level)
    return peak


def full_tbptt_count(schedule: TickSchedule) -> int:
    """
    Vectors kept by plain TBPTT over the whole window: one state per tick of every level
    """
    return sum(schedule.count_ticks(level) for level in range(schedule.num_levels))
