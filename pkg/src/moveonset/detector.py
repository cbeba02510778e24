"""N-consecutive-window postprocessing state machine.

A detection fires once the configured number of consecutive windows is
labeled movement; the state then latches (one trigger per trial) until reset.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ensemble import MOVEMENT


class DetectorError(Exception):
    pass


@dataclass(frozen=True)
class DetectionEvent:
    time: float        # end time of the window completing the run
    run_length: int


class DetectorState:
    def __init__(self, n_required: int):
        if n_required < 1:
            raise DetectorError("n_required must be >= 1")
        self.n_required = n_required
        self.consecutive_count = 0
        self.fired = False
        self.last_window_end: float | None = None

    def push(self, label: str, window_end_time: float) -> DetectionEvent | None:
        if self.last_window_end is not None and window_end_time <= self.last_window_end:
            raise DetectorError(
                f"non-monotone timestamps: {window_end_time} after "
                f"{self.last_window_end}")
        self.last_window_end = window_end_time
        if self.fired:
            return None
        if label == MOVEMENT:
            self.consecutive_count += 1
            if self.consecutive_count >= self.n_required:
                self.fired = True
                return DetectionEvent(time=window_end_time,
                                      run_length=self.n_required)
        else:
            self.consecutive_count = 0
        return None

    def reset(self) -> "DetectorState":
        self.consecutive_count = 0
        self.fired = False
        self.last_window_end = None
        return self


def first_detection(labels, end_times, n_required: int) -> DetectionEvent | None:
    """Run a fresh detector over a full label stream."""
    state = DetectorState(n_required)
    for label, t in zip(labels, end_times):
        event = state.push(label, t)
        if event is not None:
            return event
    return None
