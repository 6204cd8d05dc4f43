"""Study protocol state machine.

One session: a pupil baseline of at least 30 s, four 10 s luminance
fixations (controller, drone, rover, arm), then five 60 s piloting tasks.
Tasks 3 and 4 swap order by participant parity; the slalom task (5) is
always last. A crash pauses the running task and a restart starts that
task's clock again from zero. All transitions are driven by operator
commands plus a monotonic clock, and every transition emits an event
record so a replayed log reproduces the protocol exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .errors import IllegalTransition, InvalidConfig, NoActiveSession

BASELINE_MIN_S = 30.0
FIXATION_S = 10.0
TASK_S = 60.0
FIXATION_TARGETS = ("controller", "drone", "rover", "arm")
TASK_NAMES = {
    1: "free flight",
    2: "static obstacle",
    3: "back and forth",
    4: "side to side",
    5: "slalom",
}
KEYPOINT_KINDS = frozenset({"crash", "lap_completed", "note", "quality_flag"})

COMMANDS = (
    "start_baseline",
    "start_fixation",
    "start_task",
    "mark_crash",
    "resume_restart",
    "abort",
)


class Phase(str, Enum):
    IDLE = "idle"
    PUPIL_BASELINE = "pupil_baseline"
    LUMINANCE_FIXATION = "luminance_fixation"
    TASK = "task"
    PAUSED_CRASH = "paused_crash"
    DONE = "done"


def assign_counterbalance(participant_index: int) -> tuple[int, ...]:
    """Task order for a participant: 3/4 swap by parity, slalom always last."""
    if participant_index < 0:
        raise InvalidConfig("participant index must be >= 0")
    return (1, 2, 3, 4, 5) if participant_index % 2 == 0 else (1, 2, 4, 3, 5)


def validate_task_order(order: Sequence[int]) -> tuple[int, ...]:
    order = tuple(order)
    if sorted(order) != [1, 2, 3, 4, 5]:
        raise InvalidConfig(f"task order must permute 1..5, got {order}")
    if order[0] != 1 or order[1] != 2 or order[4] != 5 or set(order[2:4]) != {3, 4}:
        raise InvalidConfig(f"task order violates counterbalancing shape: {order}")
    return order


@dataclass(frozen=True)
class ProtocolEvent:
    host_ns: int
    kind: str
    text: str


@dataclass(frozen=True)
class ProtocolState:
    phase: Phase = Phase.IDLE
    phase_started_ns: int = 0
    task_order: tuple[int, ...] = (1, 2, 3, 4, 5)
    fixation_index: int = 0
    fixations_complete: bool = False
    task_pos: int = -1  # index into task_order of the running/last task
    task_complete: bool = False
    attempt: int = 0
    now_ns: int = 0

    @property
    def task_n(self) -> int | None:
        if self.task_pos < 0:
            return None
        return self.task_order[self.task_pos]

    @property
    def fixation_target(self) -> str | None:
        if self.phase is not Phase.LUMINANCE_FIXATION:
            return None
        return FIXATION_TARGETS[self.fixation_index]

    def elapsed_s(self) -> float:
        if self.phase in (Phase.IDLE, Phase.DONE):
            return 0.0
        return (self.now_ns - self.phase_started_ns) / 1e9


class ProtocolMachine:
    """Deterministic protocol driver.

    ``advance(command, now_ns)`` applies an operator command,
    ``tick(now_ns)`` fires time-based transitions; both return the events
    to append to the session log. Auto-transitions are stamped on the
    exact threshold instant, so event times do not depend on how often
    the clock is polled.
    """

    def __init__(self, task_order: Sequence[int] = (1, 2, 3, 4, 5)):
        self.state = ProtocolState(task_order=validate_task_order(task_order))

    # -- time ------------------------------------------------------------

    def tick(self, now_ns: int) -> list[ProtocolEvent]:
        st = self.state
        if now_ns < st.now_ns:
            raise ValueError("clock went backwards")
        events: list[ProtocolEvent] = []
        st = replace(st, now_ns=now_ns)
        fix_ns = int(FIXATION_S * 1e9)
        task_ns = int(TASK_S * 1e9)
        if st.phase is Phase.LUMINANCE_FIXATION and not st.fixations_complete:
            while (
                not st.fixations_complete
                and now_ns - st.phase_started_ns >= fix_ns
            ):
                end_ns = st.phase_started_ns + fix_ns
                target = FIXATION_TARGETS[st.fixation_index]
                events.append(ProtocolEvent(end_ns, "phase", f"fixation:{target}:end"))
                if st.fixation_index + 1 < len(FIXATION_TARGETS):
                    nxt = FIXATION_TARGETS[st.fixation_index + 1]
                    events.append(ProtocolEvent(end_ns, "phase", f"fixation:{nxt}:begin"))
                    st = replace(
                        st, fixation_index=st.fixation_index + 1, phase_started_ns=end_ns
                    )
                else:
                    st = replace(st, fixations_complete=True, phase_started_ns=end_ns)
        elif st.phase is Phase.TASK and not st.task_complete:
            if now_ns - st.phase_started_ns >= task_ns:
                end_ns = st.phase_started_ns + task_ns
                events.append(ProtocolEvent(end_ns, "phase", f"task:{st.task_n}:end"))
                if st.task_pos + 1 < len(st.task_order):
                    st = replace(st, task_complete=True)
                else:
                    events.append(ProtocolEvent(end_ns, "session", "done"))
                    st = replace(st, phase=Phase.DONE, phase_started_ns=end_ns)
        self.state = st
        return events

    # -- commands ----------------------------------------------------------

    def advance(self, command: str, now_ns: int) -> list[ProtocolEvent]:
        if command not in COMMANDS:
            raise IllegalTransition(f"unknown command {command!r}")
        events = self.tick(now_ns)
        st = self.state
        if command == "start_baseline":
            if st.phase is not Phase.IDLE:
                raise IllegalTransition(f"start_baseline illegal in {st.phase.value}")
            events.append(ProtocolEvent(now_ns, "phase", "baseline:begin"))
            st = replace(st, phase=Phase.PUPIL_BASELINE, phase_started_ns=now_ns)
        elif command == "start_fixation":
            if st.phase is not Phase.PUPIL_BASELINE:
                raise IllegalTransition(f"start_fixation illegal in {st.phase.value}")
            if (now_ns - st.phase_started_ns) / 1e9 < BASELINE_MIN_S:
                raise IllegalTransition(
                    f"baseline spans {st.elapsed_s():.1f} s, need at least {BASELINE_MIN_S:.0f} s"
                )
            events.append(ProtocolEvent(now_ns, "phase", "baseline:end"))
            events.append(
                ProtocolEvent(now_ns, "phase", f"fixation:{FIXATION_TARGETS[0]}:begin")
            )
            st = replace(
                st,
                phase=Phase.LUMINANCE_FIXATION,
                phase_started_ns=now_ns,
                fixation_index=0,
                fixations_complete=False,
            )
        elif command == "start_task":
            ready_first = st.phase is Phase.LUMINANCE_FIXATION and st.fixations_complete
            ready_next = st.phase is Phase.TASK and st.task_complete
            if not (ready_first or ready_next):
                raise IllegalTransition(
                    f"start_task illegal in {st.phase.value}"
                    + ("" if st.phase is not Phase.PUPIL_BASELINE else " (baseline incomplete)")
                )
            pos = 0 if ready_first else st.task_pos + 1
            n = st.task_order[pos]
            events.append(ProtocolEvent(now_ns, "phase", f"task:{n}:begin"))
            st = replace(
                st,
                phase=Phase.TASK,
                phase_started_ns=now_ns,
                task_pos=pos,
                task_complete=False,
                attempt=1,
            )
        elif command == "mark_crash":
            if st.phase is not Phase.TASK or st.task_complete:
                raise IllegalTransition(f"mark_crash illegal in {st.phase.value}")
            events.append(ProtocolEvent(now_ns, "phase", f"task:{st.task_n}:crash"))
            st = replace(st, phase=Phase.PAUSED_CRASH, phase_started_ns=now_ns)
        elif command == "resume_restart":
            if st.phase is not Phase.PAUSED_CRASH:
                raise IllegalTransition(f"resume_restart illegal in {st.phase.value}")
            events.append(ProtocolEvent(now_ns, "phase", f"task:{st.task_n}:restart"))
            st = replace(
                st,
                phase=Phase.TASK,
                phase_started_ns=now_ns,
                task_complete=False,
                attempt=st.attempt + 1,
            )
        elif command == "abort":
            if st.phase in (Phase.IDLE, Phase.DONE):
                raise IllegalTransition(f"abort illegal in {st.phase.value}")
            events.append(ProtocolEvent(now_ns, "session", "abort"))
            st = replace(st, phase=Phase.DONE, phase_started_ns=now_ns)
        st = replace(st, now_ns=now_ns)
        self.state = st
        return events

    def keypoint(self, kind: str, text: str, now_ns: int) -> ProtocolEvent:
        """Operator-marked event; crash keypoints also pause the task."""
        if kind not in KEYPOINT_KINDS:
            raise IllegalTransition(f"unknown keypoint kind {kind!r}")
        if self.state.phase in (Phase.IDLE, Phase.DONE):
            raise NoActiveSession(f"keypoint while {self.state.phase.value}")
        return ProtocolEvent(now_ns, kind, text)

    def snapshot(self) -> dict:
        st = self.state
        return {
            "phase": st.phase.value,
            "elapsed_s": round(st.elapsed_s(), 3),
            "task_n": st.task_n,
            "task_name": TASK_NAMES.get(st.task_n or 0),
            "task_complete": st.task_complete,
            "attempt": st.attempt,
            "fixation_target": st.fixation_target,
            "fixations_complete": st.fixations_complete,
            "task_order": list(st.task_order),
            "baseline_min_s": BASELINE_MIN_S,
            "fixation_s": FIXATION_S,
            "task_s": TASK_S,
        }


@dataclass(frozen=True)
class Keypoint:
    host_ns: int
    kind: str
    text: str


def lap_count(keypoints: Sequence[Keypoint], interval_ns: tuple[int, int]) -> int:
    a, b = interval_ns
    return sum(
        1 for k in keypoints if k.kind == "lap_completed" and a <= k.host_ns < b
    )


@dataclass(frozen=True)
class SessionMeta:
    session_id: str
    person_id: str
    expertise_hours: float = 0.0
    participant_index: int = 0
    created_ns: int = 0
    device: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.expertise_hours < 0:
            raise InvalidConfig("expertise_hours must be >= 0")

    def task_order(self) -> tuple[int, ...]:
        return assign_counterbalance(self.participant_index)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "person_id": self.person_id,
            "expertise_hours": self.expertise_hours,
            "participant_index": self.participant_index,
            "created_ns": self.created_ns,
            "device": dict(self.device),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionMeta":
        return cls(
            session_id=d["session_id"],
            person_id=d["person_id"],
            expertise_hours=float(d.get("expertise_hours", 0.0)),
            participant_index=int(d.get("participant_index", 0)),
            created_ns=int(d.get("created_ns", 0)),
            device=dict(d.get("device", {})),
        )
