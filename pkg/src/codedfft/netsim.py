"""Round-based simulator of a fully-connected, one-port duplex cluster.

A schedule is a list of rounds; each round is a list of :class:`Transfer`.
Within a round every node sends at most once and receives at most once.
Payloads are named blocks held in per-node dictionaries; a transfer either
copies the named blocks to the receiver or adds them into the receiver's
blocks of the same name (used by reductions).
"""

import logging
from dataclasses import dataclass, field

from .cost import CostLedger, RoundRecord

log = logging.getLogger(__name__)

COPY = "copy"
ADD = "add"


@dataclass(frozen=True)
class Transfer:
    src: int
    dst: int
    labels: tuple
    symbols: int
    mode: str = COPY


@dataclass
class RoundSchedule:
    rounds: list = field(default_factory=list)
    stage: str = ""

    def __len__(self):
        return len(self.rounds)

    def nodes(self):
        out = set()
        for rnd in self.rounds:
            for t in rnd:
                out.update((t.src, t.dst))
        return out


@dataclass(frozen=True)
class OnePortViolation:
    round: int
    node: int
    kind: str  # "send" or "receive"

    def __str__(self):
        return f"round {self.round}: node {self.node} has more than one {self.kind}"


def validate_one_port(schedule):
    """Return the list of violations (empty means the schedule is valid)."""
    bad = []
    for i, rnd in enumerate(schedule.rounds):
        senders, receivers = set(), set()
        for t in rnd:
            if t.src == t.dst:
                bad.append(OnePortViolation(i, t.src, "self-send"))
            if t.src in senders:
                bad.append(OnePortViolation(i, t.src, "send"))
            if t.dst in receivers:
                bad.append(OnePortViolation(i, t.dst, "receive"))
            senders.add(t.src)
            receivers.add(t.dst)
    return bad


# -- schedule algebra -------------------------------------------------------


def remap(schedule, mapping, stage=None):
    """Rename local node indices through ``mapping`` (sequence or dict)."""
    rounds = [
        [Transfer(mapping[t.src], mapping[t.dst], t.labels, t.symbols, t.mode) for t in rnd]
        for rnd in schedule.rounds
    ]
    return RoundSchedule(rounds, schedule.stage if stage is None else stage)


def relabel(schedule, fn):
    rounds = [
        [Transfer(t.src, t.dst, tuple(fn(lb) for lb in t.labels), t.symbols, t.mode) for t in rnd]
        for rnd in schedule.rounds
    ]
    return RoundSchedule(rounds, schedule.stage)


def parallel(*schedules, stage=None):
    """Run schedules side by side, round ``i`` of each in round ``i``.

    Callers guarantee disjoint node sets, so one-port validity is preserved.
    """
    depth = max((len(s) for s in schedules), default=0)
    rounds = [[] for _ in range(depth)]
    for s in schedules:
        for i, rnd in enumerate(s.rounds):
            rounds[i].extend(rnd)
    st = stage if stage is not None else (schedules[0].stage if schedules else "")
    return RoundSchedule(rounds, st)


def sequence(*schedules, stage=None):
    rounds = []
    for s in schedules:
        rounds.extend(s.rounds)
    st = stage if stage is not None else (schedules[0].stage if schedules else "")
    return RoundSchedule(rounds, st)


def schedule_ledger(schedule, stage=None):
    """Ledger from the declared transfer sizes; empty rounds are not counted."""
    st = schedule.stage if stage is None else stage
    ledger = CostLedger()
    for rnd in schedule.rounds:
        if not rnd:
            continue
        ok = not validate_one_port(RoundSchedule([rnd]))
        ledger.rounds.append(RoundRecord(st, tuple((t.src, t.dst, t.symbols) for t in rnd), ok))
    return ledger


# -- faults -------------------------------------------------------------------


@dataclass(frozen=True)
class FaultEvent:
    stage: str
    node: int
    kind: str  # "erasure" or "straggler"
    delay: float = 0.0


@dataclass
class FaultScenario:
    events: list = field(default_factory=list)

    @classmethod
    def none(cls):
        return cls([])

    def erased(self, stage):
        return {e.node for e in self.events if e.stage == stage and e.kind == "erasure"}

    def delays(self, stage):
        out = {}
        for e in self.events:
            if e.stage == stage and e.kind == "straggler":
                out[e.node] = out.get(e.node, 0.0) + e.delay
        return out

    def stages(self):
        return sorted({e.stage for e in self.events})

    def completion_times(self, stage, nodes):
        """Finish time per node for a compute stage; erased nodes never finish."""
        erased = self.erased(stage)
        delays = self.delays(stage)
        return {n: (float("inf") if n in erased else delays.get(n, 0.0)) for n in nodes}

    def first_k(self, stage, nodes, K):
        """The K earliest finishers, ties broken by lowest node id; None if fewer than K finish."""
        times = self.completion_times(stage, nodes)
        ranked = sorted((t, n) for n, t in times.items() if t != float("inf"))
        if len(ranked) < K:
            return None
        return sorted(n for _, n in ranked[:K])

    def to_text(self):
        lines = []
        for e in self.events:
            row = f"{e.stage},{e.node},{e.kind}"
            if e.kind == "straggler":
                row += f",{e.delay:g}"
            lines.append(row)
        return "\n".join(lines) + ("\n" if lines else "")


class FaultFileError(ValueError):
    pass


def parse_faults(text):
    """Parse ``stage,node,kind[,delay]`` records; blank lines and ``#`` comments are skipped."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 4):
            raise FaultFileError(f"line {lineno}: expected stage,node,kind[,delay]")
        stage, node, kind = parts[:3]
        try:
            node = int(node)
        except ValueError:
            raise FaultFileError(f"line {lineno}: node must be an integer, got {node!r}") from None
        if node < 0:
            raise FaultFileError(f"line {lineno}: negative node id")
        if kind not in ("erasure", "straggler"):
            raise FaultFileError(f"line {lineno}: kind must be erasure or straggler")
        delay = 0.0
        if kind == "straggler":
            if len(parts) != 4:
                raise FaultFileError(f"line {lineno}: straggler needs a delay")
            delay = float(parts[3])
            if delay < 0:
                raise FaultFileError(f"line {lineno}: negative delay")
        elif len(parts) == 4:
            raise FaultFileError(f"line {lineno}: erasure takes no delay")
        events.append(FaultEvent(stage, node, kind, delay))
    return FaultScenario(events)


def load_faults(path):
    with open(path) as fh:
        return parse_faults(fh.read())


# -- execution ----------------------------------------------------------------


class ScheduleError(RuntimeError):
    pass


class NodeStore(dict):
    """``node id -> {label: ndarray}``."""

    def put(self, node, label, value):
        self.setdefault(node, {})[label] = value

    def get_block(self, node, label):
        return self[node][label]


def run_schedule(store, schedule, erased=frozenset()):
    """Execute ``schedule`` on ``store`` in place and return ``(store, ledger)``.

    Transfers into an erased node are dropped; a transfer out of one is an error
    since no surviving node holds that data.
    """
    bad = validate_one_port(schedule)
    if bad:
        raise ScheduleError(f"schedule violates one-port model: {bad[0]}")
    ledger = CostLedger()
    for i, rnd in enumerate(schedule.rounds):
        if not rnd:
            continue
        staged = []
        records = []
        for t in rnd:
            if t.src in erased:
                raise ScheduleError(f"round {i}: erased node {t.src} is a required sender")
            src = store.get(t.src, {})
            try:
                payload = [(lb, src[lb]) for lb in t.labels]
            except KeyError as exc:
                raise ScheduleError(f"round {i}: node {t.src} does not hold {exc.args[0]!r}") from None
            records.append((t.src, t.dst, int(sum(v.size for _, v in payload))))
            if t.dst not in erased:
                staged.append((t, payload))
        # receive after all sends so a round reads pre-round state
        for t, payload in staged:
            dst = store.setdefault(t.dst, {})
            for lb, v in payload:
                if t.mode == ADD and lb in dst:
                    dst[lb] = dst[lb] + v
                else:
                    # blocks are never mutated in place, so sharing is safe
                    dst[lb] = v
        ledger.rounds.append(RoundRecord(schedule.stage, tuple(records), True))
    return store, ledger
