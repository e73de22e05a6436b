"""Uncoded and MDS-coded transpose FFT executed on the cluster simulator.

Node ``i`` of the first ``K`` starts with column block ``i`` of the input
matrix. Every communication step runs through :func:`netsim.run_schedule`,
so the returned ledger holds the measured rounds of each stage.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .collectives import all_to_all, execute_multi_reduce, multi_reduce
from .cost import CostLedger, CostParams, crossover_check
from .dft import DftPlan, col_fft, hadamard, matrix_to_vector, row_fft, twiddle_matrix, vector_to_matrix
from .mds import decode_from_surviving, encode_blocks, make_systematic_mds
from .netsim import FaultScenario, NodeStore, remap, run_schedule, schedule_ledger

log = logging.getLogger(__name__)

STAGES = ("rearrange", "rowfft", "transpose", "twiddle", "encode2", "colfft")
# compute stages whose losses the codes can absorb
PROTECTED = ("rowfft", "colfft")
MAX_AUTO_SEGMENTS = 64


@dataclass
class PipelineResult:
    output: object  # ndarray of length N, or None when unrecoverable
    ledger: CostLedger
    recoverable: bool
    survivors: dict = field(default_factory=dict)  # stage -> node ids used
    decoded: dict = field(default_factory=dict)  # stage -> True if a parity block was needed
    events: list = field(default_factory=list)
    reason: str = ""
    segments: int = 1


def _check_faults(faults, nodes):
    for e in faults.events:
        if e.stage not in STAGES:
            raise ValueError(f"unknown fault stage {e.stage!r}; expected one of {', '.join(STAGES)}")
        if not 0 <= e.node < nodes:
            raise ValueError(f"fault names node {e.node}, cluster has {nodes} nodes")


def _transpose(blocks_by_node, nodes, stage, regime):
    """All-to-all among ``nodes``: ``blocks_by_node[m][c]`` travels from
    ``nodes[m]`` to ``nodes[c]``. Returns ``(received, ledger)`` with
    ``received[c][m]`` the block from ``nodes[m]``."""
    p = len(nodes)
    size = blocks_by_node[0][0].size
    sched = remap(all_to_all(p, p * size, regime), nodes, stage)
    store = NodeStore()
    for m in range(p):
        for c in range(p):
            store.put(nodes[m], ("a2a", m, c), blocks_by_node[m][c])
    _, ledger = run_schedule(store, sched)
    return [[store[nodes[c]][("a2a", m, c)] for m in range(p)] for c in range(p)], ledger


def _split_rows(A, parts):
    return np.split(A, parts, axis=0)


def _split_cols(A, parts):
    return np.split(A, parts, axis=1)


def _lost(faults, stage, nodes):
    return sorted(set(nodes) & faults.erased(stage))


def run_uncoded(x, plan, faults=None, regime="min-rounds"):
    """Transpose algorithm on nodes ``0..K-1``; any erasure there is fatal."""
    faults = FaultScenario.none() if faults is None else faults
    _check_faults(faults, plan.P)
    K = plan.K
    nodes = list(range(K))
    res = PipelineResult(None, CostLedger(), False)

    def fail(stage, lost):
        res.reason = f"erasure at stage {stage} on nodes {lost}: uncoded pipeline cannot recover"
        res.events.append(res.reason)
        return res

    X = vector_to_matrix(x, plan)
    # node i holds X^(col)_i; it sends row block j of it to node j
    cols = _split_cols(X, K)
    recv, led = _transpose([_split_rows(c, K) for c in cols], nodes, "rearrange", regime)
    res.ledger.extend(led)
    if lost := _lost(faults, "rearrange", nodes):
        return fail("rearrange", lost)
    rows = [np.hstack(recv[i]) for i in range(K)]

    Y = [row_fft(r) for r in rows]
    if lost := _lost(faults, "rowfft", nodes):
        return fail("rowfft", lost)

    recv, led = _transpose([_split_cols(y, K) for y in Y], nodes, "transpose", regime)
    res.ledger.extend(led)
    if lost := _lost(faults, "transpose", nodes):
        return fail("transpose", lost)
    Yc = [np.vstack(recv[c]) for c in range(K)]

    T = _split_cols(twiddle_matrix(plan), K)
    Yc = [hadamard(T[c], Yc[c]) for c in range(K)]
    if lost := _lost(faults, "twiddle", nodes):
        return fail("twiddle", lost)

    Z = [col_fft(y) for y in Yc]
    if lost := _lost(faults, "colfft", nodes):
        return fail("colfft", lost)
    res.output = matrix_to_vector(np.hstack(Z), plan)
    res.recoverable = True
    res.survivors = {"rowfft": nodes, "colfft": nodes}
    return res


def _divisors(n, cap):
    return [d for d in range(1, min(n, cap) + 1) if n % d == 0]


def _encode2_plans(K, r, n, s, coefficients):
    """Multi-reduce plans for ``r`` parity targets. When ``r > K`` the targets
    are served in consecutive batches of at most ``K``."""
    plans = []
    for lo in range(0, r, K):
        hi = min(r, lo + K)
        plans.append((list(range(lo, hi)), multi_reduce(K, hi - lo, n, s, coefficients[lo:hi], external_targets=True)))
    return plans


def encode2_ledger(K, P, n, s, coefficients=None):
    """Dry-run ledger of the distributed parity encoding (no data moved)."""
    coefficients = np.ones((P - K, K)) if coefficients is None else coefficients
    ledger = CostLedger()
    for _, mr in _encode2_plans(K, P - K, n, s, coefficients):
        ledger.extend(schedule_ledger(mr.schedule, "encode2"))
    return ledger


def choose_segments(K, P, n, params, cap=MAX_AUTO_SEGMENTS):
    """Segment count among the divisors of ``n`` (up to ``cap``) with the
    cheapest encode2 schedule; ties go to the smaller count."""
    best = None
    for s in _divisors(n, cap):
        t = encode2_ledger(K, P, n, s).time(params)
        if best is None or t < best[0]:
            best = (t, s)
    return best[1]


def run_coded(x, plan, code1=None, code2=None, faults=None, segments="auto", params=None, regime="min-rounds", hoist_encode2=False):
    """Coded transpose FFT over ``P`` nodes.

    ``hoist_encode2`` computes the second parity blocks before the twiddle
    step; it exists only to show that this ordering is wrong.
    """
    K, P = plan.K, plan.P
    code1 = make_systematic_mds(P, K) if code1 is None else code1
    code2 = make_systematic_mds(P, K) if code2 is None else code2
    for c in (code1, code2):
        if (c.P, c.K) != (P, K):
            raise ValueError(f"code is ({c.P},{c.K}) but plan needs ({P},{K})")
    faults = FaultScenario.none() if faults is None else faults
    _check_faults(faults, P)
    params = CostParams(1.0, 1.0) if params is None else params
    n = plan.N // K
    s = choose_segments(K, P, n, params) if segments == "auto" else int(segments)
    if s < 1 or n % s:
        raise ValueError(f"segments={s} must divide N/K={n}")
    res = PipelineResult(None, CostLedger(), False, segments=s)

    def fail(msg):
        res.reason = msg
        res.events.append(msg)
        return res

    def unprotected(stage, nodes):
        assert stage not in PROTECTED
        lost = _lost(faults, stage, nodes)
        return lost and fail(f"erasure at unprotected stage {stage} on nodes {lost}")

    X = vector_to_matrix(x, plan)
    # step 1: node i < K encodes its column block down the rows (local)
    send = [encode_blocks(code1, _split_rows(Xi, K)) for Xi in _split_cols(X, K)]

    # step 2: coded rows go to all P nodes; only the first K hold data
    size = send[0][0].size
    sched = remap(all_to_all(P, P * size, regime, senders=range(K)), list(range(P)), "rearrange")
    store = NodeStore()
    for i in range(K):
        for j in range(P):
            store.put(i, ("a2a", i, j), send[i][j])
    _, led = run_schedule(store, sched)
    res.ledger.extend(led)
    if unprotected("rearrange", range(P)):
        return res
    Xt = [np.hstack([store[j][("a2a", i, j)] for i in range(K)]) for j in range(P)]

    # step 3, 4: row FFTs, keep the first K finishers
    Yt = [row_fft(b) for b in Xt]
    S = faults.first_k("rowfft", range(P), K)
    if S is None:
        return fail(f"fewer than K={K} nodes finished stage rowfft")
    res.survivors["rowfft"] = S
    res.events.append(f"rowfft survivors {S}")

    # step 5: transpose among survivors
    recv, led = _transpose([_split_cols(Yt[j], K) for j in S], S, "transpose", regime)
    res.ledger.extend(led)
    if unprotected("transpose", S):
        return res

    # step 6: local column decode at survivor S[c]
    res.decoded["rowfft"] = any(j >= K for j in S)
    Yc = [np.vstack(decode_from_surviving(code1, list(zip(S, recv[c])))) for c in range(K)]
    if res.decoded["rowfft"]:
        res.events.append("decoded Y from parity rows")

    T = _split_cols(twiddle_matrix(plan), K)
    targets = [j for j in range(P) if j not in S]
    holders = list(S) + targets  # codeword index -> physical node
    coeffs = code2.parity.T

    def encode(blocks):
        out = [None] * (P - K)
        for idx, mr in _encode2_plans(K, P - K, n, s, coeffs):
            node_map = list(S) + [targets[i] for i in idx]
            parts, led = execute_multi_reduce(mr, [b.reshape(-1) for b in blocks], coeffs[idx], node_map=node_map, stage="encode2")
            res.ledger.extend(led)
            for i, v in zip(idx, parts):
                out[i] = v.reshape(blocks[0].shape)
        return out

    if hoist_encode2:
        coded = Yc + encode(Yc)
        coded = [hadamard(T[i % K], b) for i, b in enumerate(coded)]
        if unprotected("twiddle", holders) or unprotected("encode2", holders):
            return res
    else:
        # step 7: twiddle; step 8: row-wise parity to the idle nodes
        Yc = [hadamard(T[c], Yc[c]) for c in range(K)]
        if unprotected("twiddle", S):
            return res
        coded = Yc + encode(Yc)
        if unprotected("encode2", holders):
            return res

    # step 9, 10: column FFTs on all P holders, keep the first K
    Zt = [col_fft(b) for b in coded]
    F = faults.first_k("colfft", range(P), K)
    if F is None:
        return fail(f"fewer than K={K} nodes finished stage colfft")
    where = {node: i for i, node in enumerate(holders)}
    used = sorted(where[f] for f in F)
    res.survivors["colfft"] = list(F)
    res.events.append(f"colfft survivors {res.survivors['colfft']}")

    # step 11: decode locally (not ledgered)
    res.decoded["colfft"] = any(i >= K for i in used)
    Z = decode_from_surviving(code2, [(i, Zt[i]) for i in used])
    res.output = matrix_to_vector(np.hstack(Z), plan)
    res.recoverable = True
    return res


def stage_cost_report(result, params):
    """Rows ``(stage, C1, C2, time)`` in stage order plus a ``total`` row."""
    rows = []
    for st in result.ledger.stages():
        led = result.ledger.restricted(st)
        rows.append((st, led.C1, led.C2, led.time(params)))
    rows.append(("total", result.ledger.C1, result.ledger.C2, result.ledger.time(params)))
    return rows


def dry_ledgers(plan, params, segments="auto", regime="min-rounds"):
    """Fault-free ledgers built from the schedules alone (no data moved).

    Returns ``(uncoded, coded, segments)``; stage labels match the executed
    pipelines, so per-stage figures agree with a real run.
    """
    K, P = plan.K, plan.P
    n = plan.N // K
    s = choose_segments(K, P, n, params) if segments == "auto" else int(segments)
    if s < 1 or n % s:
        raise ValueError(f"segments={s} must divide N/K={n}")
    block = plan.N // (K * K)
    uncoded = CostLedger()
    uncoded.extend(schedule_ledger(all_to_all(K, K * block, regime), "rearrange"))
    uncoded.extend(schedule_ledger(all_to_all(K, K * block, regime), "transpose"))
    coded = CostLedger()
    coded.extend(schedule_ledger(all_to_all(P, P * block, regime, senders=range(K)), "rearrange"))
    coded.extend(schedule_ledger(all_to_all(K, K * block, regime), "transpose"))
    coded.extend(encode2_ledger(K, P, n, s))
    return uncoded, coded, s


@dataclass(frozen=True)
class Overhead:
    encode2_time: float
    transpose_time: float
    predicted: bool
    measured: bool
    segments: int


def overhead_comparison(K, P, N, params, segments="auto", x=None, dry_run=False):
    """Measured encode2 stage against the measured transpose stage.

    With ``dry_run`` the two ledgers come from the schedules alone, which is
    how large sweeps stay cheap; the full run executes the coded pipeline.
    """
    plan = DftPlan.square(N, K, P)
    if dry_run:
        _, led, s = dry_ledgers(plan, params, segments)
    else:
        if x is None:
            x = random_input(N, 0)
        r = run_coded(x, plan, params=params, segments=segments)
        led, s = r.ledger, r.segments
    te = led.restricted("encode2").time(params)
    tt = led.restricted("transpose").time(params)
    return Overhead(te, tt, crossover_check(P, K), te < tt, s)


def random_input(N, seed):
    """Seeded complex samples, uniform on the unit square."""
    rng = np.random.default_rng(seed)
    return rng.random(N) + 1j * rng.random(N)
