"""Schedule generators for the collective operations, plus small executors
that load messages into a :class:`NodeStore`, run a schedule and read the
result back.

Generators work on local node indices ``0..p-1``; callers place them on
physical nodes with :func:`netsim.remap`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cost import clog2
from .netsim import ADD, NodeStore, RoundSchedule, Transfer, parallel, remap, run_schedule, sequence


def is_pow2(x):
    return x >= 1 and not x & (x - 1)


def _require_pow2(name, x):
    if not is_pow2(x):
        raise ValueError(f"{name}={x} must be a power of two")


def _split(vec, s):
    return np.split(np.asarray(vec).reshape(-1), s)


# -- all-to-all -----------------------------------------------------------------


def all_to_all_bruck(p, n, senders=None, strict=True):
    """Index-rotation Bruck all-to-all: ``ceil(log2 p)`` rounds.

    Node ``i`` starts with blocks ``("a2a", i, j)`` of ``n/p`` symbols, one per
    destination ``j``. In step ``k`` every node forwards to ``i + 2**k`` the
    blocks whose offset ``(j - i0) mod p`` has bit ``k`` set.  ``senders``
    restricts which nodes hold outgoing data (the others contribute nothing).
    With ``strict`` only powers of two are accepted; the rotation itself is
    valid for any ``p``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if strict:
        _require_pow2("p", p)
    if n % p:
        raise ValueError(f"p={p} must divide n={n}")
    size = n // p
    srcs = range(p) if senders is None else sorted(senders)
    where = {("a2a", i, j): i for i in srcs for j in range(p)}
    rounds = []
    k = 0
    while (1 << k) < p:
        step = 1 << k
        out = {}
        for lb, node in where.items():
            _, i, j = lb
            if ((j - i) % p) >> k & 1:
                out.setdefault(node, []).append(lb)
        rnd = []
        for node in sorted(out):
            labels = tuple(sorted(out[node]))
            dst = (node + step) % p
            rnd.append(Transfer(node, dst, labels, size * len(labels)))
            for lb in labels:
                where[lb] = dst
        rounds.append(rnd)
        k += 1
    return RoundSchedule(rounds, "all-to-all")


def all_to_all_pairwise(p, n, senders=None):
    """``p - 1`` rounds; in round ``k`` node ``i`` sends its block for ``i + k``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if n % p:
        raise ValueError(f"p={p} must divide n={n}")
    size = n // p
    srcs = range(p) if senders is None else sorted(senders)
    rounds = [
        [Transfer(i, (i + k) % p, (("a2a", i, (i + k) % p),), size) for i in srcs]
        for k in range(1, p)
    ]
    return RoundSchedule(rounds, "all-to-all")


def all_to_all(p, n, regime="min-rounds", senders=None):
    """Bruck schedule (any ``p``) or the pairwise exchange, by regime."""
    if regime == "min-rounds":
        return all_to_all_bruck(p, n, senders, strict=False)
    if regime == "min-bandwidth":
        return all_to_all_pairwise(p, n, senders)
    raise ValueError(f"unknown regime {regime!r}")


def execute_all_to_all(blocks, schedule):
    """``blocks[i][j]`` is node i's block for node j; returns ``out[j][i]`` and the ledger."""
    p = len(blocks)
    store = NodeStore()
    for i in range(p):
        for j in range(p):
            store.put(i, ("a2a", i, j), np.asarray(blocks[i][j]))
    _, ledger = run_schedule(store, schedule)
    return [[store[j][("a2a", i, j)] for i in range(p)] for j in range(p)], ledger


# -- broadcast / reduce -----------------------------------------------------------


def _circulant_skips(p):
    q = clog2(p)
    sk = [0] * (q + 1)
    sk[q] = p
    for k in range(q - 1, -1, -1):
        sk[k] = (sk[k + 1] + 1) // 2
    return q, sk


def _circulant_broadcast(p, s):
    """Root 0 injects segment ``i`` in round ``i``; in round ``i`` node ``r``
    talks to ``r + skip[i mod q]`` and forwards the highest segment its
    partner lacks. Returns rounds of ``(src, dst, segment)``."""
    q, sk = _circulant_skips(p)
    full = (1 << s) - 1
    have = [0] * p
    have[0] = full
    rounds = []
    i = 0
    limit = 4 * (q + s) + 8
    while any(h != full for h in have):
        if i > limit:
            raise RuntimeError(f"broadcast schedule for p={p}, s={s} did not converge")
        k = i % q
        moves = []
        for r in range(p):
            d = (r + sk[k]) % p
            if d == 0:
                continue
            lacking = have[r] & ~have[d]
            if not lacking:
                continue
            if r == 0 and i < s and lacking >> i & 1:
                b = i
            else:
                b = lacking.bit_length() - 1
            moves.append((r, d, b))
        for _, d, b in moves:
            have[d] |= 1 << b
        rounds.append(moves)
        i += 1
    return rounds


def _fold_broadcast(p, s):
    """Power-of-two core broadcast, then each extra node gets all segments
    from its buddy in one final round."""
    H = 1 << (p.bit_length() - 1)
    rounds = _circulant_broadcast(H, s) if H > 1 else []
    last = [(x - H, x, tuple(range(s))) for x in range(H, p)]
    return [list(r) for r in rounds] + [last]


def _segment_cost(rounds, s):
    # C1 + C2 in units of one segment; chooses between constructions
    c2 = sum(max((len(m[2]) if isinstance(m[2], tuple) else 1) for m in r) for r in rounds if r)
    return sum(1 for r in rounds if r) + c2


def broadcast_rounds(p, s):
    """Rounds of ``(src, dst, segment or tuple of segments)`` from root 0.

    Powers of two get ``ceil(log2 p) + s - 1`` rounds. Other sizes use the
    cheaper of the circulant schedule and the fold construction.
    """
    if p < 1 or s < 1:
        raise ValueError("need p >= 1 and s >= 1")
    if p == 1:
        return []
    circ = _circulant_broadcast(p, s)
    if is_pow2(p):
        return circ
    fold = _fold_broadcast(p, s)
    return circ if _segment_cost(circ, s) <= _segment_cost(fold, s) else fold


def _segs(b):
    return b if isinstance(b, tuple) else (b,)


def broadcast_pipelined(p, n, s=1, root=0):
    """Pipelined broadcast of ``s`` segments ``("seg", t)`` of ``n/s`` symbols."""
    if s < 1 or n % s:
        raise ValueError(f"segment count s={s} must be >= 1 and divide n={n}")
    size = n // s
    rot = [(x + root) % p for x in range(p)]
    rounds = [
        [Transfer(rot[a], rot[b], tuple(("seg", t) for t in _segs(m)), size * len(_segs(m))) for a, b, m in rnd]
        for rnd in broadcast_rounds(p, s)
    ]
    return RoundSchedule(rounds, "broadcast")


def reduce_reversed(p, n, s=1, root=0, coefficients=None):
    """Reduction obtained by running the broadcast backwards.

    Every broadcast edge ``u -> v`` for segment ``t`` becomes ``v -> u`` adding
    ``v``'s partial sum of segment ``t`` into ``u``. The coefficients are
    applied when the partials are loaded (see :func:`execute_reduce`); the
    schedule itself does not depend on them.
    """
    if coefficients is not None and len(coefficients) != p:
        raise ValueError(f"expected {p} coefficients, got {len(coefficients)}")
    fwd = broadcast_pipelined(p, n, s, root)
    rounds = [[Transfer(t.dst, t.src, t.labels, t.symbols, ADD) for t in rnd] for rnd in reversed(fwd.rounds)]
    return RoundSchedule(rounds, "reduce")


def execute_broadcast(message, p, s=1, root=0):
    message = np.asarray(message).reshape(-1)
    sched = broadcast_pipelined(p, message.size, s, root)
    store = NodeStore()
    for t, seg in enumerate(_split(message, s)):
        store.put(root, ("seg", t), seg)
    _, ledger = run_schedule(store, sched)
    out = [np.concatenate([store[x][("seg", t)] for t in range(s)]) for x in range(p)]
    return out, ledger


def execute_reduce(messages, s=1, root=0, coefficients=None):
    p = len(messages)
    coefficients = np.ones(p) if coefficients is None else np.asarray(coefficients)
    n = np.asarray(messages[0]).size
    sched = reduce_reversed(p, n, s, root, coefficients)
    store = NodeStore()
    for x, m in enumerate(messages):
        for t, seg in enumerate(_split(coefficients[x] * np.asarray(m), s)):
            store.put(x, ("seg", t), seg)
    _, ledger = run_schedule(store, sched)
    return np.concatenate([store[root][("seg", t)] for t in range(s)]), ledger


# -- all-gather -------------------------------------------------------------------


def all_gather_rd(r, n, held=None, size=None):
    """Recursive doubling: in step ``k`` node ``i`` swaps everything with ``i xor 2**k``.

    ``held[i]`` lists the labels node ``i`` contributes (default ``("msg", i)``)
    and ``size`` is the symbol count per label (default ``n``).
    """
    _require_pow2("r", r)
    held = [[("msg", i)] for i in range(r)] if held is None else [list(h) for h in held]
    size = n if size is None else size
    rounds = []
    step = 1
    while step < r:
        rnd = []
        nxt = [list(h) for h in held]
        for i in range(r):
            j = i ^ step
            if held[i]:
                rnd.append(Transfer(i, j, tuple(held[i]), size * len(held[i])))
            nxt[j] = nxt[j] + held[i]
        held = nxt
        rounds.append(rnd)
        step <<= 1
    return RoundSchedule(rounds, "all-gather")


def all_gather_bruck(c, n, held=None, size=None):
    """Bruck concatenation all-gather for any ``c``: ``ceil(log2 c)`` rounds,
    ``(c-1)`` messages received per node in total."""
    if c < 1:
        raise ValueError("c must be >= 1")
    held = [[("msg", i)] for i in range(c)] if held is None else [list(h) for h in held]
    size = n if size is None else size
    # window[i] = slots i, i+1, ... (mod c) node i has collected, in order
    window = [[i] for i in range(c)]
    rounds = []
    step = 1
    while step < c:
        cnt = min(step, c - step)
        rnd = []
        nxt = [list(w) for w in window]
        for i in range(c):
            src = (i + step) % c
            slots = window[src][:cnt]
            labels = tuple(lb for sl in slots for lb in held[sl])
            if labels:
                rnd.append(Transfer(src, i, labels, size * len(labels)))
            nxt[i] = window[i] + slots
        window = nxt
        rounds.append(rnd)
        step <<= 1
    return RoundSchedule(rounds, "all-gather")


def all_gather(c, n, held=None, size=None):
    if is_pow2(c):
        return all_gather_rd(c, n, held, size)
    return all_gather_bruck(c, n, held, size)


def execute_all_gather(messages, schedule):
    store = NodeStore()
    for i, m in enumerate(messages):
        store.put(i, ("msg", i), np.asarray(m))
    _, ledger = run_schedule(store, schedule)
    return [[store[x][("msg", i)] for i in range(len(messages))] for x in range(len(messages))], ledger


# -- multi-broadcast / multi-reduce ---------------------------------------------


def _check_groups(p, r):
    if not 1 <= r <= p:
        raise ValueError(f"need 1 <= r <= p, got r={r}, p={p}")
    if p % r:
        raise ValueError(f"r={r} must divide p={p}")
    _require_pow2("r", r)
    _require_pow2("p/r", p // r)


def multi_broadcast(p, r, n, s=1, external_sources=False):
    """Broadcaster ``i`` serves group ``S_i = [i*p/r, (i+1)*p/r)``.

    By default broadcaster ``i`` is the first member of ``S_i``; with
    ``external_sources`` it is node ``p + i`` outside the destinations and
    roots a broadcast over itself plus ``S_i``. Stage 1 broadcasts
    ``("msg", i, t)`` inside each group; stage 2 runs an all-gather among the
    ``j``-th members of all groups.
    """
    _check_groups(p, r)
    if s < 1 or n % s:
        raise ValueError(f"segment count s={s} must divide n={n}")
    m = p // r
    stage1 = []
    for i in range(r):
        group = [i * m + x for x in range(m)]
        if external_sources:
            group = [p + i] + group
        b = broadcast_pipelined(len(group), n, s)
        rounds = [
            [Transfer(t.src, t.dst, tuple(("msg", i, lb[1]) for lb in t.labels), t.symbols) for t in rnd]
            for rnd in b.rounds
        ]
        stage1.append(remap(RoundSchedule(rounds), group))
    held = [[("msg", i, t) for t in range(s)] for i in range(r)]
    stage2 = [remap(all_gather_rd(r, n, held, n // s), [i * m + j for i in range(r)]) for j in range(m)]
    return sequence(parallel(*stage1), parallel(*stage2), stage="multi-broadcast")


def execute_multi_broadcast(messages, p, s=1, external_sources=False):
    """Returns ``(out, ledger, schedule)`` with ``out[x][i]`` message ``i`` at destination ``x``."""
    r = len(messages)
    n = np.asarray(messages[0]).size
    sched = multi_broadcast(p, r, n, s, external_sources)
    m = p // r
    store = NodeStore()
    for i, msg in enumerate(messages):
        for t, seg in enumerate(_split(msg, s)):
            store.put(p + i if external_sources else i * m, ("msg", i, t), seg)
    _, ledger = run_schedule(store, sched)
    out = [[np.concatenate([store[x][("msg", i, t)] for t in range(s)]) for i in range(r)] for x in range(p)]
    return out, ledger, sched


@dataclass
class MultiReducePlan:
    """Two-stage multi-reduce over local nodes.

    Data nodes are ``0..p-1``. With external targets the reduction nodes are
    ``p..p+r-1``; otherwise reduction node ``i`` is the first member of group ``i``.
    """

    p: int
    r: int
    n: int
    s: int
    gather: RoundSchedule
    reduce: RoundSchedule
    rows: list  # rows[i] = data nodes of group i
    partials: dict  # node -> (group, data node ids it combines)
    results: list  # results[i] = node that ends with combination i
    external: bool = False
    members: list = field(default_factory=list)  # reduce participants per group

    @property
    def schedule(self):
        return sequence(self.gather, self.reduce, stage="multi-reduce")


def _reduce_then_forward(members, root_pos, target, n, s):
    """Reduce among ``members`` to ``members[root_pos]``; if ``target`` is given,
    the root forwards each finished segment to it (its send port is idle)."""
    sched = remap(reduce_reversed(len(members), n, s, root_pos), members)
    if target is None:
        return sched
    root = members[root_pos]
    done = {t: -1 for t in range(s)}
    for i, rnd in enumerate(sched.rounds):
        for tr in rnd:
            if tr.dst == root:
                for lb in tr.labels:
                    done[lb[1]] = i
    rounds = [list(r) for r in sched.rounds]
    slot = -1
    size = n // s
    for t in sorted(range(s), key=lambda t: (done[t], t)):
        slot = max(slot + 1, done[t] + 1)
        while len(rounds) <= slot:
            rounds.append([])
        rounds[slot].append(Transfer(root, target, (("seg", t),), size, ADD))
    return RoundSchedule(rounds)


def multi_reduce(p, r, n, s=1, coefficients=None, external_targets=False):
    """Plan a multi-reduce: reduction ``i`` ends with ``sum_l a[i, l] * M_l``.

    Stage 1 all-gathers raw messages among the ``j``-th members of every
    group; each node then forms its partial combination locally; stage 2
    reduces partials within each group.

    Without external targets the groups are equal power-of-two blocks.  With
    them, any ``r <= p`` works: groups differ in size by at most one and the
    target of a short group fills its missing all-gather slot.
    """
    if s < 1 or n % s:
        raise ValueError(f"segment count s={s} must divide n={n}")
    if coefficients is not None and np.shape(coefficients) != (r, p):
        raise ValueError(f"coefficients must be {r}x{p}, got {np.shape(coefficients)}")
    if not external_targets:
        _check_groups(p, r)
    elif not 1 <= r <= p:
        raise ValueError(f"need 1 <= r <= p, got r={r}, p={p}")
    m = math.ceil(p / r)
    short = r * m - p
    sizes = [m - 1 if i >= r - short else m for i in range(r)]
    rows, start = [], 0
    for sz in sizes:
        rows.append(list(range(start, start + sz)))
        start += sz
    target = [p + i for i in range(r)] if external_targets else [row[0] for row in rows]

    # columns: j-th member of each row, a short row's target fills slot m-1
    gathers = []
    partials = {}
    for j in range(m):
        col = []
        owner = []
        for i in range(r):
            if j < sizes[i]:
                col.append(rows[i][j])
                owner.append(i)
            elif external_targets:
                col.append(target[i])
                owner.append(i)
        held = [[("d", x)] if x < p else [] for x in col]
        data_ids = [x for x in col if x < p]
        gathers.append(remap(all_gather(len(col), n, held, n), col))
        for x, i in zip(col, owner):
            partials[x] = (i, data_ids)
    reduces = []
    members = []
    results = []
    for i in range(r):
        row = list(rows[i])
        if external_targets and sizes[i] < m:
            mem = [target[i]] + row
            reduces.append(_reduce_then_forward(mem, 0, None, n, s))
        elif external_targets:
            mem = row
            reduces.append(_reduce_then_forward(mem, 0, target[i], n, s))
        else:
            mem = row
            reduces.append(_reduce_then_forward(mem, 0, None, n, s))
        members.append(mem)
        results.append(target[i])
    return MultiReducePlan(
        p, r, n, s,
        parallel(*gathers, stage="multi-reduce"),
        parallel(*reduces, stage="multi-reduce"),
        rows, partials, results, external_targets, members,
    )


def execute_multi_reduce(plan, messages, coefficients, node_map=None, stage=None):
    """Run ``plan`` and return ``(results, ledger)``; ``results[i]`` is combination ``i``.

    ``node_map`` places local node ``x`` on physical node ``node_map[x]``.
    """
    coefficients = np.asarray(coefficients)
    total = plan.p + (plan.r if plan.external else 0)
    node_map = list(range(total)) if node_map is None else list(node_map)
    store = NodeStore()
    for x, msg in enumerate(messages):
        store.put(node_map[x], ("d", x), np.asarray(msg).reshape(-1))
    st = plan.gather.stage if stage is None else stage
    _, led1 = run_schedule(store, remap(plan.gather, node_map, st))
    # local step: each node folds what it gathered into its own partial sum
    for x, (i, data_ids) in plan.partials.items():
        home = store.setdefault(node_map[x], {})
        acc = np.zeros(plan.n, dtype=complex)
        for l in data_ids:
            acc = acc + coefficients[i, l] * home[("d", l)]
        for t, seg in enumerate(_split(acc, plan.s)):
            home[("seg", t)] = seg
    _, led2 = run_schedule(store, remap(plan.reduce, node_map, st))
    results = [
        np.concatenate([store[node_map[x]][("seg", t)] for t in range(plan.s)]) for x in plan.results
    ]
    return results, led1.extend(led2)
