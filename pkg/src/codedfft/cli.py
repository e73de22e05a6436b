"""``fftsim`` command line: closed-form bound tables, single runs and sweeps.

Exit codes: 0 success, 1 usage or configuration error, 2 unrecoverable
fault pattern, 3 output disagrees with the oracle.
"""

import argparse
import csv
import io
import itertools
import logging
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from .cost import (
    CostParams,
    all_to_all_bounds,
    crossover_check,
    crossover_threshold,
    encoding_cost,
    multi_broadcast_bounds,
    multi_reduce_bounds,
    reduce_bounds,
    reduce_upper_time,
    transpose_cost,
)
from .dft import DftPlan, dft_direct
from .mds import CodeConstructionError, make_systematic_mds
from .netsim import FaultFileError, FaultScenario, load_faults
from .pipeline import dry_ledgers, random_input, run_coded, run_uncoded, stage_cost_report

log = logging.getLogger("fftsim")

EXIT_OK, EXIT_USAGE, EXIT_UNRECOVERABLE, EXIT_MISMATCH = 0, 1, 2, 3
UNCODED_TOL = 1e-10
CODED_TOL = 1e-8
# above this size the oracle is numpy's FFT instead of the O(N^2) product
DIRECT_ORACLE_LIMIT = 4096

CSV_COLUMNS = [
    "K", "P", "N", "alpha", "beta", "seed",
    "C1_rearrange", "C2_rearrange", "C1_transpose", "C2_transpose", "C1_encode2", "C2_encode2",
    "T_uncoded", "T_coded", "max_rel_err", "predicted_crossover", "measured_crossover", "recoverable",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 64
    N1: int = 0  # 0: pick the most even power-of-two split
    N2: int = 0
    K: int = 4
    P: int = 6
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0
    faults: str = ""
    regime: str = "min-rounds"
    segments: str = "auto"
    parity: str = "vandermonde"
    sweep_K: str = ""
    sweep_PminusK: str = ""
    sweep_alpha: str = ""
    sweep_beta: str = ""
    sweep_N: str = ""
    n_per_node: int = 0
    dry_run: bool = False

    def plan(self):
        if self.N1 or self.N2:
            N1 = self.N1 or self.N // self.N2
            N2 = self.N2 or self.N // self.N1
            return DftPlan(self.N, N1, N2, self.K, self.P)
        return DftPlan.square(self.N, self.K, self.P)

    def params(self):
        return CostParams(self.alpha, self.beta)


def _key(name):
    return name.replace("sweep_", "sweep.", 1) if name.startswith("sweep_") else name


_FIELDS = {_key(f.name): f for f in fields(ExperimentConfig)}


def _convert(key, raw):
    f = _FIELDS.get(key)
    if f is None:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    try:
        if f.type is int:
            return int(raw)
        if f.type is float:
            return float(raw)
        if f.type is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _validate(cfg):
    if cfg.alpha < 0 or cfg.beta < 0:
        raise ConfigError("alpha and beta must be non-negative")
    if cfg.regime not in ("min-rounds", "min-bandwidth"):
        raise ConfigError(f"regime must be min-rounds or min-bandwidth, got {cfg.regime!r}")
    if cfg.parity not in ("vandermonde", "checksum"):
        raise ConfigError(f"parity must be vandermonde or checksum, got {cfg.parity!r}")
    if cfg.segments != "auto":
        try:
            if int(cfg.segments) < 1:
                raise ValueError
        except ValueError:
            raise ConfigError(f"segments must be 'auto' or a positive integer, got {cfg.segments!r}") from None
    return cfg


def parse_config(text, base=None):
    """Parse flat ``key = value`` lines (``#`` starts a comment)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value
    return apply_overrides(base or ExperimentConfig(), values)


def apply_overrides(cfg, values):
    changes = {}
    for key, raw in values.items():
        key = key.strip()
        changes[_FIELDS[key].name if key in _FIELDS else key] = _convert(key, raw)
    return _validate(replace(cfg, **changes))


def config_to_text(cfg):
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out.append(f"{_key(f.name)} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(out) + "\n"


# -- helpers ------------------------------------------------------------------


def _rel_err(a, b):
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / den) if den else float(np.linalg.norm(a - b))


def oracle(x):
    return dft_direct(x) if x.size <= DIRECT_ORACLE_LIMIT else np.fft.fft(x)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _write_csv(rows, columns, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    text = buf.getvalue()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


def _codes(cfg):
    c = make_systematic_mds(cfg.P, cfg.K, cfg.parity)
    return c, c


def _stage(ledger, stage):
    return ledger.restricted(stage)


def _csv_row(cfg, coded_ledger, uncoded_ledger, err, recoverable):
    params = cfg.params()
    rea, tr, enc = (_stage(coded_ledger, s) for s in ("rearrange", "transpose", "encode2"))
    return {
        "K": cfg.K, "P": cfg.P, "N": cfg.N, "alpha": cfg.alpha, "beta": cfg.beta, "seed": cfg.seed,
        "C1_rearrange": rea.C1, "C2_rearrange": rea.C2,
        "C1_transpose": tr.C1, "C2_transpose": tr.C2,
        "C1_encode2": enc.C1, "C2_encode2": enc.C2,
        "T_uncoded": uncoded_ledger.time(params), "T_coded": coded_ledger.time(params),
        "max_rel_err": "" if err is None else err,
        "predicted_crossover": crossover_check(cfg.P, cfg.K),
        "measured_crossover": enc.time(params) < tr.time(params),
        "recoverable": "" if recoverable is None else recoverable,
    }


# -- commands -----------------------------------------------------------------


def bounds_rows(cfg):
    K, P, N = cfg.K, cfg.P, cfg.N
    params = cfg.params()
    n = N // K
    rows = []

    def add(name, b, value=""):
        rows.append({"primitive": name, "C1": b.C1, "C2": b.C2, "kind": b.kind, "time": b.time(params), "value": value})

    add("all-to-all", all_to_all_bounds(K, n, cfg.regime))
    add("transpose", transpose_cost(K, N))
    add("uncoded-total", _scaled(transpose_cost(K, N), 2))
    lo, up = reduce_bounds(K, n)
    add("reduce-lower", lo)
    add("reduce-upper-envelope", up)
    rows.append({"primitive": "reduce-upper-time", "C1": "", "C2": "", "kind": "upper",
                 "time": reduce_upper_time(K, n, params), "value": ""})
    r = P - K
    if r <= K:
        lo, up = multi_broadcast_bounds(K, r, n)
        add("multi-broadcast-lower", lo)
        add("multi-broadcast-upper", up)
        lo, up = multi_reduce_bounds(K, r, n)
        add("multi-reduce-lower", lo)
        add("multi-reduce-upper", up)
    add("encode2-upper", encoding_cost(P, K, N))
    rows.append({"primitive": "crossover-threshold", "C1": "", "C2": "", "kind": "", "time": "",
                 "value": crossover_threshold(K)})
    rows.append({"primitive": "crossover-predicted", "C1": "", "C2": "", "kind": "", "time": "",
                 "value": crossover_check(P, K)})
    return rows


def _scaled(b, k):
    return type(b)(b.C1 * k, b.C2 * k, b.kind)


def cmd_bounds(cfg, out=None, stream=None):
    stream = stream or sys.stdout
    if cfg.N % cfg.K or not 1 <= cfg.K < cfg.P:
        raise ConfigError(f"need K < P and K dividing N, got N={cfg.N}, K={cfg.K}, P={cfg.P}")
    text = _write_csv(bounds_rows(cfg), ["primitive", "C1", "C2", "kind", "time", "value"], out)
    stream.write(text)
    return EXIT_OK


def run_experiment(cfg, faults=None):
    """Run both pipelines on the seeded input; returns a dict for reporting."""
    plan = cfg.plan()
    faults = FaultScenario.none() if faults is None else faults
    x = random_input(plan.N, cfg.seed)
    ref = oracle(x)
    code1, code2 = _codes(cfg)
    unc = run_uncoded(x, plan, faults, cfg.regime)
    cod = run_coded(x, plan, code1, code2, faults, cfg.segments, cfg.params(), cfg.regime)
    err_u = _rel_err(unc.output, ref) if unc.recoverable else None
    err_c = _rel_err(cod.output, ref) if cod.recoverable else None
    errs = [e for e in (err_u, err_c) if e is not None]
    return {
        "plan": plan, "uncoded": unc, "coded": cod, "err_uncoded": err_u, "err_coded": err_c,
        "row": _csv_row(cfg, cod.ledger, unc.ledger, max(errs) if errs else None, cod.recoverable),
    }


def _report(cfg, res, stream):
    params = cfg.params()
    unc, cod = res["uncoded"], res["coded"]
    p = res["plan"]
    w = stream.write
    w(f"plan: N={p.N} N1={p.N1} N2={p.N2} K={p.K} P={p.P} alpha={cfg.alpha:g} beta={cfg.beta:g} "
      f"regime={cfg.regime} segments={cod.segments}\n")
    for name, r, err, tol in (("uncoded", unc, res["err_uncoded"], UNCODED_TOL), ("coded", cod, res["err_coded"], CODED_TOL)):
        if r.recoverable:
            verdict = "ok" if err <= tol else "MISMATCH"
            w(f"{name}: max_rel_err={err:.3e} (tol {tol:g}) {verdict}\n")
        else:
            w(f"{name}: unrecoverable ({r.reason})\n")
        for stage, c1, c2, t in stage_cost_report(r, params):
            w(f"  {stage:<10} C1={c1:<4} C2={c2:<10g} T={t:.6g}\n")
    for stage, nodes in cod.survivors.items():
        w(f"coded survivors after {stage}: {nodes} decoded={cod.decoded.get(stage, False)}\n")
    row = res["row"]
    w(f"crossover: predicted={_fmt(row['predicted_crossover'])} measured={_fmt(row['measured_crossover'])}\n")


def cmd_run(cfg, faults=None, out=None, stream=None):
    stream = stream or sys.stdout
    res = run_experiment(cfg, faults)
    _report(cfg, res, stream)
    stream.write(_write_csv([res["row"]], CSV_COLUMNS, out))
    cod = res["coded"]
    if not cod.recoverable:
        stream.write("result: unrecoverable\n")
        return EXIT_UNRECOVERABLE
    bad = res["err_coded"] > CODED_TOL
    if res["uncoded"].recoverable and res["err_uncoded"] > UNCODED_TOL:
        bad = True
    if bad:
        stream.write("result: oracle mismatch\n")
        return EXIT_MISMATCH
    stream.write("result: ok\n")
    return EXIT_OK


def _int_list(spec, name):
    """``"16,64"``, ``"1-5"`` or a mix of both."""
    out = []
    for part in filter(None, (p.strip() for p in spec.split(","))):
        try:
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"bad integer list for {name}: {spec!r}") from None
    return out


def _value_list(spec, name, K):
    out = []
    for part in filter(None, (p.strip() for p in spec.split(","))):
        try:
            if part.endswith("/K"):
                out.append(float(part[:-2]) / K)
            else:
                out.append(float(part))
        except ValueError:
            raise ConfigError(f"bad value list for {name}: {spec!r}") from None
    return out


def sweep_points(cfg):
    """Grid points in deterministic order: K, then P-K, then N, alpha, beta."""
    Ks = _int_list(cfg.sweep_K, "sweep.K") if cfg.sweep_K else [cfg.K]
    rs = _int_list(cfg.sweep_PminusK, "sweep.PminusK") if cfg.sweep_PminusK else [cfg.P - cfg.K]
    for K, r in itertools.product(Ks, rs):
        if cfg.sweep_N:
            Ns = _int_list(cfg.sweep_N, "sweep.N")
        elif cfg.n_per_node:
            Ns = [cfg.n_per_node * K]
        else:
            Ns = [cfg.N]
        alphas = _value_list(cfg.sweep_alpha, "sweep.alpha", K) if cfg.sweep_alpha else [cfg.alpha]
        betas = _value_list(cfg.sweep_beta, "sweep.beta", K) if cfg.sweep_beta else [cfg.beta]
        for N, a, b in itertools.product(Ns, alphas, betas):
            yield replace(cfg, K=K, P=K + r, N=N, alpha=a, beta=b, N1=0, N2=0, sweep_K="", sweep_PminusK="",
                          sweep_alpha="", sweep_beta="", sweep_N="")


def sweep_point(pt):
    """One CSV row, or ``None`` for an invalid point."""
    try:
        plan = pt.plan()
        if pt.dry_run:
            unc, cod, _ = dry_ledgers(plan, pt.params(), pt.segments, pt.regime)
            return _csv_row(pt, cod, unc, None, None)
        return run_experiment(pt)["row"]
    except (ValueError, CodeConstructionError) as exc:
        log.warning("skipping K=%d P=%d N=%d: %s", pt.K, pt.P, pt.N, exc)
        return None


def cmd_sweep(cfg, out=None, stream=None, figures=None):
    stream = stream or sys.stdout
    rows = [r for r in map(sweep_point, sweep_points(cfg)) if r is not None]
    text = _write_csv(rows, CSV_COLUMNS, out)
    if out is None:
        stream.write(text)
    else:
        stream.write(f"wrote {len(rows)} rows to {out}\n")
    if figures:
        from .plotting import render_sweep

        for path in render_sweep(rows, figures):
            stream.write(f"figure {path}\n")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="fftsim", description="Coded distributed FFT simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("bounds", "closed-form cost bounds"), ("run", "run both pipelines once"),
                        ("sweep", "grid of fault-free runs")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--config", help="flat key = value file")
        c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        c.add_argument("--faults", help="fault file: stage,node,kind[,delay] per line")
        c.add_argument("--out", help="CSV output path")
        if name == "sweep":
            c.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR")
        c.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args):
    cfg = ExperimentConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    return apply_overrides(cfg, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        fault_path = args.faults or cfg.faults
        faults = load_faults(fault_path) if fault_path else None
        if args.command == "bounds":
            return cmd_bounds(cfg, args.out)
        if args.command == "run":
            return cmd_run(cfg, faults, args.out)
        return cmd_sweep(cfg, args.out, figures=args.figures)
    except (ConfigError, FaultFileError, CodeConstructionError, OSError, ValueError) as exc:
        print(f"fftsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
