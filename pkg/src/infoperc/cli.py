"""Command-line experiment runner.

``python3 -m infoperc run --config exp.ini --out results/`` executes one
experiment and writes CSV tables plus ``manifest.ini``; the manifest is itself
a valid config, so re-running it reproduces every table byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import cftp, explorer, fourier_rule, histories, observables
from .errors import ConfigurationError, InfopercError, ParameterError
from .graphs import GENERATORS, Graph, generate_graph, load_edge_list
from .render import SEGMENT_FIELDS, ClusterDump, load_dump, render_clusters, segment_rows
from .seeding import TAG_AUX, derive_seed

KINDS = ("magnetization", "tmix-profile", "clusters", "verify-fourier", "cftp-sample",
         "annealed", "quenched", "explore")


# --- config access ---------------------------------------------------------


class Params:
    """Typed access to the ``[params]`` section; every failure names its key."""

    def __init__(self, section: dict[str, str]):
        self._s = dict(section)
        self.used: dict[str, str] = {}

    def _raw(self, key: str, default):
        if key in self._s:
            self.used[key] = self._s[key]
            return self._s[key]
        if default is _REQUIRED:
            raise ConfigurationError(f"missing required key '{key}'", key=key)
        if default is not None:
            self.used[key] = str(default)
        return default

    def float(self, key: str, default=None) -> float:
        raw = self._raw(key, _REQUIRED if default is None else default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigurationError(f"key '{key}': expected a number, got {raw!r}", key=key) from None

    def int(self, key: str, default=None) -> int:
        raw = self._raw(key, _REQUIRED if default is None else default)
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"key '{key}': expected an integer, got {raw!r}", key=key) from None

    def str(self, key: str, default=None) -> str:
        return str(self._raw(key, _REQUIRED if default is None else default))

    def grid(self, key: str = "grid") -> np.ndarray:
        raw = self.str(key)
        try:
            if ":" in raw:
                start, stop, step = (float(x) for x in raw.split(":"))
                count = int(math.floor((stop - start) / step + 1e-9)) + 1
                return start + step * np.arange(count)
            return np.array([float(x) for x in raw.split(",")])
        except ValueError:
            raise ConfigurationError(f"key '{key}': use 'start:stop:step' or a comma list", key=key) from None


_REQUIRED = object()


@dataclass
class Experiment:
    kind: str
    seed: int
    graph: Graph
    graph_section: dict[str, str]
    params: Params


def _graph_from(section: dict[str, str], seed: int, base: Path | None) -> Graph:
    if "edges" in section:
        path = Path(section["edges"])
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            return load_edge_list(path.read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read edge list: {exc}", key="edges") from None
    family = section.get("family")
    if family is None:
        raise ConfigurationError("missing required key 'family' in [graph]", key="family")
    if family not in GENERATORS:
        raise ConfigurationError(f"unknown graph family {family!r}", key="family")
    kwargs = {}
    for k, v in section.items():
        if k in ("family", "seed"):
            continue
        try:
            kwargs[k] = float(v) if k == "p" else int(v)
        except ValueError:
            raise ConfigurationError(f"graph key '{k}': bad value {v!r}", key=k) from None
    graph_seed = int(section.get("seed", seed))
    try:
        return generate_graph(family, seed=graph_seed, **kwargs)
    except ParameterError as exc:
        raise ConfigurationError(f"graph: {exc}", key="family") from None


def load_experiment(text: str, seed_override: int | None = None, base: Path | None = None) -> Experiment:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config does not parse: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigurationError("missing [experiment] section", key="experiment")
    exp = dict(cp["experiment"])
    kind = exp.get("kind")
    if kind is None:
        raise ConfigurationError("missing required key 'kind'", key="kind")
    if kind not in KINDS:
        raise ConfigurationError(f"unknown experiment kind {kind!r}", key="kind")
    try:
        seed = int(exp.get("seed", "0")) if seed_override is None else int(seed_override)
    except ValueError:
        raise ConfigurationError("key 'seed': expected an integer", key="seed") from None
    params = Params(dict(cp["params"]) if cp.has_section("params") else {})
    if kind == "verify-fourier":
        graph = Graph.from_edges(0, [])
        gsec: dict[str, str] = {}
    else:
        if not cp.has_section("graph"):
            raise ConfigurationError("missing [graph] section", key="graph")
        gsec = dict(cp["graph"])
        graph = _graph_from(gsec, seed, base)
    return Experiment(kind, seed, graph, gsec, params)


# --- output ----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


def _table(exp: Experiment):
    rule = exp.params.str("rule", "heat_bath")
    if rule == "metropolis":
        raise ConfigurationError("experiments need a monotone rule (heat_bath or generalized)", key="rule")
    if rule not in ("heat_bath", "generalized"):
        raise ConfigurationError(f"unknown rule {rule!r}", key="rule")
    if rule == "heat_bath":
        return None
    beta = exp.params.float("beta")
    return fourier_rule.build_rule_table(beta, max(exp.graph.d_max, 1), exp.params.float("epsilon", 0.25))


def _farm(fn: Callable[[int, int], list], count: int, threads: int) -> list:
    """Run ``fn(lo, hi)`` over contiguous index chunks; results are concatenated in index order."""
    if threads <= 1 or count < 2:
        return fn(0, count)
    bounds = np.linspace(0, count, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ab: fn(int(ab[0]), int(ab[1])), zip(bounds[:-1], bounds[1:])))
    return [x for part in parts for x in part]


def run_magnetization(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    prof = observables.magnetization_profile(exp.graph, p.float("beta"), p.grid(), p.int("replicas"),
                                             exp.seed, _table(exp))
    write_csv(out / "profile.csv", ("t", "v", "m_hat", "stderr"), prof.rows())
    write_csv(out / "sum_sq.csv", ("t", "sum_sq", "stderr"),
              zip(prof.grid, prof.sum_sq, prof.sum_sq_se))
    return ["profile.csv", "sum_sq.csv"]


def run_tmix(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    beta, grid, reps = p.float("beta"), p.grid(), p.int("replicas")
    table = _table(exp)
    prof = observables.magnetization_profile(exp.graph, beta, grid, reps, exp.seed, table)
    write_csv(out / "sum_sq.csv", ("t", "sum_sq", "stderr"), zip(prof.grid, prof.sum_sq, prof.sum_sq_se))
    tm = observables.locate_t_m(prof)
    write_csv(out / "t_m.csv", ("point", "lo", "hi"), [(tm.point, tm.lo, tm.hi)])
    tv_reps = p.int("tv_replicas", reps)
    upper = observables.coupling_tv_upper(exp.graph, beta, grid, tv_reps, exp.seed, table)
    exact = exp.graph.n <= observables.N_CAP
    pi = observables.gibbs(exp.graph, beta) if exact else None
    rows = []
    for i, t in enumerate(grid):
        lower = observables.tv_lower_bound(exp.graph, beta, float(t), prof, tv_reps, exp.seed, table)
        row = [t, lower.value, lower.lo, float(upper.value[i]), float(upper.hi[i])]
        if exact:
            law = observables.exact_evolve(exp.graph, beta, np.ones(exp.graph.n), float(t))
            row.append(observables.exact_distances(law, pi).tv)
        rows.append(row)
    header = ["t", "tv_lower", "tv_lower_lo", "tv_upper", "tv_upper_hi"] + (["exact_tv"] if exact else [])
    write_csv(out / "distances.csv", header, rows)
    return ["sum_sq.csv", "t_m.csv", "distances.csv"]


def run_clusters(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    beta, t_star = p.float("beta"), p.float("t_star")
    mode = p.str("mode", "standard")
    table = _table(exp)
    from .dynamics import UpdateField

    field = UpdateField(exp.graph, exp.seed, table)
    cl = histories.decompose(exp.graph, beta, field, t_star, mode,
                             "plain" if table is None else "generalized")
    write_csv(out / "clusters.csv", histories.CLUSTER_FIELDS, histories.cluster_rows(cl))
    dump = ClusterDump.from_clusters(exp.graph.n, t_star, cl)
    write_csv(out / "segments.csv", SEGMENT_FIELDS, segment_rows(dump))
    return ["clusters.csv", "segments.csv"]


def run_verify_fourier(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    table = fourier_rule.build_rule_table(p.float("beta"), p.int("d"), p.float("epsilon", 0.25),
                                          p.float("tol", 1e-14))
    write_csv(out / "fourier_table.csv", ("r", "k", "p", "bound", "slack"), table.rows())
    devs = [(r, fourier_rule.coupling_identity_check(table, r)) for r in range(1, table.d + 1)]
    write_csv(out / "coupling.csv", ("r", "max_deviation"), devs)
    print(f"max coupling deviation: {float(max((d for _, d in devs), default=0.0))!r}")
    return ["fourier_table.csv", "coupling.csv"]


def run_cftp(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    beta, count = p.float("beta"), p.int("samples")
    max_depth = p.int("max_depth", cftp.MAX_DEPTH)
    table = _table(exp)

    def chunk(lo, hi):
        rows = []
        for i in range(lo, hi):
            s = cftp.perfect_sample(exp.graph, beta, derive_seed(exp.seed, TAG_AUX, 13, i),
                                    "heat_bath" if table is None else "generalized", table, max_depth)
            rows.append((i, s.depth, "".join("+" if x > 0 else "-" for x in s.spins)))
        return rows

    write_csv(out / "samples.csv", ("sample", "depth", "spins"), _farm(chunk, count, threads))
    return ["samples.csv"]


def run_annealed(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    beta, grid, reps = p.float("beta"), p.grid(), p.int("replicas")
    table = _table(exp)
    ann = cftp.annealed_compare(exp.graph, beta, grid, reps, exp.seed, table)
    worst = observables.coupling_tv_upper(exp.graph, beta, grid, reps, exp.seed, table)
    rows = zip(grid, ann.curve.value, ann.curve.lo, ann.curve.hi, worst.value, worst.lo, worst.hi)
    write_csv(out / "annealed.csv", ("t", "disagreement", "lo", "hi", "worst_case", "worst_lo", "worst_hi"),
              rows)
    return ["annealed.csv"]


def run_quenched(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    beta, grid, reps = p.float("beta"), p.grid(), p.int("replicas")
    start = p.str("start", "uniform")
    if start == "plus":
        x0 = np.ones(exp.graph.n, dtype=np.int8)
    elif start == "uniform":
        x0 = cftp.uniform_start(exp.graph.n, exp.seed)
    else:
        raise ConfigurationError(f"unknown start {start!r}", key="start")
    curve = cftp.quenched_statistic(exp.graph, beta, grid, x0, reps, exp.seed, _table(exp))
    rows = [(t, m, se, m - observables.Z95 * se, m + observables.Z95 * se)
            for t, m, se in zip(curve.grid, curve.mean, curve.stderr)]
    write_csv(out / "quenched.csv", ("t", "overlap_mean", "stderr", "lo", "hi"), rows)
    return ["quenched.csv"]


def run_explore(exp: Experiment, out: Path, threads: int) -> list[str]:
    p = exp.params
    beta, eta, lam = p.float("beta"), p.float("eta"), p.float("lambda")
    count, t_star = p.int("samples"), p.float("t_star", 5.0)
    table = _table(exp)
    rule_mode = "plain" if table is None else "generalized"

    def chunk(lo, hi):
        rows = []
        for i in range(lo, hi):
            s = derive_seed(exp.seed, TAG_AUX, 17, i)
            w0 = int(np.random.default_rng(s).integers(exp.graph.n))
            c = explorer.explore_space_time_cluster(exp.graph, beta, w0, t_star, t_star, s, rule_mode, table)
            rows.append((i, w0, c.length_L, c.support_size, c.tau_hat, len(c.members)))
        return rows

    rows = _farm(chunk, count, threads)
    write_csv(out / "explore_samples.csv", ("sample", "w0", "L", "support", "tau_hat", "members"), rows)
    L = np.array([r[2] for r in rows])
    H = np.array([r[3] for r in rows])
    x = np.exp(eta * L + lam * H)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    summary = [("moment", float(x.mean())), ("moment_stderr", se),
               ("log_moment", math.log(float(x.mean()))),
               ("max_tau_violation", max((r[4] - 0.5 * r[2] - 1.0 for r in rows), default=0.0))]
    write_csv(out / "explore_summary.csv", ("statistic", "value"), summary)
    return ["explore_samples.csv", "explore_summary.csv"]


RUNNERS = {
    "magnetization": run_magnetization,
    "tmix-profile": run_tmix,
    "clusters": run_clusters,
    "verify-fourier": run_verify_fourier,
    "cftp-sample": run_cftp,
    "annealed": run_annealed,
    "quenched": run_quenched,
    "explore": run_explore,
}


def write_manifest(exp: Experiment, out: Path, outputs: list[str]):
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"kind": exp.kind, "seed": str(exp.seed)}
    if exp.graph_section:
        cp["graph"] = exp.graph_section
    cp["params"] = dict(sorted(exp.params.used.items()))
    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    import numba
    import scipy

    cp["versions"] = {"package": pkg, "python": platform.python_version(), "numpy": np.__version__,
                      "scipy": scipy.__version__, "numba": numba.__version__}
    cp["outputs"] = {"files": " ".join(outputs)}
    buf = io.StringIO()
    cp.write(buf)
    (out / "manifest.ini").write_text(buf.getvalue())


def run(config_path: str | Path, out_dir: str | Path, seed: int | None = None, threads: int = 1) -> Path:
    config_path = Path(config_path)
    try:
        text = config_path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", key="config") from None
    exp = load_experiment(text, seed, config_path.parent)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = RUNNERS[exp.kind](exp, out, max(1, int(threads)))
    write_manifest(exp, out, outputs)
    return out


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="infoperc", description="Information-percolation experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    r.add_argument("--threads", type=int, default=1)
    v = sub.add_parser("verify-fourier", help="build the generalized rule table and check it")
    v.add_argument("--beta", type=float, required=True)
    v.add_argument("--d", type=int, required=True)
    v.add_argument("--epsilon", type=float, default=0.25)
    v.add_argument("--out", default=None)
    s = sub.add_parser("render", help="draw a cluster dump as SVG")
    s.add_argument("--dump", required=True, help="directory holding clusters.csv and segments.csv")
    s.add_argument("--layout", default="linear", help="'linear' or 'grid(side)'")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--t-star", type=float, default=None)
    return ap


def _dump_meta(directory: Path):
    man = directory / "manifest.ini"
    n = t_star = None
    if man.exists():
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(man.read_text())
        if cp.has_option("params", "t_star"):
            t_star = float(cp["params"]["t_star"])
        if cp.has_section("graph"):
            n = _graph_from(dict(cp["graph"]), int(cp["experiment"].get("seed", "0")), directory).n
    return n, t_star


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            out = run(args.config, args.out, args.seed, args.threads)
            print(f"wrote {out}")
        elif args.command == "verify-fourier":
            text = (f"[experiment]\nkind = verify-fourier\n[params]\nbeta = {args.beta!r}\n"
                    f"d = {args.d}\nepsilon = {args.epsilon!r}\n")
            exp = load_experiment(text)
            out = Path(args.out) if args.out else None
            if out is None:
                import tempfile

                with tempfile.TemporaryDirectory() as tmp:
                    run_verify_fourier(exp, Path(tmp), 1)
            else:
                out.mkdir(parents=True, exist_ok=True)
                outputs = run_verify_fourier(exp, out, 1)
                write_manifest(exp, out, outputs)
        elif args.command == "render":
            directory = Path(args.dump)
            n, t_star = _dump_meta(directory)
            dump = load_dump(directory, args.n if args.n is not None else n,
                             args.t_star if args.t_star is not None else t_star)
            Path(args.out).write_text(render_clusters(dump, args.layout))
    except InfopercError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0
