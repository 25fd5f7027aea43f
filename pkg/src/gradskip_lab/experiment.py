"""Config-driven experiments: trace files, summaries and the verify suite.

Config files are INI-style (``configparser``)::

    [problem]
    kind = logistic            # logistic | quadratic
    source = synthetic         # synthetic | libsvm
    path = australian.txt      # libsvm only, relative to the config file
    n = 20
    d = 50                     # synthetic only
    m = 100                    # samples per client, synthetic logistic only
    lam = 0.1                  # L2 weight (= mu)
    lam_relative = 1e-4        # libsvm: lam = lam_relative * max_i L_i(data)
    normalize = true           # libsvm: scale features into [-1, 1]
    profile = outlier          # outlier | explicit
    l_max = 1000
    l_low = 0.1
    l_high = 1.0
    l_values = 1, 2, 3         # explicit profile
    seed = 0

    [methods]
    names = gradskip, proxskip

    [method.gradskip]          # optional per-method overrides
    policy = optimal           # optimal | explicit
    gamma = 0.001
    p = 0.1
    q = 0.5, 1

    [run]
    T = 1000
    seeds = 0, 1, 2
    strict = true
    times = uniform            # uniform | random | t-opt
    t_max = 1.0
    t_com = 1.0
    target = 1e-6              # Psi_t / Psi_0 level for "rounds to target"
    lazy = true

    [output]
    dir = results
    formats = csv, json

``GRADSKIP_OUTPUT_DIR`` overrides ``[output] dir``.
"""

import configparser
import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, compressors, data_io, methods, problems
from .errors import AggregationError, ConfigError

TRACE_COLUMNS = ("t", "psi", "dist_sq", "comm_rounds", "grad_calls_total")
OUTPUT_ENV = "GRADSKIP_OUTPUT_DIR"


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _names(text):
    return [v.strip() for v in str(text).replace(";", ",").split(",") if v.strip()]


@dataclass
class MethodSpec:
    name: str
    policy: str = "optimal"
    overrides: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    problem: dict
    methods: list
    T: int
    seeds: list
    strict: bool = True
    times: str = "uniform"
    t_max: float = 1.0
    t_com: float = 1.0
    target: float = 1e-6
    lazy: bool = True
    output_dir: str = "results"
    formats: tuple = ("csv", "json")
    base_dir: str = "."


def load_config(path):
    """Parse and validate a config file; all violations are reported together."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_parser(parser, base_dir=path.parent)


def config_from_parser(parser, base_dir="."):
    errors = []

    def get(section, key, conv, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                errors.append(f"[{section}] {key} is required")
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError):
            errors.append(f"[{section}] {key} has invalid value {raw!r}")
            return default

    def boolean(raw):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)

    for sec in ("problem", "methods", "run"):
        if not parser.has_section(sec):
            errors.append(f"missing section [{sec}]")
            parser.add_section(sec)

    prob = {
        "kind": get("problem", "kind", str, "logistic"),
        "source": get("problem", "source", str, "synthetic"),
        "path": get("problem", "path", str),
        "n": get("problem", "n", int, required=True),
        "d": get("problem", "d", int, 10),
        "m": get("problem", "m", int, 100),
        "lam": get("problem", "lam", float, 0.1),
        "lam_relative": get("problem", "lam_relative", float),
        "normalize": get("problem", "normalize", boolean, True),
        "profile": get("problem", "profile", str, "outlier"),
        "l_max": get("problem", "l_max", float, 10.0),
        "l_low": get("problem", "l_low", float, 0.1),
        "l_high": get("problem", "l_high", float, 1.0),
        "l_values": get("problem", "l_values", _floats),
        "seed": get("problem", "seed", int, 0),
    }
    if prob["kind"] not in ("logistic", "quadratic"):
        errors.append("[problem] kind must be logistic or quadratic")
    if prob["source"] not in ("synthetic", "libsvm"):
        errors.append("[problem] source must be synthetic or libsvm")
    if prob["source"] == "libsvm":
        if prob["kind"] != "logistic":
            errors.append("[problem] libsvm data requires kind = logistic")
        if not prob["path"]:
            errors.append("[problem] path is required for libsvm data")
        else:
            full = Path(base_dir) / prob["path"]
            if not full.is_file():
                errors.append(f"[problem] data file {full} does not exist")
            prob["path"] = str(full)
    if prob["n"] is not None and prob["n"] < 1:
        errors.append("[problem] n must be positive")
    if prob["profile"] not in ("outlier", "explicit"):
        errors.append("[problem] profile must be outlier or explicit")
    if prob["profile"] == "explicit" and prob["source"] == "synthetic":
        if not prob["l_values"]:
            errors.append("[problem] explicit profile needs l_values")
        elif prob["n"] is not None and len(prob["l_values"]) != prob["n"]:
            errors.append("[problem] l_values must have n entries")

    names = get("methods", "names", _names, [], required=True) or []
    if not names and parser.has_option("methods", "names"):
        errors.append("[methods] names must list at least one method")
    specs = []
    for name in names:
        if name not in methods.METHODS:
            errors.append(f"[methods] unknown method {name!r}")
            continue
        sec = f"method.{name}"
        policy = get(sec, "policy", str, "optimal") if parser.has_section(sec) else "optimal"
        if policy not in ("optimal", "explicit"):
            errors.append(f"[{sec}] policy must be optimal or explicit")
        over = {}
        if parser.has_section(sec):
            for key, conv in (("gamma", float), ("p", float), ("q", _floats)):
                val = get(sec, key, conv)
                if val is not None:
                    over[key] = tuple(val) if key == "q" else val
        if policy == "explicit" and not {"gamma", "p"} <= set(over):
            errors.append(f"[{sec}] explicit policy needs gamma and p")
        specs.append(MethodSpec(name, policy, over))

    T = get("run", "T", int, required=True)
    seeds = get("run", "seeds", _ints, [], required=True) or []
    if T is not None and T < 0:
        errors.append("[run] T must be non-negative")
    if not seeds and parser.has_option("run", "seeds"):
        errors.append("[run] seeds must be non-empty")
    times = get("run", "times", str, "uniform")
    if times not in ("uniform", "random", "t-opt"):
        errors.append("[run] times must be uniform, random or t-opt")
    t_max = get("run", "t_max", float, 1.0)
    if t_max is not None and not (0 < t_max <= 1):
        errors.append("[run] t_max must lie in (0, 1]")
    target = get("run", "target", float, 1e-6)
    if target is not None and not target > 0:
        errors.append("[run] target must be positive")

    out_dir = parser.get("output", "dir", fallback="results") if parser.has_section("output") else "results"
    formats = tuple(_names(parser.get("output", "formats", fallback="csv, json"))) \
        if parser.has_section("output") else ("csv", "json")
    if set(formats) - {"csv", "json"}:
        errors.append("[output] formats may only contain csv and json")

    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors), errors)
    out = os.environ.get(OUTPUT_ENV) or str(Path(base_dir) / out_dir)
    return ExperimentConfig(
        problem=prob, methods=specs, T=T, seeds=seeds,
        strict=get("run", "strict", boolean, True), times=times, t_max=t_max,
        t_com=get("run", "t_com", float, 1.0), target=target,
        lazy=get("run", "lazy", boolean, True), output_dir=out, formats=formats,
        base_dir=str(base_dir),
    )


# ------------------------------------------------------------------- building

def build_problem(prob):
    """Client objectives described by the ``[problem]`` section."""
    n = prob["n"]
    if prob["source"] == "libsvm":
        ds = data_io.read_libsvm(prob["path"])
        if prob["normalize"]:
            ds = data_io.scale_features(ds)
        shards = data_io.partition(ds, n)
        lam = prob["lam"]
        if prob["lam_relative"] is not None:
            lam = prob["lam_relative"] * float(np.max(data_io.data_smoothness(shards)))
        return problems.lift(data_io.logistic_clients(shards, lam))
    if prob["profile"] == "explicit":
        profile = prob["l_values"]
    else:
        profile = data_io.OutlierProfile(prob["l_max"], prob["l_low"], prob["l_high"])
    fs = data_io.synthesize_heterogeneous(n, prob["d"], profile, prob["seed"],
                                          kind=prob["kind"], lam=prob["lam"], m=prob["m"])
    return problems.lift(fs)


def compute_times(cfg, lifted):
    n = lifted.n
    if cfg.times == "uniform":
        return np.full(n, cfg.t_max)
    if cfg.times == "random":
        rng = np.random.default_rng(cfg.problem["seed"] + 7919)
        return cfg.t_max * (1.0 - rng.random(n))
    return analysis.optimal_compute_times(np.maximum(lifted.kappas, 1.0), cfg.t_max)


def method_config(spec, lifted, cfg, seed, times):
    common = dict(T=cfg.T, seed=seed, times=tuple(times), t_com=cfg.t_com, strict=cfg.strict)
    base = methods.preset_config(spec.name, lifted, **common)
    over = dict(spec.overrides)
    if "q" in over and len(over["q"]) == 1:
        over["q"] = over["q"] * lifted.n
    if "p" in over or "q" in over:
        p, q = over.get("p", base.p), over.get("q", base.q)
        C = compressors.CompressorSpec
        if spec.name == "gradskip_plus":
            over["compressors"] = (C.bernoulli(p, lifted.dim), C.block_bernoulli(q, lifted.d))
        elif spec.name == "randprox_fb":
            over["compressors"] = (C.coordinate_prob([p] * lifted.dim), C.identity(lifted.dim))
    return base.with_(**over) if over else base


def problem_fingerprint(prob):
    text = json.dumps({k: prob[k] for k in sorted(prob)}, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _cell(v):
    if v is None:
        return ""
    return v if isinstance(v, str) else _fmt(v)


def trace_rows(trace):
    n = trace.grad_calls.shape[1]
    header = list(TRACE_COLUMNS) + [f"grad_calls_client_{i}" for i in range(n)] + ["sim_time"]
    rows = []
    for t in range(trace.psi.size):
        rows.append([t, trace.psi[t], trace.dist_sq[t], trace.comm_rounds[t],
                     trace.grad_calls[t].sum(), *trace.grad_calls[t], trace.sim_time[t]])
    return header, rows


def write_trace_csv(trace, path):
    header, rows = trace_rows(trace)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_trace_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[j]) for r in body]) for j, h in enumerate(header)}
    return header, cols


def _trace_meta(trace, spec, fingerprint, cfg, lifted):
    c = trace.config
    return {
        "method": spec.name, "seed": int(trace.seed), "problem": fingerprint,
        "n": int(lifted.n), "d": int(lifted.d), "T": int(cfg.T), "target": cfg.target,
        "gamma": c.gamma, "p": c.p, "q": list(c.q), "times": list(c.times or ()),
        "t_com": c.t_com, "kappas": lifted.kappas.tolist(),
    }


def run_experiment(config):
    """Run every (method, seed) pair and write traces plus a summary."""
    cfg = load_config(config) if not isinstance(config, ExperimentConfig) else config
    lifted = build_problem(cfg.problem)
    ref = problems.reference_minimizer(lifted)
    times = compute_times(cfg, lifted)
    fp = problem_fingerprint(cfg.problem)
    out = Path(cfg.output_dir)
    tdir = out / "traces"
    try:
        tdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {tdir}: {exc}") from exc
    for spec in cfg.methods:
        for seed in cfg.seeds:
            rc = method_config(spec, lifted, cfg, seed, times)
            trace = methods.run(lifted, rc, reference=ref, lazy=cfg.lazy)
            stem = tdir / f"{spec.name}_seed{seed}"
            write_trace_csv(trace, stem.with_suffix(".csv"))
            meta = _trace_meta(trace, spec, fp, cfg, lifted)
            stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    summary = emit_summary(tdir)
    write_summary(summary, out, cfg.formats)
    return summary


# -------------------------------------------------------------------- summary

SUMMARY_COLUMNS = ("method", "traces", "T", "psi0", "psi", "psi_ratio", "psi_ratio_q25",
                   "psi_ratio_q75", "dist_sq", "comm_rounds", "comm_rounds_to_target",
                   "grad_calls_total", "sim_time")


def _rounds_to_target(cols, target):
    psi = cols["psi"]
    if psi[0] == 0:
        return 0.0
    hit = np.flatnonzero(psi <= target * psi[0])
    return float(cols["comm_rounds"][hit[0]]) if hit.size else float("nan")


def emit_summary(trace_dir):
    """Aggregate traces per method: medians (and quartiles of Psi_T/Psi_0)."""
    tdir = Path(trace_dir)
    metas = sorted(tdir.glob("*.json"))
    if not metas:
        raise AggregationError(f"no traces found in {tdir}")
    groups, probs, n_clients = {}, set(), set()
    for mpath in metas:
        meta = json.loads(mpath.read_text(encoding="utf-8"))
        header, cols = read_trace_csv(mpath.with_suffix(".csv"))
        probs.add(meta["problem"])
        n_clients.add(meta["n"])
        groups.setdefault(meta["method"], []).append((meta, cols))
    if len(probs) > 1 or len(n_clients) > 1:
        raise AggregationError("traces come from different problems")
    rows = []
    for method in sorted(groups):
        items = groups[method]
        if len({m["T"] for m, _ in items}) > 1:
            raise AggregationError(f"traces of {method} have different lengths")
        finals = {k: np.array([c[k][-1] for _, c in items])
                  for k in ("psi", "dist_sq", "comm_rounds", "grad_calls_total", "sim_time")}
        psi0 = np.array([c["psi"][0] for _, c in items])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(psi0 > 0, finals["psi"] / psi0, 0.0)
        to_target = np.array([_rounds_to_target(c, m["target"]) for m, c in items])
        rows.append({
            "method": method, "traces": len(items), "T": items[0][0]["T"],
            "psi0": float(np.median(psi0)), "psi": float(np.median(finals["psi"])),
            "psi_ratio": float(np.median(ratio)),
            "psi_ratio_q25": float(np.quantile(ratio, 0.25)),
            "psi_ratio_q75": float(np.quantile(ratio, 0.75)),
            "dist_sq": float(np.median(finals["dist_sq"])),
            "comm_rounds": float(np.median(finals["comm_rounds"])),
            # None when some seed never reached the target
            "comm_rounds_to_target": float(np.median(to_target)) if np.all(np.isfinite(to_target))
            else None,
            "grad_calls_total": float(np.median(finals["grad_calls_total"])),
            "sim_time": float(np.median(finals["sim_time"])),
        })
    summary = {"problem": probs.pop(), "n": n_clients.pop(), "methods": rows}
    by = {r["method"]: r for r in rows}
    if "gradskip" in by and "proxskip" in by:
        g, p = by["gradskip"], by["proxskip"]
        summary["gradient_ratio"] = (p["grad_calls_total"] / g["grad_calls_total"]
                                     if g["grad_calls_total"] else None)
        summary["time_ratio"] = p["sim_time"] / g["sim_time"] if g["sim_time"] else None
        kappas = json.loads(metas[0].read_text(encoding="utf-8"))["kappas"]
        summary["gradient_ratio_theory"] = analysis.gradient_ratio(np.maximum(kappas, 1.0))
    return summary


def write_summary(summary, out_dir, formats=("csv", "json")):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "json" in formats:
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True,
                                                     allow_nan=False) + "\n",
                                          encoding="utf-8")
    if "csv" in formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in summary["methods"]:
            w.writerow([_cell(r[c]) for c in SUMMARY_COLUMNS])
        (out / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")


# --------------------------------------------------------------------- verify

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f.value(x + e) - f.value(x - e)) / (2 * h)
    return g


def verify_suite(config, seed=0):
    """Oracle and invariant checks on the configured problem."""
    cfg = load_config(config) if not isinstance(config, ExperimentConfig) else config
    lifted = build_problem(cfg.problem)
    ref = problems.reference_minimizer(lifted)
    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    for f in lifted.locals[:5]:
        for _ in range(5):
            x = rng.normal(size=lifted.d) / np.sqrt(lifted.d)
            g, fd = f.gradient(x), _fd_gradient(f, x)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))
    results.append(CheckResult("gradient_finite_differences", worst <= 1e-6, f"max rel err {worst:.2e}"))

    ok = True
    for f in lifted.locals[:5]:
        for _ in range(10):
            x, y = rng.normal(size=(2, lifted.d))
            b, r2 = problems.bregman(f, x, y), float((x - y) @ (x - y))
            ok &= f.mu / 2 * r2 * (1 - 1e-9) - 1e-12 <= b <= f.smoothness() / 2 * r2 * (1 + 1e-9) + 1e-12
    results.append(CheckResult("bregman_bounds", bool(ok)))

    sub = lifted if lifted.n <= 6 else problems.lift(lifted.locals[:3])
    sref = ref if sub is lifted else problems.reference_minimizer(sub)
    opt = analysis.optimal_parameters(np.maximum(sub.kappas, 1.0))
    gap, contract = 0.0, True
    for _ in range(10):
        x = np.tile(sref.x_star, (sub.n, 1)) + rng.normal(size=(sub.n, sub.d))
        h = sref.h_star + rng.normal(size=(sub.n, sub.d))
        g = analysis.gradskip_stepsize_bound(sub.L, opt.p, opt.q)
        rep = analysis.one_step_expectation_oracle(x, h, sub, g, opt.p, opt.q, sref)
        gap = max(gap, rep.relative_gap)
        contract &= rep.contracts
    results.append(CheckResult("one_step_oracle", gap <= 1e-10 and contract,
                               f"max relative gap {gap:.2e}, contraction {contract}"))

    rc = methods.preset_config("gradskip", lifted, T=min(cfg.T, 200), seed=cfg.seeds[0])
    a = methods.run_gradskip(lifted, rc, lazy=True, reference=ref, store_iterates=True)
    b = methods.run_gradskip(lifted, rc, lazy=False, reference=ref, store_iterates=True)
    same = np.array_equal(a.iterates, b.iterates) and np.array_equal(a.grad_calls, b.grad_calls)
    results.append(CheckResult("lazy_equals_eager", bool(same)))

    full = analysis.optimal_parameters(np.maximum(lifted.kappas, 1.0))
    calls, _ = analysis.simulate_local_steps(full.p, full.q, 20_000, seed)
    emp = calls.mean(axis=0)
    theory = analysis.expected_local_steps(full.p, full.q)
    err = float(np.max(np.abs(emp - theory) / theory))
    results.append(CheckResult("expected_local_steps", err <= 0.05, f"max rel err {err:.3f}"))

    spec = compressors.CompressorSpec.block_bernoulli(full.q[:10], 1)
    rep = compressors.verify_variance_bound(spec, rng.normal(size=spec.d))
    results.append(CheckResult("compressor_variance_bound", rep.holds,
                               f"lhs {rep.lhs:.6g} rhs {rep.rhs:.6g}"))
    return results


def summary_as_text(summary):
    lines = [f"problem {summary['problem']}  n={summary['n']}"]
    for r in summary["methods"]:
        lines.append(f"  {r['method']:<14} traces={r['traces']} psi_ratio={r['psi_ratio']:.3e} "
                     f"comm={r['comm_rounds']:.0f} grads={r['grad_calls_total']:.0f} "
                     f"time={r['sim_time']:.1f}")
    for key in ("gradient_ratio", "gradient_ratio_theory", "time_ratio"):
        if summary.get(key) is not None:
            lines.append(f"  {key} = {summary[key]:.4f}")
    return "\n".join(lines)


__all__ = ["ExperimentConfig", "MethodSpec", "load_config", "run_experiment", "emit_summary",
           "verify_suite", "write_summary"]
