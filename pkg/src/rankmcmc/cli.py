"""Command-line entry point: simulate, sample, fit, and inspect.

Subcommands:
  simulate   draw a synthetic dataset from the model and write it out
  gibbs      run plain data-augmentation chains on a dataset
  sandwich   run sandwich chains (uniform or local group move)
  em         fit the prior precision by Monte Carlo EM
  oracle     exact posterior, transition matrix, and spectra (small instances)
  diagnose   recompute convergence diagnostics from stored trace files

Settings come from a YAML config file (``--config``); the flags ``--data``,
``--schema``, ``--out``, ``--seed`` and ``--chains`` override it, and the
environment variable ``RANKMCMC_OUT`` overrides the configured output
directory (but not an explicit ``--out``). Relative paths inside a config
file resolve against the config file's directory. Every run writes a
``manifest.json`` with the resolved settings, their hash, and a checksum per
artifact; manifests carry no timestamps, so re-running one yields
byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .diagnostics import acf, flat_state_index, psrf, trap_report, tv_distance
from .em import EmConfig, run_em
from .errors import ConfigError, DataError, NumericalError
from .estimators import rb_marginal_table
from .model import CategoryPriors, HyperParams, RankCounts, simulate_data
from .oracle import (compare_spectra, da_kernel, enumerate_posterior,
                     group_move_kernel, local_move_kernel)
from .permutation import build_tables, rank
from .samplers import AlignmentCache, ChainConfig, ChainTrace, run_chains

_ENV_OUT = "RANKMCMC_OUT"
_TV_STATE_LIMIT = 20_000
_ACF_MAX_LAG = 50

_TOP_KEYS = {"command", "data", "schema", "out", "seed", "hyper", "prior",
             "chain", "em", "simulate", "oracle", "diagnose"}


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}; "
                          f"allowed: {sorted(allowed)}")


def _section(cfg: dict, name: str, allowed) -> dict:
    sec = cfg.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    _check_keys(sec, allowed, f"section {name!r}")
    return sec


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return section[key]


def _as_int(val, where: str) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{where} must be an integer, got {val!r}")
    return val


def _as_float(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where} must be a number, got {val!r}")
    return float(val)


class _Run:
    """Resolved settings shared by every subcommand."""

    def __init__(self, args):
        self.cfg = dataio.load_config(args.config) if args.config else {}
        _check_keys(self.cfg, _TOP_KEYS, "config file")
        declared = self.cfg.get("command")
        if declared is not None and declared != args.command:
            raise ConfigError(f"config declares command {declared!r} but "
                              f"{args.command!r} was invoked")
        self.base = Path(args.config).parent if args.config else Path(".")

        out = args.out or os.environ.get(_ENV_OUT) or self.cfg.get("out")
        if out is None:
            raise ConfigError("no output directory: pass --out, set "
                              f"{_ENV_OUT}, or put 'out' in the config")
        # only --out and the environment variable escape the config anchor
        self.out = Path(out) if (args.out or os.environ.get(_ENV_OUT)) \
            else self.base / out
        self.out.mkdir(parents=True, exist_ok=True)

        seed = self.cfg.get("seed", 0) if args.seed is None else args.seed
        self.seed = _as_int(seed, "seed")

        self.data_path = self._path(args.data, "data")
        self.schema_path = self._path(args.schema, "schema")
        self.artifacts: list[str] = []
        self.inputs: list[Path] = []

    def _path(self, flag_value, key: str) -> Path | None:
        if flag_value:
            return Path(flag_value)
        if key in self.cfg and self.cfg[key] is not None:
            return self.base / str(self.cfg[key])
        return None

    def need_dataset(self) -> dataio.Dataset:
        if self.data_path is None or self.schema_path is None:
            raise ConfigError("this command needs --data and --schema "
                              "(flags or config keys)")
        schema = dataio.load_schema(self.schema_path)
        dataset = dataio.load_dataset(self.data_path, schema)
        self.inputs += [self.data_path, self.schema_path]
        return dataset

    def hyper(self, tables) -> HyperParams:
        sec = _section(self.cfg, "hyper", {"precision", "scale"})
        precision = _as_float(_require(sec, "precision", "section 'hyper'"),
                              "hyper.precision")
        scale = _as_float(sec.get("scale", 1.0), "hyper.scale")
        if precision < 0 or scale <= 0:
            raise ConfigError("need precision >= 0 and scale > 0")
        return HyperParams.from_precision(precision, tables, scale=scale)

    def priors(self, g: int, order: int) -> CategoryPriors:
        sec = _section(self.cfg, "prior", {"kind", "path"})
        kind = sec.get("kind", "uniform")
        if kind == "uniform":
            self.prior_spec = {"kind": "uniform"}
            return CategoryPriors.uniform(g, order)
        if kind == "file":
            path = self.base / str(_require(sec, "path", "section 'prior'"))
            self.inputs.append(path)
            self.prior_spec = {"kind": "file", "path": str(path.resolve())}
            return dataio.load_priors(path, g, order)
        raise ConfigError(f"prior.kind must be 'uniform' or 'file', "
                          f"got {kind!r}")

    def emit(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def finish(self, command: str, resolved: dict) -> int:
        resolved = dict(resolved)
        resolved["seed"] = self.seed
        if self.data_path is not None:
            resolved["data"] = str(self.data_path.resolve())
        if self.schema_path is not None:
            resolved["schema"] = str(self.schema_path.resolve())
        if getattr(self, "prior_spec", None) is not None:
            resolved["prior"] = self.prior_spec
        dataio.write_manifest(self.out, command, resolved,
                              self.artifacts, self.inputs)
        print(f"wrote {len(self.artifacts) + 1} files to {self.out}")
        return 0


def _parse_central(raw, g: int, tables, name: str = "central") -> np.ndarray:
    """Ranking list from config: word indices or one-line words."""
    if not isinstance(raw, list) or len(raw) != g:
        raise ConfigError(f"{name!r} must list one ranking per category "
                          f"({g} entries)")
    out = np.empty(g, dtype=np.int64)
    for j, entry in enumerate(raw):
        if isinstance(entry, int) and not isinstance(entry, bool):
            if not 1 <= entry <= tables.order:
                raise ConfigError(f"{name}[{j}] = {entry} out of "
                                  f"range 1..{tables.order}")
            out[j] = entry
        elif isinstance(entry, list):
            try:
                out[j] = rank(entry)
            except ValueError as exc:
                raise ConfigError(f"{name}[{j}]: {exc}") from None
        else:
            raise ConfigError(f"{name}[{j}] must be a ranking index or a "
                              f"one-line word, got {entry!r}")
    return out


def cmd_simulate(args) -> int:
    run = _Run(args)
    sec = _section(run.cfg, "simulate",
                   {"items", "sizes", "central", "noise", "factors"})
    p = _as_int(_require(sec, "items", "section 'simulate'"),
                "simulate.items")
    sizes = _require(sec, "sizes", "section 'simulate'")
    if not isinstance(sizes, list) or not sizes or any(
            isinstance(b, bool) or not isinstance(b, int) or b < 0
            for b in sizes):
        raise ConfigError("'sizes' must be a list of counts >= 0")
    g = len(sizes)
    try:
        tables = build_tables(p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    central = _parse_central(_require(sec, "central", "section 'simulate'"),
                             g, tables)

    noise = sec.get("noise")
    if not isinstance(noise, dict):
        raise ConfigError("section 'simulate' needs a 'noise' mapping")
    _check_keys(noise, {"pmf", "precision", "scale"}, "simulate.noise")
    rng = np.random.default_rng(run.seed)
    if "pmf" in noise:
        pmf = np.asarray(noise["pmf"], dtype=float)
    elif "precision" in noise:
        lam = _as_float(noise["precision"], "noise.precision")
        scale = _as_float(noise.get("scale", 1.0), "noise.scale")
        if lam < 0 or scale <= 0:
            raise ConfigError("need noise.precision >= 0 and noise.scale > 0")
        hyp = HyperParams.from_precision(lam, tables, scale=scale)
        pmf = rng.dirichlet(hyp.alpha)
    else:
        raise ConfigError("simulate.noise needs either 'pmf' or 'precision'")

    if "factors" in sec:
        factors = []
        for entry in sec["factors"]:
            if not isinstance(entry, dict) or "name" not in entry \
                    or "levels" not in entry:
                raise ConfigError("each factor needs 'name' and 'levels'")
            factors.append(dataio.Factor(str(entry["name"]),
                                         tuple(str(v)
                                               for v in entry["levels"])))
        try:
            schema = dataio.DatasetSchema(items=p, factors=tuple(factors))
        except DataError as exc:
            # the declaration came from the config file, not a data file
            raise ConfigError(str(exc)) from None
        if schema.g != g:
            raise ConfigError(f"factors define {schema.g} categories but "
                              f"'sizes' has {g}")
    else:
        schema = dataio.default_schema(p, g)

    try:
        counts = simulate_data(pmf, central, sizes, tables, rng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dataset = dataio.dataset_from_counts(counts, schema)
    dataio.save_dataset(dataset, run.emit("data.csv"))
    dataio.save_schema(schema, run.emit("schema.yaml"))
    dataio.write_summary(run.emit("truth.txt"), {
        "items": p, "categories": g, "rows": int(sum(sizes)),
        "central": central, "noise_pmf": pmf, "seed": run.seed,
    })
    return run.finish("simulate", {
        "simulate": {"items": p, "sizes": sizes,
                     "central": [int(c) for c in central],
                     "noise": noise},
    })


_CHAIN_KEYS = {"iterations", "burnin", "thin", "chains", "variant",
               "init_ranks", "batches"}


def _chain_config(run: _Run, command: str) -> tuple[ChainConfig, int, dict]:
    sec = _section(run.cfg, "chain", _CHAIN_KEYS)
    iterations = _as_int(_require(sec, "iterations", "section 'chain'"),
                         "chain.iterations")
    burnin = _as_int(sec.get("burnin", 0), "chain.burnin")
    thin = _as_int(sec.get("thin", 1), "chain.thin")
    if command == "gibbs":
        variant = sec.get("variant", "gibbs")
        if variant != "gibbs":
            raise ConfigError("the gibbs command runs variant 'gibbs' only")
    else:
        variant = sec.get("variant", "sandwich_uniform")
        if variant not in ("sandwich_uniform", "sandwich_local"):
            raise ConfigError("the sandwich command needs variant "
                              "'sandwich_uniform' or 'sandwich_local'")
    n_chains = _as_int(sec.get("chains", 1), "chain.chains")
    config = ChainConfig(iterations=iterations, burnin=burnin, thin=thin,
                         seed=run.seed, variant=variant)
    return config, n_chains, sec


def _write_diagnostics(run: _Run, traces: list[ChainTrace],
                       exact_probs: np.ndarray | None,
                       order: int) -> None:
    """Shared by the samplers and the diagnose command so a rerun from
    stored traces reproduces these files byte for byte."""
    min_retained = min(t.retained for t in traces)
    max_lag = min(_ACF_MAX_LAG, min_retained - 1)
    if max_lag >= 1:
        cols = [acf(t.theta[:, 0], max_lag) for t in traces]
        with open(run.emit("acf.csv"), "w") as f:
            f.write("lag," + ",".join(f"chain_{t.chain_index}"
                                      for t in traces) + "\n")
            for lag in range(max_lag + 1):
                f.write(",".join([str(lag)]
                                 + ["%.17g" % c[lag] for c in cols]) + "\n")

    report: dict = {"chains": len(traces), "max_lag": max_lag}
    for t in traces:
        pre = f"chain_{t.chain_index}."
        report[pre + "retained"] = t.retained
        if t.variant != "gibbs":
            report[pre + "acceptance_rate"] = float(
                np.mean(t.accepted == 1))
        if exact_probs is not None:
            if t.retained > _ACF_MAX_LAG:
                rep = trap_report(t, exact_probs, order)
                report[pre + "tv_to_exact"] = rep.tv_to_exact
                report[pre + "max_abs_acf_lags_3_50"] = \
                    rep.max_abs_acf_in_window
                report[pre + "escaped_initial_state"] = rep.escaped
            else:
                # too short for the lag window; keep the occupancy checks
                flat = flat_state_index(t.ranks, order)
                emp = np.bincount(flat, minlength=exact_probs.size) / flat.size
                report[pre + "tv_to_exact"] = tv_distance(emp, exact_probs)
                report[pre + "escaped_initial_state"] = \
                    bool(np.unique(flat).size > 1)
    if len(traces) >= 2 and min_retained >= 10:
        report["psrf_theta_1"] = psrf([t.theta[:min_retained, 0]
                                       for t in traces])
    dataio.write_summary(run.emit("diagnostics.txt"), report)


def _exact_probs_if_small(data: RankCounts, hyp, priors, tables):
    if data.order ** data.g > _TV_STATE_LIMIT:
        return None, None
    post = enumerate_posterior(data, hyp, priors, tables,
                               cap=_TV_STATE_LIMIT)
    return post, post.probs


def cmd_mcmc(args) -> int:
    run = _Run(args)
    dataset = run.need_dataset()
    data = dataset.counts()
    tables = build_tables(data.p)
    hyp = run.hyper(tables)
    priors = run.priors(data.g, data.order)
    config, n_chains, sec = _chain_config(run, args.command)
    if args.chains is not None:
        n_chains = args.chains
    if n_chains < 1:
        raise ConfigError("chain count must be positive")

    init_ranks = None
    if "init_ranks" in sec:
        init_ranks = _parse_central(sec["init_ranks"], data.g, tables,
                                    name="init_ranks")

    traces = run_chains(data, hyp, priors, tables, config, n_chains,
                        init_ranks=init_ranks)
    for t in traces:
        t.to_csv(run.emit(f"trace_{t.chain_index}.csv"))

    batches = _as_int(sec.get("batches", 30), "chain.batches")
    cache = AlignmentCache(data, hyp, priors, tables)
    with open(run.emit("estimates.csv"), "w") as f:
        f.write("chain,category,center_index,estimate,se\n")
        for t in traces:
            try:
                est, se = rb_marginal_table(t, cache, batch_count=batches)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            for j in range(data.g):
                for i in range(data.order):
                    f.write(f"{t.chain_index},{j + 1},{i + 1},"
                            f"{'%.17g' % est[j, i]},{'%.17g' % se[j, i]}\n")

    _, exact_probs = _exact_probs_if_small(data, hyp, priors, tables)
    _write_diagnostics(run, traces, exact_probs, data.order)
    return run.finish(args.command, {
        "hyper": {"precision": hyp.precision, "scale": hyp.scale},
        "chain": {"iterations": config.iterations, "burnin": config.burnin,
                  "thin": config.thin, "variant": config.variant,
                  "chains": n_chains, "batches": batches,
                  "init_ranks": None if init_ranks is None
                  else [int(v) for v in init_ranks]},
    })


def cmd_diagnose(args) -> int:
    run = _Run(args)
    sec = _section(run.cfg, "diagnose", {"traces"})
    raw = _require(sec, "traces", "section 'diagnose'")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'traces' must be a nonempty list of paths")
    traces = []
    for entry in raw:
        path = run.base / str(entry)
        if not path.exists():
            raise DataError(f"trace file {path} does not exist")
        run.inputs.append(path)
        try:
            traces.append(ChainTrace.from_csv(path))
        except (KeyError, ValueError, IndexError, ConfigError) as exc:
            raise DataError(f"trace file {path} is malformed: "
                            f"{exc}") from None
    p_set = {t.p for t in traces}
    g_set = {t.g for t in traces}
    if len(p_set) != 1 or len(g_set) != 1:
        raise DataError("trace files disagree on the instance shape")

    exact_probs = None
    order = math.factorial(traces[0].p)
    has_data = run.data_path is not None and run.schema_path is not None
    if has_data:
        dataset = run.need_dataset()
        data = dataset.counts()
        if (data.p, data.g) != (traces[0].p, traces[0].g):
            raise DataError("data file does not match the trace shape")
        tables = build_tables(data.p)
        hyp = run.hyper(tables)
        priors = run.priors(data.g, data.order)
        _, exact_probs = _exact_probs_if_small(data, hyp, priors, tables)
        order = data.order

    _write_diagnostics(run, traces, exact_probs, order)
    return run.finish("diagnose", {
        "diagnose": {"traces": [str(p) for p in raw],
                     "with_oracle": has_data},
    })


_EM_KEYS = {"lambda0", "scale", "max_iters", "plateau_window", "plateau_tol",
            "search_lo", "search_hi", "golden_tol", "inner_iterations",
            "inner_burnin", "inner_thin", "final_iterations", "final_burnin",
            "variant"}


def cmd_em(args) -> int:
    run = _Run(args)
    dataset = run.need_dataset()
    data = dataset.counts()
    tables = build_tables(data.p)
    priors = run.priors(data.g, data.order)
    sec = _section(run.cfg, "em", _EM_KEYS)
    kwargs = {k: sec[k] for k in sec}
    try:
        config = EmConfig(seed=run.seed, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    result = run_em(data, priors, tables, config)

    traj = result.trajectory
    sizes = np.full(traj.size, config.inner_iterations, dtype=np.int64)
    sizes[0] = 0
    # the last entry comes from the longer polishing chain unless the fit
    # degenerated mid-loop (flat objective before any polish ran)
    polished = (not result.degenerate or result.plateau_reached
                or result.iterations > config.max_iters)
    if polished:
        sizes[-1] = config.final_iterations
    dataio.write_em_trajectory(run.emit("em_trajectory.csv"), traj, sizes)

    summary = {
        "lambda_hat": result.lambda_hat,
        "se": result.se,
        "information": result.information,
        "iterations": result.iterations,
        "plateau_reached": result.plateau_reached,
        "boundary": result.boundary,
        "degenerate": result.degenerate,
    }
    if result.boundary:
        summary["note"] = "boundary solution"
    dataio.write_summary(run.emit("lambda_hat.txt"), summary)
    print(f"lambda_hat={result.lambda_hat:.6g} se={result.se:.6g}"
          + (" (boundary solution)" if result.boundary else ""))
    return run.finish("em", {"em": kwargs})


def cmd_oracle(args) -> int:
    run = _Run(args)
    dataset = run.need_dataset()
    data = dataset.counts()
    tables = build_tables(data.p)
    hyp = run.hyper(tables)
    priors = run.priors(data.g, data.order)
    sec = _section(run.cfg, "oracle", {"mc_draws", "middle", "cap"})
    mc_draws = _as_int(sec.get("mc_draws", 1_000_000), "oracle.mc_draws")
    cap = _as_int(sec.get("cap", 36), "oracle.cap")
    middle = sec.get("middle", "uniform")
    if middle not in ("uniform", "local"):
        raise ConfigError("oracle.middle must be 'uniform' or 'local'")

    post = enumerate_posterior(data, hyp, priors, tables, cap=cap)
    labels = dataio.state_labels(post.states)
    dataio.write_matrix(run.emit("posterior.csv"),
                        post.probs.reshape(-1, 1), labels,
                        ["exact center-tuple posterior, one row per state"])

    K = da_kernel(data, hyp, priors, tables, mc_draws=mc_draws,
                  seed=run.seed, cap=cap)
    dataio.write_matrix(run.emit("kernel.csv"), K, labels,
                        ["one-sweep center-chain transition matrix",
                         "entry (r, c) = P(state r -> state c)"])

    if middle == "uniform":
        R = group_move_kernel(post, tables, accept="metropolis")
    else:
        R = local_move_kernel(post, hyp, tables)
    comp = compare_spectra(K, R, post.probs)
    with open(run.emit("spectra.csv"), "w") as f:
        f.write("index,center_chain,with_group_move\n")
        for i, (a, b) in enumerate(zip(comp.da, comp.sandwich), start=1):
            f.write(f"{i},{'%.17g' % a},{'%.17g' % b}\n")

    top = int(np.argmax(post.probs))
    dataio.write_summary(run.emit("summary.txt"), {
        "states": post.q,
        "min_kernel_entry": float(K.min()),
        "second_eigenvalue": float(comp.da[1]) if post.q > 1 else 0.0,
        "second_eigenvalue_with_group_move":
            float(comp.sandwich[1]) if post.q > 1 else 0.0,
        "group_move_never_slower": comp.dominated(),
        "max_eigenvalue_increase": float(np.max(comp.sandwich - comp.da)),
        "mode_state": labels[top],
        "mode_probability": float(post.probs[top]),
    })
    return run.finish("oracle", {
        "hyper": {"precision": hyp.precision, "scale": hyp.scale},
        "oracle": {"mc_draws": mc_draws, "middle": middle, "cap": cap},
    })


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankmcmc",
        description="Bayesian rank aggregation with categorical covariates")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("simulate", cmd_simulate, "draw a synthetic dataset"),
        ("gibbs", cmd_mcmc, "run plain data-augmentation chains"),
        ("sandwich", cmd_mcmc, "run chains with the extra group move"),
        ("em", cmd_em, "fit the prior precision by Monte Carlo EM"),
        ("oracle", cmd_oracle, "exact posterior, kernel, and spectra"),
        ("diagnose", cmd_diagnose, "recompute diagnostics from saved traces"),
    ]
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML settings file")
        p.add_argument("--data", help="dataset CSV (overrides config)")
        p.add_argument("--schema", help="schema YAML (overrides config)")
        p.add_argument("--out", help="output directory (overrides config "
                                     f"and {_ENV_OUT})")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--chains", type=int,
                       help="chain count override (gibbs/sandwich)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
