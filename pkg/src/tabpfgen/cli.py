"""Command-line entry point.

Every subcommand accepts any configuration key as a flag
(``--sgld.alpha 0.05``) in addition to the shortcuts listed in ``--help``.
Failures print a single ``error_code=<code> message=<text>`` line on stderr
and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from tabpfgen import __version__, config as config_mod
from tabpfgen import plots
from tabpfgen.data import (
    Dataset,
    fit_standardizer,
    load_csv,
    load_csv_with_missing,
    make_two_moons,
    save_csv,
    standardize,
)
from tabpfgen.errors import (
    ConfigError,
    CsvFormatError,
    InvalidDatasetError,
    MissingFileError,
    OutputError,
    TabPFGenError,
    UnknownConfigKey,
)
from tabpfgen.evaluation import ExperimentConfig, run_experiment
from tabpfgen.sampler import SgldConfig, generate
from tabpfgen.scorer import median_bandwidth
from tabpfgen.tasks import (
    BalanceSpec,
    MissingMask,
    augment,
    balance,
    imputation_rmse,
    impute,
    mean_impute,
    random_mask,
    replace,
    sampling,
    smote,
    tabpfgen_generator,
)

# shortcut flag -> config key
SHORTCUTS = {
    "seed": "sgld.seed",
    "label_col": "io.label_col",
    "out_dir": "io.out_dir",
    "missing_fraction": "impute.missing_fraction",
    "target": "balance.target",
    "tasks": "eval.tasks",
    "generators": "eval.generators",
    "models": "eval.models",
    "seeds": "eval.seeds",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common_parser():
    p = _Parser(add_help=False, allow_abbrev=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="key = value file; flags override it")
    g.add_argument("--seed", help="SGLD / generator seed (sgld.seed)")
    g.add_argument("--label-col", help="label column name or index (io.label_col)")
    g.add_argument("--out-dir", help="directory for outputs (io.out_dir)")
    g.add_argument("--emit-provenance", action="store_true", default=None,
                   help="add a __synthetic__ 0/1 column to data outputs")
    for key in config_mod.SCHEMA:
        g.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", help=argparse.SUPPRESS)
    return p


def build_parser():
    common = _common_parser()
    parser = _Parser(prog="tabpfgen", allow_abbrev=False,
                     description="Energy-based tabular data synthesis from an in-context classifier.")
    parser.add_argument("--version", action="version", version=f"tabpfgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, needs_input=True):
        sp = sub.add_parser(name, parents=[common], help=help_, allow_abbrev=False)
        if needs_input:
            sp.add_argument("--input", required=True, help="training CSV")
        sp.add_argument("--output", help="data output file name (inside --out-dir)")
        return sp

    sp = add("generate", "sample synthetic rows with SGLD")
    sp.add_argument("--counts", help="per-class counts, e.g. 0:5,1:5 (default: training histogram)")
    add("augment", "real rows plus an equal volume of synthetic rows")
    add("replace", "synthetic rows only, same class histogram")
    sp = add("balance", "top up minority classes")
    sp.add_argument("--target", help="'equalize' or final per-class counts, e.g. a:90,b:90")
    sp.add_argument("--generator", choices=("tabpfgen", "smote", "sampling"), default="tabpfgen")
    for name, text in (("smote", "SMOTE baseline"), ("sampling", "resampling baseline")):
        sp = add(name, text)
        sp.add_argument("--counts", help="per-class counts (default: training histogram)")
    for name, text in (("impute", "projected-Langevin imputation"), ("mean-impute", "column-mean baseline")):
        sp = add(name, text)
        sp.add_argument("--mask", help="0/1 CSV with the feature columns, 1 = missing")
        sp.add_argument("--missing-fraction", help="generate a random mask; comma list runs a sweep")
        sp.add_argument("--ground-truth", help="complete CSV for RMSE")
    add("demo-two-moons", "two-moons demo with SVG figures", needs_input=False)
    sp = add("eval", "seeded experiment over tasks x generators x models", needs_input=False)
    sp.add_argument("--input", help="CSV dataset (default: built-in two-moons)")
    sp.add_argument("--dataset", choices=("two-moons",), default=None)
    sp.add_argument("--tasks")
    sp.add_argument("--generators")
    sp.add_argument("--models")
    sp.add_argument("--seeds")
    sp.add_argument("--csv", help="also write a flat CSV table")
    sp = sub.add_parser("inspect", parents=[common], help="print a dataset summary as JSON",
                        allow_abbrev=False)
    sp.add_argument("--input", required=True)
    return parser


def _overrides(ns):
    out = {}
    for attr, key in SHORTCUTS.items():
        v = getattr(ns, attr, None)
        if v is not None:
            out[key] = v
    if getattr(ns, "emit_provenance", None):
        out["io.emit_provenance"] = True
    for attr, v in vars(ns).items():
        if attr.startswith("cfg:") and v is not None:
            out[attr[4:]] = v
    return out


def parse_args(argv):
    parser = build_parser()
    ns, rest = parser.parse_known_args(argv)
    for tok in rest:
        if tok.startswith("--") and "." in tok:
            raise UnknownConfigKey(f"unknown config key {tok[2:].split('=')[0]!r}")
    if rest:
        raise ConfigError(f"unrecognized arguments: {' '.join(rest)}")
    cfg = config_mod.resolve(ns.config, _overrides(ns))
    return ns, cfg


# ---------------------------------------------------------------- helpers


def _sgld(cfg):
    return SgldConfig(alpha=cfg["sgld.alpha"], sigma=cfg["sgld.sigma"], eta=cfg["sgld.eta"],
                      init_noise_std=cfg["sgld.init_noise_std"], auc_stride=cfg["sgld.auc_stride"],
                      seed=cfg["sgld.seed"])


def _scorer_opts(cfg):
    return {"kind": cfg["scorer.kind"], "bandwidth": cfg["scorer.bandwidth"],
            "epsilon": cfg["scorer.epsilon"]}


def _tabpfgen(cfg):
    return tabpfgen_generator(scorer=_scorer_opts(cfg), cfg=_sgld(cfg),
                              variant=cfg["energy.variant"], swap_weight=cfg["energy.lambda"])


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _out_path(cfg, name):
    d = Path(cfg["io.out_dir"])
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {d}: {exc.strerror}") from None
    return d / name


def _write_text(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def _write_report(cfg, name, command, body):
    report = {"command": command, "version": __version__, "config": cfg, **body}
    path = _out_path(cfg, name)
    _write_text(path, json.dumps(_jsonable(report), indent=2) + "\n")
    return path


def _save(d, cfg, name):
    path = _out_path(cfg, name)
    try:
        save_csv(d, path, emit_provenance=cfg["io.emit_provenance"])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return path


def _load(path, cfg):
    return load_csv(path, cfg["io.label_col"])


def parse_counts(text, d: Dataset):
    """``"0:5,1:5"`` -> {0: 5, 1: 5}; keys may be label names or ids."""
    counts = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.rpartition(":")
        if not sep:
            raise ConfigError(f"bad count {part!r}; expected class:count")
        try:
            n = int(val)
        except ValueError:
            raise ConfigError(f"bad count {part!r}; expected class:count") from None
        if n < 0:
            raise ConfigError(f"negative count in {part!r}")
        counts[d.class_id(key)] = counts.get(d.class_id(key), 0) + n
    if not counts:
        raise ConfigError("empty --counts")
    return counts


def _histogram(d):
    return {k: int(c) for k, c in enumerate(d.class_counts()) if c > 0}


def _named_hist(d):
    names = d.label_names or tuple(str(k) for k in range(d.n_classes))
    return {names[k]: int(c) for k, c in enumerate(d.class_counts())}


def _in_standard_space(gen):
    """Run ``gen`` on standardized rows and return its output in raw units."""
    def wrapped(train, counts):
        st = fit_standardizer(train)
        out = gen(standardize(train, st), counts)
        return out.with_features(st.destandardize(out.features), standardizer=None)
    return wrapped


def _smote_gen(cfg):
    return _in_standard_space(lambda t, c: smote(t, c, k=cfg["smote.k"], seed=cfg["sgld.seed"]))


def _sampling_gen(cfg):
    return lambda t, c: sampling(t, c, seed=cfg["sgld.seed"])


# ---------------------------------------------------------------- commands


def cmd_generate(ns, cfg):
    train = _load(ns.input, cfg)
    counts = parse_counts(ns.counts, train) if ns.counts else _histogram(train)
    res = generate(train, counts, scorer=_scorer_opts(cfg), cfg=_sgld(cfg),
                   variant=cfg["energy.variant"], swap_weight=cfg["energy.lambda"])
    out = _save(res.dataset, cfg, ns.output or "synthetic.csv")
    _write_report(cfg, "generate_report.json", "generate", {
        "input": ns.input, "output": out.name, "counts": {str(k): v for k, v in counts.items()},
        "trace": res.trace.to_dict(),
    })
    return 0


def _task_report(cmd, ns, cfg, before, after):
    _write_report(cfg, f"{cmd}_report.json", cmd, {
        "input": ns.input, "output": (ns.output or f"{cmd}.csv"),
        "class_counts_in": _named_hist(before), "class_counts_out": _named_hist(after),
        "n_rows_out": after.n_rows,
    })


def cmd_protocol(ns, cfg):
    train = _load(ns.input, cfg)
    if ns.command == "augment":
        out = augment(train, _tabpfgen(cfg))
    elif ns.command == "replace":
        out = replace(train, _tabpfgen(cfg))
    else:
        target = cfg["balance.target"]
        if target.strip() != "equalize":
            target = parse_counts(target, train)
        gen = {"tabpfgen": _tabpfgen, "smote": _smote_gen, "sampling": _sampling_gen}[ns.generator](cfg)
        out = balance(train, BalanceSpec(target), gen)
    _save(out, cfg, ns.output or f"{ns.command}.csv")
    _task_report(ns.command, ns, cfg, train, out)
    return 0


def cmd_baseline(ns, cfg):
    train = _load(ns.input, cfg)
    counts = parse_counts(ns.counts, train) if ns.counts else _histogram(train)
    gen = _smote_gen(cfg) if ns.command == "smote" else _sampling_gen(cfg)
    out = gen(train, counts)
    _save(out, cfg, ns.output or f"{ns.command}.csv")
    _task_report(ns.command, ns, cfg, train, out)
    return 0


def read_mask(path, shape):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    # a header row is optional
    if rows and any(c.strip() not in ("0", "1") for c in rows[0]):
        rows = rows[1:]
    try:
        m = np.array([[int(c) for c in r] for r in rows], dtype=np.int64)
    except ValueError:
        raise CsvFormatError(f"{path}: mask cells must be 0 or 1") from None
    if m.shape != tuple(shape) or not np.isin(m, (0, 1)).all():
        raise CsvFormatError(f"{path}: mask must be a {shape[0]}x{shape[1]} matrix of 0/1")
    return m.astype(bool)


def cmd_impute(ns, cfg):
    data, native = load_csv_with_missing(ns.input, cfg["io.label_col"])
    truth = _load(ns.ground_truth, cfg) if ns.ground_truth else None
    if truth is not None and truth.features.shape != data.features.shape:
        raise InvalidDatasetError("ground truth shape differs from the input")
    if ns.mask:
        masks = [(None, native | read_mask(ns.mask, data.features.shape))]
    elif cfg["impute.missing_fraction"] is not None:
        masks = [(p, native | random_mask(data.features.shape, p, seed=cfg["sgld.seed"]).mask)
                 for p in cfg["impute.missing_fraction"]]
    else:
        masks = [(None, native)]
    runs = []
    sweep = len(masks) > 1
    for p, m in masks:
        mm = MissingMask(m)
        mean_out = mean_impute(data, mm)
        if ns.command == "impute":
            out, err = impute(data, mm, scorer=_scorer_opts(cfg), cfg=_sgld(cfg),
                              variant=cfg["energy.variant"], swap_weight=cfg["energy.lambda"],
                              ground_truth=truth)
        else:
            out, err = mean_out, None
        stem = ns.command.replace("-", "_")
        name = ns.output or f"{stem}.csv"
        if sweep:
            name = f"{Path(name).stem}_p{p:g}.csv"
        _save(out, cfg, name)
        run = {"missing_fraction": mm.missing_fraction, "requested_fraction": p, "output": name}
        if truth is not None:
            mean_err = imputation_rmse(mean_out, truth, mm)
            run["rmse_mean"] = mean_err
            run["rmse_tabpfgen" if ns.command == "impute" else "rmse"] = err if err is not None else mean_err
        runs.append(run)
    _write_report(cfg, f"{ns.command.replace('-', '_')}_report.json", ns.command,
                  {"input": ns.input, "ground_truth": ns.ground_truth, "runs": runs})
    return 0


def kde_stats(real, synth, bandwidth=None):
    h = median_bandwidth(real) if bandwidth is None else bandwidth
    self_ll = float(np.mean(plots.kde_log_density(real, real, h)))
    cross_ll = float(np.mean(plots.kde_log_density(real, synth, h)))
    return {"bandwidth": h, "real_self_mean_log_density": self_ll,
            "synthetic_at_real_mean_log_density": cross_ll, "gap_nats": abs(self_ll - cross_ll)}


def cmd_demo(ns, cfg):
    real = make_two_moons(cfg["demo.n"], cfg["demo.noise"], seed=cfg["sgld.seed"])
    res = generate(real, _histogram(real), scorer=_scorer_opts(cfg), cfg=_sgld(cfg),
                   variant=cfg["energy.variant"], swap_weight=cfg["energy.lambda"])
    synth = res.x_synth
    _save(real, cfg, "demo_real.csv")
    _save(res.dataset, cfg, ns.output or "demo_synthetic.csv")
    xs, ys, dr, ds, h = plots.density_grid(real.features, synth)
    path = _out_path(cfg, "density_grid.csv")
    try:
        plots.write_grid_csv(path, xs, ys, dr, ds)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    _write_text(_out_path(cfg, "demo_scatter.svg"),
                plots.scatter_svg(real.features, real.labels, synth, res.y_synth))
    _write_text(_out_path(cfg, "demo_contours.svg"), plots.contour_svg(xs, ys, dr, ds))
    _write_text(_out_path(cfg, "demo_marginals.svg"), plots.marginals_svg(real.features, synth))
    _write_report(cfg, "demo_report.json", "demo-two-moons", {
        "kde": kde_stats(real.features, synth, h), "trace": res.trace.to_dict(),
        "files": ["demo_real.csv", ns.output or "demo_synthetic.csv", "density_grid.csv",
                  "demo_scatter.svg", "demo_contours.svg", "demo_marginals.svg"],
    })
    return 0


def experiment_config(cfg):
    return ExperimentConfig(
        tasks=tuple(cfg["eval.tasks"]), generators=tuple(cfg["eval.generators"]),
        models=tuple(cfg["eval.models"]), seeds=tuple(cfg["eval.seeds"]),
        test_fraction=cfg["eval.test_fraction"], stratified=cfg["eval.stratified"],
        sgld=_sgld(cfg), variant=cfg["energy.variant"], swap_weight=cfg["energy.lambda"],
        scorer=_scorer_opts(cfg), smote_k=cfg["smote.k"], knn_k=cfg["knn.k"],
        logreg_l2=cfg["logreg.l2"],
    )


def cmd_eval(ns, cfg):
    from tabpfgen.evaluation import GENERATORS, MODELS, TASKS
    for key, allowed in (("eval.tasks", TASKS), ("eval.generators", GENERATORS), ("eval.models", MODELS)):
        bad = [v for v in cfg[key] if v not in allowed]
        if bad:
            raise ConfigError(f"{key}: unknown {', '.join(bad)}; expected a subset of {', '.join(allowed)}")
    if ns.input:
        data = _load(ns.input, cfg)
    else:
        data = make_two_moons(cfg["demo.n"], cfg["demo.noise"], seed=0)
    report = run_experiment(data, experiment_config(cfg))
    body = report.to_dict()
    body.pop("version")
    body["experiment"] = body.pop("config")
    body["dataset"] = ns.input or "two-moons"
    body["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    _write_report(cfg, "eval_report.json", "eval", body)
    if ns.csv:
        path = _out_path(cfg, ns.csv)
        try:
            with path.open("w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerows(report.to_csv_rows())
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return 0


def cmd_inspect(ns, cfg):
    d = _load(ns.input, cfg)
    summary = {
        "input": ns.input, "n_rows": d.n_rows, "n_features": d.n_features,
        "feature_names": list(d.feature_names), "label_column": d.label_column,
        "class_counts": _named_hist(d),
        "feature_mean": d.features.mean(axis=0).tolist(),
        "feature_std": d.features.std(axis=0).tolist(),
    }
    if d.synthetic is not None:
        summary["n_synthetic"] = int(d.synthetic.sum())
    print(json.dumps(_jsonable(summary), indent=2))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "augment": cmd_protocol,
    "replace": cmd_protocol,
    "balance": cmd_protocol,
    "smote": cmd_baseline,
    "sampling": cmd_baseline,
    "impute": cmd_impute,
    "mean-impute": cmd_impute,
    "demo-two-moons": cmd_demo,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns, cfg = parse_args(argv)
        return COMMANDS[ns.command](ns, cfg)
    except TabPFGenError as exc:
        msg = " ".join(str(exc).split())
        print(f"error_code={exc.code} message={msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
