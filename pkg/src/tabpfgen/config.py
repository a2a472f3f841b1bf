"""Flat ``key = value`` run configuration.

Resolution order: built-in defaults, then the ``--config`` file, then
command-line flags. Unknown keys are rejected by name.
"""

from __future__ import annotations

from pathlib import Path

from tabpfgen.errors import ConfigError, MissingFileError, UnknownConfigKey


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str_list(v):
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [p.strip() for p in str(v).split(",") if p.strip()]


def _int_list(v):
    return [int(x) for x in _str_list(v)]


def _float_list(v):
    return [float(x) for x in _str_list(v)]


def _bandwidth(v):
    if str(v).strip() == "median":
        return "median"
    h = float(v)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    return h


def _choice(*options):
    def parse(v):
        v = str(v).strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _optional_float_list(v):
    if v is None or str(v).strip() == "":
        return None
    return _float_list(v)


def _label_col(v):
    s = str(v).strip()
    try:
        return int(s)
    except ValueError:
        return s


# key -> (parser, default)
SCHEMA = {
    "scorer.kind": (_choice("soft_knn", "linear_context"), "soft_knn"),
    "scorer.bandwidth": (_bandwidth, "median"),
    "scorer.epsilon": (float, 1e-12),
    "energy.variant": (_choice("core", "full"), "full"),
    "energy.lambda": (float, 1.0),
    "sgld.alpha": (float, 0.01),
    "sgld.sigma": (float, 0.01),
    "sgld.eta": (int, 200),
    "sgld.init_noise_std": (float, 0.01),
    "sgld.auc_stride": (int, 1),
    "sgld.seed": (int, 0),
    "smote.k": (int, 5),
    "balance.target": (str, "equalize"),
    "impute.missing_fraction": (_optional_float_list, None),
    "eval.tasks": (_str_list, ["replace", "augment", "balance"]),
    "eval.generators": (_str_list, ["original", "sampling", "smote", "tabpfgen"]),
    "eval.models": (_str_list, ["logreg", "knn", "scorer"]),
    "eval.seeds": (_int_list, [1, 2, 3]),
    "eval.test_fraction": (float, 0.5),
    "eval.stratified": (_bool, True),
    "logreg.l2": (float, 1e-3),
    "knn.k": (int, 5),
    "demo.n": (int, 500),
    "demo.noise": (float, 0.1),
    "io.label_col": (_label_col, -1),
    "io.out_dir": (str, "."),
    "io.emit_provenance": (_bool, False),
}


def parse_value(key, raw):
    if key not in SCHEMA:
        raise UnknownConfigKey(f"unknown config key {key!r}")
    parser, _ = SCHEMA[key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {raw!r} for {key}: {exc}") from None


def read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such config file: {path}")
    values = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, raw)
    return values


def resolve(file_path=None, overrides=None):
    """Merge defaults, file values and overrides into a complete dict."""
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    if file_path:
        cfg.update(read_config_file(file_path))
    for key, raw in (overrides or {}).items():
        cfg[key] = parse_value(key, raw)
    return dict(sorted(cfg.items()))
