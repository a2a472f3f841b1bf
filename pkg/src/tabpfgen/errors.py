"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI prints it as
``error_code=<code>`` so scripts can branch on it.
"""


class TabPFGenError(Exception):
    code = "internal_error"


class MissingFileError(TabPFGenError, FileNotFoundError):
    code = "io_missing_file"


class OutputError(TabPFGenError, OSError):
    code = "io_write_error"


class CsvFormatError(TabPFGenError, ValueError):
    code = "csv_parse_error"


class EmptyTableError(TabPFGenError, ValueError):
    code = "empty_table"


class LabelColumnError(TabPFGenError, KeyError):
    code = "label_column_missing"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvalidDatasetError(TabPFGenError, ValueError):
    code = "invalid_dataset"


class SplitError(TabPFGenError, ValueError):
    code = "split_class_too_small"


class ScorerError(TabPFGenError, ValueError):
    code = "scorer_error"


class LabelRangeError(TabPFGenError, ValueError):
    code = "label_out_of_range"


class ContextGradientUnsupported(ScorerError):
    code = "context_gradient_unsupported"


class ClassAbsentError(TabPFGenError, ValueError):
    code = "class_absent"


class DivergenceError(TabPFGenError, FloatingPointError):
    code = "sgld_divergence"

    def __init__(self, step, what="energy"):
        super().__init__(f"non-finite {what} at SGLD step {step}; reduce sgld.alpha")
        self.step = step


class ConvergenceError(TabPFGenError, RuntimeError):
    code = "fit_nonconvergence"

    def __init__(self, n_iter, grad_norm):
        super().__init__(
            f"no convergence after {n_iter} iterations (gradient norm {grad_norm:.3e})"
        )
        self.n_iter = n_iter
        self.grad_norm = grad_norm


class SmoteError(TabPFGenError, ValueError):
    code = "smote_class_too_small"


class ImputationError(TabPFGenError, ValueError):
    code = "impute_no_context"


class ConfigError(TabPFGenError, ValueError):
    code = "config_invalid"


class UnknownConfigKey(ConfigError):
    code = "config_unknown_key"


class MetricError(TabPFGenError, ValueError):
    code = "metric_undefined"
