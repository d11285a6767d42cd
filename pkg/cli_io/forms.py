"""
Validation of the JSON documents the commands read.

A run configuration is one JSON object: the TrainConfig fields at the top
level plus `oracle`, `dataset`, `explain`, `methods`, `out` and the export
toggles. Explain requests are objects of their own, either inline under
`explain` or in a separate file passed with --request. Both are checked with
Django forms; keys the forms do not know are rejected.
"""

import json
import logging
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np
from django import forms
from django.core.exceptions import NON_FIELD_ERRORS

from cli_io.datasets import load_csv_dataset
from explain.explanations import (
    DEFAULT_GRID_RESOLUTION,
    DEFAULT_HEATMAP_RESOLUTION,
    DEFAULT_SAMPLES,
    ExplainRequest,
)
from oracle.oracles import ANALYTIC_FUNCTIONS
from trainer.config import CENTER_SOURCES, TrainConfig
from weighting.regression import WeightingMethod

logger = logging.getLogger(__name__)

ORACLE_KINDS = ("analytic", "file", "command", "surrogate")
TRAIN_FIELDS = tuple(field.name for field in dataclass_fields(TrainConfig))


class ConfigError(ValueError):
    pass


def read_json_document(path) -> dict | list:
    """
    Parse a JSON file, reporting syntax errors with their line and column.

    Raises:
        ConfigError: If the file is missing or not valid JSON
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path} does not exist") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e


def format_form_errors(form: forms.Form, source: str) -> str:
    messages = []
    for key, errors in form.errors.items():
        prefix = "" if key == NON_FIELD_ERRORS else f"`{key}`: "
        messages.extend(f"{prefix}{error}" for error in errors)
    return f"{source}: " + "; ".join(messages)


def _resolve(base_dir, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() or base_dir is None else Path(base_dir) / path


def _number_list(value, key: str, length: int | None = None) -> list[float]:
    if not isinstance(value, list) or not all(
        isinstance(item, (int, float)) and not isinstance(item, bool) for item in value
    ):
        raise forms.ValidationError(f"{key} must be a list of numbers")
    if not all(np.isfinite(value)):
        raise forms.ValidationError(f"{key} must only contain finite numbers")
    if length is not None and len(value) != length:
        raise forms.ValidationError(f"{key} must have {length} entries, got {len(value)}")
    return [float(item) for item in value]


class JsonValueField(forms.JSONField):
    """JSONField for already parsed documents: strings are values, not JSON text."""

    def to_python(self, value):
        if isinstance(value, str):
            return value
        return super().to_python(value)


class JsonDocumentForm(forms.Form):
    """Form bound to a parsed JSON object; paths are resolved against `base_dir`."""

    def __init__(self, data: dict, base_dir=None, source="<config>"):
        if not isinstance(data, dict):
            raise ConfigError(f"{source} must contain a JSON object")
        super().__init__(data=data)
        self.base_dir = base_dir
        self.source = source

    def provided(self) -> set[str]:
        return set(self.data) & set(self.fields)

    def clean(self):
        cleaned_data = super().clean()
        for key in sorted(set(self.data) - set(self.fields)):
            self.add_error(None, f"Unknown key `{key}`")
        return cleaned_data

    def existing_path(self, name: str) -> Path | None:
        value = self.cleaned_data.get(name)
        if not value:
            return None
        path = _resolve(self.base_dir, value)
        if not path.exists():
            raise forms.ValidationError(f"{path} does not exist")
        return path

    def validated(self):
        if not self.is_valid():
            raise ConfigError(format_form_errors(self, self.source))
        return self


class ExplainRequestForm(JsonDocumentForm):
    """
    One point to explain.

    The neighbourhood is either `half_width` (a number or one per feature) or
    `fraction` of each feature's range, with the ranges given as `minimums`
    and `maximums` or taken from a CSV `dataset`.
    """

    center = JsonValueField()
    half_width = JsonValueField(required=False)
    fraction = forms.FloatField(required=False, min_value=0.0)
    minimums = JsonValueField(required=False)
    maximums = JsonValueField(required=False)
    dataset = forms.CharField(required=False)
    n_samples = forms.IntegerField(required=False, min_value=2)
    grid_resolution = forms.IntegerField(required=False, min_value=2)
    heatmap_resolution = forms.IntegerField(required=False, min_value=2)
    pairs = JsonValueField(required=False)
    use_surrogate = forms.BooleanField(required=False)
    seed = forms.IntegerField(required=False, min_value=0)

    def clean_center(self):
        return _number_list(self.cleaned_data["center"], "center")

    def clean_dataset(self):
        return self.existing_path("dataset")

    def clean_pairs(self):
        pairs = self.cleaned_data.get("pairs")
        if pairs is None:
            return ()
        if pairs == "all":
            return pairs
        if not isinstance(pairs, list) or not all(
            isinstance(pair, list) and len(pair) == 2 and all(isinstance(index, int) for index in pair)
            for pair in pairs
        ):
            raise forms.ValidationError('pairs must be "all" or a list of [i, s] index pairs')
        return tuple(tuple(pair) for pair in pairs)

    def clean(self):
        cleaned_data = super().clean()
        center = cleaned_data.get("center")
        if center is None:
            return cleaned_data

        half_width = cleaned_data.get("half_width")
        fraction = cleaned_data.get("fraction")
        if (half_width is None) == (fraction is None):
            self.add_error(None, "Give exactly one of `half_width` and `fraction`")
            return cleaned_data

        if half_width is not None:
            if isinstance(half_width, (int, float)) and not isinstance(half_width, bool):
                half_width = [float(half_width)] * len(center)
            try:
                cleaned_data["half_width"] = _number_list(half_width, "half_width", len(center))
            except forms.ValidationError as e:
                self.add_error("half_width", e)
            return cleaned_data

        try:
            cleaned_data["ranges"] = self._ranges(len(center))
        except forms.ValidationError as e:
            self.add_error("fraction", e)
        return cleaned_data

    def _ranges(self, d: int) -> tuple[list[float], list[float]]:
        dataset = self.cleaned_data.get("dataset")
        minimums = self.cleaned_data.get("minimums")
        maximums = self.cleaned_data.get("maximums")
        if dataset is not None:
            if minimums is not None or maximums is not None:
                raise forms.ValidationError("Give the feature ranges either as minimums/maximums or as a dataset")
            try:
                X, _ = load_csv_dataset(dataset)
            except ValueError as e:
                raise forms.ValidationError(str(e))
            if X.shape[1] != d:
                raise forms.ValidationError(f"{dataset} has {X.shape[1]} features, the centre has {d}")
            return X.min(axis=0).tolist(), X.max(axis=0).tolist()
        if minimums is None or maximums is None:
            raise forms.ValidationError("`fraction` needs minimums and maximums, or a dataset")
        return _number_list(minimums, "minimums", d), _number_list(maximums, "maximums", d)

    def to_request(self) -> ExplainRequest:
        data = self.cleaned_data
        options = {
            "n_samples": data.get("n_samples") or DEFAULT_SAMPLES,
            "grid_resolution": data.get("grid_resolution") or DEFAULT_GRID_RESOLUTION,
            "heatmap_resolution": data.get("heatmap_resolution") or DEFAULT_HEATMAP_RESOLUTION,
            "pairs": data.get("pairs") or (),
            "use_surrogate": bool(data.get("use_surrogate")),
            "seed": data.get("seed") or 0,
        }
        if data.get("half_width") is not None:
            return ExplainRequest.box(data["center"], data["half_width"], **options)
        minimums, maximums = data["ranges"]
        return ExplainRequest.fraction_of_range(data["center"], data["fraction"], minimums, maximums, **options)


def parse_explain_requests(document, base_dir=None, source="<request>") -> list[ExplainRequest]:
    """A request file holds one request object or a list of them."""
    documents = document if isinstance(document, list) else [document]
    if not documents:
        raise ConfigError(f"{source} contains no explain request")
    return [
        ExplainRequestForm(item, base_dir, f"{source}[{index}]" if isinstance(document, list) else source)
        .validated()
        .to_request()
        for index, item in enumerate(documents)
    ]


class RunConfigForm(JsonDocumentForm):
    # TrainConfig; omitted keys keep the TrainConfig (and environment) defaults
    batch_size = forms.IntegerField(required=False, min_value=2)
    iterations = forms.IntegerField(required=False, min_value=0)
    learning_rate = forms.FloatField(required=False)
    center_stddev = forms.FloatField(required=False)
    local_radius = forms.FloatField(required=False)
    k = forms.IntegerField(required=False, min_value=1)
    lambda_ridge = forms.FloatField(required=False)
    rank_tolerance = forms.FloatField(required=False)
    surrogate_enabled = forms.BooleanField(required=False)
    lambda_surrogate = forms.FloatField(required=False)
    pairwise_enabled = forms.BooleanField(required=False)
    seed = forms.IntegerField(required=False, min_value=0)
    method = forms.CharField(required=False)
    lambda_linear = forms.FloatField(required=False)
    center_source = forms.ChoiceField(required=False, choices=[(source, source) for source in CENTER_SOURCES])
    radius_fraction = forms.FloatField(required=False)
    standardize = forms.BooleanField(required=False)
    hidden_sizes = JsonValueField(required=False)
    surrogate_sizes = JsonValueField(required=False)
    alpha_init = forms.FloatField(required=False)

    oracle = JsonValueField()
    dataset = forms.CharField(required=False)
    explain = JsonValueField(required=False)
    methods = JsonValueField(required=False)
    out = forms.CharField(required=False)
    plots = forms.NullBooleanField(required=False)
    raw_heatmaps = forms.NullBooleanField(required=False)

    def clean_method(self):
        method = self.cleaned_data.get("method")
        if not method:
            return None
        try:
            return WeightingMethod.parse(method)
        except ValueError as e:
            raise forms.ValidationError(str(e))

    def _clean_sizes(self, name: str):
        sizes = self.cleaned_data.get(name)
        if sizes is None:
            return None
        if not isinstance(sizes, list) or not all(isinstance(size, int) and size > 0 for size in sizes):
            raise forms.ValidationError(f"{name} must be a list of positive integers")
        return tuple(sizes)

    def clean_hidden_sizes(self):
        return self._clean_sizes("hidden_sizes")

    def clean_surrogate_sizes(self):
        return self._clean_sizes("surrogate_sizes")

    def clean_oracle(self):
        spec = self.cleaned_data["oracle"]
        if not isinstance(spec, dict):
            raise forms.ValidationError("oracle must be an object with a `kind`")
        kind = spec.get("kind")
        if kind not in ORACLE_KINDS:
            raise forms.ValidationError(f"Unknown oracle kind {kind!r}, expected one of: {', '.join(ORACLE_KINDS)}")
        if kind == "analytic" and spec.get("name") not in ANALYTIC_FUNCTIONS:
            raise forms.ValidationError(
                f"Unknown analytic oracle {spec.get('name')!r}, expected one of: {', '.join(ANALYTIC_FUNCTIONS)}"
            )
        if kind == "file":
            if "path" not in spec:
                raise forms.ValidationError("A file oracle needs a `path`")
            path = _resolve(self.base_dir, spec["path"])
            if not path.exists():
                raise forms.ValidationError(f"{path} does not exist")
        if kind == "command":
            if not isinstance(spec.get("argv"), list) or not spec["argv"]:
                raise forms.ValidationError("A command oracle needs a non-empty `argv` list")
            if not isinstance(spec.get("d"), int):
                raise forms.ValidationError("A command oracle needs its input dimension `d`")
        return spec

    def clean_dataset(self):
        return self.existing_path("dataset")

    def clean_explain(self):
        document = self.cleaned_data.get("explain")
        if document is None:
            return []
        try:
            return parse_explain_requests(document, self.base_dir, "explain")
        except ConfigError as e:
            raise forms.ValidationError(str(e))

    def clean_methods(self):
        methods = self.cleaned_data.get("methods")
        if methods is None:
            return None
        if not isinstance(methods, list) or not methods:
            raise forms.ValidationError("methods must be a non-empty list of weighting method names")
        try:
            return [WeightingMethod.parse(method) for method in methods]
        except ValueError as e:
            raise forms.ValidationError(str(e))

    def train_config(self, seed: int | None = None) -> TrainConfig:
        """TrainConfig from the provided keys; `seed` overrides the document."""
        options = {name: self.cleaned_data[name] for name in TRAIN_FIELDS if name in self.provided()}
        options = {name: value for name, value in options.items() if value is not None}
        if seed is not None:
            options["seed"] = seed
        return TrainConfig(**options)

    @property
    def export_plots(self) -> bool:
        return self.cleaned_data.get("plots") is not False

    @property
    def export_raw_heatmaps(self) -> bool:
        return self.cleaned_data.get("raw_heatmaps") is not False


def load_run_config(path) -> RunConfigForm:
    """
    Read and validate a run configuration file.

    Raises:
        ConfigError: On invalid JSON, unknown keys, bad values or missing paths, naming the key
    """
    path = Path(path)
    form = RunConfigForm(read_json_document(path), base_dir=path.parent, source=str(path)).validated()
    logger.debug("Loaded run configuration %s", path)
    return form


def load_explain_requests(path) -> list[ExplainRequest]:
    path = Path(path)
    return parse_explain_requests(read_json_document(path), base_dir=path.parent, source=str(path))
