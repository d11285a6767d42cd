"""Export format of explanations: one JSON summary plus CSV rows per curve and heatmap."""

import numpy as np

from autodiff.graph import constant
from basis.features import BiasColumn, PairColumn, SingleColumn
from explain.explanations import Explanation, PairHeatmap, ShapeCurve, rank_features
from weighting.regression import AttentionWeights, WeightingMethod

CURVE_HEADER = ["x", "contribution"]
HEATMAP_HEADER = ["x", "y", "value"]


def column_to_dict(column) -> dict:
    if isinstance(column, SingleColumn):
        return {"type": "single", "feature": column.feature, "basis": column.basis}
    if isinstance(column, PairColumn):
        return {
            "type": "pair",
            "feature": column.feature,
            "basis": column.basis,
            "other_feature": column.other_feature,
            "other_basis": column.other_basis,
        }
    if isinstance(column, BiasColumn):
        return {"type": "bias"}
    raise TypeError(f"Unknown column descriptor {column!r}")


def column_from_dict(data: dict):
    kind = data.get("type")
    if kind == "single":
        return SingleColumn(int(data["feature"]), int(data["basis"]))
    if kind == "pair":
        return PairColumn(
            int(data["feature"]), int(data["basis"]), int(data["other_feature"]), int(data["other_basis"])
        )
    if kind == "bias":
        return BiasColumn()
    raise ValueError(f"Unknown column type {kind!r}")


def weights_to_dict(weights: AttentionWeights) -> dict:
    return {
        "method": weights.method.value,
        "ridge_lambda": weights.ridge_lambda,
        "columns": [column_to_dict(column) for column in weights.columns],
        "values": weights.values.tolist(),
        "pair_offsets": None if weights.pair_offsets is None else list(weights.pair_offsets),
    }


def weights_from_dict(data: dict) -> AttentionWeights:
    columns = tuple(column_from_dict(column) for column in data["columns"])
    values = np.array(data["values"], dtype=np.float64)
    if values.shape != (len(columns),):
        raise ValueError(f"{values.size} weights for {len(columns)} columns")
    offsets = data.get("pair_offsets")
    offsets = None if offsets is None else tuple(float(value) for value in offsets)
    method = WeightingMethod(data["method"])
    return AttentionWeights(constant(values, name="w"), method, columns, data["ridge_lambda"], offsets)


def curve_filename(feature: int) -> str:
    return f"curve_{feature}.csv"


def heatmap_filename(i: int, s: int, raw=False) -> str:
    return f"heatmap_{i}_{s}{'_raw' if raw else ''}.csv"


def curve_rows(curve: ShapeCurve) -> list[tuple[float, float]]:
    return list(zip(curve.grid.tolist(), curve.contributions.tolist()))


def heatmap_rows(heatmap: PairHeatmap, raw=False) -> list[tuple[float, float, float]]:
    values = heatmap.raw if raw else heatmap.values
    return [
        (x, y, float(values[row, column]))
        for row, x in enumerate(heatmap.grid_x.tolist())
        for column, y in enumerate(heatmap.grid_y.tolist())
    ]


def explanation_to_dict(explanation: Explanation, metadata: dict | None = None, raw_heatmaps: bool = True) -> dict:
    """Summary document; `raw_file` is listed only when the cross-term heatmaps are exported too."""
    weights = explanation.weights
    heatmaps = []
    for heatmap in explanation.heatmaps:
        entry = {
            "features": list(heatmap.features),
            "value_range": heatmap.value_range,
            "raw_range": heatmap.raw_range,
            "file": heatmap_filename(*heatmap.features),
        }
        if raw_heatmaps:
            entry["raw_file"] = heatmap_filename(*heatmap.features, raw=True)
        heatmaps.append(entry)
    return {
        "metadata": metadata or {},
        "request": explanation.request.to_dict(),
        "weights": weights_to_dict(weights),
        "bias": weights.bias,
        "rank_report": {
            "estimated_rank": explanation.rank_report.estimated_rank,
            "threshold": explanation.rank_report.threshold,
            "path": explanation.rank_report.path.value,
        },
        "residual_mse": explanation.residual_mse,
        "importances": [
            {"feature": feature, "importance": importance} for feature, importance in rank_features(explanation)
        ],
        "curves": [
            {"feature": curve.feature, "importance": curve.importance, "file": curve_filename(curve.feature)}
            for curve in explanation.curves
        ],
        "heatmaps": heatmaps,
    }
