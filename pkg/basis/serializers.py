"""
JSON checkpoints of a basis bank.

Floats are written with Python's shortest round-trip representation, so
save → load → save reproduces the same bytes.
"""

import hashlib
import json

import numpy as np

from autodiff.nn import Mlp, Parameter
from basis.bank import BasisBank, FeatureTransform, Subnet
from basis.features import COLUMN_ORDER

FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def bank_to_dict(bank: BasisBank) -> dict:
    return {
        "d": bank.d,
        "k": bank.k,
        "hidden_sizes": list(bank.hidden_sizes),
        "pairwise": bank.pairwise,
        "transform": {"shift": bank.transform.shift.tolist(), "scale": bank.transform.scale.tolist()},
        "subnets": [
            {
                "feature": subnet.feature,
                "basis": subnet.basis,
                "alpha": float(subnet.alpha.value),
                "layers": [{"weight": weight, "bias": bias} for weight, bias in subnet.mlp.to_arrays()],
            }
            for subnet in bank.subnets
        ],
    }


def bank_from_dict(data: dict) -> BasisBank:
    try:
        d, k = int(data["d"]), int(data["k"])
        subnets = []
        for entry in data["subnets"]:
            feature, basis = int(entry["feature"]), int(entry["basis"])
            name = f"subnet[{feature},{basis}]"
            mlp = Mlp.from_arrays(name, "tanh", [(layer["weight"], layer["bias"]) for layer in entry["layers"]])
            subnets.append(Subnet(feature, basis, mlp, Parameter(f"{name}.alpha", float(entry["alpha"]))))
        transform = FeatureTransform(
            np.array(data["transform"]["shift"], dtype=np.float64),
            np.array(data["transform"]["scale"], dtype=np.float64),
        )
        return BasisBank(d, k, subnets, tuple(data["hidden_sizes"]), bool(data["pairwise"]), transform)
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError(f"Malformed basis bank in checkpoint: missing or invalid {e}") from e


def checkpoint_to_dict(
    bank: BasisBank, surrogate: dict | None = None, optimizer: dict | None = None, metadata: dict | None = None
) -> dict:
    """Full checkpoint document: bank plus the optional surrogate and optimizer state."""
    return {
        "format_version": FORMAT_VERSION,
        "column_order": COLUMN_ORDER,
        "metadata": metadata or {},
        "bank": bank_to_dict(bank),
        "surrogate": surrogate,
        "optimizer": optimizer,
    }


def dumps_checkpoint(document: dict) -> str:
    return json.dumps(document, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def loads_checkpoint(text: str) -> dict:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"Checkpoint is not valid JSON (line {e.lineno}, column {e.colno})") from e
    if not isinstance(document, dict):
        raise CheckpointFormatError("Checkpoint must be a JSON object")
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint format_version {version!r}, expected {FORMAT_VERSION}")
    order = document.get("column_order")
    if order != COLUMN_ORDER:
        raise CheckpointFormatError(f"Unsupported column_order tag {order!r}, expected {COLUMN_ORDER!r}")
    return document


def checkpoint_checksum(document: dict) -> str:
    return hashlib.sha256(dumps_checkpoint(document).encode("utf-8")).hexdigest()
