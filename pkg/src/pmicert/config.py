"""Numerical tolerances, kept in one place.

Defaults can be overridden from a JSON file whose keys match the field names.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class Tolerances:
    solver: float = 1e-8          # interior-point gap / feasibility
    max_iter: int = 200
    verification: float = 1e-6    # certificate coefficient residual
    psd_floor: float = 1e-9       # eigenvalue floor for moment/localizing matrices
    float_gram_floor: float = 1e-8
    ray: float = 1e-7             # infeasibility ray residuals
    monotone: float = 1e-8        # slack when checking that robust bounds decrease in k
    polya_delta: float = 1e-6     # PD margin for Polya coefficient blocks
    desk_cap: int = 600           # max total PSD block side for the embedded solver
    auto_n_cap: int = 10
    m_safety: float = 1.1         # inflation of the grid estimate of M

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULTS = Tolerances()


def load_tolerances(path: str | Path | None) -> Tolerances:
    if path is None:
        return DEFAULTS
    data = json.loads(Path(path).read_text())
    known = {f.name for f in fields(Tolerances)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
    return replace(DEFAULTS, **data)
