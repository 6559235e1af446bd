"""Plain-text export of path ensembles."""

from __future__ import annotations

import csv
import json
from typing import TextIO

import numpy as np

from .engine import PathEnsemble


def write_paths_csv(ens: PathEnsemble, fh: TextIO, t: float | None = None) -> None:
    """One row per path: survival at ``t`` (default last horizon), endpoint, branch, kill record."""
    n = ens.domain.dim
    h = ens.horizon_index(t) if ens.horizons else None
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path", "survived"] + [f"x{k}" for k in range(n)]
               + ["branch", "kill_time", "kill_piece", "status"])
    end = np.full((ens.n_paths, n), np.nan)
    tag = np.full(ens.n_paths, -1, dtype=int)
    alive = np.zeros(ens.n_paths, dtype=bool)
    if h is not None:
        idx = ens.endpoint_index[h]
        end[idx] = ens.endpoints[h]
        tag[idx] = ens.endpoint_branch[h]
        alive[idx] = True
    else:
        end = ens.exit_point
    for i in range(ens.n_paths):
        row = [i, int(alive[i])] + [repr(float(c)) for c in end[i]]
        row += [int(tag[i]) if alive[i] else "", repr(float(ens.kill_time[i])),
                int(ens.kill_piece[i]), int(ens.status[i])]
        w.writerow(row)


def summary_json(ens: PathEnsemble) -> str:
    return json.dumps(ens.summary(), sort_keys=True)
