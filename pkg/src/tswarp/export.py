"""Alignment export: delimited matrices plus rendered figures.

For a single instance, every scale block's alignment matrix is written
out per variate as CSV, together with sidecar files of the input and
output time anchors and a PNG visualizing the matrix.  The identity
block exports the identity matrix, which makes the files a quick sanity
check on a trained checkpoint.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataio import GridInstance, apply_normalization, batch as make_batch
from .model import MultiScaleModel
from .plots import render_alignment

__all__ = ["export_alignment"]


def export_alignment(model: MultiScaleModel, norm_stats, instance: GridInstance,
                     out_dir) -> list:
    """Write per-(block, variate) alignment artifacts; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    normed = apply_normalization([instance], norm_stats)[0]
    b = make_batch([normed], per_step=model.config.task == "per_step")
    result = model.forward_batch(b)
    num_variates = model.config.num_variates
    raw_times = np.broadcast_to(b.times[:, None, :],
                                (1, num_variates, b.times.shape[-1]))
    paths = []
    prev_times = raw_times
    for n, state in enumerate(result.states):
        align = state.alignment.data
        times_out = state.times.data
        for k in range(num_variates):
            stem = f"alignment_block{n}_variate{k + 1}"
            matrix = align[0, k]
            csv_path = out / f"{stem}.csv"
            np.savetxt(csv_path, matrix, delimiter=",", fmt="%.17g")
            tin = out / f"{stem}_times_in.csv"
            np.savetxt(tin, prev_times[0, k], delimiter=",", fmt="%.17g")
            tout = out / f"{stem}_times_out.csv"
            np.savetxt(tout, times_out[0, k], delimiter=",", fmt="%.17g")
            observed = values = None
            if n == 1:  # first learned block: overlay the raw observations
                sel = instance.mask[k] > 0
                observed = instance.times[sel]
                values = instance.values[k][sel]
            png = render_alignment(
                matrix, prev_times[0, k], times_out[0, k],
                out / f"{stem}.png",
                title=f"block {n}, variate {k + 1}",
                observed=observed, values=values)
            paths.extend([csv_path, tin, tout, png])
        prev_times = times_out
    return paths
