"""Retention sweeps and component ablation grids over the toy task."""

from __future__ import annotations

import csv
import math

import numpy as np

from .fab import ALL_VARIANTS
from .freq_transform import SPATIAL, retained_energy
from .model import ModelConfig
from .training import toy_config, train_toy

SWEEP_FIELDS = ("m", "kept_energy", "total_energy", "energy_fraction", "toy_loss")
ABLATION_FIELDS = ("grid", "setting", "patch_size", "retain", "channel_att", "pos_enc", "fab", "fab_variant",
                   "freq_mode", "initial_loss", "final_loss")


def energy_sweep(images, n: int):
    """Pooled retained energy for m = 1..n over a set of images."""
    rows = []
    for m in range(1, n + 1):
        kept = total = 0.0
        for img in images:
            k, t = retained_energy(img, n, m)
            kept += k
            total += t
        frac = kept / total if total > 0 else 1.0
        rows.append({"m": m, "kept_energy": kept, "total_energy": total, "energy_fraction": frac, "toy_loss": None})
    return rows


def retention_sweep(images, config: ModelConfig, steps: int = 20, seed: int = 0, count: int = 16):
    """Energy rows for m = 1..n, each with the final toy loss at that m.

    ``steps=0`` skips training and leaves ``toy_loss`` empty.
    """
    n = config.extractor.patch_size
    rows = energy_sweep(images, n)
    if steps > 0:
        for row in rows:
            trace = train_toy(dataset_seed=seed, steps=steps, init_seed=seed, config=config.with_(retain=row["m"]),
                              count=count)
            row["toy_loss"] = trace[-1]
    return rows


def ablation_settings(base: ModelConfig, retain_values=range(1, 9)):
    """``(grid, setting, config)`` triples, in a fixed order."""
    out = []
    for m in retain_values:
        out.append(("retain", f"m={m}", base.with_(retain=m)))
    for n in (8, 16):
        out.append(("patch_size", f"n={n}", base.with_(patch_size=n, retain=min(base.retain, n))))
    out.append(("components", "full", base))
    out.append(("components", "no-channel-att", base.with_(channel_att=False)))
    out.append(("components", "no-pos-enc", base.with_(pos_enc=False)))
    out.append(("components", "no-fab", base.with_(fab=False)))
    out.append(("components", "spatial-mode", base.with_(freq_mode=SPATIAL)))
    for v in ALL_VARIANTS:
        out.append(("fab_variant", str(v), base.with_(fab=True, fab_variant=v)))
    out.append(("fab_variant", "none", base.with_(fab=False)))
    return out


def run_ablation(base: ModelConfig | None = None, steps: int = 20, seed: int = 0, count: int = 16, progress=None):
    base = base or toy_config()
    rows = []
    for grid, setting, cfg in ablation_settings(base):
        trace = train_toy(dataset_seed=seed, steps=steps, init_seed=seed, config=cfg, count=count)
        if progress:
            progress(grid, setting, trace[-1])
        rows.append(
            {
                "grid": grid,
                "setting": setting,
                "patch_size": cfg.extractor.patch_size,
                "retain": cfg.retain,
                "channel_att": int(cfg.channel_att),
                "pos_enc": int(cfg.pos_enc),
                "fab": int(cfg.fab),
                "fab_variant": str(cfg.fab_variant) if cfg.fab else "none",
                "freq_mode": cfg.freq_mode,
                "initial_loss": trace[0],
                "final_loss": trace[-1],
            }
        )
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def write_rows_csv(rows, fields, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])
