"""Scenario orchestration: runs, diagnostics rows, sweeps, verification.

This is the glue between the time stepper and the file outputs: one CSV
row per diagnostics snapshot, checkpoints at their own cadence, figures
rendered next to the delimited output.
"""

import os

import numpy as np

from . import (config as cfgmod, diagnostics as dg, evolution, fourier,
               harmonic, seriesio, surface as surf)
from .errors import FilterContamination


def _row_from_snapshot(ref, cfg, snap, current, energy):
    geom = surf.build_geometry(ref, surf.HeightField(snap.gamma))
    grid_p, _ = harmonic.bulk_grid(geom, "plus", cfg.geometry.n_z)
    mon = dg.stability_monitors(
        ref, snap, cfg.physics.alpha, current,
        rt_pressure=cfg.diagnostics.rt_pressure, n_z=cfg.geometry.n_z,
        tol=cfg.numerics.tol_ell,
        with_syrovatskij=cfg.diagnostics.syrovatskij)
    row = {
        "t": snap.t,
        "E_total": energy.total,
        "E_kinetic": energy.kinetic,
        "E_magnetic_plus": energy.magnetic_plus,
        "E_magnetic_vacuum": energy.magnetic_vacuum,
        "E_surface": energy.surface,
        "input_power": energy.input_power,
        "budget_residual": float("nan"),
        "rt_min": mon.rt_min,
        "upsilon": mon.upsilon,
        "wall_gap": mon.wall_gap,
        "chart_margin": mon.chart_margin,
        "max_div_v": float(np.max(np.abs(grid_p.div(snap.v)))),
        "max_div_h": float(np.max(np.abs(grid_p.div(snap.h)))),
        "E_l0": float("nan"), "E_l1": float("nan"),
        "E_alpha_bar": float("nan"),
        "calE0": float("nan"), "calE1": float("nan"),
        "calE2": float("nan"), "calE3": float("nan"),
        "res_simons": float("nan"), "res_lap_n": float("nan"),
        "res_ds_transport": float("nan"),
        "res_kappa1": float("nan"), "res_kappa2": float("nan"),
    }
    return row


def build_rows(ref, cfg, snaps, current):
    """Per-snapshot diagnostics plus windowed post-fills (budget, identity
    residuals, optional fractional energies)."""
    energies = [dg.physical_energy(ref, s, cfg.physics.alpha, current,
                                   n_z=cfg.geometry.n_z,
                                   tol=cfg.numerics.tol_ell)
                for s in snaps]
    rows = [_row_from_snapshot(ref, cfg, s, current, e)
            for s, e in zip(snaps, energies)]

    if len(snaps) >= 3:
        _, res, _ = dg.energy_budget(energies)
        for i, r in enumerate(res):
            rows[i + 1]["budget_residual"] = float(r)

    sc = cfg.diagnostics.sobolev_cadence
    if sc > 0:
        for i in range(0, len(snaps), sc):
            se = dg.sobolev_energies(
                ref, snaps[i], cfg.physics.alpha, current,
                levels=tuple(cfg.diagnostics.sobolev_levels),
                k_index=cfg.diagnostics.k_index, n_z=cfg.geometry.n_z,
                tol=cfg.numerics.tol_ell,
                rt_pressure=cfg.diagnostics.rt_pressure)
            rows[i]["E_l0"] = se.e_l.get(0, float("nan"))
            rows[i]["E_l1"] = se.e_l.get(1, float("nan"))
            rows[i]["E_alpha_bar"] = se.e_alpha_bar
            for j, name in enumerate(("calE0", "calE1", "calE2", "calE3")):
                rows[i][name] = se.cal_e[j]

    if cfg.diagnostics.identity_residuals and len(snaps) >= 5:
        try:
            res = dg.kappa_evolution_residuals(
                ref, snaps, cfg.physics.alpha, current,
                n_z=cfg.geometry.n_z, tol=cfg.numerics.tol_ell)
            mid = len(snaps) // 2
            rows[mid]["res_simons"] = res.simons
            rows[mid]["res_lap_n"] = res.lap_n
            rows[mid]["res_ds_transport"] = res.ds_transport
            rows[mid]["res_kappa1"] = res.kappa_first_order
            rows[mid]["res_kappa2"] = res.kappa_second_order
        except FilterContamination:
            pass
    return rows


def run_scenario(cfg, out_dir=None, cadence=None, collect=True,
                 state=None, progress=None):
    """Execute one scenario; returns (final state, snapshots, rows).

    Outputs: <out>/series.csv, <out>/checkpoints/ck_NNNNNN.ckpt (at the
    configured cadence plus a final one), figures when enabled.
    """
    out = out_dir or cfg.output.out_dir
    os.makedirs(out, exist_ok=True)
    ckdir = os.path.join(out, "checkpoints")
    cad = cadence or cfg.diagnostics.cadence

    ref, state0, current = cfgmod.initial_condition(cfg)
    if state is None:
        state = state0
    ctx = evolution.RunContext(ref, cfgmod.stepper_config(cfg), current)

    ck_counter = {"n": 0}

    def on_step(st, report):
        cc = cfg.output.checkpoint_cadence
        if cc > 0:
            ck_counter["n"] += 1
            if ck_counter["n"] % cc == 0:
                os.makedirs(ckdir, exist_ok=True)
                seriesio.checkpoint(
                    st, os.path.join(ckdir, f"ck_{ck_counter['n']:06d}.ckpt"),
                    config_text=cfg.source_text, config_hash=cfg.hash(),
                    filter_state=cfg.stepper.filter)
        if progress:
            progress(st, report)

    state, snaps = evolution.run(ctx, state, cadence=cad, on_step=on_step)
    rows = build_rows(ref, cfg, snaps, current) if collect else []
    if collect:
        seriesio.write_series(rows, os.path.join(out, "series.csv"),
                              config_hash=cfg.hash(),
                              filter_state=cfg.stepper.filter)
    os.makedirs(ckdir, exist_ok=True)
    seriesio.checkpoint(state, os.path.join(ckdir, "final.ckpt"),
                        config_text=cfg.source_text, config_hash=cfg.hash(),
                        filter_state=cfg.stepper.filter)
    if collect and cfg.output.figures:
        from . import report
        report.run_figures(rows, snaps, out,
                           meta=f"config={cfg.hash()} filter="
                                f"{'on' if cfg.stepper.filter else 'off'}")
    return ref, state, snaps, rows


def continue_scenario(ckpt_path, out_dir=None, cadence=None):
    """Restore a checkpoint and run the embedded scenario to its t_end."""
    state, header = seriesio.restore(ckpt_path)
    cfg = cfgmod.loads_config(header["config_text"], name=ckpt_path)
    return run_scenario(cfg, out_dir=out_dir, cadence=cadence, state=state)


def sweep_alpha(cfg, alphas, out_dir=None):
    """Repeat the scenario over alpha values; compare final interfaces.

    Emits one subdirectory per alpha, a sweep.csv of pairwise consecutive
    interface L^2 distances, and a comparison figure.  The distances are
    reported as a trend; no convergence claim is attached.
    """
    import copy

    out = out_dir or cfg.output.out_dir
    os.makedirs(out, exist_ok=True)
    finals = []
    for a in alphas:
        sub = copy.deepcopy(cfg)
        sub.physics.alpha = float(a)
        sub.output.figures = False
        ref, state, snaps, rows = run_scenario(
            sub, out_dir=os.path.join(out, f"alpha_{a:g}"))
        finals.append(state.gamma.values.copy())
    qw = fourier.TORUS_AREA / finals[0].size
    dists = []
    for g1, g2 in zip(finals, finals[1:]):
        dists.append(float(np.sqrt(np.sum((g1 - g2) ** 2) * qw)))
    lines = [f"# slabmhd-sweep v1 config={cfg.hash()}",
             "alpha_pair,l2_distance"]
    for (a1, a2), d in zip(zip(alphas, alphas[1:]), dists):
        lines.append(f"{a1:g}->{a2:g},{seriesio.format_value(d)}")
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if cfg.output.figures:
        from . import report
        report.sweep_figure(alphas, dists, os.path.join(out, "sweep.png"),
                            meta=f"config={cfg.hash()}")
    monotone = all(d2 < d1 for d1, d2 in zip(dists, dists[1:]))
    return dists, monotone
