"""Seeded Monte-Carlo experiment driver.

Implements the whole sensing chain (compensation -> synchronization ->
clutter suppression -> range-velocity estimation -> DOA estimation ->
association), plus preset experiment configurations reproducing the
headline behaviours at desk scale: clutter-suppression ratio sweeps,
sync MSE sweeps with the theoretical bound, association success rates,
and range-velocity MSE against the CRLB.

Every trial draws its randomness from a counter-based stream keyed on
(master seed, condition, trial index), so any single trial can be
replayed in isolation and aggregation order never matters.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis, doa, preprocess, rv_estimator, sync
from .scenario import (SPEED_OF_LIGHT, OffsetState, SceneConfig,
                       generate_scene, moving_paths)
from .waveform import OfdmConfig, speed_equivalent_cfo

KINDS = ("suppression", "sync_mse", "association", "rv_mse")
ASSOCIATION_VARIANTS = {
    "full": doa.associate_full,
    "delay": doa.associate_delay_domain,
    "doppler": doa.associate_doppler_domain,
}


@dataclass
class TargetEstimate:
    """Associated parameter triple of one perceived target.

    ``velocity_mps`` is the physical approaching speed c f_D / (2 f_c);
    the raw delay-Doppler readout is twice that.
    """

    range_m: float
    velocity_mps: float
    doa_rad: float


@dataclass(frozen=True)
class PipelineFlags:
    clutter_filter: str = "mti"        # mti | rma | none
    g_d: int = 1
    forgetting: float = 0.05
    association: str = "doppler"       # full | delay | doppler
    window: str = "rectangular"
    sync_variant: str = "cmcc"         # cmcc | scmcc
    k_doppler: int = 5
    k_range: int = 25

    def __post_init__(self):
        if self.clutter_filter not in ("mti", "rma", "none"):
            raise ValueError("clutter_filter must be mti, rma or none")
        if self.association not in ASSOCIATION_VARIANTS:
            raise ValueError("unknown association variant")
        if self.sync_variant not in ("cmcc", "scmcc"):
            raise ValueError("sync_variant must be cmcc or scmcc")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "custom"
    kind: str = "sync_mse"
    scene: SceneConfig = field(default_factory=SceneConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    pipeline: PipelineFlags = field(default_factory=PipelineFlags)
    snr_sweep: tuple = (10.0,)
    n_trials: int = 200
    seed: int = 1234
    output_dir: str = "out"
    # kind-specific knobs
    cfo_speeds: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)   # suppression sweep (m/s)
    clutter_counts: tuple = (3, 15)                 # sync_mse sweep
    clutter_rcs_total: float | None = None          # fixed static RCS budget
    with_bound: bool = False                        # sync_mse: add MSE bound
    bound_window: int = 8
    velocity_gaps: tuple = (0.0, 1.0, 2.0)          # association sweep (m/s)
    windows: tuple = ("rectangular", "hamming")     # association sweep
    los_ratios: tuple = ()                          # association: LOS sweep
    g_d_sweep: tuple = (1, 5, 10)                   # rv_mse sweep

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if len(self.snr_sweep) == 0:
            raise ValueError("snr_sweep must be non-empty")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list
    summary: list
    curves: dict
    files: list


def trial_rng(master_seed, *key) -> np.random.Generator:
    """Independent, replayable random stream for one (condition, trial)."""
    seq = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return np.random.Generator(np.random.SFC64(seq))


# ---------------------------------------------------------------------------
# single-frame sensing pipeline
# ---------------------------------------------------------------------------

def run_pipeline(cfg: OfdmConfig, frames, flags: PipelineFlags, n_targets,
                 fingerprint=None):
    """Full sensing chain on one received frame stack.

    With a calibration ``fingerprint`` (captured at the synchronized
    reference state), the offset drift is estimated from the
    pre-suppression spectrum and compensated in the signal domain before
    clutter cancellation; a drifted CFO would otherwise move the static
    echoes off the canceller null.  Returns (list of TargetEstimate,
    SyncEstimate | None).
    """
    stack = preprocess.compensate(frames)

    sync_est = None
    if fingerprint is not None:
        m0 = int(np.argmax(np.sum(np.abs(stack.hat_y) ** 2, axis=(0, 2))))
        raw_spec = rv_estimator.spectrum(
            stack.hat_y[:, m0, :], flags.k_doppler, flags.k_range,
            flags.window, cfg, half_rows=True)
        estimator = sync.cmcc_estimate if flags.sync_variant == "cmcc" \
            else sync.scmcc_estimate
        sync_est = estimator(fingerprint, raw_spec)
        stack = preprocess.derotate_offsets(stack, sync_est.d_xi,
                                            sync_est.d_tau, cfg)

    work = _apply_clutter_filter(stack, flags)
    m = preprocess.select_antenna(work)
    gamma = preprocess.stack_antenna_row(work, m)
    spec2d = rv_estimator.spectrum(gamma, flags.k_doppler, flags.k_range,
                                   flags.window, cfg, half_rows=True)
    peaks = rv_estimator.find_peaks(spec2d, n_expected=n_targets)
    mapped = rv_estimator.map_to_physical(peaks, cfg)
    physical = [(r, v / 2.0) for r, v in mapped]

    doas = doa.estimate_doa(work, n_targets, d_over_lambda=cfg.antenna_spacing)
    assoc = ASSOCIATION_VARIANTS[flags.association](
        work, doas, peaks, flags.window, cfg.antenna_spacing)

    estimates = [TargetEstimate(range_m=r, velocity_mps=v,
                                doa_rad=float(doas.angles[assoc.pairs[l][1]]))
                 for l, (r, v) in enumerate(physical)]
    return estimates, sync_est


# ---------------------------------------------------------------------------
# suppression-ratio experiment (MTI vs RMA under CFO)
# ---------------------------------------------------------------------------

def _run_suppression(spec: ExperimentSpec):
    records, curves = [], {}
    cfg = spec.ofdm
    antennas = [0]
    for ci, v_cfo in enumerate(spec.cfo_speeds):
        scene = replace(spec.scene, cfo_speed_range=(v_cfo, v_cfo))
        sums = {"mti": None, "rma": None}
        for t in range(spec.n_trials):
            rng = trial_rng(spec.seed, ci, t)
            paths, offsets = generate_scene(scene, cfg.carrier_hz,
                                            cfg.cp_delay_limit_s, rng)
            truth = analysis.decompose_paths(cfg, paths, offsets,
                                             antennas=antennas)
            before = preprocess.CompensatedStack(truth.clutter + truth.moving)
            results = {}
            for filt in ("mti", "rma"):
                if filt == "mti":
                    after = preprocess.mti_cancel(before, spec.pipeline.g_d)
                else:
                    after = preprocess.rma_cancel(before, spec.pipeline.forgetting)
                res = analysis.suppression_ratio(before, after, truth)
                ratio_db = 10.0 * np.log10(np.clip(res.ratio, 1e-300, 1e300))
                # align on input symbol index so both filters share an axis
                full = np.full(cfg.n_symbols, np.nan)
                full[res.symbols] = ratio_db
                results[filt] = full
                sums[filt] = full if sums[filt] is None else sums[filt] + full
            records.append({
                "trial": t, "cfo_speed": v_cfo, "seed_key": f"{ci}/{t}",
                "mti_mean_db": float(np.nanmean(results["mti"][50:])),
                "rma_mean_db": float(np.nanmean(results["rma"][50:])),
            })
        for filt in ("mti", "rma"):
            curves[(filt, v_cfo)] = sums[filt] / spec.n_trials

    summary = []
    for (filt, v_cfo), curve in sorted(curves.items()):
        for g in range(cfg.n_symbols):
            if np.isfinite(curve[g]):
                summary.append({"filter": filt, "cfo_speed": v_cfo,
                                "symbol": g, "ratio_db": float(curve[g])})
    return records, summary, curves


# ---------------------------------------------------------------------------
# synchronization MSE experiment (CMCC vs S-CMCC, optional bound)
# ---------------------------------------------------------------------------

def _sync_errors(cfg, drift, est):
    v_err = (SPEED_OF_LIGHT * cfg.subcarrier_spacing_hz *
             (cfg.normalized_cfo(drift.cfo_hz) - est.d_xi) / (2.0 * cfg.carrier_hz))
    r_err = SPEED_OF_LIGHT * (drift.to_s - est.d_tau)
    return v_err ** 2, r_err ** 2


def _run_sync_mse(spec: ExperimentSpec):
    cfg = spec.ofdm
    flags = spec.pipeline
    records, summary, curves = [], [], {}
    total_static_rcs = spec.clutter_rcs_total
    if total_static_rcs is None:
        total_static_rcs = spec.scene.rcs * min(spec.clutter_counts)
    for n_clutter in spec.clutter_counts:
        if n_clutter % spec.scene.n_targets:
            raise ValueError("clutter count must divide evenly over targets")
        per_target = n_clutter // spec.scene.n_targets
        # fixed total scattered power redistributed over the clutter count,
        # so more paths means a flatter, less distinctive fingerprint
        scene = replace(spec.scene, statics_per_target=(per_target, per_target),
                        static_rcs=total_static_rcs / n_clutter)
        for si, snr in enumerate(spec.snr_sweep):
            acc = {"cmcc_v": [], "cmcc_r": [], "scmcc_v": [], "scmcc_r": [],
                   "bound": []}
            misses = 0
            for t in range(spec.n_trials):
                scene_rng = trial_rng(spec.seed, 0, t)
                paths, _ = generate_scene(scene, cfg.carrier_hz,
                                          cfg.cp_delay_limit_s, scene_rng)
                drift = OffsetState(
                    cfo_hz=speed_equivalent_cfo(
                        cfg, trial_rng(spec.seed, 1, t).uniform(
                            *scene.cfo_speed_range)),
                    to_s=trial_rng(spec.seed, 2, t).uniform(
                        *scene.to_range_interval) / SPEED_OF_LIGHT)
                noise_rng = trial_rng(spec.seed, 3, t, si)

                calib = preprocess.synthesize_compensated(
                    cfg, paths, OffsetState(), snr, noise_rng, antennas=[0])
                spec1 = rv_estimator.spectrum(
                    calib.hat_y[:, 0, :], flags.k_doppler, flags.k_range,
                    flags.window, cfg, half_rows=True)
                try:
                    fp = sync.capture_fingerprint(spec1)
                except sync.FingerprintError:
                    misses += 1
                    records.append({"trial": t, "clutter": n_clutter,
                                    "snr_db": snr, "miss": 1})
                    continue
                updated = preprocess.synthesize_compensated(
                    cfg, paths, drift, snr, noise_rng, antennas=[0])
                spec2 = rv_estimator.spectrum(
                    updated.hat_y[:, 0, :], flags.k_doppler, flags.k_range,
                    flags.window, cfg, half_rows=True)
                est_c = sync.cmcc_estimate(fp, spec2)
                est_s = sync.scmcc_estimate(fp, spec2)
                cv, cr = _sync_errors(cfg, drift, est_c)
                sv, sr = _sync_errors(cfg, drift, est_s)
                acc["cmcc_v"].append(cv)
                acc["cmcc_r"].append(cr)
                acc["scmcc_v"].append(sv)
                acc["scmcc_r"].append(sr)
                rec = {"trial": t, "clutter": n_clutter, "snr_db": snr,
                       "miss": 0, "true_dxi": cfg.normalized_cfo(drift.cfo_hz),
                       "true_dtau": drift.to_s,
                       "cmcc_dxi": est_c.d_xi, "cmcc_dtau": est_c.d_tau,
                       "scmcc_dxi": est_s.d_xi, "scmcc_dtau": est_s.d_tau,
                       "cmcc_sqerr_r": cr, "scmcc_sqerr_r": sr}
                if spec.with_bound:
                    bound = analysis.sync_mse_bound(
                        paths, drift, cfg, snr, spec.bound_window,
                        flags.k_doppler, flags.k_range)
                    acc["bound"].append(bound.mse)
                    rec["bound_mse_r"] = bound.mse
                records.append(rec)
            row = {"clutter": n_clutter, "snr_db": snr, "misses": misses,
                   "mse_v_cmcc": float(np.mean(acc["cmcc_v"])),
                   "mse_r_cmcc": float(np.mean(acc["cmcc_r"])),
                   "mse_v_scmcc": float(np.mean(acc["scmcc_v"])),
                   "mse_r_scmcc": float(np.mean(acc["scmcc_r"]))}
            if spec.with_bound:
                row["bound_mse_r"] = float(np.mean(acc["bound"]))
            summary.append(row)
            curves[(n_clutter, snr)] = row
    return records, summary, curves


# ---------------------------------------------------------------------------
# association success experiment
# ---------------------------------------------------------------------------

def _apply_clutter_filter(stack, flags) -> preprocess.MtiStack:
    if flags.clutter_filter == "mti":
        return preprocess.mti_cancel(stack, flags.g_d)
    if flags.clutter_filter == "rma":
        return preprocess.rma_cancel(stack, flags.forgetting)
    return preprocess.MtiStack(breve_y=stack.hat_y, g_d=0)


def _truth_peak_bins(cfg, targets, flags, g_eff) -> rv_estimator.PeakSet:
    """Delay-Doppler bins of the targets from their true parameters.

    The association experiments score the association step in isolation,
    so peak coordinates come straight from the rounded true frequencies
    rather than from a detector pass.
    """
    p_ratio = cfg.n_samples_per_symbol / cfg.n_subcarriers
    rows = np.array([int(round(cfg.normalized_cfo(p.doppler) * p_ratio *
                               flags.k_doppler * g_eff)) for p in targets])
    cols = np.array([int(round(p.delay / cfg.sample_period_s * flags.k_range))
                     for p in targets])
    return rv_estimator.PeakSet(rows=rows, cols=cols,
                                magnitudes=np.ones(rows.size),
                                k_doppler=flags.k_doppler,
                                k_range=flags.k_range, n_rows_data=g_eff)


def _association_trial(spec, scene, windows, snr, rng):
    """One association trial, scored for every requested window.

    The received stack, clutter filtering and MUSIC pass are shared; only
    the association transform depends on the window.  Returns a dict
    window -> (correct_decisions, n_targets); a DOA-estimation miss
    counts every decision as wrong.
    """
    cfg = spec.ofdm
    flags = spec.pipeline
    paths, _ = generate_scene(scene, cfg.carrier_hz, cfg.cp_delay_limit_s, rng)
    offsets = OffsetState()  # synchronous operation isolates association
    stack = preprocess.synthesize_compensated(cfg, paths, offsets, snr, rng)
    work = _apply_clutter_filter(stack, flags)

    n_targets = scene.n_targets
    try:
        doas = doa.estimate_doa(work, n_targets,
                                d_over_lambda=cfg.antenna_spacing)
    except doa.DoaEstimationError:
        return {w: (0, n_targets) for w in windows}

    targets = moving_paths(paths)
    peaks = _truth_peak_bins(cfg, targets, flags, work.breve_y.shape[0])
    sin_est = np.sin(doas.angles)
    wanted = [int(np.argmin(np.abs(sin_est - math.sin(p.doa))))
              for p in targets]

    outcome = {}
    for w in windows:
        assoc = ASSOCIATION_VARIANTS[flags.association](
            work, doas, peaks, w, cfg.antenna_spacing)
        correct = sum(assoc.doa_index_for_peak(t) == wanted[t]
                      for t in range(n_targets))
        outcome[w] = (correct, n_targets)
    return outcome


def _run_association(spec: ExperimentSpec):
    """Association sweep; the success rate is per decision, i.e. the
    probability that an individual target's angle association is correct."""
    records, summary, curves = [], [], {}
    los_sweep = spec.los_ratios if spec.los_ratios else (None,)
    snr = spec.snr_sweep[0]
    for li, los in enumerate(los_sweep):
        for gi, gap in enumerate(spec.velocity_gaps):
            scene = replace(spec.scene, min_speed_gap=gap)
            if los is not None:
                scene = replace(scene, include_los=True, los_power_ratio=los)
            counts = {w: [0, 0] for w in spec.windows}  # correct, total
            for t in range(spec.n_trials):
                rng = trial_rng(spec.seed, li, gi, t)
                outcome = _association_trial(spec, scene, spec.windows,
                                             snr, rng)
                for w in spec.windows:
                    good, total = outcome[w]
                    counts[w][0] += good
                    counts[w][1] += total
                    records.append({"trial": t, "gap": gap, "window": w,
                                    "los_ratio": los if los is not None else "",
                                    "correct": good, "targets": total})
            for w in spec.windows:
                good, total = counts[w]
                rate = good / max(total, 1)
                row = {"gap": gap, "window": w,
                       "los_ratio": los if los is not None else "",
                       "success_rate": rate}
                summary.append(row)
                curves[(w, gap, los)] = rate
    return records, summary, curves


# ---------------------------------------------------------------------------
# range-velocity MSE + CRLB experiment
# ---------------------------------------------------------------------------

def _run_rv_mse(spec: ExperimentSpec):
    cfg = spec.ofdm
    flags = spec.pipeline
    records, summary, curves = [], [], {}
    conditions = [("mti", g_d) for g_d in spec.g_d_sweep] + [("clutter_free", 0)]
    for ci, (mode, g_d) in enumerate(conditions):
        for si, snr in enumerate(spec.snr_sweep):
            sq_v, sq_r, crlb_v, crlb_r = [], [], [], []
            misses = 0
            for t in range(spec.n_trials):
                rng = trial_rng(spec.seed, 0, t)
                paths, _ = generate_scene(spec.scene, cfg.carrier_hz,
                                          cfg.cp_delay_limit_s, rng)
                if mode == "clutter_free":
                    paths = moving_paths(paths)
                noise_rng = trial_rng(spec.seed, 3, t, si)
                stack = preprocess.synthesize_compensated(
                    cfg, paths, OffsetState(), snr, noise_rng, antennas=[0])
                work = preprocess.mti_cancel(stack, g_d) if mode == "mti" else stack
                gamma = work.breve_y[:, 0, :] if mode == "mti" \
                    else work.hat_y[:, 0, :]
                spec2d = rv_estimator.spectrum(gamma, flags.k_doppler,
                                               flags.k_range, flags.window,
                                               cfg, half_rows=True)
                try:
                    peaks = rv_estimator.find_peaks(spec2d, n_expected=1)
                except rv_estimator.PeakDetectionError:
                    misses += 1
                    continue
                (r_est, v_est), = rv_estimator.map_to_physical(peaks, cfg)
                target = moving_paths(paths)[0]
                v_true = SPEED_OF_LIGHT * target.doppler / (2.0 * cfg.carrier_hz)
                r_true = SPEED_OF_LIGHT * target.delay
                sq_v.append((v_est / 2.0 - v_true) ** 2)
                sq_r.append((r_est - r_true) ** 2)

                sigma0 = stack.noise_var
                beta = analysis.beta_for_antenna(cfg, [target], OffsetState(), 0)
                bound = analysis.crlb(
                    [target], beta, cfg, g_d if mode == "mti" else 0,
                    2.0 * sigma0 if mode == "mti" else sigma0)
                crlb_v.append(bound.per_path_bounds[0][0])
                crlb_r.append(bound.per_path_bounds[0][1])
                records.append({"trial": t, "mode": mode, "g_d": g_d,
                                "snr_db": snr, "sqerr_v": sq_v[-1],
                                "sqerr_r": sq_r[-1], "crlb_v": crlb_v[-1],
                                "crlb_r": crlb_r[-1]})
            row = {"mode": mode, "g_d": g_d, "snr_db": snr, "misses": misses,
                   "mse_v": float(np.mean(sq_v)) if sq_v else float("nan"),
                   "mse_r": float(np.mean(sq_r)) if sq_r else float("nan"),
                   "crlb_v": float(np.mean(crlb_v)) if crlb_v else float("nan"),
                   "crlb_r": float(np.mean(crlb_r)) if crlb_r else float("nan")}
            summary.append(row)
            curves[(mode, g_d, snr)] = row
    return records, summary, curves


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def list_presets():
    return ["fig5", "fig6", "fig7", "fig8", "fig10", "fig11"]


def preset(name, n_trials=None, seed=None, output_dir=None) -> ExperimentSpec:
    """Desk-scale §-style experiment configurations by figure name."""
    base_scene = SceneConfig()
    sync_ofdm = OfdmConfig(n_rx_antennas=1, n_tx_antennas=1)
    if name == "fig5":
        spec = ExperimentSpec(
            name=name, kind="suppression", scene=base_scene, ofdm=sync_ofdm,
            snr_sweep=(0.0,), cfo_speeds=(1.0, 2.0, 3.0, 4.0, 5.0),
            pipeline=PipelineFlags(g_d=1))
    elif name == "fig6":
        spec = ExperimentSpec(
            name=name, kind="rv_mse",
            scene=replace(base_scene, n_targets=1,
                          target_speed_range=(5.0, 40.0)),
            ofdm=sync_ofdm, snr_sweep=(-10.0, 0.0, 10.0, 20.0),
            g_d_sweep=(1, 5, 10))
    elif name == "fig7":
        # two points sample the threshold region, two the asymptotic floor
        spec = ExperimentSpec(
            name=name, kind="sync_mse", scene=base_scene, ofdm=sync_ofdm,
            snr_sweep=(-10.0, -5.0, 10.0, 20.0), clutter_counts=(3, 15))
    elif name == "fig8":
        spec = ExperimentSpec(
            name=name, kind="sync_mse", scene=base_scene, ofdm=sync_ofdm,
            snr_sweep=(0.0, 5.0, 10.0, 15.0, 20.0), clutter_counts=(15,),
            with_bound=True)
    elif name == "fig10":
        spec = ExperimentSpec(
            name=name, kind="association",
            scene=replace(base_scene, min_doa_gap_deg=5.0,
                          min_projected_speed=2.0,
                          cfo_speed_range=(0.0, 0.0),
                          to_range_interval=(0.0, 0.0)),
            ofdm=OfdmConfig(n_tx_antennas=1), snr_sweep=(10.0,),
            velocity_gaps=(0.0, 1.0, 2.0),
            windows=("rectangular", "hamming"),
            pipeline=PipelineFlags(association="full", g_d=10))
    elif name == "fig11":
        spec = ExperimentSpec(
            name=name, kind="association",
            scene=replace(base_scene, min_doa_gap_deg=5.0,
                          min_projected_speed=2.0,
                          statics_per_target=(0, 0),
                          cfo_speed_range=(0.0, 0.0),
                          to_range_interval=(0.0, 0.0)),
            ofdm=OfdmConfig(n_tx_antennas=1), snr_sweep=(10.0,),
            velocity_gaps=(0.0, 1.0, 2.0), windows=("rectangular",),
            los_ratios=(0.5, 2.0),
            pipeline=PipelineFlags(association="full",
                                   clutter_filter="none"))
    else:
        raise ValueError(f"unknown preset {name!r}; see list_presets()")
    if n_trials is not None:
        spec = replace(spec, n_trials=n_trials)
    if seed is not None:
        spec = replace(spec, seed=seed)
    if output_dir is not None:
        spec = replace(spec, output_dir=output_dir)
    else:
        spec = replace(spec, output_dir=os.path.join("out", name))
    return spec


# ---------------------------------------------------------------------------
# experiment spec <-> key=value config text
# ---------------------------------------------------------------------------

_NESTED = {"scene": SceneConfig, "ofdm": OfdmConfig, "pipeline": PipelineFlags}


def _format_value(value):
    if value is None:
        return ""
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return "1" if value else "0"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_like(text, template):
    if template is None:
        return None if text.strip() == "" else float(text)
    if isinstance(template, bool):
        return text.strip() in ("1", "true", "True")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, (tuple, list)):
        if text.strip() == "":
            return ()
        parts = [p for p in text.split(",")]
        inner = template[0] if len(template) else 0.0
        return tuple(_parse_like(p, inner) for p in parts)
    return text.strip()


def save_experiment_spec(filename, spec: ExperimentSpec) -> None:
    with open(filename, "w") as fh:
        for f in dataclasses.fields(spec):
            value = getattr(spec, f.name)
            if f.name in _NESTED:
                for sub in dataclasses.fields(value):
                    fh.write(f"{f.name}.{sub.name}="
                             f"{_format_value(getattr(value, sub.name))}\n")
            else:
                fh.write(f"{f.name}={_format_value(value)}\n")


def load_experiment_spec(filename) -> ExperimentSpec:
    entries = {}
    with open(filename) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            entries[key.strip()] = val
    defaults = ExperimentSpec()
    kwargs = {}
    nested_kwargs = {k: {} for k in _NESTED}
    for key, val in entries.items():
        if "." in key:
            group, sub = key.split(".", 1)
            template = getattr(getattr(defaults, group), sub)
            nested_kwargs[group][sub] = _parse_like(val, template)
        else:
            kwargs[key] = _parse_like(val, getattr(defaults, key))
    for group, cls in _NESTED.items():
        if nested_kwargs[group]:
            kwargs[group] = cls(**nested_kwargs[group])
    return ExperimentSpec(**kwargs)


# ---------------------------------------------------------------------------
# experiment execution + artifact emission
# ---------------------------------------------------------------------------

_RUNNERS = {"suppression": _run_suppression, "sync_mse": _run_sync_mse,
            "association": _run_association, "rv_mse": _run_rv_mse}


def _write_csv(filename, rows) -> None:
    if not rows:
        with open(filename, "w") as fh:
            fh.write("\n")
        return
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(filename, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_value(row.get(c, "")) for c in columns)
                     + "\n")


_PLOT_TEMPLATE = '''"""Plot helper for the {name} experiment; reads summary.csv."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("summary.csv")))
series = defaultdict(list)
for row in rows:
    series[tuple(row[k] for k in {group!r})].append(
        (float(row[{x!r}]), float(row[{y!r}])))

plt.figure(figsize=(6, 4))
for key, points in series.items():
    points.sort()
    plt.plot([p[0] for p in points], [p[1] for p in points],
             marker="o", label=" ".join(str(k) for k in key))
plt.xlabel({x!r})
plt.ylabel({y!r})
plt.yscale({yscale!r})
plt.grid(True, alpha=0.4)
plt.legend()
plt.tight_layout()
plt.savefig("plot_{name}.png", dpi=200)
print("wrote plot_{name}.png")
'''

_PLOT_AXES = {
    "suppression": (("filter", "cfo_speed"), "symbol", "ratio_db", "linear"),
    "sync_mse": (("clutter",), "snr_db", "mse_r_cmcc", "log"),
    "association": (("window", "los_ratio"), "gap", "success_rate", "linear"),
    "rv_mse": (("mode", "g_d"), "snr_db", "mse_r", "log"),
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Execute all trials of ``spec`` and write results under output_dir.

    Emits results.csv (one row per trial), summary.csv (one row per
    sweep point), plot_<name>.py, and experiment.cfg for replay.
    """
    records, summary, curves = _RUNNERS[spec.kind](spec)
    os.makedirs(spec.output_dir, exist_ok=True)
    files = []
    for fname, rows in (("results.csv", records), ("summary.csv", summary)):
        path = os.path.join(spec.output_dir, fname)
        _write_csv(path, rows)
        files.append(path)
    cfg_path = os.path.join(spec.output_dir, "experiment.cfg")
    save_experiment_spec(cfg_path, spec)
    files.append(cfg_path)
    group, x, y, yscale = _PLOT_AXES[spec.kind]
    plot_path = os.path.join(spec.output_dir, f"plot_{spec.name}.py")
    with open(plot_path, "w") as fh:
        fh.write(_PLOT_TEMPLATE.format(name=spec.name, group=group, x=x, y=y,
                                       yscale=yscale))
    files.append(plot_path)
    return ExperimentResult(spec=spec, records=records, summary=summary,
                            curves=curves, files=files)


def replay_trial(output_dir, trial_index) -> list:
    """Re-run one recorded trial from its saved experiment config.

    Returns the freshly computed record rows whose trial index matches;
    reproducibility means they coincide with the stored results.csv rows.
    """
    spec = load_experiment_spec(os.path.join(output_dir, "experiment.cfg"))
    spec = replace(spec, n_trials=trial_index + 1,
                   output_dir=os.path.join(output_dir, "replay"))
    result = run_experiment(spec)
    return [r for r in result.records if r.get("trial") == trial_index]
