"""Preset experiment pipelines comparing both samplers at equal compute.

Each preset runs the walk sampler and the Metropolis baseline for independent
trials, records energy traces, computes trial-averaged autocorrelation on a
common compute axis, and writes traces, ACF tables, overlay figures, a
summary, and a manifest into one output directory.

The Metropolis chain gets ``fair_ratio`` times more moves than the walk
sampler and its trace is recorded at that stride, so one recorded sample of
either sampler stands for the same amount of compute.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import analysis
from .errors import ConfigurationError
from .generators import cube3d_pm_j, grid2d, rbm_gabor, save_model
from .model import IsingModel, ShellConstraint
from .samplers import (
    ImConfig,
    MetropolisConfig,
    chain_rng,
    random_shell_state,
    run_chain,
    write_trace_csv,
)
from .saw_proposal import SawParams

SCALES = ("paper", "desk")
PRESET_NAMES = ("ferro2d", "glass3d", "rbm")

CRITICAL_BETA = 1.0 / 2.27

ACF_DROP_THRESHOLD = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved parameters of one preset run."""

    preset: str
    scale: str
    generator: str
    generator_args: dict
    beta: float
    gamma: float
    k_min: int
    k_max: int
    order_policy: str
    shell_distance: int
    im_moves: int
    fair_ratio: int
    trials: int
    seed: int
    burn_in_fraction: float
    engine: str
    max_lag: int


def preset_config(preset, scale, seed=0, trials=10, im_moves=None,
                  fair_ratio=None, burn_in_fraction=0.1, max_lag=None):
    """Parameters for a named experiment at paper or desk scale."""
    if preset not in PRESET_NAMES:
        raise ConfigurationError(
            f"unknown preset {preset!r}; choose from {PRESET_NAMES}"
        )
    if scale not in SCALES:
        raise ConfigurationError(f"unknown scale {scale!r}; choose from {SCALES}")
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    paper = scale == "paper"
    if preset == "ferro2d":
        side = 60 if paper else 16
        num = side * side
        spec = dict(
            generator="grid2d",
            generator_args={"side": side, "coupling": 1.0, "field": 0.0},
            beta=CRITICAL_BETA,
            gamma=CRITICAL_BETA,
            k_min=90 if paper else 24,
            k_max=90 if paper else 24,
            shell_distance=num // 2,
            im_moves=100_000 if paper else 6_000,
            fair_ratio=50,
            engine="auto",
        )
    elif preset == "glass3d":
        side = 9 if paper else 5
        num = side ** 3
        spec = dict(
            generator="cube3d_pm_j",
            generator_args={"side": side, "seed": seed},
            beta=1.0,
            gamma=0.8,
            k_min=1,
            k_max=25 if paper else 10,
            shell_distance=364 if paper else 63,
            im_moves=100_000 if paper else 1_500,
            fair_ratio=10,
            engine="auto",
        )
    else:
        visible, hidden = (784, 500) if paper else (64, 32)
        num = visible + hidden
        spec = dict(
            generator="rbm_gabor",
            generator_args={
                "num_visible": visible,
                "num_hidden": hidden,
                "seed": seed,
            },
            beta=1.0,
            gamma=0.8,
            k_min=1,
            k_max=20 if paper else 8,
            shell_distance=num // 3,
            im_moves=10_000 if paper else 2_000,
            # dense bipartite graph: per-step candidate rescans beat the tree
            engine="scan",
            fair_ratio=10,
        )
    if im_moves is not None:
        spec["im_moves"] = int(im_moves)
    if fair_ratio is not None:
        spec["fair_ratio"] = int(fair_ratio)
    recorded = spec["im_moves"]
    if max_lag is None:
        max_lag = max(10, min(recorded // 5, 2000))
    return ExperimentConfig(
        preset=preset,
        scale=scale,
        order_policy="up_down",
        trials=trials,
        seed=int(seed),
        burn_in_fraction=float(burn_in_fraction),
        max_lag=int(max_lag),
        **spec,
    )


def build_model(config: ExperimentConfig):
    args = config.generator_args
    if config.generator == "grid2d":
        return grid2d(**args)
    if config.generator == "cube3d_pm_j":
        return cube3d_pm_j(**args)
    if config.generator == "rbm_gabor":
        return rbm_gabor(**args)
    raise ConfigurationError(f"unknown generator {config.generator!r}")


def _trial_payloads(config: ExperimentConfig, model_doc):
    payloads = []
    for trial in range(config.trials):
        for sampler in ("im", "metropolis"):
            chain_index = 2 * trial + (0 if sampler == "im" else 1)
            moves = (
                config.im_moves
                if sampler == "im"
                else config.im_moves * config.fair_ratio
            )
            stride = 1 if sampler == "im" else config.fair_ratio
            payloads.append(
                {
                    "model_doc": model_doc,
                    "sampler": sampler,
                    "trial": trial,
                    "chain_index": chain_index,
                    "moves": moves,
                    "stride": stride,
                    "burn_in": int(round(config.burn_in_fraction * moves)),
                    "beta": config.beta,
                    "gamma": config.gamma,
                    "k_min": config.k_min,
                    "k_max": config.k_max,
                    "order_policy": config.order_policy,
                    "shell_distance": config.shell_distance,
                    "seed": config.seed,
                    "engine": config.engine,
                }
            )
    return payloads


def run_trial(payload):
    """Run one chain from a picklable payload; used by the worker pool."""
    model = IsingModel.from_dict(payload["model_doc"])
    constraint = ShellConstraint(
        tuple([0] * model.num_vars), payload["shell_distance"]
    )
    rng = chain_rng(payload["seed"], payload["chain_index"])
    init = random_shell_state(model, constraint, rng)
    if payload["sampler"] == "im":
        config = ImConfig(
            beta=payload["beta"],
            saw=SawParams(
                gamma=payload["gamma"],
                k_min=payload["k_min"],
                k_max=payload["k_max"],
                order_policy=payload["order_policy"],
            ),
            seed=payload["seed"],
            engine=payload["engine"],
        )
    else:
        config = MetropolisConfig(beta=payload["beta"], seed=payload["seed"])
    record = run_chain(
        model,
        init,
        payload["sampler"],
        payload["moves"],
        record_stride=payload["stride"],
        config=config,
        rng=rng,
        burn_in=payload["burn_in"],
    )
    return payload, record


def _first_drop_lag(curve: analysis.AcfCurve, threshold=ACF_DROP_THRESHOLD):
    below = np.nonzero(curve.mean < threshold)[0]
    if below.size == 0:
        return float(curve.lags[-1] + curve.lag_unit)
    return float(curve.lags[int(below[0])])


def run_experiment(preset, scale="desk", out_dir=".", trials=10, seed=0,
                   workers=1, im_moves=None, fair_ratio=None,
                   burn_in_fraction=0.1, max_lag=None, progress=None):
    """Run a full two-sampler comparison; returns the summary dict.

    All randomness derives from ``seed``; rerunning with the same arguments
    rewrites byte-identical outputs. Only the coordinator writes files.
    """
    config = preset_config(
        preset, scale, seed=seed, trials=trials, im_moves=im_moves,
        fair_ratio=fair_ratio, burn_in_fraction=burn_in_fraction,
        max_lag=max_lag,
    )
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(config)
    model_path = os.path.join(out_dir, "model.json")
    save_model(model, model_path)
    produced = [{"path": "model.json", "kind": "model",
                 "params": {"generator": config.generator, **config.generator_args}}]

    payloads = _trial_payloads(config, model.to_dict())
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for payload, record in pool.map(run_trial, payloads):
                results.append((payload, record))
                if progress:
                    progress(payload)
    else:
        for payload in payloads:
            results.append(run_trial(payload))
            if progress:
                progress(payload)

    traces = {"im": [], "metropolis": []}
    records = {"im": [], "metropolis": []}
    for payload, record in results:
        sampler = payload["sampler"]
        name = f"trace_{sampler}_{payload['trial']:03d}.csv"
        # one recorded sample of either sampler = fair_ratio Metropolis moves
        cost_per_sample = float(config.fair_ratio)
        meta = {
            "model": "model.json",
            "sampler": sampler,
            "beta": config.beta,
            "gamma": config.gamma,
            "seed": config.seed,
            "moves": payload["moves"],
            "stride": payload["stride"],
            "trial": payload["trial"],
            "burn_in": payload["burn_in"],
            "n": config.shell_distance,
            "k_min": config.k_min,
            "k_max": config.k_max,
            "order": config.order_policy,
            "engine": config.engine if sampler == "im" else "-",
            "evals_per_move": record.evals_per_move,
            "cost_per_sample": cost_per_sample,
            "acceptance_rate": record.acceptance_rate,
        }
        write_trace_csv(record, os.path.join(out_dir, name), meta)
        produced.append({"path": name, "kind": "trace",
                         "params": {"sampler": sampler, "trial": payload["trial"],
                                    "moves": payload["moves"],
                                    "stride": payload["stride"]}})
        traces[sampler].append(
            analysis.EnergyTrace(record.energies,
                                 {"cost_per_sample": cost_per_sample})
        )
        records[sampler].append(record)

    summary = {
        "preset": config.preset,
        "scale": config.scale,
        "config": asdict(config),
        "lag_unit": f"{config.fair_ratio} metropolis moves (= 1 walk move)",
        "samplers": {},
    }
    curves = {}
    for sampler in ("im", "metropolis"):
        group = traces[sampler]
        max_lag_eff = min(config.max_lag, min(len(t) for t in group) - 2)
        per_trial = [analysis.acf(t, max_lag_eff) for t in group]
        if len(per_trial) >= 2:
            curve = analysis.average_acf(per_trial, lag_unit=1.0, label=sampler)
        else:
            curve = analysis.AcfCurve(
                lags=np.arange(max_lag_eff + 1, dtype=np.float64),
                mean=per_trial[0],
                variance=np.zeros(max_lag_eff + 1),
                num_trials=1,
                lag_unit=1.0,
                label=sampler,
            )
        curves[sampler] = curve
        acf_path = f"acf_{sampler}.csv"
        analysis.write_acf_csv(curve, os.path.join(out_dir, acf_path))
        produced.append({"path": acf_path, "kind": "acf",
                         "params": {"sampler": sampler,
                                    "trials": config.trials,
                                    "max_lag": max_lag_eff}})
        taus = [analysis.integrated_time(c) for c in per_trial]
        final_quarter = [
            float(np.mean(t.energies[3 * len(t) // 4 :])) for t in group
        ]
        summary["samplers"][sampler] = {
            "moves_per_trial": int(records[sampler][0].num_moves),
            "record_stride": int(config.fair_ratio if sampler == "metropolis" else 1),
            "acceptance_rate_mean": float(
                np.mean([r.acceptance_rate for r in records[sampler]])
            ),
            "evals_per_move_mean": float(
                np.mean([r.evals_per_move for r in records[sampler]])
            ),
            "tau_int": [float(t) for t in taus],
            "tau_int_mean": float(np.mean(taus)),
            "acf_drop_lag": _first_drop_lag(curve),
            "final_quarter_energy": final_quarter,
            "final_quarter_energy_mean": float(np.mean(final_quarter)),
        }
    summary["tau_ratio_met_over_im"] = (
        summary["samplers"]["metropolis"]["tau_int_mean"]
        / summary["samplers"]["im"]["tau_int_mean"]
    )

    analysis.check_lag_units(list(curves.values()))
    overlay = analysis.emit_svg(
        [analysis.curve_from_acf(curves["im"], "walk sampler"),
         analysis.curve_from_acf(curves["metropolis"], "metropolis")],
        title=f"{config.preset} ({config.scale}): energy autocorrelation",
        x_label="compute-normalized lag",
        y_label="ACF",
    )
    with open(os.path.join(out_dir, "acf_overlay.svg"), "w", encoding="utf-8") as fh:
        fh.write(overlay)
    produced.append({"path": "acf_overlay.svg", "kind": "figure",
                     "params": {"curves": ["im", "metropolis"]}})

    energy_curves = []
    for sampler, label in (("im", "walk sampler"), ("metropolis", "metropolis")):
        record = records[sampler][0]
        x = np.arange(len(record.energies), dtype=np.float64)
        energy_curves.append(analysis.PlotCurve(label=label, x=x,
                                                y=record.energies))
    energy_svg = analysis.emit_svg(
        energy_curves,
        title=f"{config.preset} ({config.scale}): energy trajectory, trial 0",
        x_label="compute-normalized time",
        y_label="energy",
    )
    with open(os.path.join(out_dir, "energy_overlay.svg"), "w", encoding="utf-8") as fh:
        fh.write(energy_svg)
    produced.append({"path": "energy_overlay.svg", "kind": "figure",
                     "params": {"curves": ["im", "metropolis"], "trial": 0}})

    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    produced.append({"path": "summary.json", "kind": "summary", "params": {}})

    manifest = {
        "preset": config.preset,
        "scale": config.scale,
        "seed": config.seed,
        "trials": config.trials,
        "files": produced + [{"path": "manifest.json", "kind": "manifest",
                              "params": {}}],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary
