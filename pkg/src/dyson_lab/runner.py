"""Run one configured experiment and write its artifacts.

Layout: ``<out>/<kind>-<hash>/`` holding ``manifest.json``, ``summary.json`` and
the CSV data files. ``hash`` is the content hash of the manifest without the
timestamp, runtime and output digests, so it is fixed by config, seeds and
version alone. Work happens in a hidden staging directory that is renamed into
place only when the run completes.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .exact import enumerate_window, fkg_dominates, magnetization
from .experiments import (
    alternating_past_exterior,
    decoupling_stability,
    entropic_repulsion,
    fluctuation_exponent,
    g_gap,
    interface_localization,
    two_sided_continuity_profile,
    worker_count,
)
from .io import CSV_SCHEMA_VERSION, content_hash, write_csv, write_json
from .markov import ChainSpec, chain_to_field, erasure_convergence, field_conditional, field_to_chain
from .model import BoundaryRule, DysonError, ModelSpec, Window
from .sampler import run

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_PROPERTY = 0, 1, 2
HASH_EXCLUDE = ("created", "runtime", "outputs")
EXACT_CHECK_Z = 5.0
CONTINUITY_TARGET = 0.05


class OutputExists(DysonError):
    pass


@dataclass
class Outcome:
    summary: dict
    tables: dict = field(default_factory=dict)  # file name -> (header, rows) or writer(path)
    passed: bool = True


def _spec(cfg: ExperimentConfig) -> ModelSpec:
    return ModelSpec(cfg["alpha"], cfg["beta"], cfg["nn_boost"], cfg["field_h"])


def derived_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for the ``index``-th sub-experiment."""
    return int(np.random.SeedSequence(seed, spawn_key=(1000 + index,)).generate_state(1, np.uint64)[0] >> 1)


def seeds_for(cfg: ExperimentConfig) -> dict:
    seed = cfg["seed"]
    if cfg.kind == "interface":
        return {f"L={L}": derived_seed(seed, i) for i, L in enumerate(cfg["L"])}
    return {"seed": seed}


# Kind handlers -------------------------------------------------------------------


def _interface(cfg, seeds) -> Outcome:
    spec = _spec(cfg)
    ests = []
    for L in cfg["L"]:
        ests.append(
            interface_localization(
                spec, L, cfg["sweeps"], seeds[f"L={L}"], burnin=cfg["burnin"], radius=cfg["R"],
                chains=cfg["chains"], method=cfg["method"],
            )
        )
    rows = [(e.L, e.mean, e.std, e.se_mean, e.se_std, e.tail_fraction(0.25), int(e.drift_warning), len(e.samples))
            for e in ests]
    samples = ((e.L, i, int(c)) for e in ests for i, c in enumerate(e.samples))
    centred = all(abs(e.mean) <= 0.05 * e.L for e in ests)
    summary = {"L": cfg["L"], "mean": [e.mean for e in ests], "std": [e.std for e in ests],
               "tail_fraction_0.25": [r[5] for r in rows], "mean_centred": centred}
    passed = centred
    if len({e.L for e in ests}) >= 3:
        fit = fluctuation_exponent(ests)
        tails = [r[5] for r in sorted(rows)]
        decreasing = all(b < a for a, b in zip(tails, tails[1:]))
        summary.update(exponent=fit.slope, exponent_ci=[fit.ci_low, fit.ci_high], reference_exponent=spec.alpha / 2,
                       tail_decreasing=decreasing)
        passed = passed and 0.5 <= fit.slope <= 1.0 and decreasing
    return Outcome(summary, {
        "interface_summary.csv": (["L", "mean", "std", "se_mean", "se_std", "tail_fraction_0.25", "drift_warning",
                                   "n_samples"], rows),
        "interface_samples.csv": (["L", "sample", "cut"], samples),
    }, passed)


def _repulsion(cfg, seeds) -> Outcome:
    spec = _spec(cfg)
    prof = entropic_repulsion(
        spec, cfg["L"], cfg["N"], cfg["sweeps"], seeds["seed"], frozen_spin=cfg["frozen_spin"],
        burnin=cfg["burnin"], radius=cfg["R"], method=cfg["method"],
    )
    L = cfg["L"]
    if prof.frozen_spin < 0:
        passed = prof.wet_length >= L / 8
    else:
        passed = prof.wet_length == 0
    summary = {"wet_length": prof.wet_length, "N": prof.N, "frozen_spin": prof.frozen_spin, "radius": prof.radius,
               "required_wet_length": L / 8 if prof.frozen_spin < 0 else 0}
    return Outcome(summary, {"profile.csv": (["site", "magnetization", "std_error"], prof.rows())}, passed)


def _decoupling(cfg, seeds) -> Outcome:
    spec = _spec(cfg)
    res = decoupling_stability(
        spec, cfg["L"], cfg["L0"], cfg["sweeps"], seeds["seed"], burnin=cfg["burnin"], radius=cfg["R"],
        method=cfg["method"],
    )
    summary = {"coupled_mean": res.coupled.mean, "decoupled_mean": res.decoupled.mean, "shift": res.shift,
               "joint_se": res.joint_se, "tolerance": res.tolerance, "stable": res.stable, "N": res.N,
               "block_energy": res.block_energy, "contour_cost": res.contour_cost,
               "within_budget": res.within_budget}
    samples = [("coupled", i, int(c)) for i, c in enumerate(res.coupled.samples)]
    samples += [("decoupled", i, int(c)) for i, c in enumerate(res.decoupled.samples)]
    return Outcome(summary, {"interface_samples.csv": (["run", "sample", "cut"], samples)}, res.stable)


def _ggap(cfg, seeds) -> Outcome:
    spec = _spec(cfg)
    curve = g_gap(spec, cfg["L0"], cfg["sweeps"], seeds["seed"], burnin=cfg["burnin"], R_future=cfg["R_future"])
    significant = bool(np.all(curve.gaps > 3 * curve.std_errors))
    nondecay = bool(curve.gaps[-1] >= 0.5 * curve.gaps[0])
    m = cfg["m"] or [max(max(cfg["L0"]), 1)]
    cont = two_sided_continuity_profile(spec, m, center=alternating_past_exterior(max(m), max(m) + 1))
    cont_ok = bool(cont.pointwise_bound[-1] < CONTINUITY_TARGET)
    summary = {"L0": curve.L0.tolist(), "gaps": curve.gaps.tolist(), "std_errors": curve.std_errors.tolist(),
               "N": curve.N.tolist(), "R_future": curve.R_future.tolist(), "gaps_significant": significant,
               "no_decay": nondecay, "continuity_m": m, "continuity_pointwise": cont.pointwise_bound.tolist(),
               "continuity_uniform": cont.uniform_bound.tolist(), "continuity_ok": cont_ok}
    return Outcome(summary, {
        "gap_curve.csv": (["L0", "gap", "std_error", "p_plus", "p_minus", "N", "R_future"], curve.rows()),
        "continuity.csv": (["m", "uniform_bound", "pointwise_bound"], cont.rows()),
    }, significant and nondecay and cont_ok)


def _continuity(cfg, seeds) -> Outcome:
    spec = _spec(cfg)
    center = alternating_past_exterior(cfg["L0"], cfg["R"]) if cfg["L0"] is not None else None
    prof = two_sided_continuity_profile(spec, sorted(cfg["m"]), center=center)
    decreasing = bool(np.all(np.diff(prof.uniform_bound) <= 0))
    summary = {"m": prof.m.tolist(), "uniform_bound": prof.uniform_bound.tolist(), "non_increasing": decreasing}
    if prof.pointwise_bound is not None:
        summary["pointwise_bound"] = prof.pointwise_bound.tolist()
    return Outcome(summary, {"continuity.csv": (["m", "uniform_bound", "pointwise_bound"], prof.rows())}, decreasing)


def _bridge_roundtrip(cfg, seeds) -> Outcome:
    rng = np.random.default_rng(seeds["seed"])
    ks = cfg["k"]
    rows = []
    for i in range(cfg["chains"]):
        chain = ChainSpec.random(ks[i % len(ks)], rng)
        back = field_to_chain(chain_to_field(chain))
        err = float(max(np.abs(back.P - chain.P).max(), np.abs(back.pi - chain.pi).max()))
        field_ = chain_to_field(chain)
        cond_err = 0.0
        P, pi = chain.P, chain.pi
        for a in range(chain.k):
            for b in range(chain.k):
                paths = pi[a] * P[a, :] * P[:, b]
                cond_err = max(cond_err, float(np.abs(field_conditional(field_, a, b) - paths / paths.sum()).max()))
        rows.append((i, chain.k, err, cond_err))
    max_rt = max(r[2] for r in rows)
    max_cond = max(r[3] for r in rows)
    passed = max_rt <= 1e-10 and max_cond <= 1e-12
    summary = {"chains": len(rows), "max_roundtrip_error": max_rt, "max_conditional_error": max_cond}
    return Outcome(summary, {"roundtrip.csv": (["index", "k", "roundtrip_error", "conditional_error"], rows)}, passed)


def _bridge_entropy(cfg, seeds) -> Outcome:
    chain = ChainSpec.symmetric_binary(cfg["p_stay"])
    lo, hi = cfg["n"]
    fit = erasure_convergence(chain, np.arange(lo, hi + 1))
    last_gap = float(fit.erasure[-1] - fit.h)
    passed = abs(last_gap) <= 0.02 and fit.r2 >= 0.99
    summary = {"ks_entropy": fit.h, "erasure_at_n_max": float(fit.erasure[-1]), "gap_at_n_max": last_gap,
               "fit_C": fit.C, "fit_r2": fit.r2}
    rows = ((int(n), float(e), float(e - fit.h)) for n, e in zip(fit.n, fit.erasure))
    return Outcome(summary, {"erasure.csv": (["n", "erasure_entropy", "gap"], rows)}, passed)


def _bc(kind: str, R: int) -> BoundaryRule:
    return getattr(BoundaryRule, kind)(R)


def _exact_check(cfg, seeds) -> Outcome:
    spec = _spec(cfg)
    window = Window(*cfg["window"])
    bc = _bc(cfg["bc"], cfg["R"])
    dist = enumerate_window(spec, window, bc)
    burnin = cfg["burnin"] if cfg["burnin"] is not None else cfg["sweeps"] // 10
    stats = run(spec, window, bc, None, cfg["sweeps"], burnin, seeds["seed"], method=cfg["method"])
    floor = 1.0 / (cfg["sweeps"] - burnin)
    rows = []
    for x, m_mc, se in stats.profile_rows():
        m_ex = magnetization(dist, x)
        rows.append((x, m_ex, m_mc, se, abs(m_mc - m_ex) / max(se, floor)))
    max_dev = max(abs(r[2] - r[1]) for r in rows)
    max_z = max(r[4] for r in rows)
    summary = {"sites": window.size, "max_abs_deviation": max_dev, "max_z": max_z, "z_limit": EXACT_CHECK_Z,
               "log_partition": dist.log_partition}
    passed = max_z <= EXACT_CHECK_Z
    if window.size <= 12:
        fkg = fkg_dominates(enumerate_window(spec, window, BoundaryRule.plus(cfg["R"])),
                            enumerate_window(spec, window, BoundaryRule.minus(cfg["R"])))
        summary.update(fkg_plus_over_minus=fkg.dominates, fkg_method=fkg.method, fkg_worst_gap=fkg.worst_gap)
        passed = passed and fkg.dominates
    tables = {
        "profile.csv": (["site", "exact", "sampled", "std_error", "z"], rows),
        "distribution.csv": dist.write_csv,
    }
    return Outcome(summary, tables, passed)


HANDLERS = {
    "interface": _interface,
    "repulsion": _repulsion,
    "decoupling": _decoupling,
    "ggap": _ggap,
    "continuity": _continuity,
    "bridge-roundtrip": _bridge_roundtrip,
    "bridge-entropy": _bridge_entropy,
    "exact-check": _exact_check,
}


# Orchestration -----------------------------------------------------------------


def build_manifest(cfg: ExperimentConfig) -> dict:
    manifest = {
        "kind": cfg.kind,
        "config": {k: v for k, v in cfg.to_json().items() if k != "out"},
        "seeds": seeds_for(cfg),
        "version": __version__,
        "csv_schema_version": CSV_SCHEMA_VERSION,
    }
    manifest["hash"] = content_hash(manifest, exclude=HASH_EXCLUDE + ("hash",))
    return manifest


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, force: bool = False) -> tuple[int, Path]:
    """Run ``cfg`` and write its artifacts; returns ``(exit status, output directory)``.

    Raises :class:`OutputExists` when the target exists and ``force`` is false.
    Any exception removes the staging directory before propagating.
    """
    manifest = build_manifest(cfg)
    base = Path(out if out is not None else cfg["out"])
    target = base / f"{cfg.kind}-{manifest['hash']}"
    if target.exists() and not force:
        raise OutputExists(f"{target} already holds this run; use --force to overwrite")
    base.mkdir(parents=True, exist_ok=True)
    staging = base / f".{target.name}.partial"
    shutil.rmtree(staging, ignore_errors=True)
    staging.mkdir()
    try:
        result = HANDLERS[cfg.kind](cfg, manifest["seeds"])
        for name, table in result.tables.items():
            if callable(table):
                table(staging / name)
            else:
                write_csv(staging / name, *table)
        summary = dict(result.summary, passed=bool(result.passed), kind=cfg.kind)
        write_json(staging / "summary.json", summary)
        manifest["outputs"] = {p.name: _sha256(p) for p in sorted(staging.glob("*.csv"))}
        manifest["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        manifest["runtime"] = {"workers": worker_count()}
        write_json(staging / "manifest.json", manifest)
        if target.exists():
            shutil.rmtree(target)
        staging.rename(target)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return (EXIT_OK if result.passed else EXIT_PROPERTY), target
