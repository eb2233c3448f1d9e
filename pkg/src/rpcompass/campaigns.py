"""Randomized molecule ensembles and the population experiments built on them."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .errors import CompassError, MutationError, ValidationError
from .hamiltonian import build_hyperfine
from .metrics import AngleGrid, global_coherence, sensitivity, yield_map
from .model import (
    DEFAULT_B_UT,
    DEFAULT_K_US,
    Config,
    ElectronState,
    InitialStateSpec,
    NoiseModel,
    NoiseSpec,
    Nucleus,
    NuclearPolarization,
    Radical,
    RadicalPairSystem,
    ReactionSpec,
    build_initial_state,
    config_from_dict,
    config_to_dict,
)

log = logging.getLogger(__name__)

#: gamma(2H) / gamma(1H)
DEUTERON_PROTON_RATIO = 0.15351

CSV_HEADER = ("sample_id", "seed", "config_digest", "model", "xi_us", "C", "Ds", "wall_ms")
TENSOR_DISTRIBUTION = "i.i.d. uniform entries on [-tensor_scale, +tensor_scale] mT, no symmetry constraint"


class CampaignKind(str, enum.Enum):
    RANDOM_HYPERFINE = "RandomHyperfine"
    NUCLEAR_POLARIZATION = "NuclearPolarization"
    NOISE_SWEEP = "NoiseSweep"
    DEUTERATION = "Deuteration"


@dataclass(frozen=True)
class CampaignSpec:
    kind: CampaignKind
    n_samples: int = 500
    seed: int = 0
    nucleus_count_range: tuple[int, int] = (2, 3)
    tensor_scale: float = 0.5
    reference_probe_fraction: float = 0.5
    xi_values: tuple[float, ...] = (0.0, 0.1, 0.3, 1.0, 3.0, 10.0)
    models: tuple[NoiseModel, ...] = tuple(NoiseModel)
    config: Config | None = None
    n_theta: int = 19
    n_phi: int = 36
    b: float = DEFAULT_B_UT
    k: float = DEFAULT_K_US
    beta_max: float = 2.0
    deuterate: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", CampaignKind(self.kind))
        object.__setattr__(self, "models", tuple(NoiseModel(m) for m in self.models))
        object.__setattr__(self, "xi_values", tuple(float(x) for x in self.xi_values))
        object.__setattr__(self, "nucleus_count_range", tuple(int(x) for x in self.nucleus_count_range))
        object.__setattr__(self, "deuterate", tuple(tuple(s) for s in self.deuterate))
        if self.n_samples < 1:
            raise ValidationError("n_samples", "must be >= 1")
        if not self.tensor_scale > 0:
            raise ValidationError("tensor_scale_mT", "must be > 0")
        if not 0.0 <= self.reference_probe_fraction <= 1.0:
            raise ValidationError("reference_probe_fraction", "must lie in [0, 1]")
        lo, hi = self.nucleus_count_range
        if lo < 1 or hi < lo:
            raise ValidationError("nucleus_count_range", f"invalid range {self.nucleus_count_range}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed", "must be an unsigned 64-bit integer")
        xi = self.xi_values
        if xi and (xi[0] != 0.0 or any(b <= a for a, b in zip(xi, xi[1:]))):
            raise ValidationError("xi_values_us", "must be strictly increasing and start at 0")
        if self.kind is not CampaignKind.RANDOM_HYPERFINE and self.config is None:
            raise ValidationError("config", f"required for {self.kind.value} campaigns")

    @property
    def grid(self) -> AngleGrid:
        return AngleGrid.regular(self.n_theta, self.n_phi)

    def to_dict(self) -> dict[str, Any]:
        doc = {
            "kind": self.kind.value,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "nucleus_count_range": list(self.nucleus_count_range),
            "tensor_scale_mT": self.tensor_scale,
            "reference_probe_fraction": self.reference_probe_fraction,
            "xi_values_us": list(self.xi_values),
            "models": [m.value for m in self.models],
            "grid": {"n_theta": self.n_theta, "n_phi": self.n_phi},
            "b_uT": self.b,
            "k_us": self.k,
            "beta_max": self.beta_max,
            "deuterate": [list(s) for s in self.deuterate],
        }
        if self.config is not None:
            doc["config"] = config_to_dict(self.config)
        return doc


_SPEC_KEYS = {
    "kind", "n_samples", "seed", "nucleus_count_range", "tensor_scale_mT", "reference_probe_fraction",
    "xi_values_us", "models", "config", "grid", "b_uT", "k_us", "beta_max", "deuterate", "full_scale",
}


def campaign_spec_from_dict(doc: dict[str, Any], base_dir=None) -> CampaignSpec:
    """Build a spec from its JSON form.

    ``config`` is either an inline config document or a path (relative to
    ``base_dir``).  ``full_scale: true`` switches to 5-6 nuclei and
    7x10^4 samples unless those keys are given explicitly.
    """
    if not isinstance(doc, dict):
        raise ValidationError("$", "campaign spec must be an object")
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise ValidationError("$", f"unknown keys {sorted(unknown)}")
    if "kind" not in doc:
        raise ValidationError("kind", "missing")
    cfg = doc.get("config")
    if isinstance(cfg, str):
        from pathlib import Path

        path = Path(base_dir or ".") / cfg
        cfg = json.loads(path.read_text(encoding="utf-8"))
    config = config_from_dict(cfg) if cfg is not None else None
    kwargs: dict[str, Any] = {"kind": doc["kind"], "config": config}
    if doc.get("full_scale"):
        kwargs.update(n_samples=70_000, nucleus_count_range=(5, 6))
    mapping = {
        "n_samples": "n_samples",
        "seed": "seed",
        "nucleus_count_range": "nucleus_count_range",
        "tensor_scale_mT": "tensor_scale",
        "reference_probe_fraction": "reference_probe_fraction",
        "xi_values_us": "xi_values",
        "models": "models",
        "b_uT": "b",
        "k_us": "k",
        "beta_max": "beta_max",
        "deuterate": "deuterate",
    }
    for key, attr in mapping.items():
        if key in doc:
            kwargs[attr] = doc[key]
    if "grid" in doc:
        kwargs["n_theta"] = int(doc["grid"].get("n_theta", 19))
        kwargs["n_phi"] = int(doc["grid"].get("n_phi", 36))
    try:
        return CampaignSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("$", str(exc)) from exc


@dataclass(frozen=True)
class CampaignRecord:
    sample_id: int
    seed: int
    config_digest: str
    C: float
    Ds: float
    model: str | None = None
    xi: float | None = None
    wall_ms: float | None = None
    nucleus_count: int | None = None
    reference_probe: bool | None = None


@dataclass
class CampaignResult:
    records: list[CampaignRecord]
    failures: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


def derive_seed(master: int, index: int) -> int:
    """Per-sample seed from the master seed and a counter."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def system_digest(system: RadicalPairSystem, initial: InitialStateSpec | None = None) -> str:
    doc = config_to_dict(Config(system, initial=initial or InitialStateSpec()))
    doc = {"nuclei": doc["nuclei"], "initial": doc["initial"]}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def random_hyperfine_system(
    rng_seed: int, nucleus_count: int, tensor_scale: float = 0.5, reference_probe: bool = False
) -> RadicalPairSystem:
    """Random molecule: multiplicities from {2, 3}, i.i.d. uniform tensor entries.

    With ``reference_probe`` every nucleus sits on radical D.  Otherwise each
    nucleus picks a radical uniformly, redrawn until both radicals carry at
    least one nucleus (when there are two or more).
    """
    if nucleus_count < 1:
        raise ValidationError("nucleus_count", "must be >= 1")
    rng = np.random.default_rng(rng_seed)
    mults = rng.choice([2, 3], size=nucleus_count)
    tensors = rng.uniform(-tensor_scale, tensor_scale, size=(nucleus_count, 3, 3))
    if reference_probe:
        sides = np.zeros(nucleus_count, dtype=int)
    else:
        while True:
            sides = rng.integers(0, 2, size=nucleus_count)
            if nucleus_count < 2 or 0 < sides.sum() < nucleus_count:
                break
    nuclei = tuple(
        Nucleus(f"n{j}", Radical.D if sides[j] == 0 else Radical.A, int(mults[j]), tensors[j])
        for j in range(nucleus_count)
    )
    return RadicalPairSystem(nuclei)


def deuterate(system: RadicalPairSystem, nucleus_labels: Sequence[str]) -> RadicalPairSystem:
    """Swap the named protons for deuterons: multiplicity 3, tensor scaled by 0.15351."""
    labels = set(nucleus_labels)
    known = {n.label: n for n in system.nuclei}
    for label in labels:
        if label not in known:
            raise MutationError(f"unknown nucleus {label!r}")
        if known[label].multiplicity != 2:
            raise MutationError(f"nucleus {label!r} has multiplicity {known[label].multiplicity}, not a proton")
    if not labels:
        return system
    nuclei = tuple(
        Nucleus(n.label, n.radical, 3, n.tensor_array * DEUTERON_PROTON_RATIO) if n.label in labels else n
        for n in system.nuclei
    )
    return RadicalPairSystem(nuclei)


def random_polarizations(system: RadicalPairSystem, rng: np.random.Generator, beta_max: float):
    pols = []
    for n in system.nuclei:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pols.append(NuclearPolarization(n.label, tuple(axis), float(rng.uniform(0.0, beta_max))))
    return InitialStateSpec(ElectronState.SINGLET, tuple(pols))


def _evaluate(system, rho0, spec: CampaignSpec, reaction: ReactionSpec, parallel: int = 1):
    h0 = build_hyperfine(system)
    c = global_coherence(system, rho0, reaction=reaction, h0=h0)
    ymap = yield_map(system, rho0, spec.b, reaction, spec.grid, parallel=parallel, h0=h0)
    return c, sensitivity(ymap)


def _scatter_sample(args):
    spec, index = args
    seed = derive_seed(spec.seed, index)
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 1])
    reaction = ReactionSpec(spec.k, spec.k)
    ref = None
    n_count = None
    try:
        if spec.kind is CampaignKind.RANDOM_HYPERFINE:
            lo, hi = spec.nucleus_count_range
            n_count = int(rng.integers(lo, hi + 1))
            ref = bool(rng.random() < spec.reference_probe_fraction)
            system = random_hyperfine_system(seed, n_count, spec.tensor_scale, ref)
            initial = InitialStateSpec()
        else:
            system = spec.config.system
            n_count = len(system.nuclei)
            initial = random_polarizations(system, rng, spec.beta_max)
        rho0 = build_initial_state(system, initial)
        c, ds = _evaluate(system, rho0, spec, reaction)
    except (CompassError, np.linalg.LinAlgError) as exc:
        return {"sample_id": index, "seed": seed, "error": f"{type(exc).__name__}: {exc}"}
    wall = (time.perf_counter() - start) * 1e3
    return CampaignRecord(index, seed, system_digest(system, initial), c, ds, None, None, wall, n_count, ref)


def run_scatter_campaign(spec: CampaignSpec, parallel: int = 1) -> CampaignResult:
    """C versus D_s over random molecules (RandomHyperfine) or random nuclear
    polarizations of a fixed molecule (NuclearPolarization)."""
    if spec.kind not in (CampaignKind.RANDOM_HYPERFINE, CampaignKind.NUCLEAR_POLARIZATION):
        raise ValidationError("kind", f"{spec.kind.value} is not a scatter campaign")
    jobs = [(spec, i) for i in range(spec.n_samples)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_scatter_sample, jobs, chunksize=max(1, len(jobs) // (8 * parallel))))
    else:
        outcomes = [_scatter_sample(j) for j in jobs]
    records = sorted((o for o in outcomes if isinstance(o, CampaignRecord)), key=lambda r: r.sample_id)
    failures = [o for o in outcomes if isinstance(o, dict)]
    for f in failures:
        log.warning("sample %d failed: %s", f["sample_id"], f["error"])
    return CampaignResult(records, failures, scatter_summary(records))


def run_noise_sweep(
    system: RadicalPairSystem,
    rho0: np.ndarray,
    models: Sequence[NoiseModel],
    xi_values: Sequence[float],
    k: float = DEFAULT_K_US,
    b: float = DEFAULT_B_UT,
    grid: AngleGrid | None = None,
    seed: int = 0,
    digest: str | None = None,
    parallel: int = 1,
    first_id: int = 0,
) -> list[CampaignRecord]:
    """(C, D_s) for every noise model and rate; ``xi_values`` ascending from 0.

    C is the noisy generalization: the coherent part is propagated under the
    same recombination + noise generator at zero field.
    """
    xi_values = [float(x) for x in xi_values]
    if not xi_values or xi_values[0] != 0.0 or any(b2 <= b1 for b1, b2 in zip(xi_values, xi_values[1:])):
        raise ValidationError("xi_values", "must be strictly increasing and start at 0")
    grid = grid or AngleGrid.regular()
    digest = digest or system_digest(system)
    h0 = build_hyperfine(system)

    def evaluate(reaction):
        start = time.perf_counter()
        c = global_coherence(system, rho0, reaction=reaction, h0=h0)
        ymap = yield_map(system, rho0, b, reaction, grid, parallel=parallel, h0=h0)
        return c, sensitivity(ymap), (time.perf_counter() - start) * 1e3

    baseline = evaluate(ReactionSpec(k, k))
    records = []
    sid = first_id
    for model in models:
        model = NoiseModel(model)
        for xi in xi_values:
            c, ds, wall = baseline if xi == 0.0 else evaluate(ReactionSpec(k, k, NoiseSpec(model, xi)))
            records.append(
                CampaignRecord(sid, seed, digest, c, ds, model.value, xi, wall, len(system.nuclei), None)
            )
            sid += 1
    return records


def run_campaign(spec: CampaignSpec, parallel: int = 1) -> CampaignResult:
    if spec.kind in (CampaignKind.RANDOM_HYPERFINE, CampaignKind.NUCLEAR_POLARIZATION):
        return run_scatter_campaign(spec, parallel)
    system, _, _, initial = spec.config
    variants: list[tuple[str, ...]] = [()]
    if spec.kind is CampaignKind.DEUTERATION:
        variants += [v for v in spec.deuterate if v]
    records: list[CampaignRecord] = []
    failures = []
    for labels in variants:
        try:
            variant = deuterate(system, labels)
            init = InitialStateSpec(initial.electron_state, initial.polarizations)
            rho0 = build_initial_state(variant, init)
            records += run_noise_sweep(
                variant, rho0, spec.models, spec.xi_values, spec.k, spec.b, spec.grid,
                seed=spec.seed, digest=system_digest(variant, init), parallel=parallel,
                first_id=len(records),
            )
        except (CompassError, np.linalg.LinAlgError) as exc:
            failures.append({"variant": list(labels), "error": f"{type(exc).__name__}: {exc}"})
    summary = noise_summary(records)
    return CampaignResult(records, failures, summary)


# -- summaries ---------------------------------------------------------------


def binned_means(c: np.ndarray, ds: np.ndarray, n_bins: int = 5, central: float = 0.8) -> list[dict[str, float]]:
    """Mean D_s in equal-count C bins covering the central fraction of samples."""
    order = np.argsort(c, kind="stable")
    n = c.size
    cut = int(round(n * (1 - central) / 2))
    idx = order[cut : n - cut]
    out = []
    for chunk in np.array_split(idx, min(n_bins, max(1, idx.size))):
        if chunk.size:
            out.append(
                {"C_lo": float(c[chunk].min()), "C_hi": float(c[chunk].max()),
                 "mean_Ds": float(ds[chunk].mean()), "count": int(chunk.size)}
            )
    return out


def reference_probe_dominance(records: Sequence[CampaignRecord]) -> dict[int, dict[str, float]]:
    """Per nucleus count: max D_s of reference-and-probe vs split-nuclei samples."""
    out = {}
    counts = sorted({r.nucleus_count for r in records if r.nucleus_count is not None})
    for n in counts:
        ref = [r.Ds for r in records if r.nucleus_count == n and r.reference_probe]
        split = [r.Ds for r in records if r.nucleus_count == n and r.reference_probe is False]
        if ref and split:
            out[n] = {"max_Ds_reference_probe": max(ref), "max_Ds_split": max(split),
                      "n_reference_probe": len(ref), "n_split": len(split)}
    return out


def scatter_summary(records: Sequence[CampaignRecord], n_bins: int = 5) -> dict[str, Any]:
    if len(records) < 2:
        return {"n": len(records)}
    c = np.array([r.C for r in records])
    ds = np.array([r.Ds for r in records])
    rho = stats.spearmanr(c, ds).statistic
    bins = binned_means(c, ds, n_bins)
    means = [b["mean_Ds"] for b in bins]
    return {
        "n": len(records),
        "spearman_C_Ds": float(rho),
        "binned_mean_Ds": bins,
        "binned_non_decreasing": bool(all(b >= a for a, b in zip(means, means[1:]))),
        "reference_probe_dominance": {str(k): v for k, v in reference_probe_dominance(records).items()},
    }


def collapse_deviation(records: Sequence[CampaignRecord], n_eval: int = 201) -> float:
    """Largest mutual deviation of the piecewise-linear D_s(C) curves of the
    noise models, over their common C interval, divided by the D_s range."""
    curves = {}
    for r in records:
        curves.setdefault(r.model, []).append((r.C, r.Ds))
    if len(curves) < 2:
        return 0.0
    all_ds = [r.Ds for r in records]
    ds_range = max(all_ds) - min(all_ds)
    if ds_range == 0:
        return 0.0
    interps = []
    for pts in curves.values():
        pts = sorted(pts)
        interps.append((np.array([p[0] for p in pts]), np.array([p[1] for p in pts])))
    lo = max(x.min() for x, _ in interps)
    hi = min(x.max() for x, _ in interps)
    if hi <= lo:
        return float("nan")
    grid = np.linspace(lo, hi, n_eval)
    vals = np.array([np.interp(grid, x, y) for x, y in interps])
    return float((vals.max(axis=0) - vals.min(axis=0)).max() / ds_range)


def _non_increasing(values: Sequence[float], tol: float) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))


def noise_summary(records: Sequence[CampaignRecord], tol: float = 1e-12) -> dict[str, Any]:
    by_key: dict[tuple[str, str], list[CampaignRecord]] = {}
    for r in records:
        by_key.setdefault((r.config_digest, r.model), []).append(r)
    monotone = {}
    for (digest, model), recs in by_key.items():
        recs = sorted(recs, key=lambda r: r.xi)
        monotone[f"{digest}/{model}"] = {
            "Ds_non_increasing": _non_increasing([r.Ds for r in recs], tol),
            "C_non_increasing": _non_increasing([r.C for r in recs], tol),
        }
    collapse = {}
    for digest in sorted({r.config_digest for r in records}):
        collapse[digest] = collapse_deviation([r for r in records if r.config_digest == digest])
    return {"n": len(records), "monotonicity": monotone, "collapse_deviation": collapse}


# -- output ------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def records_to_csv(records: Sequence[CampaignRecord], include_timing: bool = False) -> str:
    """CSV text with the fixed header; ``wall_ms`` stays empty unless requested
    so that reruns are byte-identical."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(records, key=lambda r: r.sample_id):
        writer.writerow(
            [r.sample_id, r.seed, r.config_digest, _fmt(r.model), _fmt(r.xi), _fmt(r.C), _fmt(r.Ds),
             _fmt(r.wall_ms) if include_timing else ""]
        )
    return buf.getvalue()


def campaign_metadata(spec: CampaignSpec, result: CampaignResult) -> dict[str, Any]:
    return {
        "spec": spec.to_dict(),
        "defaults": {
            "b_uT": spec.b,
            "kS_us": spec.k,
            "kT_us": spec.k,
            "grid": {"n_theta": spec.n_theta, "n_phi": spec.n_phi},
            "tensor_distribution": TENSOR_DISTRIBUTION,
            "multiplicity_distribution": "uniform on {2, 3}",
            "seed_scheme": "numpy SeedSequence(entropy=master_seed, spawn_key=(sample_id,))",
            "coherence_under_noise": "coherent part propagated under the same generator at b = 0",
        },
        "code_version": __version__,
        "summary": result.summary,
        "failures": result.failures,
        "samples": [
            {"sample_id": r.sample_id, "nucleus_count": r.nucleus_count, "reference_probe": r.reference_probe}
            for r in result.records
        ],
    }
