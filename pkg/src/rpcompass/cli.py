"""Command-line interface: ``rpcompass <subcommand> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .campaigns import campaign_metadata, campaign_spec_from_dict, records_to_csv, run_campaign
from .errors import CompassError, IntegrationError, NumericalContractError
from .hamiltonian import build_hyperfine
from .interferometer import TwoStateAmplitudes, fringe_contrast, interference_outcome, toy_coherence
from .metrics import AngleGrid, MapMode, epsilon_trace, global_coherence, sensitivity, yield_map
from .model import Config, build_initial_state, config_to_dict, load_config

log = logging.getLogger("rpcompass")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_SAMPLE_ERRORS = 3
EXIT_NUMERICAL = 4


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def digest_of(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def manifest(subcommand: str, doc, outputs, seed=None, defaults=None, **extra) -> dict:
    out = {
        "subcommand": subcommand,
        "config_digest": digest_of(doc),
        "seed": seed,
        "defaults_applied": defaults or {},
        "outputs": [str(p) for p in outputs],
        "code_version": __version__,
    }
    out.update(extra)
    return out


def _write_manifest(man: dict, out_path: Path | None) -> None:
    text = json.dumps(man, indent=2, sort_keys=True)
    if out_path is not None:
        Path(str(out_path) + ".manifest.json").write_text(text + "\n", encoding="utf-8")
    print(text)


def _config_defaults(cfg: Config) -> dict:
    return {
        "b_uT": cfg.field.b,
        "kS_us": cfg.reaction.k_s,
        "kT_us": cfg.reaction.k_t,
        "electron": cfg.initial.electron_state.value,
        "nuclear_polarizations": len(cfg.initial.polarizations),
    }


def _grid(args) -> AngleGrid:
    return AngleGrid.regular(args.grid_theta, args.grid_phi)


def _map_for(cfg: Config, args, mode=MapMode.EXACT):
    system, field, reaction, initial = cfg
    rho0 = build_initial_state(system, initial)
    return yield_map(system, rho0, field.b, reaction, _grid(args), mode=mode, parallel=args.parallel)


def cmd_yield_map(args) -> int:
    cfg = load_config(args.config)
    mode = MapMode.PHASE_STRIPPED if args.exclude_field_phases else MapMode.EXACT
    ymap = _map_for(cfg, args, mode)
    out = Path(args.out)
    lines = ["theta_rad,phi_rad,Ys"] + [f"{fmt(t)},{fmt(p)},{fmt(y)}" for t, p, y in ymap.rows()]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    ds = sensitivity(ymap)
    print(f"Ds {fmt(ds)}")
    _write_manifest(
        manifest("yield-map", config_to_dict(cfg), [out], defaults=_config_defaults(cfg),
                 grid={"n_theta": args.grid_theta, "n_phi": args.grid_phi}, mode=mode.value, Ds=ds),
        out,
    )
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = load_config(args.config)
    ds = sensitivity(_map_for(cfg, args))
    print(f"Ds {fmt(ds)}")
    _write_manifest(
        manifest("sensitivity", config_to_dict(cfg), [], defaults=_config_defaults(cfg),
                 grid={"n_theta": args.grid_theta, "n_phi": args.grid_phi}, Ds=ds),
        None,
    )
    return EXIT_OK


def cmd_coherence(args) -> int:
    cfg = load_config(args.config)
    system, _, reaction, initial = cfg
    rho0 = build_initial_state(system, initial)
    c = global_coherence(system, rho0, reaction=reaction)
    print(f"C {fmt(c)}")
    _write_manifest(manifest("coherence", config_to_dict(cfg), [], defaults=_config_defaults(cfg), C=c), None)
    return EXIT_OK


def cmd_epsilon(args) -> int:
    if not args.t_max > 0 or args.n_steps < 1:
        raise argparse.ArgumentTypeError("--t-max must be > 0 and --n-steps >= 1")
    cfg = load_config(args.config)
    system, field, reaction, initial = cfg
    rho0 = build_initial_state(system, initial)
    times = np.linspace(0.0, args.t_max, args.n_steps + 1)
    trace = epsilon_trace(system, rho0, field, times, k=reaction.k_s)
    out = Path(args.out)
    lines = ["t_us,epsilon"] + [f"{fmt(t)},{fmt(e)}" for t, e in zip(trace.times, trace.epsilon)]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"mean_uniform {fmt(trace.uniform_mean)}")
    print(f"mean_weighted {fmt(trace.weighted_mean)}")
    _write_manifest(
        manifest("epsilon", config_to_dict(cfg), [out], defaults=_config_defaults(cfg),
                 t_max_us=args.t_max, n_steps=args.n_steps,
                 mean_uniform=trace.uniform_mean, mean_weighted=trace.weighted_mean),
        out,
    )
    return EXIT_OK


def cmd_campaign(args) -> int:
    path = Path(args.config)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = campaign_spec_from_dict(doc, base_dir=path.parent)
    result = run_campaign(spec, parallel=args.parallel)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "records.csv"
    meta_path = out_dir / "metadata.json"
    csv_path.write_text(records_to_csv(result.records, include_timing=args.timing), encoding="utf-8")
    meta = campaign_metadata(spec, result)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    _write_manifest(
        manifest("campaign", spec.to_dict(), [csv_path, meta_path], seed=spec.seed,
                 defaults=meta["defaults"], n_records=len(result.records), n_failures=len(result.failures)),
        out_dir / "campaign",
    )
    if result.failures:
        print(f"completed with {len(result.failures)} sample error(s)", file=sys.stderr)
        return EXIT_SAMPLE_ERRORS
    return EXIT_OK


def cmd_interferometer(args) -> int:
    amps = TwoStateAmplitudes.from_population(args.p_alpha, args.relative_phase)
    phases = np.linspace(0.0, 2 * np.pi, args.n_phase)
    print("phase_rad,m")
    for phase, m in zip(phases, interference_outcome(amps, phases)):
        print(f"{fmt(phase)},{fmt(m)}")
    print(f"contrast {fmt(fringe_contrast(amps))}")
    print(f"coherence {fmt(toy_coherence(amps))}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpcompass", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def grid_flags(p):
        p.add_argument("--grid-theta", type=int, default=19, help="polar angles, poles included")
        p.add_argument("--grid-phi", type=int, default=36, help="azimuthal angles in [0, 2pi)")
        p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("yield-map", help="singlet yield over field directions")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclude-field-phases", action="store_true",
                   help="remove the field-induced coherence phases from the exact evolution")
    grid_flags(p)
    p.set_defaults(func=cmd_yield_map)

    p = sub.add_parser("sensitivity", help="magnetic sensitivity D_s")
    p.add_argument("--config", required=True)
    grid_flags(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("coherence", help="global coherence C")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("epsilon", help="amplitude change epsilon(t)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-max", type=float, default=10.0, help="us")
    p.add_argument("--n-steps", type=int, default=200)
    p.set_defaults(func=cmd_epsilon)

    p = sub.add_parser("campaign", help="run a sampling campaign from a spec document")
    p.add_argument("--config", required=True, help="campaign spec (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("interferometer", help="two-path interferometer toy")
    p.add_argument("--p-alpha", type=float, default=0.5, help="|gamma_alpha|^2")
    p.add_argument("--relative-phase", type=float, default=0.0)
    p.add_argument("--n-phase", type=int, default=9)
    p.set_defaults(func=cmd_interferometer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (IntegrationError, NumericalContractError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CompassError, argparse.ArgumentTypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
