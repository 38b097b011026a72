"""Command-line surface.

Every command writes its outputs plus a run manifest into --out; the
manifest records enough (command, parameters, seed, code version, input
digests) to reproduce the run bit-for-bit via `replay`.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, fleet
from .asymptotics import (
    FourierSpectrum,
    fourier_expected_sq_error,
    gumbel_params_leading,
    orthogonal_expected_sq_error,
    orthogonal_leading_order,
    uniform_expected_sq_error,
)
from .experiments import (
    CampaignSpec,
    calibrate_uniform_constant,
    direction_counts,
    error_distribution,
    run_campaign,
    verify_optimality,
    write_campaign_csv,
)


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    code_version: str
    input_digests: dict
    outputs: list[str]
    started_utc: str
    finished_utc: str


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, manifest: RunManifest) -> None:
    (out_dir / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")


def _load_config(path: str | None) -> dict:
    """Flat key=value file; '#' starts a comment."""
    if path is None:
        return {}
    values: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {line!r}")
        key, val = line.split("=", 1)
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merge_config(args: argparse.Namespace, config: dict) -> None:
    """Fill in options the command line left at None. Precedence:
    flags > config file > defaults (handled by the caller)."""
    for key, raw in config.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, raw)


def _pick(value, default, cast=float):
    if value is None:
        return default
    return cast(value)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_seed(args) -> int:
    if args.seed is None:
        seed = int.from_bytes(np.random.SeedSequence().entropy.to_bytes(16, "little")[:4], "little")
        print(f"generated seed: {seed}")
        return seed
    return int(args.seed)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    _merge_config(args, config)
    out = _prepare_out(args)
    seed = _resolve_seed(args)
    started = _utc_now()
    spectrum = None
    if args.case == "fourier":
        eps = _pick(args.eps, 0.0)
        spectrum = FourierSpectrum.single_mode(eps)
    spec = CampaignSpec(
        case=args.case,
        N_values=tuple(_int_list(args.n)),
        seed=seed,
        w=_pick(args.w, 2.0),
        sigma=_pick(args.sigma, 0.3),
        outer_samples=_pick(args.samples, 5000, int),
        mc_samples=_pick(args.mc_samples, 10000, int),
        two_sided=bool(args.two_sided),
        spectrum=spectrum,
        mc_path=bool(args.mc_path),
        grid_cells=_pick(args.grid_cells, 201, int),
        workers=_pick(args.workers, 1, int),
    )
    result = run_campaign(spec)
    write_campaign_csv(result, out / "results.csv")
    detail = ["case,N,mean_sq_error,stderr,asymptotic,rejection_rate,flagged,mc_mean"]
    for r in result.rows:
        asym = "" if r.asymptotic is None else repr(r.asymptotic)
        mc = "" if r.mc_mean is None or math.isnan(r.mc_mean) else repr(r.mc_mean)
        detail.append(
            f"{r.case},{r.N},{r.mean_sq_error!r},{r.stderr!r},{asym},"
            f"{r.rejection_rate!r},{int(r.flagged)},{mc}"
        )
    (out / "results_detail.csv").write_text("\n".join(detail) + "\n")
    manifest = RunManifest(
        command="simulate",
        parameters={
            "case": spec.case,
            "n": list(spec.N_values),
            "w": spec.w,
            "sigma": spec.sigma,
            "samples": spec.outer_samples,
            "mc_samples": spec.mc_samples,
            "two_sided": spec.two_sided,
            "eps": args.eps if args.case == "fourier" else None,
            "mc_path": spec.mc_path,
            "grid_cells": spec.grid_cells,
        },
        seed=seed,
        code_version=__version__,
        input_digests={},
        outputs=["results.csv", "results_detail.csv"],
        started_utc=started,
        finished_utc=_utc_now(),
    )
    _write_manifest(out, manifest)
    return 0


# ---------------------------------------------------------------------------
# asymptotics


def cmd_asymptotics(args) -> int:
    config = _load_config(args.config)
    _merge_config(args, config)
    out = _prepare_out(args)
    started = _utc_now()
    w = _pick(args.w, 2.0)
    sigma = _pick(args.sigma, 0.3)
    eps = _pick(args.eps, 0.0)
    rows = []
    for n in _int_list(args.n):
        u = uniform_expected_sq_error(n, w, [sigma] * n)
        four = fourier_expected_sq_error(n, w, FourierSpectrum.single_mode(eps))
        if sigma > 0 and all(c >= 2 for c in direction_counts(n)):
            params = [gumbel_params_leading(int(c), sigma) for c in direction_counts(n)]
            ortho = orthogonal_expected_sq_error(params)
            ortho_lead = orthogonal_leading_order([int(c) for c in direction_counts(n)], sigma)
        else:
            ortho = math.nan
            ortho_lead = math.nan
        rows.append(
            {
                "N": n,
                "uniform_total": u.total,
                "uniform_geometric": u.geometric,
                "uniform_noise": u.noise,
                "orthogonal": ortho,
                "orthogonal_leading": ortho_lead,
                "fourier_geometric": four,
            }
        )
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(r[k]) if k != "N" else str(r[k]) for k in header))
    (out / "asymptotics.csv").write_text("\n".join(lines) + "\n")
    (out / "asymptotics.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    manifest = RunManifest(
        command="asymptotics",
        parameters={"n": _int_list(args.n), "w": w, "sigma": sigma, "eps": eps},
        seed=None,
        code_version=__version__,
        input_digests={},
        outputs=["asymptotics.csv", "asymptotics.json"],
        started_utc=started,
        finished_utc=_utc_now(),
    )
    _write_manifest(out, manifest)
    return 0


# ---------------------------------------------------------------------------
# optimality


def cmd_optimality(args) -> int:
    config = _load_config(args.config)
    _merge_config(args, config)
    out = _prepare_out(args)
    seed = _resolve_seed(args)
    started = _utc_now()
    n = _pick(args.n_vehicles, 200, int)
    spec = CampaignSpec(
        case="uniform",
        N_values=(n,),
        seed=seed,
        w=_pick(args.w, 2.0),
        sigma=0.0,
        outer_samples=_pick(args.samples, 5000, int),
        workers=_pick(args.workers, 1, int),
    )
    epsilons = _float_list(args.eps_list)
    result = verify_optimality(epsilons, n, spec)
    lines = ["epsilon,mc_mean,mc_stderr,predictor,rejection_rate"]
    for r in result.rows:
        lines.append(f"{r.epsilon!r},{r.mc_mean!r},{r.mc_stderr!r},{r.predictor!r},{r.rejection_rate!r}")
    (out / "optimality.csv").write_text("\n".join(lines) + "\n")
    manifest = RunManifest(
        command="optimality",
        parameters={
            "eps_list": epsilons,
            "n_vehicles": n,
            "w": spec.w,
            "samples": spec.outer_samples,
        },
        seed=seed,
        code_version=__version__,
        input_digests={},
        outputs=["optimality.csv"],
        started_utc=started,
        finished_utc=_utc_now(),
    )
    _write_manifest(out, manifest)
    return 0


# ---------------------------------------------------------------------------
# distribution


def cmd_distribution(args) -> int:
    config = _load_config(args.config)
    _merge_config(args, config)
    out = _prepare_out(args)
    seed = _resolve_seed(args)
    started = _utc_now()
    sigma2 = _pick(args.sigma2, 0.5)
    n_values = _int_list(args.n)
    spec = CampaignSpec(
        case="uniform",
        N_values=tuple(n_values),
        seed=seed,
        w=_pick(args.w, 2.0),
        sigma=math.sqrt(sigma2),
        outer_samples=_pick(args.samples, 10000, int),
        workers=_pick(args.workers, 1, int),
    )
    dists, rates = error_distribution(n_values, spec)
    outputs = []
    summary = ["N,median,p90,rejection_rate"]
    for n in n_values:
        name = f"distribution_N{n}.csv"
        vals = dists[n]
        (out / name).write_text("sorted_mean_sq_error\n" + "\n".join(repr(v) for v in vals) + "\n")
        outputs.append(name)
        summary.append(
            f"{n},{np.median(vals)!r},{np.quantile(vals, 0.9)!r},{rates[n]!r}"
        )
    (out / "distribution_summary.csv").write_text("\n".join(summary) + "\n")
    outputs.append("distribution_summary.csv")
    manifest = RunManifest(
        command="distribution",
        parameters={"n": n_values, "sigma2": sigma2, "w": spec.w, "samples": spec.outer_samples},
        seed=seed,
        code_version=__version__,
        input_digests={},
        outputs=outputs,
        started_utc=started,
        finished_utc=_utc_now(),
    )
    _write_manifest(out, manifest)
    return 0


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    _merge_config(args, config)
    out = _prepare_out(args)
    seed = _resolve_seed(args)
    started = _utc_now()
    n_values = _int_list(args.n)
    lines = [
        "two_sided,N,c_N,stderr,fitted_constant,fitted_ci95,slope_vs_inv_N,slope_ci95,"
        "candidate_directed,candidate_undirected"
    ]
    for two_sided in (False, True):
        spec = CampaignSpec(
            case="uniform",
            N_values=tuple(n_values),
            seed=seed,
            w=_pick(args.w, 2.0),
            sigma=0.0,
            outer_samples=_pick(args.samples, 5000, int),
            two_sided=two_sided,
            workers=_pick(args.workers, 1, int),
        )
        fit = calibrate_uniform_constant(spec)
        for n, c_n, se in fit.per_n:
            lines.append(
                f"{int(two_sided)},{n},{c_n!r},{se!r},{fit.constant!r},{fit.constant_ci!r},"
                f"{fit.slope_vs_inv_n!r},{fit.slope_ci!r},"
                f"{fit.candidate_directed!r},{fit.candidate_undirected!r}"
            )
    (out / "calibration.csv").write_text("\n".join(lines) + "\n")
    manifest = RunManifest(
        command="calibrate",
        parameters={"n": n_values, "w": _pick(args.w, 2.0), "samples": _pick(args.samples, 5000, int)},
        seed=seed,
        code_version=__version__,
        input_digests={},
        outputs=["calibration.csv"],
        started_utc=started,
        finished_utc=_utc_now(),
    )
    _write_manifest(out, manifest)
    return 0


# ---------------------------------------------------------------------------
# fleet subcommands


def _fleet_ingest(args, out: Path, seed: int, started: str) -> RunManifest:
    records, stats = fleet.ingest_trips(args.input)
    fleet.export_trips(out / "trips_normalized.csv", records)
    (out / "ingest_stats.json").write_text(json.dumps(asdict(stats), indent=2, sort_keys=True) + "\n")
    return RunManifest(
        command="fleet ingest",
        parameters={"input": str(args.input)},
        seed=None,
        code_version=__version__,
        input_digests={str(args.input): _sha256(Path(args.input))},
        outputs=["trips_normalized.csv", "ingest_stats.json"],
        started_utc=started,
        finished_utc=_utc_now(),
    )


def _fleet_synth(args, out: Path, seed: int, started: str) -> RunManifest:
    nx = _pick(args.city_nx, 9, int)
    ny = _pick(args.city_ny, 9, int)
    spacing = _pick(args.spacing, 400.0)
    network = fleet.grid_city_network(nx, ny, spacing)
    intensity = _pick(args.intensity, 3.0)
    hours = _pick(args.hours, 24, int)
    profile = None
    if args.hour_profile:
        profile = _float_list(args.hour_profile)
    boost = _pick(args.center_boost, 1.0)
    lam = np.full(len(network), intensity)
    if boost != 1.0:
        # scale up segments whose midpoint sits in the central third
        w_city = (nx - 1) * spacing
        h_city = (ny - 1) * spacing
        for i, seg in enumerate(network):
            mx = 0.5 * (seg.start.x + seg.end.x)
            my = 0.5 * (seg.start.y + seg.end.y)
            if (w_city / 3 <= mx <= 2 * w_city / 3) or (h_city / 3 <= my <= 2 * h_city / 3):
                lam[i] *= boost
    records = fleet.synth_fleet(network, lam, hours, seed, hour_profile=profile)
    fleet.export_trips(out / "trips.csv", records)
    return RunManifest(
        command="fleet synth",
        parameters={
            "city_nx": nx,
            "city_ny": ny,
            "spacing": spacing,
            "intensity": intensity,
            "hours": hours,
            "hour_profile": profile,
            "center_boost": boost,
        },
        seed=seed,
        code_version=__version__,
        input_digests={},
        outputs=["trips.csv"],
        started_utc=started,
        finished_utc=_utc_now(),
    )


def _fleet_density(args, out: Path, seed: int, started: str) -> RunManifest:
    records, _ = fleet.ingest_trips(args.input)
    cell = _pick(args.cell, 200.0)
    grid = fleet.GridSpec.covering(records, cell)
    tf = fleet.TimeFilter(args.time_kind or "all", _pick(args.time_value, 0, int))
    density = fleet.estimate_density(records, grid, tf, _pick(args.scale_factor, 1.0 / 0.03))
    np.savez(
        out / "density.npz",
        counts=density.counts,
        heading_hist=density.heading_hist,
        layout=np.array([grid.x_min, grid.y_min, grid.cell_size, grid.nx, grid.ny]),
        windows=np.array([density.windows]),
    )
    return RunManifest(
        command="fleet density",
        parameters={
            "input": str(args.input),
            "cell": cell,
            "time_kind": tf.kind,
            "time_value": tf.value,
            "scale_factor": _pick(args.scale_factor, 1.0 / 0.03),
        },
        seed=None,
        code_version=__version__,
        input_digests={str(args.input): _sha256(Path(args.input))},
        outputs=["density.npz"],
        started_utc=started,
        finished_utc=_utc_now(),
    )


def _load_density(path: Path) -> fleet.DensityGrid:
    data = np.load(path)
    x_min, y_min, cell, nx, ny = data["layout"]
    spec = fleet.GridSpec(float(x_min), float(y_min), float(cell), int(nx), int(ny))
    return fleet.DensityGrid(spec, data["counts"], data["heading_hist"], int(data["windows"][0]))


def _fleet_evaluate(args, out: Path, seed: int, started: str) -> RunManifest:
    density = _load_density(Path(args.density))
    grid = fleet.evaluate_accuracy(
        density,
        comm_radius=_pick(args.comm_radius, 1609.0),
        noise_variance=_pick(args.noise_var, 0.5),
        realizations=_pick(args.realizations, 200, int),
        w=_pick(args.w, 2.0),
        seed=seed,
    )
    fleet.export_accuracy(grid, "csv", out / "accuracy.csv")
    fleet.export_accuracy(grid, "svg-heatmap", out / "accuracy.svg")
    fleet.export_accuracy(grid, "json-summary", out / "summary.json")
    return RunManifest(
        command="fleet evaluate",
        parameters={
            "density": str(args.density),
            "comm_radius": _pick(args.comm_radius, 1609.0),
            "noise_var": _pick(args.noise_var, 0.5),
            "realizations": _pick(args.realizations, 200, int),
            "w": _pick(args.w, 2.0),
        },
        seed=seed,
        code_version=__version__,
        input_digests={str(args.density): _sha256(Path(args.density))},
        outputs=["accuracy.csv", "accuracy.svg", "summary.json"],
        started_utc=started,
        finished_utc=_utc_now(),
    )


def _fleet_export(args, out: Path, seed: int, started: str) -> RunManifest:
    grid = fleet.read_accuracy_csv(args.accuracy, _pick(args.cell, 200.0))
    fmt = args.format
    suffix = {"csv": "csv", "svg-heatmap": "svg", "json-summary": "json"}[fmt]
    path = out / f"accuracy_export.{suffix}"
    fleet.export_accuracy(grid, fmt, path)
    return RunManifest(
        command="fleet export",
        parameters={"accuracy": str(args.accuracy), "format": fmt, "cell": _pick(args.cell, 200.0)},
        seed=None,
        code_version=__version__,
        input_digests={str(args.accuracy): _sha256(Path(args.accuracy))},
        outputs=[path.name],
        started_utc=started,
        finished_utc=_utc_now(),
    )


def cmd_fleet(args) -> int:
    config = _load_config(args.config)
    _merge_config(args, config)
    out = _prepare_out(args)
    needs_seed = args.fleet_cmd in ("synth", "evaluate")
    seed = _resolve_seed(args) if needs_seed else 0
    started = _utc_now()
    runner = {
        "ingest": _fleet_ingest,
        "synth": _fleet_synth,
        "density": _fleet_density,
        "evaluate": _fleet_evaluate,
        "export": _fleet_export,
    }[args.fleet_cmd]
    manifest = runner(args, out, seed, started)
    _write_manifest(out, manifest)
    return 0


# ---------------------------------------------------------------------------
# replay


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    command = manifest["command"].split()
    params = manifest["parameters"]
    argv = command[:]
    for key, value in params.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv.extend([flag, ",".join(str(v) for v in value)])
        else:
            argv.extend([flag, str(value)])
    if manifest["seed"] is not None:
        argv.extend(["--seed", str(manifest["seed"])])
    argv.extend(["--out", args.out])
    code = main(argv)
    if code != 0:
        return code
    if args.verify_against:
        ref = Path(args.verify_against)
        for name in manifest["outputs"]:
            new = _sha256(Path(args.out) / name)
            old = _sha256(ref / name)
            if new != old:
                print(f"digest mismatch for {name}")
                return 1
        print("replay digests verified")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmmkit",
        description="Cooperative map-matching error analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeded=True):
        p.add_argument("--out", required=True, help="output directory for results and manifest")
        p.add_argument("--config", help="flat key=value config file; flags take precedence")
        p.add_argument("--workers", type=int, help="parallel workers (count; results independent of it)")
        if seeded:
            p.add_argument("--seed", type=int, help="master RNG seed (integer); generated and printed if omitted")

    p = sub.add_parser("simulate", help="run a simulation campaign")
    p.add_argument(
        "--case",
        required=True,
        choices=("orthogonal", "uniform", "fourier", "weighted-orthogonal", "weighted-uniform"),
        help="campaign case",
    )
    p.add_argument("--n", required=True, help="comma-separated vehicle counts (vehicles)")
    p.add_argument("--w", type=float, help="road half width (meters, default 2)")
    p.add_argument("--sigma", type=float, help="noise std per vehicle (meters, default 0.3)")
    p.add_argument("--samples", type=int, help="outer samples per N (count, default 5000)")
    p.add_argument("--mc-samples", type=int, help="integration samples per draw (count, default 10000)")
    p.add_argument("--mc-path", action="store_true", default=None, help="also record the integration-path mean")
    p.add_argument("--two-sided", action="store_true", default=None, help="use both lane boundaries per vehicle")
    p.add_argument("--eps", type=float, help="single-mode spectral amplitude for the fourier case (dimensionless)")
    p.add_argument("--grid-cells", type=int, help="weighted-estimator grid resolution (cells per side, default 201)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("asymptotics", help="evaluate the closed-form error predictions")
    p.add_argument("--n", required=True, help="comma-separated vehicle counts (vehicles)")
    p.add_argument("--w", type=float, help="road half width (meters, default 2)")
    p.add_argument("--sigma", type=float, help="noise std (meters, default 0.3)")
    p.add_argument("--eps", type=float, help="single-mode spectral amplitude (dimensionless, default 0)")
    common(p, seeded=False)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("optimality", help="MC sweep of spectral perturbations")
    p.add_argument("--eps-list", required=True, help="comma-separated spectral amplitudes (dimensionless)")
    p.add_argument("--n-vehicles", type=int, help="vehicles per draw (count, default 200)")
    p.add_argument("--w", type=float, help="road half width (meters, default 2)")
    p.add_argument("--samples", type=int, help="outer samples per epsilon (count, default 5000)")
    common(p)
    p.set_defaults(func=cmd_optimality)

    p = sub.add_parser("distribution", help="distribution of per-configuration expected error")
    p.add_argument("--n", required=True, help="comma-separated vehicle counts (vehicles)")
    p.add_argument("--sigma2", type=float, help="noise variance (square meters, default 0.5)")
    p.add_argument("--w", type=float, help="road half width (meters, default 2)")
    p.add_argument("--samples", type=int, help="configuration draws per N (count, default 10000)")
    common(p)
    p.set_defaults(func=cmd_distribution)

    p = sub.add_parser("calibrate", help="fit the geometric decay constant in both side conventions")
    p.add_argument("--n", required=True, help="comma-separated vehicle counts (vehicles, e.g. 50,100,200,400)")
    p.add_argument("--w", type=float, help="road half width (meters, default 2)")
    p.add_argument("--samples", type=int, help="draws per N (count, default 5000)")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fleet", help="trip ingestion, synthesis, density, and accuracy maps")
    fs = p.add_subparsers(dest="fleet_cmd", required=True)

    q = fs.add_parser("ingest", help="parse and normalize a trip CSV")
    q.add_argument("--input", required=True, help="trip CSV path")
    common(q, seeded=False)
    q.set_defaults(func=cmd_fleet)

    q = fs.add_parser("synth", help="synthesize a grid-city fleet")
    q.add_argument("--city-nx", type=int, help="vertical roads (count, default 9)")
    q.add_argument("--city-ny", type=int, help="horizontal roads (count, default 9)")
    q.add_argument("--spacing", type=float, help="road spacing (meters, default 400)")
    q.add_argument("--intensity", type=float, help="vehicles per segment-hour (count, default 3)")
    q.add_argument("--hours", type=int, help="hours to simulate (count, default 24)")
    q.add_argument("--hour-profile", help="comma-separated per-hour intensity multipliers (dimensionless)")
    q.add_argument("--center-boost", type=float, help="intensity multiplier for central roads (dimensionless, default 1)")
    common(q)
    q.set_defaults(func=cmd_fleet)

    q = fs.add_parser("density", help="estimate the space-time vehicle density")
    q.add_argument("--input", required=True, help="trip CSV path")
    q.add_argument("--cell", type=float, help="grid cell size (meters, default 200)")
    q.add_argument("--time-kind", choices=("all", "hour", "weekday", "month"), help="time bucket kind")
    q.add_argument("--time-value", type=int, help="bucket value (hour 0-23 / weekday 0-6 / month 1-12)")
    q.add_argument("--scale-factor", type=float, help="population scale-up (dimensionless, default 1/0.03)")
    common(q, seeded=False)
    q.set_defaults(func=cmd_fleet)

    q = fs.add_parser("evaluate", help="map the per-cell localization accuracy")
    q.add_argument("--density", required=True, help="density.npz from `fleet density`")
    q.add_argument("--comm-radius", type=float, help="communication radius (meters, default 1609)")
    q.add_argument("--noise-var", type=float, help="per-vehicle noise variance (square meters, default 0.5)")
    q.add_argument("--realizations", type=int, help="fleet draws per cell (count, default 200)")
    q.add_argument("--w", type=float, help="road half width (meters, default 2)")
    common(q)
    q.set_defaults(func=cmd_fleet)

    q = fs.add_parser("export", help="re-export an accuracy grid")
    q.add_argument("--accuracy", required=True, help="accuracy.csv path")
    q.add_argument("--format", required=True, choices=("csv", "svg-heatmap", "json-summary"), help="output format")
    q.add_argument("--cell", type=float, help="grid cell size of the input (meters, default 200)")
    common(q, seeded=False)
    q.set_defaults(func=cmd_fleet)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("--manifest", required=True, help="manifest.json path")
    p.add_argument("--out", required=True, help="output directory for the replayed run")
    p.add_argument("--verify-against", help="directory with the original outputs to digest-compare")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, fleet.IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
