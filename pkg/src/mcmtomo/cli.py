"""Command-line front end.

Every command reads an optional JSON run configuration (``--config`` or the
``MCMTOMO_CONFIG`` environment variable), writes canonical JSON and CSV files
into ``--out`` and prints the written paths.  Exit codes: 0 success,
2 validation error, 3 fit non-convergence (partial report still written),
4 selftest discrepancy under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .experiments import CircuitDataset, design_circuits, sample_dataset
from .fomgi import ErrorStrengthReport, compare_with_reference
from .inference import DEFAULT_STARTS, FitReport, bootstrap_decomposition, comparison_csv, decompose, fit, gammas_against
from .iq_readout import IqConfig, calibration_points, counts_from_iq, postselect, simulate_iq, train_classifier
from .models import MODEL_TAGS, GateSetModel, TruthModelConfig, build_truth_model, preset_from_amplitude
from .pauli_algebra import ValidationError, dumps

CONFIG_ENV = "MCMTOMO_CONFIG"
EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_SELFTEST = 0, 2, 3, 4

_CONFIG_KEYS = {"truth", "preset", "shots", "seed", "models", "starts", "bootstrap", "dataset", "fit", "sweep", "iq"}


@dataclass(frozen=True)
class RunConfig:
    truth: TruthModelConfig = field(default_factory=TruthModelConfig)
    shots: int = 10_000
    seed: int = 0
    models: tuple[str, ...] = ("CPTP",)
    starts: int = DEFAULT_STARTS
    bootstrap: int = 0
    dataset: Path | None = None
    fit: Path | None = None
    sweep: tuple[dict, ...] = ()
    iq: IqConfig = field(default_factory=IqConfig)

    @classmethod
    def from_json(cls, obj: Mapping, base: Path | None = None) -> RunConfig:
        if not isinstance(obj, Mapping):
            raise ValidationError("configuration must be a JSON object")
        unknown = set(obj) - _CONFIG_KEYS
        if unknown:
            raise ValidationError(f"unknown configuration keys {sorted(unknown)}")
        if "truth" in obj and "preset" in obj:
            raise ValidationError("give either 'truth' or 'preset', not both")
        kw: dict = {}
        if "truth" in obj:
            kw["truth"] = TruthModelConfig.from_json(obj["truth"])
        if "preset" in obj:
            kw["truth"] = _preset(obj["preset"])
        for key in ("shots", "seed", "starts", "bootstrap"):
            if key in obj:
                v = obj[key]
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise ValidationError(f"{key} must be a nonnegative integer")
                kw[key] = v
        if "models" in obj:
            kw["models"] = _models(obj["models"])
        for key in ("dataset", "fit"):
            if key in obj:
                p = Path(obj[key])
                kw[key] = p if p.is_absolute() or base is None else base / p
        if "sweep" in obj:
            kw["sweep"] = _sweep_points(obj["sweep"])
        if "iq" in obj:
            kw["iq"] = IqConfig.from_json(obj["iq"])
        cfg = cls(**kw)
        if cfg.shots == 0:
            raise ValidationError("shots must be positive")
        if cfg.starts == 0:
            raise ValidationError("starts must be positive")
        return cfg


def _preset(obj) -> TruthModelConfig:
    if not isinstance(obj, Mapping) or "v_ratio" not in obj:
        raise ValidationError("preset needs a 'v_ratio' entry")
    try:
        return preset_from_amplitude(**{k: float(v) for k, v in obj.items()})
    except TypeError as exc:
        raise ValidationError(f"bad preset: {exc}") from None


def _models(value) -> tuple[str, ...]:
    tags = value.split(",") if isinstance(value, str) else list(value)
    tags = [t.strip() for t in tags if t.strip()]
    bad = [t for t in tags if t not in MODEL_TAGS]
    if bad or not tags:
        raise ValidationError(f"unknown model tags {bad}; choose from {list(MODEL_TAGS)}")
    return tuple(tags)


def _sweep_points(value) -> tuple[dict, ...]:
    """A list of truth overrides, or ``{"axis": name, "values": [...]}``."""
    if isinstance(value, Mapping):
        if set(value) != {"axis", "values"}:
            raise ValidationError("sweep object needs exactly 'axis' and 'values'")
        points = [{value["axis"]: v} for v in value["values"]]
    else:
        points = list(value)
    if not points or not all(isinstance(p, Mapping) for p in points):
        raise ValidationError("sweep must be a nonempty list of parameter sets")
    return tuple(dict(p) for p in points)


def _truth_for_point(base: TruthModelConfig, point: Mapping) -> TruthModelConfig:
    point = dict(point)
    if "v_ratio" in point:
        cfg = preset_from_amplitude(float(point.pop("v_ratio")))
    else:
        cfg = base
    unknown = set(point) - set(TruthModelConfig.__dataclass_fields__)
    if unknown:
        raise ValidationError(f"unknown sweep parameters {sorted(unknown)}")
    return replace(cfg, **{k: float(v) for k, v in point.items()})


# ------------------------------------------------------------------ io helpers


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    print(path)
    return path


def _load_config(args) -> RunConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        cfg = RunConfig.from_json(_read_json(Path(path)), base=Path(path).resolve().parent)
    else:
        cfg = RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "models", None):
        overrides["models"] = _models(args.models)
    if getattr(args, "data", None):
        overrides["dataset"] = Path(args.data)
    if getattr(args, "fit_file", None):
        overrides["fit"] = Path(args.fit_file)
    if getattr(args, "shots", None) is not None:
        if args.shots <= 0:
            raise ValidationError("shots must be positive")
        overrides["shots"] = args.shots
    if getattr(args, "bootstrap", None) is not None:
        overrides["bootstrap"] = args.bootstrap
    return replace(cfg, **overrides)


def _load_dataset(cfg: RunConfig) -> CircuitDataset:
    if cfg.dataset is None:
        raise ValidationError("no dataset given (use --data or the 'dataset' config key)")
    return CircuitDataset.from_json(_read_json(cfg.dataset))


def _fit_all(data: CircuitDataset, cfg: RunConfig) -> dict[str, FitReport]:
    return {tag: fit(data, tag, starts=cfg.starts, seed=cfg.seed) for tag in cfg.models}


def _fit_outputs(out: Path, fits: Mapping[str, FitReport]) -> bool:
    ref = max(fits.values(), key=lambda f: f.k_model).model_tag
    gammas = gammas_against(fits, ref)
    for tag, f in fits.items():
        obj = f.to_json()
        if tag in gammas:
            obj["gammas"] = {ref: gammas[tag]}
        _write(out, f"fit_{_slug(tag)}.json", dumps(obj))
    _write(out, "comparison.csv", comparison_csv(list(fits.values()), ref))
    return all(f.converged for f in fits.values())


def _slug(tag: str) -> str:
    return tag.lower().replace("+", "_")


# ------------------------------------------------------------------ commands


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    gs = build_truth_model(cfg.truth)
    data = sample_dataset(gs, design_circuits(), cfg.shots, cfg.seed)
    _write(out, "dataset.json", dumps(data.to_json()))
    _write(out, "dataset.csv", data.to_csv())
    _write(out, "truth.json", dumps({"config": cfg.truth.to_json(), "model": gs.to_json()}))
    return EXIT_OK


def cmd_fit(cfg: RunConfig, out: Path) -> int:
    fits = _fit_all(_load_dataset(cfg), cfg)
    return EXIT_OK if _fit_outputs(out, fits) else EXIT_NOT_CONVERGED


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    if len(cfg.models) < 2:
        cfg = replace(cfg, models=tuple(MODEL_TAGS))
    return cmd_fit(cfg, out)


def _decomposition(report: FitReport, data: CircuitDataset, cfg: RunConfig) -> ErrorStrengthReport:
    if cfg.bootstrap:
        return bootstrap_decomposition(
            report, data.circuits, data.shots_per_circuit, n_resamples=cfg.bootstrap, seed=cfg.seed
        )
    return decompose(report.model)


def cmd_decompose(cfg: RunConfig, out: Path) -> int:
    if cfg.fit is not None and not cfg.bootstrap:
        obj = _read_json(cfg.fit)
        model = GateSetModel.from_json(obj["model"] if "model" in obj else obj)
        _write_strengths(out, decompose(model))
        return EXIT_OK
    data = _load_dataset(cfg)
    tag = cfg.models[0]
    report = fit(data, tag, starts=cfg.starts, seed=cfg.seed)
    _fit_outputs(out, {tag: report})
    _write_strengths(out, _decomposition(report, data, cfg))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _write_strengths(out: Path, rep: ErrorStrengthReport) -> None:
    _write(out, "strengths.json", dumps(rep.to_json()))
    _write(out, "strengths.csv", rep.to_csv())


def _sweep_point(args) -> dict:
    index, point, cfg = args
    row = {"index": index, "point": dict(point)}
    try:
        truth = _truth_for_point(cfg.truth, point)
        seed = cfg.seed + index
        data = sample_dataset(build_truth_model(truth), design_circuits(), cfg.shots, seed)
        row["fits"] = {}
        for tag in cfg.models:
            rep = fit(data, tag, starts=cfg.starts, seed=seed)
            dec = decompose(rep.model)
            row["fits"][tag] = {
                "n_sigma": rep.n_sigma,
                "two_delta_logl": rep.two_delta_logl,
                "converged": rep.converged,
                "strengths": dec.strengths,
                "composites": dec.composites,
                "extra": dec.extra,
            }
    except Exception as exc:  # noqa: BLE001 - a failed point must not stop the sweep
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    if not cfg.sweep:
        raise ValidationError("sweep needs a nonempty 'sweep' entry in the configuration")
    tasks = [(i, p, cfg) for i, p in enumerate(cfg.sweep)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    rows.sort(key=lambda r: r["index"])
    _write(out, "sweep.json", dumps(rows))
    lines = ["index,model,quantity,value"]
    for r in rows:
        if "error" in r:
            lines.append(f"{r['index']},,error,\"{r['error']}\"")
            continue
        for tag, f in r["fits"].items():
            lines.append(f"{r['index']},{tag},n_sigma,{f['n_sigma']:.9g}")
            for group in ("strengths", "composites", "extra"):
                for k, v in f[group].items():
                    lines.append(f"{r['index']},{tag},{k},{v:.9g}")
    _write(out, "sweep.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_postselect(cfg: RunConfig, out: Path) -> int:
    gs = build_truth_model(cfg.truth)
    iq = simulate_iq(gs, design_circuits(), cfg.iq, cfg.shots, cfg.seed)
    pts, prep = calibration_points(iq)
    clf3 = train_classifier(pts, 3, prep, seed=cfg.seed)
    clf2 = train_classifier(pts, 2, prep, seed=cfg.seed)
    filtered, stats = postselect(iq, clf3)
    _write(out, "iq_shots.csv", iq.to_csv())
    _write(out, "classifier3.json", dumps(clf3.to_json()))
    _write(out, "classifier2.json", dumps(clf2.to_json()))
    _write(out, "dataset_unfiltered.json", dumps(counts_from_iq(iq, clf2).to_json()))
    _write(out, "dataset_postselected.json", dumps(filtered.to_json()))
    _write(out, "removal.json", dumps(stats.to_json()))
    return EXIT_OK


def cmd_selftest(strict: bool, out: Path | None) -> int:
    from .reference_tables import KNOWN_DISCREPANCIES, REFERENCE_FIT_STATISTICS, REFERENCE_K_SAT
    from .inference import evidence_ratio, n_sigma

    cmp = compare_with_reference()
    stats = []
    ref = REFERENCE_FIT_STATISTICS[0]
    for tag, k, two_dl, ns, gamma in REFERENCE_FIT_STATISTICS:
        row = {"model": tag, "params": k, "two_delta_logl": two_dl, "n_sigma": n_sigma(two_dl, REFERENCE_K_SAT - k)}
        if gamma is not None:
            row["gamma"] = evidence_ratio((ref[2], ref[1]), (two_dl, k))
        stats.append(row)
    known_rows = {k for k in KNOWN_DISCREPANCIES if k != "unit_actions"}
    unexpected = (set(cmp.row_mismatches) - known_rows) | (
        set(cmp.unit_action_mismatches) - set(KNOWN_DISCREPANCIES["unit_actions"])
    )
    result = {"tables": cmp.to_json(), "fit_statistics": stats, "unexpected": sorted(unexpected)}
    for lab, diffs in cmp.row_mismatches.items():
        for name, pub, gen in diffs:
            print(f"combination {lab}: {name} reference {pub:g}, generated {gen:g}")
    for lab in cmp.unit_action_mismatches:
        print(f"unit action {lab}: reference form differs from the generated deviation")
    for row in stats:
        print(f"{row['model']}: N_sigma {row['n_sigma']:.2f}" + (f", gamma {row['gamma']:.2f}" if "gamma" in row else ""))
    if out is not None:
        _write(out, "selftest.json", dumps(result))
    if unexpected:
        return EXIT_SELFTEST
    return EXIT_SELFTEST if strict and not cmp.exact else EXIT_OK


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON run configuration (default: ${CONFIG_ENV})")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--models", help="comma-separated model tags")

    p = argparse.ArgumentParser(prog="mcmtomo", description="Mid-circuit measurement tomography toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="sample a synthetic dataset")
    s.add_argument("--shots", type=int)
    for name in ("fit", "compare"):
        s = sub.add_parser(name, parents=[common], help=f"{name} models on a dataset")
        s.add_argument("--data", help="dataset JSON")
    s = sub.add_parser("decompose", parents=[common], help="error-strength decomposition")
    s.add_argument("--data", help="dataset JSON")
    s.add_argument("--fit", dest="fit_file", help="fit report JSON to decompose")
    s.add_argument("--bootstrap", type=int, help="parametric bootstrap resamples")
    s = sub.add_parser("sweep", parents=[common], help="simulate and fit a sweep of truth models")
    s.add_argument("--shots", type=int)
    s = sub.add_parser("postselect", parents=[common], help="IQ simulation, classifiers, leakage post-selection")
    s.add_argument("--shots", type=int)
    s = sub.add_parser("selftest", parents=[common], help="compare generated tables with the reference fixture")
    s.add_argument("--strict", action="store_true", help="fail on known discrepancies")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "selftest":
            return cmd_selftest(args.strict, out)
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        cfg = _load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "fit":
            return cmd_fit(cfg, out)
        if args.command == "compare":
            return cmd_compare(cfg, out)
        if args.command == "decompose":
            return cmd_decompose(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.jobs)
        return cmd_postselect(cfg, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
