"""Experiment protocols over the training harness.

Three protocols, each returning a JSON-serializable report with a schema
version:

- run_principle_verification: train a separated network (live head plus
  gradient-detached per-depth probes and a weighted multi-level head) over
  several seeds; report per-head test MSE and the depth trend counts.
- sweep: train one architecture family along a single axis (weight decay
  factor p, or architecture variant) with an identical config; report
  normalized losses.  Selection uses best-validation MSE; test MSE is
  recorded alongside.
- compare_architectures: capacity-matched comparison of kinds across
  cases and seeds; reports per-case normalized test losses, pyramid
  vs serial-baseline win rate (strict-less wins), and the mean relative
  MSE reduction.
"""

from __future__ import annotations

import json

from wspnet.architectures import (
    ArchSpec,
    SeparatedNetSpec,
    build,
    build_separated,
    match_capacity,
    param_count,
)
from wspnet.datasets import Dataset, build_dataset
from wspnet.errors import ConfigurationError, ContractError
from wspnet.training import (
    TrainConfig,
    evaluate_separated,
    normalized_loss,
    train,
    train_separated,
)

__all__ = [
    "REPORT_SCHEMA_VERSION",
    "PYRAMID_BASELINES",
    "run_principle_verification",
    "sweep",
    "compare_architectures",
    "save_report",
    "load_report",
]

REPORT_SCHEMA_VERSION = 1

# Serial counterpart of each pyramid network for win-rate accounting.
PYRAMID_BASELINES = {
    "pyramid_lstm": "lstm_baseline",
    "pyramid_transformer": "transformer_baseline",
    "pyramid_ga": "transformer_baseline",
}


def _default_config() -> TrainConfig:
    return TrainConfig(epochs=40, batch_size=8, lr=1e-3, patience=0)


def run_principle_verification(
    dataset: Dataset,
    seeds,
    extractor: str = "lstm",
    depth: int = 3,
    d_model: int = 16,
    p: float = 2.0,
    config: TrainConfig | None = None,
) -> dict:
    """Per-depth probe losses vs the multi-level head, across seeds."""
    if depth < 3:
        raise ConfigurationError(f"principle verification needs depth >= 3, got {depth}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    config = config if config is not None else _default_config()

    per_seed = []
    for seed in seeds:
        spec = SeparatedNetSpec(
            extractor=extractor,
            depth=depth,
            d_in=dataset.channels_in,
            d_out=dataset.channels_out,
            d_model=d_model,
            p=p,
            seed=seed,
        )
        model = build_separated(spec)
        train_separated(model, dataset, config.with_seed(seed))
        heads = evaluate_separated(model, dataset.test)
        probe = {
            k[len("probe_") :]: v for k, v in heads.items() if k.startswith("probe_")
        }
        per_seed.append(
            {
                "seed": seed,
                "live_mse": heads["live"],
                "multi_mse": heads["multi"],
                "probe_mse": probe,
            }
        )

    tap_names = sorted(per_seed[0]["probe_mse"], key=lambda n: int(n[1:]) if n[1:].isdigit() else n)
    shallow, deep = tap_names[0], tap_names[-1]
    deeper_wins = sum(
        1 for row in per_seed if row["probe_mse"][deep] < row["probe_mse"][shallow]
    )
    multi_wins = sum(
        1 for row in per_seed if row["multi_mse"] <= min(row["probe_mse"].values())
    )
    n = len(per_seed)
    aggregate = {
        "live_mse": sum(r["live_mse"] for r in per_seed) / n,
        "multi_mse": sum(r["multi_mse"] for r in per_seed) / n,
        "probe_mse": {
            t: sum(r["probe_mse"][t] for r in per_seed) / n for t in tap_names
        },
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "protocol": "principle_verification",
        "extractor": extractor,
        "depth": depth,
        "d_model": d_model,
        "p": p,
        "seeds": seeds,
        "config": config.to_dict(),
        "per_seed": per_seed,
        "aggregate": aggregate,
        "trend": {
            "n_seeds": n,
            "deepest_tap": deep,
            "shallowest_tap": shallow,
            "deepest_beats_shallowest": deeper_wins,
            "multi_at_or_below_best_single": multi_wins,
        },
    }


def sweep(
    axis: str,
    values,
    dataset: Dataset,
    kind: str = "pyramid_lstm",
    d_model: int = 16,
    config: TrainConfig | None = None,
) -> dict:
    """Train along one axis with an identical config; normalize the losses.

    axis 'decay_factor': values are p floats applied to ``kind``.
    axis 'variant': values are architecture kinds trained as given.
    """
    values = list(values)
    if not values:
        raise ConfigurationError("sweep requires at least one value")
    if axis not in ("decay_factor", "variant"):
        raise ConfigurationError(f"unknown sweep axis {axis!r}; use decay_factor or variant")
    config = config if config is not None else _default_config()

    rows = []
    for value in values:
        if axis == "decay_factor":
            spec = ArchSpec(
                kind=kind,
                d_in=dataset.channels_in,
                d_out=dataset.channels_out,
                d_model=d_model,
                p=float(value),
                seed=config.seed,
            )
        else:
            spec = ArchSpec(
                kind=str(value),
                d_in=dataset.channels_in,
                d_out=dataset.channels_out,
                d_model=d_model,
                seed=config.seed,
            )
        model = build(spec)
        metrics = train(model, dataset, config)
        rows.append(
            {
                "value": value if axis == "variant" else float(value),
                "kind": spec.kind,
                "p": spec.p,
                "valid_mse": metrics.best_valid_mse(),
                "test_mse": metrics.test_mse,
            }
        )
    for row, ln in zip(rows, normalized_loss([r["valid_mse"] for r in rows])):
        row["loss_n"] = ln
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "protocol": "sweep",
        "axis": axis,
        "kind": kind,
        "d_model": d_model,
        "config": config.to_dict(),
        "rows": rows,
    }


def compare_architectures(
    kinds,
    cases,
    seeds,
    d_model: int = 16,
    config: TrainConfig | None = None,
    scale: float = 1.0,
    data_seed: int = 0,
    datasets: dict | None = None,
) -> dict:
    """Capacity-matched comparison across kinds, cases, and seeds.

    The first kind anchors the parameter budget; every other kind gets the
    width match_capacity selects (within 10%).  ``datasets`` may supply
    prebuilt Dataset objects keyed by case name; missing cases are built
    at ``scale``.
    """
    kinds = list(kinds)
    cases = list(cases)
    seeds = [int(s) for s in seeds]
    if not kinds or not cases or not seeds:
        raise ConfigurationError("compare needs at least one kind, case, and seed")
    config = config if config is not None else _default_config()
    datasets = dict(datasets) if datasets else {}
    for case in cases:
        if case not in datasets:
            datasets[case] = build_dataset(case, seed=data_seed, scale=scale)
    ref_ds = datasets[cases[0]]
    c_in, c_out = ref_ds.channels_in, ref_ds.channels_out
    for case in cases[1:]:
        ds = datasets[case]
        if ds.channels_in != c_in or ds.channels_out != c_out:
            raise ConfigurationError(
                f"case {case!r} has channels {ds.channels_in}->{ds.channels_out}; "
                f"all compared cases must share {c_in}->{c_out}"
            )

    anchor = ArchSpec(kind=kinds[0], d_in=c_in, d_out=c_out, d_model=d_model)
    widths = {kinds[0]: d_model}
    for kind in kinds[1:]:
        widths[kind] = match_capacity(anchor, kind)
    counts = {
        kind: param_count(build(ArchSpec(kind=kind, d_in=c_in, d_out=c_out, d_model=widths[kind])))
        for kind in kinds
    }

    results = []
    for case in cases:
        ds = datasets[case]
        for kind in kinds:
            for seed in seeds:
                spec = ArchSpec(
                    kind=kind, d_in=c_in, d_out=c_out, d_model=widths[kind], seed=seed
                )
                model = build(spec)
                metrics = train(model, ds, config.with_seed(seed))
                results.append(
                    {
                        "case": case,
                        "kind": kind,
                        "seed": seed,
                        "test_mse": metrics.test_mse,
                        "valid_mse": metrics.best_valid_mse(),
                    }
                )

    def mean_mse(case, kind):
        vals = [r["test_mse"] for r in results if r["case"] == case and r["kind"] == kind]
        return sum(vals) / len(vals)

    case_summary = []
    for case in cases:
        means = [mean_mse(case, kind) for kind in kinds]
        for kind, m, ln in zip(kinds, means, normalized_loss(means)):
            case_summary.append(
                {"case": case, "kind": kind, "mean_test_mse": m, "loss_n": ln}
            )

    pairs = []
    for pyramid, baseline in sorted(PYRAMID_BASELINES.items()):
        if pyramid not in kinds or baseline not in kinds:
            continue
        for case in cases:
            for seed in seeds:
                pyr = next(
                    r["test_mse"] for r in results
                    if r["case"] == case and r["kind"] == pyramid and r["seed"] == seed
                )
                base = next(
                    r["test_mse"] for r in results
                    if r["case"] == case and r["kind"] == baseline and r["seed"] == seed
                )
                pairs.append(
                    {
                        "pyramid": pyramid,
                        "baseline": baseline,
                        "case": case,
                        "seed": seed,
                        "pyramid_mse": pyr,
                        "baseline_mse": base,
                        "win": pyr < base,
                        "relative_reduction": (base - pyr) / base,
                    }
                )
    summary = {
        "win_rate": (sum(1 for p_ in pairs if p_["win"]) / len(pairs)) if pairs else None,
        "mean_relative_reduction": (
            sum(p_["relative_reduction"] for p_ in pairs) / len(pairs) if pairs else None
        ),
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "protocol": "architecture_comparison",
        "kinds": kinds,
        "cases": cases,
        "seeds": seeds,
        "d_model": d_model,
        "matched_widths": widths,
        "param_counts": counts,
        "config": config.to_dict(),
        "results": results,
        "case_summary": case_summary,
        "pairs": pairs,
        "summary": summary,
    }


def save_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_report(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        report = json.load(f)
    if not isinstance(report, dict) or "schema_version" not in report:
        raise ContractError(f"{path} is not a report file (missing schema_version)")
    return report
