"""Command line front end: configure, run, fit, and export.

A study is described by one flat JSON config. The file is canonicalized
(defaults merged, keys sorted) and hashed; every output embeds that hash,
so downstream steps can refuse inputs produced under a different
configuration. Exit codes: 0 success, 2 bad configuration, 3 numerical
failure, 4 integrity failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channels import (
    Channel,
    ErrorModel,
    depolarizing_comp,
    dilated_error,
    exact_average_fidelity_comp,
    identity_channel,
    unitary_error,
)
from .cliffords import (
    CLIFFORD_ORDER,
    CNOT,
    CliffordGroup,
    QutritUnitary,
    embed_qutrit,
    leak_mixing_cnot,
)
from .engine import (
    RbConfig,
    SequenceResult,
    analytic_variance,
    read_results,
    run_irb,
    run_protocol,
    summarize,
    write_results,
)
from .exceptions import ConfigError, IntegrityError, NumericalError
from .fitting import (
    bootstrap_error_ci,
    error_per_gate,
    fit_decay,
    fit_report,
    fit_variance_shape,
    irb_estimate,
    samples_from_results,
)

_DEFAULTS = {
    "shots": None,
    "initial_state": 0,
    "leakage_policy": "identity",
    "entangler": "diagonal",
    "phase_seed": 0,
    "include_inverter_error": True,
    "error_kind": "none",
    "error_delta": 0.0,
    "error_p": 0.0,
    "error_seed": 0,
    "interleaved_gate": None,
    "interleaved_error_kind": "none",
    "interleaved_error_delta": 0.0,
    "interleaved_error_p": 0.0,
    "interleaved_error_seed": 1,
    "group_cache": None,
    "max_order": 3,
    "bootstrap_replicates": 1000,
}
_REQUIRED = ("n_qubits", "lengths", "sequences_per_length", "master_seed")
_ALLOWED = set(_DEFAULTS) | set(_REQUIRED)

_ERROR_KINDS = ("none", "unitary", "dilated", "depolarizing")


def load_config(
    path: str | Path,
    seed_override: int | None = None,
    shots_override: int | None = None,
) -> dict:
    """Parse, validate, and canonicalize a flat JSON config."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a single JSON object")
    unknown = sorted(set(raw) - _ALLOWED)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(set(_REQUIRED) - set(raw))
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    cfg = {**_DEFAULTS, **raw}
    if seed_override is not None:
        cfg["master_seed"] = seed_override
    if shots_override is not None:
        cfg["shots"] = shots_override
    if cfg["error_kind"] not in _ERROR_KINDS:
        raise ConfigError(f"error_kind must be one of {_ERROR_KINDS}")
    if cfg["interleaved_error_kind"] not in _ERROR_KINDS:
        raise ConfigError(f"interleaved_error_kind must be one of {_ERROR_KINDS}")
    if not isinstance(cfg["lengths"], list):
        raise ConfigError("lengths must be a JSON array of integers")
    cfg["lengths"] = [int(y) for y in cfg["lengths"]]
    if cfg["max_order"] < 1:
        raise ConfigError("max_order must be at least 1")
    return cfg


def config_hash(cfg: dict) -> str:
    """Canonical hash; invariant under key reordering in the source file."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _channel_from(kind: str, delta: float, p: float, seed: int, n_qubits: int) -> Channel | None:
    dim = 3**n_qubits
    if kind == "none":
        return None
    if kind == "unitary":
        if delta <= 0.0:
            raise ConfigError("unitary error needs error_delta > 0")
        return unitary_error(dim, delta, np.random.default_rng(seed))
    if kind == "dilated":
        if delta <= 0.0:
            raise ConfigError("dilated error needs error_delta > 0")
        return dilated_error(dim, dim, delta, np.random.default_rng(seed))
    if not 0.0 <= p <= 1.0:
        raise ConfigError("depolarizing error needs error_p in [0, 1]")
    return depolarizing_comp(n_qubits, p)


def build_model(cfg: dict) -> ErrorModel:
    n = cfg["n_qubits"]
    gate = _channel_from(
        cfg["error_kind"], cfg["error_delta"], cfg["error_p"], cfg["error_seed"], n
    )
    if gate is None:
        gate = identity_channel(3**n)
    interleaved = None
    if cfg["interleaved_gate"] is not None:
        interleaved = _channel_from(
            cfg["interleaved_error_kind"],
            cfg["interleaved_error_delta"],
            cfg["interleaved_error_p"],
            cfg["interleaved_error_seed"],
            n,
        )
        if interleaved is None:
            interleaved = identity_channel(3**n)
    return ErrorModel(gate=gate, interleaved=interleaved)


def parse_interleaved_gate(value, n_qubits: int) -> QutritUnitary:
    """Named gate or serialized unitary from the config.

    A matrix is a nested array of [re, im] pairs, either 2^N x 2^N (the
    computational block, leakage identity) or 3^N x 3^N (full action).
    """
    if isinstance(value, str):
        if value == "identity":
            return embed_qutrit(np.eye(2**n_qubits))
        if value == "cnot":
            if n_qubits != 2:
                raise ConfigError("cnot interleaved gate needs n_qubits = 2")
            return embed_qutrit(CNOT)
        if value == "leak_mixing_cnot":
            if n_qubits != 2:
                raise ConfigError("leak_mixing_cnot interleaved gate needs n_qubits = 2")
            return leak_mixing_cnot()
        raise ConfigError(f"unknown interleaved gate {value!r}")
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError("interleaved gate matrix must be square with [re, im] entries")
    mat = arr[..., 0] + 1j * arr[..., 1]
    residual = float(np.abs(mat @ mat.conj().T - np.eye(mat.shape[0])).max())
    if residual > 1e-10:
        raise ConfigError(f"interleaved gate is not unitary (residual {residual:.3e})")
    try:
        if mat.shape[0] == 2**n_qubits:
            return embed_qutrit(mat)
        if mat.shape[0] == 3**n_qubits:
            return QutritUnitary.from_full(mat, n_qubits)
    except ValueError as exc:
        raise ConfigError(f"interleaved gate rejected: {exc}") from exc
    raise ConfigError(
        f"interleaved gate must be {2**n_qubits} or {3**n_qubits} dimensional"
    )


def build_rb_config(cfg: dict, with_interleave: bool = False) -> RbConfig:
    gate = None
    if with_interleave:
        if cfg["interleaved_gate"] is None:
            raise ConfigError("config must set interleaved_gate for an interleaved run")
        gate = parse_interleaved_gate(cfg["interleaved_gate"], cfg["n_qubits"])
    return RbConfig(
        n_qubits=cfg["n_qubits"],
        model=build_model(cfg),
        lengths=tuple(cfg["lengths"]),
        sequences_per_length=cfg["sequences_per_length"],
        master_seed=cfg["master_seed"],
        shots=cfg["shots"],
        initial_state=cfg["initial_state"],
        leakage_policy=cfg["leakage_policy"],
        entangler=cfg["entangler"],
        phase_seed=cfg["phase_seed"],
        include_inverter_error=cfg["include_inverter_error"],
        interleaved_gate=gate,
    )


def _ensure_group_cache(cfg: dict) -> None:
    """Verify a referenced group cache, building it when absent."""
    path = cfg.get("group_cache")
    if not path:
        return
    target = Path(path)
    if target.exists():
        group = CliffordGroup.load(target)
        if group.n_qubits != cfg["n_qubits"]:
            raise IntegrityError(
                f"group cache {path} holds a {group.n_qubits}-qubit group, "
                f"config wants {cfg['n_qubits']}"
            )
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
        CliffordGroup.generate(cfg["n_qubits"]).save(target)


def _write_manifest(
    path: Path,
    command: str,
    cfg_hash: str,
    master_seed: int | None,
    inputs: list[Path],
    outputs: list[Path],
    extra: dict | None = None,
) -> None:
    doc = {
        "command": command,
        "config_hash": cfg_hash,
        "tool_version": __version__,
        "master_seed": master_seed,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    doc.update(extra or {})
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_summary(path: Path, results: list[SequenceResult], cfg_hash: str) -> None:
    curve = summarize(results)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["y", "phi_mean", "phi_stderr", "variance", "n_sequences"])
        for y, mean, stderr, var, count in zip(
            curve.lengths, curve.means, curve.stderrs, curve.variances, curve.counts
        ):
            writer.writerow([int(y), repr(float(mean)), repr(float(stderr)), repr(float(var)), int(count)])


def _true_error(cfg: dict) -> float | None:
    """Exact per-gate infidelity of the configured gate channel, when defined."""
    if cfg["error_kind"] == "none":
        return 0.0
    gate = _channel_from(
        cfg["error_kind"], cfg["error_delta"], cfg["error_p"], cfg["error_seed"], cfg["n_qubits"]
    )
    return 1.0 - exact_average_fidelity_comp(gate, cfg["n_qubits"])


def cmd_gen_group(args: argparse.Namespace) -> int:
    n = args.n_qubits
    if n not in (1, 2):
        raise ConfigError(f"n_qubits must be 1 or 2, got {n}")
    group = CliffordGroup.generate(n)
    if len(group) != CLIFFORD_ORDER[n]:
        raise IntegrityError(
            f"generated {len(group)} elements, expected {CLIFFORD_ORDER[n]}"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = out_dir / f"clifford_group_{n}q.json"
    group.save(cache)
    print(len(group))
    _write_manifest(
        out_dir / "gen_group_manifest.json",
        "gen-group",
        hashlib.sha256(cache.read_bytes()).hexdigest(),
        None,
        [],
        [cache],
        {"cardinality": len(group)},
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed, args.shots)
    cfg_hash = config_hash(cfg)
    _ensure_group_cache(cfg)
    rb = build_rb_config(cfg)
    results = run_protocol(rb, threads=args.threads)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.csv"
    summary_path = out_dir / "summary.csv"
    write_results(results_path, results, config_hash=cfg_hash)
    _write_summary(summary_path, results, cfg_hash)
    _write_manifest(
        out_dir / "run_manifest.json",
        "run",
        cfg_hash,
        cfg["master_seed"],
        [Path(args.config)],
        [results_path, summary_path],
        {"n_sequences_total": len(results)},
    )
    print(f"wrote {results_path} ({len(results)} sequences)")
    return 0


def _load_result_files(paths: list[str], expected_hash: str) -> list[SequenceResult]:
    all_results: list[SequenceResult] = []
    hashes = set()
    for path in paths:
        results, file_hash = read_results(path)
        all_results.extend(results)
        hashes.add(file_hash)
    if len(hashes) > 1:
        raise IntegrityError(
            "mixed provenance: input files carry different config hashes"
        )
    file_hash = hashes.pop()
    if file_hash is not None and file_hash != expected_hash:
        raise IntegrityError(
            "results were produced under a different config "
            f"(file {file_hash[:12]}.., config {expected_hash[:12]}..)"
        )
    return all_results


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed, args.shots)
    cfg_hash = config_hash(cfg)
    results = _load_result_files(args.results, cfg_hash)
    samples = samples_from_results(results)
    max_order = min(cfg["max_order"], 3 ** cfg["n_qubits"])
    fit = fit_decay(samples, max_order)
    confidence = bootstrap_error_ci(
        results, fit, replicates=cfg["bootstrap_replicates"], seed=cfg["master_seed"]
    )
    report = fit_report(fit, cfg["n_qubits"], confidence=confidence)
    report["config_hash"] = cfg_hash
    report["unit_mode_present"] = fit.unit_mode_present
    report["diagnostics"] = list(fit.diagnostics)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "fit_report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    plot_path = out_dir / "plot_data.csv"
    fitted = fit.predict([s.y for s in samples])
    with open(plot_path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["y", "phi_mean", "phi_stderr", "phi_fit"])
        for sample, value in zip(samples, fitted):
            writer.writerow(
                [sample.y, repr(sample.phi_mean), repr(sample.phi_stderr), repr(float(value))]
            )

    extra = {"error_per_gate": report["error_per_gate"]}
    truth = _true_error(cfg)
    if truth is not None:
        extra["true_error_per_gate"] = truth
        if truth > 0.0:
            extra["relative_deviation"] = report["error_per_gate"] / truth - 1.0
    _write_manifest(
        out_dir / "fit_manifest.json",
        "fit",
        cfg_hash,
        cfg["master_seed"],
        [Path(p) for p in args.results],
        [report_path, plot_path],
        extra,
    )
    print(
        f"error_per_gate {report['error_per_gate']:.6e} "
        f"(95% ci [{confidence[0]:.3e}, {confidence[1]:.3e}])"
    )
    return 0


def cmd_irb(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed, args.shots)
    cfg_hash = config_hash(cfg)
    _ensure_group_cache(cfg)
    rb = build_rb_config(cfg, with_interleave=True)
    reference, interleaved = run_irb(rb, threads=args.threads)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for tag, results in (("reference", reference), ("interleaved", interleaved)):
        results_path = out_dir / f"{tag}_results.csv"
        write_results(results_path, results, config_hash=cfg_hash)
        _write_summary(out_dir / f"{tag}_summary.csv", results, cfg_hash)
        outputs += [results_path, out_dir / f"{tag}_summary.csv"]

    max_order = min(cfg["max_order"], 3 ** cfg["n_qubits"])
    ref_fit = fit_decay(samples_from_results(reference), max_order)
    int_fit = fit_decay(samples_from_results(interleaved), max_order)
    estimate = irb_estimate(ref_fit, int_fit)
    doc = {
        "config_hash": cfg_hash,
        "eps_ref": estimate.eps_ref,
        "eps_combined": estimate.eps_combined,
        "eps_v_point": estimate.eps_v_point,
        "eps_v_lower": estimate.eps_v_lower,
        "eps_v_upper": estimate.eps_v_upper,
        "diagnostics": list(estimate.diagnostics),
    }
    estimate_path = out_dir / "irb_estimate.json"
    estimate_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    outputs.append(estimate_path)

    extra = {"eps_v_point": estimate.eps_v_point}
    if cfg["interleaved_error_kind"] != "none":
        channel = _channel_from(
            cfg["interleaved_error_kind"],
            cfg["interleaved_error_delta"],
            cfg["interleaved_error_p"],
            cfg["interleaved_error_seed"],
            cfg["n_qubits"],
        )
        extra["true_interleaved_error"] = 1.0 - exact_average_fidelity_comp(
            channel, cfg["n_qubits"]
        )
    _write_manifest(
        out_dir / "irb_manifest.json",
        "irb",
        cfg_hash,
        cfg["master_seed"],
        [Path(args.config)],
        outputs,
        extra,
    )
    print(
        f"eps_v {estimate.eps_v_point:.6e} in "
        f"[{estimate.eps_v_lower:.6e}, {estimate.eps_v_upper:.6e}]"
    )
    return 0


def cmd_variance(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed, args.shots)
    cfg_hash = config_hash(cfg)
    _ensure_group_cache(cfg)
    rb = build_rb_config(cfg)
    results = run_protocol(rb, threads=args.threads)
    curve = summarize(results)
    shape = fit_variance_shape(curve)

    predictions = None
    if cfg["n_qubits"] == 1 and rb.model.gate is not None:
        ext_set = rb.build_set()
        predictions = [
            analytic_variance(
                rb.model.gate,
                ext_set,
                int(y),
                initial_state=cfg["initial_state"],
                include_inverter_error=cfg["include_inverter_error"],
            )
            for y in curve.lengths
        ]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_path = out_dir / "variance.csv"
    with open(curve_path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["y", "phi_mean", "variance", "n_sequences", "analytic_variance"]
        )
        for i, y in enumerate(curve.lengths):
            writer.writerow(
                [
                    int(y),
                    repr(float(curve.means[i])),
                    repr(float(curve.variances[i])),
                    int(curve.counts[i]),
                    repr(float(predictions[i])) if predictions is not None else "",
                ]
            )
    shape_path = out_dir / "variance_fit.json"
    shape_path.write_text(
        json.dumps(
            {
                "config_hash": cfg_hash,
                "c": shape.c,
                "kappa": shape.kappa,
                "r_squared": shape.r_squared,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    _write_manifest(
        out_dir / "variance_manifest.json",
        "variance",
        cfg_hash,
        cfg["master_seed"],
        [Path(args.config)],
        [curve_path, shape_path],
        {"r_squared": shape.r_squared},
    )
    print(f"c {shape.c:.6e} kappa {shape.kappa:.6e} r_squared {shape.r_squared:.4f}")
    return 0


def _add_common(sub: argparse.ArgumentParser, needs_config: bool) -> None:
    sub.add_argument("--config", required=needs_config, help="path to the JSON config")
    sub.add_argument("--out", default=".", help="output directory (default: cwd)")
    sub.add_argument("--seed", type=int, default=None, help="override master_seed")
    sub.add_argument("--threads", type=int, default=1, help="worker thread cap")
    sub.add_argument("--shots", type=int, default=None, help="override shots per sequence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakrb",
        description="Randomized benchmarking on leaky qubits: run, fit, export.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-group", help="enumerate and cache a Clifford group")
    gen.add_argument("--n-qubits", type=int, required=True)
    _add_common(gen, needs_config=False)
    gen.set_defaults(func=cmd_gen_group)

    run = sub.add_parser("run", help="run the benchmarking protocol")
    _add_common(run, needs_config=True)
    run.set_defaults(func=cmd_run)

    fit = sub.add_parser("fit", help="fit decay curves from results CSVs")
    fit.add_argument("results", nargs="+", help="sequence-level results CSVs")
    _add_common(fit, needs_config=True)
    fit.set_defaults(func=cmd_fit)

    irb = sub.add_parser("irb", help="reference + interleaved runs and estimate")
    _add_common(irb, needs_config=True)
    irb.set_defaults(func=cmd_irb)

    var = sub.add_parser("variance", help="variance curve and shape fit")
    _add_common(var, needs_config=True)
    var.set_defaults(func=cmd_variance)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in 64 bits", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    if args.shots is not None and args.shots < 1:
        print("error: --shots must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except IntegrityError as exc:
        print(f"integrity failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
