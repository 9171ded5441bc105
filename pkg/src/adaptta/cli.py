"""Command-line interface: run, sweep, compare, gen-trace.

Exit codes are fixed so scripted sweeps can tell failure classes apart:
1 for usage problems (bad flags or values), 2 for input-data problems
(missing or malformed files, trace coverage), 3 for anything unexpected.

Flags may be preloaded from a TOML file via ``--config``; explicit flags
always win over file values.
"""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .backend import (
    LatencyModel,
    ToyClassifier,
    TraceError,
    TraceRecord,
    load_trace,
    write_trace,
)
from .engine import AdapttaConfig, InferenceError, Mode
from .harness import (
    DatasetManifest,
    compare_modes,
    evaluate,
    reports_to_json,
    sweep_tau,
    write_reports_csv,
)
from .imaging import PpmError, decode_ppm, make_policy, policy_views

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_MODE_ALIASES = {"seq": Mode.SEQUENTIAL, "batch": Mode.BATCH, "adaptive": Mode.ADAPTIVE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the CLI contract reserves
    # 2 for data errors, so route parse failures through UsageError instead.
    def error(self, message):
        raise UsageError(message)


def _parse_latency(text: str) -> LatencyModel | None:
    """Parse ``wall`` | ``sim`` | ``sim:key=value,...``.

    Keys: per-inference, per-crop, per-flip (milliseconds) and batch=N:MS
    (repeatable) for explicit batch-curve points.
    """
    if text == "wall":
        return None
    if text == "sim":
        return LatencyModel()
    if not text.startswith("sim:"):
        raise UsageError(f"invalid latency spec {text!r} (expected 'wall', 'sim', or 'sim:...')")
    kwargs: dict = {}
    curve: dict[int, float] = {}
    for item in text[4:].split(","):
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"invalid latency option {item!r} (expected key=value)")
        try:
            if key == "per-inference":
                kwargs["per_inference_ms"] = float(value)
            elif key == "per-crop":
                kwargs["per_crop_ms"] = float(value)
            elif key == "per-flip":
                kwargs["per_flip_ms"] = float(value)
            elif key == "batch":
                size_str, sep2, ms_str = value.partition(":")
                if not sep2:
                    raise UsageError(f"invalid batch point {value!r} (expected SIZE:MS)")
                curve[int(size_str)] = float(ms_str)
            else:
                raise UsageError(f"unknown latency option {key!r}")
        except ValueError:
            raise UsageError(f"invalid number in latency option {item!r}") from None
    if curve:
        kwargs["batch_curve"] = curve
    try:
        return LatencyModel(**kwargs)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _parse_taus(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [s for s in str(value).split(",") if s.strip()]
    try:
        taus = [float(t) for t in items]
    except (TypeError, ValueError):
        raise UsageError(f"invalid tau list {value!r}") from None
    if not taus:
        raise UsageError("tau list is empty")
    return taus


def _check_tau(tau: float) -> float:
    if not 0.0 <= tau <= 1.0:
        raise UsageError(f"--tau must be in [0, 1], got {tau}")
    return tau


def _load_backend_and_manifest(args):
    """Resolve the backend spec and evaluation manifest from flags."""
    if args.trace is not None and args.toy_seed is not None:
        raise UsageError("--trace and --toy-seed are mutually exclusive")

    if args.trace is not None:
        backend = load_trace(args.trace)
        policy_name = args.policy or backend.policy_name
        policy = make_policy(policy_name)
        if args.manifest is not None:
            manifest = DatasetManifest.load_tsv(args.manifest, backend.num_classes)
        else:
            manifest = DatasetManifest.from_trace(backend)
        return backend, manifest, policy

    if args.toy_seed is None:
        raise UsageError("a backend is required: pass --trace PATH or --toy-seed INT")
    if args.classes is None:
        raise UsageError("--toy-seed requires --classes")
    if args.classes < 2:
        raise UsageError(f"--classes must be at least 2, got {args.classes}")
    if args.manifest is None:
        raise UsageError("--toy-seed requires --manifest with image paths")
    policy = make_policy(args.policy or "10C")
    backend = ToyClassifier(seed=args.toy_seed, num_classes=args.classes, view_side=policy.view_side)
    manifest = DatasetManifest.load_tsv(args.manifest, args.classes)
    return backend, manifest, policy


def _emit(args, reports, payload) -> None:
    """Write the JSON payload or CSV rows to --out or stdout."""
    if args.format == "csv":
        buf = io.StringIO()
        write_reports_csv(reports, buf)
        text = buf.getvalue()
    else:
        text = reports_to_json(payload) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    backend, manifest, policy = _load_backend_and_manifest(args)
    cfg = AdapttaConfig(policy=policy, tau=_check_tau(args.tau), mode=_MODE_ALIASES[args.mode])
    report = evaluate(backend, manifest, cfg, latency=_parse_latency(args.latency))
    _emit(args, [report], report)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.taus is None:
        raise UsageError("sweep requires --taus")
    backend, manifest, policy = _load_backend_and_manifest(args)
    taus = [_check_tau(t) for t in _parse_taus(args.taus)]
    cfg = AdapttaConfig(policy=policy, tau=taus[0], mode=Mode.ADAPTIVE)
    reports = sweep_tau(backend, manifest, cfg, taus, latency=_parse_latency(args.latency))
    _emit(args, reports, reports)
    return EXIT_OK


def cmd_compare(args) -> int:
    backend, manifest, policy = _load_backend_and_manifest(args)
    comparison = compare_modes(
        backend, manifest, policy, _check_tau(args.tau), latency=_parse_latency(args.latency)
    )
    _emit(args, comparison.reports(), comparison)
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    if args.manifest is None:
        raise UsageError("gen-trace requires --manifest with image paths")
    if args.classes is None or args.classes < 2:
        raise UsageError("gen-trace requires --classes of at least 2")
    policy = make_policy(args.policy or "10C")
    backend = ToyClassifier(seed=args.toy_seed, num_classes=args.classes, view_side=policy.view_side)
    manifest = DatasetManifest.load_tsv(args.manifest, args.classes)
    if not manifest.entries:
        raise TraceError(f"manifest {args.manifest} lists no samples")

    def records():
        for entry in manifest.entries:
            if entry.source is None:
                raise TraceError(f"sample {entry.sample_id!r}: gen-trace needs an image path")
            img = decode_ppm(Path(entry.source).read_bytes())
            for k, view in enumerate(policy_views(img, policy)):
                yield TraceRecord(
                    sample_id=entry.sample_id,
                    view_index=k,
                    probs=backend.predict(view),
                    true_label=entry.label,
                )

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            write_trace(f, args.classes, policy.name, policy.num_views, records())
    else:
        write_trace(sys.stdout, args.classes, policy.name, policy.num_views, records())
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, with_mode: bool = True, with_tau: bool = True) -> None:
    p.add_argument("--trace", metavar="PATH", help="replay backend: JSONL trace file")
    p.add_argument("--toy-seed", type=int, metavar="INT", help="toy backend: RNG seed")
    p.add_argument("--classes", type=int, metavar="INT", help="toy backend: number of classes")
    p.add_argument("--manifest", metavar="PATH", help="TSV manifest: sample_id<TAB>path<TAB>label")
    p.add_argument("--policy", choices=["5C", "10C"], help="crop policy (default: trace's, else 10C)")
    if with_tau:
        p.add_argument("--tau", type=float, default=0.8, help="confidence threshold in [0,1]")
    if with_mode:
        p.add_argument("--mode", choices=sorted(_MODE_ALIASES), default="adaptive")
    p.add_argument("--latency", default="sim", metavar="SPEC",
                   help="'wall', 'sim', or 'sim:per-inference=53.1,batch=5:290.6,...'")
    p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--config", metavar="PATH", help="TOML file with flag defaults")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="adaptta", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    commands: dict[str, argparse.ArgumentParser] = {}

    p_run = sub.add_parser("run", help="evaluate one executor and emit a report")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)
    commands["run"] = p_run

    p_sweep = sub.add_parser("sweep", help="evaluate the adaptive executor over several thresholds")
    _add_common(p_sweep, with_mode=False, with_tau=False)
    p_sweep.add_argument("--taus", required=False, metavar="LIST", help="comma-separated thresholds")
    p_sweep.set_defaults(func=cmd_sweep)
    commands["sweep"] = p_sweep

    p_compare = sub.add_parser("compare", help="run batch, sequential, and adaptive side by side")
    _add_common(p_compare, with_mode=False)
    p_compare.set_defaults(func=cmd_compare)
    commands["compare"] = p_compare

    p_gen = sub.add_parser("gen-trace", help="record a trace by running the toy backend over images")
    p_gen.add_argument("--manifest", metavar="PATH", help="TSV manifest of PPM images with labels")
    p_gen.add_argument("--toy-seed", type=int, default=42, metavar="INT")
    p_gen.add_argument("--classes", type=int, metavar="INT")
    p_gen.add_argument("--policy", choices=["5C", "10C"])
    p_gen.add_argument("--out", metavar="PATH", help="trace output path (default: stdout)")
    p_gen.add_argument("--config", metavar="PATH", help="TOML file with flag defaults")
    p_gen.set_defaults(func=cmd_gen_trace)
    commands["gen-trace"] = p_gen

    return parser, commands


def _apply_config_file(argv: list[str], commands: dict[str, argparse.ArgumentParser]) -> None:
    """Preload subparser defaults from the TOML file named by --config."""
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if config_path is None:
        return
    command = next((t for t in argv if not t.startswith("-")), None)
    if command not in commands:
        return
    try:
        with open(config_path, "rb") as f:
            values = tomllib.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {config_path}") from None
    except tomllib.TOMLDecodeError as e:
        raise UsageError(f"invalid config file {config_path}: {e}") from None
    if not isinstance(values, dict):
        raise UsageError(f"config file {config_path} must be a TOML table")
    commands[command].set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        _apply_config_file(argv, commands)
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as e:
        print(f"adaptta: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PpmError, TraceError, InferenceError, KeyError, ValueError) as e:
        print(f"adaptta: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover - defensive
        print(f"adaptta: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
