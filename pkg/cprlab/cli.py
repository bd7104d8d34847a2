"""
Command-line driver: generate → corrupt → train → denoise → evaluate → compare.

Every command writes into ``--out`` through atomic renames and records a
``manifest.json`` listing its effective configuration, seeds, inputs and
outputs. Errors print ``❌ <message>`` to stderr and exit with the code of
the raised CprLabError.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .analytics import DenoisingAnalytics
from .babbs_simulator import BabbsParams, CprProtocol, PatientProfile, patient_sweep, synthesize_sweep
from .baselines import NlmsConfig, VanillaAeConfig, nlms_session, vanilla_ae_denoise, vanilla_ae_fit
from .corruption import CorruptionConfig, corrupt_session
from .dataset import CHANNELS, Dataset, dumps_json, ensure_writable_dir, write_atomic
from .denoiser import build_model, denoise_session, load_model, save_model
from .errors import EXIT_CODES, CprLabError, InvalidInputError
from .manifest import TOOL_VERSION, RunManifest
from .metrics import evaluate
from .settings import apply_thread_cap, load_config_file, resolve_section, thread_cap
from .trainer import DenoiserTrainer, TrainConfig
from .visualization import DenoisingDashboard

METHODS = ("proposed", "nlms", "vanilla")
CHECKPOINT_NAME = "denoiser.ckpt"
LOSS_CURVE_NAME = "loss_curve.csv"


def _say(args, message):
    if not args.quiet:
        print(message)


def _methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise argparse.ArgumentTypeError(f"methods must be a comma list drawn from {','.join(METHODS)}")
    return tuple(dict.fromkeys(methods))


def _target(out_dir, name, inputs):
    """Output path inside out_dir that never points at one of the inputs"""
    path = Path(out_dir) / name
    taken = {Path(p).resolve() for p in inputs}
    if path.resolve() in taken:
        raise InvalidInputError(f"output {path} would overwrite an input file")
    return path


def _read_all(paths):
    return Dataset.read_sessions(paths)


def cmd_generate(args):
    out = ensure_writable_dir(args.out)
    file_cfg = load_config_file(args.config)
    protocol = resolve_section(CprProtocol, file_cfg, "protocol")
    params = resolve_section(BabbsParams, file_cfg, "babbs")

    sweep = patient_sweep()
    if args.sweep:
        profiles = sweep
    elif args.default:
        profiles = [PatientProfile(patient_id=f"default-{i:03d}") for i in range(args.patients)]
    else:
        if not 1 <= args.patients <= len(sweep):
            raise InvalidInputError(f"--patients must lie in [1, {len(sweep)}], got {args.patients}")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
        profiles = [sweep[i] for i in sorted(rng.choice(len(sweep), size=args.patients, replace=False))]
    if not profiles:
        raise InvalidInputError("--patients must be at least 1")

    _say(args, f"🚀 Generating {len(profiles)} clean sessions")
    sessions = synthesize_sweep(profiles, protocol, params, workers=thread_cap())

    manifest = RunManifest(
        "generate",
        config={"protocol": protocol.to_dict(), "babbs": params.to_dict(),
                "mode": "sweep" if args.sweep else "default" if args.default else "sample",
                "patients": [p.to_dict() for p in profiles]},
        seeds={"seed": args.seed},
    )
    for session in sessions:
        manifest.add_outputs(Dataset.write_session(session, out / f"{session.patient_id}.csv"))
    manifest.write(out)
    _say(args, f"✅ Wrote {len(sessions)} sessions to {out}")
    return 0


def cmd_corrupt(args):
    out = ensure_writable_dir(args.out)
    file_cfg = load_config_file(args.config)
    cfg = resolve_section(CorruptionConfig, file_cfg, "corruption", {"seed": args.seed})
    sessions = _read_all(args.inputs)
    targets = [_target(out, Path(p).name, args.inputs) for p in args.inputs]

    _say(args, f"🔧 Corrupting {len(sessions)} sessions (base seed {cfg.seed})")
    manifest = RunManifest("corrupt", config={"corruption": cfg.to_dict()}, seeds={"seed": cfg.seed, "files": {}})
    manifest.add_inputs(args.inputs)
    for i, (session, target) in enumerate(zip(sessions, targets)):
        file_cfg_i = CorruptionConfig.from_dict({**cfg.to_dict(), "seed": (cfg.seed + i) % 2**64})
        noisy = corrupt_session(session, file_cfg_i)
        manifest.seeds["files"][target.name] = file_cfg_i.seed
        manifest.add_outputs(Dataset.write_session(noisy, target))
        _say(args, f"   {session.patient_id}: {int(np.isnan(noisy.to_array()).sum())} samples dropped")
    manifest.write(out)
    _say(args, f"✅ Wrote {len(sessions)} noisy sessions to {out}")
    return 0


def _train_config(args, file_cfg):
    return resolve_section(TrainConfig, file_cfg, "train", {"seed": args.seed, "max_epochs": args.epochs})


def _train(args, cfg, sessions):
    model = build_model(seed=cfg.seed, window=cfg.window)
    _say(args, f"🧠 Training denoiser ({model.parameter_count():,} parameters)")
    return DenoiserTrainer(cfg, verbose=not args.quiet).train(model, sessions)


def cmd_train(args):
    out = ensure_writable_dir(args.out)
    cfg = _train_config(args, load_config_file(args.config))
    sessions = _read_all(args.inputs)

    model, history = _train(args, cfg, sessions)
    manifest = RunManifest("train", config={"train": cfg.to_dict()}, seeds={"seed": cfg.seed},
                           extra={"history": history.to_dict()})
    manifest.add_inputs(args.inputs)
    manifest.add_outputs([
        save_model(model, _target(out, CHECKPOINT_NAME, args.inputs)),
        write_atomic(_target(out, LOSS_CURVE_NAME, args.inputs), history.to_csv()),
    ])
    manifest.write(out)
    _say(args, f"✅ Best epoch {history.best_epoch}, checkpoint written to {out / CHECKPOINT_NAME}")
    return 0


def cmd_denoise(args):
    out = ensure_writable_dir(args.out)
    model = load_model(args.model)
    sessions = _read_all(args.inputs)
    targets = [_target(out, Path(p).name, args.inputs) for p in args.inputs]

    manifest = RunManifest("denoise", config={"model": str(args.model), "window": model.window,
                                              "stride": model.stride}, seeds={"seed": model.seed})
    manifest.add_inputs([*args.inputs, args.model])
    for session, target in zip(sessions, targets):
        manifest.add_outputs(Dataset.write_session(denoise_session(model, session), target))
        _say(args, f"   {session.patient_id} denoised")
    manifest.write(out)
    _say(args, f"✅ Wrote {len(sessions)} denoised sessions to {out}")
    return 0


def cmd_evaluate(args):
    report_path = Path(args.report) if args.report else Path(args.out) / "report.json"
    out = ensure_writable_dir(report_path.parent)
    clean, noisy, denoised = _read_all([args.clean, args.noisy, args.denoised])
    method = args.method or denoised.metadata.get("method", "proposed")

    report = evaluate(method, clean, noisy, denoised, denoised.metadata.get("preprocessing_digest", ""))
    manifest = RunManifest("evaluate", config={"method": method}, seeds={})
    manifest.add_inputs([args.clean, args.noisy, args.denoised])
    manifest.add_outputs([write_atomic(_target(out, report_path.name, manifest.input_paths),
                                       dumps_json(report.to_dict()))])
    manifest.write(out)
    _say(args, f"📊 {method}: aggregate SNR {report.aggregate_snr_db:.2f} dB, "
               f"PSNR {report.aggregate_psnr_db:.2f} dB")
    return 0


def cmd_compare(args):
    out = ensure_writable_dir(args.out)
    file_cfg = load_config_file(args.config)
    train_cfg = _train_config(args, file_cfg)
    nlms_cfg = resolve_section(NlmsConfig, file_cfg, "nlms")
    vanilla_cfg = resolve_section(VanillaAeConfig, file_cfg, "vanilla", {"seed": args.seed})

    needs_training = args.model is None or "vanilla" in args.methods
    if needs_training and not args.train:
        raise InvalidInputError("compare needs --train sessions unless --model is given and vanilla is skipped")
    clean, noisy = _read_all([args.clean, args.noisy])
    train_sessions = _read_all(args.train or [])
    inputs = [args.clean, args.noisy, *(args.train or [])] + ([args.model] if args.model else [])

    manifest = RunManifest(
        "compare",
        config={"methods": list(args.methods), "train": train_cfg.to_dict(), "nlms": nlms_cfg.to_dict(),
                "vanilla": vanilla_cfg.to_dict()},
        seeds={"train": train_cfg.seed, "vanilla": vanilla_cfg.seed},
    )
    manifest.add_inputs(inputs)

    history = None
    if args.model:
        model = load_model(args.model)
    else:
        model, history = _train(args, train_cfg, train_sessions)
        manifest.add_outputs([
            save_model(model, _target(out, CHECKPOINT_NAME, inputs)),
            write_atomic(_target(out, LOSS_CURVE_NAME, inputs), history.to_csv()),
        ])
        manifest.extra["history"] = history.to_dict()
    stats = model.norm_stats
    if stats is None:
        raise InvalidInputError(f"checkpoint {args.model} carries no normalization stats")

    estimates = {}
    for method in args.methods:
        _say(args, f"🔧 Running {method}")
        if method == "proposed":
            estimates[method] = denoise_session(model, noisy)
        elif method == "nlms":
            estimates[method] = nlms_session(noisy, stats, nlms_cfg)
        else:
            vanilla = vanilla_ae_fit(train_sessions, vanilla_cfg, stats, verbose=not args.quiet)
            estimates[method] = vanilla_ae_denoise(vanilla, noisy)

    digests = {m: s.metadata["preprocessing_digest"] for m, s in estimates.items()}
    if len(set(digests.values())) != 1:
        raise CprLabError(f"methods saw different preprocessed inputs: {digests}")

    reports = [evaluate(m, clean, noisy, s, digests[m]) for m, s in estimates.items()]
    stem = Path(args.noisy).stem
    for method, session in estimates.items():
        manifest.add_outputs(Dataset.write_session(session, _target(out, f"{stem}_{method}.csv", inputs)))

    analytics = DenoisingAnalytics(reports)
    combined = {
        "clean": str(args.clean),
        "noisy": str(args.noisy),
        "preprocessing_digest": next(iter(digests.values())),
        "preprocessing_digests": digests,
        "methods": [r.to_dict() for r in reports],
        "insights": analytics.generate_insights(),
    }
    if args.report:
        report_path = _target(ensure_writable_dir(Path(args.report).parent), Path(args.report).name, inputs)
    else:
        report_path = _target(out, "compare_report.json", inputs)
    manifest.add_outputs([write_atomic(report_path, dumps_json(combined))])
    analytics.export_scores_csv(_target(out, "scores.csv", inputs))
    analytics.export_correlations_csv(_target(out, "correlations.csv", inputs))
    manifest.add_outputs([out / "scores.csv", out / "correlations.csv"])

    if args.plots:
        manifest.add_outputs(_write_plots(out / "plots", reports, clean, noisy, estimates, history))

    manifest.write(out)
    if not args.quiet:
        analytics.print_analysis_summary()
    return 0


def _write_plots(plot_dir, reports, clean, noisy, estimates, history):
    dashboard = DenoisingDashboard()
    written = [dashboard.save(dashboard.create_method_comparison(reports), plot_dir / "method_comparison.html")]
    for report in reports:
        written.append(dashboard.save(dashboard.create_correlation_heatmaps(report),
                                      plot_dir / f"correlations_{report.method}.html"))
    for method, session in estimates.items():
        for channel in CHANNELS:
            fig = dashboard.create_signal_overlay(clean, noisy, session, channel, seconds=10)
            written.append(dashboard.save(fig, plot_dir / f"overlay_{method}_{channel}.html"))
    if history is not None:
        written.append(dashboard.save(dashboard.create_loss_curve(history), plot_dir / "loss_curve.html"))
    return written


def build_parser():
    parser = argparse.ArgumentParser(prog="cprlab", description="Synthetic CPR signal generation and denoising")
    parser.add_argument("--version", action="version", version=f"cprlab {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config file with protocol/babbs/corruption/train/... sections")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.set_defaults(handler=handler)
        return p

    p = command("generate", cmd_generate, "synthesize clean sessions from the Babbs model")
    p.add_argument("--patients", type=int, default=3)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--sweep", action="store_true", help="emit all 150 sweep profiles")
    mode.add_argument("--default", action="store_true", help="use the default patient profile for every session")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = command("corrupt", cmd_corrupt, "inject artifacts into clean sessions")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = command("train", cmd_train, "train the denoiser on noisy sessions")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None, help="maximum epochs")
    p.add_argument("--out", required=True)

    p = command("denoise", cmd_denoise, "apply a trained checkpoint")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = command("evaluate", cmd_evaluate, "score a denoised session against its clean reference")
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--denoised", required=True)
    p.add_argument("--method", default=None)
    p.add_argument("--report", default=None, help="report path (default OUT/report.json)")
    p.add_argument("--out", default=".")

    p = command("compare", cmd_compare, "run every method on the same session and compare them")
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--train", nargs="+", default=None, help="noisy training sessions")
    p.add_argument("--model", default=None, help="trained checkpoint; trains one when omitted")
    p.add_argument("--methods", type=_methods, default=METHODS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--plots", action="store_true", help="write plotly HTML figures")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    try:
        apply_thread_cap()
        return args.handler(args)
    except CprLabError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        print(f"❌ unexpected error: {e!r}", file=sys.stderr)
        return EXIT_CODES["unexpected"]
