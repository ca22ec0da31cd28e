"""Command-line entry point: ``grfasr <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import autodiff as ad
from . import corpus, dsp, pipeline
from .config import ConfigError, ExperimentConfig, dump_config_text, load_config
from .fusion import MODES

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("grfasr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="flat key=value file; dotted keys address nested fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--snr-fuse-db", type=float, dest="snr_fuse_db")
    p.add_argument("--out", help="output directory (or file, for decode)")
    p.add_argument("--data", help="corpus directory (overrides paths.data_dir)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="grfasr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-corpus", help="write the synthetic tone-word corpus and noise WAVs")
    _common(p)

    p = sub.add_parser("mix", help="mix clean entries with noise into SNR-conditioned sets")
    _common(p)
    p.add_argument("--noise-dir", help="directory of noise WAVs (default: generated noise)")

    for name, help_ in (("pretrain-enh", "pretrain the enhancement network"),
                        ("pretrain-asr", "pretrain fusion + recogniser on clean data"),
                        ("train-joint", "joint training from the two pretrained checkpoints")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "train-joint":
            p.add_argument("--from-scratch", action="store_true",
                           help="allow joint training without init checkpoints")

    p = sub.add_parser("decode", help="transcribe manifest entries")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--ids", nargs="*", help="utterance ids (default: the whole split)")

    p = sub.add_parser("evaluate", help="CER table over the SNR grid")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("compare-modes", help="train and evaluate several fusion modes over seeds")
    _common(p)
    p.add_argument("--modes", nargs="+", choices=MODES, default=["grf", "concat", "enhanced_only"])
    p.add_argument("--seeds", nargs="+", type=int)

    p = sub.add_parser("dump-spec", help="write noisy / enhanced / clean log-magnitude images")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--id", required=True, dest="utt_id")
    return parser


def resolve_config(args):
    cfg = ExperimentConfig()
    if args.config:
        if not Path(args.config).exists():
            raise FileNotFoundError(f"config file {args.config} not found")
        cfg = load_config(args.config, cfg)
    if args.set:
        from .config import parse_config_text
        cfg = parse_config_text("\n".join(args.set), cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode is not None:
        cfg.mode = args.mode
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.beam is not None:
        cfg.beam = args.beam
    if args.snr_fuse_db is not None:
        cfg.snr_fuse_db = args.snr_fuse_db
    if args.data is not None:
        cfg.paths.data_dir = args.data
    if args.out is not None and args.command not in ("decode",):
        cfg.paths.out_dir = args.out
    return cfg.validate()


def _cmd_gen_corpus(cfg, args):
    root = Path(cfg.paths.data_dir)
    spec = dataclasses.replace(cfg.corpus)
    entries = corpus.generate_synthetic_corpus(spec, root)
    corpus.generate_noise_corpus(root / cfg.paths.noise_dir, seed=spec.seed,
                                 duration_s=cfg.mix.noise_seconds, sample_rate=spec.sample_rate)
    (root / "config.txt").write_text(dump_config_text(cfg))
    print(f"wrote {len(entries)} utterances to {root}")


def _cmd_mix(cfg, args):
    root = Path(cfg.paths.data_dir)
    manifest_path = root / cfg.paths.manifest
    clean = [e for e in corpus.read_manifest(manifest_path) if not e.is_noisy]
    noise_dir = args.noise_dir or root / cfg.paths.noise_dir
    mixed = corpus.build_noisy_sets(clean, noise_dir, (cfg.mix.train_snr_low, cfg.mix.train_snr_high),
                                    cfg.mix.eval_snrs, seed=cfg.seed, data_root=root)
    corpus.write_manifest(mixed, manifest_path)
    print(f"wrote {sum(e.is_noisy for e in mixed)} mixtures; manifest has {len(mixed)} entries")


def _train(cfg, phases, from_scratch=False):
    res = pipeline.train(cfg, phases=phases, out_dir=cfg.paths.out_dir, from_scratch=from_scratch)
    for phase, r in res.items():
        print(f"{phase}: {r.steps} steps, final loss {r.final_loss:.6f}, checkpoint {r.checkpoint}")


def _load(cfg, checkpoint):
    data = pipeline.Dataset.open(cfg)
    if not Path(checkpoint).exists():
        raise FileNotFoundError(f"checkpoint {checkpoint} not found")
    return data, pipeline.load_model(cfg, data, checkpoint)


def _cmd_decode(cfg, args):
    data, model = _load(cfg, args.checkpoint)
    ids = args.ids or [e.id for e in data.entries(args.split)]
    lines = []
    for uid in ids:
        utt = data.utterance(data.by_id(uid))
        if cfg.snr_fuse_db is not None and model.enh is not None:
            utt = pipeline.snr_fused_utterance(model, utt, data, cfg.snr_fuse_db)
        hyp = model.transcribe(utt, beam=cfg.beam, length_norm=cfg.length_norm, vocab=data.vocab)
        lines.append(json.dumps({"id": uid, "hyp": hyp, "ref": utt.transcript}))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_evaluate(cfg, args):
    data, model = _load(cfg, args.checkpoint)
    table = pipeline.evaluate(model, data, cfg, split=args.split, snr_fuse_db=cfg.snr_fuse_db)
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(table.to_csv())
    (out / "results.txt").write_text(table.to_text())
    sys.stdout.write(table.to_text())


def _cmd_compare(cfg, args):
    seeds = args.seeds if args.seeds else list(cfg.seeds)
    report = pipeline.compare_modes(cfg, args.modes, seeds, out_dir=cfg.paths.out_dir)
    sys.stdout.write(report.to_text())


def _cmd_dump(cfg, args):
    data, model = _load(cfg, args.checkpoint)
    paths = pipeline.dump_spectrograms(model, data, args.utt_id, cfg.paths.out_dir)
    for name, (npy, pgm) in paths.items():
        print(f"{name}: {npy} {pgm}")


COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "mix": _cmd_mix,
    "pretrain-enh": lambda cfg, args: _train(cfg, ("enh",)),
    "pretrain-asr": lambda cfg, args: _train(cfg, ("asr",)),
    "train-joint": lambda cfg, args: _train(cfg, ("joint",), args.from_scratch),
    "decode": _cmd_decode,
    "evaluate": _cmd_evaluate,
    "compare-modes": _cmd_compare,
    "dump-spec": _cmd_dump,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, pipeline.PhaseOrderError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pipeline.DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (dsp.DataError, ad.CheckpointError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
