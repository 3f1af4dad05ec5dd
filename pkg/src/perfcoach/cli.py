"""Command line front door: dsp, compile, train, eval, serve.

Each subcommand is a thin wrapper over the library so anything the CLI
can do is also scriptable. main() returns a process exit code; domain
errors print one line to stderr and exit nonzero instead of tracing.
"""
import argparse
import json
import sys
from pathlib import Path

from . import dsp
from .compiler import compile_manifests, read_corpus, validate_corpus, write_corpus
from .errors import PerfCoachError, InvalidConfig, InvalidInput
from .evaluation import (
    BASELINE_ATTEMPTS,
    DEFAULT_ITERATIONS,
    DirectoryClipLoader,
    LocalModelAdapter,
    MockAdapter,
    run_objective_suite,
)
from .model import CoachModel, desk_config
from .service import CannedBackend, CoachModelBackend, ServiceConfig, create_app
from .store import SessionStore, default_data_dir
from .tokenizers import BpeTokenizer, WordTokenizer
from .training import StageConfig, load_model, train_stage

_FREE_TEXT_TASKS = ("assessment_open", "attribute", "contextual")


# -- dsp ---------------------------------------------------------------------------

def cmd_dsp(args) -> int:
    clip = dsp.load_clip(args.audio)
    clip = dsp.resample(clip, dsp.TARGET_RATE)
    fbank = dsp.compute_filterbank(clip)
    if args.target_frames is not None:
        fbank, valid = dsp.fix_length(fbank, args.target_frames)
        valid_frames = int(valid.sum())
    else:
        valid_frames = fbank.shape[0]
    dsp.write_matrix(args.out, fbank)
    print(
        f"wrote {args.out}: {fbank.shape[0]} frames x {fbank.shape[1]} mels "
        f"({valid_frames} from audio, {clip.duration_s:.2f} s)"
    )
    return 0


# -- compile -----------------------------------------------------------------------

def cmd_compile(args) -> int:
    manifests = []
    for path in args.manifest:
        with open(path) as fh:
            manifests.append(json.load(fh))
    examples = compile_manifests(manifests, seed=args.seed)
    report = validate_corpus(examples)
    problems = list(report["violations"])
    problems.extend(f"duplicate pair: {dup}" for dup in report["duplicates"])
    if problems:
        for line in problems:
            print(f"invalid: {line}", file=sys.stderr)
        print(f"{len(problems)} problems; corpus not written", file=sys.stderr)
        return 2
    write_corpus(args.out, examples)
    by_task = " ".join(f"{task}={n}" for task, n in sorted(report["by_task"].items()))
    print(f"wrote {args.out}: {report['count']} pairs ({by_task})")
    return 0


# -- train -------------------------------------------------------------------------

def _corpus_texts(examples) -> list[str]:
    texts = []
    for ex in examples:
        texts.extend([ex.question, ex.answer])
    texts.extend(str(k) for k in range(1, 11))
    return texts


def _build_model_from_corpus(examples, model_cfg: dict) -> CoachModel:
    texts = _corpus_texts(examples)
    lm_tok = BpeTokenizer.train(texts, num_merges=int(model_cfg.get("num_merges", 120)))
    aligner_tok = WordTokenizer.train(texts)
    config = desk_config(lm_tok.vocab_size, aligner_tok.vocab_size,
                         seed=int(model_cfg.get("seed", 0)))
    return CoachModel(config, lm_tok, aligner_tok)


def _stage_items(stage: int, data_cfg: dict):
    from . import toydata

    if "toy" in data_cfg:
        preset = data_cfg["toy"]
        presets = {
            "captions": toydata.caption_items,
            "overfit": toydata.overfit_items,
            "multitask": toydata.multitask_items,
        }
        if preset not in presets:
            raise InvalidConfig(f"unknown toy preset {preset!r}")
        return presets[preset](), None
    corpus = data_cfg.get("corpus")
    clips_dir = data_cfg.get("clips_dir")
    if not corpus or not clips_dir:
        raise InvalidConfig("data needs either a toy preset or corpus + clips_dir")
    examples = read_corpus(corpus)
    loader = DirectoryClipLoader(clips_dir)
    if stage == 1:
        texts = [ex for ex in examples if ex.task in _FREE_TEXT_TASKS]
        if not texts:
            raise InvalidInput("corpus has no free-text pairs to align against")
        items = [(loader(ex.audio_ref), ex.answer) for ex in texts]
    else:
        items = [(loader(ex.audio_ref), ex.question, ex.answer) for ex in examples]
    return items, examples


def _resolve_model(args, config: dict, out_dir: Path):
    """Pick up the right starting weights for this stage.

    Priority: explicit resume checkpoint, then the previous stage's
    checkpoint in out_dir, then a checkpoint named in the config, then a
    fresh desk-scale build.
    """
    if args.resume:
        model, payload = load_model(args.resume)
        return model, payload.get("completed_stages", [])
    prev = out_dir / f"stage{args.stage - 1}.ckpt"
    if args.stage > 1 and prev.exists():
        model, payload = load_model(prev)
        return model, payload.get("completed_stages", [])
    model_cfg = config.get("model", {})
    if "checkpoint" in model_cfg:
        model, payload = load_model(model_cfg["checkpoint"])
        return model, payload.get("completed_stages", [])
    return None, []


def cmd_train(args) -> int:
    from . import toydata

    with open(args.config) as fh:
        config = json.load(fh)
    out_dir = Path(config["out_dir"])
    items, examples = _stage_items(args.stage, config.get("data", {}))
    model, completed = _resolve_model(args, config, out_dir)
    if model is None:
        model_cfg = config.get("model", {})
        if examples is None:
            model = toydata.build_toy_model(seed=int(model_cfg.get("seed", 0)))
        else:
            model = _build_model_from_corpus(examples, model_cfg)
    stage_cfg = StageConfig(stage=args.stage, **config.get("stage", {}))
    result = train_stage(model, stage_cfg, items, out_dir,
                         completed_stages=completed, resume_from=args.resume)
    print(
        f"stage {args.stage} finished at step {stage_cfg.max_steps}: "
        f"loss {result.final_loss:.4f} -> {result.checkpoint_path}"
    )
    return 0


# -- eval --------------------------------------------------------------------------

def _parse_adapter(uri: str, clips_dir, attempts: int, max_tokens: int = 48):
    scheme, _, rest = uri.partition(":")
    if scheme == "mock":
        params = {}
        for piece in filter(None, rest.split(",")):
            key, sep, value = piece.partition("=")
            if not sep or not key:
                raise InvalidConfig(f"bad mock parameter {piece!r}")
            params[key] = value
        return MockAdapter(
            model_id=params.get("id", "mock"),
            max_attempts=attempts,
            follow_rate=float(params.get("follow", 1.0)),
            salt=int(params.get("salt", 0)),
        )
    if scheme == "local":
        if not rest:
            raise InvalidConfig("local adapter needs a checkpoint path: local:<ckpt>")
        if clips_dir is None:
            raise InvalidConfig("local adapter needs --clips-dir to find audio")
        model, _ = load_model(rest)
        return LocalModelAdapter(model, DirectoryClipLoader(clips_dir),
                                 max_attempts=attempts, max_tokens=max_tokens)
    raise InvalidConfig(f"unknown adapter scheme {scheme!r}; use mock:... or local:<ckpt>")


def cmd_eval(args) -> int:
    examples = read_corpus(args.corpus)
    adapter = _parse_adapter(args.model, args.clips_dir, args.attempts, args.max_tokens)
    report = run_objective_suite(adapter, examples, iterations=args.iterations,
                                 seed=args.seed, out_dir=args.out)
    by_task = " ".join(f"{t}={n}" for t, n in sorted(report["counts"]["by_task"].items()))
    print(f"model {report['model_id']}  examples {report['counts']['examples']}  "
          f"iterations {report['iterations']}  seed {report['seed']}")
    print(f"tasks: {by_task}")
    print(f"{'metric':<32}{'mean':>8}{'std':>8}{'reference':>11}")
    for name, stats in report["metrics"].items():
        mean = "-" if stats["mean"] is None else f"{stats['mean']:.3f}"
        std = "-" if stats["std"] is None else f"{stats['std']:.3f}"
        ref = "-" if stats["reference"] is None else f"{stats['reference']:.2f}"
        print(f"{name:<32}{mean:>8}{std:>8}{ref:>11}")
    if args.out:
        print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


# -- serve -------------------------------------------------------------------------

def build_service(config: dict):
    """App factory shared by `perfcoach serve` and tests. Returns
    (app, description string)."""
    backend_cfg = config.get("backend", {"kind": "canned"})
    kind = backend_cfg.get("kind", "canned")
    if kind == "canned":
        backend = CannedBackend(
            mapping=backend_cfg.get("responses"),
            default=backend_cfg.get(
                "default", "The tempo is steady. I would say 7 out of 10."),
        )
    elif kind == "local":
        ckpt = backend_cfg.get("checkpoint")
        if not ckpt:
            raise InvalidConfig("local backend needs a checkpoint path")
        model, _ = load_model(ckpt)
        backend = CoachModelBackend(model, max_tokens=int(backend_cfg.get("max_tokens", 48)))
    else:
        raise InvalidConfig(f"unknown backend kind {kind!r}")

    service_cfg = ServiceConfig.from_dict(config.get("study", {}))
    data_dir = Path(config["data_dir"]) if "data_dir" in config else default_data_dir()
    store = SessionStore(data_dir / "sessions.jsonl")
    clip_loader = None
    if "clips_dir" in config:
        clip_loader = DirectoryClipLoader(config["clips_dir"])
    app = create_app(service_cfg, backend, store=store, clip_loader=clip_loader)
    summary = (
        f"backend {backend.model_id}, {len(service_cfg.study_items)} study items, "
        f"store {store.path}"
    )
    return app, summary


def cmd_serve(args) -> int:
    with open(args.config) as fh:
        config = json.load(fh)
    app, summary = build_service(config)
    if args.check:
        print(f"service ok: {summary}")
        return 0
    import uvicorn

    print(f"serving on {args.host}:{args.port} ({summary})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- wiring ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfcoach",
        description="Audio performance coaching: features, corpora, training, "
                    "evaluation, and the feedback service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dsp", help="audio file -> filterbank matrix file")
    p.add_argument("audio", help="WAV or FLAC input")
    p.add_argument("--out", required=True, help="output matrix file")
    p.add_argument("--target-frames", type=int, default=None,
                   help="pad or crop to this many frames")
    p.set_defaults(func=cmd_dsp)

    p = sub.add_parser("compile", help="annotation manifests -> QA corpus")
    p.add_argument("--manifest", action="append", required=True,
                   help="manifest JSON file (repeatable)")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--config", required=True, help="training config JSON")
    p.add_argument("--resume", default=None, help="mid-stage checkpoint to resume")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the objective suite against an adapter")
    p.add_argument("--corpus", required=True, help="QA corpus JSONL")
    p.add_argument("--model", required=True,
                   help="adapter uri: mock[:k=v,...] or local:<ckpt>")
    p.add_argument("--clips-dir", default=None, help="audio root for local adapters")
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--attempts", type=int, default=BASELINE_ATTEMPTS,
                   help="parse-retry budget per numeric question")
    p.add_argument("--max-tokens", type=int, default=48,
                   help="decode length cap for local adapters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="directory for report + transcripts")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP feedback service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--check", action="store_true",
                   help="build the app and exit without binding a port")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PerfCoachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
