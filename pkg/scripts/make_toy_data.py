"""Materialize a small demo workspace for the perfcoach CLI.

Writes synthetic clips, annotation manifests, a compiled corpus, and
config files for train/serve, so every subcommand can be exercised
end to end without any external data:

    python3 scripts/make_toy_data.py --out demo
    perfcoach compile --manifest demo/manifests/conservatory.json --out demo/one.jsonl
    perfcoach eval --corpus demo/corpus.jsonl --model mock:follow=0.9 --out demo/report
    perfcoach serve --config demo/service.json --check
"""
import argparse
import hashlib
import json
import sys
from pathlib import Path

from perfcoach import toydata
from perfcoach.compiler import compile_manifests, write_corpus

_KINDS = ("sine", "noise", "chirp", "am")


def clip_params(audio_ref: str) -> dict:
    """Deterministic synth settings per ref so reruns are byte-stable."""
    digest = hashlib.sha256(audio_ref.encode("utf-8")).digest()
    return {
        "kind": _KINDS[digest[0] % len(_KINDS)],
        "seed": int.from_bytes(digest[1:5], "big"),
        "freq": 110.0 * (1 + digest[5] % 8),
    }


def write_clips(refs, clips_dir: Path, seconds: float) -> int:
    written = 0
    for ref in sorted(set(refs)):
        path = clips_dir / ref
        path.parent.mkdir(parents=True, exist_ok=True)
        toydata.write_toy_clip(path, seconds=seconds, **clip_params(ref))
        written += 1
    return written


def study_to_dict(config) -> dict:
    return {
        "study_items": [
            {
                "item_id": item.item_id,
                "audio_ref": item.audio_ref,
                "dataset_group": item.dataset_group,
                "responses": item.responses,
            }
            for item in config.study_items
        ],
        "study_seed": config.study_seed,
        "items_per_participant": config.items_per_participant,
        "group_weights": config.group_weights,
        "categories": list(config.categories),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="workspace directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--seconds", type=float, default=0.5, help="clip length")
    args = parser.parse_args(argv)

    out = Path(args.out)
    manifests_dir = out / "manifests"
    clips_dir = out / "clips"
    manifests_dir.mkdir(parents=True, exist_ok=True)

    manifests = toydata.assorted_manifests(seed=args.seed)
    for manifest in manifests:
        path = manifests_dir / f"{manifest['dataset']}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    corpus = compile_manifests(manifests, seed=args.seed)
    write_corpus(out / "corpus.jsonl", corpus)

    study = toydata.toy_study_config(seed=args.seed)
    refs = [ex.audio_ref for ex in corpus]
    refs.extend(item.audio_ref for item in study.study_items)
    n_clips = write_clips(refs, clips_dir, args.seconds)

    service_config = {
        "backend": {"kind": "canned"},
        "data_dir": str(out / "service_data"),
        "clips_dir": str(clips_dir),
        "study": study_to_dict(study),
    }
    (out / "service.json").write_text(json.dumps(service_config, indent=2) + "\n")

    train_config = {
        "out_dir": str(out / "runs"),
        "model": {"seed": args.seed},
        "data": {"corpus": str(out / "corpus.jsonl"), "clips_dir": str(clips_dir)},
        "stage": {"max_steps": 8, "base_lr": 1e-3, "warmup_steps": 2,
                  "batch_size": 2, "seed": args.seed, "allow_fresh_init": True},
    }
    (out / "train.json").write_text(json.dumps(train_config, indent=2) + "\n")

    print(f"wrote {len(manifests)} manifests, {len(corpus)} corpus pairs, "
          f"{n_clips} clips under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
