"""Command-line entry point: ``langdiar <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data/file error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, config_from_dict, get_preset
from .errors import LangDiarError

log = logging.getLogger("langdiar")

CONFIG_DIR_ENV = "LANGDIAR_CONFIG_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
        alt = Path(os.environ[CONFIG_DIR_ENV]) / p
        if alt.exists():
            return alt
    return p


def _read_json(path) -> dict:
    p = _resolve(path)
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise LangDiarError(f"{p}: {exc.strerror}") from exc
    except ValueError as exc:
        raise LangDiarError(f"{p}: invalid JSON ({exc})") from exc


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _need_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise LangDiarError(f"{p}: not a directory")
    return p


def _load_utterances(feat_dir: Path, ids=None):
    from .corpus import read_feature_file
    from .experiments import LabeledUtterance
    from .io import read_rttm

    if ids is None:
        ids = sorted(p.stem for p in feat_dir.glob("*.feats"))
    if not ids:
        raise LangDiarError(f"{feat_dir}: no .feats files")
    out = []
    for uid in ids:
        feats = read_feature_file(feat_dir / f"{uid}.feats")
        rttm = feat_dir / f"{uid}.rttm"
        ref = read_rttm(rttm, uid) if rttm.exists() else None
        out.append(LabeledUtterance(uid, feats, ref))
    return out


def _model_extractor(backend, N=None):
    from .embedding import ExtractorSpec, make_extractor

    doc = dict(backend.meta.get("extractor") or {})
    if not doc:
        raise LangDiarError("model has no extractor metadata")
    if N is not None:
        doc["window_len"] = N
    return make_extractor(ExtractorSpec(**doc))


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    from .corpus import CORPUS_PRESETS, CorpusSpec, synth_corpus, write_corpus

    doc = _read_json(args.spec) if args.spec else {}
    if args.preset:
        doc = dict(doc, preset=args.preset)
    if doc.get("preset") and doc["preset"] not in CORPUS_PRESETS:
        raise LangDiarError(f"unknown corpus preset {doc['preset']!r}")
    spec = CorpusSpec.from_dict(doc)
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    utts, _ = synth_corpus(spec, args.n, prefix=args.prefix)
    man = write_corpus(args.out, spec, utts)
    print(f"wrote {len(utts)} utterances to {args.out} (class time {man['class_time']})")
    return 0


def cmd_train_backend(args) -> int:
    from .embedding import ExtractorSpec, make_extractor
    from .experiments import train_backend_on_corpus
    from .io import save_backend

    feat_dir = _need_dir(args.features)
    ids = None
    if args.labels:
        man = _read_json(args.labels)
        ids = [e["id"] for e in man.get("utterances", [])]
    utts = _load_utterances(feat_dir, ids)
    missing = [u.utterance_id for u in utts if u.reference is None]
    if missing:
        raise LangDiarError(f"no reference RTTM for {missing[:5]}")
    chain = [c for c in args.chain.split(",") if c]
    spec = ExtractorSpec(args.extractor, args.N, input_dim=utts[0].features.dim,
                         output_dim=args.extractor_dim, seed=args.extractor_seed)
    extractor = make_extractor(spec)
    backend = train_backend_on_corpus(utts, extractor, args.N, chain, args.scorer, args.lda_dim, args.shift)
    save_backend(args.out, backend)
    print(f"trained {args.scorer} back-end on {backend.meta['n_train']} windows -> {args.out}")
    return 0


def _diarize_one(job):
    from .diarize import diarize
    from .io import write_rttm

    utt, cfg, extractor, backend, out_dir = job
    hyp = diarize(utt.features, cfg, extractor, backend, utt.utterance_id)
    write_rttm(hyp, Path(out_dir) / f"{utt.utterance_id}.rttm")
    return utt.utterance_id, len(hyp)


def cmd_diarize(args) -> int:
    from .io import load_backend

    doc = _read_json(args.config) if args.config else {}
    doc["mode"] = args.mode
    if args.preset:
        doc["preset"] = args.preset
    backend = load_backend(_resolve(args.model))
    if "N" not in doc and "preset" not in doc and "N" in backend.meta:
        doc["N"] = int(backend.meta["N"])
    cfg = config_from_dict(doc)
    model_n = backend.meta.get("N")
    if model_n is not None and int(model_n) != cfg.N:
        log.warning("config N=%d differs from the model's training N=%d", cfg.N, model_n)
    extractor = _model_extractor(backend, cfg.N)
    utts = _load_utterances(_need_dir(getattr(args, "in")))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(u, cfg, extractor, backend, out) for u in utts]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_diarize_one, jobs))
    else:
        results = [_diarize_one(j) for j in jobs]
    _write_json(out / "config.json", cfg.to_dict())
    for uid, n in results:
        log.info("%s: %d segments", uid, n)
    print(f"diarized {len(results)} utterances ({cfg.mode}) -> {out}")
    return 0


def _rttm_pairs(ref_dir: Path, hyp_dir: Path):
    from .diarize import Diarization
    from .io import read_rttm

    refs = sorted(ref_dir.glob("*.rttm"))
    if not refs:
        raise LangDiarError(f"{ref_dir}: no .rttm files")
    for rp in refs:
        ref = read_rttm(rp, rp.stem)
        hp = hyp_dir / rp.name
        if hp.exists():
            hyp = read_rttm(hp, rp.stem)
        else:
            log.warning("%s: no hypothesis, scoring as empty", rp.stem)
            hyp = Diarization(rp.stem, [])
        yield rp.stem, ref, hyp


def _table(rows, columns) -> str:
    head = f"{'utterance':<16}" + "".join(f"{c:>9}" for c in columns)
    lines = [head, "-" * len(head)]
    for name, vals in rows:
        lines.append(f"{name:<16}" + "".join(f"{v:>9.2f}" for v in vals))
    return "\n".join(lines)


def cmd_score(args) -> int:
    from .evaluation import average_reports, score

    per, reports = {}, []
    for uid, ref, hyp in _rttm_pairs(_need_dir(args.ref), _need_dir(args.hyp)):
        rep = score(ref, hyp, args.collar)
        reports.append(rep)
        per[uid] = rep.to_dict()
    avg = average_reports(reports)
    doc = {"average": avg, "utterances": per, "collar": args.collar}
    hyp_cfg = Path(args.hyp) / "config.json"
    if hyp_cfg.exists():
        doc["config"] = _read_json(hyp_cfg)
    if args.report:
        _write_json(args.report, doc)
    rows = [(uid, (r["der"], r["jer"])) for uid, r in per.items()] + [("AVERAGE", (avg["der"], avg["jer"]))]
    print(_table(rows, ("DER", "JER")))
    return 0


def cmd_cpd_score(args) -> int:
    from .evaluation import average_cpd, cpd_metrics

    per, reports = {}, []
    for uid, ref, hyp in _rttm_pairs(_need_dir(args.ref), _need_dir(args.hyp)):
        changes = ref.change_times()
        if len(changes) == 0:
            log.info("%s: reference has no change points, skipped", uid)
            continue
        rep = cpd_metrics(changes, hyp.change_times(), ref.span)
        reports.append(rep)
        per[uid] = rep.to_dict()
    avg = average_cpd(reports)
    if args.report:
        _write_json(args.report, {"average": avg, "utterances": per})
    rows = [(uid, (r["idr"], r["mr"], r["far"], r["dm"])) for uid, r in per.items()]
    rows.append(("AVERAGE", (avg["idr"], avg["mr"], avg["far"], avg["dm"])))
    print(_table(rows, ("IDR", "MR", "FAR", "Dm")))
    return 0


def cmd_trials_eer(args) -> int:
    from .experiments import trial_eer
    from .io import load_backend

    backend = load_backend(_resolve(args.model))
    N = args.N or int(backend.meta.get("N", 200))
    extractor = _model_extractor(backend, N)
    utts = _load_utterances(_need_dir(args.features))
    value = trial_eer(utts, extractor, backend, N, args.pairs, args.seed, args.shift)
    doc = {"eer": value, "pairs": args.pairs, "N": N, "seed": args.seed}
    if args.report:
        _write_json(args.report, doc)
    print(f"EER {value:.2f}% ({args.pairs} target / {args.pairs} non-target pairs, N={N})")
    return 0


def cmd_vad(args) -> int:
    from .features import FrameSpec, MfccConfig, energy_vad, mfcc, read_wav

    signal = read_wav(getattr(args, "in"))
    spec = FrameSpec(args.frame_len, args.frame_shift)
    seq = energy_vad(mfcc(signal, MfccConfig(frame=spec)), args.factor)
    mask = seq.voiced_mask
    edges = np.flatnonzero(np.diff(np.r_[0, mask.astype(int), 0]))
    regions = [(float(seq.frame_starts[a]), float(seq.frame_starts[b - 1] + spec.frame_shift))
               for a, b in zip(edges[::2], edges[1::2])]
    doc = {"frames": int(len(mask)), "voiced": int(mask.sum()), "factor": args.factor,
           "regions": [[round(a, 3), round(b, 3)] for a, b in regions]}
    if args.out:
        _write_json(args.out, doc)
    print(f"{doc['voiced']}/{doc['frames']} frames voiced, {len(regions)} regions")
    return 0


def cmd_info(args) -> int:
    print(f"langdiar {__version__}")
    print("presets (alpha, delta, gamma, N, scorer):")
    for name in sorted(PRESETS):
        p = get_preset(name)
        print(f"  {name:<15} {p.alpha:>4} {p.delta:>4} {p.gamma:>4} {p.N:>4} {p.scorer}")
    if args.model:
        from .io import read_arrays

        arrays, meta = read_arrays(_resolve(args.model))
        print(json.dumps({"meta": meta, "arrays": {k: list(v.shape) for k, v in arrays.items()}},
                         indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="langdiar", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("synth", help="generate a synthetic code-switched corpus")
    s.add_argument("--spec", help="corpus spec JSON (may name a preset)")
    s.add_argument("--preset", help="corpus preset: ttsf or mscs")
    s.add_argument("--out", required=True)
    s.add_argument("-n", type=int, default=20)
    s.add_argument("--seed", type=int)
    s.add_argument("--prefix", default="utt")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-backend", help="train projection chain and scorer from labelled features")
    s.add_argument("--features", required=True)
    s.add_argument("--labels", help="manifest.json listing utterance ids")
    s.add_argument("--out", required=True)
    s.add_argument("--chain", default="whiten,lnorm")
    s.add_argument("--lda-dim", type=int)
    s.add_argument("--scorer", choices=("gplda", "cosine"), default="gplda")
    s.add_argument("--N", type=int, default=200)
    s.add_argument("--shift", type=int)
    s.add_argument("--extractor", default="stat-pool", choices=("stat-pool", "mean-pool", "test-linear"))
    s.add_argument("--extractor-dim", type=int)
    s.add_argument("--extractor-seed", type=int, default=0)
    s.set_defaults(func=cmd_train_backend)

    s = sub.add_parser("diarize", help="diarize feature files")
    s.add_argument("--mode", choices=("fixed", "changepoint"), required=True)
    s.add_argument("--config")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--model", required=True)
    s.add_argument("--in", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_diarize)

    s = sub.add_parser("score", help="DER/JER of hypothesis RTTMs against references")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--report")
    s.add_argument("--collar", type=float, default=0.0)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("cpd-score", help="IDR/MR/FAR/Dm change-detection scores")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_cpd_score)

    s = sub.add_parser("trials-eer", help="EER over random within/between-class window pairs")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--pairs", type=int, default=2000)
    s.add_argument("--N", type=int)
    s.add_argument("--shift", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.set_defaults(func=cmd_trials_eer)

    s = sub.add_parser("vad", help="energy VAD on a WAV file")
    s.add_argument("--in", required=True)
    s.add_argument("--factor", type=float, default=0.06)
    s.add_argument("--frame-len", type=float, default=0.02)
    s.add_argument("--frame-shift", type=float, default=0.01)
    s.add_argument("--out")
    s.set_defaults(func=cmd_vad)

    s = sub.add_parser("info", help="version, presets, model summary")
    s.add_argument("--model")
    s.set_defaults(func=cmd_info)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LangDiarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
