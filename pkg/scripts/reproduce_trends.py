#!/usr/bin/env python3
"""Synthetic reproduction of the fixed vs change-point and window-length trends.

Runs, on seeded synthetic corpora:

* TTSF-style corpus: train back-end, diarize with fixed segmentation and with
  change-point segmentation, score DER/JER (N=50 by default).
* MSCS-style corpus: change-detection IDR/MR/FAR at N=50 and N=200.
* Trial EER at N=50 and N=200 for a weakly separated corpus.

Results are printed and optionally written as JSON.
"""

import argparse
import json
import logging
import time

from langdiar.config import ChangePointConfig, config_from_dict, get_preset
from langdiar.corpus import CORPUS_PRESETS, synth_corpus
from langdiar.embedding import ExtractorSpec, make_extractor
from langdiar.experiments import (
    change_detection_corpus,
    diarize_corpus,
    train_backend_on_corpus,
    trial_eer,
)

log = logging.getLogger("reproduce")


def ttsf_segmentation(n_train, n_test, N, separation, seed):
    spec = CORPUS_PRESETS["ttsf"].replace(separation=separation)
    train, _ = synth_corpus(spec.replace(seed=seed + 1000), n_train, "train")
    test, _ = synth_corpus(spec.replace(seed=seed), n_test, "test")
    ex = make_extractor(ExtractorSpec("stat-pool", N, input_dim=spec.feature_dim))
    backend = train_backend_on_corpus(train, ex, N, shift=5)
    out = {}
    for mode in ("fixed", "changepoint"):
        res = diarize_corpus(test, config_from_dict({"mode": mode, "N": N}), ex, backend)
        out[mode] = res.average
    return out


def mscs_change_detection(n_train, n_test, seed):
    spec = CORPUS_PRESETS["mscs"]
    train, _ = synth_corpus(spec.replace(seed=seed + 1000), n_train, "train")
    test, _ = synth_corpus(spec.replace(seed=seed), n_test, "test")
    out = {}
    for N in (50, 200):
        p = get_preset(f"gue-n{N}")
        ex = make_extractor(ExtractorSpec("stat-pool", N, input_dim=spec.feature_dim))
        backend = train_backend_on_corpus(train, ex, N, chain=p.chain, scorer=p.scorer, lda_dim=1, shift=5)
        _, avg = change_detection_corpus(test, ex, backend, ChangePointConfig(p.alpha, p.delta, p.gamma, N))
        out[f"N={N}"] = avg
    return out


def eer_by_window(n_train, n_test, separation, pairs, seed):
    spec = CORPUS_PRESETS["ttsf"].replace(separation=separation)
    train, _ = synth_corpus(spec.replace(seed=seed + 1000), n_train, "train")
    test, _ = synth_corpus(spec.replace(seed=seed), n_test, "test")
    out = {}
    for N in (50, 200):
        ex = make_extractor(ExtractorSpec("stat-pool", N, input_dim=spec.feature_dim))
        backend = train_backend_on_corpus(train, ex, N, shift=10)
        out[f"N={N}"] = trial_eer(test, ex, backend, N, pairs, seed, shift=10)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-train", type=int, default=20)
    ap.add_argument("--n-test", type=int, default=20)
    ap.add_argument("--N", type=int, default=50, help="window length for the segmentation comparison")
    ap.add_argument("--separation", type=float, default=6.0)
    ap.add_argument("--eer-separation", type=float, default=0.5)
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write results JSON here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    results = {}
    t0 = time.perf_counter()
    results["ttsf"] = ttsf_segmentation(args.n_train, args.n_test, args.N, args.separation, args.seed)
    log.info("TTSF fixed DER %.2f JER %.2f | change-point DER %.2f JER %.2f",
             results["ttsf"]["fixed"]["der"], results["ttsf"]["fixed"]["jer"],
             results["ttsf"]["changepoint"]["der"], results["ttsf"]["changepoint"]["jer"])
    results["mscs"] = mscs_change_detection(2 * args.n_train, args.n_test, args.seed)
    for k, v in results["mscs"].items():
        log.info("MSCS %s IDR %.1f MR %.1f FAR %.1f Dm %.3f", k, v["idr"], v["mr"], v["far"], v["dm"])
    results["eer"] = eer_by_window(args.n_train, args.n_test, args.eer_separation, args.pairs, args.seed)
    log.info("EER %s", ", ".join(f"{k} {v:.2f}%" for k, v in results["eer"].items()))
    results["seconds"] = round(time.perf_counter() - t0, 1)

    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    print(json.dumps(results, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
