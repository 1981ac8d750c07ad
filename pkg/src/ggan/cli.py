"""Command-line pipeline: freqs, select, train, eval, generate.

Exit codes are a stable contract:

    0 success, 1 usage, 2 parse error, 3 data mismatch, 4 invalid
    config, 5 numeric failure, 6 artifact mismatch
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ArtifactMismatchError,
    CheckpointError,
    ConfigError,
    DataMismatchError,
    GganError,
    NumericsError,
    ParseError,
    SpecError,
    TrainingDivergedError,
)
from .evaluation import decision_log, make_report, t1_evaluate, t2_evaluate, write_decision_log
from .model import generate, discriminate, sample_noise
from .snp_data import (
    LABEL_CLASSES,
    SnpSubset,
    SubsetProvenance,
    afd,
    allele_frequencies,
    encode_profiles,
    labels_to_indices,
    quantize_encoded,
    read_genotype_csv,
    read_snp_subset,
    select_snps_by_afd,
    split_train_test,
    write_genotype_csv,
    write_snp_subset,
)
from .training import (
    TrainConfig,
    history_jsonl,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_DATA_MISMATCH = 3
EXIT_CONFIG = 4
EXIT_NUMERIC = 5
EXIT_ARTIFACT = 6

SEED_ENV_VAR = "GGAN_SEED"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is 1
    def error(self, message):
        raise _UsageError(message)


def _resolve_seed(flag_value: int | None, fallback: int) -> int:
    """Flag wins, then GGAN_SEED, then the fallback (config/checkpoint)."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return fallback


def _write_manifest(path: Path, command: str, inputs: dict, outputs: dict, seed: int | None,
                    config_path: str | None = None) -> None:
    manifest = {
        "command": command,
        "config_path": config_path,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_freqs_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    for key in ("snp_ids", "afd"):
        if key not in doc:
            raise ParseError(f"{path} is not a frequency file (missing {key!r})")
    return doc


def _freq_entry(table, snp: str) -> dict:
    e = table[snp]
    return {
        "frequencies": dict(e.frequencies),
        "n_alleles": e.n_alleles,
        "total_alleles_observed": e.total_alleles_observed,
    }


def cmd_freqs(args) -> int:
    labeled = read_genotype_csv(args.labeled_csv)
    unlabeled = read_genotype_csv(args.unlabeled_csv)
    shared = [s for s in labeled.snp_ids if s in set(unlabeled.snp_ids)]
    if not shared:
        raise DataMismatchError(
            f"no shared SNPs between {args.labeled_csv} and {args.unlabeled_csv}"
        )
    only_labeled = [s for s in labeled.snp_ids if s not in set(unlabeled.snp_ids)]
    only_unlabeled = [s for s in unlabeled.snp_ids if s not in set(labeled.snp_ids)]

    freq_l = allele_frequencies(labeled)
    freq_u = allele_frequencies(unlabeled)
    shared_l = {s: freq_l.entries[s] for s in shared}
    shared_u = {s: freq_u.entries[s] for s in shared}
    from .snp_data import AlleleFrequencyTable

    afd_map = afd(
        AlleleFrequencyTable(snp_ids=tuple(shared), entries=shared_l),
        AlleleFrequencyTable(snp_ids=tuple(shared), entries=shared_u),
    )
    out = Path(args.out_json)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        command="freqs",
        inputs={"labeled_csv": args.labeled_csv, "unlabeled_csv": args.unlabeled_csv},
        outputs={"freqs_json": str(out)},
        seed=None,
    )
    doc = {
        "snp_ids": shared,
        "labeled": {s: _freq_entry(freq_l, s) for s in shared},
        "unlabeled": {s: _freq_entry(freq_u, s) for s in shared},
        "afd": {s: afd_map[s] for s in shared},
        "only_in_labeled": only_labeled,
        "only_in_unlabeled": only_unlabeled,
        "sizes": {"labeled_samples": labeled.n_samples, "unlabeled_samples": unlabeled.n_samples},
    }
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if only_labeled or only_unlabeled:
        print(
            f"warning: {len(only_labeled) + len(only_unlabeled)} SNPs present in only one cohort "
            "were dropped",
            file=sys.stderr,
        )
    print(f"wrote allele frequencies and AFD for {len(shared)} SNPs to {out}")
    return EXIT_OK


def cmd_select(args) -> int:
    doc = _read_freqs_file(args.freqs_json)
    afd_map = {s: float(doc["afd"][s]) for s in doc["snp_ids"]}
    if args.threshold is not None:
        if not 0.0 <= args.threshold <= 1.0:
            raise _UsageError(f"--threshold must be in [0, 1], got {args.threshold}")
        subset = select_snps_by_afd(afd_map, args.threshold)
    else:
        try:
            ids = [
                line.strip()
                for line in Path(args.id_list).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        except OSError as exc:
            raise ParseError(f"cannot read {args.id_list}: {exc}") from exc
        if len(set(ids)) != len(ids):
            raise ParseError(f"duplicate ids in {args.id_list}")
        missing = [i for i in ids if i not in afd_map]
        if missing:
            raise DataMismatchError(f"ids not present in {args.freqs_json}: {missing}")
        subset = SnpSubset(
            snp_ids=tuple(ids),
            provenance=SubsetProvenance(kind="explicit_list"),
            afd_values={i: afd_map[i] for i in ids},
            empty_warning=not ids,
        )
    out = Path(args.out_snps)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        command="select",
        inputs={"freqs_json": args.freqs_json},
        outputs={"subset": str(out), "sidecar": str(out) + ".json"},
        seed=None,
    )
    write_snp_subset(subset, out)
    if subset.empty_warning:
        print("warning: selection is empty", file=sys.stderr)
    print(f"selected {len(subset)} SNPs -> {out}")
    return EXIT_OK


def _check_subset_applies(matrix, subset, path: str, exc=DataMismatchError) -> None:
    known = set(matrix.snp_ids)
    missing = [s for s in subset.snp_ids if s not in known]
    if missing:
        raise exc(f"{path} lacks subset SNPs: {missing}")


def cmd_train(args) -> int:
    try:
        config_text = Path(args.config_json).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {args.config_json}: {exc}") from exc
    config = TrainConfig.from_json(config_text)
    config.seed = _resolve_seed(args.seed, config.seed)
    config.validate()

    labeled = read_genotype_csv(args.labeled_csv, has_labels=True)
    unlabeled = read_genotype_csv(args.unlabeled_csv)
    subset = read_snp_subset(args.subset)
    if len(subset) < 2:
        raise ConfigError(f"subset {args.subset} has {len(subset)} SNPs; at least 2 required")
    _check_subset_applies(labeled, subset, args.labeled_csv)
    _check_subset_applies(unlabeled, subset, args.unlabeled_csv)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        outdir / "manifest.json",
        command="train",
        inputs={
            "labeled_csv": args.labeled_csv,
            "unlabeled_csv": args.unlabeled_csv,
            "subset": args.subset,
        },
        outputs={
            "checkpoint": str(outdir / "checkpoint.ggan"),
            "history": str(outdir / "history.jsonl"),
        },
        seed=config.seed,
        config_path=args.config_json,
    )

    # Hold out labeled test data; the unlabeled cohort is used whole for
    # training with a sampled test subset exported alongside.
    labeled_train = labeled
    if config.test_fraction > 0.0:
        labeled_train, labeled_test = split_train_test(labeled, config.test_fraction, config.seed)
        _, unlabeled_test = split_train_test(unlabeled, config.test_fraction, config.seed)
        write_genotype_csv(labeled_train, outdir / "labeled_train.csv")
        write_genotype_csv(labeled_test, outdir / "labeled_test.csv")
        write_genotype_csv(unlabeled_test, outdir / "unlabeled_test.csv")

    state = train(config, labeled_train, unlabeled, subset)
    save_checkpoint(state, outdir / "checkpoint.ggan")
    (outdir / "history.jsonl").write_text(history_jsonl(state), encoding="utf-8")
    last = state.history[-1]
    print(
        f"trained {state.epoch} epochs on {len(subset)} SNPs: "
        f"L_sup={last['L_sup']:.6f} L_unsup={last['L_unsup']:.6f} L_gen={last['L_gen']:.6f}"
    )
    print(f"checkpoint: {outdir / 'checkpoint.ggan'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    subset = state.subset
    labeled_test = read_genotype_csv(args.labeled_test_csv, has_labels=True)
    _check_subset_applies(labeled_test, subset, args.labeled_test_csv, exc=ArtifactMismatchError)
    x_lab = encode_profiles(labeled_test, subset, state.config.missing_policy)[:, :, None]
    y = labels_to_indices(labeled_test.labels)

    seed = _resolve_seed(args.seed, state.config.seed)
    t1 = None
    sample_rows = decision_log(state.model, x_lab, labeled_test.sample_ids)
    if not args.t2_only:
        unlabeled_test = read_genotype_csv(args.unlabeled_test_csv)
        _check_subset_applies(
            unlabeled_test, subset, args.unlabeled_test_csv, exc=ArtifactMismatchError
        )
        x_unlab = encode_profiles(unlabeled_test, subset, state.config.missing_policy)[:, :, None]
        rng = np.random.default_rng(seed)
        t1 = t1_evaluate(
            state.model,
            x_lab,
            y,
            x_unlab,
            synthetic_count=args.synthetic_count,
            rng=rng,
        )
        sample_rows += decision_log(state.model, x_unlab, unlabeled_test.sample_ids)
    t2 = t2_evaluate(state.model, x_lab, y)

    model_id = args.model_id or Path(args.checkpoint).stem
    report = make_report(
        model_id,
        t1,
        t2,
        seed=seed,
        subset_provenance=subset.provenance.to_dict(),
    )
    out = Path(args.out_json)
    if args.decision_log:
        log_path = Path(args.decision_log)
    else:
        log_path = out.with_name(out.with_suffix("").name + ".decisions.csv")
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        command="eval",
        inputs={
            "checkpoint": args.checkpoint,
            "labeled_test_csv": args.labeled_test_csv,
            "unlabeled_test_csv": None if args.t2_only else args.unlabeled_test_csv,
        },
        outputs={"report": str(out), "decision_log": str(log_path)},
        seed=seed,
    )
    out.write_text(report.to_json(), encoding="utf-8")
    write_decision_log(sample_rows, log_path)
    if t1 is not None:
        print(f"T1: acc_labeled={t1.acc_labeled:.4f} acc_unlabeled={t1.acc_unlabeled:.4f}")
    acc2 = "undefined" if t2.acc2 is None else f"{t2.acc2:.4f}"
    print(f"T2: acc1={t2.acc1:.4f} acc2={acc2} (n_passed={t2.n_passed})")
    print(f"report: {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    model = state.model
    seed = _resolve_seed(args.seed, state.config.seed)
    rng = np.random.default_rng(seed)
    noise = sample_noise(args.count, model.noise_dim, rng, state.config.noise_distribution)
    values = generate(model, noise)[:, :, 0]  # (count, n_snps) in [0, 1]

    out = Path(args.out_csv)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        command="generate",
        inputs={"checkpoint": args.checkpoint},
        outputs={"synthetic_csv": str(out)},
        seed=seed,
    )
    sample_ids = [f"synthetic_{k}" for k in range(args.count)]
    if args.quantize:
        snapped = quantize_encoded(values)
        label_probs, _ = discriminate(model, snapped[:, :, None])
        labels = [LABEL_CLASSES[int(i)] for i in label_probs.argmax(axis=1)]
        codes = (snapped * 2).astype(np.int8)
        from .snp_data import GenotypeMatrix

        matrix = GenotypeMatrix(
            sample_ids=tuple(sample_ids),
            snp_ids=state.subset.snp_ids,
            genotypes=codes,
            labels=tuple(labels),
        )
        write_genotype_csv(matrix, out)
    else:
        label_probs, _ = discriminate(model, values[:, :, None])
        labels = [LABEL_CLASSES[int(i)] for i in label_probs.argmax(axis=1)]
        with out.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(["sample_id", *state.subset.snp_ids, "label"]) + "\n")
            for i, sid in enumerate(sample_ids):
                row = [sid, *(repr(float(v)) for v in values[i]), labels[i]]
                fh.write(",".join(row) + "\n")
    print(f"wrote {args.count} synthetic profiles to {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="ggan",
        description="Semi-supervised GAN pipeline for SNP genotype profiles",
    )
    parser.add_argument("--version", action="version", version=f"ggan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("freqs", help="compute per-cohort allele frequencies and AFD")
    p.add_argument("labeled_csv")
    p.add_argument("unlabeled_csv")
    p.add_argument("out_json")
    p.set_defaults(func=cmd_freqs)

    p = sub.add_parser("select", help="select a SNP subset by AFD threshold or explicit list")
    p.add_argument("freqs_json")
    p.add_argument("out_snps")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--threshold", type=float, help="keep SNPs with AFD strictly below this")
    group.add_argument("--list", dest="id_list", help="file with one SNP id per line")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="train a model on labeled + unlabeled cohorts")
    p.add_argument("config_json")
    p.add_argument("labeled_csv")
    p.add_argument("unlabeled_csv")
    p.add_argument("subset")
    p.add_argument("outdir")
    p.add_argument("--seed", type=int, default=None, help=f"overrides config and {SEED_ENV_VAR}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the T1/T2 testing procedures")
    p.add_argument("checkpoint")
    p.add_argument("labeled_test_csv")
    p.add_argument("unlabeled_test_csv", nargs="?", default=None)
    p.add_argument("out_json")
    p.add_argument("--t2-only", action="store_true", help="skip T1; report omits its fields")
    p.add_argument("--synthetic-count", type=int, default=None,
                   help="synthetic profiles mixed into T1's realness scoring "
                        "(default: unlabeled test size)")
    p.add_argument("--model-id", default=None)
    p.add_argument("--decision-log", default=None, help="path for the per-profile decision CSV")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="emit synthetic genotype profiles")
    p.add_argument("checkpoint")
    p.add_argument("out_csv")
    p.add_argument("--count", type=int, required=True, help="number of profiles (>= 1)")
    p.add_argument("--quantize", action="store_true",
                   help="snap values to {0, 0.5, 1} and write genotype tokens")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "eval" and not args.t2_only and args.unlabeled_test_csv is None:
            raise _UsageError("eval needs an unlabeled test CSV unless --t2-only is given")
        if args.command == "generate" and args.count < 1:
            raise _UsageError(f"--count must be >= 1, got {args.count}")
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ArtifactMismatchError, CheckpointError) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except DataMismatchError as exc:
        print(f"data mismatch: {exc}", file=sys.stderr)
        return EXIT_DATA_MISMATCH
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
