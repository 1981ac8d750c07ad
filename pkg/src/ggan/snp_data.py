"""Genotype matrices: parsing, numeric encoding, allele frequencies, AFD SNP selection, splits.

The on-disk format is a plain comma-separated file, UTF-8, no quoting::

    sample_id,<snp_id_1>,...,<snp_id_k>[,label]
    S1,0,1,2,DF
    S2,.,0,1,SD

Genotype tokens are ``0`` (homozygous reference), ``1`` (heterozygous),
``2`` (homozygous alternate) and ``.`` (missing). The optional trailing
``label`` column takes the values ``DF`` or ``SD``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataMismatchError, GganError, MissingGenotypeError, ParseError


class Genotype(Enum):
    """Diploid genotype of a biallelic SNP."""

    HOM_REF = "0"
    HET = "1"
    HOM_ALT = "2"
    MISSING = "."


# Integer codes used in the genotype grid. Non-missing codes double as
# allele-dose counts of the alternate allele, so ``code / 2`` is the
# numeric encoding fed to the networks.
HOM_REF, HET, HOM_ALT, MISSING = 0, 1, 2, -1

_TOKEN_TO_CODE = {"0": HOM_REF, "1": HET, "2": HOM_ALT, ".": MISSING}
_CODE_TO_TOKEN = {v: k for k, v in _TOKEN_TO_CODE.items()}
_CODE_TO_GENOTYPE = {
    HOM_REF: Genotype.HOM_REF,
    HET: Genotype.HET,
    HOM_ALT: Genotype.HOM_ALT,
    MISSING: Genotype.MISSING,
}

LABEL_CLASSES = ("DF", "SD")


@dataclass(frozen=True)
class GenotypeMatrix:
    """Individuals x SNPs grid of diploid genotypes.

    ``genotypes`` holds the integer codes above, shape
    ``(len(sample_ids), len(snp_ids))``. ``labels`` is either ``None``
    (unlabeled cohort) or one ``DF``/``SD`` string per sample.
    """

    sample_ids: tuple[str, ...]
    snp_ids: tuple[str, ...]
    genotypes: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        g = np.asarray(self.genotypes, dtype=np.int8)
        object.__setattr__(self, "genotypes", g)
        if g.shape != (len(self.sample_ids), len(self.snp_ids)):
            raise ValueError(
                f"genotype grid is {g.shape}, expected "
                f"({len(self.sample_ids)}, {len(self.snp_ids)})"
            )
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("sample ids are not unique")
        if len(set(self.snp_ids)) != len(self.snp_ids):
            raise ValueError("SNP ids are not unique")
        valid = np.isin(g, (HOM_REF, HET, HOM_ALT, MISSING))
        if not valid.all():
            raise ValueError("genotype grid contains invalid codes")
        if self.labels is not None:
            if len(self.labels) != len(self.sample_ids):
                raise ValueError("labels do not cover every sample")
            bad = [l for l in self.labels if l not in LABEL_CLASSES]
            if bad:
                raise ValueError(f"unknown label value {bad[0]!r}")

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def n_snps(self) -> int:
        return len(self.snp_ids)

    def snp_index(self, snp_id: str) -> int:
        try:
            return self.snp_ids.index(snp_id)
        except ValueError:
            raise DataMismatchError(f"SNP {snp_id!r} not present in matrix") from None

    def genotype_at(self, sample_idx: int, snp_idx: int) -> Genotype:
        return _CODE_TO_GENOTYPE[int(self.genotypes[sample_idx, snp_idx])]

    def subset_samples(self, indices: Sequence[int]) -> "GenotypeMatrix":
        idx = list(indices)
        return GenotypeMatrix(
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            snp_ids=self.snp_ids,
            genotypes=self.genotypes[idx, :],
            labels=None if self.labels is None else tuple(self.labels[i] for i in idx),
        )


@dataclass(frozen=True)
class SnpAlleleFrequencies:
    """Allele frequencies of one biallelic SNP within one cohort."""

    frequencies: Mapping[str, float]  # allele name -> frequency
    n_alleles: int  # number of possible alleles at this locus
    total_alleles_observed: int

    def __post_init__(self):
        if self.n_alleles < 1:
            raise ValueError("n_alleles must be >= 1")
        total = math.fsum(self.frequencies.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"frequencies sum to {total}, expected 1")
        for allele, f in self.frequencies.items():
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"frequency of allele {allele!r} out of [0,1]: {f}")


@dataclass(frozen=True)
class AlleleFrequencyTable:
    """Per-SNP allele frequencies for a cohort, in matrix column order."""

    snp_ids: tuple[str, ...]
    entries: Mapping[str, SnpAlleleFrequencies]

    def __post_init__(self):
        if set(self.snp_ids) != set(self.entries):
            raise ValueError("table snp_ids and entries disagree")

    def __getitem__(self, snp_id: str) -> SnpAlleleFrequencies:
        return self.entries[snp_id]


@dataclass(frozen=True)
class SubsetProvenance:
    """How a SNP subset was chosen."""

    kind: str  # "afd_threshold" or "explicit_list"
    threshold: float | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.threshold is not None:
            d["threshold"] = self.threshold
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "SubsetProvenance":
        return SubsetProvenance(kind=d["kind"], threshold=d.get("threshold"))


@dataclass(frozen=True)
class SnpSubset:
    """Ordered selection of SNP ids plus how it was obtained."""

    snp_ids: tuple[str, ...]
    provenance: SubsetProvenance
    afd_values: Mapping[str, float] | None = None
    empty_warning: bool = False

    def __post_init__(self):
        if len(set(self.snp_ids)) != len(self.snp_ids):
            raise ValueError("subset SNP ids are not unique")

    def __len__(self) -> int:
        return len(self.snp_ids)


def parse_genotype_matrix(stream: Iterable[str] | IO[str], has_labels: bool) -> GenotypeMatrix:
    """Parse the genotype CSV format from an iterable of text lines.

    Raises :class:`ParseError` on a malformed header or row, an unknown
    genotype/label token, duplicate ids, or a missing label column when
    ``has_labels`` is set.
    """
    lines = iter(stream)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError("empty input: no header line") from None
    header_fields = header.rstrip("\n").rstrip("\r").split(",")
    if len(header_fields) < 2:
        raise ParseError("header must name at least one SNP column")
    if header_fields[0] != "sample_id":
        raise ParseError(f"header must start with 'sample_id', got {header_fields[0]!r}")
    if has_labels:
        if header_fields[-1] != "label":
            raise ParseError("label column missing: header does not end with 'label'")
        snp_ids = header_fields[1:-1]
    else:
        snp_ids = header_fields[1:]
    if not snp_ids:
        raise ParseError("header must name at least one SNP column")
    seen_snps = set()
    for s in snp_ids:
        if s in seen_snps:
            raise ParseError(f"duplicate SNP id {s!r} in header")
        seen_snps.add(s)

    n_fields = len(header_fields)
    sample_ids: list[str] = []
    labels: list[str] = []
    rows: list[list[int]] = []
    seen_samples = set()
    for lineno, line in enumerate(lines, start=2):
        stripped = line.rstrip("\n").rstrip("\r")
        if stripped == "":
            continue
        fields = stripped.split(",")
        if len(fields) != n_fields:
            raise ParseError(
                f"line {lineno}: wrong column count, expected {n_fields} fields, got {len(fields)}"
            )
        sid = fields[0]
        if sid in seen_samples:
            raise ParseError(f"line {lineno}: duplicate sample id {sid!r}")
        seen_samples.add(sid)
        sample_ids.append(sid)
        geno_fields = fields[1:-1] if has_labels else fields[1:]
        row = []
        for col, tok in enumerate(geno_fields):
            code = _TOKEN_TO_CODE.get(tok)
            if code is None:
                raise ParseError(
                    f"line {lineno}: unknown genotype token {tok!r} at SNP {snp_ids[col]!r}"
                )
            row.append(code)
        rows.append(row)
        if has_labels:
            lab = fields[-1]
            if lab not in LABEL_CLASSES:
                raise ParseError(f"line {lineno}: unknown label token {lab!r}")
            labels.append(lab)

    genotypes = np.array(rows, dtype=np.int8).reshape(len(sample_ids), len(snp_ids))
    return GenotypeMatrix(
        sample_ids=tuple(sample_ids),
        snp_ids=tuple(snp_ids),
        genotypes=genotypes,
        labels=tuple(labels) if has_labels else None,
    )


def read_genotype_csv(path: str | Path, has_labels: bool | None = None) -> GenotypeMatrix:
    """Read a genotype CSV file. With ``has_labels=None`` the label column
    is auto-detected from the header."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if has_labels is None:
            fields = first.rstrip("\n").rstrip("\r").split(",")
            has_labels = len(fields) >= 2 and fields[-1] == "label"
        fh.seek(0)
        return parse_genotype_matrix(fh, has_labels=has_labels)


def write_genotype_csv(matrix: GenotypeMatrix, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        header = ["sample_id", *matrix.snp_ids]
        if matrix.labels is not None:
            header.append("label")
        fh.write(",".join(header) + "\n")
        for i, sid in enumerate(matrix.sample_ids):
            tokens = [_CODE_TO_TOKEN[int(c)] for c in matrix.genotypes[i]]
            fields = [sid, *tokens]
            if matrix.labels is not None:
                fields.append(matrix.labels[i])
            fh.write(",".join(fields) + "\n")


def allele_frequencies(matrix: GenotypeMatrix) -> AlleleFrequencyTable:
    """Estimate per-SNP reference/alternate allele frequencies.

    Each non-missing genotype contributes two alleles; missing genotypes
    are excluded from the counts. A SNP with zero observed genotypes is
    an error.
    """
    if matrix.n_samples == 0 or matrix.n_snps == 0:
        raise GganError("cannot compute allele frequencies of an empty matrix")
    g = matrix.genotypes
    n_hom_ref = (g == HOM_REF).sum(axis=0)
    n_het = (g == HET).sum(axis=0)
    n_hom_alt = (g == HOM_ALT).sum(axis=0)
    observed = n_hom_ref + n_het + n_hom_alt

    entries = {}
    for j, snp in enumerate(matrix.snp_ids):
        if observed[j] == 0:
            raise GganError(f"SNP {snp!r} has zero observed genotypes")
        total = 2 * int(observed[j])
        f_ref = (2 * int(n_hom_ref[j]) + int(n_het[j])) / total
        entries[snp] = SnpAlleleFrequencies(
            frequencies={"ref": f_ref, "alt": 1.0 - f_ref},
            n_alleles=2,
            total_alleles_observed=total,
        )
    return AlleleFrequencyTable(snp_ids=matrix.snp_ids, entries=entries)


def afd(labeled: AlleleFrequencyTable, unlabeled: AlleleFrequencyTable) -> dict[str, float]:
    """Allelic frequency distance between two cohorts, per SNP.

    For each SNP this is the largest absolute difference in allele
    frequency between the two tables, so it is symmetric and lies in
    [0, 1]. Both tables must cover exactly the same SNPs. The result
    preserves the labeled table's SNP order.
    """
    left = set(labeled.snp_ids)
    right = set(unlabeled.snp_ids)
    if left != right:
        only_l = sorted(left - right)
        only_r = sorted(right - left)
        parts = []
        if only_l:
            parts.append(f"only in first table: {only_l}")
        if only_r:
            parts.append(f"only in second table: {only_r}")
        raise DataMismatchError("AFD requires identical SNP sets; " + "; ".join(parts))
    out: dict[str, float] = {}
    for snp in labeled.snp_ids:
        fl = labeled[snp].frequencies
        fu = unlabeled[snp].frequencies
        alleles = set(fl) | set(fu)
        out[snp] = max(abs(fl.get(a, 0.0) - fu.get(a, 0.0)) for a in alleles)
    return out


def select_snps_by_afd(afd_map: Mapping[str, float], threshold: float) -> SnpSubset:
    """Select SNPs whose AFD is strictly below ``threshold``.

    The order of ``afd_map`` (source-matrix column order as produced by
    :func:`afd`) is preserved. An empty selection is returned with
    ``empty_warning`` set rather than raising.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    chosen = [snp for snp, value in afd_map.items() if value < threshold]
    return SnpSubset(
        snp_ids=tuple(chosen),
        provenance=SubsetProvenance(kind="afd_threshold", threshold=threshold),
        afd_values={snp: float(afd_map[snp]) for snp in chosen},
        empty_warning=not chosen,
    )


def select_snps_by_list(matrix: GenotypeMatrix, ids: Sequence[str]) -> SnpSubset:
    """Select an explicit, ordered list of SNP ids from a matrix."""
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if list(ids).count(i) > 1})
        raise ValueError(f"duplicate ids in selection list: {dupes}")
    known = set(matrix.snp_ids)
    missing = [i for i in ids if i not in known]
    if missing:
        raise DataMismatchError(f"SNP ids not present in matrix: {missing}")
    return SnpSubset(
        snp_ids=tuple(ids),
        provenance=SubsetProvenance(kind="explicit_list"),
        afd_values=None,
        empty_warning=len(ids) == 0,
    )


def split_train_test(
    matrix: GenotypeMatrix, test_fraction: float, seed: int
) -> tuple[GenotypeMatrix, GenotypeMatrix]:
    """Deterministic disjoint train/test split by sample.

    The test side gets ``round(test_fraction * n_samples)`` samples.
    Sample order within each side follows the input matrix. Raises if
    either side would be empty.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = matrix.n_samples
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n_test == 0 or n_test == n:
        raise GganError(
            f"split of {n} samples at fraction {test_fraction} leaves one side empty"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx = sorted(int(i) for i in perm[:n_test])
    train_idx = sorted(int(i) for i in perm[n_test:])
    return matrix.subset_samples(train_idx), matrix.subset_samples(test_idx)


def encode_profiles(
    matrix: GenotypeMatrix, subset: SnpSubset, missing_policy: str = "reject"
) -> np.ndarray:
    """Encode genotypes on the {0, 0.5, 1} scale, one row per sample.

    HomRef -> 0.0, Het -> 0.5, HomAlt -> 1.0. Missing genotypes either
    abort (``reject``) or are replaced by the most frequent genotype of
    that SNP in ``matrix``, ties broken toward HomRef (``impute_mode``).
    """
    if missing_policy not in ("reject", "impute_mode"):
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    cols = [matrix.snp_index(s) for s in subset.snp_ids]
    g = matrix.genotypes[:, cols].astype(np.int64)

    if (g == MISSING).any():
        if missing_policy == "reject":
            rows, colpos = np.nonzero(g == MISSING)
            sample = matrix.sample_ids[rows[0]]
            snp = subset.snp_ids[colpos[0]]
            raise MissingGenotypeError(
                f"missing genotype for sample {sample!r} at SNP {snp!r} under reject policy"
            )
        for k, j in enumerate(cols):
            col = g[:, k]
            if not (col == MISSING).any():
                continue
            full = matrix.genotypes[:, j]
            counts = [(full == c).sum() for c in (HOM_REF, HET, HOM_ALT)]
            if sum(counts) == 0:
                raise GganError(
                    f"SNP {subset.snp_ids[k]!r} has zero observed genotypes; cannot impute"
                )
            mode = int(np.argmax(counts))  # argmax tie-break lands on HomRef first
            col[col == MISSING] = mode
    return g.astype(np.float64) / 2.0


def decode_profile(values: np.ndarray) -> list[Genotype]:
    """Map encoded values exactly in {0, 0.5, 1} back to genotypes."""
    out = []
    for v in np.asarray(values, dtype=np.float64).ravel():
        if v == 0.0:
            out.append(Genotype.HOM_REF)
        elif v == 0.5:
            out.append(Genotype.HET)
        elif v == 1.0:
            out.append(Genotype.HOM_ALT)
        else:
            raise ValueError(f"encoded value {v} is not one of 0, 0.5, 1")
    return out


def quantize_encoded(values: np.ndarray) -> np.ndarray:
    """Snap arbitrary values in [0, 1] to the nearest of {0, 0.5, 1}.

    Exact midpoints follow numpy round-half-to-even on the doubled scale.
    """
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.round(v * 2.0), 0, 2) / 2.0


def labels_to_indices(labels: Sequence[str]) -> np.ndarray:
    """DF -> 0, SD -> 1."""
    try:
        return np.array([LABEL_CLASSES.index(l) for l in labels], dtype=np.int64)
    except ValueError:
        bad = [l for l in labels if l not in LABEL_CLASSES]
        raise ValueError(f"unknown label value {bad[0]!r}") from None


def write_snp_subset(subset: SnpSubset, path: str | Path) -> None:
    """Write one SNP id per line plus a ``<path>.json`` provenance sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for snp in subset.snp_ids:
            fh.write(snp + "\n")
    sidecar = {
        "provenance": subset.provenance.to_dict(),
        "afd_values": dict(subset.afd_values) if subset.afd_values is not None else None,
        "empty_warning": subset.empty_warning,
    }
    with Path(str(path) + ".json").open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_snp_subset(path: str | Path) -> SnpSubset:
    """Read a subset file written by :func:`write_snp_subset`.

    The sidecar is optional; without it the subset is treated as an
    explicit list.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    sidecar_path = Path(str(path) + ".json")
    provenance = SubsetProvenance(kind="explicit_list")
    afd_values = None
    empty_warning = len(ids) == 0
    if sidecar_path.exists():
        try:
            side = json.loads(sidecar_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid subset sidecar {sidecar_path}: {exc}") from exc
        provenance = SubsetProvenance.from_dict(side["provenance"])
        if side.get("afd_values") is not None:
            afd_values = {k: float(v) for k, v in side["afd_values"].items()}
        empty_warning = bool(side.get("empty_warning", empty_warning))
    return SnpSubset(
        snp_ids=tuple(ids),
        provenance=provenance,
        afd_values=afd_values,
        empty_warning=empty_warning,
    )
