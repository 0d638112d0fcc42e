"""Protein language model stand-ins: per-site probability tables and pseudo-likelihoods.

Real masked language models are deliberately out of scope. Campaigns either
load frozen tables from fixture files or synthesize a conservative
position-specific scoring matrix from substitution-matrix similarity to the
parental sequence. Both routes expose the same two queries: a pseudo-likelihood
per sequence and a per-site log-probability table.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .exceptions import FixtureError
from .sequences import AA_INDEX, ALPHABET, blosum62_matrix, validate_sequence

__all__ = [
    "PROB_FLOOR",
    "PssmLikelihoodProvider",
    "TableLikelihoodProvider",
    "substitution_softmax_pssm",
    "concentrated_pssm",
    "load_pssm",
    "load_likelihood_table",
]

# Probabilities below this are floored before taking logs.
PROB_FLOOR = 1e-12


def _check_pssm(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[1] != len(ALPHABET):
        raise ValueError(f"PSSM must have shape (L, 20), got {probs.shape}")
    if np.any(probs < 0):
        raise ValueError("PSSM contains negative probabilities")
    sums = probs.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > 1e-9)[0]
    if bad.size:
        raise ValueError(
            f"PSSM rows {bad.tolist()} do not sum to 1 (first bad sum {sums[bad[0]]!r})"
        )
    return probs


class PssmLikelihoodProvider:
    """Sequence likelihoods from an (L, 20) per-site probability table.

    The pseudo-likelihood is the geometric mean of the per-site probabilities
    of the sequence's own residues, i.e. exp of the length-normalized sum of
    log-probabilities. That keeps values in (0, 1] and comparable across
    lengths. Probabilities are floored at PROB_FLOOR before the log; flooring
    is counted and reported once per call via a warning.
    """

    def __init__(self, probs: np.ndarray):
        self.probs = _check_pssm(probs)
        self.floored_sites = 0

    @property
    def length(self) -> int:
        return self.probs.shape[0]

    def pseudo_likelihood(self, seq: str) -> float:
        validate_sequence(seq)
        if len(seq) != self.length:
            raise ValueError(
                f"sequence length {len(seq)} does not match table length {self.length}"
            )
        idx = np.fromiter((AA_INDEX[c] for c in seq), dtype=int, count=len(seq))
        p = self.probs[np.arange(self.length), idx]
        n_floored = int(np.sum(p < PROB_FLOOR))
        if n_floored:
            self.floored_sites += n_floored
            warnings.warn(
                f"floored {n_floored} site probabilities at {PROB_FLOOR}",
                RuntimeWarning,
                stacklevel=2,
            )
        logp = np.log(np.maximum(p, PROB_FLOOR))
        return float(np.exp(logp.mean()))

    def log_prob_table(self) -> np.ndarray:
        """(L, 20) table of floored log-probabilities."""
        return np.log(np.maximum(self.probs, PROB_FLOOR))


class TableLikelihoodProvider:
    """Likelihoods read verbatim from a sequence -> value fixture mapping.

    Used when a campaign replays likelihoods exported from a real model. There
    is no per-site table unless one is supplied alongside.
    """

    def __init__(self, table: dict[str, float], probs: np.ndarray | None = None):
        if not table:
            raise FixtureError("likelihood table is empty")
        for seq, val in table.items():
            validate_sequence(seq)
            if not 0.0 < val <= 1.0:
                raise FixtureError(
                    f"likelihood for {seq[:12]}... must lie in (0, 1], got {val}"
                )
        self.table = dict(table)
        self._pssm = None if probs is None else _check_pssm(probs)

    def pseudo_likelihood(self, seq: str) -> float:
        validate_sequence(seq)
        try:
            return self.table[seq]
        except KeyError:
            raise FixtureError(
                f"no fixture likelihood for sequence {seq!r}"
            ) from None

    def log_prob_table(self) -> np.ndarray:
        if self._pssm is None:
            raise FixtureError(
                "this likelihood provider has no per-site probability table"
            )
        return np.log(np.maximum(self._pssm, PROB_FLOOR))


def substitution_softmax_pssm(parental: str, temperature: float = 1.0) -> np.ndarray:
    """Synthetic PSSM: per-site softmax of BLOSUM-62 similarity to the parental residue.

    Lower temperatures concentrate mass on the parental residue and its
    conservative substitutions; temperature 1 is the default used everywhere.
    """
    validate_sequence(parental)
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    blosum = blosum62_matrix()
    scores = np.stack([blosum.row(ch) for ch in parental]) / temperature
    scores -= scores.max(axis=1, keepdims=True)
    expd = np.exp(scores)
    return expd / expd.sum(axis=1, keepdims=True)


def concentrated_pssm(parental: str, weight: float = 0.9) -> np.ndarray:
    """PSSM putting `weight` on each parental residue and the rest uniform."""
    validate_sequence(parental)
    if not 0.0 < weight < 1.0:
        raise ValueError(f"weight must lie in (0, 1), got {weight}")
    n = len(ALPHABET)
    probs = np.full((len(parental), n), (1.0 - weight) / (n - 1))
    for i, ch in enumerate(parental):
        probs[i, AA_INDEX[ch]] = weight
    return probs


def load_pssm(path: str | Path) -> np.ndarray:
    """Load an (L, 20) tab-separated probability table, one row per site.

    Columns follow the package alphabet order. A header line repeating the
    alphabet is allowed and skipped.
    """
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"PSSM fixture {path} does not exist")
    rows: list[list[float]] = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.replace("\t", " ").split()
        if all(t in AA_INDEX for t in tokens):
            continue  # header row of residue codes
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as err:
            raise FixtureError(f"bad PSSM line in {path}: {line!r}") from err
    try:
        return _check_pssm(np.array(rows, dtype=float))
    except ValueError as err:
        raise FixtureError(f"invalid PSSM in {path}: {err}") from err


def load_likelihood_table(path: str | Path) -> dict[str, float]:
    """Load a CSV of `sequence,likelihood` pairs (header optional)."""
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"likelihood fixture {path} does not exist")
    table: dict[str, float] = {}
    with path.open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if row[0].lower() in ("sequence", "seq"):
                continue
            if len(row) < 2:
                raise FixtureError(f"bad likelihood row in {path}: {row!r}")
            table[row[0].strip()] = float(row[1])
    if not table:
        raise FixtureError(f"likelihood fixture {path} has no entries")
    return table
