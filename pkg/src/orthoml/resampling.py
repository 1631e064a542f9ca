"""Repeated K-fold partitions with deterministic per-repetition substreams."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._seeds import substream
from .errors import ValidationError


@dataclass(frozen=True)
class FoldScheme:
    """A repeated partition of {0..n-1} into K test folds.

    ``assignments[rep][fold]`` holds the sorted test indices of one fold.
    ``no_split`` marks the degenerate diagnostics scheme where the single
    fold is both train and test set.
    """

    n: int
    k: int
    n_rep: int
    assignments: tuple
    seed: int | None = None
    no_split: bool = field(default=False)

    def test_indices(self, rep: int, fold: int) -> np.ndarray:
        self._check_coords(rep, fold)
        return self.assignments[rep][fold]

    def train_indices(self, rep: int, fold: int) -> np.ndarray:
        """Complement of the test fold, ascending (the full index set when
        the scheme is a no-split diagnostics scheme)."""
        self._check_coords(rep, fold)
        if self.no_split:
            return np.arange(self.n)
        mask = np.ones(self.n, dtype=bool)
        mask[self.assignments[rep][fold]] = False
        return np.flatnonzero(mask)

    def _check_coords(self, rep, fold):
        if not 0 <= rep < self.n_rep:
            raise ValidationError(f"repetition {rep} out of range [0, {self.n_rep})")
        if not 0 <= fold < self.k:
            raise ValidationError(f"fold {fold} out of range [0, {self.k})")

    def to_json(self) -> str:
        folds = [[fold.tolist() for fold in rep] for rep in self.assignments]
        return json.dumps({"n": self.n, "k": self.k, "folds": folds})


def _balanced_sizes(n: int, k: int) -> list[int]:
    base, rem = divmod(n, k)
    return [base + (1 if f < rem else 0) for f in range(k)]


def make_folds(n: int, k: int, n_rep: int = 1, seed: int = 0,
               stratify_on=None) -> FoldScheme:
    """Draw ``n_rep`` independent uniform K-fold partitions of n indices.

    Repetition r uses a substream derived from ``seed`` and r, so growing
    ``n_rep`` never changes earlier repetitions.  Fold sizes differ by at
    most one.  ``stratify_on`` (a binary vector) balances both classes
    across test folds; useful to avoid empty treatment cells in small
    samples of binary-treatment models.
    """
    if k < 2:
        raise ValidationError(f"need at least 2 folds, got k={k}")
    if k > n:
        raise ValidationError(f"cannot split {n} observations into {k} folds")
    if n_rep < 1:
        raise ValidationError(f"need at least 1 repetition, got {n_rep}")
    if stratify_on is not None:
        stratify_on = np.asarray(stratify_on, dtype=np.float64).reshape(-1)
        if stratify_on.shape[0] != n:
            raise ValidationError("stratification vector length differs from n")
        if not np.all((stratify_on == 0.0) | (stratify_on == 1.0)):
            raise ValidationError("stratification requires a binary vector")

    reps = []
    for rep in range(n_rep):
        rng = np.random.default_rng(substream(seed, rep))
        if stratify_on is None:
            perm = rng.permutation(n)
            sizes = _balanced_sizes(n, k)
            folds, start = [], 0
            for size in sizes:
                folds.append(np.sort(perm[start:start + size]))
                start += size
        else:
            folds = _stratified_rep(rng, stratify_on, k)
        reps.append(tuple(folds))
    return FoldScheme(n=n, k=k, n_rep=n_rep, assignments=tuple(reps), seed=seed)


def _stratified_rep(rng, strata, k):
    # Distribute each class's remainder to different folds so total fold
    # sizes still differ by at most one.
    idx0 = np.flatnonzero(strata == 0.0)
    idx1 = np.flatnonzero(strata == 1.0)
    perm0 = rng.permutation(idx0)
    perm1 = rng.permutation(idx1)
    base0, r0 = divmod(len(idx0), k)
    base1, r1 = divmod(len(idx1), k)
    sizes0 = [base0 + (1 if f < r0 else 0) for f in range(k)]
    extra1 = [0] * k
    for t in range(r1):
        extra1[(r0 + t) % k] += 1
    sizes1 = [base1 + extra1[f] for f in range(k)]
    folds, s0, s1 = [], 0, 0
    for f in range(k):
        part = np.concatenate([perm0[s0:s0 + sizes0[f]], perm1[s1:s1 + sizes1[f]]])
        s0 += sizes0[f]
        s1 += sizes1[f]
        folds.append(np.sort(part))
    return folds


def external_folds(assignments: Sequence[Sequence[Sequence[int]]],
                   n: int | None = None) -> FoldScheme:
    """Validate user-supplied fold assignments and wrap them as a scheme.

    ``assignments`` is a list of repetitions, each a list of test-index
    folds.  Overlaps, gaps and empty folds are rejected with the
    offending indices named.
    """
    if not assignments:
        raise ValidationError("no repetitions supplied")
    reps = []
    k = None
    for r, rep in enumerate(assignments):
        folds = [np.asarray(sorted(fold), dtype=np.int64) for fold in rep]
        if any(f.size == 0 for f in folds):
            empty = [i for i, f in enumerate(folds) if f.size == 0]
            raise ValidationError(f"repetition {r}: empty fold(s) {empty}")
        if k is None:
            k = len(folds)
        elif len(folds) != k:
            raise ValidationError(
                f"repetition {r} has {len(folds)} folds, expected {k}")
        flat = np.concatenate(folds)
        if n is None:
            n = int(flat.max()) + 1
        counts = np.bincount(flat, minlength=n) if flat.min() >= 0 else None
        if counts is None or flat.max() >= n:
            raise ValidationError(f"repetition {r}: indices outside [0, {n})")
        dup = np.flatnonzero(counts > 1)
        if dup.size:
            raise ValidationError(
                f"repetition {r}: index {int(dup[0])} appears in more than one fold")
        gap = np.flatnonzero(counts == 0)
        if gap.size:
            raise ValidationError(
                f"repetition {r}: index {int(gap[0])} missing from all folds")
        reps.append(tuple(folds))
    if k < 2:
        raise ValidationError(f"need at least 2 folds, got k={k}")
    return FoldScheme(n=n, k=k, n_rep=len(reps), assignments=tuple(reps), seed=None)


def folds_from_json(text: str) -> FoldScheme:
    """Parse ``{"n":..,"k":..,"folds":[[[..],..],..]}`` (outer list =
    repetitions) into a validated scheme."""
    payload = json.loads(text)
    for key in ("n", "k", "folds"):
        if key not in payload:
            raise ValidationError(f"fold JSON missing key '{key}'")
    scheme = external_folds(payload["folds"], n=int(payload["n"]))
    if scheme.k != int(payload["k"]):
        raise ValidationError(
            f"fold JSON declares k={payload['k']} but contains {scheme.k} folds")
    return scheme


def no_split_scheme(n: int, n_rep: int = 1) -> FoldScheme:
    """Single-fold scheme where train = test = all indices.

    Diagnostics only: estimates computed with it carry the overfitting
    bias that cross-fitting exists to remove.
    """
    if n < 2:
        raise ValidationError(f"need at least 2 observations, got {n}")
    everything = np.arange(n)
    reps = tuple((everything,) for _ in range(max(1, n_rep)))
    return FoldScheme(n=n, k=1, n_rep=max(1, n_rep), assignments=reps,
                      seed=None, no_split=True)
