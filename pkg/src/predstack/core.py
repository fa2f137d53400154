"""Shared data model: per-model draw matrices, manifests and weight vectors.

Everything downstream works on pointwise log-likelihoods, so the only
things validated here are shapes, finiteness and the simplex constraints
on probability vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SIMPLEX_TOL = 1e-8


class ManifestError(ValueError):
    """Raised when a manifest or one of its matrices fails validation."""


class MissingPredMean(ManifestError):
    """A model lacks the per-draw predictive-mean matrix."""


class MissingLogMarginal(ManifestError):
    """One or more models lack ``log_marginal`` (needed for BMA)."""

    def __init__(self, model_ids: Sequence[str]):
        self.model_ids = list(model_ids)
        super().__init__(
            "log_marginal missing for model(s): " + ", ".join(self.model_ids)
        )


def _first_nonfinite(a: np.ndarray) -> Optional[tuple]:
    bad = np.argwhere(~np.isfinite(a))
    if bad.size == 0:
        return None
    return tuple(int(v) for v in bad[0])


@dataclass(frozen=True, eq=False)
class ModelDrawMatrix:
    """Pointwise log-likelihoods of one model over S posterior draws.

    ``loglik[s, i] = log p(y_i | theta^s, M_k)``; ``pred_mean[s, i]`` is the
    per-draw predictive mean ``E(y_i | theta^s, M_k)`` when supplied.
    """

    model_id: str
    loglik: np.ndarray
    pred_mean: Optional[np.ndarray] = None
    log_marginal: Optional[float] = None

    def __post_init__(self):
        ll = np.atleast_2d(np.asarray(self.loglik, dtype=float))
        if ll.ndim != 2:
            raise ManifestError(f"model {self.model_id!r}: loglik must be 2-D")
        object.__setattr__(self, "loglik", ll)
        if self.pred_mean is not None:
            pm = np.atleast_2d(np.asarray(self.pred_mean, dtype=float))
            object.__setattr__(self, "pred_mean", pm)
        if self.log_marginal is not None:
            object.__setattr__(self, "log_marginal", float(self.log_marginal))

    @property
    def S(self) -> int:
        return self.loglik.shape[0]

    @property
    def n(self) -> int:
        return self.loglik.shape[1]

    def check(self) -> None:
        if self.S < 1 or self.n < 1:
            raise ManifestError(f"model {self.model_id!r}: empty loglik matrix")
        bad = _first_nonfinite(self.loglik)
        if bad is not None:
            s, i = bad
            raise ManifestError(
                f"model {self.model_id!r}: non-finite loglik at draw s={s}, point i={i}"
            )
        if self.pred_mean is not None:
            if self.pred_mean.shape != self.loglik.shape:
                raise ManifestError(
                    f"model {self.model_id!r}: pred_mean shape {self.pred_mean.shape} "
                    f"!= loglik shape {self.loglik.shape}"
                )
            bad = _first_nonfinite(self.pred_mean)
            if bad is not None:
                s, i = bad
                raise ManifestError(
                    f"model {self.model_id!r}: non-finite pred_mean at draw s={s}, point i={i}"
                )
        if self.log_marginal is not None and not np.isfinite(self.log_marginal):
            raise ManifestError(f"model {self.model_id!r}: non-finite log_marginal")

    def __eq__(self, other):
        if not isinstance(other, ModelDrawMatrix):
            return NotImplemented
        if self.model_id != other.model_id or self.log_marginal != other.log_marginal:
            return False
        if not np.array_equal(self.loglik, other.loglik):
            return False
        if (self.pred_mean is None) != (other.pred_mean is None):
            return False
        return self.pred_mean is None or np.array_equal(self.pred_mean, other.pred_mean)


@dataclass(eq=False)
class Manifest:
    """An ordered list of models that share the same n data points."""

    models: list
    seed: int = 0
    prior_model_probs: Optional[np.ndarray] = None
    n: Optional[int] = None
    K: Optional[int] = None

    @property
    def model_ids(self) -> list:
        return [m.model_id for m in self.models]

    def loglik_stack(self) -> list:
        return [m.loglik for m in self.models]

    def prior(self) -> np.ndarray:
        if self.prior_model_probs is None:
            return np.full(len(self.models), 1.0 / len(self.models))
        return np.asarray(self.prior_model_probs, dtype=float)

    def log_marginals(self) -> np.ndarray:
        missing = [m.model_id for m in self.models if m.log_marginal is None]
        if missing:
            raise MissingLogMarginal(missing)
        return np.array([m.log_marginal for m in self.models])

    def __eq__(self, other):
        if not isinstance(other, Manifest):
            return NotImplemented
        if (self.seed, self.n, self.K) != (other.seed, other.n, other.K):
            return False
        if (self.prior_model_probs is None) != (other.prior_model_probs is None):
            return False
        if self.prior_model_probs is not None and not np.array_equal(
            self.prior_model_probs, other.prior_model_probs
        ):
            return False
        return self.models == other.models


def check_simplex(w, name: str = "weights", tol: float = SIMPLEX_TOL) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"{name} must sum to 1 (got {w.sum():.12g})")
    return w


def validate_manifest(manifest: Manifest) -> Manifest:
    """Check dimensions, finiteness and ids; fill in ``n`` and ``K``."""
    models = list(manifest.models)
    if not models:
        raise ManifestError("manifest has no models")
    seen = set()
    for m in models:
        if m.model_id in seen:
            raise ManifestError(f"duplicate model_id {m.model_id!r}")
        seen.add(m.model_id)
        m.check()
    ns = {m.model_id: m.n for m in models}
    n = models[0].n
    if any(v != n for v in ns.values()):
        raise ManifestError(f"dimension mismatch across models: n per model = {ns}")
    prior = manifest.prior_model_probs
    if prior is not None:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != (len(models),):
            raise ManifestError(
                f"prior_model_probs has length {prior.size}, expected {len(models)}"
            )
        try:
            check_simplex(prior, "prior_model_probs")
        except ValueError as exc:
            raise ManifestError(str(exc)) from None
    return Manifest(
        models=models,
        seed=int(manifest.seed),
        prior_model_probs=prior,
        n=n,
        K=len(models),
    )


@dataclass(frozen=True)
class WeightVector:
    """K nonnegative weights summing to one, ordered like the manifest."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", check_simplex(self.w))

    def __len__(self):
        return self.w.size

    def __getitem__(self, k):
        return self.w[k]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)


@dataclass
class ElpdSummary:
    total: float
    pointwise: np.ndarray
    se: float
    p_loo: float = float("nan")


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def read_matrix(path) -> np.ndarray:
    """Read a headerless comma-separated matrix of doubles."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"matrix file not found: {path}")
    try:
        a = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise ManifestError(f"cannot parse {path}: {exc}") from None
    if a.size == 0:
        raise ManifestError(f"empty matrix file: {path}")
    return a


def write_matrix(path, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_manifest(path) -> Manifest:
    """Parse a manifest JSON file; matrix paths resolve relative to it."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(spec, dict) or "models" not in spec:
        raise ManifestError("manifest must be an object with a 'models' list")
    base = path.parent
    models = []
    for entry in spec["models"]:
        try:
            mid = str(entry["id"])
            ll = read_matrix(base / entry["loglik"])
        except (KeyError, TypeError):
            raise ManifestError(f"model entry needs 'id' and 'loglik': {entry!r}") from None
        pm = read_matrix(base / entry["pred_mean"]) if entry.get("pred_mean") else None
        models.append(ModelDrawMatrix(mid, ll, pm, entry.get("log_marginal")))
    prior = spec.get("prior_model_probs")
    seed = spec.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ManifestError("seed must be a nonnegative integer")
    return validate_manifest(
        Manifest(models=models, seed=seed,
                 prior_model_probs=None if prior is None else np.asarray(prior, float))
    )


def save_manifest(manifest: Manifest, path) -> Path:
    """Write the manifest JSON plus one CSV per matrix next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, m in enumerate(manifest.models):
        entry = {"id": m.model_id, "loglik": f"{path.stem}_m{k}_loglik.csv"}
        write_matrix(path.parent / entry["loglik"], m.loglik)
        if m.pred_mean is not None:
            entry["pred_mean"] = f"{path.stem}_m{k}_pred_mean.csv"
            write_matrix(path.parent / entry["pred_mean"], m.pred_mean)
        if m.log_marginal is not None:
            entry["log_marginal"] = m.log_marginal
        entries.append(entry)
    doc = {"models": entries, "seed": int(manifest.seed)}
    if manifest.prior_model_probs is not None:
        doc["prior_model_probs"] = [float(v) for v in manifest.prior_model_probs]
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path
