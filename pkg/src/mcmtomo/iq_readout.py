"""Synthetic single-shot IQ data, k-means classifiers, and leakage post-selection.

Leakage is phenomenological and lives outside the gate-set model: at the MCM
a qubit in ``|1>`` leaves the computational space with probability
``leak_prob``.  The no-leak branch evolves with Kraus operator
``diag(1, sqrt(1 - leak_prob))`` and then through the model's instrument; a
leaked shot produces points from the ``Leaked`` cloud at the MCM and, unless it
seeps back, at the terminal measurement too.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .experiments import FIDUCIALS, CircuitDataset
from .models import GateSetModel
from .pauli_algebra import MCM_LABEL, Circuit, ValidationError

__all__ = [
    "LEAKED",
    "IqConfig",
    "IqDataset",
    "Classifier",
    "ClassifierError",
    "simulate_iq",
    "train_classifier",
    "calibration_points",
    "counts_from_iq",
    "postselect",
    "RemovalStats",
]

LEAKED = "Leaked"
_LATENTS = ("0", "1", LEAKED)


class ClassifierError(RuntimeError):
    """Clustering did not produce the requested number of distinct clusters."""


@dataclass(frozen=True)
class IqConfig:
    centroids: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {"0": (-1.0, 0.0), "1": (1.0, 0.0), LEAKED: (-0.3, 1.0)}
    )
    sigma: float | Mapping[str, float] = 0.15
    leak_prob: float = 0.0
    seepage: float = 0.0

    def __post_init__(self) -> None:
        if set(self.centroids) != set(_LATENTS):
            raise ValidationError(f"IQ centroids needed for {_LATENTS}")
        sig = self.sigma_of
        if any(not (s > 0) for s in sig.values()):
            raise ValidationError("cloud widths must be positive")
        for name in ("leak_prob", "seepage"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")

    @property
    def sigma_of(self) -> dict[str, float]:
        if isinstance(self.sigma, Mapping):
            return {k: float(self.sigma[k]) for k in _LATENTS}
        return {k: float(self.sigma) for k in _LATENTS}

    def to_json(self) -> dict:
        return {
            "centroids": {k: list(v) for k, v in self.centroids.items()},
            "sigma": dict(self.sigma) if isinstance(self.sigma, Mapping) else self.sigma,
            "leak_prob": self.leak_prob,
            "seepage": self.seepage,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> IqConfig:
        kw = dict(obj)
        if "centroids" in kw:
            kw["centroids"] = {k: tuple(v) for k, v in kw["centroids"].items()}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ValidationError(f"bad IQ config: {exc}") from None


@dataclass(frozen=True, eq=False)
class IqDataset:
    """Per circuit: IQ points at the MCM (or ``None``) and at the terminal measurement."""

    circuits: tuple[Circuit, ...]
    mcm_points: tuple[np.ndarray | None, ...]
    terminal_points: tuple[np.ndarray, ...]
    latent_mcm: tuple[np.ndarray | None, ...]
    latent_terminal: tuple[np.ndarray, ...]
    shots_per_circuit: int
    seed: int | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["circuit_id", "shot_index", "stage", "I", "Q"])
        for cid, (m, t) in enumerate(zip(self.mcm_points, self.terminal_points)):
            for s in range(t.shape[0]):
                if m is not None:
                    w.writerow([cid, s, "mcm", f"{m[s, 0]:.9g}", f"{m[s, 1]:.9g}"])
                w.writerow([cid, s, "terminal", f"{t[s, 0]:.9g}", f"{t[s, 1]:.9g}"])
        return buf.getvalue()


def _categories(gs: GateSetModel, circ: Circuit, cfg: IqConfig):
    """Shot categories ``(mcm latent, terminal latent)`` and their probabilities."""
    body = circ.body
    if MCM_LABEL not in body:
        v = gs.rho
        for g in body:
            v = gs.gates[g] @ v
        p = gs.povm @ v
        return [(None, "0"), (None, "1")], p
    k = body.index(MCM_LABEL)
    v = gs.rho
    for g in body[:k]:
        v = gs.gates[g] @ v
    rho11 = (v[0] - v[3]) / math.sqrt(2)
    pl = cfg.leak_prob * max(rho11, 0.0)
    s = math.sqrt(1 - cfg.leak_prob)
    # transfer matrix of rho -> K rho K with K = diag(1, s)
    no_leak = np.array(
        [[(1 + s * s) / 2, 0, 0, (1 - s * s) / 2], [0, s, 0, 0], [0, 0, s, 0], [(1 - s * s) / 2, 0, 0, (1 + s * s) / 2]]
    )
    v = no_leak @ v
    cats, probs = [], []
    kick = None
    if gs.stark_phi:
        from .pauli_algebra import rz_ptm

        kick = rz_ptm(gs.stark_phi)
    for c in (0, 1):
        w = gs.mcm[c] @ v
        for g in body[k + 1 :]:
            w = gs.gates[g] @ w
            if kick is not None:
                w = kick @ w
        pt = gs.povm @ w
        for t in (0, 1):
            cats.append((str(c), str(t)))
            probs.append(pt[t])
    cats += [(LEAKED, LEAKED), (LEAKED, "1")]
    probs += [pl * (1 - cfg.seepage), pl * cfg.seepage]
    return cats, np.array(probs)


def simulate_iq(
    gs: GateSetModel, circuits: Sequence[Circuit], cfg: IqConfig, shots: int, seed: int
) -> IqDataset:
    if shots <= 0:
        raise ValidationError("shots must be positive")
    centroids = {k: np.asarray(v, dtype=float) for k, v in cfg.centroids.items()}
    sig = cfg.sigma_of
    streams = np.random.SeedSequence(int(seed)).spawn(len(circuits))
    mcm_pts, term_pts, lat_m, lat_t = [], [], [], []
    for circ, ss in zip(circuits, streams):
        rng = np.random.default_rng(ss)
        cats, probs = _categories(gs, circ, cfg)
        probs = np.clip(probs, 0, None)
        probs = probs / probs.sum()
        which = rng.choice(len(cats), size=shots, p=probs)
        lm = np.array([cats[i][0] for i in which], dtype=object)
        lt = np.array([cats[i][1] for i in which], dtype=object)

        def draw(labels):
            mu = np.array([centroids[x] for x in labels])
            sd = np.array([sig[x] for x in labels])[:, None]
            return mu + sd * rng.standard_normal((len(labels), 2))

        if circ.has_mcm:
            mcm_pts.append(draw(lm))
            lat_m.append(lm)
        else:
            mcm_pts.append(None)
            lat_m.append(None)
        term_pts.append(draw(lt))
        lat_t.append(lt)
    return IqDataset(tuple(circuits), tuple(mcm_pts), tuple(term_pts), tuple(lat_m), tuple(lat_t), shots, seed)


# ------------------------------------------------------------------ classifiers


@dataclass(frozen=True, eq=False)
class Classifier:
    centroids: dict[str, np.ndarray]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.centroids)

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        names = list(self.centroids)
        cents = np.array([self.centroids[n] for n in names])
        d = ((pts[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        return np.array(names, dtype=object)[np.argmin(d, axis=1)]

    def to_json(self) -> dict:
        return {"labels": list(self.centroids), "centroids": {k: v.tolist() for k, v in self.centroids.items()}}

    @classmethod
    def from_json(cls, obj: Mapping) -> Classifier:
        return cls({k: np.asarray(obj["centroids"][k], dtype=float) for k in obj["labels"]})


def train_classifier(
    points: np.ndarray,
    k: int,
    prepared: Sequence[str | None] | np.ndarray,
    seed: int = 0,
    n_init: int = 50,
    max_restarts: int = 3,
) -> Classifier:
    """k-means (k-means++ seeding) on IQ points; clusters named from known preparations.

    ``prepared`` gives the prepared state ("0", "1" or None) of each point.
    The cluster holding the largest share of "0"-prepared points is "0", the
    remaining cluster with the largest share of "1"-prepared points is "1",
    and a third cluster (``k == 3``) is "Leaked".
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    prep = np.asarray(prepared, dtype=object)
    if k not in (2, 3):
        raise ValidationError("classifier supports 2 or 3 outcomes")
    if pts.shape[0] < 10 * k:
        raise ValidationError(f"need at least {10 * k} points to train a {k}-outcome classifier")
    if prep.shape[0] != pts.shape[0]:
        raise ValidationError("one preparation label per point is required")
    if not (np.any(prep == "0") and np.any(prep == "1")):
        raise ValidationError("training data must include points with known 0 and 1 preparations")
    km = None
    for attempt in range(max_restarts):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, random_state=seed + attempt).fit(pts)
        sizes = np.bincount(km.labels_, minlength=k)
        distinct = len({tuple(np.round(c, 12)) for c in km.cluster_centers_})
        if sizes.min() > 0 and distinct == k:
            break
    else:
        raise ClassifierError("k-means produced empty or coincident clusters on every restart")
    remaining = list(range(k))
    names: dict[int, str] = {}
    for lab in ("0", "1"):
        share = [np.mean(km.labels_[prep == lab] == j) for j in remaining]
        j = remaining[int(np.argmax(share))]
        names[j] = lab
        remaining.remove(j)
    if remaining:
        names[remaining[0]] = LEAKED
    order = sorted(names, key=lambda j: _LATENTS.index(names[j]))
    return Classifier({names[j]: km.cluster_centers_[j].copy() for j in order})


def _prepared_state(circ: Circuit) -> str | None:
    """Computational state reaching the MCM for the fiducial-pair MCM circuits."""
    body = circ.body
    if MCM_LABEL not in body:
        return None
    pre = tuple(body[: body.index(MCM_LABEL)])
    if pre == FIDUCIALS[0]:
        return "0"
    if pre == ("Gx", "Gx"):
        return "1"
    return None


def calibration_points(iq: IqDataset) -> tuple[np.ndarray, np.ndarray]:
    """MCM-stage points from circuits that prepare ``|0>`` or ``|1>`` before the MCM."""
    pts, prep = [], []
    for circ, m in zip(iq.circuits, iq.mcm_points):
        state = _prepared_state(circ)
        if m is not None and state is not None:
            pts.append(m)
            prep += [state] * m.shape[0]
    if not pts:
        raise ValidationError("no calibration circuits (|0> or |1> before the MCM) in the IQ data")
    return np.vstack(pts), np.array(prep, dtype=object)


def _binary(labels: np.ndarray, clf: Classifier) -> np.ndarray:
    """Map labels to bits; ``Leaked`` goes to the nearer computational centroid."""
    out = np.where(labels == "1", "1", "0").astype(object)
    if LEAKED in clf.centroids:
        leak = clf.centroids[LEAKED]
        nearer = "0" if np.sum((leak - clf.centroids["0"]) ** 2) <= np.sum((leak - clf.centroids["1"]) ** 2) else "1"
        out[labels == LEAKED] = nearer
    return out


def counts_from_iq(iq: IqDataset, clf: Classifier) -> CircuitDataset:
    """Outcome counts from classified IQ points, keeping every shot."""
    counts = []
    for circ, m, t in zip(iq.circuits, iq.mcm_points, iq.terminal_points):
        bits_t = _binary(clf.assign(t), clf)
        keys = bits_t if m is None else _binary(clf.assign(m), clf) + bits_t
        vals, num = np.unique(keys.astype(str), return_counts=True)
        counts.append(dict(zip(vals.tolist(), num.tolist())))
    return CircuitDataset(iq.circuits, tuple(counts), iq.shots_per_circuit, iq.seed)


@dataclass(frozen=True)
class RemovalStats:
    removed: tuple[int, ...]
    fractions: tuple[float, ...]
    total_removed: int
    aggregate_fraction: float
    mcm_leaked_before: int
    mcm_leaked_after: int

    def to_json(self) -> dict:
        return {
            "removed": list(self.removed),
            "fractions": list(self.fractions),
            "total_removed": self.total_removed,
            "aggregate_fraction": self.aggregate_fraction,
            "mcm_leaked_before": self.mcm_leaked_before,
            "mcm_leaked_after": self.mcm_leaked_after,
        }


def postselect(iq: IqDataset, clf: Classifier) -> tuple[CircuitDataset, RemovalStats]:
    """Drop shots whose terminal point is classified ``Leaked``; count the rest."""
    if LEAKED not in clf.centroids:
        raise ValidationError("post-selection needs a three-outcome classifier")
    counts, removed, fracs = [], [], []
    before = after = 0
    for circ, m, t in zip(iq.circuits, iq.mcm_points, iq.terminal_points):
        lab_t = clf.assign(t)
        keep = lab_t != LEAKED
        removed.append(int((~keep).sum()))
        fracs.append(float((~keep).mean()))
        bits_t = _binary(lab_t[keep], clf)
        if m is None:
            keys = bits_t
        else:
            lab_m = clf.assign(m)
            before += int((lab_m == LEAKED).sum())
            after += int((lab_m[keep] == LEAKED).sum())
            keys = _binary(lab_m[keep], clf) + bits_t
        vals, num = np.unique(keys.astype(str), return_counts=True)
        counts.append(dict(zip(vals.tolist(), num.tolist())))
    total = int(sum(removed))
    n_all = iq.shots_per_circuit * len(iq.circuits)
    stats = RemovalStats(tuple(removed), tuple(fracs), total, total / n_all, before, after)
    return CircuitDataset(iq.circuits, tuple(counts), iq.shots_per_circuit, iq.seed), stats
