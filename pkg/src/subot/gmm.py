"""Diagonal-covariance Gaussian mixtures: k-means init, EM, BIC selection.

Source domains are fitted one mixture per class (components keep the class
label); target domains get a single mixture over all rows plus a hard
cluster assignment per row.  All fits are deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.special import logsumexp

from .errors import ClassTooSmall, KExceedsN
from .substructure import GaussianComponent, SubstructureSet

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

COV_FLOOR = 1e-6
EM_TOL = 1e-7
EM_MAX_ITER = 300
KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class MixtureModel:
    """A fitted diagonal-Gaussian mixture with its final log-likelihood.

    ``ll_trace`` holds the log-likelihood recorded at each EM iteration
    (evaluated at the parameters entering that iteration); the last entry
    equals ``log_likelihood``.  ``degenerate`` marks the all-rows-identical
    case where the requested component count collapsed to one.
    """

    components: tuple[GaussianComponent, ...]
    log_likelihood: float
    sample_count: int
    ll_trace: tuple[float, ...] = ()
    degenerate: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        weights = np.asarray([c.weight for c in self.components])
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"component weights sum to {weights.sum()}")
        if not np.isfinite(self.log_likelihood):
            raise ValueError("log_likelihood must be finite")

    @property
    def size(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def means(self) -> FloatArray:
        return np.stack([c.mean for c in self.components])

    def cov_diags(self) -> FloatArray:
        return np.stack([c.cov_diag for c in self.components])

    def weights(self) -> FloatArray:
        return np.asarray([c.weight for c in self.components])

    def to_dict(self) -> dict:
        """JSON-ready form, so fitted clusterings can be cached between runs."""
        return {
            "log_likelihood": self.log_likelihood,
            "sample_count": self.sample_count,
            "ll_trace": list(self.ll_trace),
            "degenerate": self.degenerate,
            "components": [
                {
                    "mean": c.mean.tolist(),
                    "cov_diag": c.cov_diag.tolist(),
                    "weight": c.weight,
                    "class_label": c.class_label,
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        comps = tuple(
            GaussianComponent(
                mean=np.asarray(c["mean"], dtype=np.float64),
                cov_diag=np.asarray(c["cov_diag"], dtype=np.float64),
                weight=float(c["weight"]),
                class_label=c.get("class_label"),
            )
            for c in doc["components"]
        )
        return cls(
            components=comps,
            log_likelihood=float(doc["log_likelihood"]),
            sample_count=int(doc["sample_count"]),
            ll_trace=tuple(doc.get("ll_trace", ())),
            degenerate=bool(doc.get("degenerate", False)),
        )


def free_parameter_count(model: MixtureModel) -> int:
    """Free parameters of a diagonal mixture: k*(2d) + k - 1."""
    k = model.size
    return k * 2 * model.dim + k - 1


def compute_bic(model: MixtureModel) -> float:
    """-2 ln L + k_free * ln(m); smaller is better."""
    return -2.0 * model.log_likelihood + free_parameter_count(model) * np.log(
        model.sample_count
    )


def _child_seed(*parts: int) -> int:
    """Deterministic derived seed for a named sub-stream."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def kmeans_init(
    data: FloatArray, k: int, rng_seed: int
) -> tuple[FloatArray, IntArray]:
    """k-means++ seeding followed by Lloyd iterations.

    Returns (centroids, hard assignment).  Deterministic per seed.  When the
    data has fewer than k distinct rows the centroids may coincide.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if k > n:
        raise KExceedsN(k, n)
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng_seed)

    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    closest = np.sum((data - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[j] = data[idx]
        closest = np.minimum(closest, np.sum((data - centers[j]) ** 2, axis=1))

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        dists = (
            np.sum(data**2, axis=1)[:, None]
            - 2.0 * data @ centers.T
            + np.sum(centers**2, axis=1)[None, :]
        )
        new_assign = np.argmin(dists, axis=1).astype(np.int64)
        for j in range(k):
            members = data[new_assign == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
            else:
                # revive an empty cluster at the farthest point
                far = int(np.argmax(np.min(dists, axis=1)))
                centers[j] = data[far]
                new_assign[far] = j
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centers, assign


def _log_gaussian_prob(data: FloatArray, means: FloatArray, covs: FloatArray) -> FloatArray:
    """log N(x_i | mean_k, diag(cov_k)) for every (row, component) pair."""
    d = data.shape[1]
    log_det = np.sum(np.log(covs), axis=1)
    sq = (data[:, None, :] - means[None, :, :]) ** 2 / covs[None, :, :]
    maha = np.sum(sq, axis=2)
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det[None, :] + maha)


def _e_step(
    data: FloatArray, weights: FloatArray, means: FloatArray, covs: FloatArray
) -> tuple[FloatArray, float]:
    weighted = _log_gaussian_prob(data, means, covs) + np.log(weights)[None, :]
    norm = logsumexp(weighted, axis=1)
    resp = np.exp(weighted - norm[:, None])
    return resp, float(norm.sum())


def responsibilities(model: MixtureModel, data: FloatArray) -> FloatArray:
    """Posterior component probability of each data row under the model."""
    data = np.asarray(data, dtype=np.float64)
    resp, _ = _e_step(data, model.weights(), model.means(), model.cov_diags())
    return resp


def _assemble(
    weights: FloatArray,
    means: FloatArray,
    covs: FloatArray,
    ll: float,
    trace: list[float],
    n: int,
    degenerate: bool = False,
    class_label: int | None = None,
) -> MixtureModel:
    comps = tuple(
        GaussianComponent(
            mean=means[j], cov_diag=covs[j], weight=float(weights[j]), class_label=class_label
        )
        for j in range(means.shape[0])
    )
    return MixtureModel(
        components=comps,
        log_likelihood=ll,
        sample_count=n,
        ll_trace=tuple(trace),
        degenerate=degenerate,
    )


def em_fit(
    data: FloatArray,
    k: int,
    rng_seed: int,
    cov_floor: float = COV_FLOOR,
    tol: float = EM_TOL,
    max_iter: int = EM_MAX_ITER,
    class_label: int | None = None,
) -> MixtureModel:
    """EM for a k-component diagonal mixture, initialized from k-means.

    Stops when the relative log-likelihood change drops below ``tol`` or at
    ``max_iter`` iterations; every covariance entry is floored at
    ``cov_floor`` after each M step.
    """
    data = np.asarray(data, dtype=np.float64)
    n, d = data.shape
    if k > n:
        raise KExceedsN(k, n)

    if k > 1 and np.all(data == data[0]):
        covs = np.full((1, d), cov_floor)
        means = data[:1].copy()
        weights = np.ones(1)
        _, ll = _e_step(data, weights, means, covs)
        return _assemble(
            weights, means, covs, ll, [ll], n, degenerate=True, class_label=class_label
        )

    centers, assign = kmeans_init(data, k, rng_seed)
    means = centers.copy()
    weights = np.bincount(assign, minlength=k).astype(np.float64) / n
    weights = np.maximum(weights, 1e-12)
    weights /= weights.sum()
    covs = np.empty((k, d))
    for j in range(k):
        members = data[assign == j]
        covs[j] = members.var(axis=0) if members.shape[0] > 0 else data.var(axis=0)
    covs = np.maximum(covs, cov_floor)

    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        resp, ll = _e_step(data, weights, means, covs)
        trace.append(ll)
        if np.isfinite(prev_ll):
            denom = max(abs(prev_ll), 1e-12)
            if abs(ll - prev_ll) / denom < tol:
                break
        prev_ll = ll

        nk = resp.sum(axis=0) + 10.0 * np.finfo(np.float64).eps
        weights = nk / nk.sum()
        means = (resp.T @ data) / nk[:, None]
        diff_sq = (data[:, None, :] - means[None, :, :]) ** 2
        covs = np.einsum("nk,nkd->kd", resp, diff_sq) / nk[:, None]
        covs = np.maximum(covs, cov_floor)

    _, final_ll = _e_step(data, weights, means, covs)
    trace.append(final_ll)
    return _assemble(weights, means, covs, final_ll, trace, n, class_label=class_label)


def _best_of_restarts(
    data: FloatArray, k: int, restarts: int, seed_parts: tuple[int, ...],
    class_label: int | None = None,
) -> MixtureModel:
    best = None
    for r in range(restarts):
        model = em_fit(
            data, k, _child_seed(*seed_parts, r), class_label=class_label
        )
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    assert best is not None
    return best


def fit_source_substructures(
    source,
    k_range: tuple[int, int] = (1, 8),
    restarts: int = 5,
    rng_seed: int = 0,
) -> SubstructureSet:
    """Per-class mixtures with BIC-selected component counts.

    Each class is fitted separately for every K in ``k_range`` (best of
    ``restarts`` seeds per K, by likelihood) and the K minimizing BIC wins.
    The component class labels are inherited from the classes they were
    fitted on, so components of different classes never merge.  Masses start
    uniform; the weighting step overwrites them.
    """
    if source.labels is None:
        raise ValueError("source domain must be labeled")
    k_lo, k_hi = k_range
    if k_lo < 1 or k_hi < k_lo:
        raise ValueError(f"bad k_range {k_range}")

    components: list[GaussianComponent] = []
    for c in range(source.class_count):
        rows = source.features[source.labels == c]
        n_c = rows.shape[0]
        if n_c < k_lo:
            raise ClassTooSmall(c, n_c, k_lo)
        best_model = None
        best_bic = np.inf
        for k in range(k_lo, min(k_hi, n_c) + 1):
            model = _best_of_restarts(rows, k, restarts, (rng_seed, 0, c, k), class_label=c)
            bic = compute_bic(model)
            if bic < best_bic:
                best_bic = bic
                best_model = model
        assert best_model is not None
        components.extend(best_model.components)

    k_s = len(components)
    return SubstructureSet(
        components=tuple(components),
        masses=np.full(k_s, 1.0 / k_s),
        domain_tag="source",
    )


def fit_target_substructures(
    target, k_t: int, restarts: int = 5, rng_seed: int = 0
) -> tuple[SubstructureSet, IntArray]:
    """One mixture over the whole target domain plus hard row assignments.

    Assignment is the argmax responsibility, ties to the lowest component
    index.  Masses are fixed uniform at 1/k_t.
    """
    model = _best_of_restarts(target.features, k_t, restarts, (rng_seed, 1, 0, k_t))
    resp = responsibilities(model, target.features)
    assign = np.argmax(resp, axis=1).astype(np.int64)
    subs = SubstructureSet(
        components=model.components,
        masses=np.full(model.size, 1.0 / model.size),
        domain_tag="target",
    )
    return subs, assign


def suggest_target_k(
    target, k_range: tuple[int, int] = (1, 8), restarts: int = 5, rng_seed: int = 0
) -> int:
    """BIC-minimizing component count for the target domain over k_range."""
    k_lo, k_hi = k_range
    if k_lo < 1 or k_hi < k_lo:
        raise ValueError(f"bad k_range {k_range}")
    best_k, best_bic = k_lo, np.inf
    for k in range(k_lo, min(k_hi, target.n) + 1):
        model = _best_of_restarts(target.features, k, restarts, (rng_seed, 1, 0, k))
        bic = compute_bic(model)
        if bic < best_bic:
            best_k, best_bic = k, bic
    return best_k
