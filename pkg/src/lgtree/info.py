"""Information measures on latent Gaussian trees.

Three kinds of quantities live here:

* closed-form Gaussian mutual information between the observed block and
  the hidden block, either from three determinants or, for leaf-observed
  trees, from the observed covariance alone via triple ratios;
* Monte Carlo estimates for the mixture model in which each hidden node's
  sign is an independent +/-1 Bernoulli input: the sign-marginal MI, the
  sign MI conditioned on the Gaussian inputs, and the Gaussian-input MI;
* a grid search for the sign bias that maximises the conditional sign MI.

All values are in nats.  Mixture log densities are evaluated with exact
enumeration over the 2^k sign vectors and log-sum-exp accumulation.  The
inner mixtures are pi-weighted: the conditional density given the Gaussian
inputs is approximated by sum_b pi(b) p(x | y, b), the prior-weighted
average rather than the sign-posterior one.  The two coincide whenever the
sign posterior given the inputs is flat (in particular for a single hidden
node), the chain identity with the fixed total holds for either choice,
and the pi-weighted form is what makes the conditional sign MI split
exactly across leaf groups.  Every estimator is deterministic given
(seed, samples) and evaluates in fixed vectorised sample batches.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    IllConditioned,
    InconsistentCovariance,
    MissingAssignment,
    NotLeafOnly,
    TooManyHidden,
    ValidationError,
    WrongShape,
)
from .trees import (
    GaussianTree,
    PD_EIG_FLOOR,
    TRIPLE_RTOL,
    joint_covariance,
    squared_gain_ratios,
)

CLOSED_FORM = "closed_form"
DIRECT_GAUSSIAN = "direct_gaussian"
MONTE_CARLO = "monte_carlo"

MIXTURE_ENUM_CAP = 12   # exact mixtures enumerate 2^k sign vectors
MIN_MC_SAMPLES = 1000   # below this the error bars are not worth reporting


@dataclass(frozen=True)
class MIResult:
    value: float
    std_error: float
    method: str
    samples_used: int

    def as_dict(self) -> dict:
        return {
            "value_nats": self.value,
            "std_error": self.std_error,
            "method": self.method,
            "samples": self.samples_used,
        }


@dataclass(frozen=True)
class BernoulliParams:
    """Probability that each hidden node's sign input is +1."""

    probs: tuple[tuple[str, float], ...]

    @staticmethod
    def make(mapping) -> "BernoulliParams":
        items = tuple(
            (str(h), min(1.0, max(0.0, float(p)))) for h, p in dict(mapping).items()
        )
        return BernoulliParams(items)

    @staticmethod
    def uniform(tree: GaussianTree, p: float = 0.5) -> "BernoulliParams":
        return BernoulliParams.make({h: p for h in tree.hidden})

    def as_dict(self) -> dict[str, float]:
        return dict(self.probs)

    def vector_for(self, nodes) -> np.ndarray:
        table = self.as_dict()
        missing = [n for n in nodes if n not in table]
        if missing:
            raise MissingAssignment(f"no sign bias for hidden node(s) {missing}")
        return np.array([table[n] for n in nodes], dtype=float)


def _require_samples(samples: int):
    if samples < MIN_MC_SAMPLES:
        raise ValidationError(
            f"field 'samples' must be at least {MIN_MC_SAMPLES}, got {samples}"
        )


def _result(values: np.ndarray, method: str = MONTE_CARLO) -> MIResult:
    m = values.size
    se = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return MIResult(float(values.mean()), se, method, m)


def _chol(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise IllConditioned(f"{what} is not numerically positive definite")


class _Gauss:
    """Zero-mean multivariate normal with cached factorizations."""

    def __init__(self, cov: np.ndarray, what: str):
        self.cov = np.asarray(cov, dtype=float)
        self.chol = _chol(self.cov, what)
        self.inv_chol = solve_triangular(
            self.chol, np.eye(len(self.cov)), lower=True, check_finite=False
        )
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self._const = -0.5 * (self.logdet + len(self.cov) * math.log(2.0 * math.pi))

    def logpdf(self, z: np.ndarray) -> np.ndarray:
        w = z @ self.inv_chol.T
        return -0.5 * np.einsum("ij,ij->i", w, w) + self._const


class _BlockModel:
    """Gaussian regression of a target node block on a source node block.

    Built from the marginal path-product covariance over the union; the
    sign flips of the source nodes enter as a diagonal +/-1 conjugation of
    the cross block, so the regression gain for flips b is G0 @ diag(b).
    """

    def __init__(self, tree: GaussianTree, targets, sources):
        self.targets = tuple(targets)
        self.sources = tuple(sources)
        cov = joint_covariance(tree).joint
        t_idx = [tree.node_order[v] for v in self.targets]
        s_idx = [tree.node_order[v] for v in self.sources]
        self.sigma_t = cov[np.ix_(t_idx, t_idx)]
        self.sigma_s = cov[np.ix_(s_idx, s_idx)]
        self.cross = cov[np.ix_(t_idx, s_idx)]
        self.marg_t = _Gauss(self.sigma_t, "target covariance")
        self.marg_s = _Gauss(self.sigma_s, "source covariance")
        self.gain = np.linalg.solve(self.sigma_s, self.cross.T).T
        resid = self.sigma_t - self.gain @ self.cross.T
        resid = (resid + resid.T) / 2.0
        if np.min(np.linalg.eigvalsh(resid)) <= PD_EIG_FLOOR:
            raise IllConditioned("conditional covariance of the target block is singular")
        self.noise = _Gauss(resid, "conditional covariance")

    @property
    def chol_t(self) -> np.ndarray:
        return self.marg_t.chol

    @property
    def chol_s(self) -> np.ndarray:
        return self.marg_s.chol

    @property
    def chol_w(self) -> np.ndarray:
        return self.noise.chol

    @property
    def resid(self) -> np.ndarray:
        return self.noise.cov

    def gaussian_mi(self) -> float:
        """MI between the blocks with signs held fixed (they drop out)."""
        sign_t, ld_t = np.linalg.slogdet(self.sigma_t)
        sign_s, ld_s = np.linalg.slogdet(self.sigma_s)
        joint = np.block([[self.sigma_t, self.cross], [self.cross.T, self.sigma_s]])
        sign_j, ld_j = np.linalg.slogdet(joint)
        if min(sign_t, sign_s, sign_j) <= 0:
            raise IllConditioned("block covariances are not positive definite")
        return 0.5 * (ld_t + ld_s - ld_j)


def _enumerate_signs(count: int) -> np.ndarray:
    if count > MIXTURE_ENUM_CAP:
        raise TooManyHidden(
            f"mixture enumeration over {count} sign inputs exceeds the cap of "
            f"{MIXTURE_ENUM_CAP}"
        )
    return np.array(list(itertools.product((1.0, -1.0), repeat=count)))


def _log_prior(signs: np.ndarray, p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lp = np.where(signs > 0, np.log(p), np.log1p(-p))
    return lp.sum(axis=1)


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(tags)))


SAMPLE_BATCH = 8192  # keeps the per-batch working set inside the CPU cache


class _MixtureSamples:
    """A deterministic draw from the joint (signs, sources, targets) model,
    with the per-sample log densities needed by the MI estimators.

    Draws and density evaluations run in fixed batches of SAMPLE_BATCH
    samples off one generator stream; the batch plan is part of the
    reported estimator contract.
    """

    def __init__(self, model: _BlockModel, pi: BernoulliParams, samples: int, rng):
        if samples < 1:
            raise ValueError("samples must be >= 1")
        p = pi.vector_for(model.sources)
        ks = len(model.sources)
        nt = len(model.targets)
        enum = _enumerate_signs(ks)
        log_prior = _log_prior(enum, p)
        gw = (model.noise.inv_chol @ model.gain).T        # (ks, nt) whitened gain

        parts: dict[str, list[np.ndarray]] = {k: [] for k in
                                              ("b", "y", "x", "cond", "pred", "marg")}
        for start in range(0, samples, SAMPLE_BATCH):
            m = min(SAMPLE_BATCH, samples - start)
            b = np.where(rng.random((m, ks)) < p, 1.0, -1.0)
            y = b * (rng.standard_normal((m, ks)) @ model.chol_s.T)
            noise = rng.standard_normal((m, nt)) @ model.chol_w.T
            x = (b * y) @ model.gain.T + noise

            # the numerator and every mixture component share one whitened
            # expression, so a collapsed mixture cancels bit-exactly
            xw = x @ model.noise.inv_chol.T               # whitened target part
            dw = xw - (b * y) @ gw
            log_cond = -0.5 * np.einsum("ij,ij->i", dw, dw) + model.noise._const
            lse_pred = np.full(m, -np.inf)
            chunk = max(1, int(2**20 // max(m * nt, 1)))
            for estart in range(0, len(enum), chunk):
                rows = enum[estart:estart + chunk]        # (E, ks)
                lp = log_prior[estart:estart + chunk]
                ym = (y[:, None, :] * rows[None, :, :]).reshape(-1, ks)
                diff = xw[:, None, :] - (ym @ gw).reshape(m, len(rows), nt)
                flat = diff.reshape(-1, nt)
                quad = np.einsum("ij,ij->i", flat, flat).reshape(m, -1)
                comp = -0.5 * quad + model.noise._const + lp[None, :]
                mx = comp.max(axis=1)
                with np.errstate(invalid="ignore"):
                    lse = mx + np.log(np.exp(comp - mx[:, None]).sum(axis=1))
                lse_pred = np.logaddexp(lse_pred, lse)

            parts["b"].append(b)
            parts["y"].append(y)
            parts["x"].append(x)
            parts["cond"].append(log_cond)
            parts["pred"].append(lse_pred)
            parts["marg"].append(model.marg_t.logpdf(x))

        self.model = model
        self.b = np.concatenate(parts["b"])
        self.y = np.concatenate(parts["y"])
        self.x = np.concatenate(parts["x"])
        self.log_cond = np.concatenate(parts["cond"])
        self.log_pred = np.concatenate(parts["pred"])   # log sum_b pi(b) p(x|y,b)
        self.log_marg = np.concatenate(parts["marg"])   # log p(x)
        self.enum = enum
        self.log_prior_enum = log_prior

    def sign_mi_given_sources(self) -> np.ndarray:
        return self.log_cond - self.log_pred

    def source_mi(self) -> np.ndarray:
        return self.log_pred - self.log_marg

    def total_mi(self) -> np.ndarray:
        return self.log_cond - self.log_marg


def mixture_mi_profile(
    tree: GaussianTree, pi: BernoulliParams, samples: int, seed: int
) -> dict[str, MIResult]:
    """Joint Monte Carlo estimates, from shared draws, of the Gaussian-input
    MI, the conditional sign MI, and their total (which has a fixed
    closed-form value)."""
    _require_samples(samples)
    model = _BlockModel(tree, tree.observed, tree.hidden)
    draw = _MixtureSamples(model, pi, samples, _rng(seed, 0))
    return {
        "inputs": _result(draw.source_mi()),
        "signs_given_inputs": _result(draw.sign_mi_given_sources()),
        "total": _result(draw.total_mi()),
    }


def mi_direct(tree: GaussianTree) -> MIResult:
    """MI between observed and hidden blocks from the three determinants."""
    if tree.k == 0:
        return MIResult(0.0, 0.0, DIRECT_GAUSSIAN, 0)
    model = _BlockModel(tree, tree.observed, tree.hidden)
    return MIResult(model.gaussian_mi(), 0.0, DIRECT_GAUSSIAN, 0)


def mi_closed_form(
    sigma_x: np.ndarray,
    structure: GaussianTree,
    rtol: float = TRIPLE_RTOL,
) -> MIResult:
    """MI between observed and hidden blocks from the observed covariance
    alone, for trees whose observed nodes are all leaves.

    For each observed node the squared correlation to its adjacent hidden
    node is a triple ratio of observed correlations; every valid witness
    triple must agree.  The structure argument supplies only the tree shape;
    its stored edge weights are never read.
    """
    sigma_x = np.asarray(sigma_x, dtype=float)
    hid = set(structure.hidden)
    for o in structure.observed:
        if len(structure.adjacency[o]) != 1:
            raise NotLeafOnly(f"observed node {o!r} is not a leaf")
        if structure.adjacency[o][0][0] not in hid:
            raise NotLeafOnly(f"observed node {o!r} has no adjacent hidden node")

    log_den = 0.0
    for o in structure.observed:
        h = structure.adjacency[o][0][0]
        ratios = squared_gain_ratios(sigma_x, structure, o, h)
        if not ratios:
            raise InconsistentCovariance(f"no witness triple for observed {o!r}")
        value = ratios[0]
        for r in ratios[1:]:
            if abs(r - value) > rtol * max(abs(value), 1e-30):
                raise InconsistentCovariance(
                    f"triple ratios for {o!r} disagree: {value!r} vs {r!r}"
                )
        if not (0.0 < value < 1.0):
            raise InconsistentCovariance(
                f"squared gain for {o!r} is {value!r}, outside (0, 1)"
            )
        log_den += math.log1p(-value)

    sign, logdet = np.linalg.slogdet(sigma_x)
    if sign <= 0:
        raise IllConditioned("observed covariance is not positive definite")
    return MIResult(0.5 * (logdet - log_den), 0.0, CLOSED_FORM, 0)


def mi_sign_marginal(
    tree: GaussianTree, pi: BernoulliParams, samples: int, seed: int
) -> MIResult:
    """Monte Carlo estimate of the MI between the observed vector and the
    sign vector.  Sign flips leave the observed covariance untouched, so
    every mixture component coincides and the estimate is exactly zero."""
    _require_samples(samples)
    p = pi.vector_for(tree.hidden)
    cov = joint_covariance(tree)
    marg = _Gauss(np.asarray(cov.observed_block), "observed covariance")
    rng = _rng(seed, 1)
    ks = tree.k
    b = np.where(rng.random((samples, ks)) < p, 1.0, -1.0)
    x = rng.standard_normal((samples, tree.n)) @ marg.chol.T

    enum = _enumerate_signs(ks)
    log_prior = _log_prior(enum, p)
    # observed-block conditional given any sign vector: identical by the
    # sign-equivalence property, so evaluate the density once
    lp_x = marg.logpdf(x)
    lse = np.full(samples, -np.inf)
    for lp in log_prior:
        if lp == -np.inf:
            continue
        lse = np.logaddexp(lse, lp + lp_x)
    values = lp_x - lse
    return _result(values)


def mi_sign_conditional(
    tree: GaussianTree, pi: BernoulliParams, samples: int, seed: int
) -> MIResult:
    """Monte Carlo estimate of the MI between the observed vector and the
    sign vector conditioned on the Gaussian inputs."""
    return mixture_mi_profile(tree, pi, samples, seed)["signs_given_inputs"]


def mi_inputs_mixture(
    tree: GaussianTree, pi: BernoulliParams, samples: int, seed: int
) -> MIResult:
    """Monte Carlo estimate of the MI between the observed vector and the
    Gaussian inputs when the signs are random."""
    return mixture_mi_profile(tree, pi, samples, seed)["inputs"]


def block_mi_fixed(tree: GaussianTree, targets, sources) -> MIResult:
    """Gaussian MI between two node blocks with signs held fixed."""
    model = _BlockModel(tree, targets, sources)
    return MIResult(model.gaussian_mi(), 0.0, DIRECT_GAUSSIAN, 0)


def block_mi_mixture(
    tree: GaussianTree, targets, sources, pi: BernoulliParams, samples: int, seed: int
) -> dict[str, MIResult]:
    """Mixture MI profile between arbitrary node blocks, with sign inputs on
    the source block only.  Used for the per-layer rate bounds."""
    _require_samples(samples)
    model = _BlockModel(tree, targets, sources)
    draw = _MixtureSamples(model, pi, samples, _rng(seed, 2))
    return {
        "inputs": _result(draw.source_mi()),
        "signs_given_inputs": _result(draw.sign_mi_given_sources()),
        "total": _result(draw.total_mi()),
    }


def _dumbbell_groups(tree: GaussianTree) -> tuple[str, str, tuple, tuple]:
    if tree.k != 2:
        raise WrongShape("decomposition check needs exactly two hidden nodes")
    h1, h2 = tree.hidden
    if tree.layer[h1] != 1 or tree.layer[h2] != 1:
        raise WrongShape("both hidden nodes must sit next to observed leaves")
    if not any({u, v} == {h1, h2} for u, v, _ in tree.spec.edges):
        raise WrongShape("the two hidden nodes must be adjacent")
    g1 = tuple(nbr for nbr, _ in tree.adjacency[h1] if nbr in tree.observed)
    g2 = tuple(nbr for nbr, _ in tree.adjacency[h2] if nbr in tree.observed)
    if len(g1) < 2 or len(g2) < 2:
        raise WrongShape("each hidden node needs at least two observed leaves")
    if set(g1) | set(g2) != set(tree.observed):
        raise WrongShape("every observed node must attach to one of the two hidden nodes")
    return h1, h2, g1, g2


def decomposition_check(
    tree: GaussianTree, pi: BernoulliParams, samples: int, seed: int
) -> tuple[MIResult, MIResult]:
    """Check the split of the conditional sign MI across the two leaf groups
    of a two-hidden-node tree.

    Returns (lhs, rhs): the full conditional sign MI and the sum of the two
    per-group conditional MIs, estimated from shared draws.
    """
    _require_samples(samples)
    h1, h2, g1, g2 = _dumbbell_groups(tree)
    model = _BlockModel(tree, tree.observed, tree.hidden)
    draw = _MixtureSamples(model, pi, samples, _rng(seed, 3))
    lhs = _result(draw.sign_mi_given_sources())

    obs_pos = {o: i for i, o in enumerate(tree.observed)}
    hid_pos = {h: i for i, h in enumerate(tree.hidden)}
    p_table = pi.as_dict()
    rhs_vals = np.zeros(samples)
    for h, group in ((h1, g1), (h2, g2)):
        cols = [obs_pos[o] for o in group]
        hcol = hid_pos[h]
        gains = np.array([tree.edge_rho(h, o) for o in group])
        sd = np.sqrt(1.0 - gains**2)
        xg = draw.x[:, cols]
        yh = draw.y[:, hcol]

        def group_logpdf(sign_vals: np.ndarray) -> np.ndarray:
            mean = (sign_vals * yh)[:, None] * gains[None, :]
            z = (xg - mean) / sd[None, :]
            return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(sd)) \
                - 0.5 * len(cols) * math.log(2.0 * math.pi)

        num = group_logpdf(draw.b[:, hcol])
        lse_pred = np.full(samples, -np.inf)
        p_h = p_table[h]
        for sign, prob in ((1.0, p_h), (-1.0, 1.0 - p_h)):
            if prob == 0.0:
                continue
            lp_xg = group_logpdf(np.full(samples, sign))
            lse_pred = np.logaddexp(lse_pred, math.log(prob) + lp_xg)
        rhs_vals += num - lse_pred
    rhs = _result(rhs_vals)
    return lhs, rhs


def optimize_pi(
    tree: GaussianTree,
    grid_step: float,
    samples: int,
    seed: int,
) -> tuple[BernoulliParams, list[tuple[tuple[float, ...], MIResult]]]:
    """Grid search for the sign bias maximising the conditional sign MI.

    Sweeps a shared grid for one hidden node, a per-node grid for two, and a
    symmetric (all-equal) sweep beyond that.  The objective is a Monte Carlo
    estimate, so the argmax is resolved to grid resolution only; each grid
    point uses its own derived substream of the master seed.
    """
    if not (0.0 < grid_step <= 0.25):
        raise ValueError("grid_step must lie in (0, 0.25]")
    steps = int(round(1.0 / grid_step))
    axis = [round(i * grid_step, 12) for i in range(steps + 1)]
    if axis[-1] != 1.0:
        axis.append(1.0)

    if tree.k == 2:
        grid = [(a, b) for a in axis for b in axis]
    else:
        grid = [(a,) * tree.k for a in axis]

    curve = []
    best_idx = 0
    for idx, point in enumerate(grid):
        pi = BernoulliParams.make(dict(zip(tree.hidden, point)))
        est = mixture_mi_profile(tree, pi, samples, _point_seed(seed, idx))[
            "signs_given_inputs"
        ]
        curve.append((point if tree.k == 2 else (point[0],), est))
        if est.value > curve[best_idx][1].value:
            best_idx = idx
    best_point = grid[best_idx]
    return BernoulliParams.make(dict(zip(tree.hidden, best_point))), curve


def _point_seed(seed: int, idx: int) -> int:
    # stable per-grid-point substream
    return int(np.random.SeedSequence((int(seed), 17, idx)).generate_state(1)[0])
