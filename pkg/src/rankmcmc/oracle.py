"""Exact small-instance references: posteriors, transition kernels, spectra.

Everything here is independent of the samplers. The posterior over center
configurations is enumerated directly; the one-step kernel of the
data-augmentation chain on centers is built by integrating the two conditional
draws against each other; the group-action middle step and its local variant
are enumerated in closed form. Spectra come from an in-house cyclic Jacobi
solver applied to the reversibility symmetrization.

State ordering convention: center configurations are enumerated with the
first category varying slowest, so for two items and two categories the order
is (1,1), (1,2), (2,1), (2,2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.special import betainc, betaln, digamma, gammaln, polygamma

from .errors import NumericalError
from .model import CategoryPriors, HyperParams, RankCounts
from .permutation import GroupTables

__all__ = [
    "ExactPosterior",
    "enumerate_states",
    "enumerate_posterior",
    "log_marginal_likelihood",
    "log_marginal_likelihood_quadrature",
    "noise_marginal_pdf",
    "noise_marginal_cdf",
    "da_kernel_closed_form",
    "da_kernel",
    "group_move_kernel",
    "local_move_kernel",
    "uniform_action_kernel",
    "jacobi_eigh",
    "spectrum",
    "compare_spectra",
    "SpectraComparison",
    "exact_mean_log_noise",
    "observed_information_exact",
]

_STATE_CAP = 1_000_000


def enumerate_states(g: int, order: int, cap: int = _STATE_CAP) -> np.ndarray:
    """All center configurations as a (order**g, g) array of 1-based indices,
    first category varying slowest."""
    q = order ** g
    if q > cap:
        raise NumericalError(
            f"state space of size {order}**{g} = {q} exceeds the cap {cap}")
    flat = np.arange(q)
    cols = [(flat // order ** (g - 1 - j)) % order + 1 for j in range(g)]
    return np.stack(cols, axis=1).astype(np.int64)


def _category_contributions(data: RankCounts, tables: GroupTables) -> np.ndarray:
    """contrib[j, r-1] is the residual-tally vector category j adds when its
    center is r; precomputable because it never depends on the chain state."""
    contrib = np.zeros((data.g, data.order, data.order), dtype=np.int64)
    for j in range(data.g):
        row = data.counts[j]
        for i in np.nonzero(row)[0]:
            res = tables.residual_row(int(i) + 1)
            contrib[j, np.arange(data.order), res - 1] += row[i]
    return contrib


@dataclass(frozen=True)
class ExactPosterior:
    """Enumerated posterior over center configurations.

    ``states[s]`` is the 1-based center tuple of flat state s, ``probs[s]``
    its posterior mass, ``residual_matrix[s]`` its residual tally, and
    ``log_weights`` the unnormalized log masses (prior included).
    """

    states: np.ndarray
    probs: np.ndarray
    log_weights: np.ndarray
    residual_matrix: np.ndarray
    alpha: np.ndarray
    total: int

    @property
    def q(self) -> int:
        return self.states.shape[0]

    @property
    def g(self) -> int:
        return self.states.shape[1]

    @property
    def order(self) -> int:
        return self.alpha.size

    def flat_index(self, central) -> int:
        central = np.asarray(central, dtype=np.int64)
        idx = 0
        for j in range(self.g):
            idx = idx * self.order + (central[j] - 1)
        return int(idx)

    def category_marginal(self, j: int) -> np.ndarray:
        """Posterior pmf of category j's center (j is 1-based)."""
        out = np.zeros(self.order)
        np.add.at(out, self.states[:, j - 1] - 1, self.probs)
        return out


def enumerate_posterior(data: RankCounts, hyp: HyperParams,
                        priors: CategoryPriors, tables: GroupTables,
                        cap: int = _STATE_CAP) -> ExactPosterior:
    """Posterior over all center configurations by direct enumeration.

    Weights are log prior plus sum_k logGamma(m_k + alpha_k); normalization
    through a log-sum-exp so heavily peaked posteriors stay exact.
    """
    states = enumerate_states(data.g, data.order, cap=cap)
    q = states.shape[0]
    if q * data.order > 2 * 10 ** 8:
        raise NumericalError("instance too large to enumerate exactly")
    contrib = _category_contributions(data, tables)

    M = np.zeros((q, data.order), dtype=np.int64)
    logprior = np.zeros(q)
    for j in range(data.g):
        M += contrib[j, states[:, j] - 1]
        logprior += priors.log_rows[j, states[:, j] - 1]
    lw = logprior + gammaln(M + hyp.alpha).sum(axis=1)
    mx = lw.max()
    probs = np.exp(lw - mx)
    probs /= probs.sum()
    return ExactPosterior(states=states, probs=probs, log_weights=lw,
                          residual_matrix=M, alpha=np.asarray(hyp.alpha, float),
                          total=data.total)


def log_marginal_likelihood(data: RankCounts, hyp: HyperParams,
                            priors: CategoryPriors, tables: GroupTables) -> float:
    """Log normalizing constant of the posterior (collapsed over the
    perturbation pmf): log sum over center states of
    prior * Beta(m + alpha) / Beta(alpha)."""
    post = enumerate_posterior(data, hyp, priors, tables)
    lw = post.log_weights
    mx = lw.max()
    lse = mx + np.log(np.exp(lw - mx).sum())
    a = hyp.alpha
    return float(lse - gammaln(data.total + hyp.alpha0)
                 + gammaln(hyp.alpha0) - gammaln(a).sum())


def log_marginal_likelihood_quadrature(data: RankCounts, hyp: HyperParams,
                                       priors: CategoryPriors,
                                       tables: GroupTables) -> float:
    """Independent route for p = 2: one-dimensional integral of the observed
    likelihood mixture against the Dirichlet prior density."""
    if data.p != 2:
        raise NumericalError("quadrature route implemented for p = 2 only")
    post = enumerate_posterior(data, hyp, priors, tables)
    M = post.residual_matrix.astype(float)
    logprior = post.log_weights - gammaln(M + hyp.alpha).sum(axis=1)
    a1, a2 = hyp.alpha

    def integrand(x):
        lx, l1x = np.log(x), np.log1p(-x)
        terms = logprior + M[:, 0] * lx + M[:, 1] * l1x
        mx = terms.max()
        mix = mx + np.log(np.exp(terms - mx).sum())
        return np.exp(mix + (a1 - 1) * lx + (a2 - 1) * l1x
                      - betaln(a1, a2))

    val, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=300)
    return float(np.log(val))


def noise_marginal_pdf(x, k: int, post: ExactPosterior) -> np.ndarray:
    """Posterior density of perturbation-pmf component k: a mixture of Beta
    densities, one per center state."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ak = post.residual_matrix[:, k - 1] + post.alpha[k - 1]
    a0 = post.total + post.alpha.sum()
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    lx, l1x = np.log(xi), np.log1p(-xi)
    for s in range(post.q):
        if post.probs[s] == 0.0:
            continue
        lpdf = ((ak[s] - 1) * lx + (a0 - ak[s] - 1) * l1x
                - betaln(ak[s], a0 - ak[s]))
        out[inside] += post.probs[s] * np.exp(lpdf)
    return out


def noise_marginal_cdf(x, k: int, post: ExactPosterior) -> np.ndarray:
    """Posterior cdf of perturbation-pmf component k (Beta mixture)."""
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), 0.0, 1.0)
    ak = post.residual_matrix[:, k - 1] + post.alpha[k - 1]
    a0 = post.total + post.alpha.sum()
    out = np.zeros_like(x)
    for s in range(post.q):
        if post.probs[s] == 0.0:
            continue
        out += post.probs[s] * betainc(ak[s], a0 - ak[s], x)
    return out


# ---------------------------------------------------------------------------
# one-step kernels of the center chain


def da_kernel_closed_form(data: RankCounts, hyp: HyperParams) -> np.ndarray:
    """Two-item, two-category data-augmentation kernel via collapsed
    closed-form integrals.

    Entry (a, b) is 1/Beta(m1_a + alpha1, m2_a + alpha2) times the integral of
    r(x) x^{m1_a + m1_b + alpha1 - 1} (1-x)^{m2_a + m2_b + alpha2 - 1}, where
    r(x) is the reciprocal of the sum of the four state monomials built from
    the row sums, the diagonal sum and the off-diagonal sum of the 2x2 count
    table. Uniform center priors are assumed; this is the independent
    cross-check route for the general constructor.
    """
    if data.p != 2 or data.g != 2:
        raise NumericalError("closed form requires two items and two categories")
    a1, a2 = hyp.alpha
    n = data.counts  # n[j, i-1]
    n1dot = n[0, 0] + n[1, 0]
    n2dot = n[0, 1] + n[1, 1]
    nd = n[0, 0] + n[1, 1]
    nod = n[0, 1] + n[1, 0]
    mpairs = np.array([[n1dot, n2dot], [nd, nod], [nod, nd], [n2dot, n1dot]],
                      dtype=float)

    def log_r_inv(x):
        lx, l1x = np.log(x), np.log1p(-x)
        terms = mpairs[:, 0] * lx + mpairs[:, 1] * l1x
        mx = terms.max()
        return mx + np.log(np.exp(terms - mx).sum())

    K = np.empty((4, 4))
    for a in range(4):
        lpref = -betaln(mpairs[a, 0] + a1, mpairs[a, 1] + a2)
        for b in range(4):
            A = mpairs[a, 0] + mpairs[b, 0] + a1
            B = mpairs[a, 1] + mpairs[b, 1] + a2

            def f(x):
                return np.exp(lpref + (A - 1) * np.log(x)
                              + (B - 1) * np.log1p(-x) - log_r_inv(x))

            val, err = quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=300)
            if not np.isfinite(val):
                raise NumericalError("kernel integral did not converge")
            K[a, b] = val
    return K


def da_kernel(data: RankCounts, hyp: HyperParams, priors: CategoryPriors,
              tables: GroupTables, mc_draws: int = 1_000_000,
              seed: int = 0, cap: int = 36) -> np.ndarray:
    """One-step kernel of the center chain, K(a -> b) = integral of
    p(b | pmf, data) against p(pmf | a, data).

    For two items the integral is one-dimensional for any number of
    categories and is evaluated by adaptive quadrature to near machine
    precision. For three or more items no closed form exists (the
    per-category conditional normalizers depend on the pmf), so rows are
    estimated by Rao-Blackwellized Monte Carlo over i.i.d. conditional
    Dirichlet draws; accuracy then scales as mc_draws^{-1/2}.
    """
    q = data.order ** data.g
    if q > cap:
        raise NumericalError(f"state space {q} exceeds kernel cap {cap}")
    states = enumerate_states(data.g, data.order)
    contrib = _category_contributions(data, tables)
    M = np.zeros((q, data.order), dtype=np.int64)
    for j in range(data.g):
        M += contrib[j, states[:, j] - 1]
    alpha = np.asarray(hyp.alpha, dtype=float)

    if data.p == 2:
        return _da_kernel_quad_two_items(states, contrib, M, alpha,
                                         priors, data.g)
    return _da_kernel_monte_carlo(states, contrib, M, alpha, priors,
                                  data.g, mc_draws, seed)


def _da_kernel_quad_two_items(states, contrib, M, alpha, priors, g):
    q = states.shape[0]
    a1, a2 = alpha
    # per category j and candidate center r: exponents of (x, 1-x) in the
    # unnormalized conditional weight
    E = contrib.astype(float)  # (g, 2, 2): E[j, r-1] = exponent pair
    logprior = priors.log_rows

    def row_integrand_factory(a_idx):
        sh1 = M[a_idx, 0] + a1
        sh2 = M[a_idx, 1] + a2
        lpref = -betaln(sh1, sh2)

        def f(x):
            lx, l1x = np.log(x), np.log1p(-x)
            # per-category normalized log conditional over the 2 centers
            lw = E[:, :, 0] * lx + E[:, :, 1] * l1x + logprior  # (g, 2)
            mx = lw.max(axis=1, keepdims=True)
            lw = lw - (mx + np.log(np.exp(lw - mx).sum(axis=1, keepdims=True)))
            state_logp = np.zeros(q)
            for j in range(g):
                state_logp += lw[j, states[:, j] - 1]
            log_density = lpref + (sh1 - 1) * lx + (sh2 - 1) * l1x
            return np.exp(state_logp + log_density)

        return f

    K = np.empty((q, q))
    for a_idx in range(q):
        f = row_integrand_factory(a_idx)
        row, _ = quad_vec(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11)
        K[a_idx] = row
    return K


def _da_kernel_monte_carlo(states, contrib, M, alpha, priors, g,
                           mc_draws, seed):
    q, order = M.shape
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    logprior = priors.log_rows
    K = np.empty((q, q))
    chunk = 100_000
    for a_idx in range(q):
        shapes = M[a_idx] + alpha
        total = np.zeros(q)
        done = 0
        while done < mc_draws:
            s = min(chunk, mc_draws - done)
            gam = rng.gamma(shapes, size=(s, order))
            theta = gam / gam.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore"):
                logth = np.log(theta)
            state_logp = np.zeros((s, q))
            for j in range(g):
                lw = logth @ contrib[j].T.astype(float) + logprior[j]  # (s, order)
                mx = lw.max(axis=1, keepdims=True)
                lw = lw - (mx + np.log(np.exp(lw - mx).sum(axis=1, keepdims=True)))
                state_logp += lw[:, states[:, j] - 1]
            total += np.exp(state_logp).sum(axis=0)
            done += s
        K[a_idx] = total / mc_draws
    return K


def _orbit_images(states: np.ndarray, tables: GroupTables) -> np.ndarray:
    """img[s, sigma-1] = flat index of the state obtained by composing the
    group element sigma onto every category's center."""
    q, g = states.shape
    order = tables.order
    img = np.zeros((q, order), dtype=np.int64)
    for j in range(g):
        cols = np.empty((order, order), dtype=np.int64)
        for sigma in range(1, order + 1):
            cols[sigma - 1] = tables.compose_row(sigma)
        # cols[sigma-1, r-1] = index of sigma o r
        img = img * order + (cols[:, states[:, j] - 1].T - 1)
    return img


def group_move_kernel(post: ExactPosterior, tables: GroupTables,
                      accept: str = "metropolis") -> np.ndarray:
    """Explicit middle-step kernel of the sandwich chain.

    ``accept="metropolis"``: each group element is proposed with mass 1/p! and
    accepted by the posterior ratio, rejection mass on the diagonal. This is
    the literal sampler step; it is posterior-invariant but NOT idempotent.

    ``accept="exact"``: the shifted state is drawn from the posterior
    restricted to the orbit (the group-action move with the group's uniform
    measure folded in). This kernel is a projection: it is idempotent to
    machine precision, which is the premise the spectral-dominance statement
    carries for the middle step.
    """
    if accept not in ("metropolis", "exact"):
        raise ValueError("accept must be 'metropolis' or 'exact'")
    img = _orbit_images(post.states, tables)
    q = post.q
    order = tables.order
    R = np.zeros((q, q))
    probs = post.probs
    if accept == "metropolis":
        for s in range(q):
            ps = probs[s]
            for sigma in range(order):
                t = img[s, sigma]
                acc = 1.0 if ps == 0.0 else min(1.0, probs[t] / ps)
                R[s, t] += acc / order
                R[s, s] += (1.0 - acc) / order
    else:
        for s in range(q):
            w = probs[img[s]]
            tot = w.sum()
            w = np.full(order, 1.0 / order) if tot == 0.0 else w / tot
            np.add.at(R[s], img[s], w)
    return R


def uniform_action_kernel(post: ExactPosterior, tables: GroupTables) -> np.ndarray:
    """Raw proposal kernel of the middle step: compose a uniformly drawn group
    element, accept always. Uniform on the orbit from anywhere, hence
    idempotent; equals the metropolis kernel when the posterior is uniform."""
    img = _orbit_images(post.states, tables)
    q = post.q
    R = np.zeros((q, q))
    for s in range(q):
        np.add.at(R[s], img[s], 1.0 / tables.order)
    return R


def local_move_kernel(post: ExactPosterior, hyp: HyperParams,
                      tables: GroupTables) -> np.ndarray:
    """Explicit kernel of the local sandwich move: the composed element is
    drawn from the prior weights with the identity excluded, and the
    acceptance carries the proposal-ratio correction (which is 1 because an
    element and its inverse share a cycle count, hence a weight)."""
    wts = np.asarray(hyp.alpha, dtype=float).copy()
    wts[0] = 0.0
    if wts.sum() <= 0:
        raise NumericalError("local move needs positive non-identity weights")
    wts = wts / wts.sum()
    img = _orbit_images(post.states, tables)
    inv = tables.inverse_index
    q = post.q
    R = np.zeros((q, q))
    probs = post.probs
    for s in range(q):
        ps = probs[s]
        for sigma in range(1, tables.order):  # skip the identity (index 1)
            t = img[s, sigma]
            fwd = wts[sigma]
            back = wts[inv[sigma] - 1]
            if ps == 0.0:
                acc = 1.0
            else:
                acc = min(1.0, (probs[t] * back) / (ps * fwd)) if fwd > 0 else 0.0
            R[s, t] += fwd * acc
            R[s, s] += fwd * (1.0 - acc)
    return R


# ---------------------------------------------------------------------------
# spectra


def jacobi_eigh(S: np.ndarray, tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps zero out off-diagonal entries until their Frobenius norm drops
    below ``tol``. Returns eigenvalues in descending order and the matching
    eigenvector columns. Small dense symmetric problems only.
    """
    A = np.array(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(A - A.T)) > 1e-10 * max(1.0, np.max(np.abs(A))):
        raise ValueError("matrix must be symmetric")
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        # sum the off-diagonal part directly: subtracting the diagonal energy
        # from the total cancels catastrophically when eigenvalues are O(1)
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off < tol:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(A[i, j]) <= tol / (n * n):
                    continue
                tau = (A[j, j] - A[i, i]) / (2.0 * A[i, j])
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 \
                    else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rot_i, rot_j = A[i].copy(), A[j].copy()
                A[i] = c * rot_i - s * rot_j
                A[j] = s * rot_i + c * rot_j
                col_i, col_j = A[:, i].copy(), A[:, j].copy()
                A[:, i] = c * col_i - s * col_j
                A[:, j] = s * col_i + c * col_j
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
    else:
        raise NumericalError("Jacobi sweeps did not converge")
    vals = np.diag(A).copy()
    order = np.argsort(vals)[::-1]
    return vals[order], V[:, order]


def spectrum(K: np.ndarray, stationary: np.ndarray,
             reversibility_tol: float = 1e-8) -> np.ndarray:
    """Eigenvalues of a reversible transition matrix, descending.

    The kernel is symmetrized as D^{1/2} K D^{-1/2} with D the stationary
    weights; a reversibility residual above the tolerance raises.
    """
    pi = np.asarray(stationary, dtype=float)
    if np.any(pi <= 0):
        raise NumericalError("stationary vector must be strictly positive")
    flux = pi[:, None] * K
    if np.max(np.abs(flux - flux.T)) > reversibility_tol:
        raise NumericalError("kernel is not reversible against the supplied "
                             "stationary distribution")
    d = np.sqrt(pi)
    S = d[:, None] * K / d[None, :]
    S = 0.5 * (S + S.T)
    vals, _ = jacobi_eigh(S)
    return vals


@dataclass(frozen=True)
class SpectraComparison:
    da: np.ndarray
    sandwich: np.ndarray

    def dominated(self, tol: float = 1e-10) -> bool:
        return bool(np.all(self.sandwich <= self.da + tol))


def compare_spectra(K: np.ndarray, R: np.ndarray,
                    stationary: np.ndarray) -> SpectraComparison:
    """Spectra of the center chain K and of the sandwiched chain R K.

    R K itself need not be reversible, but with A and B the symmetrizations
    of K and R, its spectrum equals that of the symmetric product
    A^{1/2} B A^{1/2} (products XY and YX share nonzero spectra). Since the
    chain kernel is positive semidefinite and any reversible middle kernel
    satisfies B <= I, the sorted sandwich eigenvalues never exceed the sorted
    chain eigenvalues.
    """
    pi = np.asarray(stationary, dtype=float)
    if np.any(pi <= 0):
        raise NumericalError("stationary vector must be strictly positive")
    d = np.sqrt(pi)
    A = d[:, None] * K / d[None, :]
    A = 0.5 * (A + A.T)
    B = d[:, None] * R / d[None, :]
    B = 0.5 * (B + B.T)
    vals_a, vecs_a = jacobi_eigh(A)
    root = (vecs_a * np.sqrt(np.clip(vals_a, 0.0, None))) @ vecs_a.T
    Msym = root @ B @ root
    Msym = 0.5 * (Msym + Msym.T)
    vals_rk, _ = jacobi_eigh(Msym)
    return SpectraComparison(da=vals_a, sandwich=vals_rk)


# ---------------------------------------------------------------------------
# exact posterior log-noise moments and observed information


def exact_mean_log_noise(post: ExactPosterior) -> np.ndarray:
    """E[log pmf_k | data] for every component, via Dirichlet log-moments of
    each mixture member."""
    A = post.residual_matrix + post.alpha
    a0 = post.total + post.alpha.sum()
    elog = digamma(A) - digamma(a0)
    return post.probs @ elog


def observed_information_exact(precision: float, data: RankCounts,
                               priors: CategoryPriors, tables: GroupTables,
                               scale: float = 1.0) -> float:
    """Observed information for the precision, from exact posterior moments.

    Second derivative of the marginal log-likelihood in the precision; the
    chain rule through alpha_k = scale * exp(precision * cycles_k) attaches a
    cycle-count factor to every alpha derivative, including the two terms
    coming from logGamma(alpha_0).
    """
    hyp = HyperParams.from_precision(precision, tables, scale=scale)
    post = enumerate_posterior(data, hyp, priors, tables)
    h = tables.cycles.astype(float)
    a = np.asarray(hyp.alpha, dtype=float)
    a0 = a.sum()

    A = post.residual_matrix + a
    big_a0 = post.total + a0
    elog = digamma(A) - digamma(big_a0)          # (q, order)
    c = h * a
    ex_s = elog @ c
    var_s = (c ** 2) @ polygamma(1, A).T - (c.sum() ** 2) * polygamma(1, big_a0)
    w = post.probs
    ex = w @ ex_s
    var_x = w @ (var_s + ex_s ** 2) - ex ** 2
    elog_mix = w @ elog

    term1 = (h ** 2 * a) @ (elog_mix - polygamma(1, a) * a - digamma(a))
    term2 = polygamma(1, a0) * (h @ a) ** 2 + digamma(a0) * ((h ** 2) @ a)
    return float(-(term1 + term2 + var_x))
