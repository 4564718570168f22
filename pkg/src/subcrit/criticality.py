"""Criticality classification and Doob h-transforms.

The trichotomy for a perturbed form E_mu runs through the bottom of the
spectrum of the negative-part time change,

    lambda(mu) = inf { E(f,f) + sum mu+ f^2 : sum mu- f^2 = 1 },

computed as the smallest eigenvalue of the pencil built from the Schur
complement of (S + D+) onto the support of mu-.  The verdict is
subcritical, critical or supercritical according to lambda(mu) >, =, < 1.
The companion quantity gamma(mu), the bottom of the spectrum of the full
operator, satisfies lambda(mu) >= 1 iff gamma(mu) >= 0.

Subordinated operators are classified either through Green-form growth over
a family of growing spaces (finite-volume evidence with declared
extrapolation rules) or, for h-transformed heat kernels with known on-
diagonal decay t^-theta, through the potential-tail exponent of the
subordinator.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse import linalg as sla

from .lattice import _pencil_min_eig, schrodinger_matrix
from .spectral import (DENSE_BUDGET, OVERLAP_RTOL, decompose, green_form,
                       green_form_matvec, heat_apply, phi_of_operator,
                       subordinated_eigenvalues)

__all__ = [
    "SUBCRITICAL", "CRITICAL", "SUPERCRITICAL",
    "Classification", "HTransformReport",
    "bottom_of_spectrum", "classify_schrodinger", "superharmonic_h",
    "h_transform", "classify_subordinated", "asymptotic_criticality",
    "range_membership", "subcritical_window_gap",
]

SUBCRITICAL = "Subcritical"
CRITICAL = "Critical"
SUPERCRITICAL = "Supercritical"

#: default eigenvalue tolerance of the trichotomy on analytic instances
TRICHOTOMY_TOL = 1e-9

#: Green-form growth rules: converged means the last relative increment is
#: below INCREMENT_TOL and the fitted log-log slope is below SLOPE_TOL
INCREMENT_TOL = 1e-3
SLOPE_TOL = 0.02


@dataclass(frozen=True)
class Classification:
    """Trichotomy verdict with its numeric evidence."""

    verdict: str
    lambda_mu: Optional[float] = None
    gamma_mu: Optional[float] = None
    evidence: dict = field(default_factory=dict)

    def report_lines(self):
        lines = [f"verdict: {self.verdict}"]
        if self.lambda_mu is not None:
            lines.append(f"lambda(mu): {self.lambda_mu:.15g}")
        if self.gamma_mu is not None:
            lines.append(f"gamma(mu): {self.gamma_mu:.15g}")
        for key in sorted(self.evidence):
            lines.append(f"{key}: {self.evidence[key]}")
        return lines


def _lambda_mu_dense(bplus, minus_weights, support):
    B = bplus.toarray() if sparse.issparse(bplus) else np.asarray(bplus)
    B = 0.5 * (B + B.T)
    idx_b = np.flatnonzero(support)
    idx_a = np.flatnonzero(~support)
    if idx_a.size:
        Baa = B[np.ix_(idx_a, idx_a)]
        Bab = B[np.ix_(idx_a, idx_b)]
        Bbb = B[np.ix_(idx_b, idx_b)]
        schur = Bbb - Bab.T @ np.linalg.solve(Baa, Bab)
    else:
        schur = B
    schur = 0.5 * (schur + schur.T)
    w = minus_weights[idx_b]
    vals = eigh(schur, np.diag(w), eigvals_only=True, subset_by_index=[0, 0])
    return float(vals[0])


def _lambda_mu_sparse(bplus, minus_weights, support):
    """1 / largest eigenvalue of W^1/2 Bplus^-1 W^1/2 on the support."""
    lu = sla.splu(bplus.tocsc())
    idx = np.flatnonzero(support)
    sqw = np.sqrt(minus_weights[idx])
    n = bplus.shape[0]

    def matvec(x):
        full = np.zeros(n)
        full[idx] = sqw * x
        sol = lu.solve(full)
        return sqw * sol[idx]

    C = sla.LinearOperator((idx.size, idx.size), matvec=matvec,
                           dtype=float)
    if idx.size == 1:
        theta = float(matvec(np.ones(1))[0])
    else:
        theta = float(sla.eigsh(C, k=1, which="LA",
                                return_eigenvectors=False)[0])
    return 1.0 / theta


def bottom_of_spectrum(space, measure, dense_limit=DENSE_BUDGET,
                       want_gamma=True):
    """Compute (lambda(mu), gamma(mu)) for the perturbed form.

    lambda(mu) is +inf when mu- vanishes (the constraint is infeasible).
    Disconnected supports need no special casing: the pencil on the full
    support takes the blockwise minimum automatically.
    """
    if not space.is_connected():
        raise ValueError("space must be connected")
    S = space.form_matrix()
    bplus = (S + sparse.diags(measure.plus)).tocsr()
    bfull = (bplus - sparse.diags(measure.minus)).tocsr()
    gamma_mu = (_pencil_min_eig(bfull, space.ref_measure, dense_limit)
                if want_gamma else None)
    support = measure.minus > 0
    if not support.any():
        return math.inf, gamma_mu
    if space.n_nodes <= dense_limit:
        lam = _lambda_mu_dense(bplus, measure.minus, support)
    else:
        try:
            lam = _lambda_mu_sparse(bplus, measure.minus, support)
        except RuntimeError as exc:
            raise ValueError(
                "sparse lambda(mu) path needs a positive-definite "
                f"base form: {exc}") from exc
    return lam, gamma_mu


def verdict_from_lambda(lambda_mu, tol=TRICHOTOMY_TOL):
    if lambda_mu > 1.0 + tol:
        return SUBCRITICAL
    if lambda_mu < 1.0 - tol:
        return SUPERCRITICAL
    return CRITICAL


def classify_schrodinger(space, measure, tol=TRICHOTOMY_TOL,
                         dense_limit=DENSE_BUDGET):
    """Trichotomy verdict for E_mu from lambda(mu).

    With an empty negative part the constraint is infeasible, lambda(mu) is
    +inf by convention, and the verdict is Subcritical; evidence still
    carries gamma(mu) and the kernel dimension.
    """
    lam, gam = bottom_of_spectrum(space, measure, dense_limit)
    verdict = verdict_from_lambda(lam, tol)
    evidence = {"tol": tol}
    if space.n_nodes <= dense_limit:
        op = schrodinger_matrix(space, measure)
        dec = decompose(op, dense_limit)
        scale = dec.scale
        evidence["kernel_dim"] = int(
            np.count_nonzero(np.abs(dec.eigenvalues) <= max(tol, 1e-12) * scale))
    return Classification(verdict=verdict, lambda_mu=lam, gamma_mu=gam,
                          evidence=evidence)


def superharmonic_h(dec, entry, g, kernel_if_critical=False, t_samples=(0.1, 1.0, 10.0)):
    """Strictly positive h with exp(-t Phi(A)) h <= h.

    Returns the 1-resolvent ``(I + Phi(A))^-1 g`` of a strictly positive g;
    positivity improves under irreducibility so h is strictly positive.  At
    exact criticality the positive-normalized kernel eigenvector can be
    requested instead.  Refuses operators with negative spectrum: the
    superharmonic cone is empty there.
    """
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0):
        raise ValueError("g must be strictly positive componentwise")
    if dec.eigenvalues[0] < -1e-12 * dec.scale:
        raise ValueError(
            "supercritical operator: the superharmonic cone is empty "
            f"(min eigenvalue {dec.eigenvalues[0]:.3e})")
    phi = subordinated_eigenvalues(dec, entry)
    if kernel_if_critical and dec.kernel_dim > 0:
        h = dec.vectors[:, 0].copy()
        if h.sum() < 0:
            h = -h
        if np.any(h <= 0):
            raise ValueError("kernel eigenvector is not strictly positive")
        return h
    h = dec.synthesize(dec.coefficients(g) / (1.0 + phi))
    if np.any(h <= 0):
        raise ValueError("resolvent lost strict positivity (numerical)")
    hc = dec.coefficients(h)
    for t in t_samples:
        excess = dec.synthesize(np.exp(-t * phi) * hc) - h
        if np.max(excess) > 1e-12 * max(1.0, float(np.max(np.abs(h)))):
            raise ValueError(
                f"resolvent is not superharmonic at t={t}: "
                f"violation {np.max(excess):.3e}")
    return h


@dataclass(frozen=True)
class HTransformReport:
    """Doob transform of -Phi(A) by a superharmonic h.

    The generator ``H^-1 (-Phi(A)) H`` must be Markovian: off-diagonal
    entries nonnegative and row sums nonpositive, with row sums exactly
    zero (conservative) iff Phi(A) h = 0.
    """

    h: np.ndarray
    generator: np.ndarray
    offdiag_min: float
    row_sum_max: float
    conservative: bool


def h_transform(dec, entry, h, superharmonic_tol=1e-10,
                markov_tol=1e-12, t_samples=(0.1, 1.0, 10.0)):
    """Conjugate -Phi(A) by h and report the Markov-generator diagnostics."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h must be strictly positive")
    phi = subordinated_eigenvalues(dec, entry)
    hc = dec.coefficients(h)
    worst = -math.inf
    for t in t_samples:
        excess = dec.synthesize(np.exp(-t * phi) * hc) - h
        worst = max(worst, float(np.max(excess)))
    if worst > superharmonic_tol * max(1.0, float(np.max(np.abs(h)))):
        raise ValueError(
            f"h is not superharmonic: max violation {worst:.3e}")
    neg_phi_a = -phi_of_operator(dec, entry)
    gen = (neg_phi_a * h[None, :]) / h[:, None]
    mask = ~np.eye(gen.shape[0], dtype=bool)
    offdiag_min = float(gen[mask].min()) if gen.shape[0] > 1 else 0.0
    row_sums = gen.sum(axis=1)
    row_sum_max = float(row_sums.max())
    conservative = bool(np.max(np.abs(row_sums)) <= markov_tol)
    return HTransformReport(h=h, generator=gen, offdiag_min=offdiag_min,
                            row_sum_max=row_sum_max,
                            conservative=conservative)


def _growth_fit(sizes, values):
    """Least-squares slope of log(values) against log(sizes)."""
    logs = np.log(np.asarray(sizes, dtype=float))
    logv = np.log(np.asarray(values, dtype=float))
    slope, _ = np.polyfit(logs, logv, 1)
    return float(slope)


def classify_subordinated(family, entry, g_for, tol=TRICHOTOMY_TOL,
                          increment_tol=INCREMENT_TOL, slope_tol=SLOPE_TOL,
                          dense_limit=DENSE_BUDGET):
    """Classify Phi(A) from Green-form growth over a family of spaces.

    Parameters
    ----------
    family : sequence of (size, space, measure)
        Members over growing sizes; the test vector ``g_for(space)`` must
        localize to a window present in every member.
    entry : BernsteinEntry
    g_for : callable
        ``space -> vector``.

    Verdicts: Supercritical as soon as one member has negative spectrum;
    Subcritical when the Green sequence is Cauchy (last relative increment
    below ``increment_tol``) with fitted log-log slope below ``slope_tol``;
    Critical otherwise, with the smallest eigenvalue of Phi(A_n) and the
    ground-state row sums recorded as the conservativeness evidence.
    """
    members = list(family)
    if len(members) < 3:
        raise ValueError("family too short (<3 sizes) for extrapolation")
    sizes, greens, min_phis = [], [], []
    for size, space, measure in members:
        op = schrodinger_matrix(space, measure)
        g = np.asarray(g_for(space), dtype=float)
        if op.n <= dense_limit:
            dec = decompose(op, dense_limit)
            if dec.eigenvalues[0] < -tol * dec.scale:
                return Classification(
                    verdict=SUPERCRITICAL,
                    evidence={"sizes": sizes + [size],
                              "negative_eigenvalue": dec.eigenvalues[0]})
            gval = green_form(dec, entry, g)
            min_phi = float(entry.phi(max(dec.eigenvalues[0], 0.0)))
        else:
            lam0 = _pencil_min_eig(op.sym_matrix, op.mass, dense_limit)
            if lam0 < -tol * max(1.0, abs(lam0)):
                return Classification(
                    verdict=SUPERCRITICAL,
                    evidence={"sizes": sizes + [size],
                              "negative_eigenvalue": lam0})
            gval = green_form_matvec(op, entry, g)
            min_phi = float(entry.phi(max(lam0, 0.0)))
        sizes.append(size)
        greens.append(gval)
        min_phis.append(min_phi)

    finite = np.isfinite(greens)
    evidence = {"sizes": sizes, "green_sequence": greens,
                "min_phi_sequence": min_phis}
    if np.all(finite):
        slope = _growth_fit(sizes, greens)
        last_increment = abs(greens[-1] - greens[-2]) / abs(greens[-1])
        evidence["slope"] = slope
        evidence["last_relative_increment"] = last_increment
        if last_increment < increment_tol and slope < slope_tol:
            return Classification(verdict=SUBCRITICAL, evidence=evidence)
    else:
        evidence["slope"] = math.inf
    evidence["min_phi_to_zero"] = bool(
        min_phis[-1] <= min_phis[0] and min_phis[-1] < 0.1)
    return Classification(verdict=CRITICAL, evidence=evidence)


def asymptotic_criticality(theta, entry):
    """Verdict from heat decay t^-theta against the potential tail s^(rho-1).

    The subordinated Green kernel is finite iff the tail integral
    ``int^inf t^(rho-1-theta) dt`` converges, i.e. iff rho < theta.  A
    superharmonic h exists by hypothesis, so the verdict is never
    Supercritical.
    """
    if theta <= 0:
        raise ValueError("heat decay exponent theta must be positive")
    rho = entry.potential_tail_exponent
    if rho is None:
        raise ValueError(
            f"{entry.name} has no potential tail exponent")
    divergent = rho >= theta
    verdict = CRITICAL if divergent else SUBCRITICAL
    return Classification(verdict=verdict, evidence={
        "theta": theta, "rho": rho, "tail_divergent": divergent})


@dataclass(frozen=True)
class RangeMembership:
    in_range: bool
    green_value: float
    witness: Optional[np.ndarray] = None


def range_membership(dec, entry, f):
    """Whether f lies in the range of Phi(A)^(1/2), with a minimal preimage.

    Membership is exactly finiteness of the Green form; the witness is the
    pseudo-inverse preimage ``Phi(A)^(+ -1/2) f``.
    """
    g = green_form(dec, entry, f)
    if not np.isfinite(g):
        return RangeMembership(in_range=False, green_value=g)
    phi = subordinated_eigenvalues(dec, entry)
    coeff = dec.coefficients(f)
    inv_sqrt = np.where(phi > 0, 1.0 / np.sqrt(np.where(phi > 0, phi, 1.0)),
                        0.0)
    witness = dec.synthesize(inv_sqrt * coeff)
    return RangeMembership(in_range=True, green_value=g, witness=witness)


def subcritical_window_gap(dec, entry, window):
    """Smallest generalized eigenvalue of (Phi-form, window-mass) pencil.

    For a subcritical operator and a compact-window indicator W this is the
    best constant delta with ``delta * sum W f^2 m <= <Phi(A) f, f>_m``;
    positivity of delta is the windowed weighted inequality restated at
    matrix level.
    """
    phi = subordinated_eigenvalues(dec, entry)
    window = np.asarray(window, dtype=float)
    if np.all(window == 0):
        raise ValueError("window must charge at least one node")
    phi_form = (dec.vectors * phi) @ (dec.vectors.T)
    phi_form = (phi_form + phi_form.T) * 0.5
    mass = dec.mass * window
    idx = np.flatnonzero(mass > 0)
    idx_c = np.flatnonzero(mass <= 0)
    M = dec.mass
    # assemble the node-basis matrix of the Phi-form: <Phi(A)f, g>_m
    B = (M[:, None] * phi_form * M[None, :])
    B = 0.5 * (B + B.T)
    if idx_c.size:
        Baa = B[np.ix_(idx_c, idx_c)]
        Bab = B[np.ix_(idx_c, idx)]
        Bbb = B[np.ix_(idx, idx)]
        try:
            schur = Bbb - Bab.T @ np.linalg.solve(Baa, Bab)
        except np.linalg.LinAlgError:
            schur = Bbb - Bab.T @ np.linalg.lstsq(Baa, Bab, rcond=None)[0]
    else:
        schur = B
    schur = 0.5 * (schur + schur.T)
    vals = eigh(schur, np.diag(mass[idx]), eigvals_only=True,
                subset_by_index=[0, 0])
    return float(vals[0])
