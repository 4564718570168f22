"""Discrete state spaces: weighted graphs, signed potentials, operators.

A space is a finite weighted graph with symmetric edge conductances
``c_xy``, per-node killing weights ``k_x`` (absorption through a Dirichlet
boundary) and a reference measure ``m_x > 0``.  Its energy form is

    E(f, f) = sum_edges c_xy (f(x) - f(y))^2 + sum_x k_x f(x)^2.

Grids use finite-difference conductances ``c = h^(d-2)`` along the axes and
reference measure ``m_x = h^d`` so that discrete sums approximate continuum
integrals.  Signed node measures perturb the form to

    E_mu(f, f) = E(f, f) + sum_x (mu+_x - mu-_x) f(x)^2,

whose m-symmetric operator is assembled by :func:`schrodinger_matrix`.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph, linalg as sla

__all__ = [
    "DiscreteSpace",
    "SignedMeasure",
    "SchrodingerOperator",
    "build_space",
    "attach_measure",
    "schrodinger_matrix",
    "kato_norm",
    "stollmann_voigt_check",
    "KatoReport",
    "SlackReport",
]

#: radius assigned to the node sitting on a singular center, in units of h
CENTER_RADIUS_FACTOR = 0.5

#: profile of resolvent parameters reported alongside every Kato norm
KATO_ALPHA_PROFILE = (1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class DiscreteSpace:
    """Weighted graph with killing and reference measure."""

    coords: np.ndarray          # (N, dim) node coordinates
    edges: np.ndarray           # (E, 2) int endpoints, i < j
    conductances: np.ndarray    # (E,) positive
    killing: np.ndarray         # (N,) nonnegative
    ref_measure: np.ndarray     # (N,) positive
    spacing: float = 1.0
    dim: int = 1
    component: Optional[np.ndarray] = None   # component id for glued spaces

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    def form_matrix(self):
        """Sparse matrix S of the energy form, E(f, g) = f @ S @ g."""
        n = self.n_nodes
        i, j = self.edges[:, 0], self.edges[:, 1]
        c = self.conductances
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([-c, -c, c, c])
        S = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        S = S + sparse.diags(self.killing)
        return S.tocsr()

    def energy(self, f, g=None):
        """E(f, g); defaults to the quadratic form E(f, f)."""
        if g is None:
            g = f
        i, j = self.edges[:, 0], self.edges[:, 1]
        df = f[i] - f[j]
        dg = g[i] - g[j]
        return float(np.sum(self.conductances * df * dg)
                     + np.sum(self.killing * f * g))

    def is_connected(self):
        n = self.n_nodes
        if n == 1:
            return True
        adj = sparse.coo_matrix(
            (np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])),
            shape=(n, n))
        ncomp, _ = csgraph.connected_components(adj, directed=False)
        return ncomp == 1

    def validate(self):
        """Check the structural invariants; raises AssertionError."""
        assert np.all(self.conductances > 0)
        assert np.all(self.edges[:, 0] != self.edges[:, 1]), "no self loops"
        assert np.all(self.killing >= 0)
        assert np.all(self.ref_measure > 0)
        assert self.is_connected(), "conductance graph must be connected"


@dataclass(frozen=True)
class SignedMeasure:
    """Per-node nonnegative weights of the positive and negative parts.

    Construction canonicalizes overlapping supports so that
    ``min(plus_x, minus_x) = 0`` at every node.
    """

    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        plus = np.asarray(self.plus, dtype=float)
        minus = np.asarray(self.minus, dtype=float)
        if np.any(plus < 0) or np.any(minus < 0):
            raise ValueError("measure parts must be componentwise nonnegative")
        overlap = np.minimum(plus, minus)
        object.__setattr__(self, "plus", plus - overlap)
        object.__setattr__(self, "minus", minus - overlap)

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    def __add__(self, other):
        return SignedMeasure(self.plus + other.plus, self.minus + other.minus)

    def scaled(self, factor):
        """Scale both parts by ``factor >= 0``."""
        if factor < 0:
            raise ValueError("use the sign argument of attach_measure instead")
        return SignedMeasure(self.plus * factor, self.minus * factor)

    @property
    def net(self):
        return self.plus - self.minus


class SchrodingerOperator:
    """m-symmetric operator of the perturbed form E_mu.

    Acts as ``(A f)(x) = m_x^-1 [sum_y c_xy (f(x)-f(y)) + k_x f(x)
    + (mu+_x - mu-_x) f(x)]``, so that ``M A`` is the symmetric matrix
    ``S + diag(mu+ - mu-)``.  The PSD certificate (smallest eigenvalue of
    the (S + D, M) pencil) is computed lazily; a negative certificate flags
    the supercritical regime, which stays representable here and is only
    refused by downstream Green and wave operations.
    """

    def __init__(self, space, measure):
        self.space = space
        self.measure = measure
        self.sym_matrix = (space.form_matrix()
                           + sparse.diags(measure.net)).tocsr()
        self.mass = space.ref_measure.copy()
        self._certificate = None

    @property
    def n(self):
        return self.space.n_nodes

    def dense(self):
        """Dense symmetric matrix M A = S + D."""
        B = self.sym_matrix.toarray()
        return 0.5 * (B + B.T)

    def apply(self, f):
        return self.sym_matrix.dot(f) / self.mass

    @property
    def psd_certificate(self):
        if self._certificate is None:
            self._certificate = _pencil_min_eig(self.sym_matrix, self.mass)
        return self._certificate

    @property
    def is_psd(self):
        return self.psd_certificate >= -1e-12 * max(
            1.0, sla.norm(self.sym_matrix, np.inf) / self.mass.min())


def _pencil_min_eig(B, mass, dense_limit=4000):
    """Smallest eigenvalue of the symmetric-definite pencil (B, diag(mass))."""
    n = B.shape[0]
    if n <= dense_limit:
        from scipy.linalg import eigh
        Bd = B.toarray() if sparse.issparse(B) else np.asarray(B)
        Bd = 0.5 * (Bd + Bd.T)
        vals = eigh(Bd, np.diag(mass), eigvals_only=True,
                    subset_by_index=[0, 0])
        return float(vals[0])
    # sparse path: symmetrize with the diagonal mass and shift-invert from
    # below the spectrum (Gershgorin bound keeps the factorization definite)
    d = 1.0 / np.sqrt(mass)
    C = sparse.diags(d) @ B @ sparse.diags(d)
    C = (C + C.T) * 0.5
    row_radius = np.abs(C).sum(axis=1).A.ravel() - np.abs(C.diagonal())
    lower = (C.diagonal() - row_radius).min()
    sigma = lower - 0.1 * max(1.0, abs(lower))
    vals = sla.eigsh(C.tocsc(), k=1, sigma=sigma, which="LM",
                     return_eigenvectors=False)
    return float(vals[0])


def _grid_nodes(dim, n, h):
    """Coordinates of the d-dimensional grid, centered on the origin."""
    axis = (np.arange(n) - (n - 1) / 2.0) * h
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _grid_edges(dim, n):
    idx = np.arange(n ** dim).reshape((n,) * dim)
    edges = []
    for ax in range(dim):
        lo = idx.take(np.arange(n - 1), axis=ax).ravel()
        hi = idx.take(np.arange(1, n), axis=ax).ravel()
        edges.append(np.stack([lo, hi], axis=1))
    if edges:
        return np.concatenate(edges, axis=0)
    return np.empty((0, 2), dtype=int)


def _boundary_cut_count(dim, n):
    """Number of grid edges each node loses to the boundary."""
    idx = np.zeros((n,) * dim, dtype=int)
    for ax in range(dim):
        shape = [1] * dim
        shape[ax] = n
        line = np.zeros(n, dtype=int)
        line[0] += 1
        line[-1] += 1
        if n == 1:
            line[0] = 2
        idx = idx + line.reshape(shape)
    return idx.ravel()


def _single_grid(dim, n, spacing, boundary, conductance_scale):
    if not 1 <= dim <= 3:
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n < 1:
        raise ValueError("need at least one node per axis")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if boundary not in ("dirichlet", "free"):
        raise ValueError(f"unknown boundary {boundary!r}")
    h = float(spacing)
    c_edge = conductance_scale * h ** (dim - 2)
    coords = _grid_nodes(dim, n, h)
    edges = _grid_edges(dim, n)
    cond = np.full(len(edges), c_edge)
    if boundary == "dirichlet":
        killing = _boundary_cut_count(dim, n) * c_edge
    else:
        killing = np.zeros(n ** dim)
    measure = np.full(n ** dim, h ** dim)
    return coords, edges, cond, killing.astype(float), measure


def build_space(dim, n, spacing=1.0, boundary="dirichlet", glue=None,
                conductance_scale=1.0):
    """Build a d-dimensional grid, optionally glued to a second grid.

    Parameters
    ----------
    dim, n, spacing, boundary
        Grid dimension (1 to 3), nodes per axis, lattice constant, and
        boundary handling.  A Dirichlet boundary adds killing ``c`` per cut
        edge; a free boundary adds none (recurrent base form).
    glue : dict, optional
        Specification ``{dim, n, spacing, boundary}`` of a second grid whose
        origin node is identified with the origin node of the first,
        producing one connected graph (both n must be odd so the shared
        node exists).
    conductance_scale : float
        Multiplies all conductances and killing weights.  The default 1
        gives the plain finite-difference form; scenario factories use 1/2
        to match a form normalized as half the Dirichlet integral.
    """
    coords, edges, cond, killing, measure = _single_grid(
        dim, n, spacing, boundary, conductance_scale)
    component = np.zeros(len(coords), dtype=int)
    maxdim = dim

    if glue is not None:
        g = dict(glue)
        dim2 = g.pop("dim")
        n2 = g.pop("n")
        spacing2 = g.pop("spacing", spacing)
        boundary2 = g.pop("boundary", boundary)
        scale2 = g.pop("conductance_scale", conductance_scale)
        if g:
            raise ValueError(f"unknown glue keys: {sorted(g)}")
        if n % 2 == 0 or n2 % 2 == 0:
            raise ValueError("gluing at the origin requires odd grid sizes")
        c2, e2, cd2, k2, m2 = _single_grid(dim2, n2, spacing2, boundary2,
                                           scale2)
        maxdim = max(dim, dim2)

        def center_index(crds):
            return int(np.argmin(np.sum(crds ** 2, axis=1)))

        j1 = center_index(coords)
        j2 = center_index(c2)
        # second grid nodes map onto fresh indices, except its origin node
        offset = len(coords)
        remap = np.arange(len(c2)) + offset
        remap[j2] = j1
        remap[j2 + 1:] -= 1
        keep = np.ones(len(c2), dtype=bool)
        keep[j2] = False

        pad1 = np.zeros((len(coords), maxdim))
        pad1[:, :dim] = coords
        pad2 = np.zeros((keep.sum(), maxdim))
        pad2[:, :dim2] = c2[keep]
        coords = np.concatenate([pad1, pad2], axis=0)
        edges = np.concatenate([edges, remap[e2]], axis=0)
        cond = np.concatenate([cond, cd2])
        ext_kill = np.concatenate([killing, k2[keep]])
        ext_kill[j1] += k2[j2]
        killing = ext_kill
        ext_m = np.concatenate([measure, m2[keep]])
        ext_m[j1] += m2[j2]
        measure = ext_m
        component = np.concatenate(
            [component, np.ones(keep.sum(), dtype=int)])

    space = DiscreteSpace(coords=coords, edges=edges, conductances=cond,
                          killing=killing, ref_measure=measure,
                          spacing=float(spacing), dim=maxdim,
                          component=component)
    space.validate()
    return space


def attach_measure(space, kind, sign="minus", lam=1.0, p=2.0, center=None,
                   axis=None, weights=None, eps=CENTER_RADIUS_FACTOR):
    """Build a one-signed node measure on ``space``.

    kind
        ``radial_power``: weight ``lam * r^-p * m_x`` with the radius of the
        node at the center regularized to ``eps*h``;
        ``hyperplane``: weight ``lam * |x'|^-p * h^(d-1)`` on the slice where
        the last coordinate vanishes (``x'`` is the in-slice position);
        ``uniform``: weight ``lam * m_x`` everywhere;
        ``custom``: ``weights`` given explicitly.
    sign
        Which side of the signed measure receives the weights.
    """
    if lam < 0:
        raise ValueError("coupling lam must be nonnegative")
    if p < 0:
        raise ValueError("power p must be nonnegative")
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    n = space.n_nodes
    h = space.spacing

    if kind == "radial_power":
        if center is None:
            center = np.zeros(space.coords.shape[1])
        center = np.asarray(center, dtype=float)
        lo = space.coords.min(axis=0)
        hi = space.coords.max(axis=0)
        if np.any(center < lo - 1e-12) or np.any(center > hi + 1e-12):
            raise ValueError("center lies outside the grid hull")
        r = np.linalg.norm(space.coords - center, axis=1)
        r = np.maximum(r, eps * h)
        w = lam * r ** (-p) * space.ref_measure
    elif kind == "hyperplane":
        if axis is None:
            axis = space.coords.shape[1] - 1
        onplane = np.abs(space.coords[:, axis]) < 1e-12 * max(h, 1.0)
        rest = np.delete(space.coords, axis, axis=1)
        rp = np.linalg.norm(rest, axis=1)
        rp = np.maximum(rp, eps * h)
        w = np.where(onplane, lam * rp ** (-p) * h ** (space.dim - 1), 0.0)
    elif kind == "uniform":
        w = lam * space.ref_measure.copy()
    elif kind == "custom":
        if weights is None:
            raise ValueError("custom measure requires weights")
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError("weights must have one entry per node")
    else:
        raise ValueError(f"unknown measure kind {kind!r}")

    zero = np.zeros(n)
    if sign == "plus":
        return SignedMeasure(w, zero)
    return SignedMeasure(zero, w)


def schrodinger_matrix(space, measure=None):
    """Assemble the operator of E_mu; never refuses (diagnostics only)."""
    if not space.is_connected():
        raise ValueError("space must be connected")
    if measure is None:
        measure = SignedMeasure.zero(space.n_nodes)
    return SchrodingerOperator(space, measure)


@dataclass(frozen=True)
class KatoReport:
    """Resolvent sup-norm of a measure with its decay profile over alpha."""

    value: float
    alpha: float
    profile: dict
    strictly_decreasing: bool
    decay_exponent: float

    def __float__(self):
        return self.value


def _one_signed_weights(measure):
    has_plus = np.any(measure.plus > 0)
    has_minus = np.any(measure.minus > 0)
    if has_plus and has_minus:
        raise ValueError("measure must be one-signed here")
    return measure.minus if has_minus else measure.plus


def kato_norm(space, measure, alpha):
    """Sup norm of the alpha-resolvent of a one-signed measure.

    Solves ``(alpha M + S) v = w`` for the node-weight vector w and returns
    ``max_x v(x)`` together with a decay profile over
    ``alpha in {1, 10, 100, 1000}``; a fitted log-log slope near -1 is the
    numerical witness of membership in the Kato class.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    w = _one_signed_weights(measure)
    S = space.form_matrix()
    M = sparse.diags(space.ref_measure)

    def resolve(a):
        A = (a * M + S).tocsc()
        v = sla.spsolve(A, w)
        return float(np.max(v))

    value = resolve(alpha)
    profile = {a: resolve(a) for a in KATO_ALPHA_PROFILE}
    norms = np.array([profile[a] for a in KATO_ALPHA_PROFILE])
    decreasing = bool(np.all(np.diff(norms) < 0))
    with np.errstate(divide="ignore"):
        slope = np.polyfit(np.log(KATO_ALPHA_PROFILE), np.log(norms), 1)[0]
    return KatoReport(value=value, alpha=alpha, profile=profile,
                      strictly_decreasing=decreasing,
                      decay_exponent=float(slope))


@dataclass(frozen=True)
class SlackReport:
    lhs: float
    rhs: float
    slack: float
    kato: float


def stollmann_voigt_check(space, measure, f, alpha):
    """Slack of ``int f^2 dmu <= ||R_a mu||_inf E_a(f, f)`` on this instance."""
    w = _one_signed_weights(measure)
    f = np.asarray(f, dtype=float)
    lhs = float(np.sum(w * f * f))
    kato = kato_norm(space, measure, alpha).value
    ea = space.energy(f) + alpha * float(np.sum(space.ref_measure * f * f))
    rhs = kato * ea
    return SlackReport(lhs=lhs, rhs=rhs, slack=rhs - lhs, kato=kato)
