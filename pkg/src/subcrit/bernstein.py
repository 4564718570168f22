"""Catalog and calculus of Bernstein functions.

A Bernstein function ``Phi(lam) = b*lam + int_0^inf (1 - exp(-lam*s)) nu(ds)``
is the Laplace exponent of a subordinator.  Each catalog entry bundles the
closed form of ``Phi`` with whatever else is known in closed form: the Levy
density ``nu``, the density ``u`` of the 0-potential measure (characterised by
``int_0^inf exp(-lam*s) u(s) ds = 1/Phi(lam)``), the tail exponent ``rho``
with ``u(s) ~ s**(rho-1)`` for large ``s``, and the transition density
``eta_t`` of the subordinator (stored only where a closed form exists).

Entries are immutable values; every operation here is pure.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special

from .quadrature import integrate_zero_inf, levy_integral

__all__ = [
    "BernsteinEntry",
    "catalog_lookup",
    "catalog_names",
    "phi_eval",
    "potential_density",
    "transition_density",
    "UnknownEntryError",
    "ParameterError",
    "AsymptoticsOnlyError",
]


class UnknownEntryError(KeyError):
    """Requested catalog name does not exist."""


class ParameterError(ValueError):
    """Family parameter outside its admissible range."""


class AsymptoticsOnlyError(ValueError):
    """No closed-form density is stored; only a tail exponent is known.

    The known tail exponent (or ``None``) is carried in ``tail_exponent``.
    """

    def __init__(self, message, tail_exponent=None):
        super().__init__(message)
        self.tail_exponent = tail_exponent


@dataclass(frozen=True)
class BernsteinEntry:
    """One named Bernstein function together with its subordinator data.

    Attributes
    ----------
    name : str
        Family name plus the parameters that were used.
    b : float
        Drift coefficient, ``b >= 0``.
    phi_closed : callable
        Closed form ``lam -> Phi(lam)`` for ``lam >= 0``.
    levy_density : callable or None
        Density ``s -> nu(s)`` of the Levy measure on (0, inf).
    potential_density : callable or None
        Density ``s -> u(s)`` of the 0-potential measure.
    potential_tail_exponent : float or None
        ``rho`` with ``u(s) ~ s**(rho-1)`` as ``s -> inf``; ``rho = 1``
        encodes a tail comparable to a constant.
    transition_density : callable or None
        ``(t, s) -> eta_t(s)``, density of the subordinator at time t.
    log_potential_density : callable or None
        ``ln s -> ln u(s)``, an overflow-safe form of the potential density
        used by the Laplace-identity check near s = 0.
    ib_flag : bool
        True iff ``b > 0`` or ``inf supp(nu) = 0`` (irreducibility survives
        subordination).
    first_moment_finite : bool
        True iff ``int_0^inf s nu(ds) < inf``, equivalently Phi'(0+) < inf.
    params : dict
        The raw family parameters.
    """

    name: str
    b: float
    phi_closed: Callable[[float], float]
    levy_density: Optional[Callable[[float], float]] = None
    potential_density: Optional[Callable[[float], float]] = None
    potential_tail_exponent: Optional[float] = None
    transition_density: Optional[Callable[[float, float], float]] = None
    log_potential_density: Optional[Callable[[float], float]] = None
    ib_flag: bool = True
    first_moment_finite: bool = False
    params: dict = field(default_factory=dict)

    def phi(self, lam):
        """Vectorised closed-form evaluation with Phi(0) = 0 pinned exactly."""
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < 0):
            raise ParameterError("Bernstein functions are defined on lam >= 0")
        out = np.where(lam > 0, self.phi_closed(np.maximum(lam, 1e-300)), 0.0)
        return out if out.ndim else float(out)


def _stable(beta):
    """Phi(lam) = lam**(beta/2), the beta/2-stable subordinator."""
    if not 0.0 < beta < 2.0:
        raise ParameterError(f"stable index beta={beta} not in (0, 2)")
    rho = beta / 2.0
    cnu = rho / special.gamma(1.0 - rho)
    cpot = 1.0 / special.gamma(rho)
    entry = dict(
        name=f"stable(beta={beta:g})",
        b=0.0,
        phi_closed=lambda lam: np.power(lam, rho),
        levy_density=lambda s: cnu * np.power(s, -1.0 - rho),
        potential_density=lambda s: cpot * np.power(s, rho - 1.0),
        potential_tail_exponent=rho,
        ib_flag=True,
        first_moment_finite=False,
        params={"beta": beta},
    )
    if beta == 1.0:
        # eta_t(s) = t (2 sqrt(pi))^-1 s^-3/2 exp(-t^2 / 4s)
        entry["transition_density"] = lambda t, s: (
            t / (2.0 * np.sqrt(np.pi)) * np.power(s, -1.5)
            * np.exp(-t * t / (4.0 * s)))
    return BernsteinEntry(**entry)


def _compound_poisson(a, c):
    """Phi(lam) = a*lam/(lam+c); nu stored as the exponential density a*c*e^{-cs}."""
    if a <= 0 or c <= 0:
        raise ParameterError("compound_poisson requires a > 0 and c > 0")
    return BernsteinEntry(
        name=f"compound_poisson(a={a:g},c={c:g})",
        b=0.0,
        phi_closed=lambda lam: a * lam / (lam + c),
        levy_density=lambda s: a * c * np.exp(-c * s),
        ib_flag=True,
        first_moment_finite=True,
        params={"a": a, "c": c},
    )


def _gamma_log_potential_density(a, c, ell):
    """ln u(e^ell) for u(s) = int_0^inf c^(a t) Gamma(a t)^-1 s^(a t-1) e^{-c s} dt.

    Evaluated in log space: with y = a*t the integrand is
    exp(y*(log c + ell) - lgamma(y)) * exp(-c*s) / (a*s).  The exponent peaks
    near y* solving digamma(y*) = log(c*s); the peak value (about c*s for
    large s) is pulled out before quadrature so nothing overflows.  Working
    from ell = ln s keeps the density usable arbitrarily close to s = 0,
    where u(s) ~ 1/(a*s*ln(1/s)^2) outruns double-precision exponents.
    """
    z = np.log(c) + ell

    if z > special.digamma(1e-14):
        ystar = optimize.brentq(lambda y: special.digamma(y) - z,
                                1e-14, max(10.0, 4.0 * np.exp(min(z, 700.0)) + 10.0))
    else:
        # digamma(y) ~ -1/y below the bracket
        ystar = -1.0 / z
    shift = ystar * z - special.gammaln(ystar)

    def integrand(y):
        return np.exp(y * z - special.gammaln(y) - shift)

    # peak width from the local curvature -polygamma(1, y*) of the exponent
    width = 1.0 / np.sqrt(special.polygamma(1, ystar))
    pieces = [0.0, max(ystar - 4 * width, 0.0), ystar, ystar + 4 * width,
              ystar + 20 * width, np.inf]
    pieces = sorted(set(p for p in pieces if p >= 0.0))
    val = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        v, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10,
                              limit=200)
        val += v
    cs = c * np.exp(ell) if ell < 700.0 else np.inf
    return shift - cs - np.log(a) - ell + np.log(val)


def _gamma(a, c):
    """Phi(lam) = a*log(1 + lam/c), the gamma subordinator."""
    if a <= 0 or c <= 0:
        raise ParameterError("gamma requires a > 0 and c > 0")

    def log_u(ell):
        return _gamma_log_potential_density(a, c, ell)

    return BernsteinEntry(
        name=f"gamma(a={a:g},c={c:g})",
        b=0.0,
        phi_closed=lambda lam: a * np.log1p(lam / c),
        levy_density=lambda s: a * np.exp(-c * s) / s,
        potential_density=lambda s: float(np.exp(log_u(np.log(s)))),
        potential_tail_exponent=1.0,
        log_potential_density=log_u,
        ib_flag=True,
        first_moment_finite=True,
        params={"a": a, "c": c},
    )


def _inverse_gaussian(a, c):
    """Phi(lam) = a*(sqrt(2*lam + c^2) - c)."""
    if a <= 0 or c <= 0:
        raise ParameterError("inverse_gaussian requires a > 0 and c > 0")
    return BernsteinEntry(
        name=f"inverse_gaussian(a={a:g},c={c:g})",
        b=0.0,
        phi_closed=lambda lam: a * (np.sqrt(2.0 * lam + c * c) - c),
        levy_density=lambda s: (a / np.sqrt(2.0 * np.pi)
                                * np.power(s, -1.5) * np.exp(-c * c * s / 2.0)),
        ib_flag=True,
        first_moment_finite=True,
        params={"a": a, "c": c},
    )


def _relativistic_potential_density(alpha, m, s):
    """u(s) = e^{-m^(2/alpha) s} s^(alpha/2-1) sum_n (m s^(alpha/2))^n / Gamma(alpha(1+n)/2).

    The series is the renewal expansion of the exponentially tilted stable
    potential density; summed by log-sum-exp so large s does not overflow.
    Its Laplace transform telescopes to 1/((lam + m^(2/alpha))^(alpha/2) - m).
    """
    if s <= 0:
        raise ParameterError("potential density is defined on s > 0")
    theta = m ** (2.0 / alpha)
    logx = np.log(m) + (alpha / 2.0) * np.log(s)
    # generous term count: the log-terms peak near n ~ 2*exp(logx)^(2/alpha)/alpha
    npeak = 2.0 * np.exp(2.0 * logx / alpha) / alpha
    nmax = int(min(5e6, max(200.0, 8.0 * npeak + 200.0)))
    n = np.arange(nmax, dtype=float)
    logterms = n * logx - special.gammaln(alpha * (1.0 + n) / 2.0)
    top = logterms.max()
    total = float(np.exp(logterms - top).sum())
    log_u = -theta * s + (alpha / 2.0 - 1.0) * np.log(s) + top + np.log(total)
    return float(np.exp(log_u))


def _relativistic(alpha, m):
    """Phi(lam) = (lam + m^(2/alpha))^(alpha/2) - m."""
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"relativistic index alpha={alpha} not in (0, 2)")
    if m <= 0:
        raise ParameterError("relativistic requires m > 0")
    theta = m ** (2.0 / alpha)
    rho = alpha / 2.0
    cnu = rho / special.gamma(1.0 - rho)
    return BernsteinEntry(
        name=f"relativistic(alpha={alpha:g},m={m:g})",
        b=0.0,
        phi_closed=lambda lam: np.power(lam + theta, rho) - m,
        levy_density=lambda s: (cnu * np.power(s, -1.0 - rho)
                                * np.exp(-theta * s)),
        potential_density=lambda s: _relativistic_potential_density(alpha, m, s),
        potential_tail_exponent=1.0,
        ib_flag=True,
        first_moment_finite=True,
        params={"alpha": alpha, "m": m},
    )


def _log_power(delta, beta, sign):
    """Phi(lam) = lam^(delta/2) * log(1+lam)^(+-beta/2).

    Only the asymptotics of the potential measure are known:
    u(s) ~ s^((delta+-beta)/2 - 1) for large s.
    """
    if sign not in (+1, -1):
        raise ParameterError("log_power sign must be +1 or -1")
    if not 0.0 < delta < 2.0:
        raise ParameterError(f"log_power delta={delta} not in (0, 2)")
    if sign > 0 and not 0.0 < beta < 2.0 - delta:
        raise ParameterError(
            f"log_power(+) requires 0 < beta < 2 - delta, got beta={beta}")
    if sign < 0 and not 0.0 < beta < delta:
        raise ParameterError(
            f"log_power(-) requires 0 < beta < delta, got beta={beta}")

    def phi(lam):
        return np.power(lam, delta / 2.0) * np.power(np.log1p(lam),
                                                     sign * beta / 2.0)

    tag = "+" if sign > 0 else "-"
    return BernsteinEntry(
        name=f"log_power(delta={delta:g},beta={beta:g},{tag})",
        b=0.0,
        phi_closed=phi,
        potential_tail_exponent=(delta + sign * beta) / 2.0,
        ib_flag=True,
        first_moment_finite=False,
        params={"delta": delta, "beta": beta, "sign": sign},
    )


def _bessel():
    """Phi(lam) = log((1+lam) + sqrt((1+lam)^2 - 1)) = arccosh(1+lam)."""
    return BernsteinEntry(
        name="bessel",
        b=0.0,
        phi_closed=lambda lam: np.arccosh(1.0 + lam),
        potential_tail_exponent=1.0,
        ib_flag=True,
        first_moment_finite=False,
        params={},
    )


def _bessel_squared():
    """Phi(lam) = arccosh(1+lam)^2; behaves like 2*lam near 0."""
    return BernsteinEntry(
        name="bessel_squared",
        b=0.0,
        phi_closed=lambda lam: np.arccosh(1.0 + lam) ** 2,
        potential_tail_exponent=0.5,
        ib_flag=True,
        first_moment_finite=True,
        params={},
    )


def _linear(b):
    """Phi(lam) = b*lam, pure drift (identity subordination for b=1)."""
    if b <= 0:
        raise ParameterError("linear requires drift b > 0")
    return BernsteinEntry(
        name=f"linear(b={b:g})",
        b=b,
        phi_closed=lambda lam: b * lam,
        levy_density=None,
        ib_flag=True,
        first_moment_finite=True,
        params={"b": b},
    )


_FAMILIES = {
    "stable": _stable,
    "compound_poisson": _compound_poisson,
    "gamma": _gamma,
    "inverse_gaussian": _inverse_gaussian,
    "relativistic": _relativistic,
    "log_power": _log_power,
    "bessel": _bessel,
    "bessel_squared": _bessel_squared,
    "linear": _linear,
}


def catalog_names():
    """Names of the available families."""
    return sorted(_FAMILIES)


def catalog_lookup(name, **params):
    """Build the catalog entry ``name`` with the given family parameters.

    Raises
    ------
    UnknownEntryError
        If the family name is not in the catalog.
    ParameterError
        If a parameter lies outside the admissible range of the family.
    """
    try:
        family = _FAMILIES[name]
    except KeyError:
        raise UnknownEntryError(
            f"unknown Bernstein family {name!r}; "
            f"known: {', '.join(catalog_names())}") from None
    try:
        return family(**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for family {name!r}: {exc}")


def phi_eval(entry, lam, mode="closed", epsabs=1e-12, epsrel=1e-10):
    """Evaluate Phi(lam) either from the closed form or by Levy quadrature.

    ``levy_quadrature`` computes ``b*lam + int_0^inf (1-exp(-lam*s)) nu(s) ds``
    adaptively; it requires a stored Levy density.  Both modes agree within
    quadrature tolerance.
    """
    if lam < 0:
        raise ParameterError("Bernstein functions are defined on lam >= 0")
    if mode == "closed":
        return float(entry.phi(lam))
    if mode != "levy_quadrature":
        raise ValueError(f"unknown mode {mode!r}")
    if lam == 0.0:
        return entry.b * 0.0
    contribution = entry.b * lam
    if entry.levy_density is not None:
        val, _ = levy_integral(lambda s: -np.expm1(-lam * s),
                               entry.levy_density,
                               epsabs=epsabs, epsrel=epsrel)
        contribution += val
    return float(contribution)


def potential_density(entry, s):
    """Density u(s) of the 0-potential measure at s > 0.

    Raises :class:`AsymptoticsOnlyError` when the entry stores no density,
    carrying the tail exponent when one is known.
    """
    if s <= 0:
        raise ParameterError("potential density is defined on s > 0")
    if entry.potential_density is None:
        raise AsymptoticsOnlyError(
            f"{entry.name} carries no closed-form potential density "
            f"(tail exponent: {entry.potential_tail_exponent})",
            tail_exponent=entry.potential_tail_exponent)
    return float(entry.potential_density(s))


def transition_density(entry, t, s):
    """Subordinator density eta_t(s); requires a stored closed form."""
    if t <= 0 or s <= 0:
        raise ParameterError("transition density requires t > 0 and s > 0")
    if entry.transition_density is None:
        raise AsymptoticsOnlyError(
            f"{entry.name} carries no closed-form transition density")
    return float(entry.transition_density(t, s))


def potential_laplace_check(entry, lam, epsabs=1e-12, epsrel=1e-10):
    """Return ``int_0^inf exp(-lam*s) u(s) ds`` for comparison with 1/Phi(lam).

    When the entry provides a log-space density, the piece below s = e^-2 is
    integrated in the coordinate y = -1/ln(s).  Densities with a slowly
    varying 1/(s ln(1/s)^2) singularity (the gamma subordinator) keep a
    1/ln(1/delta) tail below any linear-scale cutoff delta, so only this
    substitution reaches the 1e-6 identity tolerance.
    """
    if entry.potential_density is None:
        raise AsymptoticsOnlyError(
            f"{entry.name} carries no closed-form potential density",
            tail_exponent=entry.potential_tail_exponent)
    anchors = (10.0 / lam,) if lam < 10.0 else ()
    if entry.log_potential_density is None:
        val, _ = integrate_zero_inf(
            lambda s: np.exp(-lam * s) * entry.potential_density(s),
            anchors=anchors, epsabs=epsabs, epsrel=epsrel)
        return val

    logu = entry.log_potential_density

    def deep(y):
        ell = -1.0 / y
        return np.exp(logu(ell) + ell - lam * np.exp(ell)) / (y * y)

    total, _ = integrate.quad(deep, 1e-10, 0.5, epsabs=epsabs,
                              epsrel=max(epsrel, 1e-9), limit=200)
    v, _ = integrate.quad(lambda s: np.exp(-lam * s) * entry.potential_density(s),
                          np.exp(-2.0), 1.0, epsabs=epsabs, epsrel=epsrel,
                          limit=200)
    total += v
    pts = [1.0] + sorted(a for a in anchors if a > 1.0) + [np.inf]
    for lo, hi in zip(pts[:-1], pts[1:]):
        v, _ = integrate.quad(
            lambda s: np.exp(-lam * s) * entry.potential_density(s),
            lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200)
        total += v
    return total
