"""Problem descriptions and the geometry that makes the summation work.

A problem couples a q-difference operator of infinite order (the
q-exponential of a twisted shift), finitely many Mahler-type terms, and a
forcing, all acting on frequency-grid coefficient functions. Before any
transform runs, a direction has to be selected so that the image of the
candidate sector under ``tau -> alpha~ * tau^{d}`` stays clear of the zero
cone of the q-exponential, and the separation ``delta_1`` between the
symbol ratio and the q-exponential image has to be measured, not assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    BadDirection,
    BoundViolation,
    DivergentInversion,
    SmallDelta,
    ValidationError,
)
from .fourier import FourierFn, FourierSpace, enorm
from .qcore import GrowthEnvelope, QParams, envelope_check, exp_q, mu_growth, q_factorial


def poly_eval_im(coeffs: np.ndarray, m) -> np.ndarray:
    """Evaluate a low-to-high coefficient polynomial at ``i m``."""
    return npoly.polyval(1j * np.asarray(m, dtype=float), np.asarray(coeffs))


def poly_degree(coeffs) -> int:
    arr = np.asarray(coeffs)
    nz = np.nonzero(np.abs(arr) > 0)[0]
    if nz.size == 0:
        raise ValidationError("zero polynomial has no degree")
    return int(nz[-1])


@dataclass(frozen=True)
class MahlerTerm:
    """One coupling term: ``a(z) * (t^l0 shift^l1 R(d_z) u)(t^l2, z)``.

    ``l2 = 1`` is a plain twisted shift, ``l2 >= 2`` adds the Mahler
    substitution ``t -> t^l2``. ``R`` is a low-to-high coefficient list and
    ``A`` the frequency profile of the coefficient ``a(z)``.
    """

    l0: int
    l1: int
    l2: int
    R: np.ndarray
    A: FourierFn

    def __post_init__(self):
        for name in ("l0", "l1", "l2"):
            v = getattr(self, name)
            if not isinstance(v, int):
                raise ValidationError(f"{name} must be an integer")
        if self.l0 < 1 or self.l2 < 1 or self.l1 < 0:
            raise ValidationError("need l0 >= 1, l1 >= 0, l2 >= 1")
        r = np.asarray(self.R, dtype=complex)
        r.setflags(write=False)
        object.__setattr__(self, "R", r)


@dataclass(frozen=True)
class ForcingTerm:
    """Forcing monomial in ``t`` of power ``j`` with frequency profile ``F``."""

    j: int
    F: FourierFn

    def __post_init__(self):
        if not isinstance(self.j, int) or self.j < 1:
            raise ValidationError("forcing power j must be an integer >= 1")


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem data on one frequency grid.

    ``Q`` and ``R_D`` are the left and dominant-right symbols (low-to-high
    coefficients), ``alpha_D > 0`` and ``d_D >= 1`` shape the infinite
    order operator, ``terms`` the Mahler couplings, ``forcing`` the
    inhomogeneity. All grid functions must share ``space``.
    """

    Q: np.ndarray
    R_D: np.ndarray
    alpha_D: float
    d_D: int
    terms: tuple
    forcing: tuple
    params: QParams
    space: FourierSpace

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen_array(self.Q))
        object.__setattr__(self, "R_D", _frozen_array(self.R_D))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "forcing", tuple(self.forcing))
        if self.alpha_D <= 0:
            raise ValidationError("alpha_D must be positive")
        if not isinstance(self.d_D, int) or self.d_D < 1:
            raise ValidationError("d_D must be an integer >= 1")
        for t in self.terms:
            if not t.A.space.same_grid(self.space):
                raise ValidationError("a coupling profile lives on a foreign grid")
        for f in self.forcing:
            if not f.F.space.same_grid(self.space):
                raise ValidationError("a forcing profile lives on a foreign grid")

    def q_symbol(self) -> np.ndarray:
        return poly_eval_im(self.Q, self.space.m)

    def rd_symbol(self) -> np.ndarray:
        return poly_eval_im(self.R_D, self.space.m)


def _frozen_array(x):
    arr = np.asarray(x, dtype=complex)
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def alpha_tilde(spec: ProblemSpec) -> float:
    """Deformed amplitude ``alpha_D / q^(d_D(d_D-1)/(2k))``."""
    e = Fraction(spec.d_D * (spec.d_D - 1), 2 * spec.params.k)
    return spec.alpha_D / spec.params.q ** float(e)


@dataclass(frozen=True)
class ConditionReport:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    conditions: tuple
    ratio_min: float
    ratio_max: float

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions)

    def failures(self):
        return [c for c in self.conditions if not c.ok]


def validate_spec(spec: ProblemSpec) -> ValidationReport:
    """Check the structural inequalities and the symbol hypotheses.

    Everything measurable is measured on the grid: nonvanishing of the
    symbols, the ratio corridor, finiteness of the decay certificates.
    The three index inequalities are evaluated in exact rational
    arithmetic.
    """
    conds = []
    k = spec.params.k

    for i, t in enumerate(spec.terms):
        ok = Fraction(t.l1) <= Fraction(t.l0, k) - 1
        conds.append(
            ConditionReport(
                f"shift-order bound term[{i}]",
                ok,
                f"l1={t.l1} vs l0/k-1={Fraction(t.l0, k) - 1}",
            )
        )

    mahler_ratios = [t.l2 for t in spec.terms if t.l2 >= 2]
    if mahler_ratios:
        bound = max(math.sqrt(k / (l2 ** 2 - 1)) for l2 in mahler_ratios)
        conds.append(
            ConditionReport(
                "leading-power vs Mahler ratios",
                spec.d_D > bound,
                f"d_D={spec.d_D} must exceed {bound:.6g}",
            )
        )

    try:
        dq, dr = poly_degree(spec.Q), poly_degree(spec.R_D)
        conds.append(
            ConditionReport("deg Q = deg R_D", dq == dr, f"deg Q={dq}, deg R_D={dr}")
        )
        for i, t in enumerate(spec.terms):
            dl = poly_degree(t.R)
            conds.append(
                ConditionReport(
                    f"deg R term[{i}] <= deg R_D", dl <= dr, f"{dl} vs {dr}"
                )
            )
    except ValidationError as exc:
        conds.append(ConditionReport("polynomial degrees", False, str(exc)))

    qv, rv = spec.q_symbol(), spec.rd_symbol()
    min_q, min_r = float(np.min(np.abs(qv))), float(np.min(np.abs(rv)))
    conds.append(
        ConditionReport("Q(im) nonvanishing", min_q > 1e-12, f"min |Q(im)| = {min_q:.3g}")
    )
    conds.append(
        ConditionReport(
            "R_D(im) nonvanishing", min_r > 1e-12, f"min |R_D(im)| = {min_r:.3g}"
        )
    )

    if min_r > 0:
        ratio = np.abs(qv / rv)
        r1, r2 = float(np.min(ratio)), float(np.max(ratio))
    else:
        r1, r2 = 0.0, math.inf
    conds.append(
        ConditionReport("ratio corridor finite", math.isfinite(r2), f"[{r1:.4g}, {r2:.4g}]")
    )

    for i, t in enumerate(spec.terms):
        c = enorm(t.A)
        conds.append(
            ConditionReport(
                f"coupling certificate term[{i}]", math.isfinite(c), f"C = {c:.4g}"
            )
        )
    for i, f in enumerate(spec.forcing):
        c = enorm(f.F)
        conds.append(
            ConditionReport(
                f"forcing certificate [{i}]", math.isfinite(c), f"C = {c:.4g}"
            )
        )

    return ValidationReport(tuple(conds), r1, r2)


@dataclass(frozen=True)
class SectorConfig:
    """Admissible direction with its certified radii and separation.

    ``rho`` is the disc radius keeping the q-exponential argument inside
    its small disc; ``R < rho`` is the working radius of the coefficient
    series; ``delta1`` the measured separation between the symbol ratio
    and the q-exponential image; ``envelope`` the fitted sector bounds of
    the q-exponential along the image sector.
    """

    d: float
    half_opening: float
    rho: float
    R: float
    alpha_tilde_D: float
    delta1: float
    envelope: GrowthEnvelope

    def __post_init__(self):
        if not (0.0 < self.R < self.rho):
            raise ValidationError("need 0 < R < rho")


def eval_Pm(tau, m, spec: ProblemSpec):
    """Denominator symbol ``Q(im) - exp_q(alpha~ tau^{d_D}) R_D(im)``.

    Broadcasts over ``tau`` and ``m``; ``tau`` is an ordinary complex
    variable (the symbol is single valued in it).
    """
    at = alpha_tilde(spec)
    tarr = np.asarray(tau, dtype=complex)
    e = exp_q(at * tarr ** spec.d_D, spec.params)
    out = poly_eval_im(spec.Q, m) - np.asarray(e) * poly_eval_im(spec.R_D, m)
    return complex(out) if np.ndim(out) == 0 else out


def _exp_image(spec, config_at, d, ho, radii, n_rays):
    phis = np.linspace(d - ho, d + ho, n_rays)
    tau = radii[:, None] * np.exp(1j * phis[None, :])
    return exp_q(config_at * tau.ravel() ** spec.d_D, spec.params)


def _min_distance(curve: np.ndarray, points: np.ndarray) -> tuple[float, int, int]:
    """Min over pairs of |curve_i - points_j|, chunked to bound memory."""
    best = math.inf
    bi = bj = 0
    for start in range(0, points.size, 512):
        block = points[start : start + 512]
        d = np.abs(curve[:, None] - block[None, :])
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] < best:
            best = float(d[i, j])
            bi, bj = int(i), int(start + j)
    return best, bi, bj


def select_sector(
    spec: ProblemSpec,
    requested_d: float,
    half_opening: float | None = None,
    theta_excl: float = math.pi / 6,
    n_rays: int = 64,
    n_radii: int = 64,
    delta_floor: float = 1e-8,
    R_fraction: float = 0.75,
) -> SectorConfig:
    """Certify a direction: envelope on the image sector, measured delta_1.

    The candidate half-opening is halved until the image sector (opening
    scaled by ``d_D``) passes the envelope check; the separation
    ``delta_1 = min |Q/R_D - exp_q(alpha~ tau^{d_D})|`` is then measured
    over the disc of radius ``rho`` and the sector sampled out to
    ``100 rho`` on a log-radial grid.

    Raises:
        BadDirection: no opening around ``requested_d`` clears the zero cone.
        SmallDelta: measured separation below ``delta_floor``.
    """
    at = alpha_tilde(spec)
    q = spec.params.q
    rho = (q ** 0.5 / ((q - 1.0) * at)) ** (1.0 / spec.d_D)

    ho = half_opening if half_opening is not None else math.pi / (4.0 * spec.d_D)
    env = None
    for _ in range(8):
        try:
            env = envelope_check(
                spec.d_D * requested_d, spec.d_D * ho, spec.params, theta_excl
            )
            break
        except Exception:
            ho *= 0.5
    if env is None:
        raise BadDirection(
            f"no admissible opening around direction {requested_d:.6g} "
            f"(image sector keeps meeting the excluded cone)"
        )

    ratio = spec.q_symbol() / spec.rd_symbol()

    disc_r = np.linspace(0.0, rho, n_radii + 1)[1:]
    disc_phi = np.linspace(-math.pi, math.pi, n_rays, endpoint=False)
    disc_img = exp_q(
        at * (disc_r[:, None] * np.exp(1j * disc_phi[None, :])).ravel() ** spec.d_D,
        spec.params,
    )
    sect_r = np.logspace(math.log10(1e-3 * rho), math.log10(100.0 * rho), n_radii)
    sect_img = _exp_image(spec, at, requested_d, ho, sect_r, n_rays)

    delta1, _, _ = _min_distance(ratio, np.concatenate([disc_img, sect_img]))
    if delta1 < delta_floor:
        raise SmallDelta(
            f"measured separation {delta1:.3e} below floor {delta_floor:.1e}; "
            "the symbol ratio meets the q-exponential image"
        )

    return SectorConfig(
        d=requested_d,
        half_opening=ho,
        rho=rho,
        R=R_fraction * rho,
        alpha_tilde_D=at,
        delta1=delta1,
        envelope=env,
    )


@dataclass(frozen=True)
class PmBoundReport:
    """Measured lower-bound data for the denominator symbol."""

    delta1: float
    min_margin: float
    far_field_constant: float
    far_radius: float
    gap_ok: bool
    gap_detail: str


def pm_lower_bound_report(
    spec: ProblemSpec,
    config: SectorConfig,
    n_rays: int = 64,
    n_radii: int = 64,
    far_radius: float | None = None,
) -> PmBoundReport:
    """Verify ``|P_m(tau)| >= delta1 |R_D(im)|`` on fresh samples and fit
    the far-field constant in front of ``exp(mu(alpha~ |tau|^{d_D}))``.

    Samples the disc and the sector (offset from the selection grid), and
    the far annulus ``[r_far, 100 r_far]`` along the sector.

    Raises:
        BoundViolation: a sample lands below ``delta1 |R_D|``; the witness
            carries the offending ``(tau, m)``.
    """
    at = config.alpha_tilde_D
    ratio = spec.q_symbol() / spec.rd_symbol()
    m_grid = spec.space.m

    phis = np.linspace(
        config.d - config.half_opening, config.d + config.half_opening, n_rays + 1
    )  # +1 offsets nodes from the selection pass
    radii = np.logspace(math.log10(2e-3 * config.rho), math.log10(90.0 * config.rho), n_radii + 1)
    disc_r = np.linspace(0.0, config.rho, n_radii)[1:]
    disc_phi = np.linspace(-math.pi, math.pi, n_rays + 2, endpoint=False)

    tau_sets = [
        (radii[:, None] * np.exp(1j * phis[None, :])).ravel(),
        (disc_r[:, None] * np.exp(1j * disc_phi[None, :])).ravel(),
    ]
    min_margin = math.inf
    for taus in tau_sets:
        img = exp_q(at * taus ** spec.d_D, spec.params)
        dist, i, j = _min_distance(ratio, img)
        margin = dist / config.delta1
        if dist < config.delta1 * (1.0 - 1e-9):
            raise BoundViolation(
                f"|P_m| = {dist:.6e} |R_D| below delta1 = {config.delta1:.6e} |R_D|",
                witness=(complex(taus[j]), float(m_grid[i])),
            )
        min_margin = min(min_margin, margin)

    r_far = far_radius if far_radius is not None else max(1.0, config.rho)
    far_r = np.logspace(math.log10(r_far), math.log10(100.0 * r_far), n_radii)
    far_phis = np.linspace(
        config.d - config.half_opening, config.d + config.half_opening, 8
    )
    fit = math.inf
    for phi in far_phis:
        taus = far_r * np.exp(1j * phi)
        img = exp_q(at * taus ** spec.d_D, spec.params)
        # per-tau distance to the ratio curve, normalised by the envelope
        for jt, tau in enumerate(taus):
            d = float(np.min(np.abs(ratio - img[jt])))
            envv = math.exp(mu_growth(at * abs(tau) ** spec.d_D, spec.params))
            fit = min(fit, d / envv)

    # corridor gap: the ratio must sit below both the disc floor and the
    # sector floor of |exp_q|
    _, r2 = float(np.min(np.abs(ratio))), float(np.max(np.abs(ratio)))
    x0 = spec.params.q ** 0.5 / (spec.params.q - 1.0)
    xs = np.logspace(math.log10(x0), 4.0, 400)
    sector_floor = config.envelope.lower_factor() * float(np.min(np.exp(mu_growth(xs, spec.params))))
    gap_ok = r2 < min(config.envelope.C0, sector_floor)
    gap_detail = (
        f"r2={r2:.4g} vs C0={config.envelope.C0:.4g}, "
        f"sector floor={sector_floor:.4g}"
    )

    return PmBoundReport(
        delta1=config.delta1,
        min_margin=float(min_margin),
        far_field_constant=float(fit),
        far_radius=float(r_far),
        gap_ok=gap_ok,
        gap_detail=gap_detail,
    )


def inv_pm_taylor(m, spec: ProblemSpec, config: SectorConfig, N: int):
    """Coefficients ``f_0 .. f_N`` of ``1/P_m`` around ``tau = 0``.

    Uses the reciprocal-series recursion against the q-exponential Taylor
    coefficients: only powers that are multiples of ``d_D`` carry mass.
    Vectorised over ``m`` (scalar in, scalars out; array in, rows out:
    shape ``(N+1,) + m.shape``).

    Raises:
        DivergentInversion: ``Q(im) - R_D(im)`` vanishes somewhere, so the
            constant term cannot be inverted.
    """
    if N < 0:
        raise ValidationError("need N >= 0")
    q, k = spec.params.q, spec.params.k
    at = config.alpha_tilde_D
    qv = poly_eval_im(spec.Q, m)
    rv = poly_eval_im(spec.R_D, m)

    c = np.zeros(N + 1)
    for n in range(0, N // spec.d_D + 1):
        c[n * spec.d_D] = at ** n / q_factorial(n, q)

    p0 = qv - rv  # c[0] = 1
    if np.min(np.abs(p0)) < 1e-300:
        raise DivergentInversion("Q(im) = R_D(im) at some m; 1/P has no Taylor series")

    shape = (N + 1,) + np.shape(p0)
    f = np.zeros(shape, dtype=complex)
    f[0] = 1.0 / p0
    for p in range(1, N + 1):
        acc = np.zeros(np.shape(p0), dtype=complex)
        for j in range(spec.d_D, p + 1, spec.d_D):
            if c[j] != 0.0:
                acc = acc + (-rv * c[j]) * f[p - j]
        f[p] = -f[0] * acc
    return f
