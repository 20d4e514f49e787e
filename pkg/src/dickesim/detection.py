"""Photon-count statistics and maximum-likelihood readout for two ions.

Counts from one detection window are modeled as Poisson: one bright (down)
ion contributes ``lambda_bright`` mean counts per window, background
contributes ``lambda_bg``.  A dark (up) ion may be repumped to the bright
state during the window at rate gamma; conditioned on a decay at time tau
its mean count is the time-weighted mix
``lambda_dark * tau/T + lambda_bright * (1 - tau/T)``, and the decay time
is integrated out numerically (Simpson rule over a uniform tau grid,
validated against Monte Carlo sampling in the test suite).

Composite distributions for 0/1/2 bright ions are discrete convolutions of
background and single-ion distributions; an observed sample of counts is
fit with the three-component mixture by maximizing the log-likelihood over
the population simplex (EM-style multiplicative updates; the problem is
concave, so the interior optimum is global).  Uncertainties come from a
nonparametric bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, stats
from scipy.integrate import simpson

from .errors import DataError, IdentifiabilityError

DEFAULT_N_MAX = 100
DEFAULT_QUAD_NODES = 513  # 512 Simpson intervals over the detection window


@dataclass(frozen=True)
class CountDistribution:
    """Probabilities of observing n = 0..n_max photons (tail mass beyond
    n_max folded into the last bin)."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        if p.ndim != 1 or len(p) < 1:
            raise ValueError("probabilities must be a 1-d array")
        if np.any(p < -1e-12):
            raise ValueError("probabilities must be non-negative")
        total = float(np.sum(p))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @property
    def n_max(self):
        return len(self.probabilities) - 1

    def mean(self):
        return float(np.arange(len(self.probabilities)) @ self.probabilities)


@dataclass(frozen=True)
class ReadoutModel:
    """Per-window count rates and the repump rate of one detection setup.

    ``lambda_*`` are mean counts per detection window (bright ion, dark
    ion, background); ``gamma`` is the dark-to-bright repump rate in 1/s
    over a window of ``t_detect`` seconds.
    """

    lambda_bright: float
    lambda_dark: float
    lambda_bg: float
    gamma: float
    t_detect: float = 200e-6

    def __post_init__(self):
        for name in ("lambda_bright", "lambda_dark", "lambda_bg", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.t_detect <= 0:
            raise ValueError("t_detect must be positive")

    @property
    def gamma_t(self):
        return self.gamma * self.t_detect


def _folded_poisson(mean, n_max):
    n = np.arange(n_max + 1)
    p = stats.poisson.pmf(n, mean)
    p[-1] += stats.poisson.sf(n_max, mean)
    return p


def poisson_dist(mean, n_max=DEFAULT_N_MAX):
    """Poisson count distribution with the tail folded into the last bin."""
    if mean < 0:
        raise ValueError("mean must be >= 0")
    return CountDistribution(_folded_poisson(mean, n_max))


def convolve(g, h):
    """Discrete convolution (G*H)(n) = sum_{m<=n} G(n-m) H(m), tail-folded
    back to the common n_max."""
    if g.n_max != h.n_max:
        raise ValueError("distributions must share the same n_max")
    full = np.convolve(g.probabilities, h.probabilities)
    out = full[: g.n_max + 1].copy()
    out[-1] += float(np.sum(full[g.n_max + 1:]))
    return CountDistribution(out)


def bright_ion_dist(model, n_max=DEFAULT_N_MAX):
    """Counts from a single bright (down) ion: plain Poisson."""
    return poisson_dist(model.lambda_bright, n_max)


def dark_ion_dist(model, n_max=DEFAULT_N_MAX, quad_nodes=DEFAULT_QUAD_NODES):
    """Counts from a single ion that starts dark (up).

    With probability exp(-gamma T) the ion survives the window dark and
    contributes Poisson(lambda_dark).  Otherwise it decays at time tau
    (exponential density) and contributes Poisson counts with the
    time-weighted mean; the tau integral is a Simpson quadrature whose
    decayed-branch mass is rescaled to the exact 1 - exp(-gamma T).
    """
    gt = model.gamma_t
    if gt == 0.0:
        return poisson_dist(model.lambda_dark, n_max)
    x = np.linspace(0.0, 1.0, quad_nodes)  # tau / T
    means = model.lambda_dark * x + model.lambda_bright * (1.0 - x)
    density = gt * np.exp(-gt * x)
    pmf = stats.poisson.pmf(np.arange(n_max + 1)[:, None], means[None, :])
    pmf[-1, :] += stats.poisson.sf(n_max, means)
    decayed = simpson(pmf * density[None, :], x=x, axis=1)
    raw_mass = simpson(density, x=x)
    exact_mass = 1.0 - np.exp(-gt)
    if raw_mass > 0:
        decayed *= exact_mass / raw_mass
    p = np.exp(-gt) * _folded_poisson(model.lambda_dark, n_max) + decayed
    return CountDistribution(p)


@dataclass(frozen=True)
class CountModel:
    """The three composite distributions P(n|i) for i = 0, 1, 2 bright ions
    (index = number of ions in the down state)."""

    dists: tuple
    model: ReadoutModel
    n_max: int

    def probability_matrix(self):
        """(3, n_max+1) array of P(n|i)."""
        return np.stack([d.probabilities for d in self.dists])


@lru_cache(maxsize=32)
def composite_dists(model, n_max=DEFAULT_N_MAX, quad_nodes=DEFAULT_QUAD_NODES):
    """Composite count distributions for two equally illuminated ions:

    P(n|0) = P_bg * P_up * P_up,
    P(n|1) = P_bg * P_up * P_down,
    P(n|2) = P_bg * P_down * P_down.
    """
    bg = poisson_dist(model.lambda_bg, n_max)
    up = dark_ion_dist(model, n_max, quad_nodes)
    down = bright_ion_dist(model, n_max)
    return CountModel(
        dists=(
            convolve(convolve(bg, up), up),
            convolve(convolve(bg, up), down),
            convolve(convolve(bg, down), down),
        ),
        model=model,
        n_max=n_max,
    )


def _as_count_model(model, n_max=DEFAULT_N_MAX):
    if isinstance(model, CountModel):
        return model
    return composite_dists(model, n_max)


@dataclass(frozen=True)
class FitResult:
    """Maximum-likelihood mixture populations with bootstrap uncertainties."""

    populations: np.ndarray
    log_likelihood: float
    std_errors: np.ndarray
    n_samples: int
    bootstrap_populations: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.populations, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "populations", c)
        err = np.array(self.std_errors, dtype=float)
        err.setflags(write=False)
        object.__setattr__(self, "std_errors", err)
        if np.any(c < -1e-12) or np.any(c > 1.0 + 1e-12):
            raise ValueError("populations must lie in [0, 1]")
        if abs(float(np.sum(c)) - 1.0) > 1e-9:
            raise ValueError("populations must sum to 1")


def _em_fit(hist, pmat, c0=None, tol=1e-10, max_iter=200000):
    """Maximize sum_n h_n log(sum_i c_i P_in) over the simplex."""
    total = float(np.sum(hist))
    k = pmat.shape[0]
    c = np.full(k, 1.0 / k) if c0 is None else np.array(c0, dtype=float)
    c /= np.sum(c)
    ll_prev = -np.inf
    for _ in range(max_iter):
        mix = c @ pmat
        ll = float(hist @ np.log(np.clip(mix, 1e-300, None)))
        if ll - ll_prev <= tol:
            break
        ll_prev = ll
        resp = pmat @ (hist / np.clip(mix, 1e-300, None))
        c = c * resp / total
        c = np.clip(c, 0.0, None)
        c /= np.sum(c)
    return c, ll


def ml_fit(samples, model, n_bootstrap=200, seed=0, n_max=DEFAULT_N_MAX):
    """Fit mixture populations (c0, c1, c2) to a sample of photon counts.

    ``model`` may be a ReadoutModel (composites are built at the default
    n_max) or a prebuilt CountModel.  Standard errors are the bootstrap
    standard deviations over ``n_bootstrap`` multinomial resamples.
    """
    cm = _as_count_model(model, n_max)
    counts = np.asarray(samples)
    if counts.size == 0:
        raise ValueError("need at least one sample")
    if not np.issubdtype(counts.dtype, np.integer):
        rounded = np.rint(counts)
        if np.max(np.abs(counts - rounded)) > 0:
            raise DataError("photon counts must be integers")
        counts = rounded.astype(int)
    if counts.min() < 0 or counts.max() > cm.n_max:
        raise DataError(
            f"photon counts must lie in [0, {cm.n_max}]; "
            f"got range [{counts.min()}, {counts.max()}]")

    hist = np.bincount(counts, minlength=cm.n_max + 1).astype(float)
    pmat = cm.probability_matrix()
    c_hat, ll = _em_fit(hist, pmat)

    boots = None
    errors = np.zeros(3)
    if n_bootstrap > 0:
        rng = np.random.default_rng(seed)
        n = int(np.sum(hist))
        boots = np.empty((n_bootstrap, 3))
        for b in range(n_bootstrap):
            resampled = rng.multinomial(n, hist / n).astype(float)
            boots[b], _ = _em_fit(resampled, pmat, c0=np.clip(c_hat, 1e-6, None))
        errors = np.std(boots, axis=0, ddof=1)

    return FitResult(
        populations=c_hat,
        log_likelihood=ll,
        std_errors=errors,
        n_samples=int(np.sum(hist)),
        bootstrap_populations=boots,
    )


def parity_from_fit(fit):
    """Two-qubit parity from fitted bright-ion populations: c0 + c2 - c1."""
    c = fit.populations
    return float(c[0] + c[2] - c[1])


def parity_std_from_fit(fit):
    """Bootstrap standard deviation of the parity (None without bootstrap)."""
    b = fit.bootstrap_populations
    if b is None:
        return None
    return float(np.std(b[:, 0] + b[:, 2] - b[:, 1], ddof=1))


def synthesize_shots(populations, model, n_shots, seed, n_max=DEFAULT_N_MAX):
    """Draw i.i.d. photon counts from the mixture sum_i c_i P(n|i).

    Reproducible for a fixed seed (an int, SeedSequence or Generator).
    """
    c = np.asarray(populations, dtype=float)
    if np.any(c < -1e-12):
        raise ValueError("populations must be non-negative")
    if abs(float(np.sum(c)) - 1.0) > 1e-9:
        raise ValueError("populations must sum to 1")
    if n_shots < 0:
        raise ValueError("n_shots must be >= 0")
    cm = _as_count_model(model, n_max)
    if len(c) != len(cm.dists):
        raise ValueError("populations length must match the model components")
    rng = np.random.default_rng(seed)
    c = np.clip(c, 0.0, None)
    c /= np.sum(c)
    component = rng.choice(len(c), size=int(n_shots), p=c)
    counts = np.zeros(int(n_shots), dtype=int)
    support = np.arange(cm.n_max + 1)
    for i, dist in enumerate(cm.dists):
        mask = component == i
        if np.any(mask):
            counts[mask] = rng.choice(support, size=int(np.sum(mask)),
                                      p=dist.probabilities)
    return counts


# --- calibration against reference histograms --------------------------------

_CAL_PARAMS = ("lambda_bright", "lambda_dark", "lambda_bg", "gamma")


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted readout model plus goodness-of-fit diagnostics (Pearson chi^2
    with tail bins merged to expected counts >= 5)."""

    model: ReadoutModel
    log_likelihood: float
    chi2_bright: float
    chi2_dark: float
    dof_bright: int
    dof_dark: int


def _check_reference(hist, name):
    h = np.asarray(hist, dtype=float)
    if h.ndim != 1 or np.any(h < 0):
        raise DataError(f"{name} histogram must be 1-d and non-negative")
    if np.sum(h) <= 0:
        raise IdentifiabilityError(f"{name} reference histogram is empty")
    if np.count_nonzero(h) < 2:
        raise IdentifiabilityError(
            f"{name} reference histogram occupies a single bin; "
            "rates are not identifiable")
    return h


def _pearson_chi2(hist, probs):
    """Pearson chi^2 after merging low-expectation bins (from the right)."""
    n = float(np.sum(hist))
    expected = probs * n
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(hist, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if exp_m:
            obs_m[-1] += acc_o
            exp_m[-1] += acc_e
        else:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
    obs_m = np.asarray(obs_m)
    exp_m = np.asarray(exp_m)
    chi2 = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
    return chi2, max(len(obs_m) - 1, 1)


def calibrate(ref_bright, ref_dark, t_detect=200e-6, n_max=None, fix=None,
              quad_nodes=DEFAULT_QUAD_NODES):
    """Joint maximum-likelihood fit of the readout model to two reference
    histograms: an all-bright preparation (both ions down, P(n|2)) and an
    all-dark preparation (both ions up, P(n|0)).

    ``fix`` optionally pins parameters (by name: lambda_bright,
    lambda_dark, lambda_bg, gamma) instead of fitting them.  Note that the
    two references constrain only three combinations of the four rates:
    trading background against the per-ion rates along
    (d lambda_bg, d lambda_dark, d lambda_bright) = (2e, -e, -e) leaves
    every component distribution unchanged, so the free four-parameter fit
    returns one point of that ridge.  The composite distributions (and any
    population fit built on them) are unaffected; fix lambda_bg from an
    independent background measurement when the individual rates matter.
    """
    hb = _check_reference(ref_bright, "bright")
    hd = _check_reference(ref_dark, "dark")
    if n_max is None:
        n_max = max(len(hb), len(hd)) - 1
    if len(hb) < n_max + 1:
        hb = np.pad(hb, (0, n_max + 1 - len(hb)))
    if len(hd) < n_max + 1:
        hd = np.pad(hd, (0, n_max + 1 - len(hd)))

    fix = dict(fix or {})
    unknown = set(fix) - set(_CAL_PARAMS)
    if unknown:
        raise ValueError(f"unknown parameters in fix: {sorted(unknown)}")
    # gamma enters the likelihood only through gamma * t_detect
    if "gamma" in fix:
        fix["gamma"] = fix["gamma"] * t_detect

    mean_b = float(np.arange(len(hb)) @ hb / np.sum(hb))
    mean_d = float(np.arange(len(hd)) @ hd / np.sum(hd))
    start = {
        "lambda_bright": max((mean_b - 0.5 * mean_d) / 2.0, 0.1),
        "lambda_dark": max(0.25 * mean_d, 1e-3),
        "lambda_bg": max(0.5 * mean_d, 1e-3),
        "gamma": 0.1,  # gamma * t_detect
    }
    free = [p for p in _CAL_PARAMS if p not in fix]
    if not free:
        raise ValueError("at least one parameter must be free")

    def build(theta):
        vals = dict(fix)
        vals.update(dict(zip(free, theta)))
        return ReadoutModel(
            lambda_bright=max(vals["lambda_bright"], 0.0),
            lambda_dark=max(vals["lambda_dark"], 0.0),
            lambda_bg=max(vals["lambda_bg"], 0.0),
            gamma=max(vals["gamma"], 0.0) / t_detect,
            t_detect=t_detect,
        )

    def nll(theta):
        cm = composite_dists(build(theta), n_max, quad_nodes)
        p2 = np.clip(cm.dists[2].probabilities, 1e-300, None)
        p0 = np.clip(cm.dists[0].probabilities, 1e-300, None)
        return -(hb @ np.log(p2) + hd @ np.log(p0))

    x0 = np.array([start[p] for p in free])
    bounds = [(1e-9, None) if p != "gamma" else (0.0, 20.0) for p in free]
    res = optimize.minimize(nll, x0, method="L-BFGS-B", bounds=bounds)
    model = build(res.x)
    cm = composite_dists(model, n_max, quad_nodes)
    chi2_b, dof_b = _pearson_chi2(hb, cm.dists[2].probabilities)
    chi2_d, dof_d = _pearson_chi2(hd, cm.dists[0].probabilities)
    return CalibrationResult(
        model=model,
        log_likelihood=float(-res.fun),
        chi2_bright=chi2_b,
        chi2_dark=chi2_d,
        dof_bright=dof_b,
        dof_dark=dof_d,
    )


# --- parity scans -------------------------------------------------------------


@dataclass(frozen=True)
class ParityScanResult:
    """Sinusoid fit of parity versus analysis phase, period pi enforced:
    parity(phi) = amplitude * cos(2 phi - phase_offset) + offset."""

    phases: np.ndarray
    parities: np.ndarray
    parity_errors: np.ndarray
    amplitude: float
    amplitude_error: float
    phase_offset: float
    offset: float
    offset_error: float
    coherence_term: float


def parity_scan_analysis(scans, model, n_bootstrap=100, seed=0,
                         n_max=DEFAULT_N_MAX):
    """Per-phase ML parity estimates and a least-squares sinusoid fit.

    ``scans`` is an iterable of (phi, samples).  The fit enforces the pi
    period of a two-qubit parity oscillation; the coherence term reported
    is the two-phase average (parity(0) + parity(pi/2)) / 2 evaluated from
    the fit, which equals the fitted offset.
    """
    cm = _as_count_model(model, n_max)
    scans = list(scans)
    phases = np.array([float(phi) for phi, _ in scans])
    if len(np.unique(np.round(phases, 12))) < 4:
        raise IdentifiabilityError("need at least 4 distinct analysis phases")

    root = (seed if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed))
    rng_seeds = root.spawn(len(scans))
    parities = np.empty(len(scans))
    errors = np.empty(len(scans))
    for j, (_, samples) in enumerate(scans):
        fit = ml_fit(samples, cm, n_bootstrap=n_bootstrap, seed=rng_seeds[j])
        parities[j] = parity_from_fit(fit)
        std = parity_std_from_fit(fit)
        errors[j] = std if std is not None else np.nan

    design = np.column_stack([np.cos(2 * phases), np.sin(2 * phases),
                              np.ones_like(phases)])
    have_errors = bool(np.all(np.isfinite(errors)))
    if have_errors:
        # boundary-pinned fits can bootstrap to sigma ~ 0; floor the
        # weights so no single phase dominates the normal equations
        floor = max(float(np.max(errors)) * 1e-3, 1e-6)
        w = 1.0 / np.maximum(errors, floor) ** 2
    else:
        w = np.ones_like(parities)
    a_mat = design.T @ (w[:, None] * design)
    beta = np.linalg.solve(a_mat, design.T @ (w * parities))
    cov = np.linalg.inv(a_mat)
    if not have_errors:
        resid = parities - design @ beta
        dof = max(len(parities) - 3, 1)
        cov = cov * float(resid @ resid) / dof

    a, b, offset = beta
    amplitude = float(np.hypot(a, b))
    if amplitude > 1e-12:
        amp_var = (a * a * cov[0, 0] + b * b * cov[1, 1]
                   + 2 * a * b * cov[0, 1]) / amplitude**2
    else:
        amp_var = max(cov[0, 0], cov[1, 1])
    return ParityScanResult(
        phases=phases,
        parities=parities,
        parity_errors=errors,
        amplitude=amplitude,
        amplitude_error=float(np.sqrt(max(amp_var, 0.0))),
        phase_offset=float(np.arctan2(b, a)),
        offset=float(offset),
        offset_error=float(np.sqrt(max(cov[2, 2], 0.0))),
        coherence_term=float(offset),
    )


def estimate_period(phases, parities):
    """Free-frequency cosine fit A cos(k phi - phi0) + B; returns the
    period 2 pi / k.  Used to verify the pi periodicity of a parity
    oscillation without assuming it."""
    phases = np.asarray(phases, dtype=float)
    parities = np.asarray(parities, dtype=float)

    def f(phi, amp, k, phi0, off):
        return amp * np.cos(k * phi - phi0) + off

    p0 = [max((parities.max() - parities.min()) / 2.0, 1e-3), 2.0, 0.0,
          float(np.mean(parities))]
    try:
        popt, _ = optimize.curve_fit(
            f, phases, parities, p0=p0,
            bounds=([0.0, 0.2, -2 * np.pi, -1.5], [2.0, 10.0, 2 * np.pi, 1.5]),
            maxfev=20000)
    except RuntimeError as exc:
        raise DataError(f"period fit did not converge: {exc}") from exc
    return float(2 * np.pi / popt[1])
