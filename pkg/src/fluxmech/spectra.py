"""Phonon number-splitting spectra: Voigt peaks, displaced-thermal Fock
distributions, drift alignment and the mean-phonon calibration line.

Peak ``n`` sits at ``f_eg + n * two_chi`` with ``two_chi = chi_e - chi_g``
(the convention of :mod:`fluxmech.coupled`), so a positive ``two_chi`` puts
higher phonon numbers at higher qubit frequency.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .fitting import FitError, FitProblem, least_squares, weighted_linear_fit
from .quantum import H_PLANCK, K_BOLTZMANN, bose_occupation

GRID_RTOL = 1e-6
MAD_SCALE = 1.4826  # MAD -> Gaussian sigma
ALPHA_DCHI2 = 4.0


class DegenerateProfileError(ValueError):
    pass


class AlignmentError(RuntimeError):
    pass


def voigt_profile(x, sigma, gamma):
    """Unit-area Voigt profile; ``sigma`` Gaussian std, ``gamma`` Lorentzian HWHM."""
    if sigma < 0 or gamma < 0:
        raise ValueError("widths must be non-negative")
    if sigma == 0 and gamma == 0:
        raise DegenerateProfileError("sigma and gamma are both zero")
    v = special.voigt_profile(np.asarray(x, dtype=float), sigma, gamma)
    return v if np.ndim(v) else float(v)


def voigt_fwhm(sigma, gamma):
    # Olivero-Longbothum, 0.02% accurate
    fg = 2 * sigma * np.sqrt(2 * np.log(2))
    fl = 2 * gamma
    return 0.5346 * fl + np.sqrt(0.2166 * fl**2 + fg**2)


def displaced_thermal_pn(n_bar, alpha_sq, n):
    """Fock populations of ``D(alpha) rho_th D(alpha)^dag``.

    ``n`` may be an integer or an array of integers. ``n_bar = 0`` gives the
    Poisson (coherent-state) distribution and ``alpha_sq = 0`` the thermal one.
    """
    if n_bar < 0 or alpha_sq < 0:
        raise ValueError("n_bar and alpha_sq must be non-negative")
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("n must be non-negative")
    nf = n.astype(float)
    tau = n_bar / (1 + n_bar)
    # tau^n L_n(-a/tau) = sum_k C(n, k) tau^(n-k) a^k / k!, a sum of non-negative
    # terms; summed in log space it stays finite as tau -> 0 (Poisson limit)
    a = alpha_sq * (1 - tau) ** 2
    k = np.arange(int(nf.max(initial=0.0)) + 1)
    nn, kk = np.meshgrid(np.atleast_1d(nf), k, indexing="ij")
    valid = kk <= nn
    kk_ = np.where(valid, kk, 0.0)
    logt = (special.gammaln(nn + 1) - special.gammaln(nn - kk_ + 1) - 2 * special.gammaln(kk_ + 1)
            + special.xlogy(nn - kk_, tau) + special.xlogy(kk_, a))
    logt = np.where(valid, logt, -np.inf)
    logs = special.logsumexp(logt, axis=1)
    out = np.exp(np.log1p(-tau) - alpha_sq * (1 - tau) + logs).reshape(n.shape)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def pn_tail_bound(n_bar, alpha_sq, n_max):
    """Upper bound on ``sum_{n > n_max} P(n)`` from Markov's inequality on ``n^2``."""
    mean = n_bar + alpha_sq
    second = mean + n_bar**2 * 2 + 4 * n_bar * alpha_sq + alpha_sq**2  # <n^2>
    return second / (n_max + 1) ** 2


@dataclass
class PhononDistribution:
    p: np.ndarray
    n_bar_th: float = np.nan
    alpha_sq: float = np.nan
    errors: dict = field(default_factory=dict)
    flags: tuple = ()
    mean_n: float = None  # defaults to n_bar_th + alpha_sq

    def __post_init__(self):
        if self.mean_n is None:
            self.mean_n = self.n_bar_th + self.alpha_sq
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < 0) or self.p.sum() > 1 + 1e-6:
            raise ValueError("phonon probabilities must be non-negative and sum to <= 1")

    @classmethod
    def displaced_thermal(cls, n_bar, alpha_sq, n_max=20):
        return cls(displaced_thermal_pn(n_bar, alpha_sq, np.arange(n_max + 1)), n_bar, alpha_sq)

    @classmethod
    def fock(cls, n, n_max=None):
        p = np.zeros((n_max if n_max is not None else n) + 1)
        p[n] = 1.0
        return cls(p, 0.0, 0.0)

    @property
    def mean_n_stderr(self):
        return self.errors.get("mean_n", np.nan)


@dataclass
class SpectrumTrace:
    freqs: np.ndarray  # MHz
    amplitude: np.ndarray
    timestamp: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        if self.freqs.ndim != 1 or self.freqs.shape != self.amplitude.shape:
            raise ValueError("freqs and amplitude must be 1-d and of equal length")
        if self.freqs.size < 3:
            raise ValueError("need at least three grid points")
        d = np.diff(self.freqs)
        if np.any(d <= 0):
            raise ValueError("frequency grid must be strictly ascending")
        if np.ptp(d) > GRID_RTOL * abs(d.mean()) + 1e-12:
            raise ValueError("frequency grid must be uniform")

    @property
    def step(self):
        return float((self.freqs[-1] - self.freqs[0]) / (self.freqs.size - 1))

    def area(self):
        return float(np.trapezoid(self.amplitude, self.freqs))


@dataclass
class VoigtPeakSet:
    centers: np.ndarray
    sigmas: np.ndarray
    gammas: np.ndarray
    areas: np.ndarray
    baseline: float = 0.0
    two_chi: float = np.nan
    errors: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        for k in ("centers", "sigmas", "gammas", "areas"):
            setattr(self, k, np.asarray(getattr(self, k), dtype=float))
        if np.any(self.sigmas < 0) or np.any(self.gammas < 0) \
                or np.any(self.sigmas + self.gammas <= 0):
            raise ValueError("peak widths must be positive")
        if np.any(self.areas < 0):
            raise ValueError("peak areas must be non-negative")

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        y = np.full_like(x, self.baseline)
        for c, s, g, a in zip(self.centers, self.sigmas, self.gammas, self.areas):
            y += a * special.voigt_profile(x - c, s, g)
        return y


def _widths(widths, n):
    s, g = widths
    return np.broadcast_to(np.asarray(s, float), (n,)), np.broadcast_to(np.asarray(g, float), (n,))


def synth_number_splitting(f_eg, two_chi, dist, widths, grid, scale=1.0):
    """Noiseless number-splitting spectrum ``scale * sum_n P(n) V(f - f_eg - n two_chi)``.

    ``widths`` is ``(sigma, gamma)`` in MHz, scalars or one per peak.
    """
    grid = np.asarray(grid, dtype=float)
    p = np.asarray(dist.p)
    sig, gam = _widths(widths, p.size)
    centers = f_eg + np.arange(p.size) * two_chi
    lo, hi = grid[0], grid[-1]
    shown = p > 1e-12
    if np.any(shown & ((centers < lo) | (centers > hi))):
        raise ValueError("frequency grid does not span all populated peaks")
    y = np.zeros_like(grid)
    for n in np.flatnonzero(shown):
        y += scale * p[n] * special.voigt_profile(grid - centers[n], sig[n], gam[n])
    return SpectrumTrace(grid, y)


def add_noise(trace, sigma, rng):
    return SpectrumTrace(trace.freqs, trace.amplitude + rng.normal(0.0, sigma, trace.freqs.size),
                         trace.timestamp, dict(trace.meta))


# -- fitting ---------------------------------------------------------------

def _multi_voigt(n_peaks):
    k = np.arange(n_peaks)

    def model(p, x):
        f0, tc, base = p[:3]
        sig, gam, area = p[3:3 + n_peaks], p[3 + n_peaks:3 + 2 * n_peaks], p[3 + 2 * n_peaks:]
        y = np.full_like(x, base)
        for i in k:
            y += area[i] * special.voigt_profile(x - f0 - i * tc, sig[i], gam[i])
        return y
    return model


def _shared_voigt(n_peaks):
    full = _multi_voigt(n_peaks)

    def model(p, x):
        q = np.concatenate([p[:3], np.full(n_peaks, p[3]), np.full(n_peaks, p[4]), p[5:]])
        return full(q, x)
    return model


def _stage1(trace, n_peaks, f0, tc, sigma, gamma, shared):
    x, y = trace.freqs, trace.amplitude
    v0 = special.voigt_profile(0.0, sigma, gamma)
    centers = f0 + np.arange(n_peaks) * tc
    heights = np.interp(centers, x, y, left=0.0, right=0.0)
    areas = np.clip(heights / v0, 1e-6 * max(y.max(), 1e-12) / v0, None)
    wmax = max(abs(tc), 2 * (sigma + gamma))  # wider peaks would not be resolved
    smin = 2 * trace.step  # narrower peaks would chase single noisy samples
    span = x[-1] - x[0]
    sigma = max(sigma, 1.5 * smin)
    if shared:
        p0 = np.concatenate([[f0, tc, 0.0, sigma, gamma], areas])
        lo = np.concatenate([[x[0], 0.2 * tc if tc > 0 else -span, -np.inf, smin, 1e-4],
                             np.zeros(n_peaks)])
        hi = np.concatenate([[x[-1], span if tc > 0 else -0.2 * tc, np.inf, wmax, wmax],
                             np.full(n_peaks, np.inf)])
        model = _shared_voigt(n_peaks)
    else:
        p0 = np.concatenate([[f0, tc, 0.0], np.full(n_peaks, sigma), np.full(n_peaks, gamma), areas])
        lo = np.concatenate([[x[0], 0.2 * tc if tc > 0 else -span, -np.inf],
                             np.full(n_peaks, smin), np.full(n_peaks, 1e-4), np.zeros(n_peaks)])
        hi = np.concatenate([[x[-1], span if tc > 0 else -0.2 * tc, np.inf],
                             np.full(2 * n_peaks, wmax), np.full(n_peaks, np.inf)])
        model = _multi_voigt(n_peaks)
    out = least_squares(FitProblem(model, x, y, p0, bounds=(lo, hi), max_iterations=400))
    out.extra["bounds"] = (lo, hi)
    return out


def _widths_at_bound(out, n_peaks):
    # linearized errors are meaningless for parameters pinned to a bound
    w = out.params[3:3 + 2 * n_peaks]
    lo, hi = out.extra["bounds"]
    lo, hi = lo[3:3 + 2 * n_peaks], hi[3:3 + 2 * n_peaks]
    return bool(np.any(w <= lo * (1 + 1e-6) + 1e-12) or np.any(w >= hi * (1 - 1e-6)))


def _unpack_stage1(out, n_peaks, shared):
    p, e = out.params, out.stderr
    f0, tc, base = p[:3]
    if shared:
        sig, gam = np.full(n_peaks, p[3]), np.full(n_peaks, p[4])
        area, area_cov = p[5:], out.covariance[5:, 5:]
    else:
        sig, gam = p[3:3 + n_peaks], p[3 + n_peaks:3 + 2 * n_peaks]
        area = p[3 + 2 * n_peaks:]
        area_cov = out.covariance[3 + 2 * n_peaks:, 3 + 2 * n_peaks:]
    return f0, tc, base, sig, gam, area, area_cov, e


def _stage2(areas, area_cov, n_bar0, alpha0, fix_alpha):
    n = np.arange(areas.size)
    # whiten with the full stage-1 covariance of the areas
    cov = area_cov + np.eye(areas.size) * 1e-12 * max(np.trace(area_cov), 1e-30)
    chol = np.linalg.cholesky(cov)
    y = np.linalg.solve(chol, areas)
    s0 = max(areas.sum(), 1e-12)
    if fix_alpha:
        def model(q, _):
            return np.linalg.solve(chol, q[0] * displaced_thermal_pn(q[1], 0.0, n))
        p0, bounds = [s0, max(n_bar0, 0.05)], ([0.0, 0.0], [np.inf, 50.0])
    else:
        def model(q, _):
            return np.linalg.solve(chol, q[0] * displaced_thermal_pn(q[1], q[2], n))
        p0, bounds = [s0, max(n_bar0, 0.05), max(alpha0, 0.05)], ([0.0, 0.0, 0.0], [np.inf, 50.0, 100.0])
    return least_squares(FitProblem(model, n, y, p0, bounds=bounds, absolute_sigma=True,
                                    max_iterations=400))


def fit_number_splitting(trace, n_peaks=6, init=None, shared_widths=False):
    """Two-stage fit of a reference-subtracted number-splitting trace.

    Stage 1 fits ``n_peaks`` Voigt peaks with a common spacing ``two_chi``,
    per-peak widths and non-negative areas. Stage 2 fits the areas (whitened
    by their stage-1 covariance) to ``S P(n; n_bar, alpha^2)``. When
    setting ``alpha = 0`` raises chi^2 by less than 4 (a 2 sigma likelihood
    ratio), the thermal fit is kept and flagged ``alpha_fixed_zero``.

    ``init`` keys: ``f_eg``, ``two_chi`` (required), ``sigma``, ``gamma``,
    ``n_bar``, ``alpha_sq``. With ``shared_widths`` all peaks share one
    ``(sigma, gamma)``; otherwise this is the fallback (flagged
    ``shared_widths``) when the independent-width fit has a singular
    covariance or a width pinned to its bound.
    """
    if n_peaks < 2:
        raise ValueError("need at least two peaks")
    init = dict(init or {})
    if "f_eg" not in init or "two_chi" not in init:
        raise ValueError("init must give f_eg and two_chi")
    sigma, gamma = init.get("sigma", 0.3), init.get("gamma", 0.3)
    flags = []
    shared = bool(shared_widths)
    out = _stage1(trace, n_peaks, init["f_eg"], init["two_chi"], sigma, gamma, shared=shared)
    if not shared and (not out.converged or _widths_at_bound(out, n_peaks)):
        # widths of near-empty peaks are not identifiable
        out = _stage1(trace, n_peaks, init["f_eg"], init["two_chi"], sigma, gamma, shared=True)
        shared = True
        flags.append("shared_widths")
    if not out.converged:
        raise FitError(f"stage 1 (peaks) did not converge: {out.message}", out, stage=1)
    f0, tc, base, sig, gam, area, area_cov, e = _unpack_stage1(out, n_peaks, shared)
    peaks = VoigtPeakSet(f0 + np.arange(n_peaks) * tc, sig, gam, area, base, tc,
                         errors={"f_eg": e[0], "two_chi": e[1], "baseline": e[2],
                                 "areas": np.sqrt(np.diag(area_cov)), "cov": area_cov,
                                 "residual_rms": out.residual_rms},
                         flags=tuple(flags))

    n_bar0, alpha0 = init.get("n_bar", 0.5), init.get("alpha_sq", 1.0)
    free = _stage2(area, area_cov, n_bar0, alpha0, fix_alpha=False)
    fixed = _stage2(area, area_cov, n_bar0, 0.0, fix_alpha=True)
    # likelihood-ratio test: alpha is resolved if dropping it costs >= 2 sigma
    delta_chi2 = 2 * (fixed.cost - free.cost)
    alpha_ok = free.converged and delta_chi2 >= ALPHA_DCHI2
    st2 = free if alpha_ok else fixed
    if not alpha_ok:
        flags.append("alpha_fixed_zero")
    if not st2.converged:
        raise FitError(f"stage 2 (distribution) did not converge: {st2.message}", st2, stage=2)
    scale, n_bar = st2.params[:2]
    alpha_sq = st2.params[2] if alpha_ok else 0.0
    cov = st2.covariance
    # <n> is constrained by the free fit even when its split between n_bar and
    # alpha^2 is not; the thermal-only refit biases it upward
    c = free.covariance
    var_free = c[1, 1] + c[2, 2] + 2 * c[1, 2]
    if free.converged and var_free > 0:
        mean_n, mean_err = free.params[1] + free.params[2], np.sqrt(var_free)
    else:
        mean_n, mean_err = n_bar, np.sqrt(cov[1, 1])
    errors = {"scale": float(np.sqrt(cov[0, 0])), "n_bar_th": float(np.sqrt(cov[1, 1])),
              "alpha_sq": float(np.sqrt(cov[2, 2])) if alpha_ok else np.nan,
              "mean_n": float(mean_err),
              "two_chi": float(e[1]), "chi2_stage2": float(2 * st2.cost),
              "dof_stage2": int(n_peaks - st2.params.size),
              "delta_chi2_alpha": float(delta_chi2)}
    nmax = max(n_peaks - 1, 20)
    dist = PhononDistribution(displaced_thermal_pn(n_bar, alpha_sq, np.arange(nmax + 1)),
                              float(n_bar), float(alpha_sq), errors, tuple(flags),
                              float(mean_n))
    peaks.errors["scale"] = float(scale)
    return peaks, dist


def calibration_fit(points):
    """Weighted line ``<n> = n_th + slope * amp_sq`` through ``(amp_sq, mean_n[, sigma])``.

    Returns ``(n_bar_th, slope, errors)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] not in (2, 3):
        raise ValueError("need at least three (amp_sq, mean_n[, sigma]) points")
    sigma = pts[:, 2] if pts.shape[1] == 3 else None
    out = weighted_linear_fit(pts[:, 0], pts[:, 1], sigma)
    errors = {"n_bar_th": float(out.stderr[0]), "slope": float(out.stderr[1]),
              "covariance": out.covariance}
    return float(out.params[0]), float(out.params[1]), errors


# -- drift alignment -------------------------------------------------------

def _noise_level(y):
    d = np.diff(y)
    return float(np.median(np.abs(d - np.median(d))) * MAD_SCALE / np.sqrt(2))


def fit_reference_peak(trace, window):
    """Gaussian fit in ``window``; returns ``(center, amplitude, noise)``."""
    lo, hi = window
    m = (trace.freqs >= lo) & (trace.freqs <= hi)
    if m.sum() < 5:
        raise AlignmentError("reference window holds fewer than five points")
    x, y = trace.freqs[m], trace.amplitude[m]
    i = int(np.argmax(y))
    base0 = float(np.median(np.concatenate([y[:2], y[-2:]])))
    p0 = [y[i] - base0, x[i], max((hi - lo) / 8, 2 * trace.step), base0]

    def g(p, x):
        return p[0] * np.exp(-0.5 * ((x - p[1]) / p[2]) ** 2) + p[3]
    bounds = ([0.0, lo, 0.5 * trace.step, -np.inf], [np.inf, hi, hi - lo, np.inf])
    try:
        out = least_squares(FitProblem(g, x, y, p0, bounds=bounds))
    except FitError as exc:
        raise AlignmentError(str(exc)) from exc
    noise = max(_noise_level(trace.amplitude), out.residual_rms)
    amp = out.params[0]
    if not np.isfinite(amp) or amp < 3 * noise:
        raise AlignmentError(f"reference peak amplitude {amp:.3g} below 3x noise {noise:.3g}")
    return float(out.params[1]), float(amp), noise


def mad_outliers(values, threshold=5.0):
    v = np.asarray(values, dtype=float)
    med = np.median(v)
    mad = np.median(np.abs(v - med)) * MAD_SCALE
    if mad == 0:
        return np.abs(v - med) > 0 if np.ptp(v) > 1e-12 * max(abs(med), 1.0) else np.zeros(v.size, bool)
    return np.abs(v - med) > threshold * mad


def shift_integer(y, k):
    """``out[i] = y[i - k]`` with NaN where undefined."""
    out = np.full_like(y, np.nan)
    if k > 0:
        out[k:] = y[:-k]
    elif k < 0:
        out[:k] = y[-k:]
    else:
        out[:] = y
    return out


def drift_align(traces, bin=1, reference_window=None, mad_threshold=5.0, reject=True):
    """Align repeated spectra on a reference peak and average them.

    Traces with outlying total power (``mad_threshold`` x MAD) are dropped,
    consecutive survivors are averaged in bins of ``bin`` (remainder dropped),
    the reference peak of each bin is fitted to a Gaussian inside
    ``reference_window`` and each bin is shifted by a whole number of grid
    steps onto the median center. Bins whose reference peak is not found are
    dropped with a warning. Grid points not covered by every surviving bin
    are trimmed. Details are in ``meta`` of the returned trace.
    """
    traces = list(traces)
    if len(traces) < 2:
        raise ValueError("need at least two traces")
    if bin < 1:
        raise ValueError("bin must be >= 1")
    if reference_window is None:
        raise ValueError("reference_window is required")
    freqs = traces[0].freqs
    for t in traces[1:]:
        if t.freqs.shape != freqs.shape or not np.allclose(t.freqs, freqs, rtol=0, atol=1e-9):
            raise ValueError("traces must share the same frequency grid")
    data = np.array([t.amplitude for t in traces])
    power = np.sum(data**2, axis=1)
    bad = mad_outliers(power, mad_threshold) if reject else np.zeros(len(traces), bool)
    kept = data[~bad]
    nb = kept.shape[0] // bin
    if nb < 1:
        raise AlignmentError("no complete bin left after anomaly rejection")
    binned = kept[:nb * bin].reshape(nb, bin, -1).mean(axis=1)
    step = traces[0].step
    centers, good = [], []
    for b, y in enumerate(binned):
        try:
            c, _, _ = fit_reference_peak(SpectrumTrace(freqs, y), reference_window)
        except AlignmentError as exc:
            warnings.warn(f"bin {b} dropped: {exc}", stacklevel=2)
            continue
        centers.append(c)
        good.append(b)
    if not good:
        raise AlignmentError("reference peak not found in any bin")
    centers = np.array(centers)
    target = float(np.median(centers))
    shifts = np.rint((target - centers) / step).astype(int)
    stack = np.array([shift_integer(binned[b], k) for b, k in zip(good, shifts)])
    valid = np.all(np.isfinite(stack), axis=0)
    if valid.sum() < 3:
        raise AlignmentError("shifts leave fewer than three common grid points")
    avg = stack[:, valid].mean(axis=0)
    meta = {"rejected": np.flatnonzero(bad).tolist(), "n_bins": int(nb),
            "dropped_bins": sorted(set(range(nb)) - set(good)), "centers": centers.tolist(),
            "shifts": shifts.tolist(), "target": target,
            "remainder_dropped": int(kept.shape[0] - nb * bin)}
    return SpectrumTrace(freqs[valid], avg, meta=meta)


# -- thermometry -----------------------------------------------------------

def effective_temperature(n_bar, freq_hz):
    """Bose-Einstein temperature (K) with occupation ``n_bar`` at ``freq_hz``."""
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    if freq_hz <= 0:
        raise ValueError("frequency must be positive")
    return H_PLANCK * freq_hz / K_BOLTZMANN / np.log1p(1.0 / n_bar)


def occupation_from_temperature(temp_k, freq_hz):
    return bose_occupation(freq_hz, temp_k)
