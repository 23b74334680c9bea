//! Closed-form photon statistics, pulse-parameter sweeps, emission spectra
//! and the perturbative single-excitation damping rate.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesolve::{EmissionResult, Liouvillian};
use crate::model::{excitation_number, Frame, PumpPulse, SystemModel, WAVEGUIDE};
use crate::quantum::CMatrix;
use crate::units::SPEED_OF_LIGHT;

/// Photon-number probabilities for one excitation pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonStats {
    pub p0: f64,
    pub p1: f64,
    /// 1 − P0 − P1.
    pub p_multi: f64,
    /// Mean photon number estimated as P1 + 2·P_multi.
    pub n_bar: f64,
}

impl PhotonStats {
    /// Build from P0 and P1; P_multi is the remainder, clipped at zero when
    /// rounding makes it slightly negative (P1 absorbs the difference).
    pub fn from_p0_p1(p0: f64, p1: f64) -> Self {
        let mut p1 = p1;
        let mut p_multi = 1.0 - p0 - p1;
        if p_multi < 0.0 {
            p1 = 1.0 - p0;
            p_multi = 0.0;
        }
        Self {
            p0,
            p1,
            p_multi,
            n_bar: p1 + 2.0 * p_multi,
        }
    }
}

/// e^z − 1 without cancellation for small |z|.
fn expm1_complex(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let ex = x.exp();
    let s = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * s * s, ex * y.sin())
}

const SERIES_THRESHOLD: f64 = 1e-6;

/// Zero- and one-photon probabilities after a top-hat pump of rate `r0` and
/// width `t` acting on the emitter–cavity pair with coupling `omega`
/// (cavity and radiative losses neglected, hence bounds on the full model).
///
/// P0 = e^{−r0 T}. P1 = 2e^{−r0T/2} − 2e^{−r0T} + r0² e^{−r0T/2}·4 sinh²(ηT/4)/η²
/// with η = (r0² − 16Ω²)^{1/2}; 4 sinh²(ηT/4) = 2(cosh(ηT/2) − 1). η is
/// imaginary for r0 < 4Ω and the hyperbolic functions then become
/// trigonometric; complex arithmetic covers both sides. Near η = 0 a series
/// replaces the quotient.
pub fn closed_form_stats(r0: f64, t: f64, omega: f64) -> Result<PhotonStats> {
    for (name, v) in [("r0", r0), ("T", t), ("omega", omega)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, "must be finite and non-negative"));
        }
    }
    let rt = r0 * t;
    let p0 = (-rt).exp();
    let eta = Complex64::new(r0 * r0 - 16.0 * omega * omega, 0.0).sqrt();
    let eta_t = eta * t;
    // r0² e^{−r0T/2} · 4 sinh²(ηT/4)/η²
    let coherent = if eta_t.norm() < SERIES_THRESHOLD {
        let eta2 = eta * eta;
        Complex64::new(r0 * r0 * (-0.5 * rt).exp() * t * t / 4.0, 0.0)
            * (Complex64::new(1.0, 0.0) + eta2 * (t * t / 48.0))
    } else {
        // e^{(η−r)T/4} − e^{−(η+r)T/4}; factored through expm1 unless
        // the two terms are far apart (where factoring overflows)
        let d = if eta_t.re.abs() > 1.0 {
            ((eta - r0) * (t / 4.0)).exp() - (-(eta + r0) * (t / 4.0)).exp()
        } else {
            (-(eta + r0) * (t / 4.0)).exp() * expm1_complex(eta_t * 0.5)
        };
        d * d * (r0 * r0) / (eta * eta)
    };
    let scale = coherent.re.abs().max(1.0);
    debug_assert!(
        coherent.im.abs() <= 1e-12 * scale,
        "imaginary residue {} in closed-form P1",
        coherent.im
    );
    let p1 = 2.0 * (-0.5 * rt).exp() - 2.0 * p0 + coherent.re;
    Ok(PhotonStats::from_p0_p1(p0, p1))
}

/// exp(−4Ω²T/r0) − P0: second-order single-photon estimate, reported as a
/// diagnostic only.
pub fn second_order_single_photon(r0: f64, t: f64, omega: f64) -> f64 {
    if r0 == 0.0 {
        return 0.0;
    }
    (-4.0 * omega * omega * t / r0).exp() - (-r0 * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub r0: f64,
    pub stats: PhotonStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Row-major over (T, r0): all r0 values for the first T, then the next T.
    pub points: Vec<SweepPoint>,
    /// Evaluation at T = 0.56 ps, r0 = 10¹³ Hz.
    pub operating_point: SweepPoint,
}

pub const OPERATING_WIDTH: f64 = 0.56e-12;
pub const OPERATING_RATE: f64 = 1e13;

/// Closed-form statistics on the T × r0 grid.
pub fn pulse_param_sweep(ts: &[f64], r0s: &[f64], omega: f64) -> Result<SweepResult> {
    if ts.is_empty() || r0s.is_empty() {
        return Err(Error::invalid(
            "grid",
            "pulse-width and absorption-rate grids must be non-empty",
        ));
    }
    let grid: Vec<(f64, f64)> = ts
        .iter()
        .flat_map(|&t| r0s.iter().map(move |&r| (t, r)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(t, r0)| closed_form_stats(r0, t, omega).map(|stats| SweepPoint { t, r0, stats }))
        .collect::<Result<Vec<_>>>()?;
    let operating_point = SweepPoint {
        t: OPERATING_WIDTH,
        r0: OPERATING_RATE,
        stats: closed_form_stats(OPERATING_RATE, OPERATING_WIDTH, omega)?,
    };
    Ok(SweepResult {
        points,
        operating_point,
    })
}

/// Which signal is Fourier transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumConvention {
    /// The intensity profile İ(t) itself.
    #[default]
    Intensity,
    /// The field-amplitude proxy √İ(t); gives the natural linewidth for an
    /// exponential decay.
    Amplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult {
    /// Frequency offsets from the carrier (Hz), ascending.
    pub frequencies: Vec<f64>,
    /// |dt·DFT|², so that Σ power·df = ∫|s|²dt.
    pub power: Vec<f64>,
    pub center_wavelength: f64,
    pub fwhm_frequency: f64,
    pub fwhm_wavelength: f64,
    pub convention: SpectrumConvention,
}

const MIN_FFT: usize = 1 << 16;
const MAX_FFT: usize = 1 << 22;

/// Spectrum of an [`EmissionResult`] intensity series.
pub fn emission_spectrum(
    result: &EmissionResult,
    lambda_center: f64,
    convention: SpectrumConvention,
) -> Result<SpectrumResult> {
    spectrum_of_series(&result.times, &result.intensity, lambda_center, convention)
}

/// Spectrum of a sampled intensity profile. Non-uniform samples are
/// linearly resampled onto a uniform grid with the same number of points.
pub fn spectrum_of_series(
    times: &[f64],
    intensity: &[f64],
    lambda_center: f64,
    convention: SpectrumConvention,
) -> Result<SpectrumResult> {
    if times.len() != intensity.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: intensity.len(),
        });
    }
    let n = times.len();
    if n < 8 {
        return Err(Error::SeriesTooShort(format!("{n} samples")));
    }
    let span = times[n - 1] - times[0];
    let dt = span / (n - 1) as f64;
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt);
    let samples: Vec<f64> = if uniform {
        intensity.to_vec()
    } else {
        (0..n)
            .map(|k| interpolate(times, intensity, times[0] + k as f64 * dt))
            .collect()
    };
    let signal: Vec<f64> = match convention {
        SpectrumConvention::Intensity => samples.clone(),
        SpectrumConvention::Amplitude => samples.iter().map(|v| v.max(0.0).sqrt()).collect(),
    };
    let peak = signal.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(peak > 0.0) {
        return Err(Error::SeriesTooShort(
            "the profile is identically zero".into(),
        ));
    }
    if signal[n - 1].abs() > 1e-3 * peak {
        return Err(Error::SeriesTooShort(format!(
            "profile still at {:.2e} of its peak at the last sample; extend t_final",
            signal[n - 1].abs() / peak
        )));
    }

    let nfft = (32 * n).max(MIN_FFT).next_power_of_two().min(MAX_FFT);
    if nfft < n {
        return Err(Error::invalid(
            "series",
            format!("{n} samples exceed the FFT limit"),
        ));
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    let df = 1.0 / (nfft as f64 * dt);
    let half = nfft / 2;
    let mut frequencies = Vec::with_capacity(nfft);
    let mut power = Vec::with_capacity(nfft);
    for k in 0..nfft {
        // fftshift: negative frequencies first
        let idx = (k + half) % nfft;
        let f = if idx >= half {
            idx as f64 - nfft as f64
        } else {
            idx as f64
        } * df;
        frequencies.push(f);
        power.push((buf[idx] * dt).norm_sqr());
    }
    let (ipk, pmax) =
        power.iter().enumerate().fold(
            (0, f64::MIN),
            |acc, (i, p)| if *p > acc.1 { (i, *p) } else { acc },
        );
    let halfmax = 0.5 * pmax;
    let mut lo = ipk;
    while lo > 0 && power[lo] > halfmax {
        lo -= 1;
    }
    let mut hi = ipk;
    while hi + 1 < nfft && power[hi] > halfmax {
        hi += 1;
    }
    if power[lo] > halfmax || power[hi] > halfmax {
        return Err(Error::SeriesTooShort(
            "half maximum not reached inside the frequency grid".into(),
        ));
    }
    let cross = |a: usize, b: usize| {
        let (fa, fb, pa, pb) = (frequencies[a], frequencies[b], power[a], power[b]);
        fa + (halfmax - pa) * (fb - fa) / (pb - pa)
    };
    let f_lo = cross(lo, lo + 1);
    let f_hi = cross(hi - 1, hi);
    let fwhm_frequency = f_hi - f_lo;
    let lambda2_over_c = lambda_center * lambda_center / SPEED_OF_LIGHT;
    Ok(SpectrumResult {
        center_wavelength: lambda_center - lambda2_over_c * frequencies[ipk],
        frequencies,
        power,
        fwhm_frequency,
        fwhm_wavelength: lambda2_over_c * fwhm_frequency,
        convention,
    })
}

fn interpolate(t: &[f64], y: &[f64], x: f64) -> f64 {
    match t.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => y[i],
        Err(0) => y[0],
        Err(i) if i >= t.len() => y[t.len() - 1],
        Err(i) => {
            let w = (x - t[i - 1]) / (t[i] - t[i - 1]);
            y[i - 1] + w * (y[i] - y[i - 1])
        }
    }
}

/// γ_{g0g1} + 2Ω₀²/(ω_C/(2Q) + γ_{gmgn} − 2γ_{g0g1}).
pub fn overall_damping_rate(
    gamma_g0g1: f64,
    gamma_gmgn: f64,
    omega0: f64,
    omega_c: f64,
    q: f64,
) -> Result<f64> {
    if !(q > 0.0) || !(omega_c > 0.0) {
        return Err(Error::invalid(
            "q",
            "cavity frequency and Q must be positive",
        ));
    }
    let denom = omega_c / (2.0 * q) + gamma_gmgn - 2.0 * gamma_g0g1;
    if !(denom > 0.0) {
        return Err(Error::Regime(format!(
            "damping-rate denominator κ + γ_gmgn − 2γ_g0g1 = {denom:e} is not positive"
        )));
    }
    Ok(gamma_g0g1 + 2.0 * omega0 * omega0 / denom)
}

/// Eigenvalues of the pump-off generator on the coherences ρ_{x,G} between
/// the ground state G = |g₀,0,0⟩ and the singly-excited states x (atom or
/// cavity excited, waveguide empty). No jump feeds this block, so the
/// eigenvalues are the amplitude decay rates of a single excitation;
/// populations relax at twice their real parts.
pub fn single_excitation_eigenvalues(model: &SystemModel) -> Result<Vec<Complex64>> {
    let quiet = model.clone().with_pump(PumpPulse::off());
    let l = Liouvillian::from_model(&quiet, Frame::Rotating)?;
    let n = l.dim();
    let number = excitation_number(&quiet)?;
    let ground = quiet.basis_index(Some(quiet.retained_ground()[0]), 0, 0)?;
    let space = quiet.space();
    let wg = space.factor_position(WAVEGUIDE)?;
    let block: Vec<usize> = (0..n)
        .filter(|&i| (number.matrix()[(i, i)].re - 1.0).abs() < 1e-12)
        .filter(|&i| space.digits_of(i)[wg] == 0)
        .collect();
    if block.is_empty() {
        return Err(Error::invalid("model", "no singly-excited states"));
    }
    let pairs: Vec<usize> = block.iter().map(|&i| i * n + ground).collect();
    let s = l.superoperator(0.0);
    let sub = CMatrix::from_fn(pairs.len(), pairs.len(), |a, b| s[(pairs[a], pairs[b])]);
    let eig = sub
        .eigenvalues()
        .ok_or_else(|| Error::Tolerance("Schur decomposition did not triangularise".into()))?;
    Ok(eig.iter().copied().collect())
}

/// Slowest amplitude decay rate −Re λ of a single excitation.
pub fn slowest_single_excitation_decay(model: &SystemModel) -> Result<f64> {
    let eig = single_excitation_eigenvalues(model)?;
    eig.iter()
        .map(|z| -z.re)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::invalid("model", "no singly-excited states"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesolve::{first_moment, ground_state, integrate, IntegratorConfig, Method};
    use crate::model::presets;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn no_pump_no_photons() {
        let s = closed_form_stats(1e13, 0.0, 1e10).unwrap();
        assert_eq!((s.p0, s.p1, s.p_multi), (1.0, 0.0, 0.0));
        let s = closed_form_stats(0.0, 1e-12, 1e10).unwrap();
        assert_eq!((s.p0, s.p1, s.p_multi), (1.0, 0.0, 0.0));
    }

    #[test]
    fn uncoupled_limit() {
        let s = closed_form_stats(1e13, 0.56e-12, 0.0).unwrap();
        assert_relative_eq!(s.p0, (-5.6f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(s.p0, 3.698e-3, max_relative = 1e-3);
        assert_relative_eq!(s.p1, 1.0 - (-5.6f64).exp(), max_relative = 1e-12);
        assert!(s.p_multi.abs() < 1e-12);
    }

    #[test]
    fn operating_point() {
        let s = closed_form_stats(1e13, 0.56e-12, presets::reference_coupling()).unwrap();
        assert!((s.p1 - 0.996).abs() < 0.002, "P1 = {}", s.p1);
        assert!(
            s.p_multi < 1e-4 && s.p_multi > 1e-6,
            "P_multi = {}",
            s.p_multi
        );
        assert_eq!(s.p0 + s.p1 + s.p_multi, 1.0);
    }

    #[test]
    fn negative_inputs_rejected() {
        assert!(closed_form_stats(-1.0, 1e-12, 0.0).is_err());
        assert!(closed_form_stats(1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn continuity_across_degenerate_point() {
        let omega = 1.6e10;
        let t = 2e-12;
        let r = 4.0 * omega;
        let at = closed_form_stats(r, t, omega).unwrap();
        for eps in [1e-7, 1e-9, 1e-12] {
            let lo = closed_form_stats(r * (1.0 - eps), t, omega).unwrap();
            let hi = closed_form_stats(r * (1.0 + eps), t, omega).unwrap();
            let tol = 1e-12 + eps;
            assert!((lo.p1 - at.p1).abs() < tol && (hi.p1 - at.p1).abs() < tol);
        }
    }

    #[test]
    fn multi_photon_grows_with_width() {
        let omega = presets::reference_coupling();
        let ts: Vec<f64> = (0..60).map(|k| 0.1e-12 * 1.15f64.powi(k)).collect();
        let sweep = pulse_param_sweep(&ts, &[1e13], omega).unwrap();
        for w in sweep.points.windows(2) {
            assert!(w[1].stats.p_multi >= w[0].stats.p_multi - 1e-15);
        }
        let zero = pulse_param_sweep(&ts, &[0.0], omega).unwrap();
        assert!(zero.points.iter().all(|p| p.stats.p0 == 1.0));
        assert!(pulse_param_sweep(&[], &[1e13], omega).is_err());
        assert!((sweep.operating_point.stats.p1 - 0.996).abs() < 0.002);
    }

    fn exponential_series(gamma: f64, dt: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let i = t.iter().map(|x| gamma * (-gamma * x).exp()).collect();
        (t, i)
    }

    #[test]
    fn exponential_gives_lorentzian() {
        let gamma = 1e10;
        let (t, i) = exponential_series(gamma, 1e-13, 40_000);
        let amp = spectrum_of_series(&t, &i, 638e-9, SpectrumConvention::Amplitude).unwrap();
        assert_relative_eq!(
            amp.fwhm_frequency,
            gamma / (2.0 * std::f64::consts::PI),
            max_relative = 2e-3
        );
        let int = spectrum_of_series(&t, &i, 638e-9, SpectrumConvention::Intensity).unwrap();
        assert_relative_eq!(
            int.fwhm_frequency,
            gamma / std::f64::consts::PI,
            max_relative = 2e-3
        );
        assert_relative_eq!(
            amp.fwhm_wavelength,
            638e-9f64.powi(2) * amp.fwhm_frequency / SPEED_OF_LIGHT,
            max_relative = 1e-12
        );
        assert_relative_eq!(amp.center_wavelength, 638e-9, max_relative = 1e-15);
    }

    #[test]
    fn time_scaling_halves_linewidth() {
        let (t, i) = exponential_series(2e10, 0.5e-13, 20_000);
        let a = spectrum_of_series(&t, &i, 638e-9, SpectrumConvention::Amplitude).unwrap();
        let t2: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
        let b = spectrum_of_series(&t2, &i, 638e-9, SpectrumConvention::Amplitude).unwrap();
        assert_relative_eq!(
            b.fwhm_frequency,
            a.fwhm_frequency / 2.0,
            max_relative = 1e-3
        );
    }

    #[test]
    fn parseval_holds() {
        let (t, i) = exponential_series(1e10, 1e-12, 5_000);
        let dt = t[1] - t[0];
        for conv in [SpectrumConvention::Amplitude, SpectrumConvention::Intensity] {
            let s = spectrum_of_series(&t, &i, 638e-9, conv).unwrap();
            let df = s.frequencies[1] - s.frequencies[0];
            let lhs: f64 = s.power.iter().sum::<f64>() * df;
            let rhs: f64 = match conv {
                SpectrumConvention::Amplitude => i.iter().sum::<f64>() * dt,
                SpectrumConvention::Intensity => i.iter().map(|v| v * v).sum::<f64>() * dt,
            };
            assert_relative_eq!(lhs, rhs, max_relative = 1e-6);
        }
    }

    #[test]
    fn truncated_series_is_flagged() {
        let (t, i) = exponential_series(1e10, 1e-12, 100);
        let err = spectrum_of_series(&t, &i, 638e-9, SpectrumConvention::Amplitude).unwrap_err();
        assert!(matches!(err, Error::SeriesTooShort(_)));
    }

    #[test]
    fn damping_rate_limits() {
        let cavity = presets::reference_cavity();
        let w = cavity.omega();
        let omega0 = presets::reference_coupling();
        let kappa = w / (2.0 * cavity.q);
        let purcell = overall_damping_rate(0.0, 0.0, omega0, w, cavity.q).unwrap();
        assert_relative_eq!(purcell, 2.0 * omega0 * omega0 / kappa, max_relative = 1e-10);
        assert_relative_eq!(
            purcell,
            4.0 * omega0 * omega0 * cavity.q / w,
            max_relative = 1e-10
        );
        assert_eq!(
            overall_damping_rate(3e9, 1e9, 0.0, w, cavity.q).unwrap(),
            3e9
        );
        assert!(matches!(
            overall_damping_rate(kappa, 0.0, omega0, w, cavity.q),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn two_level_eigenvalue_matches_exact_pair() {
        // |e,0⟩ ↔ |g,1⟩ with cavity loss only: λ = −κ/4 ± sqrt(κ²/16 − Ω²)
        let mut m = presets::two_level(1, 0);
        m.scheme.radiative_rates = vec![0.0];
        m.scheme.pl_lifetime = f64::INFINITY;
        let kappa = m.kappa();
        let w = 0.05 * kappa;
        m.coupling.omegas = vec![w];
        let slow = slowest_single_excitation_decay(&m).unwrap();
        let exact = kappa / 4.0 - (kappa * kappa / 16.0 - w * w).sqrt();
        assert_relative_eq!(slow, exact, max_relative = 1e-8);
    }

    #[test]
    fn emission_spectrum_of_mesolve_run() {
        let m = presets::two_level(1, 1);
        let cfg = IntegratorConfig {
            method: Method::Exponential,
            record_dt: 1e-12,
            ..Default::default()
        };
        let r = integrate(&m, &ground_state(&m).unwrap(), 2e-9, &cfg).unwrap();
        let s = emission_spectrum(&r, 638e-9, SpectrumConvention::Amplitude).unwrap();
        assert_relative_eq!(s.center_wavelength, 638e-9, max_relative = 1e-12);
        assert!(s.fwhm_wavelength > 0.0);
        assert!(first_moment(&r.times, &r.intensity) > 0.0);
    }

    proptest! {
        #[test]
        fn stats_are_probabilities(r0 in 0.0f64..1e14, t in 0.0f64..1e-11, w in 0.0f64..1e11) {
            let s = closed_form_stats(r0, t, w).unwrap();
            for p in [s.p0, s.p1, s.p_multi] {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
            }
            prop_assert!((s.p0 + s.p1 + s.p_multi - 1.0).abs() <= 1e-15);
        }
    }
}
