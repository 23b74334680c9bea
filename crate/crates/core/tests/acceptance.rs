//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach stdout; exits non-zero when any
//! criterion fails.

use std::cell::RefCell;
use std::time::Instant;

use nvcav::analysis::{
    closed_form_stats, emission_spectrum, overall_damping_rate, slowest_single_excitation_decay,
    SpectrumConvention,
};
use nvcav::hbt::{simulate_hbt, HBTConfig};
use nvcav::mcsolve::{ensemble_average, ground_ket};
use nvcav::mesolve::{
    default_observables, ground_state, integrate, integrate_liouvillian, EmissionResult,
    IntegratorConfig, InvariantSummary, Liouvillian,
};
use nvcav::model::{
    build_channels, build_hamiltonian, kappa_from_q, presets, CavityConfig, ChannelTag,
    CouplingConvention, CouplingSpec, NVLevelScheme, PumpPulse, SystemModel, Truncation,
};
use nvcav::units::SPEED_OF_LIGHT;
use nvcav::{channel_resolved_sweep, Frame, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

thread_local! {
    static INVARIANTS: RefCell<Vec<(String, InvariantSummary)>> = const { RefCell::new(Vec::new()) };
}

fn track(label: &str, r: &EmissionResult) {
    INVARIANTS.with(|v| v.borrow_mut().push((label.to_string(), r.invariants)));
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

fn tight() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-11,
        abs_tol: 1e-14,
        ..Default::default()
    }
}

/// Pump and coherent exchange only: no cavity loss, no radiative decay.
fn closed_system(r0: f64, t: f64, omega: f64) -> Result<(f64, f64)> {
    let mut m = presets::two_level(2, 0);
    m.scheme.radiative_rates = vec![0.0];
    m.scheme.pl_lifetime = f64::INFINITY;
    m.coupling.omegas = vec![omega];
    m.pump = PumpPulse::single(r0, t);
    m.validate()?;
    let h = build_hamiltonian(&m, Frame::Rotating)?;
    let channels: Vec<_> = build_channels(&m)?
        .into_iter()
        .filter(|c| c.tag == ChannelTag::Pump)
        .collect();
    let l = Liouvillian::new(&h, &channels)?;
    let obs = default_observables(&m)?;
    let cfg = IntegratorConfig {
        record_dt: t,
        max_step: (t / 20.0).min(1e-13),
        ..tight()
    };
    let r = integrate_liouvillian(&l, &obs, &ground_state(&m)?, t, &cfg)?;
    track("closed-system", &r);
    let rho = r.final_state.matrix();
    let at = |g: Option<usize>, nc| m.basis_index(g, nc, 0).map(|i| rho[(i, i)].re);
    let p0 = at(Some(0), 0)?;
    let p1 = at(None, 0)? + at(Some(0), 1)?;
    Ok((p0, p1))
}

fn criterion_1() -> Result<Outcome> {
    let omega0 = presets::reference_coupling();
    let r0s = logspace(11.0, 14.0, 5);
    let ts = logspace(-13.0, -11.0, 5);
    let mut worst: f64 = 0.0;
    let mut degenerate = None;
    for (i, &t) in ts.iter().enumerate() {
        for (j, &r0) in r0s.iter().enumerate() {
            // one grid point sits exactly on r0 = 4Ω
            let omega = if (i, j) == (2, 2) { r0 / 4.0 } else { omega0 };
            let cf = closed_form_stats(r0, t, omega)?;
            let (p0, p1) = closed_system(r0, t, omega)?;
            let err = (cf.p0 - p0).abs().max((cf.p1 - p1).abs());
            if (i, j) == (2, 2) {
                degenerate = Some(err);
            }
            worst = worst.max(err);
        }
    }
    outcome(
        worst <= 1e-6,
        format!(
            "max |ΔP0|,|ΔP1| over 25 points = {worst:.2e} (limit 1e-6); r0 = 4Ω point: {:.2e}",
            degenerate.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_2() -> Result<Outcome> {
    let s = closed_form_stats(1e13, 0.56e-12, presets::reference_coupling())?;
    outcome(
        (s.p1 - 0.996).abs() <= 0.002 && s.p_multi <= 1e-4,
        format!(
            "P1 = {:.6} (0.996 ± 0.002), P≥2 = {:.3e} (≤ 1e-4)",
            s.p1, s.p_multi
        ),
    )
}

fn emission_run() -> Result<EmissionResult> {
    let m = presets::two_level(1, 1);
    let r = integrate(&m, &ground_state(&m)?, 2e-9, &IntegratorConfig::default())?;
    track("emission", &r);
    Ok(r)
}

fn criterion_3(r: &EmissionResult) -> Result<Outcome> {
    let integral_ok = (r.integral_ww - 0.99).abs() <= 0.01;
    let mean_ok = (r.mean_emission_time - 70e-12).abs() <= 15e-12;
    let (ipk, _) =
        r.intensity.iter().enumerate().fold(
            (0, f64::MIN),
            |a, (i, v)| if *v > a.1 { (i, *v) } else { a },
        );
    let hump: Vec<f64> = (1..r.times.len() - 1)
        .filter(|&i| r.times[i] >= 200e-12 && r.times[i] <= 400e-12)
        .filter(|&i| r.intensity[i] > r.intensity[i - 1] && r.intensity[i] >= r.intensity[i + 1])
        .map(|i| r.times[i])
        .collect();
    outcome(
        integral_ok && mean_ok && !hump.is_empty(),
        format!(
            "∫ρ̇_WW dt = {:.5} (0.99 ± 0.01) {}; mean emission time = {:.1} ps (70 ± 15) {}; \
             secondary maximum at {} {}; intensity peak at {:.1} ps",
            r.integral_ww,
            tick(integral_ok),
            r.mean_emission_time * 1e12,
            tick(mean_ok),
            hump.first()
                .map_or("none".to_string(), |t| format!("{:.0} ps", t * 1e12)),
            tick(!hump.is_empty()),
            r.times[ipk] * 1e12
        ),
    )
}

fn tick(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "out of range"
    }
}

fn criterion_4(r: &EmissionResult) -> Result<Outcome> {
    let lambda = presets::ZPL_WAVELENGTH;
    let int = emission_spectrum(r, lambda, SpectrumConvention::Intensity)?;
    let amp = emission_spectrum(r, lambda, SpectrumConvention::Amplitude)?;
    let ratio = |w: f64| (w / 0.01e-9).max(0.01e-9 / w);
    outcome(
        ratio(int.fwhm_wavelength) <= 2.0,
        format!(
            "FWHM = {:.5} nm from the intensity profile (0.01 nm within ×2); amplitude profile gives {:.5} nm (×{:.2})",
            int.fwhm_wavelength * 1e9,
            amp.fwhm_wavelength * 1e9,
            ratio(amp.fwhm_wavelength)
        ),
    )
}

fn criterion_5(me: &EmissionResult) -> Result<Outcome> {
    let m = presets::two_level(4, 0);
    let n_traj = 5000;
    let dt = 2e-12;
    let ens = ensemble_average(&m, &ground_ket(&m)?, 1.5e-9, n_traj, 20_240_501, dt)?;
    let flux = &ens.mean["cavity_flux"];
    let se = &ens.std_err["cavity_flux"];
    let peak = me.intensity.iter().cloned().fold(0.0, f64::max);
    let me_dt = me.times[1] - me.times[0];

    // Emission still to come after each master-equation sample. Once fewer
    // than one trajectory in n_traj is expected to emit later, the sample
    // standard error collapses to zero and carries no information.
    let mut remaining = vec![0.0; me.times.len()];
    for i in (0..me.times.len() - 1).rev() {
        remaining[i] = remaining[i + 1] + 0.5 * (me.intensity[i] + me.intensity[i + 1]) * me_dt;
    }
    let total = remaining[0];
    let (mut within, mut resolvable, mut within_all) = (0, 0, 0);
    let mut horizon: f64 = 0.0;
    for (k, &t) in ens.times.iter().enumerate() {
        let i = (t / me_dt).round() as usize;
        let ok = (flux[k] - me.intensity[i]).abs() <= 3.0 * se[k] + 1e-9 * peak;
        within_all += ok as usize;
        if remaining[i] * n_traj as f64 >= total {
            resolvable += 1;
            within += ok as usize;
            horizon = horizon.max(t);
        }
    }
    let frac = within as f64 / resolvable as f64;
    outcome(
        frac >= 0.95,
        format!(
            "{within}/{resolvable} samples within 3 SE of the master-equation flux ({:.1}%, need ≥ 95%) up to {:.0} ps, \
             where the expected number of trajectories still to emit drops below one; {within_all}/{} over the full 1.5 ns",
            100.0 * frac,
            horizon * 1e12,
            ens.times.len()
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    let m = presets::two_level(4, 0);
    let r = simulate_hbt(&m, &HBTConfig::new(1e9, 5e-6, 7))?;
    let p1 = r.per_trigger.probability(1);
    let multi = r.per_trigger.multi_count();
    let ratio = r.histogram.zero_delay_ratio;
    let ok = (p1 - 0.99).abs() <= 0.01 && multi == 0 && ratio.is_some_and(|x| x <= 0.01);
    outcome(
        ok,
        format!(
            "{} pulses: P1 = {p1:.4} ± {:.4} (0.99 ± 0.01), multi-photon events = {multi}, zero-delay ratio = {}",
            r.n_periods,
            r.per_trigger.std_err(1),
            ratio.map_or("undefined".into(), |x| format!("{x:.4}"))
        ),
    )
}

fn criterion_7() -> Result<Outcome> {
    let mut multi = Vec::new();
    let mut ratios = Vec::new();
    for t in [1e-12, 100e-12, 1000e-12] {
        let mut m = presets::two_level(4, 0);
        m.pump = PumpPulse::single(presets::PUMP_RATE, t);
        let r = simulate_hbt(&m, &HBTConfig::new(0.5e9, 100e-6, 8))?;
        multi.push(r.per_trigger.multi_fraction());
        ratios.push(r.histogram.zero_delay_ratio.unwrap_or(f64::NAN));
    }
    let monotone = multi.windows(2).all(|w| w[1] > w[0]);
    outcome(
        monotone && multi[2] >= 3e-3,
        format!(
            "P≥2 at T = 1, 100, 1000 ps: {:.2e}, {:.2e}, {:.2e} (increasing, last ≥ 3e-3); zero-delay ratios {:.3}, {:.3}, {:.3}",
            multi[0], multi[1], multi[2], ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn branching_model(branching: &[f64]) -> Result<SystemModel> {
    let mut m = presets::nv_illustrative(1, 0);
    let total: f64 = branching.iter().sum();
    m.scheme.radiative_rates = branching
        .iter()
        .map(|b| b / total / m.scheme.pl_lifetime)
        .collect();
    let omega0 = presets::reference_coupling();
    m.coupling.omegas = branching
        .iter()
        .map(|b| omega0 * (b / branching[0]).sqrt())
        .collect();
    m.validate()?;
    Ok(m)
}

fn criterion_8() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tables = [
        presets::illustrative_branching(),
        vec![1.0; 10],
        (0..10)
            .map(|_| rng.random_range(0.05..1.0))
            .collect::<Vec<f64>>(),
    ];
    let mut qs = logspace(-4.0, 8.0, 25);
    qs.push(36_500.0);
    qs.sort_by(f64::total_cmp);
    let mut small_err: f64 = 0.0;
    let mut at_ref: f64 = 1.0;
    let mut unimodal = true;
    let mut breaks = Vec::new();
    for table in &tables {
        let m = branching_model(table)?;
        let pts = channel_resolved_sweep(&m, &qs)?;
        let b = m.scheme.branching_ratios();
        let rad = pts[0].radiative();
        for (j, bj) in b.iter().enumerate() {
            small_err = small_err.max((rad[&j] - bj).abs() / bj);
        }
        let reference = pts.iter().find(|p| p.q == 36_500.0).expect("reference Q");
        at_ref = at_ref.min(reference.cavity());
        let cav: Vec<f64> = pts.iter().map(|p| p.cavity()).collect();
        let top = cav
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |a, (i, v)| if *v > a.1 { (i, *v) } else { a },
            )
            .0;
        let slack = 1e-9;
        let ok = top > 0
            && top < cav.len() - 1
            && cav[..=top].windows(2).all(|w| w[1] >= w[0] - slack)
            && cav[top..].windows(2).all(|w| w[1] <= w[0] + slack);
        if !ok {
            unimodal = false;
            for k in 1..cav.len() - 1 {
                if (cav[k] < cav[k - 1] && cav[k] < cav[k + 1])
                    || (k > top && cav[k] > cav[k - 1] + slack)
                {
                    breaks.push(qs[k]);
                }
            }
        }
    }
    outcome(
        small_err <= 0.02 && at_ref > 0.9 && unimodal,
        format!(
            "3 branching tables, Q ∈ [1e-4, 1e8]: worst small-Q radiative ratio error {:.3}% (≤ 2%); \
             min cavity share at Q = 36500 = {at_ref:.4} (> 0.9); unimodal: {unimodal}{}",
            100.0 * small_err,
            if breaks.is_empty() {
                String::new()
            } else {
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                format!(
                    " (local minima at Q = {})",
                    breaks.iter().map(|q| format!("{q:.3}")).collect::<Vec<_>>().join(", ")
                )
            }
        ),
    )
}

/// g₀, g₁ and e with the cavity on e ↔ g₁ and phonon decay g₁ → g₀.
fn three_level(q: f64, omega: f64, phonon: f64) -> Result<SystemModel> {
    let zpl = nvcav::units::angular_frequency_from_wavelength(presets::ZPL_WAVELENGTH);
    let offset = 0.05 * zpl;
    let scheme = NVLevelScheme::new(
        vec![0.0, offset],
        zpl,
        vec![0.0, 0.0],
        vec![phonon],
        f64::INFINITY,
    )?;
    let wavelength = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / scheme.transition_frequency(1);
    let cavity = CavityConfig {
        wavelength,
        q,
        volume: wavelength.powi(3),
        refractive_index: presets::DIAMOND_INDEX,
        resonant_transition: 1,
    };
    SystemModel::new(
        scheme,
        cavity,
        CouplingSpec {
            omegas: vec![0.0, omega],
            convention: CouplingConvention::MatrixElement,
        },
        PumpPulse::off(),
        Truncation {
            n_cavity: 1,
            n_waveguide: 0,
            ground_levels: None,
        },
    )
}

fn criterion_9() -> Result<Outcome> {
    let q = presets::REFERENCE_Q;
    let mut worst: f64 = 0.0;
    let mut identity: f64 = 0.0;
    for gamma_ratio in [0.0, 0.3, 1.0, 3.0] {
        for omega_ratio in [0.05, 0.02, 0.005] {
            let probe = three_level(q, 0.0, 0.0)?;
            let w_c = probe.cavity.omega();
            let kappa = kappa_from_q(&probe.cavity)?;
            let gamma = gamma_ratio * kappa;
            let omega0 = omega_ratio * (kappa + gamma);
            let m = three_level(q, omega0, gamma)?;
            let exact = slowest_single_excitation_decay(&m)?;
            // the model's g₁ → g₀ rate plays γ_{gmgn}; γ_{g0g1} = 0
            let eq7 = overall_damping_rate(0.0, gamma, omega0, w_c, q)?;
            worst = worst.max((eq7 - exact).abs() / exact);
            if gamma == 0.0 {
                identity = identity.max((eq7 - 2.0 * omega0 * omega0 / kappa).abs() / eq7);
            }
        }
    }
    outcome(
        worst <= 0.05 && identity <= 1e-10,
        format!(
            "worst relative gap to the slowest single-excitation eigenvalue {:.2}% (≤ 5%, Ω₀ ≤ 0.05(κ+γ)); \
             γ = 0 vs 2Ω₀²/κ: {identity:.1e} (≤ 1e-10); mapping: phonon g₁→g₀ rate as γ_gmgn, γ_g0g1 = 0",
            100.0 * worst
        ),
    )
}

fn criterion_10() -> Result<Outcome> {
    // one more integration with pump, cavity and radiative channels all active
    let m = presets::two_level(2, 2);
    let r = integrate(&m, &ground_state(&m)?, 0.5e-9, &IntegratorConfig::default())?;
    track("full two-level", &r);
    let runs = INVARIANTS.with(|v| v.borrow().clone());
    let (mut drift, mut herm, mut eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for (_, s) in &runs {
        drift = drift.max(s.max_trace_drift);
        herm = herm.max(s.max_hermiticity_error);
        eig = eig.min(s.min_eigenvalue);
    }
    let invariants_ok = runs.iter().all(|(_, s)| s.within(1e-8, 1e-10, 1e-8));

    let tm = presets::two_level(4, 0);
    let psi = ground_ket(&tm)?;
    let a = ensemble_average(&tm, &psi, 0.5e-9, 300, 99, 1e-12)?;
    let b = ensemble_average(&tm, &psi, 0.5e-9, 300, 99, 1e-12)?;
    let identical = a == b
        && a.mean["cavity_flux"]
            .iter()
            .zip(&b.mean["cavity_flux"])
            .all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(
        invariants_ok && identical,
        format!(
            "{} integrations: max trace drift {drift:.1e} (≤ 1e-8), max hermiticity error {herm:.1e} (≤ 1e-10), \
             min eigenvalue {eig:.1e} (≥ −1e-8); repeated seeded ensemble bit-identical: {identical}",
            runs.len()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, run: &dyn Fn() -> Result<Outcome>| {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "closed form vs master equation", &criterion_1);
    report(2, "operating point", &criterion_2);
    let emission = emission_run();
    match &emission {
        Ok(r) => {
            report(3, "emission run", &|| criterion_3(r));
            report(4, "linewidth", &|| criterion_4(r));
            report(5, "trajectories vs master equation", &|| criterion_5(r));
        }
        Err(e) => {
            for (n, name) in [
                (3, "emission run"),
                (4, "linewidth"),
                (5, "trajectories vs master equation"),
            ] {
                report(n, name, &|| {
                    Err(nvcav::Error::Tolerance(format!("emission run failed: {e}")))
                });
            }
        }
    }
    report(6, "HBT at 1 GHz", &criterion_6);
    report(7, "HBT pulse-width trend", &criterion_7);
    report(8, "channel crossover", &criterion_8);
    report(9, "overall damping rate", &criterion_9);
    report(10, "structural invariants", &criterion_10);
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
