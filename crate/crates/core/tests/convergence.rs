//! Trajectory ensembles converge to the master equation as 1/√n.

use nvcav::mcsolve::{ensemble_average, ground_ket};
use nvcav::mesolve::{ground_state, integrate, IntegratorConfig};
use nvcav::model::presets;

fn rms_error(n_traj: usize, seeds: &[u64], reference: &[f64]) -> f64 {
    let m = presets::two_level(4, 0);
    let psi = ground_ket(&m).unwrap();
    let mut sq = 0.0;
    for &seed in seeds {
        let ens = ensemble_average(&m, &psi, 0.4e-9, n_traj, seed, 2e-12).unwrap();
        let see = &ens.mean["sigma_ee"];
        assert_eq!(see.len(), reference.len());
        sq += see
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / see.len() as f64;
    }
    (sq / seeds.len() as f64).sqrt()
}

#[test]
fn excited_population_error_halves_per_fourfold_trajectories() {
    let m = presets::two_level(4, 0);
    let cfg = IntegratorConfig {
        record_dt: 2e-12,
        ..Default::default()
    };
    let me = integrate(&m, &ground_state(&m).unwrap(), 0.4e-9, &cfg).unwrap();
    let reference = &me.populations["sigma_ee"];
    let seeds = [1, 2, 3, 4];
    let errs: Vec<f64> = [500, 2000, 8000]
        .iter()
        .map(|&n| rms_error(n, &seeds, reference))
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (2.0 / 1.5..=2.0 * 1.5).contains(&ratio),
            "errors {errs:?}, ratio {ratio}"
        );
    }
}
