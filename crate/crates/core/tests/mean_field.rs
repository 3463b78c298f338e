//! Particle method against the grid solver on the same KL flow.

use jkoflow_core::energies::{normalized_log_gibbs, EnergyFunctional};
use jkoflow_core::grid1d::{kl_to_target, wgf_solve_observed, FirstVariationVelocity, GridDensity1D};
use jkoflow_core::harness::rng::SeededRng;
use jkoflow_core::particles1d::{run_particle_flow, ParticleEnsemble, PotentialChain, Polynomial, RunConfig};

const MEAN: f64 = 1.0;
const STD: f64 = 0.5;

/// KL to `π ∝ exp(−x²/2 − x⁴/4)` at `t = 1, 2, 4` on a 1024-node grid.
fn grid_kl() -> Vec<f64> {
    let rho0 = GridDensity1D::gaussian(-5.0, 5.0, 1024, MEAN, STD).unwrap();
    let grid = *rho0.grid();
    let log_pi = normalized_log_gibbs(&grid, |x| Polynomial::quartic().value(x), 1.0).unwrap();
    let kl = EnergyFunctional::kl(log_pi.clone()).unwrap();
    let mut provider = FirstVariationVelocity(|rho: &GridDensity1D| Ok(kl.first_variation(rho).unwrap().values));
    let per_unit = 40_000;
    let mut out = Vec::new();
    wgf_solve_observed(&rho0, &mut provider, 4.0, 4 * per_unit, |k, _, rho| {
        if k == per_unit || k == 2 * per_unit || k == 4 * per_unit {
            out.push(kl_to_target(rho, &log_pi).unwrap());
        }
    })
    .unwrap();
    out
}

#[test]
fn particle_kl_tracks_the_grid_flow() {
    let reference = grid_kl();
    let mut rng = SeededRng::new(11);
    let positions = rng.normals(100_000).into_iter().map(|z| MEAN + STD * z).collect();
    let cfg = RunConfig { n_particles: 100_000, record_every: 500, ..RunConfig::default() };
    let run = run_particle_flow(ParticleEnsemble::new(positions).unwrap(), &Polynomial::quartic(), &cfg).unwrap();
    let at = |step: usize| run.kl_trajectory.iter().find(|(s, _)| *s == step).unwrap().1;
    for (i, step) in [500, 1000, 2000].into_iter().enumerate() {
        let (p, g) = (at(step), reference[i]);
        assert!((p - g).abs() < 0.05, "t={}: particles {p:.4e} grid {g:.4e}", step as f64 * cfg.h);
    }
    // the flow actually moved: the starting KL is far above the final one
    assert!(at(0) > 10.0 * at(2000));
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let cfg = RunConfig { n_particles: 2000, steps: 200, record_every: 50, ..RunConfig::default() };
    let run = |seed| {
        let ens = ParticleEnsemble::standard_normal(2000, &mut SeededRng::new(seed)).unwrap();
        run_particle_flow(ens, &Polynomial::quartic(), &RunConfig { eta: 1e-4, ..cfg.clone() }).unwrap()
    };
    let (a, b) = (run(5), run(5));
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.final_ensemble.positions(), b.final_ensemble.positions());
    assert_ne!(run(6).final_ensemble.positions(), a.final_ensemble.positions());
}
