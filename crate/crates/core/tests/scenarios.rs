use lagtrack::cell_to_cell::IntegratorMode;
use lagtrack::scenario::{run_scenario, MeshKind, ScenarioConfig, ScenarioData, ScenarioKind};

fn final_drift(mode: IntegratorMode) -> f64 {
    let mut cfg = ScenarioConfig::preset(ScenarioKind::CouetteSingleParticle);
    cfg.mode = mode;
    let ScenarioData::RadiusTrace(t) = run_scenario(&cfg).unwrap().data else { panic!("wrong data") };
    t.iter().filter(|s| s.particle == 0).map(|s| s.rel_drift).last().unwrap()
}

#[test]
fn cell_to_cell_keeps_couette_particles_on_their_circle() {
    let c2c = final_drift(IntegratorMode::CellToCell);
    let single = final_drift(IntegratorMode::SingleStep);
    assert!(c2c < 5e-3, "{c2c}");
    assert!(single > 10.0 * c2c, "{single} vs {c2c}");
}

#[test]
fn short_robustness_runs_stay_inside_cells() {
    for kind in [MeshKind::Hexa, MeshKind::Tetra, MeshKind::Annulus, MeshKind::Jittered] {
        let mut cfg = ScenarioConfig::preset(ScenarioKind::MeshRobustness);
        cfg.robustness.mesh = kind;
        cfg.robustness.n_per_side = 8;
        cfg.n_particles = 2_000;
        cfg.n_steps = 40;
        cfg.strict = true;
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.n_lost, 0);
        let ScenarioData::Distance(d) = r.data else { panic!("wrong data") };
        assert_eq!(d.len(), 41);
        assert!(d.iter().all(|x| x.d_star_max <= 1.0), "{kind:?}");
    }
}

#[test]
fn couette_concentration_is_flat_with_cell_to_cell() {
    let mut cfg = ScenarioConfig::preset(ScenarioKind::CouetteConcentration);
    cfg.n_particles = 20_000;
    cfg.n_steps = 50;
    cfg.strict = true;
    let ScenarioData::Concentration(p) = run_scenario(&cfg).unwrap().data else { panic!("wrong data") };
    let first = &p[0].counts;
    // laminar transport never changes a particle's ring
    assert!(p.iter().all(|x| &x.counts == first));
}

#[test]
fn single_step_particles_survive_sliding_along_the_outer_wall() {
    // Displacements from a wall stop run parallel to the wall face once the
    // particle moves with its cell's tangential mean velocity.
    let mut cfg = ScenarioConfig::preset(ScenarioKind::CouetteConvergence);
    cfg.mode = IntegratorMode::SingleStep;
    cfg.n_particles = 5_000;
    cfg.couette.dt_grid = vec![3.16, 12.6];
    cfg.strict = true;
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.n_lost, 0);
    assert!(r.n_wall_stops > 0);
}
