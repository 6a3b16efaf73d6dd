mod support;

use ghostflow_pde::SolverMode;
use support::checks;

#[test]
fn mass_and_constraint_hold_over_a_thousand_steps() {
    let b = checks::balance();
    assert!(b.mass < 1e-12, "{:e}", b.mass);
    assert!(b.constraint < 10.0, "{}", b.constraint);
    assert!(b.divergence < 1e-10, "{:e}", b.divergence);
}

#[test]
fn uniform_state_does_not_move() {
    let worst = checks::uniform_drift(50);
    assert!(worst < 1e-14, "{worst:e}");
}

#[test]
fn conduction_only_entropy_never_decreases() {
    let worst = checks::conduction_entropy_increments(500);
    assert!(worst >= 0.0, "{worst:e}");
}

#[test]
fn entropy_identity_on_a_refined_grid() {
    let fine = checks::entropy_mismatch(32, 5e-4, SolverMode::ParticleEos);
    assert!(fine < 0.01, "{fine}");
    let frozen = checks::entropy_mismatch(32, 5e-4, SolverMode::ConductionOnly);
    assert!(frozen < 0.01, "{frozen}");
}

#[test]
fn insf_divergence_stays_below_threshold() {
    let worst = checks::insf_divergence();
    assert!(worst < 1e-10, "{worst}");
}
