//! Relative equilibria and homographic orbits built on a central
//! configuration, and detectors for both properties on sampled trajectories.
//!
//! If `q0` is a central configuration with multiplier `lambda`, then
//! `q_k(t) = r(t) R(theta(t)) q0_k` solves the equations of motion whenever
//! `r'' = r theta'^2 - lambda r^(-2 alpha - 1)` and `r^2 theta'` is constant.

use crate::central_config::CentralConfiguration;
use crate::dop853::{self, SolveOutcome, StepControl};
use crate::dynamics::{pair_table, CollisionFloor, PhaseState};
use crate::error::{Error, Result};
use crate::integrator::{IntegratorSpec, Trajectory};
use crate::scalar::Scalar;

/// Samples closer to collision than this multiple of the floor are ignored
/// by the ratio-based detectors.
pub const NEAR_COLLISION_FACTOR: f64 = 10.0;

/// Initial scale, radial rate and angular rate of a homographic orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct HomographicSpec<S> {
    pub cc: CentralConfiguration<S>,
    pub r0: S,
    pub rdot0: S,
    pub theta_dot0: S,
}

impl<S: Scalar> HomographicSpec<S> {
    /// Rigid rotation at `omega = sqrt(lambda)`.
    pub fn circular(cc: CentralConfiguration<S>) -> Self {
        let omega = cc.lambda.sqrt();
        Self {
            cc,
            r0: S::one(),
            rdot0: S::zero(),
            theta_dot0: omega,
        }
    }

    /// Starts at apsis with `theta' = scale * sqrt(lambda)`.
    pub fn elliptic(cc: CentralConfiguration<S>, scale: S) -> Self {
        let omega = cc.lambda.sqrt();
        Self {
            cc,
            r0: S::one(),
            rdot0: S::zero(),
            theta_dot0: scale * omega,
        }
    }

    /// Pure dilation with initial radial rate `rdot0`.
    pub fn homothetic(cc: CentralConfiguration<S>, rdot0: S) -> Self {
        Self {
            cc,
            r0: S::one(),
            rdot0,
            theta_dot0: S::zero(),
        }
    }

    /// Zero initial velocity; such a spec is rejected by [`make_homographic`].
    pub fn is_static(&self) -> bool {
        self.rdot0 == S::zero() && self.theta_dot0 == S::zero()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0.is_finite() && self.r0 > S::zero()) {
            return Err(Error::InvalidSpec(format!("r0 must be positive, got {}", self.r0)));
        }
        if !(self.rdot0.is_finite() && self.theta_dot0.is_finite()) {
            return Err(Error::InvalidSpec("rates must be finite".into()));
        }
        if self.is_static() {
            return Err(Error::InvalidSpec(
                "static spec (rdot0 = theta_dot0 = 0) is flagged, not built".into(),
            ));
        }
        if self.cc.system.dim() != 2 {
            return Err(Error::InvalidSpec("homographic orbits are planar".into()));
        }
        Ok(())
    }
}

/// Quarter-turn `J (x, y) = (-y, x)`.
#[inline]
fn quarter_turn<S: Scalar>(x: S, y: S) -> (S, S) {
    (-y, x)
}

/// Rigid rotation of the configuration at `omega = sqrt(lambda)`.
pub fn make_relative_equilibrium<S: Scalar>(cc: &CentralConfiguration<S>) -> PhaseState<S> {
    let omega = cc.lambda.sqrt();
    let n = cc.system.n();
    let mut velocities = vec![S::zero(); 2 * n];
    for k in 0..n {
        let (jx, jy) = quarter_turn(cc.positions[2 * k], cc.positions[2 * k + 1]);
        velocities[2 * k] = omega * jx;
        velocities[2 * k + 1] = omega * jy;
    }
    PhaseState {
        t: S::zero(),
        dim: 2,
        positions: cc.positions.clone(),
        velocities,
    }
}

/// Positions `r0 q0_k`, velocities `rdot0 q0_k + r0 theta_dot0 J q0_k`.
pub fn make_homographic<S: Scalar>(spec: &HomographicSpec<S>) -> Result<PhaseState<S>> {
    spec.validate()?;
    let n = spec.cc.system.n();
    let q0 = &spec.cc.positions;
    let mut positions = vec![S::zero(); 2 * n];
    let mut velocities = vec![S::zero(); 2 * n];
    let spin = spec.r0 * spec.theta_dot0;
    for k in 0..n {
        let (x, y) = (q0[2 * k], q0[2 * k + 1]);
        let (jx, jy) = quarter_turn(x, y);
        positions[2 * k] = spec.r0 * x;
        positions[2 * k + 1] = spec.r0 * y;
        velocities[2 * k] = spec.rdot0 * x + spin * jx;
        velocities[2 * k + 1] = spec.rdot0 * y + spin * jy;
    }
    Ok(PhaseState {
        t: S::zero(),
        dim: 2,
        positions,
        velocities,
    })
}

/// Solution of the scalar `(r, theta)` system on the output grid.
#[derive(Debug, Clone)]
pub struct ReducedOrbit<S> {
    pub times: Vec<S>,
    pub radius: Vec<S>,
    pub angle: Vec<S>,
    pub completed: bool,
}

/// Integrate `r'' = r theta'^2 - lambda r^(-2 alpha - 1)`, `(r^2 theta')' = 0`
/// on the same sampling grid the full integrator uses.
pub fn reduced_orbit<S: Scalar>(
    spec: &HomographicSpec<S>,
    t_end: S,
    integrator: &IntegratorSpec<S>,
) -> Result<ReducedOrbit<S>> {
    spec.validate()?;
    integrator.validate()?;
    let lambda = spec.cc.lambda;
    let alpha = spec.cc.system.alpha();
    let spin = spec.r0 * spec.r0 * spec.theta_dot0;
    let exponent = -(S::two() * alpha + S::one());
    let r_floor = spec.r0 * S::lit(crate::dynamics::COLLISION_FRACTION);
    let rhs = |_t: S, y: &[S], dy: &mut [S]| -> std::result::Result<(), ()> {
        let r = y[0];
        if !(r > S::zero()) {
            return Err(());
        }
        let theta_dot = spin / (r * r);
        dy[0] = y[1];
        dy[1] = r * theta_dot * theta_dot - lambda * r.powf(exponent);
        dy[2] = theta_dot;
        Ok(())
    };
    let admissible = |_t: S, y: &[S]| if y[0] > r_floor { Ok(()) } else { Err(()) };
    let ctl = StepControl {
        rel_tol: integrator.rel_tol,
        abs_tol: integrator.abs_tol,
        max_step: integrator.max_step,
    };
    let sol = dop853::solve_sampled(
        rhs,
        admissible,
        S::zero(),
        &[spec.r0, spec.rdot0, S::zero()],
        t_end,
        integrator.sample_dt,
        ctl,
    );
    Ok(ReducedOrbit {
        radius: sol.states.iter().map(|y| y[0]).collect(),
        angle: sol.states.iter().map(|y| y[2]).collect(),
        times: sol.times,
        completed: sol.outcome == SolveOutcome::Completed,
    })
}

/// Squared separations of every sample in pair order.
pub(crate) fn sample_deltas<S: Scalar>(traj: &Trajectory<S>) -> Vec<Vec<S>> {
    traj.samples
        .iter()
        .map(|s| {
            pair_table(&traj.system, &s.positions, CollisionFloor(S::zero()))
                .expect("trajectory samples are collision free")
                .deltas
        })
        .collect()
}

/// Indices of samples far enough from collision for ratio diagnostics.
pub(crate) fn usable_samples<S: Scalar>(traj: &Trajectory<S>) -> Vec<usize> {
    let cutoff = S::lit(NEAR_COLLISION_FACTOR) * traj.collision_floor.separation();
    (0..traj.len())
        .filter(|&i| traj.diagnostics[i].min_separation >= cutoff)
        .collect()
}

/// `max |sqrt(Delta_j(t) / Delta_j(t0)) - 1|` over pairs and samples; the
/// trajectory is a relative equilibrium when this is at most `tol`.
pub fn is_relative_equilibrium<S: Scalar>(traj: &Trajectory<S>, tol: S) -> (bool, S) {
    assert!(!traj.is_empty(), "empty trajectory");
    let deltas = sample_deltas(traj);
    let first = &deltas[0];
    let max_dev = deltas
        .iter()
        .flat_map(|row| {
            row.iter()
                .zip(first)
                .map(|(&d, &d0)| ((d / d0).sqrt() - S::one()).abs())
        })
        .fold(S::zero(), S::max);
    (max_dev <= tol, max_dev)
}

/// Largest relative change of any distance ratio `|q_i - q_k| / |q_ref|`,
/// where the reference pair has the largest initial separation.
pub fn homographic_deviation<S: Scalar>(traj: &Trajectory<S>) -> S {
    assert!(!traj.is_empty(), "empty trajectory");
    let deltas = sample_deltas(traj);
    let first = &deltas[0];
    let reference = first
        .iter()
        .enumerate()
        .fold(0, |best, (j, &d)| if d > first[best] { j } else { best });
    let initial: Vec<S> = first.iter().map(|&d| (d / first[reference]).sqrt()).collect();
    usable_samples(traj)
        .into_iter()
        .flat_map(|i| {
            let row = &deltas[i];
            let initial = &initial;
            row.iter()
                .enumerate()
                .map(move |(j, &d)| ((d / row[reference]).sqrt() / initial[j] - S::one()).abs())
        })
        .fold(S::zero(), S::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central_config::{known_seeds, solve_central_config, SeedKind, SolverOptions};
    use crate::dynamics::BodySystem;
    use crate::integrator::{integrate, Termination};

    fn cc(kind: SeedKind, n: usize, alpha: f64) -> CentralConfiguration<f64> {
        let sys = BodySystem::equal_masses(n, alpha, 2).unwrap();
        let seed = known_seeds(kind, n, 1.0).unwrap();
        solve_central_config(&sys, &seed, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn two_body_relative_equilibrium_spins_at_root_two() {
        let c = cc(SeedKind::Collinear, 2, 0.5);
        assert!((c.positions[0] - 0.5).abs() < 1e-15);
        assert!((c.lambda - 2.0).abs() < 1e-14);
        let s = make_relative_equilibrium(&c);
        assert!((s.velocities[1] - 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn circular_spec_reduces_to_relative_equilibrium() {
        let c = cc(SeedKind::Equilateral, 3, 0.7);
        let a = make_homographic(&HomographicSpec::circular(c.clone())).unwrap();
        assert_eq!(a, make_relative_equilibrium(&c));
    }

    #[test]
    fn static_spec_is_rejected() {
        let c = cc(SeedKind::Equilateral, 3, 0.5);
        let spec = HomographicSpec::homothetic(c, 0.0);
        assert!(spec.is_static());
        assert!(matches!(make_homographic(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn equilateral_relative_equilibrium_keeps_distances() {
        let c = cc(SeedKind::Equilateral, 3, 0.5);
        let traj = integrate(
            &c.system,
            &make_relative_equilibrium(&c),
            10.0,
            &IntegratorSpec::default(),
        )
        .unwrap();
        let (ok, dev) = is_relative_equilibrium(&traj, 1e-9);
        assert!(ok, "{dev}");
        assert!(homographic_deviation(&traj) <= 1e-9);
    }

    #[test]
    fn elliptic_orbit_is_homographic_but_not_rigid() {
        let c = cc(SeedKind::Equilateral, 3, 0.5);
        let spec = HomographicSpec::elliptic(c.clone(), 0.9);
        let traj = integrate(&c.system, &make_homographic(&spec).unwrap(), 10.0, &IntegratorSpec::default())
            .unwrap();
        assert_eq!(traj.termination, Termination::Completed);
        assert!(homographic_deviation(&traj) <= 1e-8);
        let (ok, dev) = is_relative_equilibrium(&traj, 1e-9);
        assert!(!ok && dev > 1e-2);
    }

    #[test]
    fn homothetic_collapse_keeps_ratios() {
        let c = cc(SeedKind::Collinear, 3, 0.5);
        let spec = HomographicSpec::homothetic(c.clone(), -0.1);
        let traj = integrate(&c.system, &make_homographic(&spec).unwrap(), 10.0, &IntegratorSpec::default())
            .unwrap();
        assert_eq!(traj.termination, Termination::Collision);
        assert!(homographic_deviation(&traj) <= 1e-9);
        assert!(!is_relative_equilibrium(&traj, 1e-9).0);
    }

    #[test]
    fn reduced_orbit_tracks_inertia_scale() {
        let c = cc(SeedKind::Ngon, 4, 0.5);
        let spec = HomographicSpec::elliptic(c.clone(), 0.8);
        let ispec = IntegratorSpec::default();
        let traj = integrate(&c.system, &make_homographic(&spec).unwrap(), 5.0, &ispec).unwrap();
        let reduced = reduced_orbit(&spec, 5.0, &ispec).unwrap();
        let i0 = traj.diagnostics[0].inertia;
        for (d, r) in traj.diagnostics.iter().zip(&reduced.radius) {
            let r_full = (d.inertia / i0).sqrt();
            assert!((r_full / r - 1.0).abs() <= 1e-7);
        }
    }
}

#[cfg(test)]
mod single_precision {
    use super::*;
    use crate::central_config::{known_seeds, solve_central_config, SeedKind, SolverOptions};
    use crate::dynamics::BodySystem;
    use crate::integrator::{integrate, IntegratorSpec, Termination};

    #[test]
    fn equilateral_orbit_in_f32() {
        let system = BodySystem::<f32>::equal_masses(3, 0.5, 2).unwrap();
        let seed = known_seeds(SeedKind::Equilateral, 3, 1.0f32).unwrap();
        let cc = solve_central_config(&system, &seed, &SolverOptions::default()).unwrap();
        assert!(cc.residual_norm <= 1e-5);
        let spec = IntegratorSpec {
            rel_tol: 1e-6f32,
            abs_tol: 1e-7,
            max_step: 0.5,
            sample_dt: 0.05,
        };
        let traj = integrate(&system, &make_relative_equilibrium(&cc), 5.0, &spec).unwrap();
        assert_eq!(traj.termination, Termination::Completed);
        assert!(traj.energy_drift() <= 1e-4);
        assert!(homographic_deviation(&traj) <= 1e-4);
    }
}
