//! Sampled trajectories of the power-law n-body problem with per-sample
//! conservation diagnostics.

use serde::{Deserialize, Serialize};

use crate::dop853::{self, SolveOutcome, StepControl, StepStats};
use crate::dynamics::{
    accelerations_into, angular_momentum, kinetic_energy, linear_momentum, measure_of,
    pair_table, AngularMomentum, BodySystem, CollisionFloor, PairTable, PhaseState,
};
use crate::error::{Error, Result};
use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    pub max_step: S,
    pub sample_dt: S,
}

impl<S: Scalar> Default for IntegratorSpec<S> {
    fn default() -> Self {
        Self {
            rel_tol: S::lit(1e-12),
            abs_tol: S::lit(1e-14),
            max_step: S::lit(0.5),
            sample_dt: S::lit(0.01),
        }
    }
}

impl<S: Scalar> IntegratorSpec<S> {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: S| x.is_finite() && x > S::zero();
        if !positive(self.rel_tol) || !positive(self.abs_tol) {
            return Err(Error::InvalidIntegrator("tolerances must be positive".into()));
        }
        if !positive(self.sample_dt) {
            return Err(Error::InvalidIntegrator("sample_dt must be positive".into()));
        }
        if !(self.max_step > S::zero()) {
            return Err(Error::InvalidIntegrator("max_step must be positive".into()));
        }
        Ok(())
    }

    /// Same settings with both tolerances multiplied by `factor`.
    pub fn with_tolerance_scale(&self, factor: S) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    /// A pair reached the separation floor, or the step size collapsed near a pair singularity.
    Collision,
    StepFailure,
}

/// Quantities evaluated at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics<S> {
    pub inertia: S,
    pub potential: S,
    /// `I^alpha U`.
    pub measure: S,
    pub energy: S,
    pub linear_momentum: Vec<S>,
    /// `None` outside dimensions 2 and 3.
    pub angular_momentum: Option<AngularMomentum<S>>,
    /// Smallest mutual separation.
    pub min_separation: S,
}

impl<S: Scalar> Diagnostics<S> {
    pub fn evaluate(
        system: &BodySystem<S>,
        state: &PhaseState<S>,
        floor: CollisionFloor<S>,
    ) -> Result<Self> {
        let table = pair_table(system, &state.positions, floor)?;
        Ok(Self::from_table(system, state, &table))
    }

    fn from_table(system: &BodySystem<S>, state: &PhaseState<S>, table: &PairTable<S>) -> Self {
        let alpha = system.alpha();
        let inertia = table.weighted_sum();
        let potential = table.weighted_power_sum(alpha);
        Self {
            inertia,
            potential,
            measure: measure_of(system, table),
            energy: kinetic_energy(system, state) - potential / (S::lit(4.0) * alpha),
            linear_momentum: linear_momentum(system, state),
            angular_momentum: angular_momentum(system, state).ok(),
            min_separation: table.min_delta().sqrt(),
        }
    }
}

/// Time-ordered samples of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub system: BodySystem<S>,
    pub samples: Vec<PhaseState<S>>,
    pub diagnostics: Vec<Diagnostics<S>>,
    pub termination: Termination,
    /// Separation floor fixed from the initial state.
    pub collision_floor: CollisionFloor<S>,
    pub spec: IntegratorSpec<S>,
    pub stats: StepStats,
    /// Last accepted state; later than the last sample when integration stopped early.
    pub end_state: PhaseState<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<S> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &PhaseState<S> {
        self.samples.last().expect("trajectory holds the initial state")
    }

    /// `max_t |E(t) - E(0)| / |E(0)|`. When `E(0)` is below a thousandth of
    /// `T(0) + U(0)/(4 alpha)` (circular orbits at `alpha = 1` have `E = 0`),
    /// that sum is the denominator instead.
    pub fn energy_drift(&self) -> S {
        let first = &self.diagnostics[0];
        let e0 = first.energy;
        let v0 = first.potential / (S::lit(4.0) * self.system.alpha());
        let magnitude = (e0 + v0) + v0;
        let scale = e0.abs().max(S::lit(1e-3) * magnitude);
        self.diagnostics
            .iter()
            .map(|d| (d.energy - e0).abs() / scale)
            .fold(S::zero(), S::max)
    }

    /// `max_t |L(t) - L(0)| / |L(0)|`; `None` without a defined, nonzero `L(0)`.
    pub fn angular_momentum_drift(&self) -> Option<S> {
        let l0 = self.diagnostics[0].angular_momentum?;
        let scale = l0.scalar().abs();
        if scale == S::zero() {
            return None;
        }
        self.diagnostics
            .iter()
            .map(|d| d.angular_momentum.map(|l| l.distance(&l0) / scale))
            .try_fold(S::zero(), |acc, x| x.map(|x| acc.max(x)))
    }

    /// `max_t |P(t) - P(0)|` relative to `sum_k m_k |v_k(0)|` (momentum is often zero).
    pub fn linear_momentum_drift(&self) -> S {
        let p0 = &self.diagnostics[0].linear_momentum;
        let first = &self.samples[0];
        let scale: S = (0..self.system.n())
            .map(|k| self.system.masses()[k] * norm(first.velocity(k)))
            .sum::<S>()
            .max(S::min_positive_value());
        self.diagnostics
            .iter()
            .map(|d| {
                let diff: Vec<S> = d.linear_momentum.iter().zip(p0).map(|(&a, &b)| a - b).collect();
                norm(&diff) / scale
            })
            .fold(S::zero(), S::max)
    }
}

fn pack<S: Scalar>(state: &PhaseState<S>) -> Vec<S> {
    let mut y = state.positions.clone();
    y.extend_from_slice(&state.velocities);
    y
}

fn unpack<S: Scalar>(t: S, dim: usize, y: &[S]) -> PhaseState<S> {
    let half = y.len() / 2;
    PhaseState {
        t,
        dim,
        positions: y[..half].to_vec(),
        velocities: y[half..].to_vec(),
    }
}

/// Integrate from `initial` to `t_end`, sampling every `spec.sample_dt`.
///
/// A state closer than the collision floor ends the run with
/// [`Termination::Collision`]; samples before it are kept.
pub fn integrate<S: Scalar>(
    system: &BodySystem<S>,
    initial: &PhaseState<S>,
    t_end: S,
    spec: &IntegratorSpec<S>,
) -> Result<Trajectory<S>> {
    spec.validate()?;
    initial.check(system)?;
    if !(t_end > initial.t) {
        return Err(Error::InvalidIntegrator(format!(
            "t_end {t_end} must exceed the initial time {}",
            initial.t
        )));
    }
    let floor = CollisionFloor::for_state(system, &initial.positions);
    // Surfaces an initial collision as an error rather than a flagged trajectory.
    Diagnostics::evaluate(system, initial, floor)?;

    let half = initial.positions.len();
    // Stage states only need to be evaluable; the floor applies to accepted states.
    let stage_floor = CollisionFloor(S::zero());
    let rhs = |_t: S, y: &[S], dy: &mut [S]| -> Result<()> {
        dy[..half].copy_from_slice(&y[half..]);
        accelerations_into(system, &y[..half], stage_floor, &mut dy[half..])
    };
    let admissible = |_t: S, y: &[S]| -> Result<()> {
        pair_table(system, &y[..half], floor).map(|_| ())
    };
    let ctl = StepControl {
        rel_tol: spec.rel_tol,
        abs_tol: spec.abs_tol,
        max_step: spec.max_step,
    };
    let half = system.n() * system.dim();
    let sol = dop853::solve_sampled(rhs, admissible, initial.t, &pack(initial), t_end, spec.sample_dt, ctl);

    let termination = match sol.outcome {
        SolveOutcome::Completed => Termination::Completed,
        SolveOutcome::Refused(Error::Collision { .. }) => Termination::Collision,
        SolveOutcome::StepUnderflow if approaching_collision(system, &sol.final_state[..half], floor) => {
            Termination::Collision
        }
        SolveOutcome::Refused(_) | SolveOutcome::StepUnderflow => Termination::StepFailure,
    };
    let mut samples = Vec::with_capacity(sol.times.len());
    let mut diagnostics = Vec::with_capacity(sol.times.len());
    for (t, y) in sol.times.iter().zip(&sol.states) {
        let state = unpack(*t, system.dim(), y);
        diagnostics.push(Diagnostics::evaluate(system, &state, floor)?);
        samples.push(state);
    }
    Ok(Trajectory {
        system: system.clone(),
        samples,
        diagnostics,
        termination,
        collision_floor: floor,
        spec: *spec,
        stats: sol.stats,
        end_state: unpack(sol.final_time, system.dim(), &sol.final_state),
    })
}

/// For `alpha >= 1` a colliding pair shrinks like `(t_c - t)^(1/(alpha+1))`
/// or faster, so the step size hits the resolution of the time axis well
/// before the separation reaches the floor. An underflow with some pair
/// closer than this fraction of the initial scale is taken as that collision.
pub const UNDERFLOW_COLLISION_FRACTION: f64 = 1e-3;

fn approaching_collision<S: Scalar>(system: &BodySystem<S>, positions: &[S], floor: CollisionFloor<S>) -> bool {
    let scale = floor.0 / S::lit(crate::dynamics::COLLISION_FRACTION);
    let limit = S::lit(UNDERFLOW_COLLISION_FRACTION) * scale;
    match pair_table(system, positions, CollisionFloor(S::zero())) {
        Ok(table) => table.min_delta() < limit * limit,
        Err(_) => true,
    }
}
