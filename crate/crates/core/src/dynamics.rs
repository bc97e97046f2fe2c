//! Power-law n-body dynamics with f(x) = x^(-alpha-1).
//!
//! Every routine is a pure function of a [`BodySystem`] and a [`PhaseState`].
//! Pair sums run over unordered pairs `(i, k)`, `i < k`, in lexicographic
//! order; ordered double sums are reproduced with weights `2 m_i m_k`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Collisions are declared below this fraction of the RMS mutual separation.
pub const COLLISION_FRACTION: f64 = 1e-8;

/// Masses, force exponent and spatial dimension of an n-body problem.
///
/// Units are dimensionless with the gravitational constant folded into the masses.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySystem<S> {
    masses: Vec<S>,
    alpha: S,
    dim: usize,
}

impl<S: Scalar> BodySystem<S> {
    pub fn new(masses: Vec<S>, alpha: S, dim: usize) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::InvalidSystem(format!(
                "need at least 2 bodies, got {}",
                masses.len()
            )));
        }
        if let Some(k) = masses.iter().position(|m| !(m.is_finite() && *m > S::zero())) {
            return Err(Error::InvalidSystem(format!(
                "mass {k} must be finite and positive, got {}",
                masses[k]
            )));
        }
        if !(alpha.is_finite() && alpha > S::zero()) {
            return Err(Error::InvalidSystem(format!(
                "alpha must be finite and positive, got {alpha}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidSystem("dimension must be at least 1".into()));
        }
        Ok(Self { masses, alpha, dim })
    }

    /// `n` equal unit masses.
    pub fn equal_masses(n: usize, alpha: S, dim: usize) -> Result<Self> {
        Self::new(vec![S::one(); n], alpha, dim)
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[S] {
        &self.masses
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of unordered pairs, n(n-1)/2.
    pub fn pair_count(&self) -> usize {
        self.n() * (self.n() - 1) / 2
    }

    pub fn total_mass(&self) -> S {
        self.masses.iter().copied().sum()
    }

    /// `sum_{i != j} m_i m_j`; the moment of inertia of a configuration
    /// whose mutual separations are all 1.
    pub fn mass_pair_sum(&self) -> S {
        self.pairs()
            .map(|(i, k)| S::two() * self.masses[i] * self.masses[k])
            .sum()
    }

    /// Unordered pairs in the fixed lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| (i + 1..n).map(move |k| (i, k)))
    }

    /// Same masses and dimension with a different exponent.
    pub fn with_alpha(&self, alpha: S) -> Result<Self> {
        Self::new(self.masses.clone(), alpha, self.dim)
    }
}

/// Positions and velocities of all bodies at time `t`, stored flat
/// (`body * dim + component`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState<S> {
    pub t: S,
    pub dim: usize,
    pub positions: Vec<S>,
    pub velocities: Vec<S>,
}

impl<S: Scalar> PhaseState<S> {
    pub fn new(t: S, dim: usize, positions: Vec<S>, velocities: Vec<S>) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 || velocities.len() != positions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} position and {} velocity components for dimension {dim}",
                positions.len(),
                velocities.len()
            )));
        }
        Ok(Self {
            t,
            dim,
            positions,
            velocities,
        })
    }

    /// A state at rest.
    pub fn at_rest(t: S, dim: usize, positions: Vec<S>) -> Result<Self> {
        let velocities = vec![S::zero(); positions.len()];
        Self::new(t, dim, positions, velocities)
    }

    /// Build from one vector per body.
    pub fn from_bodies(t: S, positions: &[Vec<S>], velocities: &[Vec<S>]) -> Result<Self> {
        let dim = positions.first().map_or(0, Vec::len);
        if positions.iter().chain(velocities).any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(
                "every position and velocity needs the same dimension".into(),
            ));
        }
        Self::new(t, dim, positions.concat(), velocities.concat())
    }

    pub fn body_count(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn position(&self, k: usize) -> &[S] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn velocity(&self, k: usize) -> &[S] {
        &self.velocities[k * self.dim..(k + 1) * self.dim]
    }

    /// Positions multiplied by `factor`; velocities unchanged.
    pub fn scaled(&self, factor: S) -> Self {
        let mut out = self.clone();
        out.positions.iter_mut().for_each(|x| *x = *x * factor);
        out
    }

    /// Positions shifted by `offset`.
    pub fn translated(&self, offset: &[S]) -> Self {
        let mut out = self.clone();
        for (c, x) in out.positions.iter_mut().enumerate() {
            *x += offset[c % self.dim];
        }
        out
    }

    pub(crate) fn check(&self, system: &BodySystem<S>) -> Result<()> {
        if self.dim != system.dim() || self.positions.len() != system.n() * system.dim() {
            return Err(Error::DimensionMismatch(format!(
                "system has {} bodies in dimension {}, state has {} components in dimension {}",
                system.n(),
                system.dim(),
                self.positions.len(),
                self.dim
            )));
        }
        if self.velocities.len() != self.positions.len() {
            return Err(Error::DimensionMismatch(
                "velocity and position lengths differ".into(),
            ));
        }
        Ok(())
    }
}

/// Minimum admissible mutual separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionFloor<S>(pub S);

impl<S: Scalar> CollisionFloor<S> {
    /// `COLLISION_FRACTION` times the RMS separation `sqrt(I / sum_{i != j} m_i m_j)`.
    pub fn for_state(system: &BodySystem<S>, positions: &[S]) -> Self {
        let scale = (inertia_of(system, positions) / system.mass_pair_sum()).sqrt();
        CollisionFloor(S::lit(COLLISION_FRACTION) * scale)
    }

    pub fn separation(&self) -> S {
        self.0
    }

    pub(crate) fn check(&self, i: usize, k: usize, delta: S) -> Result<()> {
        // NaN compares false, so it is reported as a collision too.
        if delta.is_finite() && delta >= self.0 * self.0 && delta > S::zero() {
            Ok(())
        } else {
            Err(Error::Collision {
                i,
                j: k,
                separation: delta.sqrt().to_f64().unwrap_or(f64::NAN),
                floor: self.0.to_f64().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Squared separations of all unordered pairs with their sum weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable<S> {
    /// `Delta_j = |q_i - q_k|^2` for pair `j = (i, k)`.
    pub deltas: Vec<S>,
    /// `M_j = 2 m_i m_k`.
    pub weights: Vec<S>,
    pub pair_index: Vec<(usize, usize)>,
}

impl<S: Scalar> PairTable<S> {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// `sum_j M_j Delta_j`, ascending pair index.
    pub fn weighted_sum(&self) -> S {
        self.weights
            .iter()
            .zip(&self.deltas)
            .map(|(&w, &d)| w * d)
            .fold(S::zero(), |acc, x| acc + x)
    }

    /// `sum_j M_j Delta_j^(-alpha)`, ascending pair index.
    pub fn weighted_power_sum(&self, alpha: S) -> S {
        self.weights
            .iter()
            .zip(&self.deltas)
            .map(|(&w, &d)| w * d.powf(-alpha))
            .fold(S::zero(), |acc, x| acc + x)
    }

    pub fn min_delta(&self) -> S {
        self.deltas
            .iter()
            .copied()
            .fold(S::infinity(), |a, b| a.min(b))
    }
}

#[inline]
fn squared_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(S::zero(), |acc, x| acc + x)
}

/// Pair table with the collision floor derived from the state's own scale.
pub fn pairwise_deltas<S: Scalar>(
    system: &BodySystem<S>,
    state: &PhaseState<S>,
) -> Result<PairTable<S>> {
    state.check(system)?;
    let floor = CollisionFloor::for_state(system, &state.positions);
    pair_table(system, &state.positions, floor)
}

pub fn pairwise_deltas_with_floor<S: Scalar>(
    system: &BodySystem<S>,
    state: &PhaseState<S>,
    floor: CollisionFloor<S>,
) -> Result<PairTable<S>> {
    state.check(system)?;
    pair_table(system, &state.positions, floor)
}

pub(crate) fn pair_table<S: Scalar>(
    system: &BodySystem<S>,
    positions: &[S],
    floor: CollisionFloor<S>,
) -> Result<PairTable<S>> {
    let d = system.dim();
    let m = system.masses();
    let count = system.pair_count();
    let mut table = PairTable {
        deltas: Vec::with_capacity(count),
        weights: Vec::with_capacity(count),
        pair_index: Vec::with_capacity(count),
    };
    for (i, k) in system.pairs() {
        let delta = squared_distance(&positions[i * d..(i + 1) * d], &positions[k * d..(k + 1) * d]);
        floor.check(i, k, delta)?;
        table.deltas.push(delta);
        table.weights.push(S::two() * m[i] * m[k]);
        table.pair_index.push((i, k));
    }
    Ok(table)
}

/// Accelerations written into `out` (flat, same layout as positions).
pub(crate) fn accelerations_into<S: Scalar>(
    system: &BodySystem<S>,
    positions: &[S],
    floor: CollisionFloor<S>,
    out: &mut [S],
) -> Result<()> {
    let d = system.dim();
    let m = system.masses();
    let exponent = -(system.alpha() + S::one());
    out.iter_mut().for_each(|a| *a = S::zero());
    for (i, k) in system.pairs() {
        let (qi, qk) = (&positions[i * d..(i + 1) * d], &positions[k * d..(k + 1) * d]);
        let delta = squared_distance(qi, qk);
        floor.check(i, k, delta)?;
        let f = delta.powf(exponent);
        for c in 0..d {
            let pull = (qk[c] - qi[c]) * f;
            out[i * d + c] += m[k] * pull;
            out[k * d + c] -= m[i] * pull;
        }
    }
    Ok(())
}

/// `q''_k = sum_{j != k} m_j (q_j - q_k) |q_j - q_k|^(-2 alpha - 2)`, flat layout.
pub fn accelerations<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> Result<Vec<S>> {
    state.check(system)?;
    let floor = CollisionFloor::for_state(system, &state.positions);
    let mut out = vec![S::zero(); state.positions.len()];
    accelerations_into(system, &state.positions, floor, &mut out)?;
    Ok(out)
}

pub(crate) fn inertia_of<S: Scalar>(system: &BodySystem<S>, positions: &[S]) -> S {
    let d = system.dim();
    let m = system.masses();
    system
        .pairs()
        .map(|(i, k)| {
            let delta =
                squared_distance(&positions[i * d..(i + 1) * d], &positions[k * d..(k + 1) * d]);
            (S::two() * m[i] * m[k]) * delta
        })
        .fold(S::zero(), |acc, x| acc + x)
}

/// `I = sum_{i != j} m_i m_j |q_j - q_i|^2`.
pub fn moment_of_inertia<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> S {
    inertia_of(system, &state.positions)
}

/// `U = sum_{i != j} m_i m_j d_ij^(-alpha)` with `d_ij` the squared separation.
pub fn potential<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> Result<S> {
    Ok(pairwise_deltas(system, state)?.weighted_power_sum(system.alpha()))
}

/// The scale-invariant product `I^alpha U`.
pub fn configurational_measure<S: Scalar>(
    system: &BodySystem<S>,
    state: &PhaseState<S>,
) -> Result<S> {
    let table = pairwise_deltas(system, state)?;
    Ok(measure_of(system, &table))
}

pub(crate) fn measure_of<S: Scalar>(system: &BodySystem<S>, table: &PairTable<S>) -> S {
    let alpha = system.alpha();
    table.weighted_sum().powf(alpha) * table.weighted_power_sum(alpha)
}

pub fn kinetic_energy<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> S {
    (0..system.n())
        .map(|k| S::half() * system.masses()[k] * state.velocity(k).iter().map(|&v| v * v).sum::<S>())
        .sum()
}

/// `E = sum_k m_k |q'_k|^2 / 2 - U / (4 alpha)`.
///
/// With the ordered-sum `U`, the force on body k is `grad_k U / (4 alpha)`,
/// so this is the conserved energy of the flow.
pub fn energy<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> Result<S> {
    let u = potential(system, state)?;
    Ok(kinetic_energy(system, state) - u / (S::lit(4.0) * system.alpha()))
}

pub fn center_of_mass<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> Vec<S> {
    weighted_mean(system, &state.positions)
}

pub(crate) fn weighted_mean<S: Scalar>(system: &BodySystem<S>, flat: &[S]) -> Vec<S> {
    let d = system.dim();
    let mut c = vec![S::zero(); d];
    for (k, &m) in system.masses().iter().enumerate() {
        for (cc, &x) in c.iter_mut().zip(&flat[k * d..(k + 1) * d]) {
            *cc += m * x;
        }
    }
    let total = system.total_mass();
    c.iter_mut().for_each(|x| *x = *x / total);
    c
}

pub fn linear_momentum<S: Scalar>(system: &BodySystem<S>, state: &PhaseState<S>) -> Vec<S> {
    let d = system.dim();
    let mut p = vec![S::zero(); d];
    for (k, &m) in system.masses().iter().enumerate() {
        for (pc, &v) in p.iter_mut().zip(state.velocity(k)) {
            *pc += m * v;
        }
    }
    p
}

/// Angular momentum about the center of mass, in the center-of-mass frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularMomentum<S> {
    Planar(S),
    Spatial([S; 3]),
}

impl<S: Scalar> AngularMomentum<S> {
    /// Signed value in the plane, Euclidean norm in space.
    pub fn scalar(&self) -> S {
        match self {
            AngularMomentum::Planar(l) => *l,
            AngularMomentum::Spatial(v) => crate::scalar::norm(v),
        }
    }

    /// Euclidean distance between two angular momenta of the same kind.
    pub fn distance(&self, other: &Self) -> S {
        match (self, other) {
            (AngularMomentum::Planar(a), AngularMomentum::Planar(b)) => (*a - *b).abs(),
            (AngularMomentum::Spatial(a), AngularMomentum::Spatial(b)) => {
                crate::scalar::norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
            }
            _ => S::nan(),
        }
    }
}

pub fn angular_momentum<S: Scalar>(
    system: &BodySystem<S>,
    state: &PhaseState<S>,
) -> Result<AngularMomentum<S>> {
    let d = system.dim();
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let c = center_of_mass(system, state);
    let total = system.total_mass();
    let vc: Vec<S> = linear_momentum(system, state)
        .into_iter()
        .map(|p| p / total)
        .collect();
    let mut l = [S::zero(); 3];
    for (k, &m) in system.masses().iter().enumerate() {
        let r: Vec<S> = state.position(k).iter().zip(&c).map(|(&x, &y)| x - y).collect();
        let v: Vec<S> = state.velocity(k).iter().zip(&vc).map(|(&x, &y)| x - y).collect();
        if d == 2 {
            l[2] += m * (r[0] * v[1] - r[1] * v[0]);
        } else {
            l[0] += m * (r[1] * v[2] - r[2] * v[1]);
            l[1] += m * (r[2] * v[0] - r[0] * v[2]);
            l[2] += m * (r[0] * v[1] - r[1] * v[0]);
        }
    }
    Ok(if d == 2 {
        AngularMomentum::Planar(l[2])
    } else {
        AngularMomentum::Spatial(l)
    })
}
