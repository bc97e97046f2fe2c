//! Planar central configurations: positions where every acceleration equals
//! `-lambda (q_k - c)` for one common multiplier.
//!
//! Configurations are gauge fixed before and after every solver step: center
//! of mass at the origin, moment of inertia equal to `sum_{i != j} m_i m_j`
//! (unit mean-square separation), and the first off-center body on the
//! positive x-axis.

use crate::dynamics::{accelerations_into, inertia_of, weighted_mean, BodySystem, CollisionFloor};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::scalar::{norm, Scalar};

/// A certified planar central configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralConfiguration<S> {
    pub system: BodySystem<S>,
    /// Flat `[x0, y0, x1, y1, ...]`, gauge fixed.
    pub positions: Vec<S>,
    /// Multiplier with `q''_k = -lambda q_k`.
    pub lambda: S,
    pub residual_norm: S,
}

impl<S: Scalar> CentralConfiguration<S> {
    /// Re-evaluate the residual of the stored positions.
    pub fn recheck(&self) -> Result<CcResidual<S>> {
        cc_residual(&self.system, &self.positions)
    }

    pub fn position(&self, k: usize) -> [S; 2] {
        [self.positions[2 * k], self.positions[2 * k + 1]]
    }

    /// Build from stored data (e.g. a file) after re-deriving the certificate.
    pub fn from_positions(system: BodySystem<S>, positions: Vec<S>, tol: S) -> Result<Self> {
        require_planar(&system)?;
        if positions.len() != 2 * system.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} planar bodies",
                positions.len(),
                system.n()
            )));
        }
        let res = cc_residual(&system, &positions)?;
        let residual_norm = res.norm();
        if !(residual_norm <= tol) {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: residual_norm.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            system,
            positions,
            lambda: res.lambda,
            residual_norm,
        })
    }

    /// Sorted mutual distances divided by the largest one.
    pub fn distance_ratios(&self) -> Vec<S> {
        shape_signature(&self.system, &self.positions)
    }
}

/// Sorted mutual distances normalised by the largest.
pub fn shape_signature<S: Scalar>(system: &BodySystem<S>, positions: &[S]) -> Vec<S> {
    let d = system.dim();
    let mut dist: Vec<S> = system
        .pairs()
        .map(|(i, k)| {
            let diff: Vec<S> = (0..d).map(|c| positions[i * d + c] - positions[k * d + c]).collect();
            norm(&diff)
        })
        .collect();
    dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let max = *dist.last().expect("at least one pair");
    dist.into_iter().map(|x| x / max).collect()
}

/// Stacked residual `r_k = q''_k + lambda q_k` and its least-squares multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct CcResidual<S> {
    pub residual: Vec<S>,
    pub lambda: S,
}

impl<S: Scalar> CcResidual<S> {
    pub fn norm(&self) -> S {
        norm(&self.residual)
    }
}

fn require_planar<S: Scalar>(system: &BodySystem<S>) -> Result<()> {
    if system.dim() != 2 {
        return Err(Error::InvalidSystem(format!(
            "central configurations are solved in the plane, got dimension {}",
            system.dim()
        )));
    }
    Ok(())
}

/// Residual of the balance condition for positions with center of mass at
/// the origin. `lambda = -(sum m_k q''_k . q_k) / (sum m_k |q_k|^2)`.
pub fn cc_residual<S: Scalar>(system: &BodySystem<S>, positions: &[S]) -> Result<CcResidual<S>> {
    if positions.len() != system.n() * system.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates for {} bodies in dimension {}",
            positions.len(),
            system.n(),
            system.dim()
        )));
    }
    let floor = CollisionFloor::for_state(system, positions);
    let mut acc = vec![S::zero(); positions.len()];
    accelerations_into(system, positions, floor, &mut acc)?;
    let lambda = multiplier(system, positions, &acc);
    let residual = acc
        .iter()
        .zip(positions)
        .map(|(&a, &q)| a + lambda * q)
        .collect();
    Ok(CcResidual { residual, lambda })
}

fn multiplier<S: Scalar>(system: &BodySystem<S>, q: &[S], acc: &[S]) -> S {
    let d = system.dim();
    let (mut num, mut den) = (S::zero(), S::zero());
    for (c, (&a, &x)) in acc.iter().zip(q).enumerate() {
        let m = system.masses()[c / d];
        num += m * a * x;
        den += m * x * x;
    }
    -num / den
}

/// Jacobian of the stacked residual with respect to the flat positions,
/// including the dependence of the multiplier on the positions.
pub(crate) fn residual_jacobian<S: Scalar>(
    system: &BodySystem<S>,
    q: &[S],
) -> Result<(CcResidual<S>, Matrix<S>)> {
    let d = system.dim();
    let n = system.n();
    let m = system.masses();
    let len = n * d;
    let floor = CollisionFloor::for_state(system, q);
    let mut acc = vec![S::zero(); len];
    accelerations_into(system, q, floor, &mut acc)?;

    let alpha = system.alpha();
    let mut ja = Matrix::zeros(len, len);
    for (i, k) in system.pairs() {
        let u: Vec<S> = (0..d).map(|c| q[k * d + c] - q[i * d + c]).collect();
        let delta: S = u.iter().map(|&x| x * x).sum();
        let f = delta.powf(-(alpha + S::one()));
        let g = -S::two() * (alpha + S::one()) * delta.powf(-(alpha + S::two()));
        for a in 0..d {
            for b in 0..d {
                let block = if a == b { f } else { S::zero() } + g * u[a] * u[b];
                ja.add(i * d + a, k * d + b, m[k] * block);
                ja.add(i * d + a, i * d + b, -m[k] * block);
                ja.add(k * d + a, k * d + b, -m[i] * block);
                ja.add(k * d + a, i * d + b, m[i] * block);
            }
        }
    }

    let mass_of = |c: usize| m[c / d];
    let num: S = (0..len).map(|c| mass_of(c) * acc[c] * q[c]).sum();
    let den: S = (0..len).map(|c| mass_of(c) * q[c] * q[c]).sum();
    let lambda = -num / den;
    let mut dlambda = vec![S::zero(); len];
    for c in 0..len {
        let dnum = (0..len).map(|r| mass_of(r) * ja.get(r, c) * q[r]).sum::<S>() + mass_of(c) * acc[c];
        let dden = S::two() * mass_of(c) * q[c];
        dlambda[c] = -(dnum * den - num * dden) / (den * den);
    }

    let mut jr = ja;
    for r in 0..len {
        for c in 0..len {
            jr.add(r, c, q[r] * dlambda[c]);
        }
        jr.add(r, r, lambda);
    }
    let residual = acc.iter().zip(q).map(|(&a, &x)| a + lambda * x).collect();
    Ok((CcResidual { residual, lambda }, jr))
}

/// Translate, rescale and rotate planar positions into the canonical gauge.
pub fn gauge_fix<S: Scalar>(system: &BodySystem<S>, positions: &[S]) -> Vec<S> {
    let n = system.n();
    let com = weighted_mean(system, positions);
    let mut q: Vec<S> = positions
        .iter()
        .enumerate()
        .map(|(c, &x)| x - com[c % 2])
        .collect();
    let inertia = inertia_of(system, &q);
    let scale = (system.mass_pair_sum() / inertia).sqrt();
    q.iter_mut().for_each(|x| *x = *x * scale);

    let radii: Vec<S> = (0..n).map(|k| q[2 * k].hypot(q[2 * k + 1])).collect();
    let rmax = radii.iter().copied().fold(S::zero(), S::max);
    let Some(anchor) = radii.iter().position(|&r| r > S::lit(1e-9) * rmax) else {
        return q;
    };
    let (x, y) = (q[2 * anchor], q[2 * anchor + 1]);
    if y == S::zero() && x > S::zero() {
        return q;
    }
    let r = radii[anchor];
    let (cos, sin) = (x / r, y / r);
    for k in 0..n {
        let (a, b) = (q[2 * k], q[2 * k + 1]);
        q[2 * k] = cos * a + sin * b;
        q[2 * k + 1] = -sin * a + cos * b;
    }
    q[2 * anchor] = r;
    q[2 * anchor + 1] = S::zero();
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    Equilateral,
    Collinear,
    Ngon,
}

impl SeedKind {
    pub fn name(&self) -> &'static str {
        match self {
            SeedKind::Equilateral => "equilateral",
            SeedKind::Collinear => "collinear",
            SeedKind::Ngon => "ngon",
        }
    }
}

impl std::str::FromStr for SeedKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "equilateral" => Ok(SeedKind::Equilateral),
            "collinear" => Ok(SeedKind::Collinear),
            "ngon" => Ok(SeedKind::Ngon),
            other => Err(format!("unknown seed kind {other:?}")),
        }
    }
}

/// Textbook planar seeds with centroid at the origin.
///
/// `scale` is the side length (equilateral), the circumradius (ngon) or the
/// spacing (collinear).
pub fn known_seeds<S: Scalar>(kind: SeedKind, n: usize, scale: S) -> Result<Vec<S>> {
    if !(scale.is_finite() && scale > S::zero()) {
        return Err(Error::InvalidSpec(format!("seed scale must be positive, got {scale}")));
    }
    let incompatible = Err(Error::IncompatibleSeed {
        kind: kind.name(),
        n,
    });
    match kind {
        SeedKind::Equilateral => {
            if n != 3 {
                return incompatible;
            }
            let r = scale / S::lit(3.0).sqrt();
            let h = scale * S::half();
            let half_r = r * S::half();
            Ok(vec![r, S::zero(), -half_r, h, -half_r, -h])
        }
        SeedKind::Collinear => {
            if n < 2 {
                return incompatible;
            }
            let mid = S::from_count(n - 1) * S::half();
            Ok((0..n)
                .flat_map(|k| [(S::from_count(k) - mid) * scale, S::zero()])
                .collect())
        }
        SeedKind::Ngon => {
            if n < 2 {
                return incompatible;
            }
            let step = S::lit(2.0 * std::f64::consts::PI) / S::from_count(n);
            let mut q: Vec<S> = (0..n)
                .flat_map(|k| {
                    let a = step * S::from_count(k);
                    [scale * a.cos(), scale * a.sin()]
                })
                .collect();
            for c in 0..2 {
                let mean = (0..n).map(|k| q[2 * k + c]).sum::<S>() / S::from_count(n);
                (0..n).for_each(|k| q[2 * k + c] -= mean);
            }
            Ok(q)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<S> {
    /// Certificate threshold on the residual norm.
    pub tol: S,
    pub max_iterations: usize,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        Self {
            tol: S::lit(1e-12).max(S::lit(64.0) * S::epsilon()),
            max_iterations: 200,
        }
    }
}

/// Gauge constraint rows: translation (2), dilation, rotation.
fn gauge_rows<S: Scalar>(system: &BodySystem<S>, q: &[S]) -> [Vec<S>; 4] {
    let n = system.n();
    let m = system.masses();
    let mut rows: [Vec<S>; 4] = std::array::from_fn(|_| vec![S::zero(); 2 * n]);
    for k in 0..n {
        let (x, y) = (q[2 * k], q[2 * k + 1]);
        rows[0][2 * k] = m[k];
        rows[1][2 * k + 1] = m[k];
        rows[2][2 * k] = m[k] * x;
        rows[2][2 * k + 1] = m[k] * y;
        rows[3][2 * k] = -m[k] * y;
        rows[3][2 * k + 1] = m[k] * x;
    }
    rows
}

fn residual_or_inf<S: Scalar>(system: &BodySystem<S>, q: &[S]) -> S {
    cc_residual(system, q).map_or(S::infinity(), |r| r.norm())
}

/// Gauss–Newton iteration on the gauge-fixed residual with backtracking.
///
/// A full step is accepted when it halves the residual norm; otherwise the
/// step is halved until the norm drops by at least half the step fraction.
pub fn solve_central_config<S: Scalar>(
    system: &BodySystem<S>,
    seed: &[S],
    options: &SolverOptions<S>,
) -> Result<CentralConfiguration<S>> {
    require_planar(system)?;
    if seed.len() != 2 * system.n() {
        return Err(Error::DimensionMismatch(format!(
            "seed has {} coordinates for {} planar bodies",
            seed.len(),
            system.n()
        )));
    }
    let mut q = gauge_fix(system, seed);
    let mut current = cc_residual(system, &q)?.norm();
    let polish_target = options.tol * S::lit(1e-3);
    let len = q.len();
    let mut iterations = 0;

    while iterations < options.max_iterations && current > polish_target {
        iterations += 1;
        let (res, jac) = residual_jacobian(system, &q)?;
        let rows = gauge_rows(system, &q);
        let jscale = (0..len)
            .map(|c| (0..len).map(|r| jac.get(r, c) * jac.get(r, c)).sum::<S>().sqrt())
            .fold(S::zero(), S::max)
            .max(S::one());
        let mut aug = Matrix::zeros(len + 4, len);
        aug.data[..len * len].copy_from_slice(&jac.data);
        for (g, row) in rows.iter().enumerate() {
            let rn = norm(row);
            for c in 0..len {
                aug.set(len + g, c, row[c] / rn * jscale);
            }
        }
        let mut rhs: Vec<S> = res.residual.iter().map(|&r| -r).collect();
        rhs.extend([S::zero(); 4]);
        let step = least_squares(&aug, &rhs, S::lit(1e3) * S::epsilon());

        let mut t = S::one();
        let mut accepted = None;
        while t >= S::lit(1.0 / 1024.0) {
            let trial: Vec<S> = q.iter().zip(&step).map(|(&x, &dx)| x + t * dx).collect();
            let trial = gauge_fix(system, &trial);
            let r = residual_or_inf(system, &trial);
            if r <= (S::one() - t * S::half()) * current {
                accepted = Some((trial, r));
                break;
            }
            t = t * S::half();
        }
        match accepted {
            Some((trial, r)) => {
                q = trial;
                current = r;
            }
            None => break,
        }
    }

    if !(current <= options.tol) {
        return Err(Error::NonConvergence {
            iterations,
            residual: current.to_f64().unwrap_or(f64::NAN),
        });
    }
    let res = cc_residual(system, &q)?;
    Ok(CentralConfiguration {
        system: system.clone(),
        positions: q,
        lambda: res.lambda,
        residual_norm: res.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(n: usize, alpha: f64) -> BodySystem<f64> {
        BodySystem::equal_masses(n, alpha, 2).unwrap()
    }

    #[test]
    fn seeds_match_textbook_coordinates() {
        let q = known_seeds::<f64>(SeedKind::Collinear, 3, 1.0).unwrap();
        assert_eq!(q, vec![-1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

        let q = known_seeds::<f64>(SeedKind::Equilateral, 3, 1.0).unwrap();
        let s = shape_signature(&sys(3, 0.5), &q);
        assert!(s.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        let side = (q[0] - q[2]).hypot(q[1] - q[3]);
        assert!((side - 1.0).abs() < 1e-15);
        assert_eq!(q[0] + q[2] + q[4], 0.0);

        let q = known_seeds::<f64>(SeedKind::Ngon, 4, 1.0).unwrap();
        for k in 0..4 {
            assert!((q[2 * k].hypot(q[2 * k + 1]) - 1.0).abs() < 1e-15);
        }
        assert!(known_seeds::<f64>(SeedKind::Equilateral, 4, 1.0).is_err());
        assert!(known_seeds::<f64>(SeedKind::Ngon, 1, 1.0).is_err());
        assert!(known_seeds::<f64>(SeedKind::Ngon, 4, 0.0).is_err());
        assert!(known_seeds::<f64>(SeedKind::Collinear, 3, f64::NAN).is_err());
    }

    #[test]
    fn symmetric_configurations_have_tiny_residual() {
        let masses = vec![1.0, 2.5, 0.4];
        for alpha in [0.3, 0.5, 1.0, 2.0] {
            let s = BodySystem::new(masses.clone(), alpha, 2).unwrap();
            let tri = known_seeds(SeedKind::Equilateral, 3, 1.0).unwrap();
            let q = gauge_fix(&s, &tri);
            assert!(cc_residual(&s, &q).unwrap().norm() <= 1e-14, "alpha {alpha}");
        }
        for n in 4..=8 {
            let q = known_seeds(SeedKind::Ngon, n, 1.0).unwrap();
            for alpha in [0.5, 1.0] {
                assert!(cc_residual(&sys(n, alpha), &q).unwrap().norm() <= 1e-13, "n {n}");
            }
        }
        for a in [0.1, 1.0, 7.5] {
            let q = known_seeds(SeedKind::Collinear, 3, a).unwrap();
            assert!(cc_residual(&sys(3, 0.5), &q).unwrap().norm() <= 1e-13);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = BodySystem::<f64>::new(vec![1.0, 0.6, 1.7, 0.9], 0.8, 2).unwrap();
        let q = gauge_fix(&s, &[0.3, 0.1, -0.9, 0.4, 0.2, -1.1, 0.8, 0.7]);
        let (_, jac) = residual_jacobian(&s, &q).unwrap();
        let h = 1e-6;
        for c in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[c] += h;
            qm[c] -= h;
            let rp = cc_residual(&s, &qp).unwrap().residual;
            let rm = cc_residual(&s, &qm).unwrap().residual;
            for r in 0..q.len() {
                let fd = (rp[r] - rm[r]) / (2.0 * h);
                assert!((fd - jac.get(r, c)).abs() < 1e-6 * (1.0 + fd.abs()), "({r},{c})");
            }
        }
    }

    #[test]
    fn gauge_is_idempotent() {
        let s = BodySystem::<f64>::new(vec![1.0, 2.0, 3.0], 0.5, 2).unwrap();
        let once = gauge_fix(&s, &[0.4, 1.2, -0.3, 0.5, 2.0, -0.7]);
        let twice = gauge_fix(&s, &once);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-15);
        }
        assert!((inertia_of(&s, &once) - s.mass_pair_sum()).abs() < 1e-13);
        assert_eq!(once[1], 0.0);
        assert!(once[0] > 0.0);
    }

    #[test]
    fn solves_unit_square() {
        let s = sys(4, 0.5);
        let cc = solve_central_config(&s, &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0], &SolverOptions::default())
            .unwrap();
        assert!(cc.residual_norm <= 1e-12);
        assert!(cc.lambda > 0.0);
        let sig = cc.distance_ratios();
        let diag = 2f64.sqrt().recip();
        for r in &sig[..4] {
            assert!((r - diag).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbed_equilateral_returns_to_equilateral() {
        let s = sys(3, 0.5);
        let mut seed = known_seeds(SeedKind::Equilateral, 3, 1.0).unwrap();
        let noise = [0.01, -0.007, 0.004, 0.009, -0.01, 0.003];
        seed.iter_mut().zip(noise).for_each(|(x, e)| *x += e);
        let cc = solve_central_config(&s, &seed, &SolverOptions::default()).unwrap();
        assert!(cc.recheck().unwrap().norm() <= 1e-12);
        for r in cc.distance_ratios() {
            assert!((r - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn uneven_collinear_seed_relaxes_to_equal_spacing() {
        let s = sys(3, 0.5);
        let seed = vec![-1.0, 0.0, 0.0, 0.0, 1.2, 0.0];
        let cc = solve_central_config(&s, &seed, &SolverOptions::default()).unwrap();
        let sig = cc.distance_ratios();
        assert!((sig[0] - 0.5).abs() < 1e-10 && (sig[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_planar_systems() {
        let s = BodySystem::equal_masses(3, 0.5, 3).unwrap();
        assert!(solve_central_config(&s, &[0.0; 9], &SolverOptions::default()).is_err());
    }

    #[test]
    fn coincident_seed_is_a_collision() {
        let s = sys(3, 0.5);
        let r = solve_central_config(&s, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0], &SolverOptions::default());
        assert!(matches!(r, Err(Error::Collision { .. })));
    }
}
