//! Acceleration-free curves `t ↦ ((1−t)π¹ + tπ²)_# γ` in particle form.
//!
//! Every entry of the generating plan becomes a particle moving on a straight
//! line `w + t z` with constant mass `θ`. Evaluating the curve merges
//! particles that currently sit on the same point; the particle list itself
//! is never merged, since particles meeting at one instant separate again.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{norm_sq, DiscreteMeasure};
use crate::transport::{glue_plans, is_cyclically_monotone, solve_w2, TransportPlan};

/// Relative tolerance for the constant-speed identity `W₂(μ_s, μ_r) = |r − s|·√cost`.
pub const GEODESIC_REL_TOL: f64 = 1e-7;

/// Componentwise agreement required to accept a crossing candidate.
pub const CROSSING_TOL: f64 = 1e-9;

/// Crossing times closer than this are reported once.
pub const CROSSING_MERGE_TOL: f64 = 1e-12;

/// Smallest radius tried by [`AccelerationFreeCurve::local_geodesic_radius`].
pub const MIN_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    /// Built from an arbitrary feasible plan.
    FromPlan,
    /// Built from a plan that passed the full cyclical-monotonicity certificate.
    Geodesic,
    /// Built from two optimal plans glued over a common base measure.
    GeneralizedGeodesic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A particle `t ↦ start + t · displacement` of mass `mass`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    pub start: Vec<f64>,
    pub displacement: Vec<f64>,
    pub mass: f64,
}

impl Particle {
    pub fn position(&self, t: f64) -> Vec<f64> {
        self.start
            .iter()
            .zip(&self.displacement)
            .map(|(w, z)| z * t + w)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccelerationFreeCurve {
    dim: usize,
    particles: Vec<Particle>,
    kind: CurveKind,
    plan_cost: f64,
}

impl AccelerationFreeCurve {
    /// One particle per plan entry. The kind is upgraded to
    /// [`CurveKind::Geodesic`] when the plan is cyclically monotone over its
    /// full support.
    pub fn from_plan(plan: &TransportPlan) -> Self {
        let particles = plan
            .entries()
            .iter()
            .map(|e| {
                let x = plan.source().atom(e.source);
                let y = plan.target().atom(e.target);
                Particle {
                    start: x.to_vec(),
                    displacement: y.iter().zip(x).map(|(y, x)| y - x).collect(),
                    mass: e.mass,
                }
            })
            .collect();
        let kind = if is_cyclically_monotone(plan, plan.support_len()) {
            CurveKind::Geodesic
        } else {
            CurveKind::FromPlan
        };
        Self::assemble(plan.source().dim(), particles, kind)
    }

    /// Free-form particle curve; masses must sum to one.
    pub fn from_particles(dim: usize, particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Empty);
        }
        for p in &particles {
            if p.start.len() != dim || p.displacement.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.start.len().max(p.displacement.len()),
                });
            }
            if !(p.mass > 0.0) {
                return Err(Error::InvalidArgument(format!("particle mass {} is not positive", p.mass)));
            }
        }
        let total: f64 = particles.iter().map(|p| p.mass).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTotalMass(total));
        }
        Ok(Self::assemble(dim, particles, CurveKind::FromPlan))
    }

    /// The geodesic from `mu` to `nu` along an optimal plan.
    pub fn geodesic(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        Ok(Self::from_plan(&solve_w2(mu, nu)?.plan))
    }

    /// Generalized geodesic from `mu2` to `mu3` with base `mu1`: optimal
    /// plans `mu1 → mu2` and `mu1 → mu3` are glued and particles follow the
    /// lines `x₂ → x₃`.
    pub fn generalized_geodesic(
        mu1: &DiscreteMeasure,
        mu2: &DiscreteMeasure,
        mu3: &DiscreteMeasure,
    ) -> Result<Self> {
        let g12 = solve_w2(mu1, mu2)?.plan;
        let g13 = solve_w2(mu1, mu3)?.plan;
        let glued = glue_plans(&g12, &g13)?;
        let particles = glued
            .entries()
            .iter()
            .map(|e| {
                let x2 = glued.second_point(e);
                let x3 = glued.third_point(e);
                Particle {
                    start: x2.to_vec(),
                    displacement: x3.iter().zip(x2).map(|(b, a)| b - a).collect(),
                    mass: e.mass,
                }
            })
            .collect();
        Ok(Self::assemble(mu1.dim(), particles, CurveKind::GeneralizedGeodesic))
    }

    fn assemble(dim: usize, particles: Vec<Particle>, kind: CurveKind) -> Self {
        let plan_cost = particles.iter().map(|p| p.mass * norm_sq(&p.displacement)).sum();
        AccelerationFreeCurve {
            dim,
            particles,
            kind,
            plan_cost,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    /// `Σ θ_k |z_k|²`, the cost of the generating plan.
    pub fn plan_cost(&self) -> f64 {
        self.plan_cost
    }

    pub fn description(&self) -> String {
        format!(
            "{:?} curve in R^{} with {} particles, plan cost {:.17e}",
            self.kind,
            self.dim,
            self.particles.len(),
            self.plan_cost
        )
    }

    /// `μ_t`, with coincident particles merged into one atom.
    pub fn eval(&self, t: f64) -> Result<DiscreteMeasure> {
        self.eval_with_map(t).map(|(m, _)| m)
    }

    /// `μ_t` together with the atom index each particle lands on.
    pub fn eval_with_map(&self, t: f64) -> Result<(DiscreteMeasure, Vec<usize>)> {
        check_unit(t)?;
        let mut coords = Vec::with_capacity(self.particles.len() * self.dim);
        for p in &self.particles {
            coords.extend(p.start.iter().zip(&p.displacement).map(|(w, z)| z * t + w));
        }
        let masses: Vec<f64> = self.particles.iter().map(|p| p.mass).collect();
        DiscreteMeasure::from_flat(self.dim, &coords, &masses)
    }

    /// Sorted times in `[0, 1]` at which two distinct particle lines meet.
    pub fn crossing_times(&self) -> Vec<f64> {
        let mut times = Vec::new();
        for (a, p) in self.particles.iter().enumerate() {
            for q in &self.particles[a + 1..] {
                if let Some(t) = line_meeting_time(p, q) {
                    times.push(t);
                }
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|b, a| (*b - *a).abs() <= CROSSING_MERGE_TOL);
        times
    }

    /// Whether `[s, r] ∋ t ↦ μ_t` moves at the constant speed `√plan_cost`,
    /// checked between the endpoints and through the midpoint with the exact
    /// solver.
    pub fn restriction_is_geodesic(&self, s: f64, r: f64) -> Result<bool> {
        check_unit(s)?;
        check_unit(r)?;
        if s >= r {
            return Err(Error::InvalidArgument(format!("need s < r, got s = {s}, r = {r}")));
        }
        let speed = self.plan_cost.sqrt();
        let m = 0.5 * (s + r);
        let mu_s = self.eval(s)?;
        let mu_m = self.eval(m)?;
        let mu_r = self.eval(r)?;
        for (a, b, ta, tb) in [(&mu_s, &mu_r, s, r), (&mu_s, &mu_m, s, m), (&mu_m, &mu_r, m, r)] {
            let got = solve_w2(a, b)?.w2;
            let want = (tb - ta) * speed;
            if (got - want).abs() > GEODESIC_REL_TOL * got.max(want) + 1e-14 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// A verified radius `ε > 0` such that the curve restricted to
    /// `[s, s + ε]` (or `[s − ε, s]`) is a constant-speed geodesic.
    ///
    /// Starts from half the distance to the next crossing time in the given
    /// direction (or to the end of `[0, 1]`) and halves until the restriction
    /// verifies.
    pub fn local_geodesic_radius(&self, s: f64, direction: Direction) -> Result<f64> {
        let bound = match direction {
            Direction::Forward => {
                if !(0.0..1.0).contains(&s) {
                    return Err(Error::OutOfRange { value: s, lo: 0.0, hi: 1.0 });
                }
                let next = self
                    .crossing_times()
                    .into_iter()
                    .find(|&t| t > s + CROSSING_MERGE_TOL)
                    .unwrap_or(1.0);
                next - s
            }
            Direction::Backward => {
                if !(s > 0.0 && s <= 1.0) {
                    return Err(Error::OutOfRange { value: s, lo: 0.0, hi: 1.0 });
                }
                let prev = self
                    .crossing_times()
                    .into_iter()
                    .rev()
                    .find(|&t| t < s - CROSSING_MERGE_TOL)
                    .unwrap_or(0.0);
                s - prev
            }
        };
        let mut eps = 0.5 * bound;
        while eps >= MIN_RADIUS {
            let ok = match direction {
                Direction::Forward => self.restriction_is_geodesic(s, s + eps)?,
                Direction::Backward => self.restriction_is_geodesic(s - eps, s)?,
            };
            if ok {
                return Ok(eps);
            }
            eps *= 0.5;
        }
        Err(Error::NoRadius(s))
    }
}

fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfRange { value: t, lo: 0.0, hi: 1.0 })
    }
}

/// The time at which two non-parallel particle lines meet inside `[0, 1]`.
///
/// The candidate comes from the coordinate where the relative velocity is
/// largest; every coordinate must then agree within [`CROSSING_TOL`].
fn line_meeting_time(p: &Particle, q: &Particle) -> Option<f64> {
    let dz: Vec<f64> = p.displacement.iter().zip(&q.displacement).map(|(a, b)| a - b).collect();
    let dw: Vec<f64> = p.start.iter().zip(&q.start).map(|(a, b)| a - b).collect();
    let (c, &pivot) = dz
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
    if pivot == 0.0 {
        return None;
    }
    let t = -dw[c] / pivot;
    if !(-CROSSING_MERGE_TOL..=1.0 + CROSSING_MERGE_TOL).contains(&t) {
        return None;
    }
    let t = t.clamp(0.0, 1.0);
    dw.iter()
        .zip(&dz)
        .all(|(w, z)| (w + t * z).abs() <= CROSSING_TOL)
        .then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::PlanEntry;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn crossing_pair() -> AccelerationFreeCurve {
        let mu = line(&[0.0, 1.0]);
        let plan = TransportPlan::new(
            mu.clone(),
            mu,
            vec![
                PlanEntry { source: 0, target: 1, mass: 0.5 },
                PlanEntry { source: 1, target: 0, mass: 0.5 },
            ],
        )
        .unwrap();
        AccelerationFreeCurve::from_plan(&plan)
    }

    #[test]
    fn identity_plan_is_constant() {
        let mu = DiscreteMeasure::new(vec![vec![0.0, 1.0], vec![2.0, -1.0]], vec![0.3, 0.7]).unwrap();
        let c = AccelerationFreeCurve::from_plan(&TransportPlan::identity(&mu));
        assert_eq!(c.kind(), CurveKind::Geodesic);
        assert!(c.particles().iter().all(|p| p.displacement.iter().all(|&z| z == 0.0)));
        for t in [0.0, 0.3, 1.0] {
            assert!(c.eval(t).unwrap().approx_eq(&mu, 1e-15));
        }
    }

    #[test]
    fn dirac_line() {
        let c = AccelerationFreeCurve::geodesic(
            &DiscreteMeasure::dirac(vec![0.0]).unwrap(),
            &DiscreteMeasure::dirac(vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(c.particles().len(), 1);
        assert_eq!(c.eval(0.25).unwrap().atom(0), &[0.25]);
    }

    #[test]
    fn crossing_pair_merges_at_half() {
        let c = crossing_pair();
        assert_eq!(c.kind(), CurveKind::FromPlan);
        assert_eq!(c.plan_cost(), 1.0);
        let mid = c.eval(0.5).unwrap();
        assert_eq!(mid.len(), 1);
        assert_eq!(mid.atom(0), &[0.5]);
        assert_eq!(mid.weight(0), 1.0);
        assert!(c.eval(0.0).unwrap().approx_eq(&line(&[0.0, 1.0]), 0.0));
        assert!(c.eval(1.0).unwrap().approx_eq(&line(&[0.0, 1.0]), 0.0));
    }

    #[test]
    fn eval_rejects_out_of_range() {
        let c = crossing_pair();
        assert!(matches!(c.eval(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(c.eval(1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn crossing_times_cases() {
        assert_eq!(crossing_pair().crossing_times(), vec![0.5]);

        let single = AccelerationFreeCurve::geodesic(
            &DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap(),
            &DiscreteMeasure::dirac(vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert!(single.crossing_times().is_empty());

        let parallel = AccelerationFreeCurve::from_particles(
            2,
            vec![
                Particle { start: vec![0.0, 0.0], displacement: vec![1.0, 1.0], mass: 0.5 },
                Particle { start: vec![0.0, 1.0], displacement: vec![1.0, 1.0], mass: 0.5 },
            ],
        )
        .unwrap();
        assert!(parallel.crossing_times().is_empty());

        // skew lines in the plane: x-coordinates meet at t = 0.5, y never agree
        let skew = AccelerationFreeCurve::from_particles(
            2,
            vec![
                Particle { start: vec![0.0, 0.0], displacement: vec![1.0, 0.0], mass: 0.5 },
                Particle { start: vec![1.0, 1.0], displacement: vec![-1.0, 0.0], mass: 0.5 },
            ],
        )
        .unwrap();
        assert!(skew.crossing_times().is_empty());
    }

    #[test]
    fn radius_examples() {
        let mu = line(&[0.0, 1.0, 2.5]);
        let constant = AccelerationFreeCurve::from_plan(&TransportPlan::identity(&mu));
        assert_eq!(constant.local_geodesic_radius(0.0, Direction::Forward).unwrap(), 0.5);

        let c = crossing_pair();
        assert_eq!(c.local_geodesic_radius(0.0, Direction::Forward).unwrap(), 0.25);
        assert_eq!(c.local_geodesic_radius(0.5, Direction::Forward).unwrap(), 0.25);
        assert_eq!(c.local_geodesic_radius(1.0, Direction::Backward).unwrap(), 0.25);
        assert!(c.local_geodesic_radius(1.0, Direction::Forward).is_err());
        assert!(c.local_geodesic_radius(0.0, Direction::Backward).is_err());
    }

    #[test]
    fn restriction_examples() {
        let c = crossing_pair();
        assert!(!c.restriction_is_geodesic(0.0, 1.0).unwrap());
        assert!(c.restriction_is_geodesic(0.0, 0.25).unwrap());
        assert!(c.restriction_is_geodesic(0.5, 1.0).unwrap());

        let g = AccelerationFreeCurve::geodesic(&line(&[0.0, 1.0, 2.0]), &line(&[-0.5, 0.7, 3.0])).unwrap();
        assert_eq!(g.kind(), CurveKind::Geodesic);
        assert!(g.restriction_is_geodesic(0.1, 0.9).unwrap());
    }

    #[test]
    fn generalized_geodesic_simple_cases() {
        let mu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 0.5]], vec![0.4, 0.6]).unwrap();
        let c = AccelerationFreeCurve::generalized_geodesic(&mu, &mu, &mu).unwrap();
        assert_eq!(c.kind(), CurveKind::GeneralizedGeodesic);
        assert_eq!(c.plan_cost(), 0.0);
        assert!(c.eval(0.7).unwrap().approx_eq(&mu, 1e-15));

        let d = |x: f64| DiscreteMeasure::dirac(vec![x]).unwrap();
        let c = AccelerationFreeCurve::generalized_geodesic(&d(0.0), &d(-2.0), &d(3.0)).unwrap();
        assert_eq!(c.particles().len(), 1);
        assert_eq!(c.eval(0.2).unwrap().atom(0), &[-1.0]);
        assert_eq!(c.plan_cost(), 25.0);

        let planar = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            AccelerationFreeCurve::generalized_geodesic(&d(0.0), &planar, &d(1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_particles_validation() {
        let p = |m: f64| Particle { start: vec![0.0], displacement: vec![1.0], mass: m };
        assert!(AccelerationFreeCurve::from_particles(1, vec![p(0.5)]).is_err());
        assert!(AccelerationFreeCurve::from_particles(2, vec![p(1.0)]).is_err());
        assert!(AccelerationFreeCurve::from_particles(1, vec![]).is_err());
    }
}
