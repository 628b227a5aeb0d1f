//! Certification and refutation of λ-convexity along curves.
//!
//! Zeroth-order checks compare `F(μ_t)` against the chord
//! `(1−t)F(μ₀) + tF(μ₁) − (λ/2)t(1−t)·cost` and against local midpoint
//! inequalities on a grid. First-order checks use Wasserstein gradients
//! (displacement monotonicity, derivative along curves); second-order checks
//! use central differences of `t ↦ F(μ_t)`.
//!
//! Checks only ever certify on finite samples; a violation comes with an
//! exact witness.

use rayon::prelude::*;
use serde::Serialize;

use crate::curves::AccelerationFreeCurve;
use crate::error::{Error, Result};
use crate::functionals::{require_gradient, Functional};
use crate::measures::{dot, DiscreteMeasure};
use crate::sampler::{self, SamplerConfig};
use crate::transport::solve_w2;

/// Default violation tolerance on slacks.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default step for first-derivative central differences.
pub const FIRST_DIFF_STEP: f64 = 1e-4;
/// Default step for second-derivative central differences.
pub const SECOND_DIFF_STEP: f64 = 1e-3;
/// Step used by [`gradient_consistency`].
pub const CONSISTENCY_STEP: f64 = 1e-5;
/// Grid points closer than this to a crossing time are skipped by
/// [`gradient_consistency`].
pub const CROSSING_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

/// Where the worst slack was found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub curve: String,
    /// `chord`, `midpoint`, `displacement-monotonicity` or `second-derivative`.
    pub check: String,
    /// `[t]` for pointwise checks, `[t₁, t₂, t₃]` for midpoint triples.
    pub times: Vec<f64>,
    pub measures: Vec<DiscreteMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub verdict: Verdict,
    /// Most negative margin seen; `+∞` (serialized as null) if nothing ran.
    pub worst_slack: f64,
    pub witness: Option<Witness>,
    pub checks_run: usize,
    pub seed: Option<u64>,
}

/// Running minimum of slacks with a lazily built witness.
struct SlackTracker {
    worst: f64,
    witness: Option<Witness>,
    checks: usize,
    tol: f64,
}

impl SlackTracker {
    fn new(tol: f64) -> Self {
        SlackTracker {
            worst: f64::INFINITY,
            witness: None,
            checks: 0,
            tol,
        }
    }

    fn record(&mut self, slack: f64, witness: impl FnOnce() -> Witness) {
        self.checks += 1;
        if slack < self.worst {
            self.worst = slack;
            self.witness = (slack < -self.tol).then(witness);
        }
    }

    fn finish(self) -> ConvexityReport {
        let verdict = if self.worst < -self.tol {
            Verdict::Violated
        } else {
            Verdict::Satisfied
        };
        ConvexityReport {
            verdict,
            worst_slack: self.worst,
            witness: self.witness,
            checks_run: self.checks,
            seed: None,
        }
    }
}

impl ConvexityReport {
    /// Min-slack reduction; the earlier report wins ties.
    pub fn merge(self, other: ConvexityReport) -> ConvexityReport {
        let checks_run = self.checks_run + other.checks_run;
        let seed = self.seed.or(other.seed);
        let mut best = if other.worst_slack < self.worst_slack { other } else { self };
        best.checks_run = checks_run;
        best.seed = seed;
        best
    }

    fn empty() -> ConvexityReport {
        ConvexityReport {
            verdict: Verdict::Satisfied,
            worst_slack: f64::INFINITY,
            witness: None,
            checks_run: 0,
            seed: None,
        }
    }

    pub fn is_violated(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

/// Uniform grid `i / (n − 1)`, `i = 0..n`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Chord slack `(1−t)F₀ + tF₁ − (λ/2)t(1−t)·cost − F(t)`.
pub fn chord_slack(f0: f64, f1: f64, ft: f64, t: f64, lambda: f64, cost: f64) -> f64 {
    (1.0 - t) * f0 + t * f1 - 0.5 * lambda * t * (1.0 - t) * cost - ft
}

/// Checks λ-convexity of `t ↦ F(μ_t)` on a uniform grid of `grid_size`
/// points: the endpoint chord inequality at every interior point and the
/// midpoint inequality on every consecutive triple. The cost term is the
/// curve's own plan cost.
pub fn check_convex_along_curve<F: Functional + ?Sized>(
    f: &F,
    curve: &AccelerationFreeCurve,
    lambda: f64,
    grid_size: usize,
    tol: f64,
) -> Result<ConvexityReport> {
    if grid_size < 3 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 3, got {grid_size}")));
    }
    let ts = unit_grid(grid_size);
    let measures = ts.iter().map(|&t| curve.eval(t)).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = measures.iter().map(|m| f.evaluate(m)).collect();
    let cost = curve.plan_cost();
    let (f0, f1) = (values[0], values[grid_size - 1]);

    let mut tracker = SlackTracker::new(tol);
    for i in 1..grid_size - 1 {
        let slack = chord_slack(f0, f1, values[i], ts[i], lambda, cost);
        tracker.record(slack, || Witness {
            curve: curve.description(),
            check: "chord".into(),
            times: vec![ts[i]],
            measures: vec![measures[0].clone(), measures[i].clone(), measures[grid_size - 1].clone()],
        });
    }
    for i in 1..grid_size - 1 {
        let span = ts[i + 1] - ts[i - 1];
        let slack = 0.5 * values[i - 1] + 0.5 * values[i + 1] - lambda / 8.0 * span * span * cost - values[i];
        tracker.record(slack, || Witness {
            curve: curve.description(),
            check: "midpoint".into(),
            times: vec![ts[i - 1], ts[i], ts[i + 1]],
            measures: vec![measures[i - 1].clone(), measures[i].clone(), measures[i + 1].clone()],
        });
    }
    Ok(tracker.finish())
}

/// `∫(∇_wF[μ₂](y) − ∇_wF[μ₁](x))·(y − x) dγ(x, y)` over an optimal `γ`,
/// together with `W₂²(μ₁, μ₂)`.
pub fn displacement_monotonicity_terms<F: Functional + ?Sized>(
    f: &F,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
) -> Result<(f64, f64)> {
    if !f.has_gradient() {
        return Err(Error::GradientUnavailable(f.name()));
    }
    let ot = solve_w2(mu1, mu2)?;
    let g1 = (0..mu1.len()).map(|i| require_gradient(f, mu1, i)).collect::<Result<Vec<_>>>()?;
    let g2 = (0..mu2.len()).map(|j| require_gradient(f, mu2, j)).collect::<Result<Vec<_>>>()?;
    let mut lhs = 0.0;
    for e in ot.plan.entries() {
        let (x, y) = (mu1.atom(e.source), mu2.atom(e.target));
        let dg: Vec<f64> = g2[e.target].iter().zip(&g1[e.source]).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        lhs += e.mass * dot(&dg, &dx);
    }
    Ok((lhs, ot.cost))
}

/// First-order criterion: slack `LHS − λ W₂²` of the displacement
/// monotonicity inequality.
pub fn check_displacement_monotonicity<F: Functional + ?Sized>(
    f: &F,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    lambda: f64,
    tol: f64,
) -> Result<ConvexityReport> {
    let (lhs, w2_sq) = displacement_monotonicity_terms(f, mu1, mu2)?;
    let mut tracker = SlackTracker::new(tol);
    tracker.record(lhs - lambda * w2_sq, || Witness {
        curve: format!("optimal plan, W2^2 = {w2_sq:.17e}, lhs = {lhs:.17e}"),
        check: "displacement-monotonicity".into(),
        times: vec![],
        measures: vec![mu1.clone(), mu2.clone()],
    });
    Ok(tracker.finish())
}

/// `d/dt F(μ_t) = Σ_k θ_k ∇_wF[μ_t](w_k + t z_k) · z_k`. Particles that
/// coincide at `t` each receive the gradient of the merged atom.
pub fn derivative_along_curve<F: Functional + ?Sized>(f: &F, curve: &AccelerationFreeCurve, t: f64) -> Result<f64> {
    if !f.has_gradient() {
        return Err(Error::GradientUnavailable(f.name()));
    }
    let (mu, map) = curve.eval_with_map(t)?;
    let grads = (0..mu.len()).map(|i| require_gradient(f, &mu, i)).collect::<Result<Vec<_>>>()?;
    Ok(curve
        .particles()
        .iter()
        .zip(&map)
        .map(|(p, &atom)| p.mass * dot(&grads[atom], &p.displacement))
        .sum())
}

fn value_at<F: Functional + ?Sized>(f: &F, curve: &AccelerationFreeCurve, t: f64) -> Result<f64> {
    Ok(f.evaluate(&curve.eval(t)?))
}

/// Central difference `(F(t+h) − F(t−h)) / 2h`, with `h` shrunk to keep the
/// stencil inside `[0, 1]`.
pub fn first_derivative_fd<F: Functional + ?Sized>(
    f: &F,
    curve: &AccelerationFreeCurve,
    t: f64,
    h: f64,
) -> Result<f64> {
    let h = h.min(t).min(1.0 - t);
    if !(h > 0.0) {
        return Err(Error::OutOfRange { value: t, lo: 0.0, hi: 1.0 });
    }
    Ok((value_at(f, curve, t + h)? - value_at(f, curve, t - h)?) / (2.0 * h))
}

/// `(F(t+h) − 2F(t) + F(t−h)) / h²`; the stencil must lie in `[0, 1]`.
pub fn second_derivative_fd<F: Functional + ?Sized>(
    f: &F,
    curve: &AccelerationFreeCurve,
    t: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if t - h < 0.0 || t + h > 1.0 {
        return Err(Error::OutOfRange { value: t, lo: h, hi: 1.0 - h });
    }
    let (lo, mid, hi) = (value_at(f, curve, t - h)?, value_at(f, curve, t)?, value_at(f, curve, t + h)?);
    Ok((hi - 2.0 * mid + lo) / (h * h))
}

/// Second-order criterion along a curve: slack `F''(t) − λ·cost` at the
/// interior grid points whose stencil fits in `[0, 1]`.
pub fn check_second_order<F: Functional + ?Sized>(
    f: &F,
    curve: &AccelerationFreeCurve,
    lambda: f64,
    grid_size: usize,
    h: f64,
    tol: f64,
) -> Result<ConvexityReport> {
    if grid_size < 3 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 3, got {grid_size}")));
    }
    let mut tracker = SlackTracker::new(tol);
    for t in unit_grid(grid_size).into_iter().filter(|&t| t - h >= 0.0 && t + h <= 1.0) {
        let d2 = second_derivative_fd(f, curve, t, h)?;
        tracker.record(d2 - lambda * curve.plan_cost(), || Witness {
            curve: curve.description(),
            check: "second-derivative".into(),
            times: vec![t],
            measures: vec![],
        });
    }
    Ok(tracker.finish())
}

/// Largest gap between the closed-form derivative and a central difference
/// (`h = 1e−5`) over interior grid points away from crossing times.
pub fn gradient_consistency<F: Functional + ?Sized>(
    f: &F,
    curve: &AccelerationFreeCurve,
    grid_size: usize,
) -> Result<f64> {
    if !f.has_gradient() {
        return Err(Error::GradientUnavailable(f.name()));
    }
    if grid_size < 3 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 3, got {grid_size}")));
    }
    let crossings = curve.crossing_times();
    let ts = unit_grid(grid_size);
    let mut worst: f64 = 0.0;
    for &t in &ts[1..grid_size - 1] {
        if crossings.iter().any(|&c| (c - t).abs() < CROSSING_MARGIN) {
            continue;
        }
        let exact = derivative_along_curve(f, curve, t)?;
        let fd = first_derivative_fd(f, curve, t, CONSISTENCY_STEP)?;
        worst = worst.max((exact - fd).abs());
    }
    Ok(worst)
}

/// Largest `|F'(t_c + δ) − F'(t_c − δ)|` over interior crossing times `t_c`.
pub fn derivative_jump_at_crossings<F: Functional + ?Sized>(
    f: &F,
    curve: &AccelerationFreeCurve,
    delta: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for tc in curve.crossing_times() {
        if tc - delta < 0.0 || tc + delta > 1.0 {
            continue;
        }
        let left = derivative_along_curve(f, curve, tc - delta)?;
        let right = derivative_along_curve(f, curve, tc + delta)?;
        worst = worst.max((right - left).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteConfig {
    pub sampler: SamplerConfig,
    pub grid_size: usize,
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            sampler: SamplerConfig::default(),
            grid_size: 101,
            tol: DEFAULT_TOL,
        }
    }
}

/// Verdicts per curve family over a sampled budget.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub geodesics: ConvexityReport,
    pub generalized_geodesics: ConvexityReport,
    pub plan_curves: ConvexityReport,
    /// Min-slack reduction over all three families.
    pub overall: ConvexityReport,
    /// Samples on which the three families did not return the same verdict.
    pub disagreements: usize,
    /// Geodesics satisfied while plan curves violated: the functional is
    /// geodesically convex but not differentiable.
    pub non_differentiability_witness: bool,
    pub budget: usize,
    pub seed: u64,
}

/// Runs [`check_convex_along_curve`] on geodesics, generalized geodesics
/// and random plan curves drawn from `config.sampler`, `budget` samples of
/// each.
pub fn check_equivalence_suite<F: Functional + ?Sized>(
    f: &F,
    lambda: f64,
    config: &SuiteConfig,
    budget: usize,
) -> Result<EquivalenceReport> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let per_sample = (0..budget as u64)
        .into_par_iter()
        .map(|index| {
            let s = sampler::draw(&config.sampler, index);
            let curves = [
                AccelerationFreeCurve::geodesic(&s.mu, &s.nu)?,
                AccelerationFreeCurve::generalized_geodesic(&s.anchor, &s.mu, &s.nu)?,
                AccelerationFreeCurve::from_plan(&s.plan),
            ];
            let mut reports = Vec::with_capacity(3);
            for c in &curves {
                let mut r = check_convex_along_curve(f, c, lambda, config.grid_size, config.tol)?;
                if let Some(w) = r.witness.as_mut() {
                    w.curve = format!("sample {index}: {}", w.curve);
                }
                reports.push(r);
            }
            Ok(reports)
        })
        .collect::<Result<Vec<_>>>()?;

    let seed = config.sampler.seed;
    let mut families = [ConvexityReport::empty(), ConvexityReport::empty(), ConvexityReport::empty()];
    let mut disagreements = 0;
    for reports in per_sample {
        if reports.iter().any(|r| r.verdict != reports[0].verdict) {
            disagreements += 1;
        }
        for (fam, r) in families.iter_mut().zip(reports) {
            *fam = std::mem::replace(fam, ConvexityReport::empty()).merge(r);
        }
    }
    for fam in families.iter_mut() {
        fam.seed = Some(seed);
    }
    let [geodesics, generalized_geodesics, plan_curves] = families;
    let overall = geodesics
        .clone()
        .merge(generalized_geodesics.clone())
        .merge(plan_curves.clone());
    Ok(EquivalenceReport {
        non_differentiability_witness: geodesics.verdict == Verdict::Satisfied
            && plan_curves.verdict == Verdict::Violated,
        geodesics,
        generalized_geodesics,
        plan_curves,
        overall,
        disagreements,
        budget,
        seed,
    })
}

/// Displacement monotonicity on `budget` sampled pairs.
pub fn check_first_order_suite<F: Functional + ?Sized>(
    f: &F,
    lambda: f64,
    config: &SuiteConfig,
    budget: usize,
) -> Result<ConvexityReport> {
    if !f.has_gradient() {
        return Err(Error::GradientUnavailable(f.name()));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let reports = (0..budget as u64)
        .into_par_iter()
        .map(|index| {
            let s = sampler::draw(&config.sampler, index);
            check_displacement_monotonicity(f, &s.mu, &s.nu, lambda, config.tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = reports
        .into_iter()
        .fold(ConvexityReport::empty(), ConvexityReport::merge);
    out.seed = Some(config.sampler.seed);
    Ok(out)
}
