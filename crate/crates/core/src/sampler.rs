//! Reproducible random instances: measures, feasible plans and the
//! crossing-pair configuration on which `W_ε` interaction fails to be convex.
//!
//! Every sample index gets its own ChaCha stream derived from the base seed,
//! so results do not depend on the order in which samples are drawn.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::measures::DiscreteMeasure;
use crate::transport::{northwest_corner_plan, PlanEntry, TransportPlan};

pub const DEFAULT_SEED: u64 = 0x5eed_0fc0_417e;

#[derive(Debug, Clone, Serialize)]
pub struct SamplerConfig {
    /// Inclusive range of ambient dimensions.
    pub dims: (usize, usize),
    /// Inclusive range of atom counts per measure.
    pub atoms: (usize, usize),
    /// Coordinates are drawn uniformly from this interval.
    pub coord_range: (f64, f64),
    pub seed: u64,
    /// Make sample 0 the two-particle crossing configuration in ℝ.
    pub include_paper_pair: bool,
    /// Separation `C` of the crossing configuration.
    pub paper_pair_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            dims: (1, 3),
            atoms: (2, 5),
            coord_range: (-1.0, 1.0),
            seed: DEFAULT_SEED,
            include_paper_pair: false,
            paper_pair_scale: 1.0,
        }
    }
}

/// Independent generator for sample `index`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn random_points(rng: &mut impl Rng, dim: usize, n: usize, range: (f64, f64)) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(range.0..=range.1)).collect())
        .collect()
}

/// Random measure; non-uniform weights are normalized uniform draws.
pub fn random_measure(rng: &mut impl Rng, dim: usize, n: usize, range: (f64, f64), uniform: bool) -> DiscreteMeasure {
    let points = random_points(rng, dim, n, range);
    let weights: Vec<f64> = if uniform {
        vec![1.0 / n as f64; n]
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    };
    DiscreteMeasure::new(points, weights).expect("sampled measure is valid")
}

/// North-west corner plan over randomly shuffled row and column orders.
pub fn random_plan(rng: &mut impl Rng, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    let mut rows: Vec<usize> = (0..mu.len()).collect();
    let mut cols: Vec<usize> = (0..nu.len()).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    northwest_corner_plan(mu, nu, &rows, &cols)
}

/// `½δ_C + ½δ_0 → ½δ_0 + ½δ_C` with the particles exchanging places, so
/// both endpoints are the same measure and the particles meet at `t = ½`.
pub fn crossing_pair_plan(c: f64) -> TransportPlan {
    let mu = DiscreteMeasure::new(vec![vec![c], vec![0.0]], vec![0.5, 0.5]).expect("valid pair");
    TransportPlan::new(
        mu.clone(),
        mu,
        vec![
            PlanEntry { source: 0, target: 1, mass: 0.5 },
            PlanEntry { source: 1, target: 0, mass: 0.5 },
        ],
    )
    .expect("valid crossing plan")
}

/// One draw for the equivalence suite.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: u64,
    pub dim: usize,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    /// Base measure for the generalized geodesic from `mu` to `nu`.
    pub anchor: DiscreteMeasure,
    /// A feasible, usually non-optimal, plan from `mu` to `nu`.
    pub plan: TransportPlan,
}

pub fn draw(config: &SamplerConfig, index: u64) -> Sample {
    let mut rng = rng_for(config.seed, index);
    if config.include_paper_pair && index == 0 {
        let plan = crossing_pair_plan(config.paper_pair_scale);
        let n = rng.gen_range(config.atoms.0..=config.atoms.1);
        let anchor = random_measure(&mut rng, 1, n, config.coord_range, false);
        return Sample {
            index,
            dim: 1,
            mu: plan.source().clone(),
            nu: plan.target().clone(),
            anchor,
            plan,
        };
    }
    let dim = rng.gen_range(config.dims.0..=config.dims.1);
    let uniform = index % 2 == 0;
    let measure = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(config.atoms.0..=config.atoms.1);
        random_measure(rng, dim, n, config.coord_range, uniform)
    };
    let mu = measure(&mut rng);
    let nu = measure(&mut rng);
    let anchor = measure(&mut rng);
    let plan = random_plan(&mut rng, &mu, &nu).expect("north-west plan is feasible");
    Sample {
        index,
        dim,
        mu,
        nu,
        anchor,
        plan,
    }
}
