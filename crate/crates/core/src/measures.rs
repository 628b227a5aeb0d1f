//! Finitely supported probability measures on ℝ^d.
//!
//! A [`DiscreteMeasure`] is a list of distinct atoms with strictly positive
//! weights summing to one. Construction validates the input, merges atoms
//! that lie within [`MERGE_TOL`] of each other and renormalizes the weights.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Euclidean distance below which two atoms are treated as the same point.
pub const MERGE_TOL: f64 = 1e-12;

/// Admissible deviation of the input total mass from 1.
pub const MASS_TOL: f64 = 1e-9;

/// A probability measure `Σ a_i δ_{x_i}` with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Row-major atom coordinates, `len() * dim` values.
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from points and nonnegative weights.
    ///
    /// Zero weights are dropped, coincident points merged and the remaining
    /// weights rescaled so that they sum to one.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or(Error::Empty)?;
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, &coords, &weights).map(|(m, _)| m)
    }

    /// Same as [`DiscreteMeasure::new`] but takes row-major coordinates and
    /// also returns, for every input point, the index of the atom it was
    /// merged into. Dropped zero-weight points map to `usize::MAX`.
    pub fn from_flat(dim: usize, coords: &[f64], weights: &[f64]) -> Result<(Self, Vec<usize>)> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: coords.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        if coords.iter().chain(weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| **w < 0.0) {
            return Err(Error::NegativeWeight { index, value });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::NonpositiveTotalMass(total));
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidTotalMass(total));
        }

        let mut out_coords: Vec<f64> = Vec::with_capacity(coords.len());
        let mut out_weights: Vec<f64> = Vec::with_capacity(weights.len());
        let mut map = vec![usize::MAX; weights.len()];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p = &coords[i * dim..(i + 1) * dim];
            let existing = (0..out_weights.len())
                .find(|&k| dist_sq(&out_coords[k * dim..(k + 1) * dim], p) <= MERGE_TOL * MERGE_TOL);
            match existing {
                Some(k) => {
                    out_weights[k] += w;
                    map[i] = k;
                }
                None => {
                    map[i] = out_weights.len();
                    out_coords.extend_from_slice(p);
                    out_weights.push(w);
                }
            }
        }
        normalize(&mut out_weights);
        Ok((
            DiscreteMeasure {
                dim,
                coords: out_coords,
                weights: out_weights,
            },
            map,
        ))
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Uniform measure over the given points (duplicates accumulate mass).
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ a_i |x_i|²`.
    pub fn second_moment(&self) -> f64 {
        self.atoms()
            .zip(&self.weights)
            .map(|(x, w)| w * norm_sq(x))
            .sum()
    }

    /// Index of the atom within [`MERGE_TOL`] of `point`, if any.
    pub fn find_atom(&self, point: &[f64]) -> Option<usize> {
        self.atoms()
            .position(|x| dist_sq(x, point) <= MERGE_TOL * MERGE_TOL)
    }

    /// Compares two measures atom by atom, in any order, up to `tol` in
    /// position and weight.
    pub fn approx_eq(&self, other: &DiscreteMeasure, tol: f64) -> bool {
        if self.dim != other.dim || self.len() != other.len() {
            return false;
        }
        let mut used = vec![false; other.len()];
        for (x, w) in self.atoms().zip(&self.weights) {
            let hit = (0..other.len()).find(|&k| {
                !used[k] && dist_sq(x, other.atom(k)).sqrt() <= tol && (w - other.weights[k]).abs() <= tol
            });
            match hit {
                Some(k) => used[k] = true,
                None => return false,
            }
        }
        true
    }

    pub fn to_points(&self) -> Vec<Vec<f64>> {
        self.atoms().map(<[f64]>::to_vec).collect()
    }
}

/// Rescales positive weights to sum to one, pushing the rounding residual
/// into the largest weight.
fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() <= 1e-15 {
        return;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    let residual = 1.0 - weights.iter().sum::<f64>();
    if let Some(big) = weights
        .iter_mut()
        .max_by(|a, b| a.total_cmp(b))
    {
        *big += residual;
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Serialize for DiscreteMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureFile {
            dim: self.dim,
            atoms: self.to_points(),
            weights: self.weights.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = MeasureFile::deserialize(deserializer)?;
        if let Some(bad) = raw.atoms.iter().find(|p| p.len() != raw.dim) {
            return Err(serde::de::Error::custom(Error::DimensionMismatch {
                expected: raw.dim,
                got: bad.len(),
            }));
        }
        DiscreteMeasure::new(raw.atoms, raw.weights).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_atoms() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn duplicates_merge() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![0.0]], vec![0.3, 0.7]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atom(0), &[0.0]);
        assert_eq!(m.weight(0), 1.0);
    }

    #[test]
    fn mass_two_is_invalid_total() {
        let err = DiscreteMeasure::new(vec![vec![1.0, 2.0]], vec![2.0]).unwrap_err();
        assert_eq!(err, Error::InvalidTotalMass(2.0));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![-0.5, 1.5]),
            Err(Error::NegativeWeight { index: 0, .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![vec![0.0]], vec![0.0]),
            Err(Error::NonpositiveTotalMass(_))
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![vec![2.0], vec![1.0, 0.0]], vec![0.3, 0.7]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![vec![0.0]], vec![0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(DiscreteMeasure::new(vec![], vec![]), Err(Error::Empty));
        assert_eq!(
            DiscreteMeasure::new(vec![vec![f64::NAN]], vec![1.0]),
            Err(Error::NonFinite)
        );
    }

    #[test]
    fn zero_weights_dropped() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn second_moment_values() {
        assert_eq!(DiscreteMeasure::dirac(vec![0.0]).unwrap().second_moment(), 0.0);
        let m = DiscreteMeasure::new(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.second_moment(), 1.0);
    }

    #[test]
    fn json_rejects_missing_and_ignores_unknown() {
        let ok: DiscreteMeasure =
            serde_json::from_str(r#"{"dim":1,"atoms":[[0],[1]],"weights":[0.5,0.5],"name":"x"}"#).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(serde_json::from_str::<DiscreteMeasure>(r#"{"dim":1,"atoms":[[0]]}"#).is_err());
        assert!(serde_json::from_str::<DiscreteMeasure>(r#"{"dim":2,"atoms":[[0]],"weights":[1]}"#).is_err());
    }

    fn measure_input() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..=3, 1usize..=6).prop_flat_map(|(d, n)| {
            (
                Just(d),
                prop::collection::vec(prop::collection::vec(-3i32..=3, d), n)
                    .prop_map(|pts| pts.into_iter().map(|p| p.into_iter().map(|c| c as f64 * 0.5).collect()).collect()),
                prop::collection::vec(0.01f64..1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn weights_sum_to_one((_d, pts, raw) in measure_input()) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let m = DiscreteMeasure::new(pts, w).unwrap();
            prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-15);
            prop_assert!(m.weights().iter().all(|&w| w > 0.0));
        }

        #[test]
        fn second_moment_permutation_and_merge_invariant((_d, pts, raw) in measure_input(), rot in 0usize..6) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let unmerged: f64 = pts.iter().zip(&w).map(|(p, w)| w * norm_sq(p)).sum();
            let m = DiscreteMeasure::new(pts.clone(), w.clone()).unwrap();
            prop_assert!((m.second_moment() - unmerged).abs() <= 1e-12);

            let k = rot % pts.len();
            let mut p2 = pts.clone();
            let mut w2 = w.clone();
            p2.rotate_left(k);
            w2.rotate_left(k);
            let m2 = DiscreteMeasure::new(p2, w2).unwrap();
            prop_assert!((m.second_moment() - m2.second_moment()).abs() <= 1e-12);
        }

        #[test]
        fn json_round_trip_is_bitwise((_d, pts, raw) in measure_input()) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let m = DiscreteMeasure::new(pts, w).unwrap();
            let text = serde_json::to_string(&m).unwrap();
            let back: DiscreteMeasure = serde_json::from_str(&text).unwrap();
            let again: DiscreteMeasure = serde_json::from_str(&serde_json::to_string(&back).unwrap()).unwrap();
            prop_assert_eq!(back, again);
        }
    }
}
