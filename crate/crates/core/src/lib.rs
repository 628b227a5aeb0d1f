//! # otconv
//!
//! Discrete optimal transport in the quadratic Wasserstein space, and
//! numerical certification of λ-convexity of functionals along the curves
//! it generates.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`measures`] | finitely supported probability measures |
//! | [`transport`] | couplings, exact W₂ solver, cyclical monotonicity, plan gluing |
//! | [`curves`] | acceleration-free curves, geodesics, generalized geodesics |
//! | [`functionals`] | potential, interaction and second-moment energies |
//! | [`convexity`] | chord, first-order and second-order convexity checks |
//!
//! ```
//! use otconv::{measures::DiscreteMeasure, transport::solve_w2};
//!
//! let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
//! let nu = DiscreteMeasure::uniform(vec![vec![0.5], vec![1.5], vec![2.5]]).unwrap();
//! let ot = solve_w2(&mu, &nu).unwrap();
//! assert!((ot.cost - 0.25).abs() < 1e-12);
//! ```

pub mod convexity;
pub mod curves;
pub mod error;
pub mod functionals;
pub mod measures;
pub mod sampler;
pub mod transport;

pub use error::{Error, Result};
