//! Functionals on discrete measures and their Wasserstein gradients.
//!
//! Built-ins cover potential energies `∫V dμ`, interaction energies
//! `∫∫w(x,y) dμ(x)dμ(y)` (including the self-interaction diagonal) and the
//! second moment. [`shift_lambda`] subtracts `(λ/2)∫|x|² dμ`, which turns a
//! λ-convexity question into a 0-convexity one.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{dist_sq, norm_sq, DiscreteMeasure};

/// `F : 𝒫₂(ℝ^d) → ℝ` evaluated on discrete measures.
pub trait Functional: Send + Sync {
    fn name(&self) -> String;

    fn evaluate(&self, mu: &DiscreteMeasure) -> f64;

    fn has_gradient(&self) -> bool {
        false
    }

    /// `∇_w F[μ](x_i)` at atom `i`, when available.
    fn gradient(&self, _mu: &DiscreteMeasure, _atom: usize) -> Option<Vec<f64>> {
        None
    }

    /// The convexity modulus the caller asserts for this functional.
    fn claimed_lambda(&self) -> Option<f64> {
        None
    }
}

macro_rules! forward_functional {
    ($($ptr:ty),*) => {$(
        impl<F: Functional + ?Sized> Functional for $ptr {
            fn name(&self) -> String {
                (**self).name()
            }
            fn evaluate(&self, mu: &DiscreteMeasure) -> f64 {
                (**self).evaluate(mu)
            }
            fn has_gradient(&self) -> bool {
                (**self).has_gradient()
            }
            fn gradient(&self, mu: &DiscreteMeasure, atom: usize) -> Option<Vec<f64>> {
                (**self).gradient(mu, atom)
            }
            fn claimed_lambda(&self) -> Option<f64> {
                (**self).claimed_lambda()
            }
        }
    )*};
}

forward_functional!(&F, Box<F>, Arc<F>);

/// Gradient of `F` at atom `i`, or [`Error::GradientUnavailable`].
pub fn require_gradient<F: Functional + ?Sized>(f: &F, mu: &DiscreteMeasure, atom: usize) -> Result<Vec<f64>> {
    f.gradient(mu, atom)
        .ok_or_else(|| Error::GradientUnavailable(f.name()))
}

type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type PairField = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type PairGradient = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// `μ ↦ Σ a_i V(x_i)` with gradient `∇V(x_i)`.
#[derive(Clone)]
pub struct PotentialEnergy {
    name: String,
    potential: ScalarField,
    gradient: VectorField,
}

impl fmt::Debug for PotentialEnergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialEnergy").field("name", &self.name).finish()
    }
}

pub fn potential_energy(
    name: impl Into<String>,
    potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
) -> PotentialEnergy {
    PotentialEnergy {
        name: name.into(),
        potential: Arc::new(potential),
        gradient: Arc::new(gradient),
    }
}

impl Functional for PotentialEnergy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn evaluate(&self, mu: &DiscreteMeasure) -> f64 {
        mu.atoms()
            .zip(mu.weights())
            .map(|(x, a)| a * (self.potential)(x))
            .sum()
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, mu: &DiscreteMeasure, atom: usize) -> Option<Vec<f64>> {
        Some((self.gradient)(mu.atom(atom)))
    }
}

/// `V(x) = (c/2)|x|²`.
pub fn quadratic_potential(c: f64) -> PotentialEnergy {
    potential_energy(
        format!("potential:quadratic({c})"),
        move |x| 0.5 * c * norm_sq(x),
        move |x| x.iter().map(|v| c * v).collect(),
    )
}

/// `V(x) = b · x`.
pub fn linear_potential(b: Vec<f64>) -> PotentialEnergy {
    let g = b.clone();
    potential_energy(
        "potential:linear",
        move |x| x.iter().zip(&b).map(|(x, b)| x * b).sum(),
        move |_| g.clone(),
    )
}

/// `V(x) = |x|⁴ / 4`, convex with gradient `|x|² x`.
pub fn quartic_potential() -> PotentialEnergy {
    potential_energy(
        "potential:quartic",
        |x| 0.25 * norm_sq(x).powi(2),
        |x| {
            let r2 = norm_sq(x);
            x.iter().map(|v| r2 * v).collect()
        },
    )
}

/// Smooth bounded bump `V(x) = exp(−|x|²/2)`.
pub fn gaussian_bump_potential() -> PotentialEnergy {
    potential_energy(
        "potential:gaussian-bump",
        |x| (-0.5 * norm_sq(x)).exp(),
        |x| {
            let e = (-0.5 * norm_sq(x)).exp();
            x.iter().map(|v| -v * e).collect()
        },
    )
}

/// A symmetric interaction kernel `w(x, y)` with an optional gradient in
/// its first argument.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    value: PairField,
    gradient: Option<PairGradient>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("differentiable", &self.gradient.is_some())
            .finish()
    }
}

impl Kernel {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        gradient: Option<PairGradient>,
    ) -> Self {
        Kernel {
            name: name.into(),
            value: Arc::new(value),
            gradient,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.value)(x, y)
    }

    /// `∇_x w(x, y)`.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x, y))
    }

    /// Largest `|w(x, y) − w(y, x)|` over the given pairs.
    pub fn asymmetry(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        pairs
            .iter()
            .map(|(x, y)| (self.value(x, y) - self.value(y, x)).abs())
            .fold(0.0, f64::max)
    }
}

/// `W_ε(x, y) = ε − |x − y|` when `|x − y| ≤ ε`, zero otherwise. Continuous,
/// bounded and not differentiable on the diagonal, so no gradient is
/// attached.
pub fn w_epsilon_kernel(eps: f64) -> Result<Kernel> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    Ok(Kernel::new(
        format!("weps({eps})"),
        move |x, y| {
            let r = dist_sq(x, y).sqrt();
            if r <= eps {
                eps - r
            } else {
                0.0
            }
        },
        None,
    ))
}

/// `w(x, y) = exp(−|x − y|² / (2σ²))`.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("kernel width must be positive, got {sigma}")));
    }
    let s2 = sigma * sigma;
    Ok(Kernel::new(
        format!("gaussian({sigma})"),
        move |x, y| (-0.5 * dist_sq(x, y) / s2).exp(),
        Some(Arc::new(move |x: &[f64], y: &[f64]| {
            let e = (-0.5 * dist_sq(x, y) / s2).exp();
            x.iter().zip(y).map(|(a, b)| -(a - b) / s2 * e).collect()
        })),
    ))
}

/// `μ ↦ Σ_i Σ_j a_i a_j w(x_i, x_j)`, diagonal included.
#[derive(Debug, Clone)]
pub struct InteractionEnergy {
    kernel: Kernel,
}

pub fn interaction_energy(kernel: Kernel) -> InteractionEnergy {
    InteractionEnergy { kernel }
}

impl InteractionEnergy {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
}

impl Functional for InteractionEnergy {
    fn name(&self) -> String {
        format!("interaction:{}", self.kernel.name)
    }

    fn evaluate(&self, mu: &DiscreteMeasure) -> f64 {
        let mut total = 0.0;
        for (x, a) in mu.atoms().zip(mu.weights()) {
            for (y, b) in mu.atoms().zip(mu.weights()) {
                total += a * b * self.kernel.value(x, y);
            }
        }
        total
    }

    fn has_gradient(&self) -> bool {
        self.kernel.gradient.is_some()
    }

    /// `2 Σ_j a_j ∇_x w(x_i, x_j)` for a symmetric kernel.
    fn gradient(&self, mu: &DiscreteMeasure, atom: usize) -> Option<Vec<f64>> {
        let x = mu.atom(atom);
        let mut g = vec![0.0; mu.dim()];
        for (y, b) in mu.atoms().zip(mu.weights()) {
            let gy = self.kernel.gradient(x, y)?;
            for (acc, v) in g.iter_mut().zip(gy) {
                *acc += 2.0 * b * v;
            }
        }
        Some(g)
    }
}

/// `μ ↦ ∫|x|² dμ`, which is exactly 2-convex along every acceleration-free
/// curve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SecondMoment;

pub fn second_moment_functional() -> SecondMoment {
    SecondMoment
}

impl Functional for SecondMoment {
    fn name(&self) -> String {
        "second-moment".into()
    }

    fn evaluate(&self, mu: &DiscreteMeasure) -> f64 {
        mu.second_moment()
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, mu: &DiscreteMeasure, atom: usize) -> Option<Vec<f64>> {
        Some(mu.atom(atom).iter().map(|x| 2.0 * x).collect())
    }

    fn claimed_lambda(&self) -> Option<f64> {
        Some(2.0)
    }
}

/// `μ ↦ F(μ) − (λ/2)∫|x|² dμ`.
#[derive(Debug, Clone)]
pub struct Shifted<F> {
    inner: F,
    lambda: f64,
}

pub fn shift_lambda<F: Functional>(inner: F, lambda: f64) -> Shifted<F> {
    Shifted { inner, lambda }
}

impl<F> Shifted<F> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: Functional> Functional for Shifted<F> {
    fn name(&self) -> String {
        format!("{} shifted by {}", self.inner.name(), self.lambda)
    }

    fn evaluate(&self, mu: &DiscreteMeasure) -> f64 {
        self.inner.evaluate(mu) - 0.5 * self.lambda * mu.second_moment()
    }

    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }

    fn gradient(&self, mu: &DiscreteMeasure, atom: usize) -> Option<Vec<f64>> {
        let g = self.inner.gradient(mu, atom)?;
        Some(
            g.iter()
                .zip(mu.atom(atom))
                .map(|(g, x)| g - self.lambda * x)
                .collect(),
        )
    }

    fn claimed_lambda(&self) -> Option<f64> {
        self.inner.claimed_lambda().map(|l| l - self.lambda)
    }
}

/// Built-in functionals addressable by name:
/// `second-moment`, `potential:{quadratic,neg-quadratic,quartic,gaussian-bump}`,
/// `interaction:{weps,gaussian}`. `param` is ε for `weps` and σ for
/// `gaussian`.
pub fn builtin(name: &str, param: f64) -> Result<Box<dyn Functional>> {
    Ok(match name {
        "second-moment" => Box::new(second_moment_functional()),
        "potential:quadratic" => Box::new(quadratic_potential(1.0)),
        "potential:neg-quadratic" => Box::new(quadratic_potential(-1.0)),
        "potential:quartic" => Box::new(quartic_potential()),
        "potential:gaussian-bump" => Box::new(gaussian_bump_potential()),
        "interaction:weps" => Box::new(interaction_energy(w_epsilon_kernel(param)?)),
        "interaction:gaussian" => Box::new(interaction_energy(gaussian_kernel(param)?)),
        other => return Err(Error::InvalidArgument(format!("unknown functional `{other}`"))),
    })
}
