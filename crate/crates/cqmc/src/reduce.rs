//! Post-conditioning dimension reduction.
//!
//! The estimand is invariant under any orthogonal change of variables of
//! the remaining coordinates, so after conditioning we are free to pick
//! a rotation that concentrates variation in the leading coordinates --
//! exactly where QMC points are most uniform. Gradient PCA does this by
//! diagonalizing the second-moment matrix of sampled gradients of the
//! conditioned integrand.

use crate::lds::{DigitalNet, ScrambleSeed, ScrambledNet};
use crate::linalg::jacobi_eigen;
use crate::normal;
use crate::smooth::{PreintegratedIntegrand, SmoothError};

/// Where an orthogonal transform came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Identity,
    Gpca,
}

/// An orthogonal matrix acting on the reduced coordinates.
#[derive(Debug, Clone)]
pub struct OrthogonalTransform {
    n: usize,
    /// Row-major n x n.
    u: Vec<f64>,
    pub provenance: Provenance,
}

impl OrthogonalTransform {
    pub fn identity(n: usize) -> Self {
        let mut u = vec![0.0; n * n];
        for i in 0..n {
            u[i * n + i] = 1.0;
        }
        Self {
            n,
            u,
            provenance: Provenance::Identity,
        }
    }

    pub fn from_matrix(u: Vec<f64>, n: usize, provenance: Provenance) -> Self {
        assert_eq!(u.len(), n * n);
        Self { n, u, provenance }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.n + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.u
    }

    /// out = U y.
    pub fn apply_vec(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            out[i] = self.u[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(y)
                .map(|(u, y)| u * y)
                .sum();
        }
    }

    /// max |U^T U - I|.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| self.u[k * n + i] * self.u[k * n + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }
}

/// Central finite-difference step for gradient sampling, in x-space.
/// The conditioned integrand is smooth, so central differences at 1e-5
/// are accurate to ~1e-10 -- far below the sampling noise they feed.
const FD_STEP: f64 = 1e-5;

/// Samples central-difference gradients of `f` at `count` scrambled net
/// points mapped through the inverse normal CDF.
///
/// Returns a row-major `count x dim` matrix.
pub fn gradient_samples_of<F, E>(
    f: F,
    dim: usize,
    count: usize,
    seed: ScrambleSeed,
) -> Result<Vec<f64>, E>
where
    F: Fn(&[f64]) -> Result<f64, E>,
{
    assert!(count >= dim.max(1), "need at least dim gradient samples");
    if dim == 0 {
        return Ok(Vec::new());
    }
    let net = DigitalNet::new(dim).expect("reduced dimension within table bounds");
    let scrambled = ScrambledNet::new(&net, seed);
    let mut stream = scrambled.stream();
    let mut u = vec![0.0; dim];
    let mut grads = vec![0.0; count * dim];
    for row in 0..count {
        stream.next_into(&mut u);
        let y: Vec<f64> = u.iter().map(|&ui| normal::inv_cdf(ui)).collect();
        for k in 0..dim {
            let mut plus = y.clone();
            plus[k] += FD_STEP;
            let mut minus = y.clone();
            minus[k] -= FD_STEP;
            grads[row * dim + k] = (f(&plus)? - f(&minus)?) / (2.0 * FD_STEP);
        }
    }
    Ok(grads)
}

/// Gradient matrix of a conditioned integrand. A constant integrand
/// yields all zeros.
pub fn gradient_samples(
    pint: &PreintegratedIntegrand,
    count: usize,
    seed: ScrambleSeed,
) -> Result<Vec<f64>, SmoothError> {
    gradient_samples_of(|y| pint.eval(y), pint.dim(), count, seed)
}

/// Principal axes of the gradient second-moment matrix.
///
/// Columns of the returned transform are eigenvectors of `G^T G / m`
/// sorted by decreasing eigenvalue, each sign-normalized so its
/// largest-magnitude entry is positive. A numerically zero gradient
/// matrix degenerates to the identity (with a warning): there is no
/// direction worth aligning to.
pub fn gpca_matrix(gradients: &[f64], n: usize) -> OrthogonalTransform {
    if n == 0 {
        return OrthogonalTransform::identity(0);
    }
    assert_eq!(gradients.len() % n, 0, "gradient matrix shape mismatch");
    let rows = gradients.len() / n;
    let mut moment = vec![0.0; n * n];
    for r in 0..rows {
        let g = &gradients[r * n..(r + 1) * n];
        for i in 0..n {
            for j in 0..n {
                moment[i * n + j] += g[i] * g[j];
            }
        }
    }
    let scale = 1.0 / rows.max(1) as f64;
    for v in moment.iter_mut() {
        *v *= scale;
    }

    let norm: f64 = moment.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-28 {
        log::warn!("gpca: gradient second-moment matrix is numerically zero; using identity");
        return OrthogonalTransform::identity(n);
    }

    let eig = jacobi_eigen(&moment, n);
    let mut u = eig.vectors;
    for k in 0..n {
        let (mut best, mut best_abs) = (0.0f64, 0.0f64);
        for i in 0..n {
            let v = u[i * n + k];
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = v;
            }
        }
        if best < 0.0 {
            for i in 0..n {
                u[i * n + k] = -u[i * n + k];
            }
        }
    }
    OrthogonalTransform::from_matrix(u, n, Provenance::Gpca)
}

/// The rotated integrand `y -> P_j f(U y)`; same expectation as the
/// untransformed one for any orthogonal U.
#[derive(Debug, Clone)]
pub struct TransformedIntegrand {
    pint: PreintegratedIntegrand,
    transform: OrthogonalTransform,
}

/// Composes a conditioned integrand with an orthogonal transform.
pub fn apply(pint: PreintegratedIntegrand, transform: OrthogonalTransform) -> TransformedIntegrand {
    assert_eq!(pint.dim(), transform.dim(), "transform dimension mismatch");
    TransformedIntegrand { pint, transform }
}

impl TransformedIntegrand {
    pub fn dim(&self) -> usize {
        self.pint.dim()
    }

    pub fn transform(&self) -> &OrthogonalTransform {
        &self.transform
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64, SmoothError> {
        let mut rotated = vec![0.0; y.len()];
        self.transform.apply_vec(y, &mut rotated);
        self.pint.eval(&rotated)
    }
}

/// Builds the GPCA transform for a conditioned integrand from `count`
/// gradient samples.
pub fn gpca_transform(
    pint: &PreintegratedIntegrand,
    count: usize,
    seed: ScrambleSeed,
) -> Result<OrthogonalTransform, SmoothError> {
    let grads = gradient_samples(pint, count, seed)?;
    Ok(gpca_matrix(&grads, pint.dim()))
}
