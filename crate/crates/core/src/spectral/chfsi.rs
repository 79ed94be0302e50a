//! Chebyshev-filtered subspace iteration for the low end of a sparse SPD
//! spectrum.
//!
//! The number of wanted eigenvalues is fixed up front by an inertia count, so
//! the iteration knows exactly how many converged Ritz pairs it owes.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operator::Laplacian;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Residual target `|A x - theta x| <= tol * upper_bound`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Extra subspace vectors beyond the wanted count.
    pub guard_min: usize,
    pub guard_fraction: f64,
    pub max_degree: usize,
    /// Largest amplification the filter may apply in one sweep.
    pub max_amplification: f64,
    pub seed: u64,
    /// Below this many unknowns a dense eigensolve is used instead.
    pub dense_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 60,
            guard_min: 40,
            guard_fraction: 0.15,
            max_degree: 60,
            max_amplification: 1e7,
            seed: 0x5eed,
            dense_threshold: 600,
        }
    }
}

/// Ascending eigenvalues below `e_max` and unit-norm eigenvectors (columns).
pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub iterations: usize,
}

pub(crate) fn lowest_eigenpairs(
    op: &Laplacian,
    wanted: usize,
    e_max: f64,
    opts: &SolverOptions,
) -> Result<Eigenpairs> {
    let n = op.dim();
    if wanted == 0 {
        return Ok(Eigenpairs { values: vec![], vectors: DMatrix::zeros(n, 0), iterations: 0 });
    }
    let guard = opts.guard_min.max((opts.guard_fraction * wanted as f64).ceil() as usize);
    let p = wanted + guard;
    if n <= opts.dense_threshold || 2 * p >= n {
        return dense(op, wanted);
    }

    let upper = op.upper_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    orthonormalize(&mut x)?;

    // Initial cut: a bit above E_max, scaled for the guard vectors.
    let mut cut = e_max * (p as f64 / wanted as f64) * 1.05;
    let mut worst = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let degree = filter_degree(cut, upper, opts);
        chebyshev_filter(op, &mut x, degree, cut, upper, 0.0);
        orthonormalize(&mut x)?;
        let ax = apply_block(op, &x);
        let mut h = x.tr_mul(&ax);
        h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let v = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        let theta: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        x = &x * &v;
        let axv = &ax * &v;
        drop(ax);

        let below = theta.iter().filter(|&&t| t < e_max).count();
        worst = 0.0;
        for c in 0..below.max(wanted).min(p) {
            let r = (axv.column(c) - x.column(c) * theta[c]).norm();
            worst = f64::max(worst, r);
        }
        cut = theta[p - 1];
        if worst <= opts.tol * upper && below == wanted {
            let vectors = x.columns(0, wanted).into_owned();
            return Ok(Eigenpairs { values: theta[..wanted].to_vec(), vectors, iterations: iteration });
        }
        if below == p {
            // The subspace is too small to separate E_max; cannot happen when
            // the inertia count is right.
            return Err(Error::CountMismatch { e_max, expected: wanted, found: below });
        }
    }
    Err(Error::NoConvergence { e_max, iterations: opts.max_iterations, residual: worst })
}

fn dense(op: &Laplacian, wanted: usize) -> Result<Eigenpairs> {
    let eig = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let wanted = wanted.min(op.dim());
    let vectors = DMatrix::from_fn(op.dim(), wanted, |r, c| eig.eigenvectors[(r, order[c])]);
    let values = order[..wanted].iter().map(|&k| eig.eigenvalues[k]).collect();
    Ok(Eigenpairs { values, vectors, iterations: 0 })
}

/// Degree giving at most `max_amplification` between the bottom of the
/// spectrum and the damped interval.
fn filter_degree(cut: f64, upper: f64, opts: &SolverOptions) -> usize {
    let t = (upper + cut) / (upper - cut);
    let growth = t.acosh().max(1e-6);
    let m = ((2.0 * opts.max_amplification).ln() / growth).floor() as usize;
    m.clamp(4, opts.max_degree)
}

/// Scaled Chebyshev filter damping `[cut, upper]`, normalized at `lowest`.
fn chebyshev_filter(op: &Laplacian, x: &mut DMatrix<f64>, degree: usize, cut: f64, upper: f64, lowest: f64) {
    let n = x.nrows();
    let e = 0.5 * (upper - cut);
    let c = 0.5 * (upper + cut);
    let sigma0 = e / (lowest - c);
    let tau = 2.0 / sigma0;
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    for mut col in x.column_iter_mut() {
        let xs = col.as_mut_slice();
        prev.copy_from_slice(xs);
        op.apply(&prev, &mut cur);
        for (y, x0) in cur.iter_mut().zip(&prev) {
            *y = (*y - c * x0) * sigma0 / e;
        }
        let mut sigma = sigma0;
        for _ in 1..degree {
            let sigma_new = 1.0 / (tau - sigma);
            op.apply(&cur, &mut next);
            let a = 2.0 * sigma_new / e;
            let b = sigma * sigma_new;
            for ((y, y1), y0) in next.iter_mut().zip(&cur).zip(&prev) {
                *y = a * (*y - c * y1) - b * y0;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            sigma = sigma_new;
        }
        xs.copy_from_slice(&cur);
    }
}

fn apply_block(op: &Laplacian, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(x.nrows(), x.ncols());
    for (xc, mut yc) in x.column_iter().zip(y.column_iter_mut()) {
        op.apply(xc.as_slice(), yc.as_mut_slice());
    }
    y
}

/// Orthonormalizes the columns in place: CholeskyQR2, falling back to
/// shifted CholeskyQR3 when the Gram matrix is too ill-conditioned.
pub(crate) fn orthonormalize(x: &mut DMatrix<f64>) -> Result<()> {
    if cholesky_qr(x, 0.0).is_ok() && cholesky_qr(x, 0.0).is_ok() {
        return Ok(());
    }
    let (n, p) = x.shape();
    let norm2 = x.column_iter().map(|c| c.norm_squared()).sum::<f64>();
    let shift = 11.0 * ((n * p + p * (p + 1)) as f64) * f64::EPSILON * norm2;
    cholesky_qr(x, shift)?;
    cholesky_qr(x, 0.0)?;
    cholesky_qr(x, 0.0)
}

fn cholesky_qr(x: &mut DMatrix<f64>, shift: f64) -> Result<()> {
    let p = x.ncols();
    let mut g = x.tr_mul(x);
    for k in 0..p {
        g[(k, k)] += shift;
    }
    let chol = g.cholesky().ok_or_else(|| Error::Format("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Format("singular Cholesky factor".into()))?;
    *x = &*x * linv.transpose();
    Ok(())
}
