//! Locally optimal block preconditioned conjugate gradient (LOBPCG) for
//! the lowest eigenpairs of a symmetric operator.
//!
//! Bases are orthonormalised with the Gram-matrix SVQB scheme so that all
//! dense work is matrix–matrix products; columns whose Gram eigenvalue falls
//! below `1e-13` of the largest are dropped, which keeps the search space
//! well conditioned as `W` and `P` shrink near convergence.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::operator::{Preconditioner, SymmetricOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobpcgOptions {
    /// Target `‖Hx - θx‖` for unit `x`.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns beyond the requested count.
    pub guard: usize,
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 3000, guard: 4, seed: 0x1ee7 }
    }
}

#[derive(Debug, Clone)]
pub struct LobpcgResult {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

const DROP_RATIO: f64 = 1e-13;
const DENSE_LIMIT: usize = 400;

/// `aᵀ b` through a strided GEMM; nalgebra's `tr_mul` does not reach the
/// blocked kernel for tall-skinny operands.
fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p, q) = (a.nrows(), a.ncols(), b.ncols());
    assert_eq!(n, b.nrows(), "row mismatch in gram product");
    let mut out = DMatrix::<f64>::zeros(p, q);
    if p == 0 || q == 0 || n == 0 {
        return out;
    }
    // SAFETY: both inputs are contiguous column-major n×p and n×q buffers and
    // `out` is a contiguous column-major p×q buffer; the strides below
    // address exactly those elements.
    unsafe {
        matrixmultiply::dgemm(
            p,
            n,
            q,
            1.0,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            p as isize,
        );
    }
    out
}

fn apply_columns(op: &dyn SymmetricOperator, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let mut out = DMatrix::<f64>::zeros(n, v.ncols());
    out.as_mut_slice()
        .par_chunks_mut(n)
        .zip(v.as_slice().par_chunks(n))
        .for_each(|(y, x)| op.apply(x, y));
    out
}

fn precondition_columns(pre: &dyn Preconditioner, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let mut out = DMatrix::<f64>::zeros(n, v.ncols());
    out.as_mut_slice()
        .par_chunks_mut(n)
        .zip(v.as_slice().par_chunks(n))
        .for_each(|(z, r)| pre.apply(r, z));
    out
}

fn select_columns(v: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = v.nrows();
    let mut out = DMatrix::<f64>::zeros(n, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        out.column_mut(j).copy_from(&v.column(c));
    }
    out
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows().max(b.nrows());
    let mut out = DMatrix::<f64>::zeros(n, a.ncols() + b.ncols());
    if a.ncols() > 0 {
        out.columns_mut(0, a.ncols()).copy_from(a);
    }
    if b.ncols() > 0 {
        out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    }
    out
}

/// Orthonormal basis of the column span of `v`, dropping near-dependent
/// directions.
fn svqb(v: &DMatrix<f64>) -> DMatrix<f64> {
    if v.ncols() == 0 {
        return v.clone();
    }
    let gram = gram(v, v);
    let scale: Vec<f64> = (0..gram.ncols()).map(|i| gram[(i, i)]).collect();
    let keep_cols: Vec<usize> = (0..scale.len()).filter(|&i| scale[i] > 0.0 && scale[i].is_finite()).collect();
    if keep_cols.len() < scale.len() {
        return svqb(&select_columns(v, &keep_cols));
    }
    let dinv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(scale.len(), scale.iter().map(|s| s.powf(-0.5))));
    let scaled = &dinv * &gram * &dinv;
    let eig = SymmetricEigen::new(scaled);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > DROP_RATIO * top).collect();
    let mut transform = DMatrix::<f64>::zeros(scale.len(), kept.len());
    for (j, &i) in kept.iter().enumerate() {
        let col = eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt();
        transform.column_mut(j).copy_from(&col);
    }
    v * (dinv * transform)
}

/// `v - x (xᵀ v)` applied twice.
fn project_out(x: &DMatrix<f64>, v: &mut DMatrix<f64>) {
    if v.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let coeff = gram(x, v);
        *v -= x * coeff;
    }
}

fn rayleigh_ritz(s: &DMatrix<f64>, hs: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut g = gram(s, hs);
    g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = select_columns(&eig.eigenvectors, &order);
    (values, vectors)
}

fn column_norms(r: &DMatrix<f64>) -> Vec<f64> {
    r.column_iter().map(|c| c.norm()).collect()
}

/// Dense fallback for small operators.
fn dense(op: &dyn SymmetricOperator, k: usize) -> LobpcgResult {
    let n = op.dim();
    let identity = DMatrix::<f64>::identity(n, n);
    let h = apply_columns(op, &identity);
    let (values, vectors) = rayleigh_ritz(&identity, &h);
    let x = vectors.columns(0, k).into_owned();
    let hx = &h * &x;
    let residuals = (0..k).map(|i| (hx.column(i) - x.column(i) * values[i]).norm()).collect();
    LobpcgResult { eigenvalues: values[..k].to_vec(), vectors: x, residuals, iterations: 0 }
}

/// The `k` algebraically smallest eigenpairs of `op`.
pub fn lobpcg(op: &dyn SymmetricOperator, pre: &dyn Preconditioner, k: usize, opts: &LobpcgOptions) -> Result<LobpcgResult> {
    let n = op.dim();
    if k == 0 {
        return Ok(LobpcgResult { eigenvalues: vec![], vectors: DMatrix::zeros(n, 0), residuals: vec![], iterations: 0 });
    }
    if k > n {
        return Err(Error::Domain(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    if n <= DENSE_LIMIT || 4 * (k + opts.guard) >= n {
        return Ok(dense(op, k));
    }
    let m = k + opts.guard;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let mut x = svqb(&init);
    let mut hx = apply_columns(op, &x);
    let (theta0, y0) = rayleigh_ritz(&x, &hx);
    x = &x * &y0;
    hx = &hx * &y0;
    let mut theta: Vec<f64> = theta0[..x.ncols()].to_vec();
    let mut p = DMatrix::<f64>::zeros(n, 0);

    for iter in 0..opts.max_iter {
        let mut r = hx.clone();
        for (j, t) in theta.iter().enumerate() {
            let col = x.column(j) * *t;
            let mut rc = r.column_mut(j);
            rc -= col;
        }
        let res = column_norms(&r);
        if res[..k].iter().all(|&v| v <= opts.tol) {
            return Ok(LobpcgResult {
                eigenvalues: theta[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                residuals: res[..k].to_vec(),
                iterations: iter,
            });
        }
        // converged wanted columns are soft-locked; guards always iterate
        let active: Vec<usize> = (0..x.ncols()).filter(|&j| j >= k || res[j] > opts.tol).collect();
        let mut w = precondition_columns(pre, &select_columns(&r, &active));
        project_out(&x, &mut w);
        let mut q = svqb(&hstack(&w, &p));
        project_out(&x, &mut q);
        q = svqb(&q);
        let hq = apply_columns(op, &q);
        let s = hstack(&x, &q);
        let hs = hstack(&hx, &hq);
        let (values, y) = rayleigh_ritz(&s, &hs);
        let cols = m.min(values.len());
        let ym = y.columns(0, cols).into_owned();
        let x_new = &s * &ym;
        hx = &hs * &ym;
        let p_full = &q * ym.rows(x.ncols(), q.ncols());
        let next_active: Vec<usize> = active.iter().copied().filter(|&j| j < cols).collect();
        p = select_columns(&p_full, &next_active);
        x = x_new;
        theta = values[..cols].to_vec();
    }
    let mut r = hx.clone();
    for (j, t) in theta.iter().enumerate() {
        let col = x.column(j) * *t;
        let mut rc = r.column_mut(j);
        rc -= col;
    }
    let res = column_norms(&r);
    Err(Error::Numerical(format!(
        "eigensolver did not converge in {} iterations; residuals {:?} (tolerance {:e})",
        opts.max_iter,
        &res[..k],
        opts.tol
    )))
}

#[cfg(test)]
mod tests {
    use super::super::operator::NoPreconditioner;
    use super::*;

    struct Diagonal(Vec<f64>);

    impl SymmetricOperator for Diagonal {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..x.len() {
                y[i] = self.0[i] * x[i];
            }
        }
    }

    struct Jacobi<'a>(&'a Diagonal);

    impl Preconditioner for Jacobi<'_> {
        fn apply(&self, r: &[f64], z: &mut [f64]) {
            for i in 0..r.len() {
                z[i] = r[i] / (self.0 .0[i] + 1.0);
            }
        }
    }

    #[test]
    fn diagonal_spectrum() {
        let diag: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 2000) as f64 * 0.5 + 1.0).collect();
        let op = Diagonal(diag);
        let res = lobpcg(&op, &Jacobi(&op), 5, &LobpcgOptions { tol: 1e-9, ..Default::default() }).unwrap();
        for (i, v) in res.eigenvalues.iter().enumerate() {
            assert!((v - (1.0 + 0.5 * i as f64)).abs() < 1e-10, "{v}");
        }
        let gram = gram(&res.vectors, &res.vectors);
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn dense_path_for_small_operators() {
        let op = Diagonal(vec![3.0, 1.0, 2.0, 5.0]);
        let res = lobpcg(&op, &NoPreconditioner, 2, &LobpcgOptions::default()).unwrap();
        assert_eq!(res.eigenvalues, vec![1.0, 2.0]);
    }

    #[test]
    fn reports_non_convergence() {
        let diag: Vec<f64> = (0..3000).map(|i| 1.0 + i as f64).collect();
        let op = Diagonal(diag);
        let err = lobpcg(&op, &NoPreconditioner, 3, &LobpcgOptions { tol: 1e-14, max_iter: 2, ..Default::default() });
        assert!(matches!(err, Err(Error::Numerical(_))));
    }
}
