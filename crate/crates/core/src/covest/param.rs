//! Linear parameterization of `Q` and `R` by fixed symmetric bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{frob_inner, solve_spd};

/// A symmetric basis matrix together with its nonzero pattern, so that
/// products with sparse bases cost only as much as their support.
#[derive(Debug, Clone)]
pub struct Basis {
    dense: DMatrix<f64>,
    entries: Vec<(usize, usize, f64)>,
}

impl Basis {
    pub fn new(dense: DMatrix<f64>) -> Result<Self> {
        let d = dense.nrows();
        if dense.ncols() != d {
            return Err(Error::invalid("basis matrices must be square"));
        }
        let scale = dense.abs().max().max(f64::MIN_POSITIVE);
        if (&dense - dense.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::invalid("basis matrices must be symmetric"));
        }
        let mut entries = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let v = dense[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Ok(Self { dense, entries })
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    fn is_sparse(&self) -> bool {
        self.entries.len() <= 2 * self.dim()
    }

    /// `A · B` for `A` with `dim` columns.
    pub fn right_mul(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        if !self.is_sparse() {
            return a * &self.dense;
        }
        let mut out = DMatrix::zeros(a.nrows(), self.dim());
        for &(i, j, v) in &self.entries {
            let mut col = out.column_mut(j);
            col.axpy(v, &a.column(i), 1.0);
        }
        out
    }

    /// `A · B · Aᵀ`, accumulated into `out` with weight `c`.
    pub fn add_congruence(&self, a: &DMatrix<f64>, c: f64, out: &mut DMatrix<f64>) {
        if !self.is_sparse() {
            let ab = a * &self.dense;
            out.gemm(c, &ab, &a.transpose(), 1.0);
            return;
        }
        for &(i, j, v) in &self.entries {
            out.ger(c * v, &a.column(i), &a.column(j), 1.0);
        }
    }
}

/// `Q = Σ αₛ Qₛ`, `R = Σ βₛ Rₛ`.
#[derive(Debug, Clone)]
pub struct CovParameterization {
    q_bases: Vec<Basis>,
    r_bases: Vec<Basis>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

fn gram(bases: &[Basis]) -> DMatrix<f64> {
    let k = bases.len();
    let mut g = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = frob_inner(bases[a].matrix(), bases[b].matrix());
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

fn to_bases(mats: Vec<DMatrix<f64>>, what: &str) -> Result<Vec<Basis>> {
    if mats.is_empty() {
        return Err(Error::invalid(format!("{what} basis list is empty")));
    }
    let d = mats[0].nrows();
    let bases = mats.into_iter().map(Basis::new).collect::<Result<Vec<_>>>()?;
    if bases.iter().any(|b| b.dim() != d) {
        return Err(Error::invalid(format!("{what} bases have mixed dimensions")));
    }
    let eig = crate::linalg::sym_eigen(&gram(&bases)).eigenvalues;
    let max = eig.max();
    if !(eig.min() > crate::linalg::PINV_RTOL * max) {
        return Err(Error::invalid(format!("{what} bases are linearly dependent")));
    }
    Ok(bases)
}

fn project(bases: &[Basis], m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.nrows() != bases[0].dim() || m.ncols() != bases[0].dim() {
        return Err(Error::invalid("matrix does not match the basis dimension"));
    }
    let rhs = DMatrix::from_iterator(bases.len(), 1, bases.iter().map(|b| frob_inner(b.matrix(), m)));
    Ok(solve_spd(&gram(bases), &rhs, "basis Gram matrix")?
        .column(0)
        .into_owned())
}

fn combine(bases: &[Basis], c: &DVector<f64>) -> DMatrix<f64> {
    let d = bases[0].dim();
    let mut out = DMatrix::zeros(d, d);
    for (b, &w) in bases.iter().zip(c.iter()) {
        for &(i, j, v) in &b.entries {
            out[(i, j)] += w * v;
        }
    }
    out
}

impl CovParameterization {
    pub fn new(
        q_bases: Vec<DMatrix<f64>>,
        r_bases: Vec<DMatrix<f64>>,
        alpha: DVector<f64>,
        beta: DVector<f64>,
    ) -> Result<Self> {
        let q_bases = to_bases(q_bases, "Q")?;
        let r_bases = to_bases(r_bases, "R")?;
        if alpha.len() != q_bases.len() || beta.len() != r_bases.len() {
            return Err(Error::invalid("coefficient vectors do not match the basis counts"));
        }
        Ok(Self {
            q_bases,
            r_bases,
            alpha,
            beta,
        })
    }

    /// Coefficients are the least-squares projections of the guesses `q0`, `r0`.
    pub fn from_guess(
        q_bases: Vec<DMatrix<f64>>,
        r_bases: Vec<DMatrix<f64>>,
        q0: &DMatrix<f64>,
        r0: &DMatrix<f64>,
    ) -> Result<Self> {
        let (nq, nr) = (q_bases.len(), r_bases.len());
        let mut p = Self::new(q_bases, r_bases, DVector::zeros(nq), DVector::zeros(nr))?;
        p.alpha = p.project_q(q0)?;
        p.beta = p.project_r(r0)?;
        Ok(p)
    }

    pub fn n_q(&self) -> usize {
        self.q_bases.len()
    }
    pub fn n_r(&self) -> usize {
        self.r_bases.len()
    }
    pub fn n_p(&self) -> usize {
        self.n_q() + self.n_r()
    }
    pub fn q_dim(&self) -> usize {
        self.q_bases[0].dim()
    }
    pub fn r_dim(&self) -> usize {
        self.r_bases[0].dim()
    }
    pub fn q_bases(&self) -> &[Basis] {
        &self.q_bases
    }
    pub fn r_bases(&self) -> &[Basis] {
        &self.r_bases
    }

    pub fn reconstruct_q(&self, alpha: &DVector<f64>) -> DMatrix<f64> {
        combine(&self.q_bases, alpha)
    }
    pub fn reconstruct_r(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        combine(&self.r_bases, beta)
    }
    pub fn q(&self) -> DMatrix<f64> {
        self.reconstruct_q(&self.alpha)
    }
    pub fn r(&self) -> DMatrix<f64> {
        self.reconstruct_r(&self.beta)
    }

    /// Frobenius projection of a matrix onto the span of the `Q` bases.
    pub fn project_q(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        project(&self.q_bases, m)
    }
    pub fn project_r(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        project(&self.r_bases, m)
    }

    /// `(α ‖ β)`.
    pub fn theta(&self) -> DVector<f64> {
        let mut t = DVector::zeros(self.n_p());
        t.rows_mut(0, self.n_q()).copy_from(&self.alpha);
        t.rows_mut(self.n_q(), self.n_r()).copy_from(&self.beta);
        t
    }

    pub fn set_theta(&mut self, theta: &DVector<f64>) {
        self.alpha = theta.rows(0, self.n_q()).into_owned();
        self.beta = theta.rows(self.n_q(), self.n_r()).into_owned();
    }
}

fn unit(d: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    m[(i, j)] = 1.0;
    m[(j, i)] = 1.0;
    m
}

/// One basis per diagonal entry.
pub fn diagonal_bases(d: usize) -> Vec<DMatrix<f64>> {
    (0..d).map(|i| unit(d, i, i)).collect()
}

/// Every symmetric elementary matrix, upper triangle in row-major order.
pub fn symmetric_bases(d: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(unit(d, i, j));
        }
    }
    out
}

/// One basis per pair of `block × block` tiles of `template`, holding the
/// tile and its mirror image. The coefficients of `template` are all one.
pub fn block_bases(template: &DMatrix<f64>, block: usize) -> Result<Vec<DMatrix<f64>>> {
    let d = template.nrows();
    if block == 0 || !d.is_multiple_of(block) {
        return Err(Error::invalid(format!("block size {block} does not divide {d}")));
    }
    let nb = d / block;
    let mut out = Vec::with_capacity(nb * (nb + 1) / 2);
    for bi in 0..nb {
        for bj in bi..nb {
            let mut m = DMatrix::zeros(d, d);
            let tile = template.view((bi * block, bj * block), (block, block));
            m.view_mut((bi * block, bj * block), (block, block)).copy_from(&tile);
            if bi != bj {
                m.view_mut((bj * block, bi * block), (block, block))
                    .copy_from(&tile.transpose());
            }
            out.push(m);
        }
    }
    Ok(out)
}

/// Identity and the first off-diagonals; `cyclic` also links the two ends.
pub fn tridiagonal_bases(d: usize, cyclic: bool) -> Vec<DMatrix<f64>> {
    let mut off = DMatrix::zeros(d, d);
    for i in 0..d.saturating_sub(1) {
        off[(i, i + 1)] = 1.0;
        off[(i + 1, i)] = 1.0;
    }
    if cyclic && d > 2 {
        off[(0, d - 1)] = 1.0;
        off[(d - 1, 0)] = 1.0;
    }
    vec![DMatrix::identity(d, d), off]
}

pub fn identity_basis(d: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::identity(d, d)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruct_and_project_roundtrip() {
        let p = CovParameterization::new(
            diagonal_bases(2),
            symmetric_bases(2),
            DVector::from_column_slice(&[1.0, 2.0]),
            DVector::from_column_slice(&[0.5, 0.1, 0.7]),
        )
        .unwrap();
        assert_eq!(p.q(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert_eq!(p.r(), DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.7]));
        let back = p.project_r(&p.r()).unwrap();
        assert!((back - &p.beta).abs().max() < 1e-14);
    }

    #[test]
    fn dependent_bases_rejected() {
        let b = vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0];
        let r = CovParameterization::new(b, diagonal_bases(1), DVector::zeros(2), DVector::zeros(1));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn block_bases_count_and_sum() {
        let mut t = DMatrix::from_fn(8, 8, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        t = &t + t.transpose();
        let b = block_bases(&t, 4).unwrap();
        assert_eq!(b.len(), 3);
        let sum = b.iter().fold(DMatrix::zeros(8, 8), |acc, m| acc + m);
        assert!((sum - t).abs().max() < 1e-15);
        assert_eq!(block_bases(&DMatrix::identity(40, 40), 4).unwrap().len(), 55);
        assert_eq!(symmetric_bases(20).len(), 210);
    }

    #[test]
    fn sparse_products_match_dense() {
        let a = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.3 - 1.0);
        for m in symmetric_bases(4).into_iter().chain(tridiagonal_bases(4, true)) {
            let b = Basis::new(m.clone()).unwrap();
            assert!((b.right_mul(&a) - &a * &m).abs().max() < 1e-14);
            let mut out = DMatrix::zeros(3, 3);
            b.add_congruence(&a, 2.0, &mut out);
            assert!((out - (&a * &m * a.transpose()) * 2.0).abs().max() < 1e-12);
        }
    }

    #[test]
    fn cyclic_tridiagonal_is_circulant() {
        let b = tridiagonal_bases(5, true);
        assert_eq!(b[1][(0, 4)], 1.0);
        assert_eq!(b[1].sum(), 10.0);
        let open = tridiagonal_bases(5, false);
        assert_eq!(open[1][(0, 4)], 0.0);
    }
}
