//! Direct solver for complex block-tridiagonal systems with dense blocks,
//! plus a randomized condition-number estimate.

use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::error::{Error, Result};

/// Off-diagonal block: most couplings here are diagonal (vertical stencil
/// legs), so avoid storing dense zeros.
#[derive(Debug, Clone)]
pub enum OffBlock {
    Diagonal(DVector<Complex64>),
    Dense(DMatrix<Complex64>),
}

impl OffBlock {
    fn mul_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        match self {
            OffBlock::Diagonal(d) => d.component_mul(v),
            OffBlock::Dense(m) => m * v,
        }
    }

    fn mul_mat(&self, m2: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        match self {
            OffBlock::Diagonal(d) => {
                let mut out = m2.clone();
                for (r, scale) in d.iter().enumerate() {
                    for c in 0..out.ncols() {
                        out[(r, c)] *= scale;
                    }
                }
                out
            }
            OffBlock::Dense(m) => m * m2,
        }
    }

    fn abs_row_sums(&self, out: &mut [f64]) {
        match self {
            OffBlock::Diagonal(d) => {
                for (r, v) in d.iter().enumerate() {
                    out[r] += v.norm();
                }
            }
            OffBlock::Dense(m) => {
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        out[r] += m[(r, c)].norm();
                    }
                }
            }
        }
    }

    /// Action of the conjugate transpose.
    #[cfg(test)]
    fn mul_vec_adjoint(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        match self {
            OffBlock::Diagonal(d) => {
                DVector::from_iterator(d.len(), d.iter().zip(v.iter()).map(|(a, b)| a.conj() * b))
            }
            OffBlock::Dense(m) => m.adjoint() * v,
        }
    }
}

/// Block-tridiagonal matrix with `diag.len()` block rows; `lower[i]` couples
/// row i+1 to row i, `upper[i]` couples row i to row i+1.
#[derive(Debug, Clone)]
pub struct BlockTri {
    pub diag: Vec<DMatrix<Complex64>>,
    pub lower: Vec<OffBlock>,
    pub upper: Vec<OffBlock>,
}

pub struct BlockTriLU {
    lus: Vec<LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
    gains: Vec<DMatrix<Complex64>>, // D~_i^{-1} U_i
    lower: Vec<OffBlock>,
    block: usize,
}

impl BlockTri {
    pub fn nblocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.diag[0].nrows()
    }

    pub fn mul_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let (nb, bs) = (self.nblocks(), self.block_size());
        let mut out = DVector::zeros(nb * bs);
        for i in 0..nb {
            let vi = v.rows(i * bs, bs).into_owned();
            let mut acc = &self.diag[i] * &vi;
            if i > 0 {
                acc += self.lower[i - 1].mul_vec(&v.rows((i - 1) * bs, bs).into_owned());
            }
            if i + 1 < nb {
                acc += self.upper[i].mul_vec(&v.rows((i + 1) * bs, bs).into_owned());
            }
            out.rows_mut(i * bs, bs).copy_from(&acc);
        }
        out
    }

    #[cfg(test)]
    fn mul_vec_adjoint(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let (nb, bs) = (self.nblocks(), self.block_size());
        let mut out = DVector::zeros(nb * bs);
        for i in 0..nb {
            let vi = v.rows(i * bs, bs).into_owned();
            let mut acc = self.diag[i].adjoint() * &vi;
            if i + 1 < nb {
                acc += self.lower[i].mul_vec_adjoint(&v.rows((i + 1) * bs, bs).into_owned());
            }
            if i > 0 {
                acc += self.upper[i - 1].mul_vec_adjoint(&v.rows((i - 1) * bs, bs).into_owned());
            }
            out.rows_mut(i * bs, bs).copy_from(&acc);
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let (nb, bs) = (self.nblocks(), self.block_size());
        let mut best = 0.0f64;
        for i in 0..nb {
            let mut sums = vec![0.0f64; bs];
            for r in 0..bs {
                for c in 0..bs {
                    sums[r] += self.diag[i][(r, c)].norm();
                }
            }
            if i > 0 {
                self.lower[i - 1].abs_row_sums(&mut sums);
            }
            if i + 1 < nb {
                self.upper[i].abs_row_sums(&mut sums);
            }
            for s in sums {
                best = best.max(s);
            }
        }
        best
    }

    /// Block Thomas elimination. Fails with `SingularSystem` if a pivot block
    /// is singular to working precision.
    pub fn factor(self) -> Result<BlockTriLU> {
        let nb = self.nblocks();
        let bs = self.block_size();
        let mut lus = Vec::with_capacity(nb);
        let mut gains = Vec::with_capacity(nb.saturating_sub(1));
        let mut d = self.diag[0].clone();
        for i in 0..nb {
            let lu = d.clone().lu();
            if lu.determinant().norm() == 0.0 {
                return Err(Error::SingularSystem { cond: f64::INFINITY });
            }
            if i + 1 < nb {
                let u = match &self.upper[i] {
                    OffBlock::Diagonal(dv) => DMatrix::from_diagonal(dv),
                    OffBlock::Dense(m) => m.clone(),
                };
                let g = lu.solve(&u).ok_or(Error::SingularSystem { cond: f64::INFINITY })?;
                d = &self.diag[i + 1] - self.lower[i].mul_mat(&g);
                gains.push(g);
            }
            lus.push(lu);
        }
        Ok(BlockTriLU {
            lus,
            gains,
            lower: self.lower,
            block: bs,
        })
    }

    /// Estimate the condition number ||A||_inf * ||A^{-1}||_2-ish via a few
    /// inverse power iterations on A^H A with a fixed-seed random start.
    pub fn condition_estimate(&self, lu: &BlockTriLU, lu_adjoint: &BlockTriLU) -> f64 {
        let n = self.nblocks() * self.block_size();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f6465);
        let mut v = DVector::from_iterator(
            n,
            (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
        );
        v /= Complex64::new(v.norm(), 0.0);
        let mut inv_norm = 0.0f64;
        for _ in 0..6 {
            // w = A^{-H} A^{-1} v grows like sigma_min^{-2}.
            let w = lu_adjoint.solve(&lu.solve(&v));
            let norm = w.norm();
            if !norm.is_finite() {
                return f64::INFINITY;
            }
            if norm == 0.0 {
                return f64::INFINITY;
            }
            inv_norm = norm.sqrt();
            v = w / Complex64::new(norm, 0.0);
        }
        self.inf_norm() * inv_norm
    }

    /// Adjoint system as a block-tridiagonal matrix (for condition estimates).
    pub fn adjoint(&self) -> BlockTri {
        let nb = self.nblocks();
        let adj_off = |b: &OffBlock| match b {
            OffBlock::Diagonal(d) => OffBlock::Diagonal(d.map(|z| z.conj())),
            OffBlock::Dense(m) => OffBlock::Dense(m.adjoint()),
        };
        BlockTri {
            diag: (0..nb).map(|i| self.diag[i].adjoint()).collect(),
            lower: self.upper.iter().map(adj_off).collect(),
            upper: self.lower.iter().map(adj_off).collect(),
        }
    }
}

impl BlockTriLU {
    pub fn solve(&self, rhs: &DVector<Complex64>) -> DVector<Complex64> {
        let nb = self.lus.len();
        let bs = self.block;
        let mut y: Vec<DVector<Complex64>> = Vec::with_capacity(nb);
        for i in 0..nb {
            let mut r = rhs.rows(i * bs, bs).into_owned();
            if i > 0 {
                r -= self.lower[i - 1].mul_vec(&y[i - 1]);
            }
            y.push(self.lus[i].solve(&r).expect("factored pivot"));
        }
        let mut x = DVector::zeros(nb * bs);
        let mut next = y[nb - 1].clone();
        x.rows_mut((nb - 1) * bs, bs).copy_from(&next);
        for i in (0..nb - 1).rev() {
            let xi = &y[i] - &self.gains[i] * &next;
            x.rows_mut(i * bs, bs).copy_from(&xi);
            next = xi;
        }
        x
    }
}

/// Solve A x = b with a condition check: returns the solution and the
/// condition estimate, refusing systems estimated beyond `cond_limit`.
pub fn solve_checked(
    a: BlockTri,
    rhs: &[DVector<Complex64>],
    cond_limit: f64,
) -> Result<(Vec<DVector<Complex64>>, f64)> {
    let adj = a.adjoint();
    let lu = a.clone().factor()?;
    let lu_adj = adj.factor()?;
    let cond = a.condition_estimate(&lu, &lu_adj);
    if !cond.is_finite() || cond > cond_limit {
        return Err(Error::SingularSystem { cond });
    }
    let sols = rhs.iter().map(|b| lu.solve(b)).collect();
    Ok((sols, cond))
}

/// Residual-checked adjoint action, used by oracle tests.
pub fn residual_inf(a: &BlockTri, x: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    let r = a.mul_vec(x) - b;
    r.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
