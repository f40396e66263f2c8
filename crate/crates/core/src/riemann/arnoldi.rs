//! Laurent bases orthogonalised on the sample points by Arnoldi, for fits
//! on several curves where raw monomials are hopelessly ill-conditioned.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Multiplier (z - center) / scale, including the constant function.
    Polynomial { center: C64, scale: f64 },
    /// Multiplier scale / (z - center), constant excluded.
    Principal { center: C64, scale: f64 },
}

impl BlockKind {
    fn multiplier(&self, z: C64) -> C64 {
        match *self {
            BlockKind::Polynomial { center, scale } => (z - center) / scale,
            BlockKind::Principal { center, scale } => scale / (z - center),
        }
    }
}

/// One block: q_0 = 1 and q_{k+1} = (w q_k - sum_j h[k][j] q_j) / h[k][k+1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArnoldiBlock {
    pub kind: BlockKind,
    pub h: Vec<Vec<C64>>,
}

impl ArnoldiBlock {
    pub fn degree(&self) -> usize {
        self.h.len()
    }

    fn n_columns(&self) -> usize {
        match self.kind {
            BlockKind::Polynomial { .. } => self.degree() + 1,
            BlockKind::Principal { .. } => self.degree(),
        }
    }

    fn eval_into(&self, z: C64, out: &mut Vec<C64>) {
        let w = self.kind.multiplier(z);
        let mut q = Vec::with_capacity(self.degree() + 1);
        q.push(C64::new(1.0, 0.0));
        for (k, col) in self.h.iter().enumerate() {
            let mut v = w * q[k];
            for (j, hj) in col[..=k].iter().enumerate() {
                v -= hj * q[j];
            }
            q.push(v / col[k + 1]);
        }
        match self.kind {
            BlockKind::Polynomial { .. } => out.extend_from_slice(&q),
            BlockKind::Principal { .. } => out.extend_from_slice(&q[1..]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArnoldiBasis {
    pub blocks: Vec<ArnoldiBlock>,
}

impl ArnoldiBasis {
    /// Orthogonalise each block on `points` (with one reorthogonalisation
    /// pass); returns the basis and its matrix of values at the points.
    pub fn build(points: &[C64], kinds: &[(BlockKind, usize)]) -> (ArnoldiBasis, DMatrix<C64>) {
        let m = points.len();
        let rm = (m as f64).sqrt();
        let mut blocks = vec![];
        let mut cols: Vec<Vec<C64>> = vec![];
        for &(kind, degree) in kinds {
            let w: Vec<C64> = points.iter().map(|&z| kind.multiplier(z)).collect();
            let mut q: Vec<Vec<C64>> = vec![vec![C64::new(1.0, 0.0); m]];
            let mut h: Vec<Vec<C64>> = vec![];
            for k in 0..degree {
                let mut v: Vec<C64> = q[k].iter().zip(&w).map(|(a, b)| a * b).collect();
                let mut col = vec![C64::new(0.0, 0.0); k + 2];
                for _pass in 0..2 {
                    for j in 0..=k {
                        let c: C64 = q[j].iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<C64>() / m as f64;
                        col[j] += c;
                        for (vi, qi) in v.iter_mut().zip(&q[j]) {
                            *vi -= c * qi;
                        }
                    }
                }
                let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() / rm;
                col[k + 1] = C64::new(nrm.max(1e-300), 0.0);
                for x in v.iter_mut() {
                    *x /= col[k + 1];
                }
                q.push(v);
                h.push(col);
            }
            let skip = matches!(kind, BlockKind::Principal { .. }) as usize;
            cols.extend(q.into_iter().skip(skip));
            blocks.push(ArnoldiBlock { kind, h });
        }
        let mat = DMatrix::from_fn(m, cols.len(), |r, c| cols[c][r]);
        (ArnoldiBasis { blocks }, mat)
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.n_columns()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, z: C64) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.blocks {
            b.eval_into(z, &mut out);
        }
        out
    }
}
