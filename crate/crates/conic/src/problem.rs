//! Standard-form conic problem container and validation.

use thiserror::Error;

use crate::cones::Cone;
use crate::hermitian::{RMat, RVec};

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("tolerance {0} outside (0, 1e-2]")]
    InvalidTolerance(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `minimize c'x  subject to  A x = b,  x in K`, with `K` the product of the
/// cone segments in `cones` partitioning the decision vector.
#[derive(Clone, Debug)]
pub struct ConicProblem {
    pub c: RVec,
    pub a: RMat,
    pub b: RVec,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn new(c: RVec, a: RMat, b: RVec, cones: Vec<Cone>) -> Result<Self, ConicError> {
        let p = ConicProblem { c, a, b, cones };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn n_eq(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let cone_dim: usize = self.cones.iter().map(|c| c.len()).sum();
        if cone_dim != self.c.len() {
            return Err(ConicError::Dimension(format!(
                "cone segments cover {} entries but the decision vector has {}",
                cone_dim,
                self.c.len()
            )));
        }
        if self.a.ncols() != self.c.len() {
            return Err(ConicError::Dimension(format!(
                "A has {} columns, expected {}",
                self.a.ncols(),
                self.c.len()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(ConicError::Dimension(format!(
                "A has {} rows but b has {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        for c in &self.cones {
            if let Cone::Soc { dim } = c {
                if *dim == 0 {
                    return Err(ConicError::Dimension(
                        "second-order cone must have dim >= 1".into(),
                    ));
                }
            }
        }
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite());
        if !finite {
            return Err(ConicError::Numerical("non-finite problem data".into()));
        }
        Ok(())
    }

    /// Sparse triplet text dump for external cross-checking.
    ///
    /// Format: one record per line.
    /// `dim <d>` / `rows <m>` header, `cone nonneg <len>` | `cone soc <len>` |
    /// `cone psdh <side>` per segment in order, then nonzeros as
    /// `c <col> <val>`, `a <row> <col> <val>`, `b <row> <val>`.
    pub fn dump_triplets(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "dim {}", self.dim());
        let _ = writeln!(s, "rows {}", self.n_eq());
        for c in &self.cones {
            match c {
                Cone::NonNeg { dim } => {
                    let _ = writeln!(s, "cone nonneg {dim}");
                }
                Cone::Soc { dim } => {
                    let _ = writeln!(s, "cone soc {dim}");
                }
                Cone::PsdHermitian { side } => {
                    let _ = writeln!(s, "cone psdh {side}");
                }
            }
        }
        for (j, v) in self.c.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "c {j} {v:.17e}");
            }
        }
        for i in 0..self.a.nrows() {
            for j in 0..self.a.ncols() {
                let v = self.a[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(s, "a {i} {j} {v:.17e}");
                }
            }
        }
        for (i, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "b {i} {v:.17e}");
            }
        }
        s
    }
}

/// Presolve output: row-scaled, rank-reduced equality system plus the data
/// needed to map dual variables back to the original row set.
pub(crate) struct Presolved {
    pub a: RMat,
    pub b: RVec,
    pub c: RVec,
    /// Original row index of each kept row.
    pub kept: Vec<usize>,
    /// 2-norm scale applied to each kept row.
    pub row_scale: Vec<f64>,
    /// Scale applied to the objective vector.
    pub obj_scale: f64,
    /// Detected inconsistency among linearly dependent rows.
    pub inconsistent: bool,
}

/// Removes linearly dependent equality rows by modified Gram-Schmidt with a
/// relative threshold, verifying that each dropped row is consistent with the
/// combination of kept rows that reproduces it.
pub(crate) fn presolve(p: &ConicProblem, rank_tol: f64) -> Presolved {
    let m = p.n_eq();
    let d = p.dim();
    let obj_scale = p.c.amax().max(1.0);
    let c = &p.c / obj_scale;

    let mut kept: Vec<usize> = Vec::new();
    let mut basis: Vec<RVec> = Vec::new();
    // Upper-triangular QR coefficients: kept row j = sum_l r_upper[j][l] q_l.
    let mut r_upper: Vec<Vec<f64>> = Vec::new();
    let mut inconsistent = false;

    for i in 0..m {
        let r = p.a.row(i).transpose();
        let norm = r.norm();
        if norm <= 1e-300 {
            if p.b[i].abs() > 1e-8 * (1.0 + p.b[i].abs()) {
                inconsistent = true;
            }
            continue;
        }
        let mut resid = r.clone();
        let mut coefs = Vec::with_capacity(basis.len());
        for q in &basis {
            let coef = q.dot(&resid);
            coefs.push(coef);
            resid -= q * coef;
        }
        let resid_norm = resid.norm();
        if resid_norm > rank_tol * norm {
            kept.push(i);
            coefs.push(resid_norm);
            r_upper.push(coefs);
            basis.push(resid / resid_norm);
        } else {
            // dependent: solve R w = coefs for the combination of kept rows
            let nk = kept.len();
            let mut w = vec![0.0; nk];
            let mut ok = nk > 0;
            for j in (0..nk).rev() {
                let mut s = if j < coefs.len() { coefs[j] } else { 0.0 };
                for (jp, wjp) in w.iter().enumerate().skip(j + 1) {
                    if j < r_upper[jp].len() {
                        s -= r_upper[jp][j] * wjp;
                    }
                }
                let diag = r_upper[j][j];
                if diag.abs() <= 1e-300 {
                    ok = false;
                    break;
                }
                w[j] = s / diag;
            }
            let pred_b: f64 = if ok {
                w.iter().zip(kept.iter()).map(|(wj, &kj)| wj * p.b[kj]).sum()
            } else {
                0.0
            };
            if !ok || (p.b[i] - pred_b).abs() > 1e-8 * (1.0 + p.b[i].abs()) {
                inconsistent = true;
            }
        }
    }

    let mk = kept.len();
    let mut a = RMat::zeros(mk, d);
    let mut b = RVec::zeros(mk);
    let mut row_scale = Vec::with_capacity(mk);
    for (k, &i) in kept.iter().enumerate() {
        let norm = p.a.row(i).norm();
        row_scale.push(norm);
        for j in 0..d {
            a[(k, j)] = p.a[(i, j)] / norm;
        }
        b[k] = p.b[i] / norm;
    }
    Presolved {
        a,
        b,
        c,
        kept,
        row_scale,
        obj_scale,
        inconsistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn validate_rejects_bad_partition() {
        let p = ConicProblem {
            c: dvector![1.0, 2.0],
            a: RMat::zeros(0, 2),
            b: RVec::zeros(0),
            cones: vec![Cone::NonNeg { dim: 3 }],
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn presolve_drops_duplicate_row() {
        let p = ConicProblem::new(
            dvector![1.0, 1.0],
            dmatrix![1.0, 1.0; 2.0, 2.0],
            dvector![1.0, 2.0],
            vec![Cone::NonNeg { dim: 2 }],
        )
        .unwrap();
        let ps = presolve(&p, 1e-10);
        assert_eq!(ps.kept, vec![0]);
        assert!(!ps.inconsistent);
    }

    #[test]
    fn presolve_flags_inconsistent_duplicate() {
        let p = ConicProblem::new(
            dvector![1.0, 1.0],
            dmatrix![1.0, 1.0; 2.0, 2.0],
            dvector![1.0, 3.0],
            vec![Cone::NonNeg { dim: 2 }],
        )
        .unwrap();
        let ps = presolve(&p, 1e-10);
        assert!(ps.inconsistent);
    }

    #[test]
    fn dump_round_trips_visually() {
        let p = ConicProblem::new(
            dvector![1.0, 0.0, 2.0],
            dmatrix![1.0, 0.0, -1.0],
            dvector![0.5],
            vec![Cone::Soc { dim: 3 }],
        )
        .unwrap();
        let dump = p.dump_triplets();
        assert!(dump.contains("dim 3"));
        assert!(dump.contains("cone soc 3"));
        assert!(dump.contains("a 0 2"));
    }
}
