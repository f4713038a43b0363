//! Cone kernels: membership geometry, Nesterov-Todd scalings, and the Jordan
//! algebra operations the interior-point solver needs.
//!
//! PSD blocks live in `svec` coordinates: the scaled upper triangle of a real
//! symmetric matrix, column major, off-diagonals multiplied by sqrt(2) so the
//! Euclidean inner product of two svecs equals the trace inner product.

use nalgebra::DMatrix;

use crate::hermitian::RMat;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// One segment of the cone product partitioning the decision vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cone {
    /// Componentwise nonnegative segment.
    NonNeg { dim: usize },
    /// Second-order cone `{ (t, u) : t >= ||u|| }` of total length `dim >= 1`.
    Soc { dim: usize },
    /// Hermitian PSD block of complex side `side`, stored as the svec of its
    /// real symmetric embedding of side `2 * side`.
    PsdHermitian { side: usize },
}

impl Cone {
    /// Embedded matrix side for PSD blocks.
    pub fn emb_side(&self) -> usize {
        match self {
            Cone::PsdHermitian { side } => 2 * side,
            _ => 0,
        }
    }

    /// Length of this cone's segment in the decision vector.
    pub fn len(&self) -> usize {
        match self {
            Cone::NonNeg { dim } | Cone::Soc { dim } => *dim,
            Cone::PsdHermitian { .. } => svec_len(self.emb_side()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Barrier degree: dimension for the orthant, 1 per second-order cone,
    /// matrix side for PSD blocks.
    pub fn degree(&self) -> usize {
        match self {
            Cone::NonNeg { dim } => *dim,
            Cone::Soc { .. } => 1,
            Cone::PsdHermitian { .. } => self.emb_side(),
        }
    }
}

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packs a symmetric matrix into svec coordinates.
pub fn svec(m: &RMat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    out
}

/// Unpacks svec coordinates into a dense symmetric matrix of side `n`.
pub fn unsvec(v: &[f64], n: usize) -> RMat {
    assert_eq!(v.len(), svec_len(n));
    let mut m = RMat::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                m[(i, j)] = v[k] / SQRT2;
                m[(j, i)] = v[k] / SQRT2;
            }
            k += 1;
        }
    }
    m
}

/// svec of the identity matrix of side `n`.
pub fn svec_identity(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; svec_len(n)];
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                v[k] = 1.0;
            }
            k += 1;
        }
    }
    v
}

/// Nesterov-Todd scaling state of one cone block, computed from a strictly
/// interior primal/dual pair (x, z). Conventions: `lambda = W^{-T} x = W z`,
/// so `x = W^T lambda` and `z = W^{-1} lambda`.
pub(crate) enum BlockScaling {
    NonNeg {
        w: Vec<f64>,
    },
    Soc {
        eta: f64,
        wbar: Vec<f64>,
    },
    Psd {
        /// `W(U) = R^T U R`; `H = R R^T` is the unique NT scaling point.
        r: RMat,
        rinv: RMat,
    },
}

pub(crate) struct Scaling {
    pub blocks: Vec<BlockScaling>,
    /// Scaled point lambda per block, concatenated.
    pub lambda: Vec<f64>,
}

/// Workspace with per-block offsets over the full decision vector.
pub(crate) struct ConeSystem {
    pub cones: Vec<Cone>,
    pub offsets: Vec<usize>,
    pub dim: usize,
    pub degree: usize,
}

impl ConeSystem {
    pub fn new(cones: &[Cone]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut dim = 0;
        let mut degree = 0;
        for c in cones {
            offsets.push(dim);
            dim += c.len();
            degree += c.degree();
        }
        ConeSystem {
            cones: cones.to_vec(),
            offsets,
            dim,
            degree,
        }
    }

    fn block<'a>(&self, v: &'a [f64], k: usize) -> &'a [f64] {
        &v[self.offsets[k]..self.offsets[k] + self.cones[k].len()]
    }

    fn block_mut<'a>(&self, v: &'a mut [f64], k: usize) -> &'a mut [f64] {
        &mut v[self.offsets[k]..self.offsets[k] + self.cones[k].len()]
    }

    /// Cone identity element e (barrier gradient center).
    pub fn identity(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, c) in self.cones.iter().enumerate() {
            let b = self.block_mut(&mut out, k);
            match c {
                Cone::NonNeg { .. } => b.fill(1.0),
                Cone::Soc { .. } => b[0] = 1.0,
                Cone::PsdHermitian { .. } => {
                    b.copy_from_slice(&svec_identity(c.emb_side()));
                }
            }
        }
        out
    }

    /// Largest step `a` such that `x + a dx` stays in the cone
    /// (`f64::INFINITY` when the whole ray is feasible).
    pub fn max_step(&self, x: &[f64], dx: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (k, c) in self.cones.iter().enumerate() {
            let xb = self.block(x, k);
            let db = self.block(dx, k);
            let a = match c {
                Cone::NonNeg { .. } => {
                    let mut a = f64::INFINITY;
                    for (xi, di) in xb.iter().zip(db.iter()) {
                        if *di < 0.0 {
                            a = a.min(-xi / di);
                        }
                    }
                    a
                }
                Cone::Soc { .. } => soc_max_step(xb, db),
                Cone::PsdHermitian { .. } => psd_max_step(xb, db, c.emb_side()),
            };
            alpha = alpha.min(a);
        }
        alpha
    }

    /// NT scalings for all blocks from a strictly interior pair.
    pub fn scaling(&self, x: &[f64], z: &[f64]) -> Option<Scaling> {
        let mut blocks = Vec::with_capacity(self.cones.len());
        let mut lambda = vec![0.0; self.dim];
        for (k, c) in self.cones.iter().enumerate() {
            let xb = self.block(x, k);
            let zb = self.block(z, k);
            let lb_range = self.offsets[k]..self.offsets[k] + c.len();
            match c {
                Cone::NonNeg { .. } => {
                    let mut w = vec![0.0; xb.len()];
                    for i in 0..xb.len() {
                        if xb[i] <= 0.0 || zb[i] <= 0.0 {
                            return None;
                        }
                        w[i] = (xb[i] / zb[i]).sqrt();
                        lambda[lb_range.start + i] = (xb[i] * zb[i]).sqrt();
                    }
                    blocks.push(BlockScaling::NonNeg { w });
                }
                Cone::Soc { .. } => {
                    let (eta, wbar) = soc_nt_scaling(xb, zb)?;
                    let sc = BlockScaling::Soc { eta, wbar };
                    apply_w_block(&sc, zb, &mut lambda[lb_range]);
                    blocks.push(sc);
                }
                Cone::PsdHermitian { .. } => {
                    let n = c.emb_side();
                    let (r, rinv, lam_diag) = psd_nt_scaling(xb, zb, n)?;
                    // lambda is the diagonal matrix of generalized singular values
                    let mut lam = RMat::zeros(n, n);
                    for i in 0..n {
                        lam[(i, i)] = lam_diag[i];
                    }
                    lambda[lb_range].copy_from_slice(&svec(&lam));
                    blocks.push(BlockScaling::Psd { r, rinv });
                }
            }
        }
        Some(Scaling {
            blocks,
            lambda,
        })
    }

    pub fn apply_w(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        for (k, c) in self.cones.iter().enumerate() {
            let range = self.offsets[k]..self.offsets[k] + c.len();
            apply_w_block(&s.blocks[k], &v[range.clone()], &mut out[range]);
        }
    }

    pub fn apply_winv(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        for (k, c) in self.cones.iter().enumerate() {
            let range = self.offsets[k]..self.offsets[k] + c.len();
            apply_winv_block(&s.blocks[k], &v[range.clone()], &mut out[range]);
        }
    }

    pub fn apply_wtinv(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        for (k, c) in self.cones.iter().enumerate() {
            let range = self.offsets[k]..self.offsets[k] + c.len();
            apply_wtinv_block(&s.blocks[k], &v[range.clone()], &mut out[range]);
        }
    }

    /// `G^{-1} = W^T W`, the quadratic NT scaling operator.
    pub fn apply_ginv(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        for (k, c) in self.cones.iter().enumerate() {
            let range = self.offsets[k]..self.offsets[k] + c.len();
            let vb = &v[range.clone()];
            let ob = &mut out[range];
            match &s.blocks[k] {
                BlockScaling::NonNeg { w } => {
                    for i in 0..vb.len() {
                        ob[i] = w[i] * w[i] * vb[i];
                    }
                }
                sc @ BlockScaling::Soc { .. } => {
                    let mut tmp = vec![0.0; vb.len()];
                    apply_w_block(sc, vb, &mut tmp);
                    apply_w_block(sc, &tmp, ob); // W symmetric: W^T W = W^2
                }
                BlockScaling::Psd { r, .. } => {
                    let n = r.nrows();
                    let h = r * r.transpose();
                    let u = unsvec(vb, n);
                    let res = &h * u * &h;
                    ob.copy_from_slice(&svec(&res));
                }
            }
        }
    }

    /// Jordan product `u o v` blockwise.
    pub fn jordan_mul(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for (k, c) in self.cones.iter().enumerate() {
            let range = self.offsets[k]..self.offsets[k] + c.len();
            let ub = &u[range.clone()];
            let vb = &v[range.clone()];
            let ob = &mut out[range];
            match c {
                Cone::NonNeg { .. } => {
                    for i in 0..ub.len() {
                        ob[i] = ub[i] * vb[i];
                    }
                }
                Cone::Soc { .. } => {
                    ob[0] = dot(ub, vb);
                    for i in 1..ub.len() {
                        ob[i] = ub[0] * vb[i] + vb[0] * ub[i];
                    }
                }
                Cone::PsdHermitian { .. } => {
                    let n = c.emb_side();
                    let um = unsvec(ub, n);
                    let vm = unsvec(vb, n);
                    let prod = 0.5 * (&um * &vm + &vm * &um);
                    ob.copy_from_slice(&svec(&prod));
                }
            }
        }
    }

    /// Solves `lambda o u = d` for `u`, using the scaled point of `s`.
    /// For PSD blocks lambda is diagonal by construction, which keeps the
    /// division elementwise in the scaled eigenbasis.
    pub fn jordan_div_lambda(&self, s: &Scaling, d: &[f64], out: &mut [f64]) -> bool {
        for (k, c) in self.cones.iter().enumerate() {
            let range = self.offsets[k]..self.offsets[k] + c.len();
            let lb = &s.lambda[range.clone()];
            let db = &d[range.clone()];
            let ob = &mut out[range];
            match c {
                Cone::NonNeg { .. } => {
                    for i in 0..db.len() {
                        if lb[i] == 0.0 {
                            return false;
                        }
                        ob[i] = db[i] / lb[i];
                    }
                }
                Cone::Soc { .. } => {
                    // Solve Arw(lambda) u = d in closed form.
                    let a = lb[0];
                    let b1 = &lb[1..];
                    let nb2 = dot(b1, b1);
                    let det = a * a - nb2;
                    if det <= 0.0 || a == 0.0 {
                        return false;
                    }
                    let bd = dot(b1, &db[1..]);
                    let u0 = (a * db[0] - bd) / det;
                    ob[0] = u0;
                    for i in 1..db.len() {
                        ob[i] = (db[i] - u0 * lb[i]) / a;
                    }
                }
                Cone::PsdHermitian { .. } => {
                    let n = c.emb_side();
                    let lam = unsvec(lb, n);
                    let dm = unsvec(db, n);
                    let mut um = RMat::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            let denom = 0.5 * (lam[(i, i)] + lam[(j, j)]);
                            if denom == 0.0 {
                                return false;
                            }
                            um[(i, j)] = dm[(i, j)] / denom;
                        }
                    }
                    ob.copy_from_slice(&svec(&um));
                }
            }
        }
        true
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn apply_w_block(sc: &BlockScaling, v: &[f64], out: &mut [f64]) {
    match sc {
        BlockScaling::NonNeg { w } => {
            for i in 0..v.len() {
                out[i] = w[i] * v[i];
            }
        }
        BlockScaling::Soc { eta, wbar } => {
            // W = eta [[a, b'], [b, I + b b'/(1+a)]] with (a, b) = wbar,
            // the square root of the quadratic representation P(wbar).
            let a = wbar[0];
            let bv = dot(&wbar[1..], &v[1..]);
            out[0] = eta * (a * v[0] + bv);
            for i in 1..v.len() {
                out[i] = eta * (v[0] * wbar[i] + v[i] + wbar[i] * bv / (1.0 + a));
            }
        }
        BlockScaling::Psd { r, .. } => {
            let n = r.nrows();
            let u = unsvec(v, n);
            let res = r.transpose() * u * r;
            out.copy_from_slice(&svec(&res));
        }
    }
}

fn apply_winv_block(sc: &BlockScaling, v: &[f64], out: &mut [f64]) {
    match sc {
        BlockScaling::NonNeg { w } => {
            for i in 0..v.len() {
                out[i] = v[i] / w[i];
            }
        }
        BlockScaling::Soc { eta, wbar } => {
            // W^{-1} = eta^{-1} [[a, -b'], [-b, I + b b'/(1+a)]]
            let a = wbar[0];
            let bv = dot(&wbar[1..], &v[1..]);
            out[0] = (a * v[0] - bv) / eta;
            for i in 1..v.len() {
                out[i] = (-v[0] * wbar[i] + v[i] + wbar[i] * bv / (1.0 + a)) / eta;
            }
        }
        BlockScaling::Psd { rinv, .. } => {
            let n = rinv.nrows();
            let u = unsvec(v, n);
            let res = rinv.transpose() * u * rinv;
            out.copy_from_slice(&svec(&res));
        }
    }
}

fn apply_wtinv_block(sc: &BlockScaling, v: &[f64], out: &mut [f64]) {
    match sc {
        // W symmetric for the vector cones
        BlockScaling::NonNeg { .. } | BlockScaling::Soc { .. } => apply_winv_block(sc, v, out),
        BlockScaling::Psd { rinv, .. } => {
            let n = rinv.nrows();
            let u = unsvec(v, n);
            let res = rinv * u * rinv.transpose();
            out.copy_from_slice(&svec(&res));
        }
    }
}

fn soc_residual(x: &[f64]) -> f64 {
    let n1 = dot(&x[1..], &x[1..]);
    x[0] * x[0] - n1
}

fn soc_max_step(x: &[f64], dx: &[f64]) -> f64 {
    // Boundary: (x0 + a d0)^2 = ||x1 + a d1||^2 with x0 + a d0 >= 0.
    let a = dx[0] * dx[0] - dot(&dx[1..], &dx[1..]);
    let b = 2.0 * (x[0] * dx[0] - dot(&x[1..], &dx[1..]));
    let c = soc_residual(x);
    let mut best = f64::INFINITY;
    if dx[0] < 0.0 {
        best = best.min(-x[0] / dx[0]);
    }
    let mut consider = |t: f64| {
        if t > 0.0 {
            best = best.min(t);
        }
    };
    if a.abs() < 1e-300 {
        if b < 0.0 {
            consider(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // numerically stable quadratic roots
            let q = -0.5 * (b + b.signum() * sq);
            let (r1, r2) = if b == 0.0 {
                let r = (-c / a).max(0.0).sqrt();
                (r, -r)
            } else {
                (q / a, if q != 0.0 { c / q } else { f64::INFINITY })
            };
            consider(r1);
            consider(r2);
        }
    }
    best
}

fn psd_max_step(x: &[f64], dx: &[f64], n: usize) -> f64 {
    let xm = unsvec(x, n);
    let dm = unsvec(dx, n);
    let l = match robust_cholesky(&xm) {
        Some(l) => l,
        None => return 0.0,
    };
    let linv = match l.clone().try_inverse() {
        Some(li) => li,
        None => return 0.0,
    };
    let s = &linv * dm * linv.transpose();
    let s = 0.5 * (&s + s.transpose());
    let min_ev = s
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_ev >= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (-min_ev)
    }
}

/// Cholesky factor with an eigenvalue-clamping fallback for matrices at the
/// numerical edge of the cone.
fn robust_cholesky(m: &RMat) -> Option<RMat> {
    if m.nrows() == 0 {
        return Some(RMat::zeros(0, 0));
    }
    if let Some(ch) = nalgebra::Cholesky::new(m.clone()) {
        return Some(ch.l());
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = (max_ev * 1e-14).max(1e-300);
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        *v = v.max(floor);
    }
    let clamped =
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    nalgebra::Cholesky::new(clamped).map(|ch| ch.l())
}

fn soc_nt_scaling(x: &[f64], z: &[f64]) -> Option<(f64, Vec<f64>)> {
    let resx = soc_residual(x);
    let resz = soc_residual(z);
    if resx <= 0.0 || resz <= 0.0 || x[0] <= 0.0 || z[0] <= 0.0 {
        return None;
    }
    let sx = resx.sqrt();
    let sz = resz.sqrt();
    let xh: Vec<f64> = x.iter().map(|v| v / sx).collect();
    let zh: Vec<f64> = z.iter().map(|v| v / sz).collect();
    let gamma = (0.5 * (1.0 + dot(&xh, &zh))).sqrt();
    if !gamma.is_finite() || gamma == 0.0 {
        return None;
    }
    let mut wbar = vec![0.0; x.len()];
    wbar[0] = (xh[0] + zh[0]) / (2.0 * gamma);
    for i in 1..x.len() {
        wbar[i] = (xh[i] - zh[i]) / (2.0 * gamma);
    }
    let eta = (sx / sz).sqrt();
    Some((eta, wbar))
}

/// NT scaling for a PSD block: factors `R` with `R^{-1} X R^{-T} = R^T Z R =
/// diag(lam)`, via Cholesky factors of both sides and an SVD of `Lz^T Lx`.
fn psd_nt_scaling(x: &[f64], z: &[f64], n: usize) -> Option<(RMat, RMat, Vec<f64>)> {
    let xm = unsvec(x, n);
    let zm = unsvec(z, n);
    let lx = robust_cholesky(&xm)?;
    let lz = robust_cholesky(&zm)?;
    let prod = lz.transpose() * &lx;
    let svd = nalgebra::SVD::new(prod, true, true);
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let mut lam = Vec::with_capacity(n);
    let mut sinv_sqrt = RMat::zeros(n, n);
    for i in 0..n {
        let s = svd.singular_values[i];
        if s <= 0.0 || !s.is_finite() {
            return None;
        }
        lam.push(s);
        sinv_sqrt[(i, i)] = 1.0 / s.sqrt();
    }
    let r = &lx * vt.transpose() * &sinv_sqrt;
    let rinv_t = &lz * u * &sinv_sqrt; // R^{-T}
    let rinv = rinv_t.transpose();
    Some((r, rinv, lam))
}
