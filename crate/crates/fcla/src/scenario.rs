//! Array geometry, multipath scenarios, feasibility validation, and seeded
//! scenario sampling.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::kv::{KvDoc, KvError};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("serialization: {0}")]
    Kv(#[from] KvError),
}

/// Cylindrical array geometry: M rings of N elements at radius `rho`,
/// rings sliding over the vertical region `[0, a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayConfig {
    /// Ring count M.
    pub m: usize,
    /// Elements per ring N.
    pub n: usize,
    /// Ring radius in meters.
    pub rho: f64,
    /// Carrier wavelength in meters.
    pub lambda: f64,
    /// Minimum angular gap between adjacent elements on a ring (radians).
    pub phi_th: f64,
    /// Minimum vertical gap between adjacent rings (meters).
    pub z_th: f64,
    /// Vertical region height (meters).
    pub a: f64,
}

impl ArrayConfig {
    /// Defaults mirror the reference simulation setup: lambda = 0.1 m,
    /// z_th = lambda/2, rho = lambda, phi_th chosen so the chord between
    /// adjacent elements is at least lambda/2, and a vertical region of
    /// six wavelengths.
    pub fn new(m: usize, n: usize) -> Result<Self, ScenarioError> {
        let lambda = 0.1;
        let rho = lambda;
        let cfg = ArrayConfig {
            m,
            n,
            rho,
            lambda,
            phi_th: default_phi_th(rho, lambda),
            z_th: lambda / 2.0,
            a: 6.0 * lambda,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.m < 1 || self.n < 1 {
            return Err(ScenarioError::InvalidConfig(
                "ring count and elements per ring must be >= 1".into(),
            ));
        }
        if !(self.rho > 0.0) || !(self.lambda > 0.0) {
            return Err(ScenarioError::InvalidConfig(
                "radius and wavelength must be positive".into(),
            ));
        }
        if !(self.phi_th > 0.0) || !(self.z_th > 0.0) {
            return Err(ScenarioError::InvalidConfig(
                "spacing thresholds must be positive".into(),
            ));
        }
        if self.n as f64 * self.phi_th > TWO_PI + 1e-12 {
            return Err(ScenarioError::InvalidConfig(format!(
                "no feasible angular layout: N*phi_th = {} > 2*pi",
                self.n as f64 * self.phi_th
            )));
        }
        if (self.m as f64 - 1.0) * self.z_th > self.a + 1e-12 {
            return Err(ScenarioError::InvalidConfig(format!(
                "vertical region too small: (M-1)*z_th = {} > A = {}",
                (self.m as f64 - 1.0) * self.z_th,
                self.a
            )));
        }
        Ok(())
    }

    /// Total antenna count `N_t = M * N`.
    pub fn n_t(&self) -> usize {
        self.m * self.n
    }
}

/// Minimum angular gap putting adjacent elements at least half a wavelength
/// apart along the chord, clamped to the arcsin domain for small radii.
pub fn default_phi_th(rho: f64, lambda: f64) -> f64 {
    2.0 * (lambda / (4.0 * rho)).min(1.0).asin()
}

/// Antenna placement: per-element ring angles (row m, column n, ascending
/// within each ring) and per-ring heights (ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    phi: Vec<Vec<f64>>,
    z: Vec<f64>,
}

impl Placement {
    pub fn new(phi: Vec<Vec<f64>>, z: Vec<f64>) -> Result<Self, ScenarioError> {
        if phi.len() != z.len() {
            return Err(ScenarioError::Dimension(format!(
                "{} angle rings vs {} heights",
                phi.len(),
                z.len()
            )));
        }
        let n = phi.first().map_or(0, |r| r.len());
        for (m, ring) in phi.iter().enumerate() {
            if ring.len() != n {
                return Err(ScenarioError::Dimension(format!(
                    "ring {m} has {} elements, expected {n}",
                    ring.len()
                )));
            }
            for w in ring.windows(2) {
                if !(w[1] >= w[0]) {
                    return Err(ScenarioError::InvalidParam(format!(
                        "ring {m} angles not ascending"
                    )));
                }
            }
            if ring.iter().any(|v| !v.is_finite()) {
                return Err(ScenarioError::InvalidParam("non-finite angle".into()));
            }
        }
        for w in z.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(ScenarioError::InvalidParam("heights not ascending".into()));
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::InvalidParam("non-finite height".into()));
        }
        Ok(Placement { phi, z })
    }

    pub fn rings(&self) -> usize {
        self.z.len()
    }

    pub fn per_ring(&self) -> usize {
        self.phi.first().map_or(0, |r| r.len())
    }

    pub fn phi(&self, m: usize, n: usize) -> f64 {
        self.phi[m][n]
    }

    pub fn z(&self, m: usize) -> f64 {
        self.z[m]
    }

    pub fn phi_rows(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn z_all(&self) -> &[f64] {
        &self.z
    }

    /// Angles flattened in antenna order `i = m * N + n`.
    pub fn flat_phi(&self) -> Vec<f64> {
        self.phi.iter().flatten().copied().collect()
    }

    pub fn with_flat_phi(&self, flat: &[f64]) -> Result<Self, ScenarioError> {
        let n = self.per_ring();
        let phi: Vec<Vec<f64>> = flat.chunks(n).map(|c| c.to_vec()).collect();
        Placement::new(phi, self.z.clone())
    }

    pub fn with_z(&self, z: Vec<f64>) -> Result<Self, ScenarioError> {
        Placement::new(self.phi.clone(), z)
    }

    /// Euclidean distance between two placements over all coordinates,
    /// angles weighted by the ring radius so everything is in meters.
    pub fn distance(&self, other: &Placement, rho: f64) -> f64 {
        let mut acc = 0.0;
        for (ra, rb) in self.phi.iter().zip(other.phi.iter()) {
            for (a, b) in ra.iter().zip(rb.iter()) {
                acc += (rho * (a - b)).powi(2);
            }
        }
        for (a, b) in self.z.iter().zip(other.z.iter()) {
            acc += (a - b).powi(2);
        }
        acc.sqrt()
    }
}

/// Multipath description of one transmitter-receiver link.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    /// Elevation angles, radians in [0, pi].
    pub theta: Vec<f64>,
    /// Azimuth angles, radians in [0, 2pi].
    pub phi_az: Vec<f64>,
    /// Complex path gains.
    pub beta: Vec<Complex64>,
}

impl PathSet {
    pub fn new(
        theta: Vec<f64>,
        phi_az: Vec<f64>,
        beta: Vec<Complex64>,
    ) -> Result<Self, ScenarioError> {
        if theta.is_empty() || theta.len() != phi_az.len() || theta.len() != beta.len() {
            return Err(ScenarioError::Dimension(
                "path arrays must be nonempty and equal length".into(),
            ));
        }
        if theta
            .iter()
            .any(|t| !(*t >= 0.0 && *t <= std::f64::consts::PI))
        {
            return Err(ScenarioError::InvalidParam(
                "elevation outside [0, pi]".into(),
            ));
        }
        if phi_az.iter().any(|p| !(*p >= 0.0 && *p <= TWO_PI)) {
            return Err(ScenarioError::InvalidParam(
                "azimuth outside [0, 2pi]".into(),
            ));
        }
        Ok(PathSet {
            theta,
            phi_az,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Unit direction vector of path `l`.
    pub fn direction(&self, l: usize) -> [f64; 3] {
        let (st, ct) = self.theta[l].sin_cos();
        let (sp, cp) = self.phi_az[l].sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Full system instance: geometry, per-receiver multipath, noise powers,
/// power budget, and the secrecy cap.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ArrayConfig,
    pub ir_paths: Vec<PathSet>,
    pub eve_paths: PathSet,
    /// Per-receiver noise powers in watts.
    pub sigma2_ir: Vec<f64>,
    pub sigma2_eve: f64,
    /// Transmit power budget in watts.
    pub power: f64,
    /// Eve's rate cap in bits.
    pub gamma_th_e: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate()?;
        if self.ir_paths.is_empty() || self.ir_paths.len() != self.sigma2_ir.len() {
            return Err(ScenarioError::Dimension(
                "one noise power per receiver required".into(),
            ));
        }
        if !(self.power >= 0.0) {
            return Err(ScenarioError::InvalidParam("negative power budget".into()));
        }
        if !(self.gamma_th_e >= 0.0) {
            return Err(ScenarioError::InvalidParam(
                "secrecy cap must be >= 0 bits".into(),
            ));
        }
        if self.sigma2_ir.iter().any(|s| !(*s > 0.0)) || !(self.sigma2_eve > 0.0) {
            return Err(ScenarioError::InvalidParam(
                "noise powers must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.ir_paths.len()
    }

    /// Linear SINR cap for Eve, `2^gamma - 1`.
    pub fn gamma_th_e_linear(&self) -> f64 {
        self.gamma_th_e.exp2() - 1.0
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set_usize("config.m", self.config.m);
        doc.set_usize("config.n", self.config.n);
        doc.set_f64("config.rho", self.config.rho);
        doc.set_f64("config.lambda", self.config.lambda);
        doc.set_f64("config.phi_th", self.config.phi_th);
        doc.set_f64("config.z_th", self.config.z_th);
        doc.set_f64("config.a", self.config.a);
        doc.set_usize("k", self.n_users());
        doc.set_f64_slice("sigma2_ir", &self.sigma2_ir);
        doc.set_f64("sigma2_eve", self.sigma2_eve);
        doc.set_f64("power", self.power);
        doc.set_f64("gamma_th_e", self.gamma_th_e);
        let put = |prefix: &str, p: &PathSet, doc: &mut KvDoc| {
            doc.set_usize(&format!("{prefix}.l"), p.len());
            doc.set_f64_slice(&format!("{prefix}.theta"), &p.theta);
            doc.set_f64_slice(&format!("{prefix}.phi_az"), &p.phi_az);
            doc.set_c64_slice(&format!("{prefix}.beta"), &p.beta);
        };
        for (k, p) in self.ir_paths.iter().enumerate() {
            put(&format!("ir{k}"), p, &mut doc);
        }
        put("eve", &self.eve_paths, &mut doc);
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self, ScenarioError> {
        let config = ArrayConfig {
            m: doc.get_usize("config.m")?,
            n: doc.get_usize("config.n")?,
            rho: doc.get_f64("config.rho")?,
            lambda: doc.get_f64("config.lambda")?,
            phi_th: doc.get_f64("config.phi_th")?,
            z_th: doc.get_f64("config.z_th")?,
            a: doc.get_f64("config.a")?,
        };
        let k = doc.get_usize("k")?;
        let get_paths = |prefix: &str| -> Result<PathSet, ScenarioError> {
            let l = doc.get_usize(&format!("{prefix}.l"))?;
            let theta = doc.get_f64_slice(&format!("{prefix}.theta"))?;
            let phi_az = doc.get_f64_slice(&format!("{prefix}.phi_az"))?;
            let beta = doc.get_c64_slice(&format!("{prefix}.beta"))?;
            if theta.len() != l {
                return Err(ScenarioError::Dimension(format!(
                    "{prefix}: declared {l} paths, found {}",
                    theta.len()
                )));
            }
            PathSet::new(theta, phi_az, beta)
        };
        let mut ir_paths = Vec::with_capacity(k);
        for u in 0..k {
            ir_paths.push(get_paths(&format!("ir{u}"))?);
        }
        let sc = Scenario {
            config,
            ir_paths,
            eve_paths: get_paths("eve")?,
            sigma2_ir: doc.get_f64_slice("sigma2_ir")?,
            sigma2_eve: doc.get_f64("sigma2_eve")?,
            power: doc.get_f64("power")?,
            gamma_th_e: doc.get_f64("gamma_th_e")?,
        };
        sc.validate()?;
        Ok(sc)
    }
}

/// Inputs for randomized scenario sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingParams {
    pub config: ArrayConfig,
    /// Number of legitimate receivers.
    pub k: usize,
    /// Paths per link (shared by all links).
    pub paths_per_link: usize,
    /// Reference path gain at 1 m, linear.
    pub c0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// User disk center, meters from the transmitter at the origin.
    pub disk_center: (f64, f64),
    pub disk_radius: f64,
    /// Elevation range, radians.
    pub theta_range: (f64, f64),
    pub sigma2_ir: f64,
    pub sigma2_eve: f64,
    pub power: f64,
    /// Eve's rate cap in bits.
    pub gamma_th_e: f64,
}

impl Default for SamplingParams {
    /// Reference setup: K = 3 users, L = 4 paths, C0 = -30 dB, alpha = 2.3,
    /// user disk centered at (40, 0) m with radius 10 m, elevations uniform
    /// on [pi/6, 5pi/6], noise -90 dBm, power 3 dBW, Eve's SINR cap -10 dB.
    fn default() -> Self {
        SamplingParams {
            config: ArrayConfig::new(3, 2).expect("default config is feasible"),
            k: 3,
            paths_per_link: 4,
            c0: 1e-3,
            alpha: 2.3,
            disk_center: (40.0, 0.0),
            disk_radius: 10.0,
            theta_range: (std::f64::consts::PI / 6.0, 5.0 * std::f64::consts::PI / 6.0),
            sigma2_ir: 1e-12,
            sigma2_eve: 1e-12,
            power: 10f64.powf(0.3),
            gamma_th_e: (1.0f64 + 0.1).log2(),
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate()?;
        if self.k < 1 {
            return Err(ScenarioError::InvalidParam("K must be >= 1".into()));
        }
        if self.paths_per_link < 1 {
            return Err(ScenarioError::InvalidParam("L must be >= 1".into()));
        }
        if !(self.disk_radius >= 0.0) {
            return Err(ScenarioError::InvalidParam("negative disk radius".into()));
        }
        if !(self.c0 > 0.0) || !self.alpha.is_finite() {
            return Err(ScenarioError::InvalidParam("bad path-loss constants".into()));
        }
        if !(self.sigma2_ir > 0.0) || !(self.sigma2_eve > 0.0) {
            return Err(ScenarioError::InvalidParam("noise must be positive".into()));
        }
        if !(self.power >= 0.0) || !(self.gamma_th_e >= 0.0) {
            return Err(ScenarioError::InvalidParam(
                "power and secrecy cap must be nonnegative".into(),
            ));
        }
        let (lo, hi) = self.theta_range;
        if !(lo >= 0.0 && hi <= std::f64::consts::PI && lo <= hi) {
            return Err(ScenarioError::InvalidParam(
                "elevation range outside [0, pi]".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a scenario: receiver positions uniform on the disk, per-path gains
/// circular complex Gaussian with variance `C0 d^-alpha / L`, elevations and
/// azimuths uniform on their ranges. Eve's link is generated the same way as
/// the legitimate ones. Pure function of `(seed, params)`.
pub fn sample_scenario(seed: u64, params: &SamplingParams) -> Result<Scenario, ScenarioError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = params.paths_per_link;
    let draw_link = |rng: &mut ChaCha8Rng| -> PathSet {
        // position uniform on the disk, distance from the transmitter origin
        let r = params.disk_radius * rng.random_range(0.0..1.0f64).sqrt();
        let ang = rng.random_range(0.0..TWO_PI);
        let pos = (
            params.disk_center.0 + r * ang.cos(),
            params.disk_center.1 + r * ang.sin(),
        );
        let d = (pos.0 * pos.0 + pos.1 * pos.1).sqrt();
        let var = params.c0 * d.powf(-params.alpha) / l as f64;
        let gauss = Normal::new(0.0, (var / 2.0).sqrt()).expect("positive std");
        let mut theta = Vec::with_capacity(l);
        let mut phi_az = Vec::with_capacity(l);
        let mut beta = Vec::with_capacity(l);
        for _ in 0..l {
            theta.push(rng.random_range(params.theta_range.0..=params.theta_range.1));
            phi_az.push(rng.random_range(0.0..TWO_PI));
            beta.push(Complex64::new(gauss.sample(rng), gauss.sample(rng)));
        }
        PathSet {
            theta,
            phi_az,
            beta,
        }
    };
    let ir_paths: Vec<PathSet> = (0..params.k).map(|_| draw_link(&mut rng)).collect();
    let eve_paths = draw_link(&mut rng);
    let sc = Scenario {
        config: params.config.clone(),
        ir_paths,
        eve_paths,
        sigma2_ir: vec![params.sigma2_ir; params.k],
        sigma2_eve: params.sigma2_eve,
        power: params.power,
        gamma_th_e: params.gamma_th_e,
    };
    sc.validate()?;
    Ok(sc)
}

/// Placement constraint identifiers, matching the spacing/box constraint
/// family of the optimization problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Angular gap between adjacent elements on a ring (including wrap).
    AngularGap,
    /// Angle box [0, 2pi].
    AngleRange,
    /// Vertical gap between adjacent rings.
    VerticalGap,
    /// Height box [0, A].
    HeightRange,
}

#[derive(Clone, Debug)]
pub struct Violation {
    pub kind: ConstraintKind,
    /// Ring index, and element index where applicable.
    pub ring: usize,
    pub element: Option<usize>,
    /// Signed slack: negative means violated by that amount.
    pub slack: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    /// Most negative slack, or 0 when feasible.
    pub fn worst_slack(&self) -> f64 {
        self.violations
            .iter()
            .map(|v| v.slack)
            .fold(0.0, f64::min)
    }
}

/// Checks every spacing and box constraint, reporting each violation with
/// its signed slack. Uses `tol` as the violation threshold (exact zero gaps
/// at the boundary are feasible).
pub fn validate_placement_tol(
    config: &ArrayConfig,
    p: &Placement,
    tol: f64,
) -> Result<FeasibilityReport, ScenarioError> {
    if p.rings() != config.m || p.per_ring() != config.n {
        return Err(ScenarioError::Dimension(format!(
            "placement is {}x{}, config wants {}x{}",
            p.rings(),
            p.per_ring(),
            config.m,
            config.n
        )));
    }
    let mut report = FeasibilityReport::default();
    for m in 0..config.m {
        for n in 0..config.n {
            let phi = p.phi(m, n);
            let slack = phi.min(TWO_PI - phi);
            if slack < -tol {
                report.violations.push(Violation {
                    kind: ConstraintKind::AngleRange,
                    ring: m,
                    element: Some(n),
                    slack,
                });
            }
        }
        if config.n > 1 {
            for n in 0..config.n {
                let gap = if n + 1 < config.n {
                    p.phi(m, n + 1) - p.phi(m, n)
                } else {
                    p.phi(m, 0) + TWO_PI - p.phi(m, config.n - 1)
                };
                let slack = gap - config.phi_th;
                if slack < -tol {
                    report.violations.push(Violation {
                        kind: ConstraintKind::AngularGap,
                        ring: m,
                        element: Some(n),
                        slack,
                    });
                }
            }
        }
    }
    for m in 0..config.m {
        let z = p.z(m);
        let slack = z.min(config.a - z);
        if slack < -tol {
            report.violations.push(Violation {
                kind: ConstraintKind::HeightRange,
                ring: m,
                element: None,
                slack,
            });
        }
        if m + 1 < config.m {
            let slack = p.z(m + 1) - p.z(m) - config.z_th;
            if slack < -tol {
                report.violations.push(Violation {
                    kind: ConstraintKind::VerticalGap,
                    ring: m,
                    element: None,
                    slack,
                });
            }
        }
    }
    Ok(report)
}

pub fn validate_placement(
    config: &ArrayConfig,
    p: &Placement,
) -> Result<FeasibilityReport, ScenarioError> {
    validate_placement_tol(config, p, 1e-12)
}

/// Uniform feasible starting placement: equal angular spacing per ring with
/// a ring-dependent rotation offset breaking the symmetry, heights spread
/// evenly over the vertical region.
pub fn initial_placement(config: &ArrayConfig) -> Result<Placement, ScenarioError> {
    config.validate()?;
    let (m, n) = (config.m, config.n);
    let mut phi = Vec::with_capacity(m);
    for ring in 0..m {
        let offset = (ring + 1) as f64 * std::f64::consts::PI / (m * n) as f64;
        let row: Vec<f64> = (0..n)
            .map(|j| offset + TWO_PI * j as f64 / n as f64)
            .collect();
        phi.push(row);
    }
    let z: Vec<f64> = if m == 1 {
        vec![0.0]
    } else {
        (0..m)
            .map(|j| config.a * j as f64 / (m as f64 - 1.0))
            .collect()
    };
    let p = Placement::new(phi, z)?;
    let report = validate_placement(config, &p)?;
    if !report.is_feasible() {
        return Err(ScenarioError::InvalidConfig(format!(
            "uniform layout infeasible (worst slack {})",
            report.worst_slack()
        )));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_config_is_feasible() {
        let cfg = ArrayConfig::new(3, 2).unwrap();
        assert_eq!(cfg.n_t(), 6);
        assert!(cfg.phi_th > 0.0);
        // chord between adjacent elements at the minimum gap is lambda/2
        let chord = 2.0 * cfg.rho * (cfg.phi_th / 2.0).sin();
        assert_relative_eq!(chord, cfg.lambda / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_angular_layout_rejected() {
        let mut cfg = ArrayConfig::new(2, 3).unwrap();
        cfg.phi_th = TWO_PI / 3.0 + 1e-6;
        assert!(cfg.validate().is_err());
        assert!(initial_placement(&cfg).is_err());
    }

    #[test]
    fn initial_placement_matches_uniform_construction() {
        // single ring of four: quarter-turn spacing plus the symmetry offset
        let mut cfg = ArrayConfig::new(1, 4).unwrap();
        cfg.a = 0.0;
        cfg.z_th = 0.05;
        let p = initial_placement(&cfg).unwrap();
        let offset = std::f64::consts::PI / 4.0;
        for j in 0..4 {
            assert_relative_eq!(
                p.phi(0, j),
                offset + j as f64 * std::f64::consts::FRAC_PI_2,
                epsilon = 1e-12
            );
        }
        assert_eq!(p.z_all(), &[0.0]);

        // three rings spread over [0, A]
        let cfg = ArrayConfig {
            a: 0.6,
            ..ArrayConfig::new(3, 2).unwrap()
        };
        let p = initial_placement(&cfg).unwrap();
        assert_relative_eq!(p.z(0), 0.0);
        assert_relative_eq!(p.z(1), 0.3, epsilon = 1e-12);
        assert_relative_eq!(p.z(2), 0.6, epsilon = 1e-12);
        assert!(validate_placement(&cfg, &p).unwrap().is_feasible());
    }

    #[test]
    fn validate_reports_signed_slacks() {
        let cfg = ArrayConfig::new(1, 2).unwrap();
        // both elements at the same angle: wrap gap is fine, adjacent gap is not
        let p = Placement::new(vec![vec![1.0, 1.0]], vec![0.0]).unwrap();
        let report = validate_placement(&cfg, &p).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ConstraintKind::AngularGap);
        assert_relative_eq!(report.violations[0].slack, -cfg.phi_th, epsilon = 1e-12);

        let cfg3 = ArrayConfig::new(3, 2).unwrap();
        let base = initial_placement(&cfg3).unwrap();
        let p = base
            .with_z(vec![0.0, cfg3.z_th / 2.0, cfg3.z_th])
            .unwrap();
        let report = validate_placement(&cfg3, &p).unwrap();
        let gaps: Vec<&Violation> = report
            .violations
            .iter()
            .filter(|v| v.kind == ConstraintKind::VerticalGap)
            .collect();
        assert_eq!(gaps.len(), 2);
        assert_eq!(gaps[0].ring, 0);
        assert_relative_eq!(gaps[0].slack, -cfg3.z_th / 2.0, epsilon = 1e-12);

        let mismatch = Placement::new(vec![vec![0.0, 1.0]], vec![0.0]).unwrap();
        assert!(validate_placement(&cfg3, &mismatch).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_validates() {
        let params = SamplingParams::default();
        let a = sample_scenario(7, &params).unwrap();
        let b = sample_scenario(7, &params).unwrap();
        assert_eq!(a, b);
        let c = sample_scenario(8, &params).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.n_users(), 3);
        assert_eq!(a.ir_paths[0].len(), 4);
        // the secrecy cap invariant: linear cap is exactly 2^gamma - 1
        assert_relative_eq!(
            a.gamma_th_e_linear(),
            a.gamma_th_e.exp2() - 1.0,
            epsilon = 0.0
        );
        assert_relative_eq!(a.gamma_th_e_linear(), 0.1, epsilon = 1e-12);

        assert!(sample_scenario(1, &SamplingParams {
            k: 0,
            ..SamplingParams::default()
        })
        .is_err());
        assert!(sample_scenario(1, &SamplingParams {
            disk_radius: -1.0,
            ..SamplingParams::default()
        })
        .is_err());
    }

    #[test]
    fn degenerate_disk_gain_variance_matches_closed_form() {
        // radius 0 puts every user at the disk center: d = 40 exactly, and
        // the per-path gain variance is C0 d^-alpha / L. Estimate it with a
        // large L; the chi-square concentration keeps the error ~1/sqrt(L).
        let params = SamplingParams {
            k: 1,
            paths_per_link: 20_000,
            disk_radius: 0.0,
            ..SamplingParams::default()
        };
        let sc = sample_scenario(123, &params).unwrap();
        let var_expected = params.c0 * 40.0f64.powf(-params.alpha) / 20_000.0;
        let var_emp: f64 = sc.ir_paths[0]
            .beta
            .iter()
            .map(|b| b.norm_sqr())
            .sum::<f64>()
            / 20_000.0;
        assert!(
            (var_emp / var_expected - 1.0).abs() < 0.05,
            "empirical {var_emp} vs expected {var_expected}"
        );
    }

    #[test]
    fn default_disk_keeps_users_within_band() {
        // distances from the origin to a disk at (40, 0) with radius 10
        let params = SamplingParams::default();
        for seed in [7, 8, 9] {
            let sc = sample_scenario(seed, &params).unwrap();
            // distance is invisible after sampling, but the gain scale bounds it:
            // var in [C0*50^-a, C0*30^-a] / L
            let lo = params.c0 * 50.0f64.powf(-params.alpha) / 4.0;
            let hi = params.c0 * 30.0f64.powf(-params.alpha) / 4.0;
            for p in sc.ir_paths.iter().chain(std::iter::once(&sc.eve_paths)) {
                let var_emp: f64 =
                    p.beta.iter().map(|b| b.norm_sqr()).sum::<f64>() / p.len() as f64;
                // 4 samples of a chi-square: allow a wide band
                assert!(var_emp > lo * 1e-3 && var_emp < hi * 1e3);
            }
        }
    }

    #[test]
    fn scenario_kv_round_trip() {
        let sc = sample_scenario(42, &SamplingParams::default()).unwrap();
        let doc = sc.to_kv();
        let back = Scenario::from_kv(&KvDoc::parse(&doc.to_text()).unwrap()).unwrap();
        assert_eq!(sc, back);
    }
}
