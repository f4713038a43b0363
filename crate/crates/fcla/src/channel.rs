//! Far-field channel synthesis: propagation deltas, field response vectors,
//! and receiver channel vectors as functions of the antenna placement.

use num_complex::Complex64;

use crate::scenario::{PathSet, Placement, Scenario, ScenarioError, TWO_PI};

pub type CVec = nalgebra::DVector<Complex64>;
pub type CMat = nalgebra::DMatrix<Complex64>;

/// Antenna flattening order shared by every module: element n of ring m maps
/// to index `i = m * n_per_ring + n` (the 1-based `(m-1)N + n` convention).
#[inline]
pub fn flat_index(m: usize, n: usize, n_per_ring: usize) -> usize {
    m * n_per_ring + n
}

/// Ring of flattened antenna index `i`.
#[inline]
pub fn ring_of(i: usize, n_per_ring: usize) -> usize {
    i / n_per_ring
}

/// Signal propagation distance difference between the element at
/// `(phi_mn, z_m)` and the cylinder reference point, along the unit
/// direction `dir`: `t' dir` with `t = (rho cos phi, rho sin phi, z)`.
pub fn propagation_delta(rho: f64, phi_mn: f64, z_m: f64, dir: [f64; 3]) -> f64 {
    rho * phi_mn.cos() * dir[0] + rho * phi_mn.sin() * dir[1] + z_m * dir[2]
}

/// Field response vector at one element: `exp(j 2pi/lambda * delta_l)` per
/// path. Every entry has unit modulus.
pub fn frv(rho: f64, phi_mn: f64, z_m: f64, paths: &PathSet, lambda: f64) -> CVec {
    let k_wave = TWO_PI / lambda;
    CVec::from_fn(paths.len(), |l, _| {
        let chi = propagation_delta(rho, phi_mn, z_m, paths.direction(l));
        // reduce the phase argument before exponentiation; chi can be many
        // wavelengths at large z
        let phase = (k_wave * chi) % TWO_PI;
        Complex64::new(0.0, phase).exp()
    })
}

/// Channel vector of one receiver for the given placement, stored so the
/// scalar received signal is `h^H x`: entry `i` is the conjugate of
/// `sum_l beta_l exp(j 2pi/lambda chi_l(phi_i, z_{ring(i)}))`.
pub fn channel_vector(
    placement: &Placement,
    paths: &PathSet,
    rho: f64,
    lambda: f64,
) -> Result<CVec, ScenarioError> {
    let (m, n) = (placement.rings(), placement.per_ring());
    if m == 0 || n == 0 {
        return Err(ScenarioError::Dimension("empty placement".into()));
    }
    let mut h = CVec::zeros(m * n);
    for ring in 0..m {
        for elem in 0..n {
            let g = frv(rho, placement.phi(ring, elem), placement.z(ring), paths, lambda);
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..paths.len() {
                acc += paths.beta[l] * g[l];
            }
            h[flat_index(ring, elem, n)] = acc.conj();
        }
    }
    Ok(h)
}

/// Channels of all receivers at a placement; `ir[k]` for user k, plus Eve.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub ir: Vec<CVec>,
    pub eve: CVec,
}

impl ChannelSet {
    pub fn synthesize(scenario: &Scenario, placement: &Placement) -> Result<Self, ScenarioError> {
        let rho = scenario.config.rho;
        let lambda = scenario.config.lambda;
        if placement.rings() != scenario.config.m || placement.per_ring() != scenario.config.n {
            return Err(ScenarioError::Dimension(
                "placement does not match the array config".into(),
            ));
        }
        let ir = scenario
            .ir_paths
            .iter()
            .map(|p| channel_vector(placement, p, rho, lambda))
            .collect::<Result<Vec<_>, _>>()?;
        let eve = channel_vector(placement, &scenario.eve_paths, rho, lambda)?;
        Ok(ChannelSet { ir, eve })
    }

    pub fn n_users(&self) -> usize {
        self.ir.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.eve.len()
    }
}
