use nalgebra::DVector;
use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::Result;
use crate::metrics::{estimate_second_moments, SecondMoments};
use crate::precoding::PrecoderSet;
use crate::scene::{steering_vector, ArrayGeometry, ChannelSet};

/// Everything the metrics and the solver need for one problem instance:
/// geometry, channels, steering vector, precoders, power coefficients and
/// second moments. Immutable once built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub geometry: ArrayGeometry,
    pub channels: ChannelSet,
    pub steering: DVector<Complex64>,
    pub precoders: PrecoderSet,
    pub moments: SecondMoments,
}

impl Scenario {
    pub fn build(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let geometry = ArrayGeometry::new(config)?;
        let channels = ChannelSet::build(&geometry, config)?;
        let steering = steering_vector(&geometry, config)?;
        let precoders =
            PrecoderSet::build(config, &geometry, &channels.h_near, &channels.far_realizations, &steering)?;
        let moments = estimate_second_moments(&geometry, &channels, &precoders, &steering)?;
        Ok(Self { config: config.clone(), geometry, channels, steering, precoders, moments })
    }

    pub fn s(&self) -> usize {
        self.geometry.s
    }

    pub fn k_n(&self) -> usize {
        self.config.k_n
    }

    pub fn k_f(&self) -> usize {
        self.config.k_f
    }

    /// Per-subarray coefficients `(A_s, B_s, C_s)` such that
    /// `gamma_s = A_s ā_s² + B_s ã_s² + C_s a_s²`.
    pub fn gamma_coefficients(&self) -> Vec<(f64, f64, f64)> {
        let p = &self.precoders;
        (0..self.s())
            .map(|s| {
                let near = p.eta_near.iter().zip(&p.psi_near[s]).map(|(e, x)| e * x).sum();
                let far = p.eta_far.iter().zip(&p.psi_far[s]).map(|(e, x)| e * x).sum();
                (near, far, p.eta_sense[s] * self.moments.sense_norm_sqr[s])
            })
            .collect()
    }
}
