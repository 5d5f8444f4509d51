//! Array geometry, near-field and far-field channels, and the target steering
//! vector.
//!
//! Elements are indexed symmetrically about the array center: element
//! `(ix, iy)` sits at `((ix - (M_x-1)/2) d, (iy - (M_y-1)/2) d)`. The flat
//! index runs over `ix` fastest, so column `k` of the near-field channel
//! matrix is `[g(1,1), ..., g(M_x,1), ..., g(M_x,M_y)]`. Subarray `s` owns the
//! contiguous flat range `s*M_s .. (s+1)*M_s`.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{Position, SystemConfig, FFUE_DISTANCE_RANGE_M};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub m_x: usize,
    pub m_y: usize,
    pub m_s: usize,
    pub s: usize,
    pub spacing_m: f64,
}

impl ArrayGeometry {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        if cfg.m_x * cfg.m_y != cfg.s * cfg.m_s || cfg.m_s == 0 {
            return Err(Error::Config(format!(
                "{}x{} array cannot be cut into {} subarrays of {}",
                cfg.m_x, cfg.m_y, cfg.s, cfg.m_s
            )));
        }
        Ok(Self { m_x: cfg.m_x, m_y: cfg.m_y, m_s: cfg.m_s, s: cfg.s, spacing_m: cfg.spacing_m })
    }

    pub fn m_t(&self) -> usize {
        self.m_x * self.m_y
    }

    pub fn flat_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.m_x && iy < self.m_y);
        ix + self.m_x * iy
    }

    pub fn grid_index(&self, flat: usize) -> (usize, usize) {
        (flat % self.m_x, flat / self.m_x)
    }

    /// Element offsets from the array center, in units of the spacing.
    pub fn element_offset(&self, flat: usize) -> (f64, f64) {
        let (ix, iy) = self.grid_index(flat);
        (
            ix as f64 - (self.m_x as f64 - 1.0) / 2.0,
            iy as f64 - (self.m_y as f64 - 1.0) / 2.0,
        )
    }

    /// Flat antenna indices of subarray `s` (zero based).
    pub fn subarray(&self, s: usize) -> Range<usize> {
        s * self.m_s..(s + 1) * self.m_s
    }

    pub fn slice<'a>(&self, v: &'a DVector<Complex64>, s: usize) -> DVectorView<'a, Complex64> {
        v.rows(s * self.m_s, self.m_s)
    }
}

/// Distance from element `(m_x, m_y)` (offsets in spacing units) to a point
/// at range `r`, elevation `theta` and azimuth `phi`.
pub fn near_field_distance(r: f64, theta: f64, phi: f64, m_x: f64, m_y: f64, d: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Geometry(format!("range must be positive, got {r}")));
    }
    let omega = (m_x * m_x + m_y * m_y) * d * d;
    let radicand =
        r * r - 2.0 * r * m_x * d * theta.cos() * phi.sin() - 2.0 * r * m_y * d * theta.sin() + omega;
    if !(radicand > 0.0) {
        return Err(Error::Geometry(format!(
            "point at r={r}, theta={theta}, phi={phi} coincides with element ({m_x}, {m_y})"
        )));
    }
    Ok(radicand.sqrt())
}

/// Spherical-wavefront response of every element toward `pos`:
/// `lambda / (4 pi r_m) * exp(-j 2 pi r_m / lambda)`.
pub fn near_field_response(geometry: &ArrayGeometry, wavelength: f64, pos: &Position) -> Result<DVector<Complex64>> {
    let k0 = 2.0 * PI / wavelength;
    let mut out = DVector::zeros(geometry.m_t());
    for (i, g) in out.iter_mut().enumerate() {
        let (mx, my) = geometry.element_offset(i);
        let dist = near_field_distance(pos.r_m, pos.theta_rad, pos.phi_rad, mx, my, geometry.spacing_m)?;
        *g = Complex64::from_polar(wavelength / (4.0 * PI * dist), -k0 * dist);
    }
    Ok(out)
}

/// Channel between the array and NFUE `user`.
pub fn near_field_channel(geometry: &ArrayGeometry, cfg: &SystemConfig, user: usize) -> Result<DVector<Complex64>> {
    let pos = cfg
        .nfue_params
        .get(user)
        .ok_or_else(|| Error::Config(format!("no NFUE with index {user}")))?;
    near_field_response(geometry, cfg.wavelength_m, pos)
}

/// Large-scale fading `10^-0.53 / d^2` of an FFUE at distance `d_m`.
pub fn far_field_large_scale(d_m: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::Domain(format!("FFUE distance must be positive, got {d_m}")));
    }
    let (lo, hi) = FFUE_DISTANCE_RANGE_M;
    if !(lo..=hi).contains(&d_m) {
        log::warn!("FFUE distance {d_m} m lies outside [{lo}, {hi}] m");
    }
    Ok(10f64.powf(-0.53) / (d_m * d_m))
}

/// Draws one `M_t x K_F` small-scale fading matrix with i.i.d. CN(0, 1)
/// entries (real and imaginary parts each N(0, 1/2)). Realization `index` of
/// a given seed always yields the same matrix.
pub fn sample_far_field(seed: u64, index: usize, m_t: usize, k_f: usize) -> DMatrix<Complex64> {
    let mut rng = rng::stream(seed, Stream::FarField(index as u64));
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(m_t, k_f, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(scale * re, scale * im)
    })
}

/// Steering vector toward the sensing target.
pub fn steering_vector(geometry: &ArrayGeometry, cfg: &SystemConfig) -> Result<DVector<Complex64>> {
    near_field_response(geometry, cfg.wavelength_m, &cfg.target)
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// `M_t x K_N` near-field channel matrix.
    pub h_near: DMatrix<Complex64>,
    /// `mc_samples` draws of the `M_t x K_F` unit-variance far-field matrix.
    pub far_realizations: Vec<DMatrix<Complex64>>,
    /// Large-scale gains of the FFUEs.
    pub beta: Vec<f64>,
}

impl ChannelSet {
    pub fn build(geometry: &ArrayGeometry, cfg: &SystemConfig) -> Result<Self> {
        let m_t = geometry.m_t();
        let mut h_near = DMatrix::zeros(m_t, cfg.k_n);
        for k in 0..cfg.k_n {
            h_near.set_column(k, &near_field_channel(geometry, cfg, k)?);
        }
        let beta = cfg
            .ffue_distances_m
            .iter()
            .map(|&d| far_field_large_scale(d))
            .collect::<Result<Vec<_>>>()?;
        let far_realizations = if cfg.k_f == 0 {
            Vec::new()
        } else {
            (0..cfg.mc_samples)
                .into_par_iter()
                .map(|i| sample_far_field(cfg.rng_seed, i, m_t, cfg.k_f))
                .collect()
        };
        Ok(Self { h_near, far_realizations, beta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn geometry(m_x: usize, m_y: usize, m_s: usize, d: f64) -> ArrayGeometry {
        ArrayGeometry { m_x, m_y, m_s, s: m_x * m_y / m_s, spacing_m: d }
    }

    #[test]
    fn distance_at_center_is_range() {
        let r = near_field_distance(10.0, FRAC_PI_3, 0.0, 0.0, 0.0, 0.005).unwrap();
        assert_eq!(r, 10.0);
        for (t, p) in [(0.1, -1.2), (1.4, 0.9), (0.7, 0.0)] {
            assert_relative_eq!(near_field_distance(7.5, t, p, 0.0, 0.0, 0.01).unwrap(), 7.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn distance_mirror_symmetry() {
        for &(mx, my, phi) in &[(3.0, -2.0, 0.4), (1.5, 0.5, -1.1), (7.0, 3.0, 0.05)] {
            let a = near_field_distance(5.0, 0.8, phi, mx, my, 0.005).unwrap();
            let b = near_field_distance(5.0, 0.8, -phi, -mx, my, 0.005).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn distance_matches_high_precision_value() {
        // mpmath, 50 digits.
        let r = near_field_distance(5.0, FRAC_PI_4, FRAC_PI_6, 3.0, -2.0, 0.005).unwrap();
        assert_relative_eq!(r, 5.001_799_942_973_495_6, max_relative = 1e-14);
    }

    #[test]
    fn distance_rejects_point_on_element() {
        // r sin(theta) = m_y d puts the point on element (0, 1).
        let err = near_field_distance(0.005, std::f64::consts::FRAC_PI_2, 0.0, 0.0, 1.0, 0.005);
        assert!(matches!(err, Err(Error::Geometry(_))));
        assert!(near_field_distance(-1.0, 0.3, 0.3, 0.0, 0.0, 0.005).is_err());
    }

    #[test]
    fn partition_covers_array() {
        let g = geometry(8, 6, 4, 0.005);
        let mut seen = vec![0; g.m_t()];
        for s in 0..g.s {
            let r = g.subarray(s);
            assert_eq!(r.len(), g.m_s);
            for i in r {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn grid_round_trip_and_center() {
        let g = geometry(4, 3, 4, 0.005);
        for i in 0..g.m_t() {
            let (ix, iy) = g.grid_index(i);
            assert_eq!(g.flat_index(ix, iy), i);
        }
        assert_eq!(g.element_offset(0), (-1.5, -1.0));
        assert_eq!(g.element_offset(11), (1.5, 1.0));
    }

    #[test]
    fn channel_amplitude_law() {
        let g = geometry(4, 4, 4, 0.005);
        let pos = Position::new(6.0, 0.6, -0.3);
        let h = near_field_response(&g, 0.01, &pos).unwrap();
        for i in 0..g.m_t() {
            let (mx, my) = g.element_offset(i);
            let r = near_field_distance(6.0, 0.6, -0.3, mx, my, 0.005).unwrap();
            assert_relative_eq!(h[i].norm(), 0.01 / (4.0 * PI * r), max_relative = 1e-13);
        }
    }

    #[test]
    fn equal_distance_elements_match() {
        // Broadside user: elements mirrored in x see the same distance.
        let g = geometry(4, 4, 4, 0.005);
        let h = near_field_response(&g, 0.01, &Position::new(5.0, 0.4, 0.0)).unwrap();
        for iy in 0..4 {
            for ix in 0..2 {
                assert_eq!(h[g.flat_index(ix, iy)], h[g.flat_index(3 - ix, iy)]);
            }
        }
    }

    #[test]
    fn two_by_two_channel_matches_oracle() {
        // Independent mpmath evaluation of the element formula.
        let g = geometry(2, 2, 2, 0.005);
        let h = near_field_response(&g, 0.01, &Position::new(5.0, FRAC_PI_4, 0.0)).unwrap();
        let expected = [
            (7.055_837_209_705_874_5e-5, -1.425_969_874_244_855_4e-4),
            (7.055_837_209_705_874_5e-5, -1.425_969_874_244_855_4e-4),
            (7.077_634_494_392_046_7e-5, 1.426_145_719_132_849_3e-4),
            (7.077_634_494_392_046_7e-5, 1.426_145_719_132_849_3e-4),
        ];
        for (z, &(re, im)) in h.iter().zip(&expected) {
            assert_relative_eq!(z.re, re, max_relative = 1e-9);
            assert_relative_eq!(z.im, im, max_relative = 1e-9);
        }
    }

    #[test]
    fn channel_norm_decreases_with_range() {
        let g = geometry(8, 8, 8, 0.005);
        let mut last = f64::INFINITY;
        for r in [2.0, 5.0, 10.0, 20.0, 40.0] {
            let n = near_field_response(&g, 0.01, &Position::new(r, 0.5, 0.2)).unwrap().norm();
            assert!(n < last);
            last = n;
        }
    }

    #[test]
    fn large_scale_values() {
        assert_relative_eq!(far_field_large_scale(110.0).unwrap(), 2.439_015_889_806_930_3e-5, max_relative = 1e-12);
        assert_relative_eq!(far_field_large_scale(160.0).unwrap(), 1.152_816_104_166_556_9e-5, max_relative = 1e-12);
        assert!(far_field_large_scale(0.0).is_err());
        let mut last = f64::INFINITY;
        for d in (110..=160).step_by(5) {
            let b = far_field_large_scale(d as f64).unwrap();
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn far_field_statistics() {
        let m = sample_far_field(42, 0, 1000, 100);
        let n = m.len() as f64;
        let mean: Complex64 = m.iter().sum::<Complex64>() / n;
        let var = m.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n;
        // Standard error of the complex mean is 1/sqrt(n).
        assert!(mean.norm() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
        let re_var = m.iter().map(|z| (z.re - mean.re).powi(2)).sum::<f64>() / n;
        assert!((re_var - 0.5).abs() < 0.01);
    }

    #[test]
    fn far_field_is_deterministic() {
        assert_eq!(sample_far_field(9, 3, 16, 2), sample_far_field(9, 3, 16, 2));
        assert_ne!(sample_far_field(9, 3, 16, 2), sample_far_field(9, 4, 16, 2));
        assert_ne!(sample_far_field(9, 3, 16, 2), sample_far_field(10, 3, 16, 2));
    }

    #[test]
    fn steering_equals_user_channel_at_same_position() {
        let mut cfg = SystemConfig::default();
        cfg.target = cfg.nfue_params[0];
        let g = ArrayGeometry::new(&cfg).unwrap();
        assert_eq!(steering_vector(&g, &cfg).unwrap(), near_field_channel(&g, &cfg, 0).unwrap());
    }

    #[test]
    fn steering_slices_reconstruct() {
        let cfg = SystemConfig::default();
        let g = ArrayGeometry::new(&cfg).unwrap();
        let v = steering_vector(&g, &cfg).unwrap();
        let mut joined = Vec::new();
        for s in 0..g.s {
            joined.extend(g.slice(&v, s).iter().copied());
        }
        assert_eq!(joined, v.as_slice());
    }

    #[test]
    fn channel_set_is_reproducible() {
        let cfg = SystemConfig::default().with_random_placement(11);
        let g = ArrayGeometry::new(&cfg).unwrap();
        let a = ChannelSet::build(&g, &cfg).unwrap();
        let b = ChannelSet::build(&g, &cfg).unwrap();
        assert_eq!(a.h_near, b.h_near);
        assert_eq!(a.far_realizations, b.far_realizations);
        assert_eq!(a.far_realizations.len(), cfg.mc_samples);
        assert!(a.beta.iter().all(|&b| b > 0.0));
    }
}
