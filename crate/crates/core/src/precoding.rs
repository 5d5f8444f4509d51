//! Zero-forcing communication precoders, per-subarray sensing beamformers and
//! power-allocation coefficients.
//!
//! Precoders are computed once for the full array and sliced per subarray;
//! switching a subarray off only scales its slice by the activation variable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scene::ArrayGeometry;

/// Smallest accepted eigenvalue ratio of the channel Gram matrix.
const RANK_TOLERANCE: f64 = 1e-12;

/// Pseudo-inverse precoder `H (H^H H)^-1`, which satisfies `H^H W = I`.
pub fn zero_forcing(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let users = h.ncols();
    if users == 0 {
        return Ok(DMatrix::zeros(h.nrows(), 0));
    }
    if users > h.nrows() {
        return Err(Error::SingularChannel { users, ratio: 0.0 });
    }
    let gram = h.adjoint() * h;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio > RANK_TOLERANCE) {
        return Err(Error::SingularChannel { users, ratio });
    }
    let inv = gram
        .cholesky()
        .ok_or(Error::SingularChannel { users, ratio })?
        .inverse();
    Ok(h * inv)
}

/// NFUE precoder for the full array; subarray `s` owns rows `ι_s`.
pub fn zf_near(h_near: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    zero_forcing(h_near)
}

/// FFUE precoder for one small-scale realization. Large-scale gains do not
/// enter the precoder.
pub fn zf_far(g: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    zero_forcing(g)
}

/// Matched (conjugate) unit-norm beamformer for each subarray steering slice.
pub fn sensing_beamformer(geometry: &ArrayGeometry, steering: &DVector<Complex64>) -> Result<Vec<DVector<Complex64>>> {
    (0..geometry.s)
        .map(|s| {
            let v = geometry.slice(steering, s);
            let norm = v.norm();
            if !(norm > 0.0) {
                return Err(Error::Geometry(format!("steering slice of subarray {s} is zero")));
            }
            Ok(v.map(|z| z.conj() / norm))
        })
        .collect()
}

/// Squared norm of every `(subarray, column)` slice of `w`, laid out `[s][k]`.
pub fn slice_norms_sqr(geometry: &ArrayGeometry, w: &DMatrix<Complex64>) -> Vec<Vec<f64>> {
    (0..geometry.s)
        .map(|s| {
            (0..w.ncols())
                .map(|k| w.view((s * geometry.m_s, k), (geometry.m_s, 1)).norm_squared())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub eta_near: Vec<f64>,
    pub eta_far: Vec<f64>,
    pub eta_sense: Vec<f64>,
}

/// Splits `P_t` between sensing and communication.
///
/// A fraction `rho_sense` goes to the sensing streams, equally per subarray.
/// The rest is shared equally by the `K` users, each user's coefficient being
/// identical on every subarray. Everything is then scaled by the largest factor
/// keeping `sum_s gamma_s <= P_t` and `gamma_s <= P_s` at full activation.
pub fn allocate_powers(
    cfg: &SystemConfig,
    psi_near: &[Vec<f64>],
    psi_far: &[Vec<f64>],
    sense_norm_sqr: &[f64],
) -> Result<PowerAllocation> {
    let s_count = sense_norm_sqr.len();
    let p_s = cfg.p_s();
    let sense_each = cfg.rho_sense * cfg.p_t_w / s_count as f64;
    if sense_each > p_s {
        return Err(Error::Config(format!(
            "per-subarray cap P_s = {p_s} W cannot hold the sensing share {sense_each} W"
        )));
    }
    let k = cfg.k_n + cfg.k_f;
    let per_user = if k > 0 { (1.0 - cfg.rho_sense) * cfg.p_t_w / k as f64 } else { 0.0 };
    let column_total = |psi: &[Vec<f64>], k: usize| psi.iter().map(|row| row[k]).sum::<f64>();

    let eta_sense: Vec<f64> = sense_norm_sqr.iter().map(|&n| sense_each / n).collect();
    let eta_near: Vec<f64> = (0..cfg.k_n).map(|k| per_user / column_total(psi_near, k)).collect();
    let eta_far: Vec<f64> = (0..cfg.k_f).map(|j| per_user / column_total(psi_far, j)).collect();

    let gamma: Vec<f64> = (0..s_count)
        .map(|s| {
            eta_near.iter().zip(&psi_near[s]).map(|(e, p)| e * p).sum::<f64>()
                + eta_far.iter().zip(&psi_far[s]).map(|(e, p)| e * p).sum::<f64>()
                + eta_sense[s] * sense_norm_sqr[s]
        })
        .collect();
    let total: f64 = gamma.iter().sum();
    let scale = gamma
        .iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| p_s / g)
        .fold(cfg.p_t_w / total, f64::min);
    let scaled = |v: Vec<f64>| v.into_iter().map(|e| e * scale).collect();
    Ok(PowerAllocation { eta_near: scaled(eta_near), eta_far: scaled(eta_far), eta_sense: scaled(eta_sense) })
}

#[derive(Debug, Clone)]
pub struct PrecoderSet {
    /// Full-array NFUE ZF precoder, `M_t x K_N`.
    pub w_near: DMatrix<Complex64>,
    /// Full-array FFUE ZF precoder per far-field realization.
    pub w_far: Vec<DMatrix<Complex64>>,
    /// Unit-norm sensing beamformer per subarray.
    pub w_sense: Vec<DVector<Complex64>>,
    pub eta_near: Vec<f64>,
    pub eta_far: Vec<f64>,
    pub eta_sense: Vec<f64>,
    /// `Ψ̄[s][k] = ‖w̄_sk‖²`.
    pub psi_near: Vec<Vec<f64>>,
    /// `Ψ̃[s][j] = E‖w̃_sj‖²`, averaged over realizations.
    pub psi_far: Vec<Vec<f64>>,
}

impl PrecoderSet {
    pub fn build(
        cfg: &SystemConfig,
        geometry: &ArrayGeometry,
        h_near: &DMatrix<Complex64>,
        far_realizations: &[DMatrix<Complex64>],
        steering: &DVector<Complex64>,
    ) -> Result<Self> {
        let w_near = zf_near(h_near)?;
        let w_far = far_realizations.par_iter().map(zf_far).collect::<Result<Vec<_>>>()?;
        let w_sense = sensing_beamformer(geometry, steering)?;
        let psi_near = slice_norms_sqr(geometry, &w_near);
        let psi_far = mean_slice_norms(geometry, &w_far, cfg.k_f);
        let sense_norms: Vec<f64> = w_sense.iter().map(|w| w.norm_squared()).collect();
        let alloc = allocate_powers(cfg, &psi_near, &psi_far, &sense_norms)?;
        Ok(Self {
            w_near,
            w_far,
            w_sense,
            eta_near: alloc.eta_near,
            eta_far: alloc.eta_far,
            eta_sense: alloc.eta_sense,
            psi_near,
            psi_far,
        })
    }

    pub fn near_slice(&self, geometry: &ArrayGeometry, s: usize, k: usize) -> DVector<Complex64> {
        self.w_near.view((s * geometry.m_s, k), (geometry.m_s, 1)).column(0).into_owned()
    }

    pub fn far_slice(&self, geometry: &ArrayGeometry, realization: usize, s: usize, j: usize) -> DVector<Complex64> {
        self.w_far[realization].view((s * geometry.m_s, j), (geometry.m_s, 1)).column(0).into_owned()
    }

    /// Writes `subarray,kind,user,norm_sqr` rows for diagnostics.
    pub fn write_norms_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subarray", "kind", "user", "norm_sqr"])?;
        for (s, row) in self.psi_near.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                w.write_record([s.to_string(), "near".into(), k.to_string(), v.to_string()])?;
            }
        }
        for (s, row) in self.psi_far.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                w.write_record([s.to_string(), "far".into(), k.to_string(), v.to_string()])?;
            }
        }
        for (s, v) in self.w_sense.iter().enumerate() {
            w.write_record([s.to_string(), "sense".into(), "0".into(), v.norm_squared().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_slice_norms(geometry: &ArrayGeometry, w_far: &[DMatrix<Complex64>], k_f: usize) -> Vec<Vec<f64>> {
    let mut acc = vec![vec![0.0; k_f]; geometry.s];
    for w in w_far {
        for (row, add) in acc.iter_mut().zip(slice_norms_sqr(geometry, w)) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    let n = w_far.len().max(1) as f64;
    acc.iter_mut().flatten().for_each(|a| *a /= n);
    acc
}
