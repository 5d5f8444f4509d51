//! Communication SINRs, sensing beampattern gain, power consumption and QoS
//! targets for any (relaxed or binary) activation state.
//!
//! Far-field expectations are Monte Carlo means over the ZF realizations held
//! in the [`PrecoderSet`]; near-field quantities are exact.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precoding::PrecoderSet;
use crate::scenario::Scenario;
use crate::scene::{ArrayGeometry, ChannelSet};

/// Relative slack tolerated when auditing constraints.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

/// Activation levels per subarray: `a_bar` (NFUE service), `a_tilde` (FFUE
/// service) and `a` (RF chain / sensing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationState {
    pub a_bar: Vec<f64>,
    pub a_tilde: Vec<f64>,
    pub a: Vec<f64>,
}

impl ActivationState {
    pub fn uniform(s: usize, value: f64) -> Self {
        Self { a_bar: vec![value; s], a_tilde: vec![value; s], a: vec![value; s] }
    }

    pub fn all_on(s: usize) -> Self {
        Self::uniform(s, 1.0)
    }

    pub fn all_off(s: usize) -> Self {
        Self::uniform(s, 0.0)
    }

    /// Binary state with `a_s = min(1, ā_s + ã_s)`.
    pub fn from_binary(a_bar: &[bool], a_tilde: &[bool]) -> Self {
        let to = |v: &[bool]| v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let a = a_bar.iter().zip(a_tilde).map(|(&x, &y)| if x || y { 1.0 } else { 0.0 }).collect();
        Self { a_bar: to(a_bar), a_tilde: to(a_tilde), a }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Stacked `[ā, ã, a]`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.a_bar.iter().chain(&self.a_tilde).chain(&self.a).copied().collect()
    }

    pub fn from_vector(x: &[f64]) -> Self {
        assert_eq!(x.len() % 3, 0, "stacked activation length must be 3S");
        let s = x.len() / 3;
        Self { a_bar: x[..s].to_vec(), a_tilde: x[s..2 * s].to_vec(), a: x[2 * s..].to_vec() }
    }

    pub fn is_binary(&self) -> bool {
        self.to_vector().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Binary state obeying `a_s = min(1, ā_s + ã_s)`.
    pub fn is_consistent_binary(&self) -> bool {
        self.is_binary()
            && (0..self.len()).all(|s| self.a[s] == (self.a_bar[s] + self.a_tilde[s]).min(1.0))
    }

    /// Relaxed coupling `max(ā, ã) <= a <= ā + ã` and the unit box.
    pub fn is_relaxed_valid(&self, tol: f64) -> bool {
        let boxed = self.to_vector().iter().all(|&v| (-tol..=1.0 + tol).contains(&v));
        boxed
            && (0..self.len()).all(|s| {
                let (x, y, a) = (self.a_bar[s], self.a_tilde[s], self.a[s]);
                a >= x - tol && a >= y - tol && a <= x + y + tol
            })
    }

    /// `max_s min(v_s, 1 - v_s)` over all three vectors.
    pub fn binarity_gap(&self) -> f64 {
        self.to_vector().iter().map(|&v| v.min(1.0 - v).max(0.0)).fold(0.0, f64::max)
    }

    /// Number of subarrays with a powered RF chain.
    pub fn active_count(&self) -> usize {
        self.a.iter().filter(|&&v| v >= 0.5).count()
    }
}

/// Far-field expectations and exact near-field inner products used by the
/// SINR and beampattern expressions.
#[derive(Debug, Clone)]
pub struct SecondMoments {
    /// `ρ_kj^{ss'} = ḡ_sk^H E{w̃_sj w̃_s'j^H} ḡ_s'k`, `[k][j]` of `S x S`.
    pub rho: Vec<Vec<DMatrix<Complex64>>>,
    /// `ϱ_kj^{ss'} = E{g̃_sk^H w̃_sj w̃_s'j^H g̃_s'k}`, `[k][j]` of `S x S`.
    pub varrho: Vec<Vec<DMatrix<Complex64>>>,
    /// `E{g̃_sk^H w̃_sk}`, `[k][s]`.
    pub far_mean: Vec<Vec<Complex64>>,
    /// Variance of `g̃_sk^H w̃_sk`, `[k][s]`.
    pub eps: Vec<Vec<f64>>,
    /// `t_ki^s = β_k ‖w̄_si‖²`, `[k][i][s]`.
    pub t: Vec<Vec<Vec<f64>>>,
    /// `E{(v_s^T w̃_sj)(v_s'^T w̃_s'j)^*}`, `[j]` of `S x S`.
    pub far_steer: Vec<DMatrix<Complex64>>,
    /// `ḡ_sk^H w̄_si`, `[k][i][s]`.
    pub near_cross: Vec<Vec<Vec<Complex64>>>,
    /// `|ḡ_sk^H w_s^r|²`, `[k][s]`.
    pub near_sense_leak: Vec<Vec<f64>>,
    /// `v_s^T w̄_sk`, `[k][s]`.
    pub steer_near: Vec<Vec<Complex64>>,
    /// `|v_s^T w_s^r|²`, `[s]`.
    pub steer_sense: Vec<f64>,
    /// `‖w_s^r‖²`, `[s]`.
    pub sense_norm_sqr: Vec<f64>,
    /// `Ψ̄[s][k]`.
    pub psi_bar: Vec<Vec<f64>>,
    /// `Ψ̃[s][j]`.
    pub psi_tilde: Vec<Vec<f64>>,
    pub samples: usize,
}

/// Per-realization accumulators, summed in a fixed order.
#[derive(Clone)]
struct MomentSums {
    rho: Vec<Vec<DMatrix<Complex64>>>,
    varrho: Vec<Vec<DMatrix<Complex64>>>,
    far_steer: Vec<DMatrix<Complex64>>,
}

impl MomentSums {
    fn zeros(k_n: usize, k_f: usize, s: usize) -> Self {
        let z = DMatrix::zeros(s, s);
        Self {
            rho: vec![vec![z.clone(); k_f]; k_n],
            varrho: vec![vec![z.clone(); k_f]; k_f],
            far_steer: vec![z; k_f],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.rho.iter_mut().flatten().zip(other.rho.iter().flatten()) {
            *a += b;
        }
        for (a, b) in self.varrho.iter_mut().flatten().zip(other.varrho.iter().flatten()) {
            *a += b;
        }
        for (a, b) in self.far_steer.iter_mut().zip(&other.far_steer) {
            *a += b;
        }
    }
}

const MOMENT_CHUNK: usize = 16;

fn dot_slice(geometry: &ArrayGeometry, x: &DVector<Complex64>, w: &DMatrix<Complex64>, col: usize, s: usize, conj_x: bool) -> Complex64 {
    let rows = geometry.subarray(s);
    rows.map(|m| if conj_x { x[m].conj() * w[(m, col)] } else { x[m] * w[(m, col)] }).sum()
}

pub fn estimate_second_moments(
    geometry: &ArrayGeometry,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    steering: &DVector<Complex64>,
) -> Result<SecondMoments> {
    let s_count = geometry.s;
    let k_n = channels.h_near.ncols();
    let k_f = channels.beta.len();
    let n = channels.far_realizations.len();
    if k_f > 0 && n < 2 {
        return Err(Error::Estimation(n));
    }
    let near_users: Vec<DVector<Complex64>> = (0..k_n).map(|k| channels.h_near.column(k).into_owned()).collect();

    // Deterministic near-field terms.
    let near_cross = (0..k_n)
        .map(|k| {
            (0..k_n)
                .map(|i| (0..s_count).map(|s| dot_slice(geometry, &near_users[k], &precoders.w_near, i, s, true)).collect())
                .collect()
        })
        .collect();
    let sense_inner = |x: &DVector<Complex64>, s: usize, conj_x: bool| -> Complex64 {
        geometry
            .subarray(s)
            .zip(precoders.w_sense[s].iter())
            .map(|(m, w)| if conj_x { x[m].conj() * w } else { x[m] * w })
            .sum()
    };
    let near_sense_leak = near_users
        .iter()
        .map(|g| (0..s_count).map(|s| sense_inner(g, s, true).norm_sqr()).collect())
        .collect();
    let steer_near = (0..k_n)
        .map(|k| (0..s_count).map(|s| dot_slice(geometry, steering, &precoders.w_near, k, s, false)).collect())
        .collect();
    let steer_sense = (0..s_count).map(|s| sense_inner(steering, s, false).norm_sqr()).collect();
    let sense_norm_sqr = precoders.w_sense.iter().map(|w| w.norm_squared()).collect();
    let t = (0..k_f)
        .map(|k| {
            (0..k_n)
                .map(|i| (0..s_count).map(|s| channels.beta[k] * precoders.psi_near[s][i]).collect())
                .collect()
        })
        .collect();

    // Far-field expectations.
    let sqrt_beta: Vec<f64> = channels.beta.iter().map(|b| b.sqrt()).collect();
    let realization_terms = |r: usize, sums: &mut MomentSums, diag: &mut Vec<Vec<Complex64>>| {
        let h = &channels.far_realizations[r];
        let w = &precoders.w_far[r];
        let mut u = DVector::<Complex64>::zeros(s_count);
        for j in 0..k_f {
            for k in 0..k_n {
                for s in 0..s_count {
                    u[s] = dot_slice(geometry, &near_users[k], w, j, s, true);
                }
                sums.rho[k][j].ger(Complex64::new(1.0, 0.0), &u, &u.conjugate(), Complex64::new(1.0, 0.0));
            }
            for k in 0..k_f {
                let hk = h.column(k).into_owned();
                for s in 0..s_count {
                    u[s] = dot_slice(geometry, &hk, w, j, s, true) * sqrt_beta[k];
                }
                if j == k {
                    diag[k] = u.iter().copied().collect();
                }
                sums.varrho[k][j].ger(Complex64::new(1.0, 0.0), &u, &u.conjugate(), Complex64::new(1.0, 0.0));
            }
            for s in 0..s_count {
                u[s] = dot_slice(geometry, steering, w, j, s, false);
            }
            sums.far_steer[j].ger(Complex64::new(1.0, 0.0), &u, &u.conjugate(), Complex64::new(1.0, 0.0));
        }
    };
    let chunks: Vec<(MomentSums, Vec<Vec<Vec<Complex64>>>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(MOMENT_CHUNK)
        .map(|idx| {
            let mut sums = MomentSums::zeros(k_n, k_f, s_count);
            let mut diags = Vec::with_capacity(idx.len());
            for &r in idx {
                let mut diag = vec![Vec::new(); k_f];
                realization_terms(r, &mut sums, &mut diag);
                diags.push(diag);
            }
            (sums, diags)
        })
        .collect();
    let mut sums = MomentSums::zeros(k_n, k_f, s_count);
    let mut diag_samples = Vec::with_capacity(n);
    for (chunk, diags) in chunks {
        sums.add(&chunk);
        diag_samples.extend(diags);
    }
    let scale = Complex64::new(1.0 / n.max(1) as f64, 0.0);
    let mean = |m: DMatrix<Complex64>| m * scale;
    let rho = sums.rho.into_iter().map(|row| row.into_iter().map(mean).collect()).collect();
    let varrho = sums.varrho.into_iter().map(|row| row.into_iter().map(mean).collect()).collect();
    let far_steer = sums.far_steer.into_iter().map(mean).collect();

    let mut far_mean = vec![vec![Complex64::new(0.0, 0.0); s_count]; k_f];
    let mut eps = vec![vec![0.0; s_count]; k_f];
    for k in 0..k_f {
        for s in 0..s_count {
            let m = diag_samples.iter().map(|d| d[k][s]).sum::<Complex64>() * scale;
            far_mean[k][s] = m;
            eps[k][s] = diag_samples.iter().map(|d| (d[k][s] - m).norm_sqr()).sum::<f64>() / n as f64;
        }
    }

    Ok(SecondMoments {
        rho,
        varrho,
        far_mean,
        eps,
        t,
        far_steer,
        near_cross,
        near_sense_leak,
        steer_near,
        steer_sense,
        sense_norm_sqr,
        psi_bar: precoders.psi_near.clone(),
        psi_tilde: precoders.psi_far.clone(),
        samples: n,
    })
}

/// Signal, interference and noise power of one SINR expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrParts {
    pub signal: f64,
    pub interference: f64,
    pub noise: f64,
}

impl SinrParts {
    pub fn value(&self) -> f64 {
        self.signal / (self.interference + self.noise)
    }
}

/// `|Σ_s c_s x_s|²`.
pub(crate) fn coherent_power(c: &[Complex64], x: &[f64]) -> f64 {
    c.iter().zip(x).map(|(c, &x)| c * x).sum::<Complex64>().norm_sqr()
}

/// `xᵀ Re(M) x` for Hermitian `M`.
pub(crate) fn hermitian_form(m: &DMatrix<Complex64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (s, &xs) in x.iter().enumerate() {
        for (t, &xt) in x.iter().enumerate() {
            acc += xs * xt * m[(s, t)].re;
        }
    }
    acc
}

pub fn nfue_sinr_parts(sc: &Scenario, k: usize, st: &ActivationState) -> SinrParts {
    let m = &sc.moments;
    let p = &sc.precoders;
    let signal = p.eta_near[k] * coherent_power(&m.near_cross[k][k], &st.a_bar);
    let intra: f64 = (0..sc.k_n())
        .filter(|&i| i != k)
        .map(|i| p.eta_near[i] * coherent_power(&m.near_cross[k][i], &st.a_bar))
        .sum();
    let inter: f64 = (0..sc.k_f()).map(|j| p.eta_far[j] * hermitian_form(&m.rho[k][j], &st.a_tilde)).sum();
    let sense: f64 = (0..sc.s()).map(|s| p.eta_sense[s] * st.a[s] * st.a[s] * m.near_sense_leak[k][s]).sum();
    SinrParts { signal, interference: intra + inter + sense, noise: sc.config.noise_power_w }
}

/// Linear SINR of NFUE `k`.
pub fn nfue_sinr(sc: &Scenario, k: usize, st: &ActivationState) -> f64 {
    nfue_sinr_parts(sc, k, st).value()
}

pub fn ffue_sinr_parts(sc: &Scenario, k: usize, st: &ActivationState) -> SinrParts {
    let m = &sc.moments;
    let p = &sc.precoders;
    let s_count = sc.s();
    let signal = p.eta_far[k] * coherent_power(&m.far_mean[k], &st.a_tilde);
    let own: f64 = p.eta_far[k] * (0..s_count).map(|s| st.a_tilde[s] * m.eps[k][s]).sum::<f64>();
    let near: f64 = (0..sc.k_n())
        .map(|i| p.eta_near[i] * (0..s_count).map(|s| st.a_bar[s] * st.a_bar[s] * m.t[k][i][s]).sum::<f64>())
        .sum();
    let cross: f64 = (0..sc.k_f())
        .filter(|&j| j != k)
        .map(|j| p.eta_far[j] * hermitian_form(&m.varrho[k][j], &st.a_tilde))
        .sum();
    let beta = sc.channels.beta[k];
    let sense: f64 =
        (0..s_count).map(|s| p.eta_sense[s] * st.a[s] * st.a[s] * beta * m.sense_norm_sqr[s]).sum();
    SinrParts { signal, interference: own + near + cross + sense, noise: sc.config.noise_power_w }
}

/// Linear SINR of FFUE `k`.
pub fn ffue_sinr(sc: &Scenario, k: usize, st: &ActivationState) -> f64 {
    ffue_sinr_parts(sc, k, st).value()
}

/// The three beampattern contributions: NFUE streams, FFUE streams, sensing.
pub fn beampattern_terms(sc: &Scenario, st: &ActivationState) -> [f64; 3] {
    let m = &sc.moments;
    let p = &sc.precoders;
    let near = (0..sc.k_n()).map(|k| p.eta_near[k] * coherent_power(&m.steer_near[k], &st.a_bar)).sum();
    let far = (0..sc.k_f()).map(|j| p.eta_far[j] * hermitian_form(&m.far_steer[j], &st.a_tilde)).sum();
    let sense = (0..sc.s()).map(|s| p.eta_sense[s] * st.a[s] * st.a[s] * m.steer_sense[s]).sum();
    [near, far, sense]
}

/// Expected transmit power density toward the target.
pub fn beampattern_gain(sc: &Scenario, st: &ActivationState) -> f64 {
    beampattern_terms(sc, st).iter().sum()
}

/// Transmit power `gamma_s` of every subarray.
pub fn subarray_transmit_power(sc: &Scenario, st: &ActivationState) -> Vec<f64> {
    sc.gamma_coefficients()
        .iter()
        .enumerate()
        .map(|(s, &(a, b, c))| {
            a * st.a_bar[s] * st.a_bar[s] + b * st.a_tilde[s] * st.a_tilde[s] + c * st.a[s] * st.a[s]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    /// `Σ_s gamma_s / zeta`.
    pub amplifier_w: f64,
    /// `2 P_syn`.
    pub synthesizer_w: f64,
    /// `Σ_s a_s M_s P_ct`.
    pub circuit_w: f64,
    pub total_w: f64,
}

pub fn power_breakdown(sc: &Scenario, st: &ActivationState) -> PowerBreakdown {
    let cfg = &sc.config;
    let amplifier_w = subarray_transmit_power(sc, st).iter().sum::<f64>() / cfg.zeta;
    let synthesizer_w = 2.0 * cfg.p_syn_w;
    let circuit_w = st.a.iter().sum::<f64>() * sc.geometry.m_s as f64 * cfg.p_ct_w;
    PowerBreakdown { amplifier_w, synthesizer_w, circuit_w, total_w: amplifier_w + synthesizer_w + circuit_w }
}

/// Total consumed power `P_C` in watts.
pub fn total_power(sc: &Scenario, st: &ActivationState) -> f64 {
    power_breakdown(sc, st).total_w
}

/// Minimum SINRs (linear) and beampattern floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosTargets {
    pub r_bar: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub kappa: f64,
}

impl QosTargets {
    /// Targets that every state satisfies.
    pub fn trivial(k_n: usize, k_f: usize) -> Self {
        Self { r_bar: vec![0.0; k_n], r_tilde: vec![0.0; k_f], kappa: 0.0 }
    }
}

/// Floors at `qos_fraction` times the full-activation values.
pub fn derive_qos_targets(sc: &Scenario) -> QosTargets {
    let on = ActivationState::all_on(sc.s());
    let f = sc.config.qos_fraction;
    QosTargets {
        r_bar: (0..sc.k_n()).map(|k| f * nfue_sinr(sc, k, &on)).collect(),
        r_tilde: (0..sc.k_f()).map(|k| f * ffue_sinr(sc, k, &on)).collect(),
        kappa: f * beampattern_gain(sc, &on),
    }
}

/// Exact constraint slacks of a state; negative entries are violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub power_w: f64,
    /// `P_t - Σ_s gamma_s`.
    pub total_transmit_slack_w: f64,
    /// `P_s - gamma_s`.
    pub subarray_slack_w: Vec<f64>,
    /// `SINR_k - R̄_k`.
    pub nfue_slack: Vec<f64>,
    /// `SINR_k - R̃_k`.
    pub ffue_slack: Vec<f64>,
    /// `g_sen - kappa`.
    pub beampattern_slack: f64,
    pub feasible: bool,
}

pub fn audit(sc: &Scenario, targets: &QosTargets, st: &ActivationState) -> Audit {
    let cfg = &sc.config;
    let gamma = subarray_transmit_power(sc, st);
    let total: f64 = gamma.iter().sum();
    let p_s = cfg.p_s();
    let nfue: Vec<(f64, f64)> = (0..sc.k_n()).map(|k| (nfue_sinr(sc, k, st), targets.r_bar[k])).collect();
    let ffue: Vec<(f64, f64)> = (0..sc.k_f()).map(|k| (ffue_sinr(sc, k, st), targets.r_tilde[k])).collect();
    let gain = beampattern_gain(sc, st);
    let tol = AUDIT_TOLERANCE;
    let feasible = total <= cfg.p_t_w * (1.0 + tol)
        && gamma.iter().all(|&g| g <= p_s * (1.0 + tol))
        && nfue.iter().chain(&ffue).all(|&(v, floor)| v >= floor * (1.0 - tol))
        && gain >= targets.kappa * (1.0 - tol);
    Audit {
        power_w: total_power(sc, st),
        total_transmit_slack_w: cfg.p_t_w - total,
        subarray_slack_w: gamma.iter().map(|g| p_s - g).collect(),
        nfue_slack: nfue.iter().map(|(v, f)| v - f).collect(),
        ffue_slack: ffue.iter().map(|(v, f)| v - f).collect(),
        beampattern_slack: gain - targets.kappa,
        feasible,
    }
}

/// Human-readable metric summary of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nfue_sinr_db: Vec<f64>,
    pub ffue_sinr_db: Vec<f64>,
    pub beampattern_gain: f64,
    pub subarray_transmit_w: Vec<f64>,
    pub power: PowerBreakdown,
}

pub fn report(sc: &Scenario, st: &ActivationState) -> MetricReport {
    let db = |x: f64| 10.0 * x.log10();
    MetricReport {
        nfue_sinr_db: (0..sc.k_n()).map(|k| db(nfue_sinr(sc, k, st))).collect(),
        ffue_sinr_db: (0..sc.k_f()).map(|k| db(ffue_sinr(sc, k, st))).collect(),
        beampattern_gain: beampattern_gain(sc, st),
        subarray_transmit_w: subarray_transmit_power(sc, st),
        power: power_breakdown(sc, st),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scenario(k_n: usize, k_f: usize, seed: u64) -> Scenario {
        let cfg = SystemConfig { k_n, k_f, ..SystemConfig::default() }.with_random_placement(seed);
        Scenario::build(&cfg).unwrap()
    }

    #[test]
    fn t_needs_no_expectation() {
        let sc = scenario(2, 2, 3);
        for k in 0..2 {
            for i in 0..2 {
                for s in 0..sc.s() {
                    let w = sc.precoders.near_slice(&sc.geometry, s, i);
                    assert_eq!(sc.moments.t[k][i][s], sc.channels.beta[k] * w.norm_squared());
                }
            }
        }
    }

    #[test]
    fn deterministic_far_channel_has_zero_variance() {
        let mut sc = scenario(1, 1, 1);
        let first = sc.channels.far_realizations[0].clone();
        for r in sc.channels.far_realizations.iter_mut() {
            *r = first.clone();
        }
        sc.precoders.w_far = sc.channels.far_realizations.iter().map(|g| crate::precoding::zf_far(g).unwrap()).collect();
        let m = estimate_second_moments(&sc.geometry, &sc.channels, &sc.precoders, &sc.steering).unwrap();
        for k in 0..m.eps.len() {
            for s in 0..m.eps[k].len() {
                assert!(m.eps[k][s] <= 1e-24 * m.far_mean[k][s].norm_sqr());
            }
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let mut sc = scenario(1, 1, 1);
        sc.channels.far_realizations.truncate(1);
        sc.precoders.w_far.truncate(1);
        let err = estimate_second_moments(&sc.geometry, &sc.channels, &sc.precoders, &sc.steering).unwrap_err();
        assert!(matches!(err, Error::Estimation(1)));
    }

    #[test]
    fn split_sample_agreement() {
        // 8 antennas, 2 FFUEs, 10^4 draws: the two halves agree on ϱ_kk^ss.
        let cfg = SystemConfig {
            m_x: 4,
            m_y: 2,
            m_s: 4,
            s: 2,
            k_n: 0,
            k_f: 2,
            mc_samples: 10_000,
            ..SystemConfig::default()
        }
        .with_random_placement(8);
        let sc = Scenario::build(&cfg).unwrap();
        let half = |range: std::ops::Range<usize>| {
            let mut ch = sc.channels.clone();
            ch.far_realizations = ch.far_realizations[range.clone()].to_vec();
            let mut p = sc.precoders.clone();
            p.w_far = p.w_far[range].to_vec();
            estimate_second_moments(&sc.geometry, &ch, &p, &sc.steering).unwrap()
        };
        let a = half(0..5_000);
        let b = half(5_000..10_000);
        for k in 0..2 {
            for s in 0..2 {
                let x = a.varrho[k][k][(s, s)].re;
                let y = b.varrho[k][k][(s, s)].re;
                assert!((x / y - 1.0).abs() < 0.02, "k={k} s={s}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn moments_are_hermitian() {
        let sc = scenario(2, 2, 5);
        let m = &sc.moments;
        for mat in m.rho.iter().flatten().chain(m.varrho.iter().flatten()).chain(&m.far_steer) {
            assert!((mat - mat.adjoint()).iter().all(|z| z.norm() <= 1e-12 * mat.norm()));
        }
        assert!(m.eps.iter().flatten().all(|&e| e >= 0.0));
    }

    #[test]
    fn single_nfue_sinr_is_eta_over_noise() {
        let mut sc = scenario(1, 0, 2);
        sc.precoders.eta_sense.iter_mut().for_each(|e| *e = 0.0);
        let on = ActivationState::all_on(sc.s());
        let expected = sc.precoders.eta_near[0] / sc.config.noise_power_w;
        assert_relative_eq!(nfue_sinr(&sc, 0, &on), expected, max_relative = 1e-10);
    }

    #[test]
    fn zero_state_metrics() {
        let sc = scenario(2, 2, 4);
        let off = ActivationState::all_off(sc.s());
        for k in 0..2 {
            assert_eq!(nfue_sinr(&sc, k, &off), 0.0);
            assert_eq!(ffue_sinr(&sc, k, &off), 0.0);
        }
        assert_eq!(beampattern_gain(&sc, &off), 0.0);
        assert_eq!(total_power(&sc, &off), 0.1);
    }

    #[test]
    fn zf_cancels_intra_group_interference_at_full_activation() {
        for seed in 0..5 {
            let sc = scenario(2, 1, seed);
            let on = ActivationState::all_on(sc.s());
            for k in 0..2 {
                let i = 1 - k;
                let leak = coherent_power(&sc.moments.near_cross[k][i], &on.a_bar);
                let own = coherent_power(&sc.moments.near_cross[k][k], &on.a_bar);
                assert!(leak <= 1e-16, "leak {leak}");
                assert!(leak / own <= 1e-12);
            }
        }
    }

    #[test]
    fn ffue_sensing_term_with_unit_beamformer() {
        let sc = scenario(0, 1, 6);
        let a_only = ActivationState { a_bar: vec![0.0; 4], a_tilde: vec![0.0; 4], a: vec![1.0; 4] };
        let parts = ffue_sinr_parts(&sc, 0, &a_only);
        let expected: f64 = sc.precoders.eta_sense.iter().map(|e| e * sc.channels.beta[0]).sum();
        assert_relative_eq!(parts.interference, expected, max_relative = 1e-12);
    }

    #[test]
    fn ffue_numerator_matches_zf_identity() {
        // Σ_s h_sk^H w_sk = 1 in every realization, so the coherent mean is β_k.
        let sc = scenario(0, 1, 9);
        let on = ActivationState::all_on(sc.s());
        let parts = ffue_sinr_parts(&sc, 0, &on);
        let beta = sc.channels.beta[0];
        assert_relative_eq!(parts.signal / sc.precoders.eta_far[0], beta, max_relative = 1e-10);
    }

    #[test]
    fn beampattern_sensing_only() {
        let mut sc = scenario(1, 1, 7);
        sc.precoders.eta_near[0] = 0.0;
        sc.precoders.eta_far[0] = 0.0;
        let on = ActivationState::all_on(sc.s());
        let expected: f64 = (0..sc.s())
            .map(|s| sc.precoders.eta_sense[s] * sc.geometry.slice(&sc.steering, s).norm_squared())
            .sum();
        assert_relative_eq!(beampattern_gain(&sc, &on), expected, max_relative = 1e-12);
    }

    #[test]
    fn beampattern_full_activation_resummed() {
        // Direct re-summation of the covariance form: Σ_k η̄_k |vᵀ w̄_k|²
        // + Σ_j η̃_j mean_r |vᵀ w̃_j^(r)|² + Σ_s η_s |v_sᵀ w_s^r|².
        let sc = scenario(2, 2, 12);
        let on = ActivationState::all_on(sc.s());
        let v = &sc.steering;
        let p = &sc.precoders;
        let mut expected = 0.0;
        for k in 0..2 {
            expected += p.eta_near[k] * (v.transpose() * p.w_near.column(k))[(0, 0)].norm_sqr();
        }
        for j in 0..2 {
            let mean: f64 = p.w_far.iter().map(|w| (v.transpose() * w.column(j))[(0, 0)].norm_sqr()).sum::<f64>()
                / p.w_far.len() as f64;
            expected += p.eta_far[j] * mean;
        }
        for s in 0..sc.s() {
            let vs = sc.geometry.slice(v, s);
            expected += p.eta_sense[s] * (vs.transpose() * &p.w_sense[s])[(0, 0)].norm_sqr();
        }
        assert_relative_eq!(beampattern_gain(&sc, &on), expected, max_relative = 1e-10);
    }

    #[test]
    fn full_activation_power_term_by_term() {
        let sc = scenario(1, 1, 2);
        let on = ActivationState::all_on(sc.s());
        let cfg = &sc.config;
        let p = &sc.precoders;
        let mut gamma_total = 0.0;
        for s in 0..sc.s() {
            gamma_total += p.eta_near[0] * sc.precoders.near_slice(&sc.geometry, s, 0).norm_squared();
            let far: f64 = (0..p.w_far.len())
                .map(|r| p.far_slice(&sc.geometry, r, s, 0).norm_squared())
                .sum::<f64>()
                / p.w_far.len() as f64;
            gamma_total += p.eta_far[0] * far;
            gamma_total += p.eta_sense[s] * p.w_sense[s].norm_squared();
        }
        let expected = gamma_total / cfg.zeta + 2.0 * cfg.p_syn_w + (cfg.m_t() as f64) * cfg.p_ct_w;
        assert_relative_eq!(total_power(&sc, &on), expected, max_relative = 1e-12);
        // The allocation fills P_t exactly at full activation here.
        assert_relative_eq!(gamma_total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn qos_floors_scale_with_fraction() {
        let sc = scenario(1, 1, 3);
        let base = derive_qos_targets(&sc);
        let mut half = sc.clone();
        half.config.qos_fraction = 0.35;
        let t = derive_qos_targets(&half);
        assert_relative_eq!(t.kappa * 2.0, base.kappa, max_relative = 1e-12);
        assert_relative_eq!(t.r_bar[0] * 2.0, base.r_bar[0], max_relative = 1e-12);
        assert_relative_eq!(t.r_tilde[0] * 2.0, base.r_tilde[0], max_relative = 1e-12);
        let on = ActivationState::all_on(sc.s());
        assert_relative_eq!(base.r_bar[0], 0.7 * nfue_sinr(&sc, 0, &on), max_relative = 1e-15);
    }

    #[test]
    fn full_fraction_puts_all_on_on_the_boundary() {
        let mut sc = scenario(1, 1, 3);
        sc.config.qos_fraction = 1.0;
        let t = derive_qos_targets(&sc);
        let a = audit(&sc, &t, &ActivationState::all_on(sc.s()));
        assert!(a.feasible);
        assert_eq!(a.nfue_slack[0], 0.0);
        assert_eq!(a.beampattern_slack, 0.0);
    }

    #[test]
    fn mc_estimates_stabilize() {
        let at = |mc| {
            let cfg = SystemConfig { mc_samples: mc, ..SystemConfig::default() }.with_random_placement(21);
            let sc = Scenario::build(&cfg).unwrap();
            let on = ActivationState::all_on(sc.s());
            (ffue_sinr(&sc, 0, &on), beampattern_gain(&sc, &on), nfue_sinr(&sc, 0, &on))
        };
        let (a, b) = (at(400), at(800));
        let bound = 3.0 / 400f64.sqrt();
        assert!((a.0 / b.0 - 1.0).abs() < bound);
        assert!((a.1 / b.1 - 1.0).abs() < bound);
        assert!((a.2 / b.2 - 1.0).abs() < bound);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn power_is_monotone(
            seed in 0u64..4,
            x in proptest::collection::vec(0.0f64..1.0, 12),
            coord in 0usize..12,
            bump in 0.0f64..1.0,
        ) {
            let sc = scenario(1, 1, seed);
            let lo = ActivationState::from_vector(&x);
            let mut y = x.clone();
            y[coord] = (y[coord] + bump).min(1.0);
            let hi = ActivationState::from_vector(&y);
            prop_assert!(total_power(&sc, &hi) >= total_power(&sc, &lo));
        }

        #[test]
        fn binary_states_are_consistent(bits in proptest::collection::vec(any::<bool>(), 8)) {
            let st = ActivationState::from_binary(&bits[..4], &bits[4..]);
            prop_assert!(st.is_consistent_binary());
            prop_assert!(st.is_relaxed_valid(0.0));
            prop_assert_eq!(ActivationState::from_vector(&st.to_vector()), st);
        }
    }
}
