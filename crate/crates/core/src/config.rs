//! System configuration and its flat JSON form.
//!
//! All values are SI: meters, radians, watts. The JSON loader also accepts
//! powers tagged `_dBm` (`P_t_dBm`, `noise_power_dBm`, ...) and converts them
//! on load. User and target placements may be omitted, in which case they are
//! drawn from `rng_seed` (see [`SystemConfig::with_random_placement`]).

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Polar position of a user or target relative to the array center:
/// range, elevation `theta` and azimuth `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position {
    pub r_m: f64,
    pub theta_rad: f64,
    pub phi_rad: f64,
}

impl Position {
    pub fn new(r_m: f64, theta_rad: f64, phi_rad: f64) -> Self {
        Self { r_m, theta_rad, phi_rad }
    }
}

impl From<[f64; 3]> for Position {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Position> for [f64; 3] {
    fn from(p: Position) -> Self {
        [p.r_m, p.theta_rad, p.phi_rad]
    }
}

/// Allowed FFUE distance range for the large-scale fading model.
pub const FFUE_DISTANCE_RANGE_M: (f64, f64) = (110.0, 160.0);

/// Converts a dBm value to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    #[serde(rename = "M_x")]
    pub m_x: usize,
    #[serde(rename = "M_y")]
    pub m_y: usize,
    #[serde(rename = "M_s")]
    pub m_s: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub wavelength_m: f64,
    pub spacing_m: f64,
    #[serde(rename = "K_N")]
    pub k_n: usize,
    #[serde(rename = "K_F")]
    pub k_f: usize,
    pub nfue_params: Vec<Position>,
    pub ffue_distances_m: Vec<f64>,
    pub target: Position,
    #[serde(rename = "noise_power_W")]
    pub noise_power_w: f64,
    #[serde(rename = "P_t_W")]
    pub p_t_w: f64,
    /// Per-subarray transmit cap. `None` means `1.5 * P_t / S`.
    #[serde(rename = "P_s_W", skip_serializing_if = "Option::is_none")]
    pub p_s_w: Option<f64>,
    #[serde(rename = "P_syn_W")]
    pub p_syn_w: f64,
    #[serde(rename = "P_ct_W")]
    pub p_ct_w: f64,
    pub zeta: f64,
    pub qos_fraction: f64,
    /// Share of `P_t` reserved for the sensing streams.
    pub rho_sense: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_cap: f64,
    pub tol_eps1: f64,
    #[serde(rename = "I1")]
    pub max_iterations: usize,
    pub mc_samples: usize,
    pub rng_seed: u64,
    /// Range interval used when NFUE and target ranges are drawn at random.
    pub nfue_region_m: (f64, f64),
}

impl Default for SystemConfig {
    /// Desk-scale instance: 4x4 array, four 4-element subarrays, one user of
    /// each kind, placements drawn from seed 0.
    fn default() -> Self {
        let mut cfg = Self {
            m_x: 4,
            m_y: 4,
            m_s: 4,
            s: 4,
            wavelength_m: 0.01,
            spacing_m: 0.005,
            k_n: 1,
            k_f: 1,
            nfue_params: Vec::new(),
            ffue_distances_m: Vec::new(),
            target: Position::new(10.0, PI / 4.0, 0.0),
            noise_power_w: dbm_to_watts(-104.0),
            p_t_w: 1.0,
            p_s_w: None,
            p_syn_w: 0.05,
            p_ct_w: 0.0482,
            zeta: 0.35,
            qos_fraction: 0.7,
            rho_sense: 0.3,
            penalty_init: 0.01,
            penalty_growth: 1.5,
            penalty_cap: 1e3,
            tol_eps1: 1e-3,
            max_iterations: 50,
            mc_samples: 200,
            rng_seed: 0,
            nfue_region_m: (5.0, 20.0),
        };
        cfg.resample_placement();
        cfg
    }
}

impl SystemConfig {
    pub fn m_t(&self) -> usize {
        self.m_x * self.m_y
    }

    pub fn k(&self) -> usize {
        self.k_n + self.k_f
    }

    /// Effective per-subarray power cap in watts.
    pub fn p_s(&self) -> f64 {
        self.p_s_w.unwrap_or(1.5 * self.p_t_w / self.s as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m_x == 0 || self.m_y == 0 || self.m_s == 0 || self.s == 0 {
            return bad("array dimensions must be positive".into());
        }
        if self.m_t() != self.s * self.m_s {
            return bad(format!(
                "M_t = M_x*M_y = {} must equal S*M_s = {}",
                self.m_t(),
                self.s * self.m_s
            ));
        }
        if !(self.wavelength_m > 0.0) || !(self.spacing_m > 0.0) {
            return bad("wavelength and spacing must be positive".into());
        }
        if self.nfue_params.len() != self.k_n {
            return bad(format!("nfue_params has {} entries, K_N = {}", self.nfue_params.len(), self.k_n));
        }
        if self.ffue_distances_m.len() != self.k_f {
            return bad(format!(
                "ffue_distances_m has {} entries, K_F = {}",
                self.ffue_distances_m.len(),
                self.k_f
            ));
        }
        if self.k_n > self.m_t() || self.k_f > self.m_t() {
            return bad("more users than antennas".into());
        }
        for (name, p) in [
            ("noise_power", self.noise_power_w),
            ("P_t", self.p_t_w),
            ("P_s", self.p_s()),
            ("P_syn", self.p_syn_w),
            ("P_ct", self.p_ct_w),
        ] {
            if !(p > 0.0) || !p.is_finite() {
                return bad(format!("{name} must be a positive finite power, got {p}"));
            }
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta must lie in (0, 1], got {}", self.zeta));
        }
        if !(self.qos_fraction > 0.0 && self.qos_fraction <= 1.0) {
            return bad(format!("qos_fraction must lie in (0, 1], got {}", self.qos_fraction));
        }
        if !(0.0..1.0).contains(&self.rho_sense) || (self.rho_sense == 0.0 && self.k() == 0) {
            return bad(format!("rho_sense must lie in [0, 1), got {}", self.rho_sense));
        }
        if !(self.penalty_init > 0.0) || !(self.penalty_growth >= 1.0) || self.penalty_cap < self.penalty_init {
            return bad("penalty_init > 0, penalty_growth >= 1 and penalty_cap >= penalty_init required".into());
        }
        if !(self.tol_eps1 > 0.0) || self.max_iterations == 0 {
            return bad("tol_eps1 > 0 and I1 >= 1 required".into());
        }
        if self.k_f > 0 && self.mc_samples < 2 {
            return Err(Error::Estimation(self.mc_samples));
        }
        let t = &self.target;
        if !(t.r_m > 0.0) {
            return bad("target range must be positive".into());
        }
        if !(t.theta_rad > 0.0 && t.theta_rad < FRAC_PI_2) || !(t.phi_rad > -FRAC_PI_2 && t.phi_rad < FRAC_PI_2) {
            return bad(format!(
                "target angles out of range: theta {} not in (0, pi/2) or phi {} not in (-pi/2, pi/2)",
                t.theta_rad, t.phi_rad
            ));
        }
        if self.nfue_params.iter().any(|u| !(u.r_m > 0.0)) {
            return bad("NFUE ranges must be positive".into());
        }
        if self.ffue_distances_m.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Domain("FFUE distances must be positive".into()));
        }
        Ok(())
    }

    /// Redraws NFUE positions, FFUE distances and the target position from
    /// `rng_seed`, keeping the user counts.
    pub fn resample_placement(&mut self) {
        let mut rng = rng::stream(self.rng_seed, Stream::Placement);
        let (lo, hi) = self.nfue_region_m;
        let draw = |rng: &mut rand_chacha::ChaCha20Rng| {
            let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let theta = open_uniform(rng, 0.0, FRAC_PI_2);
            let phi = open_uniform(rng, -FRAC_PI_2, FRAC_PI_2);
            Position::new(r, theta, phi)
        };
        self.nfue_params = (0..self.k_n).map(|_| draw(&mut rng)).collect();
        self.target = draw(&mut rng);
        let (dlo, dhi) = FFUE_DISTANCE_RANGE_M;
        self.ffue_distances_m = (0..self.k_f).map(|_| rng.random_range(dlo..dhi)).collect();
    }

    /// Copy with a new seed and placements drawn from it.
    pub fn with_random_placement(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.rng_seed = seed;
        cfg.resample_placement();
        cfg
    }

    /// Reshapes the array for a new subarray count at fixed `M_t`.
    pub fn with_subarrays(&self, s: usize) -> Result<Self> {
        let m_t = self.m_t();
        if s == 0 || m_t % s != 0 {
            return Err(Error::Config(format!("S = {s} does not divide M_t = {m_t}")));
        }
        let mut cfg = self.clone();
        cfg.s = s;
        cfg.m_s = m_t / s;
        Ok(cfg)
    }

    /// Changes user counts; placements are redrawn from the current seed.
    pub fn with_users(&self, k_n: usize, k_f: usize) -> Self {
        let mut cfg = self.clone();
        cfg.k_n = k_n;
        cfg.k_f = k_f;
        cfg.resample_placement();
        cfg
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)?;
        raw.into_config()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn open_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.random_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}

/// On-disk form. Every field is optional; missing values fall back to
/// [`SystemConfig::default`] and missing placements are drawn from the seed.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "M_x")]
    m_x: Option<usize>,
    #[serde(rename = "M_y")]
    m_y: Option<usize>,
    #[serde(rename = "M_s")]
    m_s: Option<usize>,
    #[serde(rename = "S")]
    s: Option<usize>,
    wavelength_m: Option<f64>,
    spacing_m: Option<f64>,
    #[serde(rename = "K_N")]
    k_n: Option<usize>,
    #[serde(rename = "K_F")]
    k_f: Option<usize>,
    nfue_params: Option<Vec<Position>>,
    ffue_distances_m: Option<Vec<f64>>,
    target: Option<Position>,
    #[serde(rename = "noise_power_W")]
    noise_power_w: Option<f64>,
    #[serde(rename = "noise_power_dBm")]
    noise_power_dbm: Option<f64>,
    #[serde(rename = "P_t_W")]
    p_t_w: Option<f64>,
    #[serde(rename = "P_t_dBm")]
    p_t_dbm: Option<f64>,
    #[serde(rename = "P_s_W")]
    p_s_w: Option<f64>,
    #[serde(rename = "P_s_dBm")]
    p_s_dbm: Option<f64>,
    #[serde(rename = "P_syn_W")]
    p_syn_w: Option<f64>,
    #[serde(rename = "P_syn_dBm")]
    p_syn_dbm: Option<f64>,
    #[serde(rename = "P_ct_W")]
    p_ct_w: Option<f64>,
    #[serde(rename = "P_ct_dBm")]
    p_ct_dbm: Option<f64>,
    zeta: Option<f64>,
    qos_fraction: Option<f64>,
    rho_sense: Option<f64>,
    penalty_init: Option<f64>,
    penalty_growth: Option<f64>,
    penalty_cap: Option<f64>,
    tol_eps1: Option<f64>,
    #[serde(rename = "I1")]
    max_iterations: Option<usize>,
    mc_samples: Option<usize>,
    rng_seed: Option<u64>,
    nfue_region_m: Option<(f64, f64)>,
}

fn power(name: &str, watts: Option<f64>, dbm: Option<f64>) -> Result<Option<f64>> {
    match (watts, dbm) {
        (Some(_), Some(_)) => Err(Error::Config(format!("{name} given both in W and dBm"))),
        (Some(w), None) => Ok(Some(w)),
        (None, Some(d)) => Ok(Some(dbm_to_watts(d))),
        (None, None) => Ok(None),
    }
}

impl RawConfig {
    fn into_config(self) -> Result<SystemConfig> {
        let d = SystemConfig::default();
        let m_x = self.m_x.unwrap_or(d.m_x);
        let m_y = self.m_y.unwrap_or(d.m_y);
        let m_t = m_x * m_y;
        let (m_s, s) = match (self.m_s, self.s) {
            (Some(m_s), Some(s)) => (m_s, s),
            (Some(m_s), None) if m_s > 0 => (m_s, m_t / m_s),
            (None, Some(s)) if s > 0 => (m_t / s, s),
            (None, None) => (d.m_s, d.s),
            _ => return Err(Error::Config("M_s and S must be positive".into())),
        };
        let wavelength_m = self.wavelength_m.unwrap_or(d.wavelength_m);
        let mut cfg = SystemConfig {
            m_x,
            m_y,
            m_s,
            s,
            wavelength_m,
            spacing_m: self.spacing_m.unwrap_or(wavelength_m / 2.0),
            k_n: self.k_n.or(self.nfue_params.as_ref().map(Vec::len)).unwrap_or(d.k_n),
            k_f: self.k_f.or(self.ffue_distances_m.as_ref().map(Vec::len)).unwrap_or(d.k_f),
            nfue_params: Vec::new(),
            ffue_distances_m: Vec::new(),
            target: d.target,
            noise_power_w: power("noise_power", self.noise_power_w, self.noise_power_dbm)?.unwrap_or(d.noise_power_w),
            p_t_w: power("P_t", self.p_t_w, self.p_t_dbm)?.unwrap_or(d.p_t_w),
            p_s_w: power("P_s", self.p_s_w, self.p_s_dbm)?,
            p_syn_w: power("P_syn", self.p_syn_w, self.p_syn_dbm)?.unwrap_or(d.p_syn_w),
            p_ct_w: power("P_ct", self.p_ct_w, self.p_ct_dbm)?.unwrap_or(d.p_ct_w),
            zeta: self.zeta.unwrap_or(d.zeta),
            qos_fraction: self.qos_fraction.unwrap_or(d.qos_fraction),
            rho_sense: self.rho_sense.unwrap_or(d.rho_sense),
            penalty_init: self.penalty_init.unwrap_or(d.penalty_init),
            penalty_growth: self.penalty_growth.unwrap_or(d.penalty_growth),
            penalty_cap: self.penalty_cap.unwrap_or(d.penalty_cap),
            tol_eps1: self.tol_eps1.unwrap_or(d.tol_eps1),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            mc_samples: self.mc_samples.unwrap_or(d.mc_samples),
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
            nfue_region_m: self.nfue_region_m.unwrap_or(d.nfue_region_m),
        };
        cfg.resample_placement();
        if let Some(users) = self.nfue_params {
            cfg.nfue_params = users;
        }
        if let Some(dist) = self.ffue_distances_m {
            cfg.ffue_distances_m = dist;
        }
        if let Some(target) = self.target {
            cfg.target = target;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-104.0) - 3.981_071_705_534_969e-14).abs() < 1e-26);
        assert!((watts_to_dbm(0.05) - 16.989_700_043_360_19).abs() < 1e-12);
    }

    #[test]
    fn json_accepts_dbm_keys() {
        let cfg = SystemConfig::from_json_str(
            r#"{"M_x": 4, "M_y": 4, "M_s": 4, "P_t_dBm": 30, "noise_power_dBm": -104,
                "nfue_params": [[8.0, 0.5, 0.1]], "ffue_distances_m": [120.0],
                "target": [10.0, 0.7, -0.2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.s, 4);
        assert!((cfg.p_t_w - 1.0).abs() < 1e-12);
        assert_eq!(cfg.nfue_params[0], Position::new(8.0, 0.5, 0.1));
        assert_eq!(cfg.k_n, 1);
        assert!((cfg.p_s() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let cfg = SystemConfig::default().with_random_placement(7);
        let back = SystemConfig::from_json_str(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn json_rejects_duplicate_units() {
        let err = SystemConfig::from_json_str(r#"{"P_t_W": 1.0, "P_t_dBm": 30}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_bad_partition() {
        let cfg = SystemConfig { s: 3, ..SystemConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_target_outside_sector() {
        let mut cfg = SystemConfig::default();
        cfg.target.theta_rad = 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn placement_follows_seed() {
        let a = SystemConfig::default().with_random_placement(3);
        let b = SystemConfig::default().with_random_placement(3);
        let c = SystemConfig::default().with_random_placement(4);
        assert_eq!(a, b);
        assert_ne!(a.nfue_params, c.nfue_params);
        for u in &a.nfue_params {
            assert!(u.r_m >= 5.0 && u.r_m < 20.0);
        }
        for &d in &a.ffue_distances_m {
            assert!((110.0..160.0).contains(&d));
        }
    }

    #[test]
    fn reshape_keeps_aperture() {
        let cfg = SystemConfig { m_x: 8, m_y: 8, m_s: 8, s: 8, ..SystemConfig::default() };
        let c = cfg.with_subarrays(16).unwrap();
        assert_eq!((c.s, c.m_s), (16, 4));
        assert!(cfg.with_subarrays(5).is_err());
    }
}
