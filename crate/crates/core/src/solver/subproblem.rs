//! Convex subproblem around an expansion point: penalized power objective,
//! surrogate SINR and beampattern constraints, power caps, coupling rows and
//! the unit box.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    beampattern_terms, ffue_sinr_parts, nfue_sinr_parts, total_power, ActivationState, QosTargets,
};
use crate::scenario::Scenario;
use crate::solver::ipm::{self, IpmSettings, Quadratic, Row};
use crate::solver::surrogate::{penalty_tangent, taylor_lb_affine};

/// Expansion point of one SCA iteration and the penalty weights for
/// `ā`, `ã` and `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePoint {
    pub a_bar_n: Vec<f64>,
    pub a_tilde_n: Vec<f64>,
    pub a_n: Vec<f64>,
    pub penalty: [f64; 3],
}

impl SurrogatePoint {
    pub fn new(state: &ActivationState, penalty: f64) -> Self {
        Self {
            a_bar_n: state.a_bar.clone(),
            a_tilde_n: state.a_tilde.clone(),
            a_n: state.a.clone(),
            penalty: [penalty; 3],
        }
    }

    pub fn state(&self) -> ActivationState {
        ActivationState { a_bar: self.a_bar_n.clone(), a_tilde: self.a_tilde_n.clone(), a: self.a_n.clone() }
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.state().to_vector()
    }
}

/// `P_C` plus the linearized binarity penalties.
pub fn penalized_objective(sc: &Scenario, state: &ActivationState, point: &SurrogatePoint) -> f64 {
    let lin = |x: &[f64], x_n: &[f64]| x.iter().zip(x_n).map(|(&v, &v_n)| penalty_tangent(v, v_n)).sum::<f64>();
    total_power(sc, state)
        + point.penalty[0] * lin(&state.a_bar, &point.a_bar_n)
        + point.penalty[1] * lin(&state.a_tilde, &point.a_tilde_n)
        + point.penalty[2] * lin(&state.a, &point.a_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintTag {
    TotalPower,
    SubarrayPower(usize),
    Nfue(usize),
    Ffue(usize),
    Beampattern,
}

/// Normalized convex constraint `form(x) <= 0`; `scale * form(x)` is in the
/// constraint's natural units.
#[derive(Debug, Clone)]
pub struct QuadraticConstraint {
    pub tag: ConstraintTag,
    pub form: Quadratic,
    pub scale: f64,
}

/// `Σ coeffs · x <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemCounts {
    pub variables: usize,
    pub linear: usize,
    pub quadratic: usize,
}

/// Variables are stacked as `[ā, ã, a]`.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub s: usize,
    pub objective: Quadratic,
    pub quadratic: Vec<QuadraticConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coupling: Vec<LinearRow>,
    pub point: SurrogatePoint,
}

impl ConvexSubproblem {
    pub fn n_vars(&self) -> usize {
        3 * self.s
    }

    /// Box intervals and coupling rows count as linear constraints; the
    /// per-subarray power caps count as one quadratic block.
    pub fn counts(&self) -> ProblemCounts {
        let per_subarray = self.quadratic.iter().any(|c| matches!(c.tag, ConstraintTag::SubarrayPower(_)));
        let others = self.quadratic.iter().filter(|c| !matches!(c.tag, ConstraintTag::SubarrayPower(_))).count();
        ProblemCounts {
            variables: self.n_vars(),
            linear: self.lower.len() + self.coupling.len(),
            quadratic: others + usize::from(per_subarray),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.value(&DVector::from_column_slice(x))
    }

    /// Largest normalized violation over all constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let quad = self.quadratic.iter().map(|c| c.form.value(&v));
        let boxed = (0..self.n_vars()).flat_map(|i| [self.lower[i] - x[i], x[i] - self.upper[i]]);
        let lin = self.coupling.iter().map(|r| r.coeffs.iter().map(|&(i, a)| a * x[i]).sum::<f64>() - r.rhs);
        quad.chain(boxed).chain(lin).fold(f64::NEG_INFINITY, f64::max)
    }

    fn rows(&self) -> Vec<Row> {
        let n = self.n_vars();
        let mut rows: Vec<Row> = self.quadratic.iter().map(|c| Row::Quadratic(c.form.clone())).collect();
        for i in 0..n {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            rows.push(Row::Linear { a: a.clone(), b: -self.upper[i] });
            rows.push(Row::Linear { a: -a, b: self.lower[i] });
        }
        for r in &self.coupling {
            let mut a = DVector::zeros(n);
            for &(i, v) in &r.coeffs {
                a[i] += v;
            }
            rows.push(Row::Linear { a, b: -r.rhs });
        }
        rows
    }
}

/// Accumulates a quadratic form over the stacked variables.
struct FormBuilder<'a> {
    f: Quadratic,
    x_n: &'a [f64],
}

impl<'a> FormBuilder<'a> {
    fn new(n: usize, x_n: &'a [f64]) -> Self {
        Self { f: Quadratic::zeros(n), x_n }
    }

    fn square(&mut self, i: usize, coeff: f64) {
        self.f.q[(i, i)] += coeff;
    }

    fn linear(&mut self, i: usize, coeff: f64) {
        self.f.c[i] += coeff;
    }

    fn constant(&mut self, v: f64) {
        self.f.r += v;
    }

    fn pair(&mut self, i: usize, j: usize, q_ii: f64, q_ij: f64) {
        self.f.q[(i, i)] += q_ii;
        self.f.q[(j, j)] += q_ii;
        self.f.q[(i, j)] += q_ij;
        self.f.q[(j, i)] += q_ij;
    }

    /// `coeff · x_i x_j` replaced by its convex upper bound.
    fn bilinear_upper(&mut self, i: usize, j: usize, coeff: f64) {
        let d = self.x_n[i] - self.x_n[j];
        self.pair(i, j, 0.25 * coeff, 0.25 * coeff);
        self.linear(i, -0.5 * coeff * d);
        self.linear(j, 0.5 * coeff * d);
        self.constant(0.25 * coeff * d * d);
    }

    /// `coeff · x_i x_j` replaced by its concave lower bound.
    fn bilinear_lower(&mut self, i: usize, j: usize, coeff: f64) {
        let s = self.x_n[i] + self.x_n[j];
        self.pair(i, j, -0.25 * coeff, 0.25 * coeff);
        self.linear(i, 0.5 * coeff * s);
        self.linear(j, 0.5 * coeff * s);
        self.constant(-0.25 * coeff * s * s);
    }

    /// `coeff · x_i²` replaced by its tangent.
    fn square_tangent(&mut self, i: usize, coeff: f64) {
        let v = self.x_n[i];
        self.linear(i, 2.0 * coeff * v);
        self.constant(-coeff * v * v);
    }

    /// `coeff · |Σ_s c_s x_{off+s}|²` replaced by its tangent.
    fn taylor(&mut self, off: usize, c: &[Complex64], coeff: f64) {
        let (g, r) = taylor_lb_affine(c, &self.x_n[off..off + c.len()]);
        for (s, g) in g.iter().enumerate() {
            self.linear(off + s, coeff * g);
        }
        self.constant(coeff * r);
    }

    /// Convex majorant of `xᵀ M x` over one block: squares with a negative
    /// weight and every cross pair are replaced by the bound that keeps the
    /// sum convex and tight at the expansion point.
    fn majorant(&mut self, off: usize, m: &DMatrix<f64>) {
        let n = m.nrows();
        for s in 0..n {
            let d = m[(s, s)];
            if d >= 0.0 {
                self.square(off + s, d);
            } else {
                self.square_tangent(off + s, d);
            }
            for t in s + 1..n {
                let coeff = m[(s, t)] + m[(t, s)];
                if coeff > 0.0 {
                    self.bilinear_upper(off + s, off + t, coeff);
                } else if coeff < 0.0 {
                    self.bilinear_lower(off + s, off + t, coeff);
                }
            }
        }
    }

    fn scaled(mut self, scale: f64) -> Quadratic {
        let inv = 1.0 / scale;
        self.f.q *= inv;
        self.f.c *= inv;
        self.f.r *= inv;
        self.f
    }
}

fn weighted_real(mats: impl Iterator<Item = (f64, DMatrix<Complex64>)>, s: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(s, s);
    for (w, m) in mats {
        out += m.map(|z| z.re) * w;
    }
    out
}

/// Always-satisfied placeholder for a zero QoS floor.
fn vacuous(n: usize) -> Quadratic {
    let mut f = Quadratic::zeros(n);
    f.r = -1.0;
    f
}

pub fn assemble_subproblem(sc: &Scenario, targets: &QosTargets, point: &SurrogatePoint) -> Result<ConvexSubproblem> {
    let s_count = sc.s();
    let n = 3 * s_count;
    let (ob, ot, oa) = (0, s_count, 2 * s_count);
    let x_n = point.stacked();
    let cfg = &sc.config;
    let p = &sc.precoders;
    let m = &sc.moments;
    let state_n = point.state();
    let gamma = sc.gamma_coefficients();

    // Objective.
    let mut obj = FormBuilder::new(n, &x_n);
    for (s, &(a, b, c)) in gamma.iter().enumerate() {
        obj.square(ob + s, a / cfg.zeta);
        obj.square(ot + s, b / cfg.zeta);
        obj.square(oa + s, c / cfg.zeta);
        obj.linear(oa + s, sc.geometry.m_s as f64 * cfg.p_ct_w);
    }
    obj.constant(2.0 * cfg.p_syn_w);
    for (block, &lambda) in point.penalty.iter().enumerate() {
        for s in 0..s_count {
            let v = x_n[block * s_count + s];
            obj.linear(block * s_count + s, lambda * (1.0 - 2.0 * v));
            obj.constant(lambda * v * v);
        }
    }

    let mut quadratic = Vec::new();

    // Power caps.
    let mut total = FormBuilder::new(n, &x_n);
    for (s, &(a, b, c)) in gamma.iter().enumerate() {
        total.square(ob + s, a);
        total.square(ot + s, b);
        total.square(oa + s, c);
    }
    total.constant(-cfg.p_t_w);
    quadratic.push(QuadraticConstraint { tag: ConstraintTag::TotalPower, form: total.scaled(cfg.p_t_w), scale: cfg.p_t_w });
    let p_s = cfg.p_s();
    for (s, &(a, b, c)) in gamma.iter().enumerate() {
        let mut f = FormBuilder::new(n, &x_n);
        f.square(ob + s, a);
        f.square(ot + s, b);
        f.square(oa + s, c);
        f.constant(-p_s);
        quadratic.push(QuadraticConstraint { tag: ConstraintTag::SubarrayPower(s), form: f.scaled(p_s), scale: p_s });
    }

    // NFUE SINR: R̄_k Π̄_k^ub - η̄_k f̄_k^lb <= 0.
    for k in 0..sc.k_n() {
        let r = targets.r_bar[k];
        let tag = ConstraintTag::Nfue(k);
        if r <= 0.0 {
            quadratic.push(QuadraticConstraint { tag, form: vacuous(n), scale: 1.0 });
            continue;
        }
        let parts = nfue_sinr_parts(sc, k, &state_n);
        let scale = r * (parts.interference + parts.noise);
        let mut f = FormBuilder::new(n, &x_n);
        let intra = weighted_real(
            (0..sc.k_n()).filter(|&i| i != k).map(|i| {
                let c = &m.near_cross[k][i];
                let outer = DMatrix::from_fn(s_count, s_count, |s, t| c[s] * c[t].conj());
                (r * p.eta_near[i], outer)
            }),
            s_count,
        );
        f.majorant(ob, &intra);
        let inter = weighted_real((0..sc.k_f()).map(|j| (r * p.eta_far[j], m.rho[k][j].clone())), s_count);
        f.majorant(ot, &inter);
        for s in 0..s_count {
            f.square(oa + s, r * p.eta_sense[s] * m.near_sense_leak[k][s]);
        }
        f.constant(r * cfg.noise_power_w);
        f.taylor(ob, &m.near_cross[k][k], -p.eta_near[k]);
        quadratic.push(QuadraticConstraint { tag, form: f.scaled(scale), scale });
    }

    // FFUE SINR: R̃_k Π̃_k^ub - η̃_k f̃_k^lb <= 0.
    for k in 0..sc.k_f() {
        let r = targets.r_tilde[k];
        let tag = ConstraintTag::Ffue(k);
        if r <= 0.0 {
            quadratic.push(QuadraticConstraint { tag, form: vacuous(n), scale: 1.0 });
            continue;
        }
        let parts = ffue_sinr_parts(sc, k, &state_n);
        let scale = r * (parts.interference + parts.noise);
        let mut f = FormBuilder::new(n, &x_n);
        for s in 0..s_count {
            f.linear(ot + s, r * p.eta_far[k] * m.eps[k][s]);
            let near: f64 = (0..sc.k_n()).map(|i| p.eta_near[i] * m.t[k][i][s]).sum();
            f.square(ob + s, r * near);
            f.square(oa + s, r * p.eta_sense[s] * sc.channels.beta[k] * m.sense_norm_sqr[s]);
        }
        let cross = weighted_real(
            (0..sc.k_f()).filter(|&j| j != k).map(|j| (r * p.eta_far[j], m.varrho[k][j].clone())),
            s_count,
        );
        f.majorant(ot, &cross);
        f.constant(r * cfg.noise_power_w);
        f.taylor(ot, &m.far_mean[k], -p.eta_far[k]);
        quadratic.push(QuadraticConstraint { tag, form: f.scaled(scale), scale });
    }

    // Beampattern: kappa - g^lb <= 0.
    {
        let tag = ConstraintTag::Beampattern;
        let kappa = targets.kappa;
        if kappa <= 0.0 {
            quadratic.push(QuadraticConstraint { tag, form: vacuous(n), scale: 1.0 });
        } else {
            let mut f = FormBuilder::new(n, &x_n);
            for k in 0..sc.k_n() {
                f.taylor(ob, &m.steer_near[k], -p.eta_near[k]);
            }
            let far = weighted_real((0..sc.k_f()).map(|j| (-p.eta_far[j], m.far_steer[j].clone())), s_count);
            f.majorant(ot, &far);
            for s in 0..s_count {
                f.square_tangent(oa + s, -p.eta_sense[s] * m.steer_sense[s]);
            }
            f.constant(kappa);
            quadratic.push(QuadraticConstraint { tag, form: f.scaled(kappa), scale: kappa });
        }
    }

    for (index, c) in quadratic.iter().enumerate() {
        let min_eig = c.form.min_eigenvalue();
        let norm = c.form.q.amax().max(1.0);
        if min_eig < -1e-9 * norm {
            return Err(Error::Assembly { index, min_eigenvalue: min_eig });
        }
    }

    let mut coupling = Vec::with_capacity(3 * s_count);
    for s in 0..s_count {
        coupling.push(LinearRow { coeffs: vec![(ob + s, 1.0), (oa + s, -1.0)], rhs: 0.0 });
        coupling.push(LinearRow { coeffs: vec![(ot + s, 1.0), (oa + s, -1.0)], rhs: 0.0 });
        coupling.push(LinearRow { coeffs: vec![(oa + s, 1.0), (ob + s, -1.0), (ot + s, -1.0)], rhs: 0.0 });
    }

    Ok(ConvexSubproblem {
        s: s_count,
        objective: obj.f,
        quadratic,
        lower: vec![0.0; n],
        upper: vec![1.0; n],
        coupling,
        point: point.clone(),
    })
}

/// Relaxed minimizer of the subproblem, clipped to the unit box.
pub fn solve_subproblem(sp: &ConvexSubproblem) -> Result<ActivationState> {
    solve_subproblem_with(sp, &IpmSettings::default()).map(|(state, _)| state)
}

pub fn solve_subproblem_with(sp: &ConvexSubproblem, settings: &IpmSettings) -> Result<(ActivationState, f64)> {
    let x0: Vec<f64> = sp.point.stacked().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let sol = ipm::minimize(&sp.objective, sp.rows(), &x0, settings)?;
    let x: Vec<f64> = sol.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let objective = sp.objective_value(&x);
    Ok((ActivationState::from_vector(&x), objective))
}

/// Exact constraint residuals in natural units, aligned with
/// [`ConvexSubproblem::quadratic`]: `R·(I + N) - S` for SINRs,
/// `kappa - g_sen` for the beampattern, `gamma - cap` for power.
pub fn exact_residuals(sc: &Scenario, targets: &QosTargets, state: &ActivationState) -> Vec<(ConstraintTag, f64)> {
    let cfg = &sc.config;
    let gamma = crate::metrics::subarray_transmit_power(sc, state);
    let mut out = vec![(ConstraintTag::TotalPower, gamma.iter().sum::<f64>() - cfg.p_t_w)];
    out.extend(gamma.iter().enumerate().map(|(s, g)| (ConstraintTag::SubarrayPower(s), g - cfg.p_s())));
    for k in 0..sc.k_n() {
        let p = nfue_sinr_parts(sc, k, state);
        out.push((ConstraintTag::Nfue(k), targets.r_bar[k] * (p.interference + p.noise) - p.signal));
    }
    for k in 0..sc.k_f() {
        let p = ffue_sinr_parts(sc, k, state);
        out.push((ConstraintTag::Ffue(k), targets.r_tilde[k] * (p.interference + p.noise) - p.signal));
    }
    out.push((ConstraintTag::Beampattern, targets.kappa - beampattern_terms(sc, state).iter().sum::<f64>()));
    out
}
