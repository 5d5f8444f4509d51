//! Dense log-barrier interior-point method for small convex programs with
//! linear and convex quadratic inequality constraints.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// `xᵀQx + cᵀx + r` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub r: f64,
}

impl Quadratic {
    pub fn zeros(n: usize) -> Self {
        Self { q: DMatrix::zeros(n, n), c: DVector::zeros(n), r: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + self.c.dot(x) + self.r
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x * 2.0 + &self.c
    }

    pub fn is_linear(&self) -> bool {
        self.q.iter().all(|&v| v == 0.0)
    }

    /// Smallest eigenvalue of `Q`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.q.nrows() == 0 {
            return 0.0;
        }
        self.q.clone().symmetric_eigenvalues().min()
    }
}

/// Inequality `g(x) <= 0`.
#[derive(Debug, Clone)]
pub enum Row {
    /// `aᵀx + b`.
    Linear { a: DVector<f64>, b: f64 },
    Quadratic(Quadratic),
}

impl Row {
    fn shifted(self, delta: f64) -> Row {
        match self {
            Row::Linear { a, b } => Row::Linear { a, b: b - delta },
            Row::Quadratic(mut f) => {
                f.r -= delta;
                Row::Quadratic(f)
            }
        }
    }

    /// Appends a trailing variable `s` so the row reads `g(x) - s`.
    fn with_slack(&self, n: usize) -> Row {
        let mut a = DVector::zeros(n + 1);
        match self {
            Row::Linear { a: a0, b } => {
                a.rows_mut(0, n).copy_from(a0);
                a[n] = -1.0;
                Row::Linear { a, b: *b }
            }
            Row::Quadratic(f) => {
                let mut q = DMatrix::zeros(n + 1, n + 1);
                q.view_mut((0, 0), (n, n)).copy_from(&f.q);
                a.rows_mut(0, n).copy_from(&f.c);
                a[n] = -1.0;
                Row::Quadratic(Quadratic { q, c: a, r: f.r })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    /// Constraints are enforced as `g(x) <= feasibility_tol`.
    pub feasibility_tol: f64,
    /// Stop once the barrier gap is below this fraction of `max(1, |f0|)`.
    pub gap_tol: f64,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self { feasibility_tol: 1e-7, gap_tol: 1e-10, mu: 10.0, max_newton: 100, max_outer: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    pub phase_one: bool,
}

enum Centering {
    Done,
    /// Early exit requested by the caller.
    Stopped,
}

/// Row compiled to its support: `Σ q_ab x_a x_b + Σ c_k x_{support_k} + r`.
struct Compiled {
    support: Vec<usize>,
    /// `(position in support, variable, weight)`, both triangles.
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    r: f64,
}

impl Compiled {
    fn from_row(row: &Row) -> Self {
        let (q, c, r) = match row {
            Row::Linear { a, b } => (None, a, *b),
            Row::Quadratic(f) => (Some(&f.q), &f.c, f.r),
        };
        let n = c.len();
        let support: Vec<usize> = (0..n)
            .filter(|&i| c[i] != 0.0 || q.is_some_and(|q| (0..n).any(|j| q[(i, j)] != 0.0)))
            .collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in support.iter().enumerate() {
            pos[i] = k;
        }
        let mut entries = Vec::new();
        if let Some(q) = q {
            for &i in &support {
                for &j in &support {
                    if q[(i, j)] != 0.0 {
                        entries.push((pos[i], j, q[(i, j)]));
                    }
                }
            }
        }
        Self { c: support.iter().map(|&i| c[i]).collect(), support, q: entries, r }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let lin: f64 = self.support.iter().zip(&self.c).map(|(&i, c)| c * x[i]).sum();
        let quad: f64 = self.q.iter().map(|&(p, j, v)| v * x[self.support[p]] * x[j]).sum();
        lin + quad + self.r
    }

    /// Gradient entries aligned with `support`.
    fn gradient(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut g = self.c.clone();
        for &(p, j, v) in &self.q {
            g[p] += 2.0 * v * x[j];
        }
        g
    }
}

struct Barrier<'a> {
    f0: &'a Quadratic,
    rows: &'a [Compiled],
    steps: usize,
}

impl Barrier<'_> {
    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.rows.iter().all(|r| r.value(x) < 0.0)
    }

    fn phi(&self, t: f64, x: &DVector<f64>) -> f64 {
        let mut v = t * self.f0.value(x);
        for r in self.rows {
            let g = r.value(x);
            if g >= 0.0 {
                return f64::INFINITY;
            }
            v -= (-g).ln();
        }
        v
    }

    fn newton_system(&self, t: f64, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut grad = self.f0.gradient(x) * t;
        let mut hess = &self.f0.q * (2.0 * t);
        for row in self.rows {
            let inv = -1.0 / row.value(x);
            let dg = row.gradient(x);
            for (a, &i) in row.support.iter().enumerate() {
                grad[i] += inv * dg[a];
                for (b, &j) in row.support.iter().enumerate() {
                    hess[(i, j)] += inv * inv * dg[a] * dg[b];
                }
            }
            for &(p, j, v) in &row.q {
                hess[(row.support[p], j)] += 2.0 * inv * v;
            }
        }
        (hess, grad)
    }
    fn center(
        &mut self,
        t: f64,
        x: &mut DVector<f64>,
        max_newton: usize,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Result<Centering> {
        for _ in 0..max_newton {
            let (hess, grad) = self.newton_system(t, x);
            let dx = solve_spd(hess, &grad)?;
            let decrement = -grad.dot(&dx);
            if !decrement.is_finite() {
                return Err(Error::SolverFailure("non-finite Newton decrement".into()));
            }
            if decrement <= 1e-12 {
                return Ok(Centering::Done);
            }
            let phi0 = self.phi(t, x);
            let mut step = 1.0;
            loop {
                let cand = &*x + &dx * step;
                if self.strictly_feasible(&cand) && self.phi(t, &cand) <= phi0 - 0.25 * step * decrement {
                    *x = cand;
                    break;
                }
                step *= 0.5;
                if step < 1e-16 {
                    return Ok(Centering::Done);
                }
            }
            self.steps += 1;
            if stop(x) {
                return Ok(Centering::Stopped);
            }
        }
        Ok(Centering::Done)
    }

    fn run(
        &mut self,
        x: &mut DVector<f64>,
        settings: &IpmSettings,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Result<bool> {
        let m = self.rows.len() as f64;
        let mut t = 1.0;
        for _ in 0..settings.max_outer {
            if let Centering::Stopped = self.center(t, x, settings.max_newton, stop)? {
                return Ok(true);
            }
            if m / t <= settings.gap_tol * self.f0.value(x).abs().max(1.0) {
                return Ok(false);
            }
            t *= settings.mu;
        }
        Ok(false)
    }
}

fn solve_spd(mut h: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = h.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        if let Some(chol) = Cholesky::new(h.clone()) {
            return Ok(-chol.solve(grad));
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
    }
    Err(Error::SolverFailure("Newton system is not positive definite".into()))
}

/// Minimizes `f0` subject to `rows`, each relaxed to `g(x) <= feasibility_tol`.
///
/// `x0` seeds the search; when it is not strictly feasible a phase-one
/// problem is solved first. An empty feasible set yields
/// [`Error::Infeasible`]; numerical breakdown yields [`Error::SolverFailure`].
pub fn minimize(f0: &Quadratic, rows: Vec<Row>, x0: &[f64], settings: &IpmSettings) -> Result<IpmSolution> {
    let n = f0.dim();
    let rows: Vec<Row> = rows.into_iter().map(|r| r.shifted(settings.feasibility_tol)).collect();
    let compiled: Vec<Compiled> = rows.iter().map(Compiled::from_row).collect();
    let mut x = DVector::from_column_slice(x0);
    let mut steps = 0;
    let mut phase_one = false;

    if !compiled.iter().all(|r| r.value(&x) < 0.0) {
        phase_one = true;
        let worst = compiled.iter().map(|r| r.value(&x)).fold(f64::NEG_INFINITY, f64::max);
        let mut aug_rows: Vec<Row> = rows.iter().map(|r| r.with_slack(n)).collect();
        let mut floor = DVector::zeros(n + 1);
        floor[n] = -1.0;
        aug_rows.push(Row::Linear { a: floor, b: -1.0 });
        let aug_rows: Vec<Compiled> = aug_rows.iter().map(Compiled::from_row).collect();
        let mut obj = Quadratic::zeros(n + 1);
        obj.c[n] = 1.0;
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(&x);
        z[n] = worst.max(0.0) + 1.0;
        let mut barrier = Barrier { f0: &obj, rows: &aug_rows, steps: 0 };
        let stop = |z: &DVector<f64>| z[n] < 0.0;
        let found = barrier.run(&mut z, settings, &stop)?;
        steps += barrier.steps;
        if !found && z[n] >= 0.0 {
            return Err(Error::Infeasible(format!("phase one stalled at slack {:.3e}", z[n])));
        }
        x = z.rows(0, n).into_owned();
    }

    let mut barrier = Barrier { f0, rows: &compiled, steps: 0 };
    barrier.run(&mut x, settings, &|_| false)?;
    steps += barrier.steps;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("non-finite iterate".into()));
    }
    Ok(IpmSolution { objective: f0.value(&x), x: x.iter().copied().collect(), newton_steps: steps, phase_one })
}
