//! Explicit finite-difference solver for the large-population limit
//!
//! ```text
//! ∂t u = ∂xx u − χ ∂x( ã(F) u ) + b̃(F) u,   F(x) = ∫_x^∞ u,
//! ã(z) = 1{z > 1},   b̃ = 1 − ã,
//! ```
//!
//! together with threshold tracking (`F(x̄) = 1`), a least-squares fit of the
//! logarithmic front delay, and a Duhamel fixed-point solver for the tail
//! function `F` used as an independent cross-check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftBoundary {
    /// No diffusive or advective flux through the left edge.
    ZeroFlux,
    /// Ghost value held fixed outside the left edge.
    Dirichlet { value: f64 },
    /// Ghost copies the first cell: the plateau behind the front continues
    /// past the edge, so neither diffusion nor drift sees the truncation.
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub chi: f64,
    pub dx: f64,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub left: LeftBoundary,
    /// Follow the threshold by shifting the grid right in whole cells.
    pub window_shift: bool,
    pub safety: f64,
}

impl PdeConfig {
    /// Configuration with the largest monotone time step scaled by `safety`.
    pub fn new(chi: f64, dx: f64, x_min: f64, x_max: f64) -> Self {
        let safety = 0.9;
        Self {
            chi,
            dx,
            dt: stable_dt(chi, dx, safety),
            x_min,
            x_max,
            left: LeftBoundary::ZeroFlux,
            window_shift: false,
            safety,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0) {
            return Err(Error::Config(format!("chi must be positive, got {}", self.chi)));
        }
        if !(self.dx > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("dx and dt must be positive".into()));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Config(format!("safety must lie in (0, 1], got {}", self.safety)));
        }
        // Monotonicity: every coefficient of the explicit update is >= 0.
        let load = self.dt * (2.0 / (self.dx * self.dx) + self.chi / self.dx);
        if load > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "CFL violated: dt·(2/dx² + χ/dx) = {load:.4} > 1"
            )));
        }
        Ok(())
    }
}

pub fn stable_dt(chi: f64, dx: f64, safety: f64) -> f64 {
    safety / (2.0 / (dx * dx) + chi / dx)
}

/// `F_i = dx · Σ_{j > i} u_j`: right-endpoint rectangles, so `F` vanishes at
/// the right edge.
pub fn tail_integral(u: &GridField) -> Result<GridField> {
    if let Some(i) = u.values.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidInput(format!("negative density at index {i}")));
    }
    let mut f = u.zeros_like();
    tail_into(&u.values, u.dx, &mut f.values);
    Ok(f)
}

fn tail_into(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let mut acc = 0.0;
    out[n - 1] = 0.0;
    for i in (0..n - 1).rev() {
        acc += u[i + 1];
        out[i] = dx * acc;
    }
}

/// Crossing of `F = 1` by linear interpolation; `None` when `max F < 1`.
pub fn threshold(f: &GridField) -> Option<f64> {
    threshold_of(&f.values, f.x0, f.dx)
}

fn threshold_of(f: &[f64], x0: f64, dx: f64) -> Option<f64> {
    // F is nonincreasing: the last index with F >= 1.
    let count = f.partition_point(|&v| v >= 1.0);
    if count == 0 {
        return None;
    }
    let i = count - 1;
    if i + 1 == f.len() {
        return Some(x0 + i as f64 * dx);
    }
    let (a, b) = (f[i], f[i + 1]);
    let w = if a > b { (a - 1.0) / (a - b) } else { 0.0 };
    Some(x0 + (i as f64 + w) * dx)
}

/// One explicit step of the limit equation.
pub fn step_u(u: &GridField, cfg: &PdeConfig) -> Result<GridField> {
    cfg.validate()?;
    check_grid(u, cfg)?;
    let mut f = vec![0.0; u.len()];
    let mut out = u.zeros_like();
    step_into(&u.values, &mut f, &mut out.values, cfg);
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup {
            step: 1,
            time: cfg.dt,
        });
    }
    Ok(out)
}

fn check_grid(u: &GridField, cfg: &PdeConfig) -> Result<()> {
    if (u.dx - cfg.dx).abs() > 1e-12 * cfg.dx {
        return Err(Error::Config(format!(
            "grid spacing {} does not match configured dx {}",
            u.dx, cfg.dx
        )));
    }
    Ok(())
}

/// Returns the mass that entered through the left edge.
fn step_into(u: &[f64], f: &mut [f64], out: &mut [f64], cfg: &PdeConfig) -> f64 {
    let n = u.len();
    let dx = cfg.dx;
    let dt = cfg.dt;
    let r = dt / (dx * dx);
    let c = dt * cfg.chi / dx;
    tail_into(u, dx, f);
    let go = |i: usize| f[i] > 1.0;
    let mut influx = 0.0;

    for i in 0..n {
        let a_i = go(i);
        let mut coef = 1.0 - 2.0 * r;
        if a_i {
            coef -= c;
        } else {
            coef += dt;
        }
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        let (left, inflow) = if i > 0 {
            (u[i - 1], if go(i - 1) { c * u[i - 1] } else { 0.0 })
        } else {
            let (left, inflow) = match cfg.left {
                LeftBoundary::ZeroFlux => {
                    // mirror ghost cancels the diffusive flux; no advective inflow
                    (u[0], 0.0)
                }
                LeftBoundary::Dirichlet { value } => {
                    let ghost_go = f[0] + dx * u[0] > 1.0;
                    (value, if ghost_go { c * value } else { 0.0 })
                }
                LeftBoundary::Plateau => {
                    let ghost_go = f[0] + dx * u[0] > 1.0;
                    (u[0], if ghost_go { c * u[0] } else { 0.0 })
                }
            };
            influx = dx * (r * (left - u[0]) + inflow);
            (left, inflow)
        };
        out[i] = coef * u[i] + r * (left + right) + inflow;
    }
    influx
}

/// `(|x̄₁ − x̄₂|, ‖u₁ − u₂‖_L¹)`: the pair of distances compared by the
/// uniqueness argument for the limit equation.
pub fn threshold_l1_diagnostic(u1: &GridField, u2: &GridField) -> Result<(Option<f64>, f64)> {
    let x1 = threshold(&tail_integral(u1)?);
    let x2 = threshold(&tail_integral(u2)?);
    let l1 = u1.l1_distance(u2)?;
    Ok((x1.zip(x2).map(|(a, b)| (a - b).abs()), l1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeRecord {
    pub t: f64,
    pub xbar: Option<f64>,
    /// See [`PdeSolver::mass`].
    pub mass: f64,
}

/// Time stepper with optional moving window.
#[derive(Debug, Clone)]
pub struct PdeSolver {
    cfg: PdeConfig,
    u: GridField,
    f: Vec<f64>,
    next: Vec<f64>,
    steps: u64,
    shifted_mass: f64,
    inflow_mass: f64,
}

impl PdeSolver {
    pub fn new(cfg: PdeConfig, u0: GridField) -> Result<Self> {
        cfg.validate()?;
        check_grid(&u0, &cfg)?;
        if let Some(i) = u0.values.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidInput(format!("negative initial density at index {i}")));
        }
        let n = u0.len();
        Ok(Self {
            cfg,
            u: u0,
            f: vec![0.0; n],
            next: vec![0.0; n],
            steps: 0,
            shifted_mass: 0.0,
            inflow_mass: 0.0,
        })
    }

    pub fn config(&self) -> &PdeConfig {
        &self.cfg
    }

    pub fn u(&self) -> &GridField {
        &self.u
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn tail(&self) -> GridField {
        let mut f = self.u.zeros_like();
        tail_into(&self.u.values, self.u.dx, &mut f.values);
        f
    }

    pub fn threshold(&self) -> Option<f64> {
        threshold(&self.tail())
    }

    /// Window mass plus mass dropped by shifts, minus mass that entered
    /// through the left edge.
    pub fn mass(&self) -> f64 {
        self.u.mass() + self.shifted_mass - self.inflow_mass
    }

    pub fn step(&mut self) -> Result<()> {
        self.inflow_mass += step_into(&self.u.values, &mut self.f, &mut self.next, &self.cfg);
        std::mem::swap(&mut self.u.values, &mut self.next);
        self.steps += 1;
        if self.u.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup {
                step: self.steps,
                time: self.time(),
            });
        }
        if self.cfg.window_shift {
            self.maybe_shift();
        }
        Ok(())
    }

    fn maybe_shift(&mut self) {
        // `f` still holds the tail of the pre-step field; recompute lazily
        // only when the front might be near the right edge.
        let n = self.u.len();
        let width = self.u.dx * (n - 1) as f64;
        let trigger = self.u.x0 + 0.8 * width;
        // Cheap test: the tail mass right of the trigger point.
        let it = ((trigger - self.u.x0) / self.u.dx).floor() as usize;
        let right_mass: f64 = self.u.dx * self.u.values[it + 1..].iter().sum::<f64>();
        if right_mass < 1.0 {
            return;
        }
        let Some(xbar) = self.threshold() else { return };
        let target = self.u.x0 + 0.5 * width;
        let cells = ((xbar - target) / self.u.dx).round().max(1.0) as usize;
        let cells = cells.min(n - 3);
        self.shifted_mass += self.u.dx * self.u.values[..cells].iter().sum::<f64>();
        self.u.values.drain(..cells);
        self.u.values.extend(std::iter::repeat_n(0.0, cells));
        self.u.x0 += cells as f64 * self.u.dx;
    }

    /// Advances to `t_end`, recording `(t, x̄, mass)` every `record_dt`.
    pub fn run(&mut self, t_end: f64, record_dt: f64) -> Result<Vec<PdeRecord>> {
        let mut out = vec![self.record()];
        let stride = ((record_dt / self.cfg.dt).round() as u64).max(1);
        let total = ((t_end - self.time()) / self.cfg.dt).round().max(0.0) as u64;
        for i in 1..=total {
            self.step()?;
            if i % stride == 0 || i == total {
                out.push(self.record());
            }
        }
        Ok(out)
    }

    /// Advances to `t_end` calling `visit` every `record_dt`.
    pub fn run_with(
        &mut self,
        t_end: f64,
        record_dt: f64,
        mut visit: impl FnMut(&PdeSolver),
    ) -> Result<()> {
        visit(self);
        let stride = ((record_dt / self.cfg.dt).round() as u64).max(1);
        let total = ((t_end - self.time()) / self.cfg.dt).round().max(0.0) as u64;
        for i in 1..=total {
            self.step()?;
            if i % stride == 0 || i == total {
                visit(self);
            }
        }
        Ok(())
    }

    pub fn record(&self) -> PdeRecord {
        PdeRecord {
            t: self.time(),
            xbar: self.threshold(),
            mass: self.mass(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BramsonFit {
    pub sigma: f64,
    pub c: f64,
    pub b: f64,
    pub samples: usize,
    pub rms_residual: f64,
}

/// Least-squares fit of `x̄(t) ≈ σ t − c ln t + b` over samples with
/// `t >= t_min`.
pub fn bramson_fit(series: &[(f64, f64)], t_min: f64) -> Result<BramsonFit> {
    if !(t_min > 0.0) {
        return Err(Error::InvalidInput(format!("t_min must be positive, got {t_min}")));
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 >= t_min).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} samples with t >= {t_min}, need at least 10",
            pts.len()
        )));
    }
    let t_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if t_max < 4.0 * t_min {
        return Err(Error::InsufficientData(format!(
            "series ends at {t_max}, need at least 4·t_min = {}",
            4.0 * t_min
        )));
    }
    let n = pts.len();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => pts[i].0,
        1 => -pts[i].0.ln(),
        _ => 1.0,
    });
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    let resid = &design * &coef - &y;
    Ok(BramsonFit {
        sigma: coef[0],
        c: coef[1],
        b: coef[2],
        samples: n,
        rms_residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// `A(z) = (z − 1) ∨ 0`.
#[inline]
pub fn go_primitive(z: f64) -> f64 {
    (z - 1.0).max(0.0)
}

/// `B(z) = z ∧ 1`.
#[inline]
pub fn grow_primitive(z: f64) -> f64 {
    z.min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuhamelSolution {
    pub f: GridField,
    pub iterations: usize,
    /// Sup-norm change of the last Picard update.
    pub increment: f64,
}

/// Discrete heat semigroup `e^{τ ∂xx}` as a truncated Gaussian convolution
/// (6 standard deviations), extending values linearly past the grid ends.
#[derive(Debug, Clone)]
struct HeatKernel {
    weights: Vec<f64>,
    half: usize,
}

impl HeatKernel {
    fn new(tau: f64, dx: f64) -> Self {
        let sd = (2.0 * tau).sqrt();
        let half = (6.0 * sd / dx).ceil() as usize;
        if half == 0 || tau <= 0.0 {
            return Self {
                weights: vec![1.0],
                half: 0,
            };
        }
        let mut weights: Vec<f64> = (0..=2 * half)
            .map(|k| {
                let y = (k as f64 - half as f64) * dx;
                (-y * y / (4.0 * tau)).exp()
            })
            .collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Self { weights, half }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len() as isize;
        let at = |j: isize| -> f64 {
            if j < 0 {
                v[0] + j as f64 * (v[1] - v[0])
            } else if j >= n {
                let last = (n - 1) as usize;
                v[last] + (j - n + 1) as f64 * (v[last] - v[last - 1])
            } else {
                v[j as usize]
            }
        };
        let h = self.half as isize;
        for i in 0..n {
            let mut acc = 0.0;
            if i - h >= 0 && i + h < n {
                let base = (i - h) as usize;
                for (w, x) in self.weights.iter().zip(&v[base..base + self.weights.len()]) {
                    acc += w * x;
                }
            } else {
                for (k, w) in self.weights.iter().enumerate() {
                    acc += w * at(i - h + k as isize);
                }
            }
            out[i as usize] = acc;
        }
    }
}

/// Mild solution of `∂t F = ∂xx F − χ ∂x A(F) + B(F)` at time `t` by Picard
/// iteration on the representation
///
/// ```text
/// F_t = e^{tΔ}F0 + ∫_0^t e^{(t−s)Δ} [ −χ ∂x A(F_s) + B(F_s) ] ds,
/// ```
///
/// with the time integral discretized by the midpoint rule over `n_slices`
/// slices.
pub fn duhamel_f(f0: &GridField, chi: f64, t: f64, n_slices: usize) -> Result<DuhamelSolution> {
    const MAX_ITER: usize = 60;
    const TOL: f64 = 1e-11;
    if !(t >= 0.0) || n_slices == 0 {
        return Err(Error::InvalidInput("need t >= 0 and at least one slice".into()));
    }
    if t == 0.0 {
        return Ok(DuhamelSolution {
            f: f0.clone(),
            iterations: 0,
            increment: 0.0,
        });
    }
    let n = f0.len();
    let dx = f0.dx;
    let h = t / n_slices as f64;

    let free: Vec<Vec<f64>> = (0..=n_slices)
        .map(|j| {
            let mut out = vec![0.0; n];
            HeatKernel::new(j as f64 * h, dx).apply(&f0.values, &mut out);
            out
        })
        .collect();
    // kernels[d] propagates over (d + 1/2)·h
    let kernels: Vec<HeatKernel> = (0..n_slices)
        .map(|d| HeatKernel::new((d as f64 + 0.5) * h, dx))
        .collect();

    let source = |a: &[f64], b: &[f64], out: &mut [f64]| {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let ap: Vec<f64> = mid.iter().map(|&z| go_primitive(z)).collect();
        for i in 0..n {
            let d = if i == 0 {
                (ap[1] - ap[0]) / dx
            } else if i == n - 1 {
                (ap[n - 1] - ap[n - 2]) / dx
            } else {
                (ap[i + 1] - ap[i - 1]) / (2.0 * dx)
            };
            out[i] = -chi * d + grow_primitive(mid[i]);
        }
    };

    let mut current = free.clone();
    let mut sources = vec![vec![0.0; n]; n_slices];
    let mut buf = vec![0.0; n];
    let mut last_inc = f64::INFINITY;
    let mut growth_streak = 0;
    for iter in 1..=MAX_ITER {
        for (k, s) in sources.iter_mut().enumerate() {
            source(&current[k], &current[k + 1], s);
        }
        let mut next = free.clone();
        for j in 1..=n_slices {
            for k in 0..j {
                kernels[j - k - 1].apply(&sources[k], &mut buf);
                for (acc, v) in next[j].iter_mut().zip(&buf) {
                    *acc += h * v;
                }
            }
        }
        let inc = next
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        current = next;
        if !inc.is_finite() {
            return Err(Error::Convergence(format!("non-finite iterate at iteration {iter}")));
        }
        if inc < TOL {
            return Ok(DuhamelSolution {
                f: GridField::new(f0.x0, dx, current.pop().unwrap())?,
                iterations: iter,
                increment: inc,
            });
        }
        if inc > last_inc {
            growth_streak += 1;
            if growth_streak >= 3 {
                return Err(Error::Convergence(format!(
                    "Picard increments grew for 3 iterations (last {inc:.3e}) at t = {t}"
                )));
            }
        } else {
            growth_streak = 0;
        }
        last_inc = inc;
    }
    Err(Error::Convergence(format!(
        "no convergence in {MAX_ITER} iterations (last increment {last_inc:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::WaveProfile;

    fn profile_grid(chi: f64, x_min: f64, x_max: f64, dx: f64) -> GridField {
        let p = WaveProfile::new(chi).unwrap();
        GridField::sample(x_min, x_max, dx, |x| p.evaluate(x)).unwrap()
    }

    #[test]
    fn tail_of_zero_is_zero() {
        let u = GridField::new(0.0, 0.1, vec![0.0; 10]).unwrap();
        let f = tail_integral(&u).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert_eq!(threshold(&f), None);
    }

    #[test]
    fn tail_of_exponential_has_unit_mass() {
        let chi = 2.0;
        let u = GridField::sample(0.0, 20.0 / chi, 0.01, |x| chi * (-chi * x).exp()).unwrap();
        let f = tail_integral(&u).unwrap();
        assert!((f.values[0] - 1.0).abs() < 0.02, "F(0) = {}", f.values[0]);
        assert_eq!(*f.values.last().unwrap(), 0.0);
        assert!(f.values.windows(2).all(|w| w[0] >= w[1]));
        assert!(tail_integral(&GridField::new(0.0, 1.0, vec![1.0, -1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn threshold_of_profile_sits_at_origin() {
        let u = profile_grid(2.0, -10.0, 20.0, 0.01);
        let xbar = threshold(&tail_integral(&u).unwrap()).unwrap();
        assert!(xbar.abs() <= 0.01, "xbar = {xbar}");
    }

    #[test]
    fn threshold_none_below_unit_mass() {
        let u = GridField::sample(0.0, 1.0, 0.01, |_| 0.5).unwrap();
        assert_eq!(threshold(&tail_integral(&u).unwrap()), None);
        let f = GridField::new(0.0, 1.0, vec![3.0, 2.0, 0.5, 0.0]).unwrap();
        assert!((threshold(&f).unwrap() - (1.0 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn cfl_is_enforced() {
        let mut cfg = PdeConfig::new(2.0, 0.1, 0.0, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.dt = 0.01;
        let u = GridField::new(0.0, 0.1, vec![0.0; 11]).unwrap();
        assert!(matches!(step_u(&u, &cfg), Err(Error::Config(_))));
        cfg.dt = stable_dt(2.0, 0.1, 0.9);
        cfg.dx = 0.2;
        assert!(matches!(step_u(&u, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_stays_zero() {
        let cfg = PdeConfig::new(2.0, 0.05, 0.0, 5.0);
        let u = GridField::new(0.0, 0.05, vec![0.0; 101]).unwrap();
        let next = step_u(&u, &cfg).unwrap();
        assert!(next.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positivity_and_unit_mass_growth() {
        let dx = 0.02;
        let cfg = PdeConfig::new(2.0, dx, -10.0, 30.0);
        let u0 = GridField::sample(-10.0, 30.0, dx, |x| if (-1.0..=0.0).contains(&x) { 3.0 } else { 0.0 })
            .unwrap();
        let mut solver = PdeSolver::new(cfg.clone(), u0).unwrap();
        let mut prev = solver.mass();
        for _ in 0..2000 {
            solver.step().unwrap();
            assert!(solver.u().values.iter().all(|&v| v >= 0.0));
            let m = solver.mass();
            let rate = (m - prev) / cfg.dt;
            assert!((rate - 1.0).abs() <= 5.0 * dx, "mass rate {rate}");
            prev = m;
        }
    }

    #[test]
    fn pushed_profile_moves_at_sigma_star() {
        let dx = 0.02;
        let cfg = PdeConfig::new(2.0, dx, -15.0, 45.0);
        let mut solver = PdeSolver::new(cfg, profile_grid(2.0, -15.0, 45.0, dx)).unwrap();
        let rec = solver.run(10.0, 0.5).unwrap();
        let at = |t: f64| {
            let r = rec.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())).unwrap();
            assert!((r.t - t).abs() < 1e-3);
            r.xbar.unwrap()
        };
        let speed = (at(10.0) - at(1.0)) / 9.0;
        assert!((speed - 2.5).abs() < 0.05 * 2.5, "speed {speed}");
    }

    #[test]
    fn window_shift_preserves_front_and_mass_accounting() {
        let dx = 0.05;
        let mut fixed_cfg = PdeConfig::new(2.0, dx, -10.0, 80.0);
        fixed_cfg.left = LeftBoundary::Plateau;
        let mut moving_cfg = PdeConfig::new(2.0, dx, -10.0, 40.0);
        moving_cfg.window_shift = true;
        moving_cfg.left = LeftBoundary::Plateau;
        let mut fixed = PdeSolver::new(fixed_cfg, profile_grid(2.0, -10.0, 80.0, dx)).unwrap();
        let mut moving = PdeSolver::new(moving_cfg, profile_grid(2.0, -10.0, 40.0, dx)).unwrap();
        let a = fixed.run(24.0, 1.0).unwrap();
        let b = moving.run(24.0, 1.0).unwrap();
        assert!(moving.u().x0 > -10.0, "window never moved");
        for (ra, rb) in a.iter().zip(&b) {
            let d = (ra.xbar.unwrap() - rb.xbar.unwrap()).abs();
            assert!(d < 1e-6, "t {}: {d}", ra.t);
        }
        // mass gain equals elapsed time up to O(dx)
        let gain = b.last().unwrap().mass - b[0].mass;
        assert!((gain - 24.0).abs() < 24.0 * 5.0 * dx, "gain {gain}");
    }

    #[test]
    fn bramson_fit_recovers_generator() {
        let series: Vec<(f64, f64)> = (1..=400)
            .map(|i| {
                let t = i as f64 * 0.5;
                (t, 2.0 * t - 1.5 * t.ln())
            })
            .collect();
        let fit = bramson_fit(&series, 20.0).unwrap();
        assert!((fit.sigma - 2.0).abs() < 1e-9);
        assert!((fit.c - 1.5).abs() < 1e-8);
        assert!(fit.b.abs() < 1e-7);
        assert!(matches!(bramson_fit(&series[..5], 0.5), Err(Error::InsufficientData(_))));
        assert!(matches!(bramson_fit(&series, 60.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn heat_kernel_preserves_linear_functions() {
        let v: Vec<f64> = (0..50).map(|i| 3.0 - 0.2 * i as f64).collect();
        let mut out = vec![0.0; 50];
        HeatKernel::new(0.3, 0.1).apply(&v, &mut out);
        for (a, b) in v.iter().zip(&out) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn duhamel_of_zero_is_zero() {
        let f0 = GridField::new(0.0, 0.05, vec![0.0; 100]).unwrap();
        let sol = duhamel_f(&f0, 2.0, 0.3, 8).unwrap();
        assert!(sol.f.values.iter().all(|&v| v == 0.0));
    }

    /// Below the threshold the equation is linear, F_t = e^t · e^{tΔ} F0.
    /// Oracle: Gaussian convolution by direct quadrature of the heat kernel
    /// against the closed-form smooth F0.
    #[test]
    fn duhamel_linear_regime_matches_closed_form() {
        let dx = 0.05;
        let t = 0.4;
        let f0_fn = |x: f64| 0.2 * (-x * x / 2.0).exp();
        let f0 = GridField::sample(-10.0, 10.0, dx, f0_fn).unwrap();
        let sol = duhamel_f(&f0, 2.0, t, 16).unwrap();
        // e^{tΔ} of a Gaussian with variance 1 is a Gaussian with variance 1 + 2t.
        let var = 1.0 + 2.0 * t;
        let mut worst: f64 = 0.0;
        for i in 0..sol.f.len() {
            let x = sol.f.x(i);
            let exact = t.exp() * 0.2 * (-x * x / (2.0 * var)).exp() / var.sqrt();
            worst = worst.max((sol.f.values[i] - exact).abs());
        }
        assert!(worst < 1e-4, "worst {worst}");
        assert!(sol.f.values.iter().all(|&v| v <= 1.0));
    }
}
