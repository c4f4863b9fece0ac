//! Law of an ancestral lineage seen from the front.
//!
//! Looking backwards from a particle sampled out of the traveling wave, the
//! ancestor's position `Ŷ_s` in the moving frame is a diffusion with
//! generator `∂zz + β(z)∂z`, where
//!
//! ```text
//! β(z) = σ* − χ·1{z<0} + 2 ∂z u(z) / u(z)
//! ```
//!
//! and `u` is the minimal-speed wave. Its density solves
//! `∂s v = ∂zz v − ∂z(β v)`, integrated here with a conservative upwind
//! finite-volume scheme.

use serde::Serialize;

use crate::analytics::{sigma_star, WaveProfile};
use crate::error::{Error, Result};
use crate::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftProfile {
    pub chi: f64,
    pub sigma_star: f64,
}

impl DriftProfile {
    pub fn new(chi: f64) -> Result<Self> {
        Ok(Self {
            chi,
            sigma_star: sigma_star(chi)?,
        })
    }

    /// `β(z)`; at `z = 0` the right limit is returned.
    pub fn beta(&self, z: f64) -> f64 {
        let chi = self.chi;
        if chi > 1.0 {
            if z < 0.0 {
                1.0 / chi
            } else {
                1.0 / chi - chi
            }
        } else if z < 0.0 {
            2.0 - chi
        } else {
            2.0 * (1.0 - chi) / ((1.0 - chi) * z + 1.0)
        }
    }

    /// `(β(0⁻), β(0⁺))`.
    pub fn kink(&self) -> (f64, f64) {
        (self.beta(-f64::MIN_POSITIVE), self.beta(0.0))
    }

    /// Upper bound for `|β|` over the real line.
    pub fn max_abs(&self) -> f64 {
        let (l, r) = self.kink();
        // For χ ≤ 1 the right branch decays monotonically from β(0⁺).
        l.abs().max(r.abs())
    }
}

pub fn beta_drift(chi: f64, z: f64) -> Result<f64> {
    Ok(DriftProfile::new(chi)?.beta(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub value: f64,
    /// False in the pulled regime, where `v∞` has infinite mass.
    pub normalizable: bool,
}

/// Stationary density of the lineage: a probability density for `χ > 1`,
/// an unnormalizable stationary measure otherwise.
pub fn v_infinity(chi: f64, z: f64) -> Result<Equilibrium> {
    sigma_star(chi)?;
    Ok(if chi > 1.0 {
        let c = (chi * chi - 1.0) / (chi * chi * chi);
        let value = if z <= 0.0 {
            c * (z / chi).exp()
        } else {
            c * (-(chi - 1.0 / chi) * z).exp()
        };
        Equilibrium {
            value,
            normalizable: true,
        }
    } else {
        let value = if z < 0.0 {
            ((2.0 - chi) * z).exp()
        } else {
            let a = (1.0 - chi) * z + 1.0;
            a * a
        };
        Equilibrium {
            value,
            normalizable: false,
        }
    })
}

/// Largest stable step for the upwind scheme, scaled by `safety`.
///
/// Each explicit coefficient stays nonnegative when
/// `dt·(2/dz² + 2·max|β|/dz) ≤ 1`.
pub fn fp_stable_dt(drift: &DriftProfile, dz: f64, safety: f64) -> f64 {
    safety / (2.0 / (dz * dz) + 2.0 * drift.max_abs() / dz)
}

/// Precomputed interface drifts for a fixed grid.
#[derive(Debug, Clone)]
struct FluxPlan {
    dz: f64,
    /// `(β⁺, β⁻)` at interface `i − 1/2`, `i = 0..=n`.
    split: Vec<(f64, f64)>,
}

impl FluxPlan {
    fn new(v: &GridField, drift: &DriftProfile) -> Self {
        let n = v.len();
        let dz = v.dx;
        let split = (0..=n)
            .map(|i| {
                let z = v.x0 + (i as f64 - 0.5) * dz;
                if z.abs() <= 1e-9 * dz {
                    // Interface on the kink: each side contributes its own
                    // limit in its upwind direction.
                    let (l, r) = drift.kink();
                    (l.max(0.0), r.min(0.0))
                } else {
                    let b = drift.beta(z);
                    (b.max(0.0), b.min(0.0))
                }
            })
            .collect();
        Self { dz, split }
    }

    fn max_abs(&self) -> f64 {
        self.split
            .iter()
            .map(|&(p, m)| p.max(-m))
            .fold(0.0, f64::max)
    }

    fn check_cfl(&self, dt: f64) -> Result<()> {
        let load = dt * (2.0 / (self.dz * self.dz) + 2.0 * self.max_abs() / self.dz);
        if !(dt > 0.0) || load > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "CFL violated: dt·(2/dz² + 2·max|β|/dz) = {load:.4} > 1"
            )));
        }
        Ok(())
    }

    /// `out = v − dt/dz · (F_{i+1/2} − F_{i−1/2})` with zero ghosts.
    fn step(&self, v: &[f64], dt: f64, out: &mut [f64]) {
        let n = v.len();
        let inv = 1.0 / self.dz;
        let lam = dt * inv;
        let flux = |i: usize| -> f64 {
            // interface i − 1/2 between cells i−1 and i
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i < n { v[i] } else { 0.0 };
            let (p, m) = self.split[i];
            p * left + m * right - (right - left) * inv
        };
        let mut f_left = flux(0);
        for i in 0..n {
            let f_right = flux(i + 1);
            out[i] = v[i] - lam * (f_right - f_left);
            f_left = f_right;
        }
    }
}

/// One conservative upwind step of `∂s v = ∂zz v − ∂z(β v)`.
pub fn fp_step(v: &GridField, drift: &DriftProfile, dt: f64) -> Result<GridField> {
    let plan = FluxPlan::new(v, drift);
    plan.check_cfl(dt)?;
    let mut out = v.zeros_like();
    plan.step(&v.values, dt, &mut out.values);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpRecord {
    pub s: f64,
    pub field: GridField,
    pub mean: f64,
    pub mode: f64,
}

impl FpRecord {
    fn of(s: f64, field: GridField) -> Self {
        Self {
            s,
            mean: field.mean(),
            mode: field.argmax(),
            field,
        }
    }
}

/// Mass allowed in the outermost 1% of cells on either side.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

fn boundary_mass(v: &GridField) -> f64 {
    let n = v.len();
    let edge = (n / 100).max(1);
    let left: f64 = v.values[..edge].iter().sum();
    let right: f64 = v.values[n - edge..].iter().sum();
    v.dx * (left + right)
}

/// Evolves `v0` to `s_end`, recording the field at each of `record_times`
/// (clamped to `[0, s_end]`; the final time is always recorded).
pub fn fp_evolve(
    v0: &GridField,
    drift: &DriftProfile,
    s_end: f64,
    record_times: &[f64],
) -> Result<Vec<FpRecord>> {
    if !(s_end >= 0.0) {
        return Err(Error::InvalidInput(format!("s_end must be >= 0, got {s_end}")));
    }
    if (v0.mass() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "initial datum must have unit mass, got {}",
            v0.mass()
        )));
    }
    if v0.values.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("initial datum must be nonnegative".into()));
    }
    if s_end == 0.0 {
        return Ok(vec![FpRecord::of(0.0, v0.clone())]);
    }
    let plan = FluxPlan::new(v0, drift);
    let dt_max = 0.9 / (2.0 / (v0.dx * v0.dx) + 2.0 * plan.max_abs() / v0.dx);
    let total = (s_end / dt_max).ceil() as u64;
    let dt = s_end / total as f64;
    plan.check_cfl(dt)?;

    let mut wanted: Vec<u64> = record_times
        .iter()
        .filter(|s| s.is_finite())
        .map(|&s| ((s.clamp(0.0, s_end) / dt).round() as u64).min(total))
        .collect();
    wanted.push(total);
    wanted.sort_unstable();
    wanted.dedup();

    let mut out = Vec::with_capacity(wanted.len());
    let mut cur = v0.clone();
    let mut next = v0.zeros_like();
    let mut step = 0u64;
    let guard = |field: &GridField, s: f64| -> Result<()> {
        let m = boundary_mass(field);
        if m > BOUNDARY_MASS_LIMIT {
            return Err(Error::DomainTooSmall { s, boundary_mass: m });
        }
        Ok(())
    };
    for target in wanted {
        while step < target {
            plan.step(&cur.values, dt, &mut next.values);
            std::mem::swap(&mut cur.values, &mut next.values);
            step += 1;
            if step % 4096 == 0 {
                guard(&cur, step as f64 * dt)?;
            }
        }
        let s = step as f64 * dt;
        guard(&cur, s)?;
        out.push(FpRecord::of(s, cur.clone()));
    }
    Ok(out)
}

/// The wave profile restricted to `[lo, hi]` and normalized to unit mass,
/// sampled on the grid `x_min + i·dz`.
pub fn truncated_profile(
    chi: f64,
    x_min: f64,
    x_max: f64,
    dz: f64,
    lo: f64,
    hi: f64,
) -> Result<GridField> {
    let p = WaveProfile::new(chi)?;
    let mut g = GridField::sample(x_min, x_max, dz, |z| {
        if (lo..=hi).contains(&z) {
            p.evaluate(z)
        } else {
            0.0
        }
    })?;
    let m = g.mass();
    if !(m > 0.0) {
        return Err(Error::InvalidInput(format!("no grid cells in [{lo}, {hi}]")));
    }
    g.values.iter_mut().for_each(|v| *v /= m);
    Ok(g)
}

/// `v∞` sampled on a grid (raw values; not renormalized).
pub fn sample_v_infinity(chi: f64, x_min: f64, x_max: f64, dz: f64) -> Result<GridField> {
    sigma_star(chi)?;
    GridField::sample(x_min, x_max, dz, |z| {
        v_infinity(chi, z).map(|e| e.value).unwrap_or(f64::NAN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_examples() {
        assert_eq!(beta_drift(2.0, -1.0).unwrap(), 0.5);
        assert_eq!(beta_drift(2.0, 1.0).unwrap(), -1.5);
        assert_eq!(beta_drift(1.0, 1.0).unwrap(), 0.0);
        assert!(beta_drift(0.0, 1.0).is_err());
        let d = DriftProfile::new(0.5).unwrap();
        assert_eq!(d.kink(), (1.5, 1.0));
        let d = DriftProfile::new(2.0).unwrap();
        assert_eq!(d.kink(), (0.5, -1.5));
    }

    #[test]
    fn v_infinity_examples() {
        let e = v_infinity(2.0, 0.0).unwrap();
        assert_eq!(e.value, 0.375);
        assert!(e.normalizable);
        let rate = -(v_infinity(2.0, 2.0).unwrap().value / v_infinity(2.0, 1.0).unwrap().value).ln();
        assert!((rate - 1.5).abs() < 1e-12);
        let e = v_infinity(0.5, 1.0).unwrap();
        assert_eq!(e.value, 2.25);
        assert!(!e.normalizable);
        assert!(v_infinity(-1.0, 0.0).is_err());
    }

    /// Oracle: adaptive-free Simpson quadrature of the closed form.
    #[test]
    fn pushed_equilibrium_is_a_density() {
        for chi in [1.5, 2.0, 3.0] {
            let f = |z: f64| v_infinity(chi, z).unwrap().value;
            let simpson = |a: f64, b: f64, n: usize| {
                let h = (b - a) / n as f64;
                let mut s = f(a) + f(b);
                for i in 1..n {
                    s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                s * h / 3.0
            };
            let mass = simpson(-60.0 * chi, 0.0, 200_000) + simpson(0.0, 80.0, 200_000);
            assert!((mass - 1.0).abs() < 1e-9, "chi {chi}: {mass}");
        }
    }

    /// β − σ* + χ·1{z<0} equals twice the log-derivative of the wave
    /// profile; the oracle differentiates the profile numerically.
    #[test]
    fn beta_matches_log_derivative_of_profile() {
        for chi in [0.3, 0.5, 1.0, 1.5, 2.0, 4.0] {
            let d = DriftProfile::new(chi).unwrap();
            let p = WaveProfile::new(chi).unwrap();
            let h = 1e-5;
            for k in -40..=40 {
                let z = k as f64 * 0.25;
                if z.abs() < 0.01 {
                    continue;
                }
                let fd = ((p.evaluate(z + h)).ln() - (p.evaluate(z - h)).ln()) / (2.0 * h);
                let lhs = d.beta(z) - d.sigma_star + if z < 0.0 { chi } else { 0.0 };
                assert!((lhs - 2.0 * fd).abs() < 1e-6, "chi {chi} z {z}: {lhs} vs {}", 2.0 * fd);
            }
        }
    }

    #[test]
    fn step_conserves_interior_mass() {
        let d = DriftProfile::new(2.0).unwrap();
        let v = truncated_profile(2.0, -40.0, 40.0, 0.05, -20.0, 10.0).unwrap();
        let dt = fp_stable_dt(&d, 0.05, 0.9);
        let mut cur = v.clone();
        for _ in 0..200 {
            cur = fp_step(&cur, &d, dt).unwrap();
        }
        assert!((cur.mass() - v.mass()).abs() < 1e-12 * v.mass());
        assert!(cur.values.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let d = DriftProfile::new(2.0).unwrap();
        let v = truncated_profile(2.0, -5.0, 5.0, 0.1, -1.0, 1.0).unwrap();
        assert!(matches!(fp_step(&v, &d, 0.01), Err(Error::Config(_))));
    }

    /// The transpose of the one-step operator fixes constants away from the
    /// two boundary cells: column sums of `(step − I)` vanish.
    #[test]
    fn adjoint_annihilates_constants() {
        for chi in [0.5, 1.0, 2.0] {
            let d = DriftProfile::new(chi).unwrap();
            let n = 41;
            let dz = 0.1;
            let dt = fp_stable_dt(&d, dz, 0.9);
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let v = GridField::new(-2.0, dz, e).unwrap();
                let out = fp_step(&v, &d, dt).unwrap();
                let col: f64 = out.values.iter().sum::<f64>() - 1.0;
                if j != 0 && j != n - 1 {
                    assert!(col.abs() <= 1e-12, "chi {chi} column {j}: {col}");
                }
            }
        }
    }

    #[test]
    fn v_infinity_is_discretely_stationary() {
        let d = DriftProfile::new(2.0).unwrap();
        let dz = 0.01;
        let v = sample_v_infinity(2.0, -40.0, 40.0, dz).unwrap();
        let dt = fp_stable_dt(&d, dz, 0.9);
        let next = fp_step(&v, &d, dt).unwrap();
        assert!(next.l1_distance(&v).unwrap() < 1e-3);
    }

    #[test]
    fn evolve_zero_horizon_returns_initial_datum() {
        let d = DriftProfile::new(2.0).unwrap();
        let v = truncated_profile(2.0, -40.0, 40.0, 0.05, -20.0, 10.0).unwrap();
        let rec = fp_evolve(&v, &d, 0.0, &[0.0, 1.0]).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].field, v);
    }

    #[test]
    fn evolve_detects_small_domain() {
        let d = DriftProfile::new(0.5).unwrap();
        let v = truncated_profile(0.5, -22.0, 12.0, 0.05, -20.0, 10.0).unwrap();
        assert!(matches!(
            fp_evolve(&v, &d, 10.0, &[]),
            Err(Error::DomainTooSmall { .. })
        ));
    }

    #[test]
    fn evolve_rejects_unnormalized_input() {
        let d = DriftProfile::new(2.0).unwrap();
        let v = GridField::sample(-5.0, 5.0, 0.1, |_| 1.0).unwrap();
        assert!(matches!(fp_evolve(&v, &d, 1.0, &[]), Err(Error::InvalidInput(_))));
    }
}
