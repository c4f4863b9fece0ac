//! Closed-form reference quantities and estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_chi(chi: f64) -> Result<()> {
    if chi > 0.0 && chi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("chi must be positive, got {chi}")))
    }
}

/// Minimal traveling-wave speed: `χ + 1/χ` for pushed fronts (`χ > 1`),
/// `2` for pulled fronts.
pub fn sigma_star(chi: f64) -> Result<f64> {
    check_chi(chi)?;
    Ok(if chi > 1.0 { chi + 1.0 / chi } else { 2.0 })
}

/// Whether the front is pushed (`σ* > 2`).
pub fn is_pushed(chi: f64) -> bool {
    chi > 1.0
}

/// Minimal-speed traveling wave, normalized so that the threshold sits at
/// `z = 0`: the profile carries mass exactly 1 on `z > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub chi: f64,
    pub sigma_star: f64,
}

impl WaveProfile {
    pub fn new(chi: f64) -> Result<Self> {
        Ok(Self {
            chi,
            sigma_star: sigma_star(chi)?,
        })
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        let chi = self.chi;
        if chi > 1.0 {
            if z <= 0.0 {
                chi
            } else {
                chi * (-chi * z).exp()
            }
        } else if z <= 0.0 {
            1.0 / (2.0 - chi)
        } else {
            ((1.0 - chi) * z + 1.0) * (-z).exp() / (2.0 - chi)
        }
    }

    /// Value on the plateau `z <= 0`.
    pub fn plateau(&self) -> f64 {
        self.evaluate(0.0)
    }

    /// `∫_0^z u(y) dy` (negative for `z < 0`).
    pub fn primitive(&self, z: f64) -> f64 {
        let chi = self.chi;
        if z <= 0.0 {
            return self.plateau() * z;
        }
        if chi > 1.0 {
            -(-chi * z).exp_m1()
        } else {
            1.0 - ((1.0 - chi) * z / (2.0 - chi) + 1.0) * (-z).exp()
        }
    }

    /// Exact integral of the profile over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }
}

pub fn wave_profile(chi: f64, z: f64) -> Result<f64> {
    Ok(WaveProfile::new(chi)?.evaluate(z))
}

/// Average spreading speed `(ξ(t2) − ξ(t1)) / (t2 − t1)`, reading `ξ` at the
/// samples nearest to `t1` and `t2`.
pub fn speed_estimator(series: &[(f64, f64)], t1: f64, t2: f64) -> Result<f64> {
    if !(t1 < t2) {
        return Err(Error::InvalidInput(format!("need t1 < t2, got [{t1}, {t2}]")));
    }
    let (a, xa) = nearest_sample(series, t1)?;
    let (b, xb) = nearest_sample(series, t2)?;
    if b <= a {
        return Err(Error::OutOfRange(format!(
            "samples nearest to {t1} and {t2} coincide"
        )));
    }
    Ok((xb - xa) / (b - a))
}

fn nearest_sample(series: &[(f64, f64)], t: f64) -> Result<(f64, f64)> {
    let first = series.first().map(|p| p.0);
    let last = series.last().map(|p| p.0);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::OutOfRange("empty series".into()));
    };
    let tol = 1e-9 * t.abs().max(1.0);
    if t < first - tol || t > last + tol {
        return Err(Error::OutOfRange(format!(
            "time {t} outside the recorded range [{first}, {last}]"
        )));
    }
    let i = series.partition_point(|p| p.0 < t);
    let candidates = [i.checked_sub(1), (i < series.len()).then_some(i)];
    let best = candidates
        .into_iter()
        .flatten()
        .min_by(|&p, &q| {
            (series[p].0 - t)
                .abs()
                .total_cmp(&(series[q].0 - t).abs())
        })
        .expect("non-empty series");
    Ok(series[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width: f64,
    pub lo: f64,
    pub hi: f64,
    /// Frame origin: a value `x` is binned at `x − center`.
    pub center: f64,
}

/// Counts over left-closed, right-open bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub bin_width: f64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_left(&self) -> &[f64] {
        &self.edges[..self.counts.len()]
    }

    /// Scale that puts the traveling-wave profile on the count axis: a bin of
    /// width `dx` under a plateau of density `Kχ` holds `Kχ·dx` particles.
    pub fn overlay_constant(&self, k: usize, chi: f64) -> f64 {
        overlay_constant(k, chi, self.bin_width)
    }

    /// Counts divided by `total · bin_width` (unit mass on the binned range).
    pub fn normalized_density(&self) -> Vec<f64> {
        let total = self.total() as f64;
        if total == 0.0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts
            .iter()
            .map(|&c| c as f64 / (total * self.bin_width))
            .collect()
    }
}

pub fn overlay_constant(k: usize, chi: f64, bin_width: f64) -> f64 {
    k as f64 * chi * bin_width
}

pub fn histogram(values: &[f64], spec: &HistogramSpec) -> Result<Histogram> {
    if !(spec.bin_width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bin width must be positive, got {}",
            spec.bin_width
        )));
    }
    let span = spec.hi - spec.lo;
    let nbins = if span > 0.0 {
        (span / spec.bin_width - 1e-9).ceil().max(0.0) as usize
    } else {
        0
    };
    let edges: Vec<f64> = (0..=nbins)
        .map(|i| spec.lo + i as f64 * spec.bin_width)
        .collect();
    let mut counts = vec![0u64; nbins];
    if nbins > 0 {
        for &x in values {
            let z = x - spec.center;
            if z < spec.lo || z >= spec.hi {
                continue;
            }
            let mut b = ((z - spec.lo) / spec.bin_width).floor() as usize;
            // guard rounding against the computed edges
            if b >= nbins {
                b = nbins - 1;
            }
            if z < edges[b] && b > 0 {
                b -= 1;
            } else if b + 1 < nbins && z >= edges[b + 1] {
                b += 1;
            }
            counts[b] += 1;
        }
    }
    Ok(Histogram {
        edges,
        counts,
        bin_width: spec.bin_width,
    })
}

/// Relative L¹ distance between the normalized histogram and the normalized
/// traveling-wave profile on the binned range (both rescaled to unit mass).
pub fn profile_l1_error(hist: &Histogram, profile: &WaveProfile) -> f64 {
    let density = hist.normalized_density();
    let lo = hist.edges[0];
    let hi = hist.edges[hist.counts.len()];
    let mass = profile.integral(lo, hi);
    density
        .iter()
        .zip(hist.edges.windows(2))
        .map(|(&h, e)| {
            let p = profile.integral(e[0], e[1]) / (mass * hist.bin_width);
            (h - p).abs() * hist.bin_width
        })
        .sum()
}
