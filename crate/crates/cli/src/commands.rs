//! One function per subcommand. Each resolves its runs from the spec,
//! executes them on the worker pool, writes files in run order and returns
//! the manifest.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use gogrow_core::analytics::{histogram, overlay_constant, profile_l1_error, speed_estimator, HistogramSpec, WaveProfile};
use gogrow_core::ancestral_fp::{fp_evolve, sample_v_infinity, truncated_profile, v_infinity, DriftProfile};
use gogrow_core::engine::{run, RunRecord, SimConfig};
use gogrow_core::grid::GridField;
use gogrow_core::limit_pde::{bramson_fit, stable_dt, PdeConfig, PdeSolver};
use gogrow_core::seed::derive_seed;
use gogrow_core::verify::{run_criteria, CheckResult, Criterion, VerifyOptions};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::output::{opt_real, real, OutputDir, RunError, RunInfo, RunManifest, Status};
use crate::spec::{ExperimentSpec, Kind, PdeInit};

/// Result of a command: the manifest as written, plus lines for the
/// terminal.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub lines: Vec<String>,
    /// False when a run failed or (for `verify`) a criterion failed.
    pub ok: bool,
}

pub struct Harness {
    pool: rayon::ThreadPool,
}

impl Harness {
    /// `jobs = None` uses one worker per core.
    pub fn new(jobs: Option<usize>) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            if j == 0 {
                bail!("--jobs must be at least 1");
            }
            builder = builder.num_threads(j);
        }
        Ok(Self {
            pool: builder.build()?,
        })
    }

    pub fn execute(&self, kind: Kind, spec: &ExperimentSpec) -> Result<Outcome> {
        spec.validate()?;
        let start = Instant::now();
        let out = OutputDir::create(&spec.output_dir)?;
        let mut manifest = RunManifest::new(kind.as_str(), spec);
        let mut lines = Vec::new();
        let ok = match kind {
            Kind::Simulate => self.simulate(spec, &out, &mut manifest)?,
            Kind::SpeedSweep => self.speed_sweep(spec, &out, &mut manifest, &mut lines)?,
            Kind::Histogram => self.histogram(spec, &out, &mut manifest, &mut lines)?,
            Kind::Lineage => lineage(spec, &out, &mut manifest, &mut lines)?,
            Kind::PdeFront => pde_front(spec, &out, &mut manifest, &mut lines)?,
            Kind::FpEvolve => fp(spec, &out, &mut manifest, &mut lines)?,
            Kind::Verify => verify(spec, &out, &mut manifest, &mut lines)?,
        };
        manifest.wall_time_s = start.elapsed().as_secs_f64();
        let path = manifest.write(&out)?;
        lines.push(format!("manifest: {}", path.display()));
        Ok(Outcome { manifest, lines, ok })
    }

    fn map_runs<T: Send>(
        &self,
        runs: &[RunInfo],
        f: impl Fn(&RunInfo) -> Result<T> + Sync,
    ) -> Vec<Result<T>> {
        self.pool.install(|| runs.par_iter().map(&f).collect())
    }

    fn simulate(&self, spec: &ExperimentSpec, out: &OutputDir, manifest: &mut RunManifest) -> Result<bool> {
        let runs = plan_runs(spec);
        let results = self.map_runs(&runs, |r| Ok(run(&sim_config(spec, r))?));
        let mut snaps = out.csv("snapshots.csv", &["run_id", "t", "label", "x"])?;
        let mut xi = out.csv("xi.csv", &["run_id", "t", "N", "xi"])?;
        let mut errors = Vec::new();
        for (info, res) in runs.iter().zip(results) {
            match res {
                Ok(rec) => {
                    write_run(&rec, info.run_id, &mut snaps, &mut xi)?;
                }
                Err(e) => errors.push(run_error(info, e)),
            }
        }
        manifest.files.push(snaps.finish()?);
        manifest.files.push(xi.finish()?);
        finish_runs(manifest, runs, errors)
    }

    fn speed_sweep(
        &self,
        spec: &ExperimentSpec,
        out: &OutputDir,
        manifest: &mut RunManifest,
        lines: &mut Vec<String>,
    ) -> Result<bool> {
        let (t1, t2) = (spec.speed.t1, spec.speed.t2);
        let runs = plan_runs(spec);
        let results = self.map_runs(&runs, |r| {
            let cfg = SimConfig {
                positions_from: None,
                ..sim_config(spec, r)
            };
            let series = run(&cfg)?.xi_series();
            let speed = speed_estimator(&series, t1, t2)?;
            Ok((nearest(&series, t1), nearest(&series, t2), speed))
        });
        let mut file = out.csv("speed.csv", &["run_id", "K", "chi", "seed", "xi_t1", "xi_t2", "speed"])?;
        let mut errors = Vec::new();
        let mut groups: Vec<((usize, f64), Vec<f64>)> = Vec::new();
        for (info, res) in runs.iter().zip(results) {
            match res {
                Ok((a, b, speed)) => {
                    file.row([
                        info.run_id.to_string(),
                        info.k.to_string(),
                        real(info.chi),
                        info.seed.to_string(),
                        real(a),
                        real(b),
                        real(speed),
                    ])?;
                    match groups.iter_mut().find(|g| g.0 == (info.k, info.chi)) {
                        Some(g) => g.1.push(speed),
                        None => groups.push(((info.k, info.chi), vec![speed])),
                    }
                }
                Err(e) => errors.push(run_error(info, e)),
            }
        }
        manifest.files.push(file.finish()?);
        let summary: Vec<_> = groups
            .iter()
            .map(|((k, chi), v)| {
                let (m, sd) = mean_sd(v);
                lines.push(format!("K={k} chi={chi}: mean speed {m:.4} (sd {sd:.4}, n={})", v.len()));
                json!({"K": k, "chi": chi, "n": v.len(), "mean_speed": m, "sd": sd})
            })
            .collect();
        manifest.summary = json!({ "window": [t1, t2], "groups": summary });
        finish_runs(manifest, runs, errors)
    }

    fn histogram(
        &self,
        spec: &ExperimentSpec,
        out: &OutputDir,
        manifest: &mut RunManifest,
        lines: &mut Vec<String>,
    ) -> Result<bool> {
        let (ks, chis) = (spec.k_values(), spec.chi_values());
        if ks.len() != 1 || chis.len() != 1 {
            bail!("histogram pools replicates of a single (K, chi); got {} K values and {} chi values", ks.len(), chis.len());
        }
        let h = &spec.histogram;
        let t = h.t.unwrap_or(spec.sim.t_end);
        if t > spec.sim.t_end + 1e-9 {
            bail!("histogram time {t} is beyond t_end = {}", spec.sim.t_end);
        }
        let runs = plan_runs(spec);
        let results = self.map_runs(&runs, |r| {
            let cfg = SimConfig {
                positions_from: Some(t),
                ..sim_config(spec, r)
            };
            let rec = run(&cfg)?;
            let snap = rec.genealogy.nearest_snapshot(t)?;
            let xi = snap
                .xi
                .ok_or_else(|| anyhow!("fewer than K particles at t = {}", snap.time))?;
            Ok(snap.entries.iter().flatten().map(|&(_, x)| x - xi).collect::<Vec<f64>>())
        });
        let mut centered = Vec::new();
        let mut errors = Vec::new();
        let mut pooled = 0u64;
        for (info, res) in runs.iter().zip(results) {
            match res {
                Ok(v) => {
                    centered.extend(v);
                    pooled += 1;
                }
                Err(e) => errors.push(run_error(info, e)),
            }
        }
        let hspec = HistogramSpec {
            bin_width: h.bin_width,
            lo: h.lo,
            hi: h.hi,
            center: 0.0,
        };
        let hist = histogram(&centered, &hspec)?;
        let mut file = out.csv("histogram.csv", &["bin_left", "count"])?;
        for (left, count) in hist.bin_left().iter().zip(&hist.counts) {
            file.row([real(*left), count.to_string()])?;
        }
        manifest.files.push(file.finish()?);
        let (k, chi) = (ks[0], chis[0]);
        let per_run = overlay_constant(k, chi, h.bin_width);
        let l1 = (hist.total() > 0).then(|| profile_l1_error(&hist, &WaveProfile::new(chi).expect("validated chi")));
        lines.push(format!(
            "{} particles in [{}, {}) from {pooled} runs; overlay constant K·chi·dx = {per_run}",
            hist.total(),
            h.lo,
            h.hi
        ));
        manifest.summary = json!({
            "t": t,
            "runs_pooled": pooled,
            "overlay_constant_per_run": per_run,
            "overlay_constant_pooled": per_run * pooled as f64,
            "relative_l1_vs_profile": l1,
        });
        finish_runs(manifest, runs, errors)
    }
}

fn plan_runs(spec: &ExperimentSpec) -> Vec<RunInfo> {
    let mut runs = Vec::new();
    for (ki, &k) in spec.k_values().iter().enumerate() {
        for (ci, &chi) in spec.chi_values().iter().enumerate() {
            for rep in 0..spec.replicates {
                runs.push(RunInfo {
                    run_id: runs.len() as u64,
                    k,
                    chi,
                    replicate: rep,
                    seed: derive_seed(spec.sim.seed, &[ki as u64, ci as u64, rep]),
                });
            }
        }
    }
    runs
}

fn sim_config(spec: &ExperimentSpec, r: &RunInfo) -> SimConfig {
    SimConfig {
        chi: r.chi,
        k: r.k,
        seed: r.seed,
        ..spec.sim.clone()
    }
}

fn run_error(info: &RunInfo, e: anyhow::Error) -> RunError {
    RunError {
        run_id: info.run_id,
        error: format!("{e:#}"),
    }
}

fn finish_runs(manifest: &mut RunManifest, runs: Vec<RunInfo>, errors: Vec<RunError>) -> Result<bool> {
    manifest.runs = runs;
    let ok = errors.is_empty();
    if !ok {
        manifest.status = Status::Partial;
    }
    manifest.errors = errors;
    Ok(ok)
}

fn write_run(
    rec: &RunRecord,
    run_id: u64,
    snaps: &mut crate::output::CsvFile,
    xi: &mut crate::output::CsvFile,
) -> Result<()> {
    let id = run_id.to_string();
    for snap in rec.genealogy.snapshots() {
        xi.row([id.clone(), real(snap.time), snap.n.to_string(), opt_real(snap.xi)])?;
        for &(node, x) in snap.entries.iter().flatten() {
            snaps.row([
                id.clone(),
                real(snap.time),
                rec.genealogy.label(node).to_string(),
                real(x),
            ])?;
        }
    }
    Ok(())
}

fn nearest(series: &[(f64, f64)], t: f64) -> f64 {
    series
        .iter()
        .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
        .map(|p| p.1)
        .unwrap_or(f64::NAN)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Lookback grid `0, s_step, ..., s_max`.
fn s_grid(s_max: f64, s_step: f64) -> Result<Vec<f64>> {
    if !(s_step > 0.0) || !(s_max >= 0.0) {
        bail!("lineage needs s_step > 0 and s_max >= 0");
    }
    let n = (s_max / s_step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * s_step).collect())
}

fn lineage(spec: &ExperimentSpec, out: &OutputDir, manifest: &mut RunManifest, lines: &mut Vec<String>) -> Result<bool> {
    let l = &spec.lineage;
    let t = l.t.unwrap_or(spec.sim.t_end);
    if t > spec.sim.t_end + 1e-9 {
        bail!("lineage time {t} is beyond t_end = {}", spec.sim.t_end);
    }
    let grid = s_grid(l.s_max, l.s_step)?;
    if l.s_max > t {
        bail!("lookback s_max = {} reaches before time 0 (t = {t})", l.s_max);
    }
    // a single run: the first (K, chi), replicate 0
    let info = RunInfo {
        run_id: 0,
        k: spec.k_values()[0],
        chi: spec.chi_values()[0],
        replicate: 0,
        seed: derive_seed(spec.sim.seed, &[0, 0, 0]),
    };
    let cfg = SimConfig {
        positions_from: Some(t - l.s_max),
        ..sim_config(spec, &info)
    };
    let rec = run(&cfg)?;
    let g = &rec.genealogy;
    let window = (l.window[0], l.window[1]);

    let mut anc_file = out.csv("ancestry.csv", &["s", "distinct_ancestors", "selection_size"])?;
    let mut selection = Vec::new();
    for &s in &grid {
        let d = g.ancestral_distribution(t, window, s).context("ancestral distribution")?;
        anc_file.row([real(s), d.distinct_ancestors.to_string(), d.selection_size.to_string()])?;
        if s == 0.0 {
            selection = d.z_now.clone();
        }
    }
    let now = g.nearest_snapshot(t)?;
    let xi_now = now.xi.ok_or_else(|| anyhow!("fewer than K particles at t = {}", now.time))?;
    let mut lin_file = out.csv("lineage.csv", &["particle", "s", "y", "y_hat"])?;
    let mut count = 0usize;
    for &(node, x) in now.entries.iter().flatten() {
        let z = x - xi_now;
        if z < window.0 || z > window.1 {
            continue;
        }
        count += 1;
        let label = g.label(node);
        let sample = g.lineage_positions(&label, t, &grid)?;
        let name = label.to_string();
        for j in 0..grid.len() {
            lin_file.row([name.clone(), real(grid[j]), real(sample.y[j]), real(sample.y_hat[j])])?;
        }
    }
    debug_assert_eq!(count, selection.len());
    manifest.files.push(lin_file.finish()?);
    manifest.files.push(anc_file.finish()?);
    lines.push(format!(
        "K={} chi={}: {} particles selected in [{}, {}] at t={}",
        info.k, info.chi, count, window.0, window.1, now.time
    ));
    manifest.summary = json!({ "t": now.time, "selection_size": count });
    finish_runs(manifest, vec![info], Vec::new())
}

fn pde_front(spec: &ExperimentSpec, out: &OutputDir, manifest: &mut RunManifest, lines: &mut Vec<String>) -> Result<bool> {
    let p = &spec.pde;
    let chi = p.chi.unwrap_or(spec.sim.chi);
    if !(p.record_dt > 0.0) {
        bail!("pde.record_dt must be positive");
    }
    let cfg = PdeConfig {
        chi,
        dx: p.dx,
        // largest stable step that divides the record interval
        dt: p.dt.unwrap_or_else(|| {
            let dt = stable_dt(chi, p.dx, p.safety);
            p.record_dt / (p.record_dt / dt).ceil()
        }),
        x_min: p.x_min,
        x_max: p.x_max,
        left: p.left,
        window_shift: p.window_shift,
        safety: p.safety,
    };
    let profile = WaveProfile::new(chi)?;
    let u0 = match p.init {
        PdeInit::Profile => GridField::sample(p.x_min, p.x_max, p.dx, |x| profile.evaluate(x))?,
        PdeInit::Step => {
            let plateau = profile.plateau();
            GridField::sample(p.x_min, p.x_max, p.dx, |x| if x <= 0.0 { plateau } else { 0.0 })?
        }
    };
    let mut solver = PdeSolver::new(cfg, u0)?;
    let mut xbar_file = out.csv("pde_xbar.csv", &["t", "xbar", "mass"])?;
    let mut prof_file = out.csv("pde_profile.csv", &["t", "x", "u"])?;
    let every = ((p.profile_dt / p.record_dt).round() as u64).max(1);
    let mut visits = 0u64;
    let mut series = Vec::new();
    let mut write_err: Option<anyhow::Error> = None;
    solver.run_with(p.t_end, p.record_dt, |s| {
        if write_err.is_some() {
            return;
        }
        let r = s.record();
        if let Some(x) = r.xbar {
            series.push((r.t, x));
        }
        let mut res = xbar_file.row([real(r.t), opt_real(r.xbar), real(r.mass)]);
        if res.is_ok() && visits % every == 0 {
            let u = s.u();
            for (i, v) in u.values.iter().enumerate() {
                res = prof_file.row([real(r.t), real(u.x(i)), real(*v)]);
                if res.is_err() {
                    break;
                }
            }
        }
        visits += 1;
        if let Err(e) = res {
            write_err = Some(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    manifest.files.push(xbar_file.finish()?);
    manifest.files.push(prof_file.finish()?);

    let fit = bramson_fit(&series, p.fit_from);
    let summary = match &fit {
        Ok(f) => {
            lines.push(format!(
                "chi={chi}: fit from t={} gives sigma {:.4}, c {:.3}, b {:.3}",
                p.fit_from, f.sigma, f.c, f.b
            ));
            json!({ "sigma_star": profile.sigma_star, "fit": f })
        }
        Err(e) => {
            lines.push(format!("chi={chi}: no fit ({e})"));
            json!({ "sigma_star": profile.sigma_star, "fit_error": e.to_string() })
        }
    };
    manifest.summary = summary;
    Ok(true)
}

#[derive(Serialize)]
struct FpSummaryRow {
    s: f64,
    mean: f64,
    mode: f64,
    l1_to_equilibrium: Option<f64>,
}

fn fp(spec: &ExperimentSpec, out: &OutputDir, manifest: &mut RunManifest, lines: &mut Vec<String>) -> Result<bool> {
    let f = &spec.fp;
    let chi = f.chi.unwrap_or(spec.sim.chi);
    let drift = DriftProfile::new(chi)?;
    let v0 = truncated_profile(chi, f.z_min, f.z_max, f.dz, f.support[0], f.support[1])?;
    if !(f.record_dt > 0.0) {
        bail!("fp.record_dt must be positive");
    }
    let n = (f.s_end / f.record_dt + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * f.record_dt).collect();
    let records = fp_evolve(&v0, &drift, f.s_end, &times)?;
    let equilibrium = v_infinity(chi, 0.0)?
        .normalizable
        .then(|| sample_v_infinity(chi, f.z_min, f.z_max, f.dz))
        .transpose()?;

    let mut file = out.csv("fp_profile.csv", &["s", "z", "v"])?;
    let mut rows = Vec::new();
    for r in &records {
        for (i, v) in r.field.values.iter().enumerate() {
            file.row([real(r.s), real(r.field.x(i)), real(*v)])?;
        }
        rows.push(FpSummaryRow {
            s: r.s,
            mean: r.mean,
            mode: r.mode,
            l1_to_equilibrium: equilibrium.as_ref().map(|e| r.field.l1_distance(e)).transpose()?,
        });
    }
    manifest.files.push(file.finish()?);
    if let Some(last) = rows.last() {
        lines.push(format!(
            "chi={chi}: s={:.1} mean {:.4} mode {:.3}{}",
            last.s,
            last.mean,
            last.mode,
            last.l1_to_equilibrium
                .map(|d| format!(", L1 to equilibrium {d:.3e}"))
                .unwrap_or_default()
        ));
    }
    manifest.summary = json!({ "chi": chi, "records": rows });
    Ok(true)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    all_pass: bool,
    results: &'a [CheckResult],
}

fn verify(spec: &ExperimentSpec, out: &OutputDir, manifest: &mut RunManifest, lines: &mut Vec<String>) -> Result<bool> {
    let criteria: Vec<Criterion> = if spec.verify.criteria.is_empty() {
        Criterion::ALL.to_vec()
    } else {
        spec.verify
            .criteria
            .iter()
            .map(|s| s.parse::<Criterion>())
            .collect::<Result<_, _>>()?
    };
    let opts = VerifyOptions {
        base_seed: spec.verify.base_seed.unwrap_or(VerifyOptions::default().base_seed),
    };
    let results = match catch_unwind(AssertUnwindSafe(|| run_criteria(&criteria, &opts))) {
        Ok(r) => r,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            criteria
                .iter()
                .map(|c| CheckResult {
                    name: c.name().into(),
                    measured: f64::NAN,
                    tolerance: "experiment completes".into(),
                    pass: false,
                    detail: format!("internal error: {msg}"),
                    seconds: 0.0,
                })
                .collect()
        }
    };
    let all_pass = results.iter().all(|r| r.pass);
    lines.extend(results.iter().map(CheckResult::line));
    manifest.files.push(out.json(
        "verify.json",
        &VerifyReport {
            all_pass,
            results: &results,
        },
    )?);
    manifest.summary = json!({ "all_pass": all_pass, "base_seed": opts.base_seed });
    Ok(all_pass)
}
