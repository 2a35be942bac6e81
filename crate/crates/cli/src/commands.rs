//! One driver per command: compute, then write CSV + metadata atomically.

use crate::config::{Command, ExperimentConfig};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use wavemaps_core::enhanced::{default_scales, default_shifts, ds_norm, hhl_scaling_report, WaveProfiles};
use wavemaps_core::illposed::divergence_scan;
use wavemaps_core::io::{self, CsvTable, Metadata};
use wavemaps_core::randomdata::{data_norm_table, linear_waves, white_noise_velocity, SphereManifold};
use wavemaps_core::solver::*;
use wavemaps_core::Error;

/// How a run ended short of success.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// The experiment ran and reported a failure; diagnostics are on disk.
    #[error("{0}")]
    Validated(String),
    #[error(transparent)]
    Core(#[from] Error),
}

/// Files written by a run.
#[derive(Debug, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

impl Written {
    fn artifact(&mut self, dir: &Path, name: &str, table: &CsvTable, meta: Metadata) -> Result<(), Error> {
        let p = dir.join(name);
        let side = io::write_artifact(&p, table, &meta)?;
        self.files.push(p);
        self.files.push(side);
        Ok(())
    }

    fn json(&mut self, dir: &Path, name: &str, meta: &Metadata) -> Result<(), Error> {
        let p = dir.join(name);
        io::write_json(&p, meta)?;
        self.files.push(p);
        Ok(())
    }
}

fn is_validated_failure(e: &Error) -> bool {
    matches!(e, Error::NonContraction { .. } | Error::MaxIter { .. } | Error::BlowUp { .. })
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Written, RunError> {
    let dir = cfg.out_dir();
    let config = serde_json::to_value(cfg).map_err(Error::from)?;
    let meta = |artifact: &str, summary: Value| Metadata::new(command.name(), artifact, config.clone(), summary);
    let mut w = Written::default();
    match command {
        Command::GenPath => gen_path(cfg, &dir, &mut w, &meta)?,
        Command::Hhl => hhl(cfg, &dir, &mut w, &meta)?,
        Command::Solve => solve(cfg, &dir, &mut w, &meta)?,
        Command::Converge => converge(cfg, &dir, &mut w, &meta)?,
        Command::Illposed => illposed(cfg, &dir, &mut w, &meta)?,
        Command::Norms => norms(cfg, &dir, &mut w, &meta)?,
    }
    Ok(w)
}

type MetaFn<'a> = dyn Fn(&str, Value) -> Metadata + 'a;

fn gen_path(cfg: &ExperimentConfig, dir: &Path, w: &mut Written, meta: &MetaFn) -> Result<(), RunError> {
    let sc = cfg.solver();
    let (_w, wb, path) = global_data(&sc)?;
    let m = SphereManifold::new(cfg.dim)?;
    let vel = white_noise_velocity(&path, &wb, &m)?;
    let summary = json!({
        "points": path.grid.num_points,
        "basepoint": path.basepoint,
        "sphere_defect": path.sphere_defect(),
        "tangency_defect": vel.tangency_defect(&path),
        "constraint_drift": path.constraint_drift,
    });
    w.artifact(dir, "path.csv", &io::path_table(&path, &vel)?, meta("path.csv", summary))?;
    Ok(())
}

fn hhl(cfg: &ExperimentConfig, dir: &Path, w: &mut Written, meta: &MetaFn) -> Result<(), RunError> {
    let sc = cfg.solver();
    let (_w, wb, path) = global_data(&sc)?;
    let m = SphereManifold::new(cfg.dim)?;
    let vel = white_noise_velocity(&path, &wb, &m)?;
    let waves = WaveProfiles::from_linear(&linear_waves(&path, &vel, cfg.theta)?)?;
    let scales = default_scales(waves.grid);
    let ts = default_shifts(cfg.tau, cfg.shifts);
    let ds = ds_norm(&waves, cfg.s, &scales, &ts)?;
    let column: Vec<u64> = cfg.column_scales().into_iter().filter(|m| scales.contains(m)).collect();
    if column.len() < 2 {
        let msg = format!("fewer than two column scales fit the grid (available {scales:?})");
        w.json(dir, "hhl.meta.json", &meta("hhl.csv", json!({ "error": msg })))?;
        return Err(RunError::Validated(msg));
    }
    let report = hhl_scaling_report(&waves, cfg.s, cfg.r, &scales, &column, Some(ds.ds_value), cfg.with_lemma)?;
    let summary = json!({
        "ds_value": ds.ds_value,
        "linear_branch": ds.linear_branch,
        "product_branch": ds.product_branch,
        "shifted_branch": ds.shifted_branch,
        "scales": ds.scales,
        "t_samples": ds.t_samples,
        "report": report,
    });
    w.artifact(dir, "hhl.csv", &io::hhl_table(&ds.table), meta("hhl.csv", summary))?;
    Ok(())
}

fn shifted(mut state: WaveMapState, shift: &[f64]) -> WaveMapState {
    for (f, &c) in state.phi.iter_mut().zip(shift) {
        f.samples.mapv_inplace(|v| v + c);
    }
    state
}

fn solve(cfg: &ExperimentConfig, dir: &Path, w: &mut Written, meta: &MetaFn) -> Result<(), RunError> {
    let sc = cfg.solver();
    let tc = sc.time_cutoff();
    let global = global_data(&sc)?;
    let patch = build_patch(&sc, &global, sc.x0)?;
    let waves = &patch.null_waves;
    let (state, diag) = match solve_picard(waves, &sc) {
        Ok(r) => r,
        Err(e) if is_validated_failure(&e) => {
            let summary = json!({ "error": e.to_string() });
            w.json(dir, "solve.meta.json", &meta("solve", summary))?;
            return Err(RunError::Validated(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let oracle = match characteristic_oracle(waves, tc, sc.oracle_renormalize) {
        Ok(o) => Ok(inner_sup_diff(&state.phi, &o, tc)),
        Err(e) => Err(e.to_string()),
    };
    let res = residual(&state.phi, &waves.shift, tc);
    let defect = sphere_defect(&state.phi, &waves.shift, tc);
    let full = shifted(state, &waves.shift);
    let mut slices = Vec::new();
    for t in time_samples(full.grid, tc, cfg.t_samples) {
        slices.push(null_to_cartesian(&full, t)?);
    }
    let energies: Vec<f64> = slices.iter().map(hamiltonian_energy).collect();
    let interpolation: Vec<&str> = slices.iter().map(|s| s.interpolation.as_str()).collect();
    let summary = json!({
        "iterations": diag.iterations,
        "increments": diag.increments,
        "ratios": diag.ratios,
        "converged": diag.converged,
        "residual": res,
        "sphere_defect": defect,
        "oracle_difference": oracle.as_ref().ok(),
        "oracle_error": oracle.as_ref().err(),
        "shift": waves.shift,
        "slice_times": slices.iter().map(|s| s.t).collect::<Vec<_>>(),
        "slice_energy": energies,
        "interpolation": interpolation,
        "stride": cfg.stride,
    });
    w.artifact(dir, "solution.csv", &io::solution_table(&full, cfg.stride)?, meta("solution.csv", summary.clone()))?;
    w.artifact(dir, "slices.csv", &io::slices_table(&slices)?, meta("slices.csv", summary))?;
    Ok(())
}

fn converge(cfg: &ExperimentConfig, dir: &Path, w: &mut Written, meta: &MetaFn) -> Result<(), RunError> {
    let sc = cfg.solver();
    let tab = convergence_experiment(&sc, &cfg.eps_list, cfg.t_samples, cfg.patch_check)?;
    let failures: Vec<String> = tab.rows.iter().filter_map(|r| r.error.clone()).collect();
    let summary = serde_json::to_value(&tab).map_err(Error::from)?;
    w.artifact(dir, "convergence.csv", &io::convergence_csv(&tab), meta("convergence.csv", summary))?;
    if !failures.is_empty() {
        return Err(RunError::Validated(format!("{} ε value(s) failed: {}", failures.len(), failures.join("; "))));
    }
    Ok(())
}

fn illposed(cfg: &ExperimentConfig, dir: &Path, w: &mut Written, meta: &MetaFn) -> Result<(), RunError> {
    let base = cfg.profile().map_err(|e| RunError::Core(Error::Invalid(e.to_string())))?;
    let scan = divergence_scan(&base, cfg.kappa_max, cfg.t)?;
    let summary = serde_json::to_value(&scan).map_err(Error::from)?;
    w.artifact(dir, "divergence.csv", &io::scan_table(&scan.rows), meta("divergence.csv", summary))?;
    Ok(())
}

fn norms(cfg: &ExperimentConfig, dir: &Path, w: &mut Written, meta: &MetaFn) -> Result<(), RunError> {
    let rows = data_norm_table(cfg.seed, cfg.dim, cfg.global_points, &cfg.eps_list, cfg.s, cfg.substeps)?;
    let mut t = CsvTable::new(["eps", "path_norm", "velocity_norm", "data_diff", "data_diff_velocity"]);
    for r in &rows {
        t.rows.push(vec![
            io::fmt_f64(r.eps),
            io::fmt_f64(r.path_norm),
            io::fmt_f64(r.velocity_norm),
            io::fmt_f64(r.data_diff.unwrap_or(f64::NAN)),
            io::fmt_f64(r.data_diff_velocity.unwrap_or(f64::NAN)),
        ]);
    }
    let summary = serde_json::to_value(&rows).map_err(Error::from)?;
    w.artifact(dir, "norms.csv", &t, meta("norms.csv", summary))?;
    Ok(())
}
