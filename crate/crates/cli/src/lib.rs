//! Subcommands of the `transmon` binary. Each writes its data files into the
//! output directory and returns a small JSON summary for stdout.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use transmon_core::config::RunConfig;
use transmon_core::emulator::{
    build_generator, extract_rates, run_experiment, state_label, write_shots_csv, AssignmentThresholds,
    ExtractionModel, PulseSequence,
};
use transmon_core::environment::{re_z_reduced, total_weighted_impedance};
use transmon_core::rates::{assemble_rate_set, DriveSpec};
use transmon_core::scanner::{build_rate_map, find_multiphoton_resonances};
use transmon_core::spectrum::{eigensystem, transition_frequency};
use transmon_core::units::{angular_to_hz, hz_to_angular};
use transmon_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} scan cells failed")]
    PartialScan { failed: usize, total: usize },
    #[error("fit not identifiable: {0}")]
    NonIdentifiable(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Config(e.to_string()),
            Error::NonIdentifiable { ref parameter } => CliError::NonIdentifiable(parameter.clone()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::PartialScan { .. } => 3,
            CliError::NonIdentifiable(_) => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(RunConfig::from_json_str(&text)?)
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn summary(self, command: &str, extra: Value) -> Value {
        let mut v = json!({ "command": command, "status": "ok", "out": self.dir, "files": self.files });
        if let (Some(obj), Value::Object(more)) = (v.as_object_mut(), extra) {
            obj.extend(more);
        }
        v
    }
}

fn wants(cfg: &RunConfig, format: &str) -> bool {
    cfg.output.formats.iter().any(|f| f == format)
}

/// Transition frequencies ω_{n,0} and ω_{n,1} over the flux sweep, plus
/// first-order and sideband drive-line crossings.
pub fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let mut o = Output::new(out)?;
    let n = cfg.device.n_levels;
    let points = cfg.flux_points()?;

    let mut header = vec!["flux".to_string(), "e_j_hz".into(), "omega_q_hz".into()];
    for m in 0..2.min(n - 1) {
        for k in m + 1..n {
            header.push(format!("f{k}_{m}"));
        }
    }
    let mut w = csv::Writer::from_writer(o.create("spectrum.csv")?);
    w.write_record(&header)?;
    for (flux, params) in &points {
        let spec = eigensystem(params, cfg.device.n_cut, n)?;
        let mut row = vec![flux.to_string(), angular_to_hz(params.e_j).to_string()];
        row.push(angular_to_hz(spec.qubit_frequency()).to_string());
        for m in 0..2.min(n - 1) {
            for k in m + 1..n {
                row.push(angular_to_hz(transition_frequency(&spec, m, k)?).to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);

    let hits = match cfg.tunable_device()? {
        Some(device) => {
            let order = cfg.scan.as_ref().map_or(2, |s| s.max_order);
            let dw = cfg.delta_omega_grid()[0];
            find_multiphoton_resonances(&device, cfg.omega_in()?, cfg.omega_res()?, dw, n - 1, order)?
        }
        None => Vec::new(),
    };
    o.json("spectrum_hits.json", &hits)?;
    Ok(o.summary("spectrum", json!({ "rows": points.len(), "hits": hits.len() })))
}

/// Re Z seen by the transmon at the working point.
pub fn cmd_impedance(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let mut o = Output::new(out)?;
    let e_c = cfg.e_c();
    let wq = cfg.working_spectrum()?.qubit_frequency();
    let env = cfg.environment()?;
    let channel = env.effective_channel(e_c, wq)?;
    let (f_min, f_max, points) = match &cfg.impedance {
        Some(z) => (z.f_min_hz, z.f_max_hz, z.points),
        None => {
            let fr = angular_to_hz(channel.omega_res);
            (0.5 * angular_to_hz(wq), 3.0 * fr, 2000)
        }
    };
    let mut w = csv::Writer::from_writer(o.create("impedance.csv")?);
    w.write_record(["frequency_hz", "re_z_ohm", "weighted_re_z", "excluded"])?;
    let ratio = (f_max / f_min).ln();
    let mut excluded = 0;
    for i in 0..points {
        let f = f_min * (ratio * i as f64 / (points - 1) as f64).exp();
        let omega = hz_to_angular(f);
        let re_z = re_z_reduced(&channel, e_c, omega);
        let (weighted, skip) = match total_weighted_impedance(&env, e_c, wq, omega) {
            Ok(v) => (v.to_string(), false),
            Err(Error::QubitPeak { .. }) => (String::new(), true),
            Err(e) => return Err(e.into()),
        };
        excluded += skip as usize;
        w.write_record([f.to_string(), re_z.to_string(), weighted, (skip as u8).to_string()])?;
    }
    w.flush()?;
    Ok(o.summary("impedance", json!({ "rows": points, "excluded": excluded })))
}

#[derive(Serialize)]
struct RateRow {
    delta_omega_hz: f64,
    initial: usize,
    #[serde(rename = "final")]
    final_level: usize,
    rate_hz: f64,
    mechanism: String,
    total_hz: f64,
}

/// Γ_{m→n}(δω) by mechanism at the working point.
pub fn cmd_rates(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let mut o = Output::new(out)?;
    let params = cfg.device_params()?;
    let spec = eigensystem(&params, cfg.device.n_cut, cfg.device.n_levels.max(4))?;
    let env = cfg.environment()?;
    let omega_in = cfg.omega_in()?;
    let opts = cfg.rate_options();

    let mut sets = Vec::new();
    for dw in cfg.delta_omega_grid() {
        let drive = DriveSpec::new(omega_in, dw)?;
        let set = assemble_rate_set(&spec, &params, &env, &drive, cfg.rates.temperature_k, cfg.rates.gamma_down, &opts)?;
        sets.push((dw, set));
    }
    let mut rows = 0;
    if wants(cfg, "csv") {
        let mut w = csv::Writer::from_writer(o.create("rates.csv")?);
        for (dw, set) in &sets {
            for e in &set.entries {
                w.serialize(RateRow {
                    delta_omega_hz: angular_to_hz(*dw),
                    initial: e.initial,
                    final_level: e.final_level,
                    rate_hz: e.rate,
                    mechanism: e.mechanism.to_string(),
                    total_hz: set.total(e.initial, e.final_level),
                })?;
                rows += 1;
            }
        }
        w.flush()?;
    }
    if wants(cfg, "json") {
        let doc: Vec<Value> = sets
            .iter()
            .map(|(dw, set)| json!({ "delta_omega_hz": angular_to_hz(*dw), "rates": set }))
            .collect();
        o.json("rates.json", &doc)?;
    }
    Ok(o.summary(
        "rates",
        json!({ "omega_q_hz": angular_to_hz(spec.qubit_frequency()), "grid_points": sets.len(), "rows": rows }),
    ))
}

/// Rate map over (ω_q, δω) with resonance annotations.
pub fn cmd_scan(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let mut o = Output::new(out)?;
    let map_cfg = cfg.rate_map_config()?;
    let map = build_rate_map(&map_cfg, &cfg.omega_q_grid()?, &cfg.delta_omega_grid())?;
    if wants(cfg, "csv") {
        map.write_csv(o.create("rate_map.csv")?)?;
    }
    if wants(cfg, "json") {
        o.json("rate_map.json", &map)?;
    }
    o.json("annotations.json", &map.annotations)?;

    let total = map.cells.len();
    let failed = map.failed_cells();
    for c in map.cells.iter().filter(|c| c.error.is_some()) {
        log::warn!(
            "cell omega_q = {:.6e} Hz, delta_omega = {:.6e} Hz failed: {}",
            angular_to_hz(c.omega_q),
            angular_to_hz(c.delta_omega),
            c.error.as_deref().unwrap_or_default()
        );
    }
    // Fewer than 99% successful cells is a partial failure; the files stay.
    if (total - failed) * 100 < 99 * total {
        return Err(CliError::PartialScan { failed, total });
    }
    Ok(o.summary(
        "scan",
        json!({ "cells": total, "failed_cells": failed, "annotations": map.annotations.len() }),
    ))
}

#[derive(Serialize)]
struct ComparisonRow {
    initial: String,
    #[serde(rename = "final")]
    final_level: String,
    truth_hz: f64,
    extracted_hz: f64,
    std_error_hz: Option<f64>,
    upper_bound_hz: Option<f64>,
    z_score: Option<f64>,
    within_3_sigma: bool,
}

/// Synthetic experiment with the rates of the working point, then fit.
pub fn cmd_emulate(cfg: &RunConfig, out: &Path, seed_override: Option<u64>) -> CliResult<Value> {
    let em = cfg
        .emulation
        .as_ref()
        .ok_or_else(|| CliError::Config("emulation: section required".into()))?;
    let seed = seed_override
        .or(em.seed)
        .ok_or_else(|| CliError::Config("emulation.seed: required".into()))?;
    let mut o = Output::new(out)?;

    let params = cfg.device_params()?;
    let spec = eigensystem(&params, cfg.device.n_cut, cfg.device.n_levels.max(4))?;
    let env = cfg.environment()?;
    let dw = em
        .delta_omega_hz
        .map(hz_to_angular)
        .unwrap_or_else(|| *cfg.delta_omega_grid().last().expect("validated non-empty"));
    let drive = DriveSpec::new(cfg.omega_in()?, dw)?;
    let truth = assemble_rate_set(
        &spec,
        &params,
        &env,
        &drive,
        cfg.rates.temperature_k,
        cfg.rates.gamma_down,
        &cfg.rate_options(),
    )?;
    let n = em.geometry.n_levels;
    let g = build_generator(&truth, n)?;
    let thr = AssignmentThresholds::calibrate(&em.geometry)?;

    let mut records = Vec::new();
    for &initial in &em.initial_states {
        let seq = PulseSequence {
            initial_state: initial,
            durations: em.durations_s.clone(),
            drive: Some(drive),
            readout: em.readout,
        };
        records.extend(run_experiment(&seq, &g, &thr, em.shots, seed)?);
    }
    write_shots_csv(&records, n, o.create("shots.csv")?)?;

    let model = ExtractionModel::all_from(&em.initial_states, n, thr.confusion_matrix()?)?;
    let fit = extract_rates(&records, &model)?;
    o.json(
        "extracted.json",
        &json!({
            "seed": seed,
            "delta_omega_hz": angular_to_hz(dw),
            "log_likelihood": fit.log_likelihood,
            "iterations": fit.iterations,
            "rates": fit.rates,
            "truth": truth,
        }),
    )?;

    let mut w = csv::Writer::from_writer(o.create("comparison.csv")?);
    let mut within = 0;
    for e in &fit.rates.entries {
        let t = g.rate(e.initial, e.final_level);
        let z = e.std_error.filter(|s| *s > 0.0).map(|s| (e.rate - t) / s);
        let ok = match (z, e.upper_bound) {
            (Some(z), _) => z.abs() <= 3.0,
            (None, Some(ub)) => t <= ub,
            (None, None) => false,
        };
        within += ok as usize;
        w.serialize(ComparisonRow {
            initial: state_label(e.initial, n),
            final_level: state_label(e.final_level, n),
            truth_hz: t,
            extracted_hz: e.rate,
            std_error_hz: e.std_error,
            upper_bound_hz: e.upper_bound,
            z_score: z,
            within_3_sigma: ok,
        })?;
    }
    w.flush()?;

    let mut counts = BTreeMap::new();
    for r in &records {
        *counts.entry(state_label(r.assigned, n)).or_insert(0usize) += 1;
    }
    Ok(o.summary(
        "emulate",
        json!({
            "seed": seed,
            "shots": records.len(),
            "assigned_counts": counts,
            "fitted": fit.rates.entries.len(),
            "within_3_sigma": within,
        }),
    ))
}
