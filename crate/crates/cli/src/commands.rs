//! One function per subcommand. Each takes its resolved configuration,
//! writes artifacts under the output directory, and returns the list of
//! files it produced (relative to that directory) for the provenance
//! record.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nslab_core::basis::build_basis;
use nslab_core::dataset::{self, Distribution, SampleSpec};
use nslab_core::galerkin::{integrate, write_trajectory, GalerkinState, SolverConfig};
use nslab_core::mlp::{self, MlpArchitecture, Optimizer, TrainConfig};
use nslab_core::sensors::{
    depth2_pipeline, kappa, required_sensors, Depth2Config, SensorGrid, SensorSearch,
};
use nslab_core::tensor::assemble_structure_tensor;
use nslab_core::verify::{
    check_energy, empirical_lipschitz, energy_rows_csv, evaluate_operator, projection_decay,
    EnergyReport,
};

use crate::error::CliError;

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
    text.push('\n');
    fs::write(dir.join(name), text)
        .map_err(|e| CliError::Io(format!("writing {name}: {e}")))?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), text)
        .map_err(|e| CliError::Io(format!("writing {name}: {e}")))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))
}

pub fn distribution_from_name(name: &str) -> Result<Distribution, CliError> {
    match name {
        "box" => Ok(Distribution::UniformBox),
        "sphere" => Ok(Distribution::UniformSphere),
        other => Err(CliError::Config(format!(
            "unknown distribution {other:?}, expected \"box\" or \"sphere\""
        ))),
    }
}

// ---------------------------------------------------------------------------
// basis

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisCmdConfig {
    pub dim: usize,
    pub modes: usize,
}

impl Default for BasisCmdConfig {
    fn default() -> Self {
        BasisCmdConfig { dim: 2, modes: 16 }
    }
}

pub fn run_basis(cfg: &BasisCmdConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let basis = build_basis(cfg.dim, cfg.modes).map_err(|e| CliError::Config(e.to_string()))?;
    ensure_dir(out)?;
    write_text(out, "basis.txt", &basis.manifest())?;
    println!(
        "basis: dim {} with {} modes, eigenvalues {:.0} ..= {:.0}",
        cfg.dim,
        cfg.modes,
        basis.eigenvalues()[0],
        basis.eigenvalues()[cfg.modes - 1]
    );
    Ok(vec!["basis.txt".into()])
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub dim: usize,
    pub modes: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub stability_guard: bool,
    /// Sampled initial data (ignored when `initial` is set).
    pub radius: f64,
    pub active_modes: usize,
    pub distribution: Distribution,
    pub seed: u64,
    /// Record index within the seeded stream.
    pub record: u64,
    /// Explicit initial coefficients, padded with zeros to the basis size.
    pub initial: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            dim: 2,
            modes: 16,
            nu: 0.05,
            dt: 1e-3,
            t_final: 1.0,
            snapshot_stride: 10,
            stability_guard: true,
            radius: 1.0,
            active_modes: 8,
            distribution: Distribution::UniformBox,
            seed: 0,
            record: 0,
            initial: None,
        }
    }
}

/// JSON sidecar next to the binary trajectory: the configuration that
/// produced it plus the energy history.
#[derive(Serialize)]
struct TrajectorySidecar<'a> {
    config: &'a SimulateConfig,
    times: &'a [f64],
    energy_series: &'a [f64],
    dissipation_series: &'a [f64],
}

pub fn run_simulate(cfg: &SimulateConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let basis = build_basis(cfg.dim, cfg.modes).map_err(|e| CliError::Config(e.to_string()))?;
    let tensor = assemble_structure_tensor(&basis);
    let solver = SolverConfig {
        nu: cfg.nu,
        dt: cfg.dt,
        t_final: cfg.t_final,
        snapshot_stride: cfg.snapshot_stride,
        stability_guard: cfg.stability_guard,
    };
    let mut coeffs = match &cfg.initial {
        Some(values) => {
            if values.len() > cfg.modes {
                return Err(CliError::Config(format!(
                    "initial data has {} coefficients but the basis has {} modes",
                    values.len(),
                    cfg.modes
                )));
            }
            values.clone()
        }
        None => {
            let spec = SampleSpec {
                dim: cfg.dim,
                radius: cfg.radius,
                active_modes: cfg.active_modes,
                distribution: cfg.distribution,
                seed: cfg.seed,
            };
            if cfg.active_modes > cfg.modes {
                return Err(CliError::Config(format!(
                    "active_modes {} exceeds the basis size {}",
                    cfg.active_modes, cfg.modes
                )));
            }
            dataset::sample_initial(&spec, cfg.record)
        }
    };
    coeffs.resize(cfg.modes, 0.0);

    let traj = integrate(&GalerkinState { t: 0.0, coeffs }, &solver, &tensor, &basis)?;
    ensure_dir(out)?;
    let mut bytes = Vec::new();
    write_trajectory(&traj, &mut bytes)?;
    fs::write(out.join("trajectory.nstrj"), bytes)
        .map_err(|e| CliError::Io(format!("writing trajectory.nstrj: {e}")))?;
    let sidecar = TrajectorySidecar {
        config: cfg,
        times: &traj.times,
        energy_series: &traj.energy_series,
        dissipation_series: &traj.dissipation_series,
    };
    write_json(out, "trajectory.json", &sidecar)?;
    println!(
        "simulate: {} snapshots to t = {}, energy {:.6e} -> {:.6e}",
        traj.times.len(),
        traj.t_final(),
        traj.energy_series[0],
        traj.energy_series[traj.energy_series.len() - 1]
    );
    Ok(vec!["trajectory.nstrj".into(), "trajectory.json".into()])
}

// ---------------------------------------------------------------------------
// gen-data

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    pub dim: usize,
    pub modes: usize,
    pub n: usize,
    pub d_h: usize,
    pub d_y: usize,
    pub t_star: f64,
    pub output_noise: f64,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub stability_guard: bool,
    pub radius: f64,
    pub active_modes: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            dim: 3,
            modes: 16,
            n: 200,
            d_h: 6,
            d_y: 16,
            t_star: 0.5,
            output_noise: 0.0,
            nu: 0.5,
            dt: 2.5e-3,
            t_final: 0.5,
            snapshot_stride: 5,
            stability_guard: true,
            radius: 1.5,
            active_modes: 6,
            distribution: Distribution::UniformBox,
            seed: 0,
        }
    }
}

pub fn run_gen_data(cfg: &GenDataConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let basis = build_basis(cfg.dim, cfg.modes).map_err(|e| CliError::Config(e.to_string()))?;
    let solver = SolverConfig {
        nu: cfg.nu,
        dt: cfg.dt,
        t_final: cfg.t_final,
        snapshot_stride: cfg.snapshot_stride,
        stability_guard: cfg.stability_guard,
    };
    let spec = SampleSpec {
        dim: cfg.dim,
        radius: cfg.radius,
        active_modes: cfg.active_modes,
        distribution: cfg.distribution,
        seed: cfg.seed,
    };
    let data = dataset::generate_with_noise(
        &spec,
        &solver,
        &basis,
        cfg.n,
        cfg.d_h,
        cfg.d_y,
        cfg.t_star,
        cfg.output_noise,
    )?;
    ensure_dir(out)?;
    dataset::write(&data, out)?;
    println!(
        "gen-data: {} records, d_H = {}, d_Y = {}, checksums {} / {}",
        data.len(),
        cfg.d_h,
        cfg.d_y,
        data.manifest.checksum_inputs,
        data.manifest.checksum_outputs
    );
    Ok(vec!["manifest.json".into(), "inputs.f64".into(), "outputs.f64".into()])
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCmdConfig {
    pub hidden: Vec<usize>,
    /// Clamp half-width; defaults to radius/sqrt(d_H) from the manifest.
    pub clamp: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub validation_fraction: f64,
    pub patience: Option<usize>,
    pub freeze_hidden: bool,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        TrainCmdConfig {
            hidden: vec![48, 48],
            clamp: None,
            epochs: 200,
            batch_size: 32,
            learning_rate: 2e-3,
            optimizer: Optimizer::adam(),
            seed: 7,
            validation_fraction: 0.1,
            patience: Some(25),
            freeze_hidden: false,
        }
    }
}

pub fn run_train(
    cfg: &TrainCmdConfig,
    data_dir: &Path,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    let data = dataset::read(data_dir)?;
    let arch = MlpArchitecture {
        input_dim: data.manifest.d_h,
        output_dim: data.manifest.d_y,
        hidden: cfg.hidden.clone(),
        clamp: cfg.clamp.unwrap_or(
            data.manifest.sample.radius / (data.manifest.d_h as f64).sqrt(),
        ),
    };
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        optimizer: cfg.optimizer,
        seed: cfg.seed,
        validation_fraction: cfg.validation_fraction,
        patience: cfg.patience,
        freeze_hidden: cfg.freeze_hidden,
    };
    let (params, history) = mlp::train(&data.inputs, &data.outputs, &arch, &train_cfg)?;
    ensure_dir(out)?;
    mlp::save_model(&params, Some(&train_cfg), out)?;
    write_json(out, "history.json", &history)?;
    let last_train = history.train_loss.last().copied().unwrap_or(f64::NAN);
    println!(
        "train: {} epochs run, best epoch {}, final train loss {:.6e}",
        history.train_loss.len(),
        history.best_epoch,
        last_train
    );
    Ok(vec!["model.json".into(), "weights.f64".into(), "history.json".into()])
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_test: usize,
    /// Added to the dataset seed so test draws never replay training data.
    pub seed_offset: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_test: 100, seed_offset: 1 }
    }
}

pub fn run_eval(
    cfg: &EvalConfig,
    data_dir: &Path,
    model_dir: &Path,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    let manifest = dataset::read_manifest(data_dir)?;
    let (params, _meta) = mlp::load_model(model_dir)?;
    let basis = build_basis(manifest.dim, manifest.m)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let tensor = assemble_structure_tensor(&basis);
    let mut test_spec = manifest.sample;
    test_spec.seed = test_spec.seed.wrapping_add(cfg.seed_offset);
    let report = evaluate_operator(
        |a| params.forward(a),
        &test_spec,
        &manifest.solver,
        &basis,
        &tensor,
        cfg.n_test,
        manifest.d_h,
        manifest.d_y,
        manifest.t_star,
    )?;
    ensure_dir(out)?;
    write_json(out, "eval.json", &report)?;
    println!(
        "eval: {} fresh draws, total error {:.6e} ({:.2}% of the zero baseline {:.6e})",
        report.n_test,
        report.total,
        100.0 * report.total / report.zero_baseline.max(f64::MIN_POSITIVE),
        report.zero_baseline
    );
    Ok(vec!["eval.json".into()])
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySuite {
    pub dim: usize,
    pub modes: usize,
    pub count: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub radius: f64,
    pub active_modes: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl Default for EnergySuite {
    fn default() -> Self {
        EnergySuite {
            dim: 2,
            modes: 16,
            count: 20,
            nu: 0.05,
            dt: 1e-3,
            t_final: 0.5,
            snapshot_stride: 5,
            radius: 1.5,
            active_modes: 16,
            distribution: Distribution::UniformBox,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzSuite {
    pub dim: usize,
    pub modes: usize,
    pub pairs: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub radius: f64,
    pub active_modes: usize,
    pub seed: u64,
    /// Fixed envelope constant; omitted means calibrate from the pairs.
    pub envelope_c: Option<f64>,
}

impl Default for LipschitzSuite {
    fn default() -> Self {
        LipschitzSuite {
            dim: 2,
            modes: 16,
            pairs: 25,
            nu: 0.01,
            dt: 2e-3,
            t_final: 0.5,
            snapshot_stride: 5,
            radius: 3.0,
            active_modes: 8,
            seed: 0,
            envelope_c: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSuite {
    pub dim: usize,
    pub radius: f64,
    pub active_modes: usize,
    pub distribution: Distribution,
    pub seed: u64,
    pub n_values: Vec<usize>,
    pub d_h_values: Vec<usize>,
    pub replicates: usize,
}

impl Default for ProjectionSuite {
    fn default() -> Self {
        ProjectionSuite {
            dim: 2,
            radius: 1.0,
            active_modes: 64,
            distribution: Distribution::UniformBox,
            seed: 0,
            n_values: vec![10, 100, 1000, 10000],
            d_h_values: vec![8, 16, 32],
            replicates: 32,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub energy: EnergySuite,
    pub lipschitz: LipschitzSuite,
    pub projection: ProjectionSuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VerifySuite {
    Energy,
    Lipschitz,
    Projection,
    All,
}

#[derive(Serialize)]
struct EnergySummary {
    count: usize,
    failures: usize,
    worst_sup_ratio: f64,
    worst_dissipation_ratio: f64,
    reports: Vec<EnergyReport>,
}

pub fn run_verify(
    cfg: &VerifyConfig,
    suite: VerifySuite,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    ensure_dir(out)?;
    let mut artifacts = Vec::new();
    let mut violation_lines = Vec::new();

    if matches!(suite, VerifySuite::Energy | VerifySuite::All) {
        let s = &cfg.energy;
        let basis =
            build_basis(s.dim, s.modes).map_err(|e| CliError::Config(e.to_string()))?;
        let tensor = assemble_structure_tensor(&basis);
        let solver = SolverConfig {
            nu: s.nu,
            dt: s.dt,
            t_final: s.t_final,
            snapshot_stride: s.snapshot_stride,
            stability_guard: true,
        };
        let spec = SampleSpec {
            dim: s.dim,
            radius: s.radius,
            active_modes: s.active_modes.min(s.modes),
            distribution: s.distribution,
            seed: s.seed,
        };
        let mut reports = Vec::with_capacity(s.count);
        for i in 0..s.count {
            let mut coeffs = dataset::sample_initial(&spec, i as u64);
            coeffs.resize(s.modes, 0.0);
            let traj = integrate(&GalerkinState { t: 0.0, coeffs }, &solver, &tensor, &basis)?;
            reports.push(check_energy(&traj, s.nu));
        }
        let failures = reports.iter().filter(|r| !r.passes).count();
        write_text(out, "energy.csv", &energy_rows_csv(&reports))?;
        let summary = EnergySummary {
            count: reports.len(),
            failures,
            worst_sup_ratio: reports.iter().map(|r| r.sup_ratio).fold(0.0, f64::max),
            worst_dissipation_ratio: reports
                .iter()
                .map(|r| r.dissipation_ratio)
                .fold(0.0, f64::max),
            reports,
        };
        write_json(out, "energy.json", &summary)?;
        artifacts.push("energy.csv".into());
        artifacts.push("energy.json".into());
        println!(
            "verify energy: {} trajectories, {} failures, worst sup ratio {:.9}",
            summary.count, summary.failures, summary.worst_sup_ratio
        );
        if failures > 0 {
            violation_lines.push(format!("energy law failed on {failures} trajectories"));
        }
    }

    if matches!(suite, VerifySuite::Lipschitz | VerifySuite::All) {
        let s = &cfg.lipschitz;
        let basis =
            build_basis(s.dim, s.modes).map_err(|e| CliError::Config(e.to_string()))?;
        let tensor = assemble_structure_tensor(&basis);
        let solver = SolverConfig {
            nu: s.nu,
            dt: s.dt,
            t_final: s.t_final,
            snapshot_stride: s.snapshot_stride,
            stability_guard: true,
        };
        if s.active_modes > s.modes {
            return Err(CliError::Config(format!(
                "active_modes {} exceeds the basis size {}",
                s.active_modes, s.modes
            )));
        }
        let spec_u = SampleSpec {
            dim: s.dim,
            radius: s.radius,
            active_modes: s.active_modes,
            distribution: Distribution::UniformBox,
            seed: s.seed,
        };
        let spec_v = SampleSpec { seed: s.seed ^ 0x5A5A_5A5A, ..spec_u };
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..s.pairs as u64)
            .map(|i| {
                let mut u = dataset::sample_initial(&spec_u, i);
                let mut v = dataset::sample_initial(&spec_v, i);
                u.resize(s.modes, 0.0);
                v.resize(s.modes, 0.0);
                (u, v)
            })
            .collect();
        let report = empirical_lipschitz(&basis, &tensor, &solver, &pairs, s.envelope_c)?;
        write_json(out, "lipschitz.json", &report)?;
        write_text(out, "pairs.csv", &report.pairs_csv())?;
        artifacts.push("lipschitz.json".into());
        artifacts.push("pairs.csv".into());
        println!(
            "verify lipschitz: {} pairs, calibrated constant {:.6e}, {} violations",
            report.pair_count, report.calibrated_c, report.violations
        );
        if report.violations > 0 {
            violation_lines.push(format!(
                "{} pairs exceeded the stability envelope",
                report.violations
            ));
        }
    }

    if matches!(suite, VerifySuite::Projection | VerifySuite::All) {
        let s = &cfg.projection;
        if s.n_values.is_empty() || s.d_h_values.is_empty() || s.replicates == 0 {
            return Err(CliError::Config(
                "projection suite needs sample counts, dimensions, and replicates".into(),
            ));
        }
        let spec = SampleSpec {
            dim: s.dim,
            radius: s.radius,
            active_modes: s.active_modes,
            distribution: s.distribution,
            seed: s.seed,
        };
        let report = projection_decay(&spec, &s.n_values, &s.d_h_values, s.replicates);
        write_json(out, "projection.json", &report)?;
        write_text(out, "projection.csv", &report.table_csv())?;
        artifacts.push("projection.json".into());
        artifacts.push("projection.csv".into());
        let exponents: Vec<String> = report
            .fit_exponent
            .iter()
            .map(|e| match e {
                Some(v) => format!("{v:.3}"),
                None => "exact".into(),
            })
            .collect();
        println!(
            "verify projection: deviation exponents per d_H {:?}",
            exponents
        );
    }

    if violation_lines.is_empty() {
        Ok(artifacts)
    } else {
        Err(CliError::Numeric(violation_lines.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// sensors

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineBlock {
    pub width: usize,
    pub grid_n: usize,
    pub quad_n: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub radius: f64,
    pub seed: u64,
    pub t_star: f64,
    pub d_y: usize,
    pub nu: f64,
    pub dt: f64,
    pub snapshot_stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PipelineBlock {
    fn default() -> Self {
        PipelineBlock {
            width: 32,
            grid_n: 5,
            quad_n: 32,
            n_train: 150,
            n_test: 25,
            radius: 1.0,
            seed: 0x5E25,
            t_star: 0.25,
            d_y: 8,
            nu: 0.5,
            dt: 2.5e-3,
            snapshot_stride: 4,
            epochs: 150,
            batch_size: 16,
            learning_rate: 3e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorsConfig {
    pub modes: usize,
    pub d: usize,
    pub grids: Vec<usize>,
    pub probe_n: usize,
    pub epsilon: f64,
    pub radius: f64,
    pub c: f64,
    pub c1: f64,
    /// Depth-2 pipeline parameters; run only with `--pipeline`.
    pub pipeline: PipelineBlock,
}

impl Default for SensorsConfig {
    fn default() -> Self {
        SensorsConfig {
            modes: 16,
            d: 6,
            grids: vec![3, 5, 9, 17],
            probe_n: 49,
            epsilon: 0.1,
            radius: 1.0,
            c: 1.0,
            c1: 1.0,
            pipeline: PipelineBlock::default(),
        }
    }
}

#[derive(Serialize)]
struct SensorsSummary<'a> {
    sweeps: Vec<nslab_core::sensors::KappaReport>,
    requirement: &'a nslab_core::sensors::SensorRequirement,
}

pub fn run_sensors(
    cfg: &SensorsConfig,
    run_pipeline: bool,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    let basis =
        build_basis(3, cfg.modes).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.grids.is_empty() {
        return Err(CliError::Config("sensor sweep needs at least one grid".into()));
    }
    ensure_dir(out)?;

    let mut csv = String::from(nslab_core::sensors::KAPPA_CSV_HEADER);
    let mut sweeps = Vec::new();
    for &n in &cfg.grids {
        let report = kappa(&basis, cfg.d, SensorGrid::new(n)?, cfg.probe_n);
        csv.push_str(&report.rows_csv());
        sweeps.push(report);
    }
    let search = SensorSearch {
        epsilon: cfg.epsilon,
        d: cfg.d,
        radius: cfg.radius,
        c: cfg.c,
        c1: cfg.c1,
        candidates: cfg.grids.clone(),
        probe_n: cfg.probe_n,
    };
    let requirement = required_sensors(&basis, &search)?;
    let summary = SensorsSummary { sweeps, requirement: &requirement };
    write_json(out, "sensors.json", &summary)?;
    write_text(out, "kappa.csv", &csv)?;
    let mut artifacts = vec!["sensors.json".into(), "kappa.csv".into()];
    println!(
        "sensors: deviation ladder over grids {:?}, requirement {} points per axis ({} sensors)",
        cfg.grids, requirement.points_per_axis, requirement.sensor_count
    );

    if run_pipeline {
        let p = &cfg.pipeline;
        let tensor = assemble_structure_tensor(&basis);
        let solver = SolverConfig {
            nu: p.nu,
            dt: p.dt,
            t_final: p.t_star,
            snapshot_stride: p.snapshot_stride,
            stability_guard: true,
        };
        let depth2 = Depth2Config {
            d: cfg.d,
            width: p.width,
            grid_n: p.grid_n,
            quad_n: p.quad_n,
            n_train: p.n_train,
            n_test: p.n_test,
            radius: p.radius,
            seed: p.seed,
            t_star: p.t_star,
            d_y: p.d_y,
            train: TrainConfig {
                epochs: p.epochs,
                batch_size: p.batch_size,
                learning_rate: p.learning_rate,
                optimizer: Optimizer::adam(),
                seed: p.seed ^ 0xD2,
                validation_fraction: 0.1,
                patience: Some(25),
                freeze_hidden: false,
            },
        };
        let (_net, report) = depth2_pipeline(&basis, &tensor, &solver, &depth2)?;
        write_json(out, "depth2.json", &report)?;
        artifacts.push("depth2.json".into());
        println!(
            "sensors pipeline: total {:.6e} <= interpolation {:.6e} + network {:.6e}",
            report.total_error,
            report.interpolation_contribution,
            report.network_contribution
        );
    }
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// config plumbing shared by main

/// Load a subcommand configuration: the JSON file when given, defaults
/// otherwise. Unknown keys are rejected as configuration errors.
pub fn load_config<T>(path: Option<&Path>) -> Result<T, CliError>
where
    T: Default + for<'de> Deserialize<'de>,
{
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("in {}: {e}", p.display())))
        }
    }
}

pub fn optimizer_from_name(name: &str) -> Result<Optimizer, CliError> {
    match name {
        "sgd" => Ok(Optimizer::Sgd),
        "momentum" => Ok(Optimizer::momentum()),
        "adam" => Ok(Optimizer::adam()),
        other => Err(CliError::Config(format!(
            "unknown optimizer {other:?}, expected \"sgd\", \"momentum\", or \"adam\""
        ))),
    }
}
