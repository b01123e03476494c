//! Batch experiment runner: configures a task from a TOML file, executes it,
//! and writes machine-readable artifacts (trace.csv, summary.json,
//! checkpoint.json) into the output directory.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numeric divergence,
//! 4 resource guard tripped.

use clap::Parser;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use qpnn_core::error::Error as CoreError;
use qpnn_core::fock::{basis_size, FockBasis, FockState};
use qpnn_core::optim::{GradientMethod, StatePrepObjective, TrainConfig};
use qpnn_core::scattering::{gate_sweep, sweep_to_csv, GateSolverOptions};
use qpnn_core::optim::ChannelObjective;
use qpnn_core::tasks::{
    binomial_code, logical_gate_target, make_noon_state, run_loss_correction_demo,
    run_state_prep_protocol, sample_haar_state, single_photon_input, splitter_monte_carlo,
    train_correction_pipeline, train_logical_cz, train_routing_gate_protocol, train_with_protocol,
    LogicalGate, TrainProtocol,
};

#[derive(Parser)]
#[command(name = "qpnn", version, about = "Quantum photonic neural network experiment runner")]
struct Cli {
    /// Path to the experiment configuration (TOML).
    config: Option<PathBuf>,
    /// Override the root seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: from config, else current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the task catalog with parameter schemas and exit.
    #[arg(long)]
    list_tasks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TaskKind {
    StatePrep,
    ChannelPrep,
    LogicalCz,
    MonteCarlo,
    RoutingGate,
    LossCorrection,
    ScatteringSweep,
}

impl Default for TaskKind {
    fn default() -> Self {
        Self::StatePrep
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    iterations: usize,
    lr_start: f64,
    lr_end: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    gradient: String,
    finite_difference_step: f64,
    restarts: usize,
    anneal_stages: usize,
    record_projections: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lr_start: 0.025,
            lr_end: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            gradient: "analytic".into(),
            finite_difference_step: 1e-5,
            restarts: 1,
            anneal_stages: 1,
            record_projections: false,
        }
    }
}

impl TrainSection {
    fn to_config(&self, seed: u64) -> Result<TrainConfig, CoreError> {
        let gradient = match self.gradient.as_str() {
            "analytic" => GradientMethod::Analytic,
            "central-difference" => GradientMethod::CentralDifference {
                step: self.finite_difference_step,
            },
            other => {
                return Err(CoreError::InvalidConfig(format!(
                    "unknown gradient method {other:?} (analytic | central-difference)"
                )))
            }
        };
        let cfg = TrainConfig {
            iterations: self.iterations,
            lr_start: self.lr_start,
            lr_end: self.lr_end,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
            gradient,
            record_projections: self.record_projections,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn protocol(&self) -> TrainProtocol {
        TrainProtocol::new(self.restarts, self.anneal_stages)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StatePrepSection {
    photons: usize,
    modes: usize,
    layers: usize,
    /// "haar" or "noon"
    target: String,
    noon_pair: [usize; 2],
    target_seed: u64,
}

impl Default for StatePrepSection {
    fn default() -> Self {
        Self {
            photons: 2,
            modes: 4,
            layers: 4,
            target: "haar".into(),
            noon_pair: [0, 1],
            target_seed: 1234,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ChannelPrepSection {
    /// Binomial-code order N; codewords carry 2N-1 photons.
    code_order: usize,
    layers: usize,
    /// "encoding", "h", "s" or "t"
    gate: String,
}

impl Default for ChannelPrepSection {
    fn default() -> Self {
        Self {
            code_order: 3,
            layers: 4,
            gate: "encoding".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LogicalCzSection {
    code_order: usize,
    layers_each: usize,
    attempts: usize,
}

impl Default for LogicalCzSection {
    fn default() -> Self {
        Self {
            code_order: 3,
            layers_each: 5,
            attempts: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MonteCarloSection {
    sigma: f64,
    samples: usize,
    photons: usize,
    modes: usize,
    layers: usize,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            samples: 10_000,
            photons: 4,
            modes: 4,
            layers: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RoutingGateSection {
    max_photons: usize,
    layers: usize,
}

impl Default for RoutingGateSection {
    fn default() -> Self {
        Self {
            max_photons: 4,
            layers: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LossCorrectionSection {
    routing_layers: usize,
    recovery_layers: usize,
    alpha: f64,
    beta: f64,
}

impl Default for LossCorrectionSection {
    fn default() -> Self {
        let amp = 1.0 / 2.0f64.sqrt();
        Self {
            routing_layers: 5,
            recovery_layers: 3,
            alpha: amp,
            beta: amp,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ScatteringSweepSection {
    sigma_over_g: Vec<f64>,
    kappa_over_g: f64,
    phi1: f64,
    /// Number of |phi2 - phi1| grid points from 0 to pi inclusive.
    phase_steps: usize,
    step_scale: f64,
    span_fwhm: f64,
}

impl Default for ScatteringSweepSection {
    fn default() -> Self {
        Self {
            sigma_over_g: vec![0.5, 1.0],
            kappa_over_g: 1.0,
            phi1: 0.0,
            phase_steps: 9,
            step_scale: 1.0,
            span_fwhm: 8.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ExperimentConfig {
    task: TaskKind,
    seed: u64,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    /// Hard cap on any Fock basis size; exceeding it aborts with exit 4.
    basis_cap: usize,
    /// Apply the nonlinear activation after the final mesh layer.
    final_activation: bool,
    train: TrainSection,
    state_prep: StatePrepSection,
    channel_prep: ChannelPrepSection,
    logical_cz: LogicalCzSection,
    monte_carlo: MonteCarloSection,
    routing_gate: RoutingGateSection,
    loss_correction: LossCorrectionSection,
    scattering_sweep: ScatteringSweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::default(),
            seed: 7,
            out_dir: None,
            workers: None,
            basis_cap: 100_000,
            final_activation: true,
            train: TrainSection::default(),
            state_prep: StatePrepSection::default(),
            channel_prep: ChannelPrepSection::default(),
            logical_cz: LogicalCzSection::default(),
            monte_carlo: MonteCarloSection::default(),
            routing_gate: RoutingGateSection::default(),
            loss_correction: LossCorrectionSection::default(),
            scattering_sweep: ScatteringSweepSection::default(),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    task: TaskKind,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity_stats: Option<FidelityStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sector_fidelity: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct FidelityStats {
    median: f64,
    min: f64,
    max: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_tasks {
        print!("{}", task_catalog());
        return ExitCode::SUCCESS;
    }
    let Some(config_path) = cli.config.as_ref() else {
        eprintln!("error: a config file is required (or --list-tasks)");
        return ExitCode::from(2);
    };
    let mut config = match load_config(config_path) {
        Ok(config) => config,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        config.out_dir = Some(dir);
    }
    if let Some(workers) = cli.workers {
        config.workers = Some(workers);
    }
    let out_dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    if let Err(err) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory: {err}");
        return ExitCode::from(2);
    }
    if let Some(workers) = config.workers {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: thread pool: {err}");
            return ExitCode::from(2);
        }
    }
    match run_task(&config, &out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = match &err {
                CoreError::NonFiniteLoss { .. } => 3,
                CoreError::BasisTooLarge { .. } => 4,
                CoreError::InvalidConfig(_) => 2,
                _ => 1,
            };
            let record = serde_json::json!({
                "error": err.to_string(),
                "exit_code": code,
            });
            let _ = std::fs::write(
                out_dir.join("error.json"),
                serde_json::to_string_pretty(&record).unwrap_or_default(),
            );
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| format!("cannot read {}: {err}", path.display()))?;
    toml::from_str(&text).map_err(|err| format!("invalid config: {err}"))
}

fn guard_basis(modes: usize, photons: usize, cap: usize) -> Result<(), CoreError> {
    let size = basis_size(modes, photons);
    if size > cap as u128 {
        return Err(CoreError::BasisTooLarge { size, cap });
    }
    Ok(())
}

fn write_artifacts(
    out_dir: &Path,
    trace_csv: Option<String>,
    summary: &Summary,
    checkpoint: Option<String>,
) -> Result<(), CoreError> {
    if let Some(csv) = trace_csv {
        std::fs::write(out_dir.join("trace.csv"), csv)
            .map_err(|err| CoreError::InvalidState(format!("write trace.csv: {err}")))?;
    }
    let summary_json = serde_json::to_string_pretty(summary)?;
    std::fs::write(out_dir.join("summary.json"), summary_json)
        .map_err(|err| CoreError::InvalidState(format!("write summary.json: {err}")))?;
    if let Some(checkpoint) = checkpoint {
        std::fs::write(out_dir.join("checkpoint.json"), checkpoint)
            .map_err(|err| CoreError::InvalidState(format!("write checkpoint.json: {err}")))?;
    }
    Ok(())
}

fn state_prep_target(
    section: &StatePrepSection,
    cap: usize,
) -> Result<(FockState, FockState), CoreError> {
    guard_basis(section.modes, section.photons, cap)?;
    let basis = FockBasis::new(section.modes, section.photons)?;
    let input = single_photon_input(section.modes, section.photons)?;
    let target = match section.target.as_str() {
        "haar" => sample_haar_state(&basis, section.target_seed),
        "noon" => make_noon_state(
            section.photons,
            (section.noon_pair[0], section.noon_pair[1]),
            section.modes,
        )?,
        other => {
            return Err(CoreError::InvalidConfig(format!(
                "unknown state-prep target {other:?} (haar | noon)"
            )))
        }
    };
    Ok((input, target))
}

fn run_task(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CoreError> {
    match config.task {
        TaskKind::StatePrep => {
            let section = &config.state_prep;
            let (input, target) = state_prep_target(section, config.basis_cap)?;
            let cfg = config.train.to_config(config.seed)?;
            let mut objective = StatePrepObjective::new(input, target);
            objective.final_activation = config.final_activation;
            let (params, fidelity, trace) = train_with_protocol(
                section.modes,
                section.layers,
                &objective,
                &cfg,
                config.train.protocol(),
            )?;
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: Some(section.layers),
                sigma: None,
                final_fidelity: Some(fidelity),
                fidelity_stats: None,
                per_sector_fidelity: None,
                extra: None,
            };
            write_artifacts(
                out_dir,
                Some(trace.to_csv()),
                &summary,
                Some(params.to_checkpoint_json()?),
            )
        }
        TaskKind::ChannelPrep => {
            let section = &config.channel_prep;
            let code = binomial_code(section.code_order)?;
            guard_basis(2, code.photon_number(), config.basis_cap)?;
            let cfg = config.train.to_config(config.seed)?;
            let (inputs, outputs, target) = match section.gate.as_str() {
                "encoding" => {
                    let basis = FockBasis::new(2, code.photon_number())?;
                    let inputs = vec![
                        FockState::from_occupation(&basis, &[0, code.photon_number()])?,
                        FockState::from_occupation(&basis, &[code.photon_number(), 0])?,
                    ];
                    let outputs = vec![code.logical_zero.clone(), code.logical_one.clone()];
                    (inputs, outputs, ndarray::Array2::<Complex64>::eye(2))
                }
                "h" | "s" | "t" => {
                    let gate = match section.gate.as_str() {
                        "h" => LogicalGate::H,
                        "s" => LogicalGate::S,
                        _ => LogicalGate::T,
                    };
                    let code_states = vec![code.logical_zero.clone(), code.logical_one.clone()];
                    (code_states.clone(), code_states, logical_gate_target(gate))
                }
                other => {
                    return Err(CoreError::InvalidConfig(format!(
                        "unknown channel gate {other:?} (encoding | h | s | t)"
                    )))
                }
            };
            let mut objective = ChannelObjective::new(inputs, outputs, target)?;
            objective.final_activation = config.final_activation;
            let (params, fidelity, trace) = train_with_protocol(
                2,
                section.layers,
                &objective,
                &cfg,
                config.train.protocol(),
            )?;
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: Some(section.layers),
                sigma: None,
                final_fidelity: Some(fidelity),
                fidelity_stats: None,
                per_sector_fidelity: None,
                extra: Some(serde_json::json!({"gate": section.gate})),
            };
            write_artifacts(
                out_dir,
                Some(trace.to_csv()),
                &summary,
                Some(params.to_checkpoint_json()?),
            )
        }
        TaskKind::LogicalCz => {
            let section = &config.logical_cz;
            let code = binomial_code(section.code_order)?;
            guard_basis(4, 2 * code.photon_number(), config.basis_cap)?;
            let cfg = config.train.to_config(config.seed)?;
            let outcome = train_logical_cz(
                &code,
                section.layers_each,
                &cfg,
                TrainProtocol::new(section.attempts, 1),
            )?;
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: Some(2 * section.layers_each),
                sigma: None,
                final_fidelity: Some(outcome.gate_fidelity),
                fidelity_stats: None,
                per_sector_fidelity: None,
                extra: Some(serde_json::json!({
                    "encoder_fidelity": outcome.encoder_fidelity,
                    "decoder_fidelity": outcome.decoder_fidelity,
                })),
            };
            write_artifacts(
                out_dir,
                None,
                &summary,
                Some(outcome.encoder.to_checkpoint_json()?),
            )
        }
        TaskKind::MonteCarlo => {
            let section = &config.monte_carlo;
            guard_basis(section.modes, section.photons, config.basis_cap)?;
            let cfg = config.train.to_config(config.seed)?;
            let input = single_photon_input(section.modes, section.photons)?;
            let target = make_noon_state(section.photons, (0, 1), section.modes)?;
            let outcome = run_state_prep_protocol(
                target.clone(),
                input.clone(),
                section.layers,
                &cfg,
                config.train.protocol(),
            )?;
            let objective = StatePrepObjective::new(input, target);
            let mc = splitter_monte_carlo(
                &outcome.params,
                &objective,
                section.sigma,
                section.samples,
                config.seed,
            )?;
            let mut csv = String::from("sample,fidelity\n");
            for (i, f) in mc.fidelities.iter().enumerate() {
                csv.push_str(&format!("{i},{f}\n"));
            }
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: Some(section.layers),
                sigma: Some(section.sigma),
                final_fidelity: Some(outcome.fidelity),
                fidelity_stats: Some(FidelityStats {
                    median: mc.median,
                    min: mc.min,
                    max: mc.max,
                }),
                per_sector_fidelity: None,
                extra: Some(serde_json::json!({"samples": section.samples})),
            };
            write_artifacts(
                out_dir,
                Some(csv),
                &summary,
                Some(outcome.params.to_checkpoint_json()?),
            )
        }
        TaskKind::RoutingGate => {
            let section = &config.routing_gate;
            guard_basis(2, section.max_photons + 1, config.basis_cap)?;
            let cfg = config.train.to_config(config.seed)?;
            let outcome = train_routing_gate_protocol(
                section.max_photons,
                section.layers,
                &cfg,
                config.train.protocol(),
            )?;
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: Some(section.layers),
                sigma: None,
                final_fidelity: Some(
                    outcome
                        .per_sector_fidelity
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min),
                ),
                fidelity_stats: None,
                per_sector_fidelity: Some(outcome.per_sector_fidelity.clone()),
                extra: None,
            };
            write_artifacts(
                out_dir,
                Some(outcome.trace.to_csv()),
                &summary,
                Some(outcome.params.to_checkpoint_json()?),
            )
        }
        TaskKind::LossCorrection => {
            let section = &config.loss_correction;
            let code = binomial_code(2)?;
            guard_basis(3, code.photon_number() + 1, config.basis_cap)?;
            let cfg = config.train.to_config(config.seed)?;
            let alpha = Complex64::new(section.alpha, 0.0);
            let beta = Complex64::new(section.beta, 0.0);
            let pipeline = train_correction_pipeline(
                code,
                section.routing_layers,
                section.recovery_layers,
                alpha,
                beta,
                &cfg,
                config.train.protocol(),
            )?;
            let mut fidelities = Vec::new();
            for mode in 0..2 {
                let outcome = run_loss_correction_demo(&pipeline, mode, alpha, beta)?;
                fidelities.push(outcome.fidelity);
            }
            let mean = fidelities.iter().sum::<f64>() / fidelities.len() as f64;
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: Some(section.recovery_layers),
                sigma: None,
                final_fidelity: Some(mean),
                fidelity_stats: None,
                per_sector_fidelity: Some(fidelities),
                extra: Some(serde_json::json!({
                    "routing_layers": section.routing_layers,
                    "alpha": section.alpha,
                    "beta": section.beta,
                })),
            };
            write_artifacts(
                out_dir,
                None,
                &summary,
                Some(pipeline.recovery.to_checkpoint_json()?),
            )
        }
        TaskKind::ScatteringSweep => {
            let section = &config.scattering_sweep;
            let phases: Vec<(f64, f64)> = (0..section.phase_steps)
                .map(|k| {
                    let delta =
                        std::f64::consts::PI * k as f64 / (section.phase_steps - 1).max(1) as f64;
                    (section.phi1, section.phi1 + delta)
                })
                .collect();
            let rows = gate_sweep(
                &section.sigma_over_g,
                section.kappa_over_g,
                &phases,
                GateSolverOptions {
                    step_scale: section.step_scale,
                    span_fwhm: section.span_fwhm,
                },
            )?;
            let min_row = rows
                .iter()
                .min_by(|a, b| a.fidelity.partial_cmp(&b.fidelity).unwrap())
                .expect("sweep is non-empty");
            let summary = Summary {
                task: config.task,
                seed: config.seed,
                layers: None,
                sigma: None,
                final_fidelity: None,
                fidelity_stats: None,
                per_sector_fidelity: None,
                extra: Some(serde_json::json!({
                    "rows": rows.len(),
                    "min_fidelity": min_row.fidelity,
                    "min_fidelity_phase_difference": (min_row.phi2 - min_row.phi1).abs(),
                    "max_richardson_delta": rows
                        .iter()
                        .map(|r| r.richardson_delta)
                        .fold(0.0f64, f64::max),
                })),
            };
            write_artifacts(out_dir, Some(sweep_to_csv(&rows)), &summary, None)
        }
    }
}

fn task_catalog() -> String {
    let defaults = ExperimentConfig::default();
    let catalog = serde_json::json!({
        "tasks": [
            {
                "id": "state-prep",
                "summary": "Train a network to map single-photon inputs onto a Haar-random or N00N target state.",
                "parameters": serde_json::to_value(&defaults.state_prep).unwrap(),
            },
            {
                "id": "channel-prep",
                "summary": "Train the binomial-code encoding channel or a logical H/S/T gate.",
                "parameters": serde_json::to_value(&defaults.channel_prep).unwrap(),
            },
            {
                "id": "logical-cz",
                "summary": "Train encode/decode networks and evaluate the assembled controlled-phase gate.",
                "parameters": serde_json::to_value(&defaults.logical_cz).unwrap(),
            },
            {
                "id": "monte-carlo",
                "summary": "Re-evaluate a trained N00N network under sampled splitter errors.",
                "parameters": serde_json::to_value(&defaults.monte_carlo).unwrap(),
            },
            {
                "id": "routing-gate",
                "summary": "Train the photon-routing gate |1,n> -> |0,n+1> jointly over sectors.",
                "parameters": serde_json::to_value(&defaults.routing_gate).unwrap(),
            },
            {
                "id": "loss-correction",
                "summary": "Train the routing + recovery pipeline and run the photon-loss correction demo.",
                "parameters": serde_json::to_value(&defaults.loss_correction).unwrap(),
            },
            {
                "id": "scattering-sweep",
                "summary": "Sweep the nonlinear-gate fidelity over pulse widths and phase differences.",
                "parameters": serde_json::to_value(&defaults.scattering_sweep).unwrap(),
            },
        ],
        "shared": {
            "seed": defaults.seed,
            "basis_cap": defaults.basis_cap,
            "final_activation": defaults.final_activation,
            "train": serde_json::to_value(&defaults.train).unwrap(),
        },
    });
    serde_json::to_string_pretty(&catalog).unwrap() + "\n"
}
