use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use vip_core::baseline_gp::{gp_fit_grid, gp_predict, GpGrid};
use vip_core::bench::{
    fit, run_protocol, sniff_header, synth_toy, write_csv, BenchConfig, Dataset, ModelFile, NoiseLevel,
    Protocol,
};
use vip_core::inference::TrainConfig;
use vip_core::predict::{nll_rmse, CoefficientMode, PredictiveDistribution};
use vip_core::{Matrix, VipError};

#[derive(Parser)]
#[command(name = "vip", version, about = "Variational implicit processes: training, prediction and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Toy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Coeff {
    Learned,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Toy,
    Uci,
    Interp,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Noise variance (the default reading of the noise level).
        #[arg(long, conflicts_with = "noise_std")]
        noise_var: Option<f64>,
        /// Noise standard deviation.
        #[arg(long)]
        noise_std: Option<f64>,
    },
    /// Train a model and write it as JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Training config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Predict at the inputs of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        coeff: Option<Coeff>,
    },
    /// Score a predictions file against targets.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run an experiment protocol and print a JSON report.
    Bench {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact RBF GP with grid-searched hyperparameters.
    GpBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        grid_config: Option<PathBuf>,
        /// Held-out data to score.
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

/// Errors in how the tool was invoked (exit code 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<VipError>() {
        Some(e) if e.is_numerical() => 4,
        Some(VipError::Parameter(_)) => 2,
        Some(VipError::Contract(_)) => 4,
        _ => 3,
    }
}

fn read_data(path: &Path) -> anyhow::Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(VipError::from).with_context(|| format!("reading {}", path.display()))?;
    let data = vip_core::bench::parse_csv(&text, sniff_header(&text)).with_context(|| format!("parsing {}", path.display()))?;
    Ok(data)
}

fn read_config<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(VipError::from).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("invalid config {}: {e}", path.display())).into())
}

fn noise_level(var: Option<f64>, std: Option<f64>) -> NoiseLevel {
    match (var, std) {
        (_, Some(s)) => NoiseLevel::Std(s),
        (Some(v), None) => NoiseLevel::Variance(v),
        (None, None) => NoiseLevel::default(),
    }
}

/// Inputs of a prediction file: all columns, or all but the last when the
/// file also carries targets.
fn inputs_for(model: &ModelFile, path: &Path) -> anyhow::Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(VipError::from).with_context(|| format!("reading {}", path.display()))?;
    let header = sniff_header(&text);
    let d = model.standardization.feature_means.len();
    let data = vip_core::bench::parse_csv(&text, header)?;
    if data.dim() == d {
        return Ok(data.x);
    }
    if data.dim() + 1 == d {
        let n = data.len();
        return Ok(Matrix::from_fn(n, d, |i, j| if j < d - 1 { data.x[(i, j)] } else { data.y[i] }));
    }
    Err(VipError::Data(format!("{} has {} columns; the model expects {d} inputs", path.display(), data.dim() + 1)).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { kind: SynthKind::Toy, n, seed, out, noise_var, noise_std } => {
            let data = synth_toy(n, seed, noise_level(noise_var, noise_std))?;
            let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| vec![data.x[(i, 0)], data.y[i]]).collect();
            write_csv(&out, &["x".to_string(), "y".to_string()], &rows)?;
        }
        Command::Train { data, config, seed, model_out } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => read_config(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(|e| Usage(e.to_string()))?;
            let raw = read_data(&data)?;
            let bench = BenchConfig { train: cfg.clone(), ..BenchConfig::default() };
            let (model, stand, tcfg) = fit(&raw, &bench, cfg.seed)?;
            let file = ModelFile::new(model, stand.clone(), tcfg, &stand.dataset(&raw)?);
            file.save(&model_out)?;
        }
        Command::Predict { model, data, out, coeff } => {
            let m = ModelFile::load(&model)?;
            let x = inputs_for(&m, &data)?;
            let mode = match coeff {
                Some(Coeff::Learned) => CoefficientMode::Learned,
                Some(Coeff::Exact) => CoefficientMode::Exact,
                None => m.default_mode(),
            };
            let (mean, var_y) = m.predict(&x, mode)?;
            let d = x.cols();
            let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
            header.push("mean".into());
            header.push("var_y".into());
            let rows: Vec<Vec<f64>> = (0..x.rows())
                .map(|i| x.row_slice(i).iter().copied().chain([mean[i], var_y[i]]).collect())
                .collect();
            write_csv(&out, &header, &rows)?;
        }
        Command::Eval { pred, data } => {
            let p = read_data(&pred)?;
            let d = read_data(&data)?;
            if p.len() != d.len() {
                bail!(VipError::Data(format!("{} predictions for {} targets", p.len(), d.len())));
            }
            if p.dim() < 1 {
                bail!(VipError::Data("predictions file needs mean and var_y columns".into()));
            }
            let mean = p.x.col_vec(p.dim() - 1);
            let dist = PredictiveDistribution { mean, var_f: p.y.clone(), var_y: p.y, cov: None };
            let m = nll_rmse(&dist, &d.y, 1.0)?;
            println!("{}", serde_json::to_string_pretty(&json!({ "n": d.len(), "nll": m.nll, "rmse": m.rmse }))?);
        }
        Command::Bench { protocol, data, config, splits, seed, out } => {
            let cfg: BenchConfig = match config {
                Some(p) => read_config(&p)?,
                None => BenchConfig::default(),
            };
            cfg.train.validate().map_err(|e| Usage(e.to_string()))?;
            let protocol = match protocol {
                ProtocolArg::Toy => Protocol::Toy,
                ProtocolArg::Uci => Protocol::Uci,
                ProtocolArg::Interp => Protocol::Interp,
            };
            let data = match data {
                Some(p) => Some(read_data(&p)?),
                None if protocol == Protocol::Toy => None,
                None => return Err(Usage("--data is required for this protocol".into()).into()),
            };
            let report = run_protocol(protocol, data.as_ref(), &cfg, splits, seed)?;
            let text = report.to_json()?;
            if let Some(p) = out {
                std::fs::write(&p, &text).map_err(VipError::from)?;
            }
            print!("{text}");
        }
        Command::GpBaseline { data, grid_config, test } => {
            let grid: GpGrid = match grid_config {
                Some(p) => read_config(&p)?,
                None => GpGrid::default(),
            };
            let raw = read_data(&data)?;
            let stand = vip_core::bench::Standardization::fit(&raw)?;
            let train = stand.dataset(&raw)?;
            let best = gp_fit_grid(&train.x, &train.y, &grid)?;
            let mut report = json!({
                "lengthscale": best.kernel.lengthscale,
                "signal_variance": best.kernel.signal_variance,
                "sigma2": best.sigma2,
                "log_marginal": best.log_marginal,
            });
            if let Some(t) = test {
                let test = read_data(&t)?;
                let pred = gp_predict(&best.kernel, &train.x, &train.y, best.sigma2, &stand.inputs(&test.x)?)?;
                let m = nll_rmse(&pred, &stand.targets(&test.y), stand.target_std)?;
                report["test_nll"] = json!(m.nll);
                report["test_rmse"] = json!(m.rmse);
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
