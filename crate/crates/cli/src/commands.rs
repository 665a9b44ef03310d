use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autogp::data::{
    load_csv, split, synth as generate, write_matrix_csv, LoadOptions, SplitSpec, SynthKind, SynthParams,
    TimeSeriesMatrix,
};
use autogp::diff::Tensor;
use autogp::forecaster::{evaluate, train as fit, KernelStrategy, TrainedModel};
use autogp::kernel_search::{greedy_search, kas_search, KernelStructure, SearchOutcome};

use crate::config::{RunConfig, Strategy};
use crate::RunArgs;

fn apply_run_args(cfg: &mut RunConfig, run: &RunArgs) -> Result<()> {
    if let Some(d) = &run.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &run.out {
        cfg.out = o.clone();
    }
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(l) = run.length {
        cfg.window.length = l;
    }
    if let Some(s) = run.step {
        cfg.window.step = s;
    }
    if let Some(e) = run.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = run.lr {
        cfg.train.lr = lr;
    }
    cfg.validate()
}

fn load(cfg: &RunConfig) -> Result<TimeSeriesMatrix> {
    let opts = LoadOptions {
        forward_fill: cfg.forward_fill,
        timestamp_column: cfg.timestamp_column.clone(),
    };
    let path = cfg.data_path()?;
    load_csv(path, &opts).with_context(|| format!("loading '{}'", path.display()))
}

/// Chronological train / validation / test segments. With zero validation
/// and test weights the whole series is used for training.
fn segments(cfg: &RunConfig) -> Result<(TimeSeriesMatrix, Option<TimeSeriesMatrix>)> {
    let data = load(cfg)?;
    if cfg.split[1] == 0.0 && cfg.split[2] == 0.0 {
        return Ok((data, None));
    }
    let (train, val, _) = split(&data, &SplitSpec::Ratios(cfg.split))?;
    Ok((train, Some(val)))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory '{}'", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write '{}'", path.display()))
}

fn write_report(dir: &Path, strategy: Strategy, outcome: &SearchOutcome) -> Result<()> {
    let text = format!(
        "strategy,kernel,validation_count,wall_time_secs,depth,validation_loss\n{},{},{},{:?},{},{:?}\n",
        format!("{strategy:?}").to_lowercase(),
        outcome.structure.canonical(),
        outcome.budget.validation_count,
        outcome.wall_time.as_secs_f64(),
        outcome.depth,
        outcome.validation_loss
    );
    write(&dir.join("search_report.csv"), &text)
}

pub fn search(mut cfg: RunConfig, run: &RunArgs, strategy: Option<Strategy>, order: Option<usize>) -> Result<()> {
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    if let Some(r) = order {
        cfg.order = r;
    }
    apply_run_args(&mut cfg, run)?;
    let (train, val) = segments(&cfg)?;
    let val = val.context("search needs a validation segment (non-zero split weights)")?;
    let fc = cfg.forecast();
    let outcome = match cfg.strategy {
        Strategy::Kas => kas_search(&train, &val, &cfg.kernels, cfg.order, &fc)?.0,
        Strategy::Greedy => greedy_search(&train, &val, &cfg.kernels, cfg.order, &fc)?.0,
        Strategy::Fixed => bail!("search needs --strategy kas or greedy"),
    };
    create_dir(&cfg.out)?;
    write(&cfg.out.join("kernel.txt"), &format!("{}\n", outcome.structure.canonical()))?;
    write_report(&cfg.out, cfg.strategy, &outcome)?;
    println!(
        "kernel: {}\nvalidation_count: {}\nwall_time_secs: {:.3}",
        outcome.structure.canonical(),
        outcome.budget.validation_count,
        outcome.wall_time.as_secs_f64()
    );
    Ok(())
}

pub fn train(
    mut cfg: RunConfig,
    run: &RunArgs,
    strategy: Option<Strategy>,
    order: Option<usize>,
    kernel: Option<String>,
    kernel_file: Option<PathBuf>,
) -> Result<()> {
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    if let Some(r) = order {
        cfg.order = r;
    }
    if let Some(path) = kernel_file {
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read '{}'", path.display()))?;
        cfg.kernel = text.trim().to_string();
        cfg.strategy = Strategy::Fixed;
    }
    if let Some(k) = kernel {
        cfg.kernel = k;
        cfg.strategy = Strategy::Fixed;
    }
    apply_run_args(&mut cfg, run)?;
    let strategy = match cfg.strategy {
        Strategy::Fixed => KernelStrategy::Fixed(cfg.kernel.parse::<KernelStructure>()?),
        Strategy::Kas => KernelStrategy::Kas {
            kinds: cfg.kernels.clone(),
            order: cfg.order,
        },
        Strategy::Greedy => KernelStrategy::Greedy {
            kinds: cfg.kernels.clone(),
            order: cfg.order,
        },
    };
    let (train, val) = segments(&cfg)?;
    let out = fit(&train, val.as_ref(), &strategy, &cfg.forecast())?;

    create_dir(&cfg.out)?;
    out.model.save(cfg.out.join("model.json"))?;
    write(&cfg.out.join("kernel.txt"), &format!("{}\n", out.model.kernel_text()))?;
    let mut log = String::from("epoch,loss\n");
    for (e, l) in out.losses.iter().enumerate() {
        log.push_str(&format!("{e},{l:?}\n"));
    }
    write(&cfg.out.join("train_log.csv"), &log)?;
    if let Some(s) = &out.search {
        write_report(&cfg.out, cfg.strategy, s)?;
    }
    write(&cfg.out.join("config.toml"), &cfg.to_toml()?)?;
    println!("kernel: {}", out.model.kernel_text());
    if let (Some(first), Some(last)) = (out.losses.first(), out.losses.last()) {
        println!("initial loss: {first:?}\nfinal loss: {last:?}");
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    TrainedModel::load(path).with_context(|| format!("loading model '{}'", path.display()))
}

pub fn forecast(model: &Path, recent: &Path, horizon: usize, output: &Path) -> Result<()> {
    let m = load_model(model)?;
    let recent = load_csv(recent, &LoadOptions::default())
        .with_context(|| format!("loading '{}'", recent.display()))?;
    let f = m.predict(&recent.values, horizon)?;
    let n = m.variables();
    let mut names = Vec::with_capacity(2 * n);
    let mut data = Vec::with_capacity(2 * n * horizon);
    for name in &m.names {
        names.push(format!("{name}_mean"));
        names.push(format!("{name}_std"));
    }
    for k in 0..horizon {
        for v in 0..n {
            data.push(f.mean.at(k, v));
            data.push(f.std.at(k, v));
        }
    }
    write_matrix_csv(output, &Tensor::matrix(horizon, 2 * n, data)?, Some(&names))?;
    Ok(())
}

pub fn eval(model: &Path, data: &Path, horizon: Option<usize>, output: &Path) -> Result<()> {
    let m = load_model(model)?;
    let series = load_csv(data, &LoadOptions::default()).with_context(|| format!("loading '{}'", data.display()))?;
    let horizon = horizon.unwrap_or(m.window.horizon);
    let r = evaluate(&m, &series.values, horizon)?;
    let line = format!("{:?},{:?},{:?},{}", r.mae, r.rmse, r.mape, r.mape_excluded);
    write(output, &format!("mae,rmse,mape,mape_excluded\n{line}\n"))?;
    println!("mae,rmse,mape,mape_excluded\n{line}");
    Ok(())
}

pub fn export_cov(model: &Path, out: &Path, pair: Option<Vec<usize>>) -> Result<()> {
    let m = load_model(model)?;
    let n = m.variables();
    let pairs: Vec<(usize, usize)> = match pair.as_deref() {
        Some(&[a, b]) => {
            if a >= n || b >= n {
                bail!("variable pair ({a}, {b}) out of range for a model with {n} variables");
            }
            vec![(a, b)]
        }
        Some(_) => bail!("--pair takes exactly two indices"),
        None => (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect(),
    };
    create_dir(out)?;
    write_matrix_csv(out.join("K.csv"), &m.training_covariance()?, None)?;
    write_matrix_csv(out.join("D.csv"), &m.cross_weights(), Some(&m.names))?;
    for (a, b) in pairs {
        write_matrix_csv(out.join(format!("C_{a}_{b}.csv")), &m.shared_block(a, b)?, None)?;
    }
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct SynthArgs {
    /// sine, trend, sine_plus_trend, sine_abrupt or coupled_pair.
    #[arg(long, value_parser = parse_kind)]
    kind: SynthKind,
    /// Number of rows t.
    #[arg(short = 't', long)]
    length: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    slope: Option<f64>,
    #[arg(long)]
    jump_at: Option<usize>,
    #[arg(long)]
    jump_size: Option<f64>,
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    ar: Option<f64>,
    #[arg(long)]
    ar_scale: Option<f64>,
    #[arg(long)]
    noise_variables: Option<usize>,
}

fn parse_kind(s: &str) -> std::result::Result<SynthKind, String> {
    s.parse().map_err(|e: autogp::Error| e.to_string())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut p = SynthParams::default();
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = args.$field { p.$field = v; })*};
    }
    set!(amplitude, period, slope, jump_size, coupling, lag, ar, ar_scale, noise_variables);
    if args.jump_at.is_some() {
        p.jump_at = args.jump_at;
    }
    let y = generate(args.kind, args.length, &p, args.noise, args.seed)?;
    y.write_csv(&args.output)
        .with_context(|| format!("cannot write '{}'", args.output.display()))?;
    Ok(())
}
