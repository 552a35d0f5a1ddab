#![allow(clippy::neg_cmp_op_on_partial_ord)]

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use recontrack::analytic::{closure_map_invariant_measure, iaa_invariant_measure, AnalyticParams};
use recontrack::des::{simulate, SimConfig};
use recontrack::experiment::{
    emit_analytic_curves, output_path, persist, preset, preset_source, run_experiment, ExperimentConfig,
    OUTPUT_DIR_ENV, PRESET_NAMES,
};
use recontrack::metrics::{peak_ages, reconstruction_error};
use recontrack::stochastic::{DistributionSpec, RngStream, Sampler};
use recontrack::wiener::{reconstruction_demo, write_demo_csv};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "recontrack", version, about = "Peak age and Wiener reconstruction error of finite-buffer LCFS queues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a single-run TOML file and write its delivery trace.
    Simulate {
        config: PathBuf,
        /// Trace CSV path (default: <out-dir>/<config stem>.trace.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run an experiment sweep from a TOML file or a shipped preset.
    Sweep {
        #[arg(required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        deliveries: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Rows CSV path; the summary goes next to it.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Closed-form M/M/1/B+1 curves as CSV. Lists are `a,b,c` or `start:stop:step`.
    Analytic {
        #[arg(long, default_value = "0.2:4:0.2")]
        lambda: String,
        #[arg(long, default_value = "1")]
        mu: String,
        #[arg(long, default_value = "1")]
        buffer: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stationary law of the normalized waiting time under IaA in heavy traffic.
    Invariant {
        #[arg(long, default_value_t = 1 << 14)]
        bins: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Use the deterministic closure map instead of the stochastic kernel.
        #[arg(long)]
        closure_map: bool,
        /// Write `x,weight` rows to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample a Wiener path, reconstruct it from Poisson samples, write (t, w, w_hat).
    WienerDemo {
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        max_step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print a shipped preset, or list them.
    Preset { name: Option<String> },
}

#[derive(Args)]
struct OutDir {
    /// Output directory (default: the working directory).
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
}

impl OutDir {
    fn resolve(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let [a, b, h] = [parts[0], parts[1], parts[2]].map(|s| s.trim().parse::<f64>());
        let (a, b, h) = (a?, b?, h?);
        if !(h > 0.0) || b < a {
            bail!("bad range `{text}`");
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        // snap away accumulated binary error so 0.2:1:0.2 prints as 0.6, not 0.6000000000000001
        return Ok((0..=n).map(|k| ((a + k as f64 * h) * 1e12).round() / 1e12).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in `{text}`")))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn sink(output: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_simulate(config: &Path, trace: Option<PathBuf>, seed: Option<u64>, out: &OutDir) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut sim: SimConfig = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if let Some(s) = seed {
        sim.seed = s;
    }
    sim.validate()?;
    let result = simulate(&sim)?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let path = trace.unwrap_or_else(|| out.resolve().join(format!("{stem}.trace.csv")));
    let mut w = create(&path)?;
    result.trace.write_csv(&mut w)?;
    w.flush()?;

    let age = peak_ages(&result.trace)?;
    let re = reconstruction_error(&result.trace)?;
    println!("policy={}", sim.policy);
    println!("deliveries={}", result.trace.delivered_count());
    println!("avg_peak_age={}", age.avg_peak_age);
    println!("avg_re={}", re.avg_re);
    println!("lambda_eff={}", re.lambda_eff_empirical);
    println!("loss_prob={}", recontrack::des::loss_probability(&result.trace)?);
    println!("normalized_wait={}", result.stats.waits.normalized_wait());
    println!("trace={}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    replications: Option<usize>,
    deliveries: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    out: &OutDir,
) -> Result<()> {
    let mut c = match (config, preset_name) {
        (_, Some(name)) => preset(&name)?,
        (Some(path), None) => ExperimentConfig::from_file(&path)?,
        (None, None) => bail!("give a config file or --preset"),
    };
    if let Some(r) = replications {
        c.replications = r;
    }
    if let Some(n) = deliveries {
        c.deliveries = n;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    let path = output.unwrap_or_else(|| output_path(&c, Some(&out.resolve())));
    let result = run_experiment(&c)?;
    let (rows, summary) = persist(&result, &path)?;
    eprintln!("{}: {} rows, {} grid points", c.name, result.rows.len(), result.summary.len());
    println!("{}", rows.display());
    println!("{}", summary.display());
    Ok(())
}

fn run_analytic(lambda: &str, mu: &str, buffer: &str, output: &Option<PathBuf>) -> Result<()> {
    let mut grid = Vec::new();
    for b in parse_list(buffer)? {
        if !(b >= 1.0 && b.fract() == 0.0) {
            bail!("buffer sizes must be positive integers, got {b}");
        }
        for &m in &parse_list(mu)? {
            for &l in &parse_list(lambda)? {
                grid.push(AnalyticParams::new(l, m, b as usize)?);
            }
        }
    }
    let mut w = sink(output)?;
    emit_analytic_curves(&grid, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_invariant(bins: usize, tol: f64, closure_map: bool, output: &Option<PathBuf>) -> Result<()> {
    let m = if closure_map {
        closure_map_invariant_measure(bins, tol)?
    } else {
        iaa_invariant_measure(bins, tol)?
    };
    println!("mean={}", m.mean);
    println!("iterations={}", m.iterations);
    println!("support=[{}, {}]", m.lower, m.upper);
    if let Some(path) = output {
        let mut w = create(path)?;
        writeln!(w, "x,weight")?;
        for (x, p) in m.midpoints().zip(&m.weights) {
            writeln!(w, "{x},{p}")?;
        }
        w.flush()?;
        println!("density={}", path.display());
    }
    Ok(())
}

fn run_wiener_demo(rate: f64, horizon: f64, max_step: f64, seed: u64, output: Option<PathBuf>, out: &OutDir) -> Result<()> {
    if !(horizon > 0.0) {
        bail!("horizon must be positive");
    }
    let gaps: Sampler = DistributionSpec::exponential(rate)?.sampler()?;
    let mut stream = RngStream::new(seed, 0);
    let mut times = Vec::new();
    let mut t = gaps.sample(&mut stream);
    while t <= horizon {
        times.push(t);
        t += gaps.sample(&mut stream);
    }
    if times.is_empty() {
        bail!("no samples fell inside the horizon; raise --rate or --horizon");
    }
    let rows = reconstruction_demo(&times, max_step, &mut RngStream::new(seed, 1))?;
    let path = output.unwrap_or_else(|| out.resolve().join("wiener_demo.csv"));
    let mut w = create(&path)?;
    write_demo_csv(&rows, &mut w)?;
    w.flush()?;
    println!("samples={}", times.len());
    println!("rows={}", rows.len());
    println!("output={}", path.display());
    Ok(())
}

fn run_preset(name: Option<String>) -> Result<()> {
    match name {
        None => {
            for n in PRESET_NAMES {
                println!("{n}");
            }
        }
        Some(n) => match preset_source(&n) {
            Some(text) => print!("{text}"),
            None => bail!("unknown preset `{n}` (known: {})", PRESET_NAMES.join(", ")),
        },
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, trace, seed, out } => run_simulate(&config, trace, seed, &out),
        Command::Sweep {
            config,
            preset,
            replications,
            deliveries,
            seed,
            output,
            out,
        } => run_sweep(config, preset, replications, deliveries, seed, output, &out),
        Command::Analytic { lambda, mu, buffer, output } => run_analytic(&lambda, &mu, &buffer, &output),
        Command::Invariant {
            bins,
            tol,
            closure_map,
            output,
        } => run_invariant(bins, tol, closure_map, &output),
        Command::WienerDemo {
            rate,
            horizon,
            max_step,
            seed,
            output,
            out,
        } => run_wiener_demo(rate, horizon, max_step, seed, output, &out),
        Command::Preset { name } => run_preset(name),
    }
}
