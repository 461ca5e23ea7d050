//! Command-line front end: single runs, ensembles, record analysis and gain
//! calibration.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bec_feedback::analysis::phonon::{self, Mode};
use bec_feedback::harness::{
    monte_carlo, run_experiment_with, write_json, write_timeseries_csv, ExperimentConfig, ScenarioKind,
};
use bec_feedback::optics::write_ascii_grid;
use bec_feedback::{calibrate_gains, loop_gain, SignalVector};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "becfb", version, about = "Closed-loop BEC feedback simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its time series and summary.
    Run(RunArgs),
    /// Run a seeded Monte-Carlo ensemble and write its summary.
    Ensemble(EnsembleArgs),
    /// Phonon occupancies of a time-series CSV written by `run`.
    Analyze(AnalyzeArgs),
    /// Feedback matrix for the configured loop-gain targets.
    Calibrate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    feedback: Option<Switch>,
    /// dipole_kick, quadrupole_drive or quiet.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also write every rendered frame as an ASCII grid under frames/.
    #[arg(long)]
    dump_frames: bool,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Run sequentially instead of across threads.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Time-series CSV.
    input: PathBuf,
    /// Config the record was produced with.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write analysis.json here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<bec_feedback::Error> for Failure {
    fn from(e: bec_feedback::Error) -> Self {
        let kind = match &e {
            bec_feedback::Error::Config { .. } => "config",
            bec_feedback::Error::Io(_) => "io",
            _ => "simulation",
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            kind: "io",
            message: e.to_string(),
        }
    }
}

fn fail(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure {
        kind,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            report(&fail(
                "usage",
                msg.lines().next().unwrap_or("").trim_start_matches("error: "),
            ));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Analyze(a) => analyze(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::FAILURE
        }
    }
}

fn report(f: &Failure) {
    eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
}

fn load_config(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| fail("io", format!("{}: {e}", p.display())))?;
            Ok(ExperimentConfig::parse(&text)?)
        }
    }
}

fn configure(a: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(f) = a.feedback {
        cfg.scenario.feedback = matches!(f, Switch::On);
    }
    if let Some(name) = &a.scenario {
        cfg.scenario.kind = ScenarioKind::from_name(name).map_err(|e| fail("config", e.to_string()))?;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;
    Ok(cfg)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn run(a: RunArgs) -> CliResult<()> {
    let cfg = configure(&a.common)?;
    let out = &a.common.out;
    let rec = if a.dump_frames {
        let dir = out.join("frames");
        fs::create_dir_all(&dir)?;
        let mut sink = |i: usize, frame: &bec_feedback::ImageGrid| {
            let mut w = BufWriter::new(File::create(dir.join(format!("frame_{i:05}.txt")))?);
            write_ascii_grid(frame, &mut w)?;
            w.flush()?;
            Ok(())
        };
        run_experiment_with(&cfg, Some(&mut sink))?
    } else {
        run_experiment_with(&cfg, None)?
    };
    let mut csv = create(&out.join("timeseries.csv"))?;
    write_timeseries_csv(&rec, &mut csv)?;
    csv.flush()?;
    let mut js = create(&out.join("summary.json"))?;
    write_json(
        &json!({ "config_hash": rec.config_hash, "scenario": rec.scenario, "summary": rec.summary }),
        &mut js,
    )?;
    js.flush()?;
    let s = &rec.summary;
    println!(
        "run seed={} feedback={} samples={} n_true_x={:.3} n_true_z={:.3} n_true_w={:.3}",
        s.seed,
        s.feedback,
        rec.samples.len(),
        s.n_true[0],
        s.n_true[1],
        s.n_true[2]
    );
    Ok(())
}

fn ensemble(a: EnsembleArgs) -> CliResult<()> {
    let cfg = configure(&a.common)?;
    let ens = monte_carlo(&cfg, a.runs as usize, cfg.scenario.seed, !a.serial);
    let mut js = create(&a.common.out.join("ensemble.json"))?;
    write_json(&ens.summary, &mut js)?;
    js.flush()?;
    let mut runs = create(&a.common.out.join("runs.json"))?;
    write_json(&ens.outcomes, &mut runs)?;
    runs.flush()?;
    let mean = |name: &str| ens.summary.stats.get(name).map_or(f64::NAN, |s| s.mean);
    println!(
        "ensemble runs={} failures={} n_true_x={:.3} n_true_z={:.3}",
        ens.summary.runs,
        ens.summary.failures,
        mean("n_true_x"),
        mean("n_true_z")
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let mut reader = csv::Reader::from_path(&a.input).map_err(|e| fail("io", format!("{}: {e}", a.input.display())))?;
    let header = reader.headers().map_err(|e| fail("input", e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail("input", format!("missing column `{name}`")))
    };
    let names = [
        "t",
        "x",
        "z",
        "w",
        "dx_trap",
        "dz_trap",
        "domega_x_sq",
        "x_hat",
        "z_hat",
    ];
    let idx = names.iter().map(|n| col(n)).collect::<CliResult<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| fail("input", e.to_string()))?;
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let v: f64 = row
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| fail("input", format!("row {}: bad value in column {}", line + 2, &header[i])))?;
            c.push(v);
        }
    }
    if cols[0].len() < 2 {
        return Err(fail("input", "record needs at least two samples"));
    }
    let tau = cols[0][1] - cols[0][0];
    let plant = &cfg.plant;
    let trap: Vec<[f64; 3]> = (0..cols[0].len())
        .map(|i| plant.equilibrium(&SignalVector::new(cols[4][i], cols[5][i], cols[6][i])))
        .collect();
    let mut modes = serde_json::Map::new();
    for mode in Mode::ALL {
        let m = mode.index();
        let eq: Vec<f64> = trap.iter().map(|t| t[m]).collect();
        let exact = phonon::estimate(mode, plant, &cols[1 + m], Some(&eq), 0.0, tau)?;
        let mut entry = json!({ "n": exact.n_meas, "window_s": exact.window });
        if m < 2 {
            let est = phonon::estimate(mode, plant, &cols[7 + m], Some(&eq), cfg.noise.post_sigma[m], tau)?;
            entry["n_meas_in_loop"] = json!(est.n_meas);
            entry["n_true_in_loop"] = json!(est.n_true);
        }
        modes.insert(mode.name().to_string(), entry);
    }
    let result = json!({ "samples": cols[0].len(), "tau": tau, "modes": modes });
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = create(&dir.join("analysis.json"))?;
            write_json(&result, &mut w)?;
            w.flush()?;
        }
        None => write_json(&result, std::io::stdout().lock())?,
    }
    Ok(())
}

fn calibrate(a: CommonArgs) -> CliResult<()> {
    let cfg = configure(&a)?;
    let targets = cfg.gain_targets.unwrap_or_default();
    let k = calibrate_gains(&cfg.transfer, &targets)?;
    let result = json!({
        "targets": targets,
        "k_volts_per_micron": k.to_volts_per_micron(),
        "loop_gain": loop_gain(&cfg.transfer, &k),
        "nominal_loop_gain": loop_gain(&cfg.transfer, &cfg.controller.gains),
    });
    let mut w = create(&a.out.join("calibration.json"))?;
    write_json(&result, &mut w)?;
    w.flush()?;
    write_json(&result, std::io::stdout().lock())?;
    Ok(())
}
