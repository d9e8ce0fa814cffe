use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cofdm::channel::{estimate_correlation, generate_set, read_channel_set, write_channel_set, BandPlan, SvParams};
use cofdm::code::{enumerate_error_vectors, CodeSpec, EnumerationOptions, WeightMeasure};
use cofdm::experiment::{
    export_results, format_rows, import_results, run_experiment, ExperimentConfig, Format, Method,
};
use cofdm::modem::{Modulation, QamConstellation};
use cofdm::{Error, Result};

#[derive(Parser)]
#[command(name = "cofdm", version, about = "BER analysis of coded OFDM with tone interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw Saleh-Valenzuela realizations and write their frequency responses.
    GenChannels {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with the channel model parameters (CM1 by default).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Estimate the tone correlation matrix from a channel file.
    EstimateCorr {
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the simple error events of a code.
    Enumerate {
        /// Built-in code name.
        #[arg(long, default_value = "mb-ofdm-1/2", conflicts_with = "spec")]
        code: String,
        /// TOML file with `generators`, `constraint_length`, `puncture`, `repetition`.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 14)]
        w_max: usize,
        #[arg(long, default_value = "output")]
        measure: String,
        #[arg(long, default_value_t = 2048)]
        length_cap: usize,
        /// Print every event, not just the summary.
        #[arg(long)]
        list: bool,
    },
    /// Run Method I or Method II over an experiment file.
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the Monte Carlo simulator over an experiment file.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        min_errors: Option<u64>,
        #[arg(long)]
        max_packets: Option<u64>,
    },
    /// Convert a result table between CSV and JSON lines.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Print the points and labels of a QAM constellation.
    Constellation {
        #[arg(long, default_value = "4qam")]
        modulation: String,
        #[arg(long, default_value_t = 1.0)]
        es: f64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Override the method in the file (`1`, `2`).
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    outage_percent: Option<f64>,
    #[arg(long)]
    per_channel: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, args: &RunArgs, default: Option<Method>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(m) = &args.method {
        cfg.run.method = Method::parse(m)?;
    } else if let Some(m) = default {
        cfg.run.method = m;
    }
    if let Some(o) = &args.output {
        // Command line paths are relative to the working directory.
        cfg.run.output = Some(std::env::current_dir().map(|d| d.join(o)).unwrap_or_else(|_| o.clone()));
    }
    if let Some(f) = &args.format {
        cfg.run.format = Some(Format::parse(f)?);
    }
    cfg.run.resume |= args.resume;
    cfg.run.per_channel |= args.per_channel;
    if let Some(p) = args.outage_percent {
        cfg.run.outage_percent = p;
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let rows = run_experiment(cfg)?;
    match cfg.output_path() {
        Some(p) => eprintln!("{} rows written to {}", rows.len(), p.display()),
        None => print!("{}", format_rows(&rows, cfg.output_format(), true)?),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenChannels { seed, count, out, model } => {
            let params = match model {
                Some(p) => read_toml::<SvParams>(&p)?,
                None => SvParams::cm1(),
            };
            params.validate()?;
            let set = generate_set(&params, &BandPlan::mb_ofdm(), seed, count)?;
            write_channel_set(&out, &set)?;
            eprintln!("{count} realizations written to {}", out.display());
        }
        Command::EstimateCorr { channels, out } => {
            let set = read_channel_set(&channels)?;
            let sigma = estimate_correlation(&set)?;
            sigma.write(&out)?;
            eprintln!("{}x{} correlation from {} realizations", sigma.dim(), sigma.dim(), sigma.sample_count);
        }
        Command::Enumerate { code, spec, w_max, measure, length_cap, list } => {
            let spec = match spec {
                Some(p) => read_toml::<CodeSpec>(&p)?,
                None => CodeSpec::preset(&code)?,
            };
            let code = spec.build()?;
            let measure = match measure.as_str() {
                "output" => WeightMeasure::Output,
                "input" => WeightMeasure::Input,
                m => return Err(Error::Config(format!("unknown weight measure '{m}'"))),
            };
            let opts = EnumerationOptions { w_max, measure, length_cap };
            let set = enumerate_error_vectors(&code, opts)?;
            println!("rate {:.6} period {} vectors {}", code.rate(), code.period(), set.len());
            for p in 0..set.phases() {
                let ph = set.phase(p);
                let max_len = ph.iter().map(|e| e.len()).max().unwrap_or(0);
                let min_w = ph.iter().map(|e| e.weight).min().unwrap_or(0);
                println!("phase {p}: {} vectors, max length {max_len}, min weight {min_w}", ph.len());
            }
            if list {
                println!("phase weight info_errors length bits");
                for ev in set.iter() {
                    let bits: String = ev.bits.iter().map(|b| char::from(b'0' + b)).collect();
                    println!("{} {} {} {} {bits}", ev.phase, ev.weight, ev.info_errors, ev.len());
                }
            }
        }
        Command::Analyze { config, run } => {
            let cfg = load_config(&config, &run, None)?;
            if cfg.run.method == Method::Sim {
                return Err(Error::Config("use the simulate subcommand for method 'sim'".into()));
            }
            execute(&cfg)?;
        }
        Command::Simulate { config, run, seed, min_errors, max_packets } => {
            let mut cfg = load_config(&config, &run, Some(Method::Sim))?;
            if let Some(s) = seed {
                cfg.run.sim.seed = s;
            }
            if let Some(m) = min_errors {
                cfg.run.sim.min_errors = m;
            }
            if let Some(m) = max_packets {
                cfg.run.sim.max_packets = m;
            }
            cfg.validate()?;
            execute(&cfg)?;
        }
        Command::Export { input, out, format } => {
            let rows = import_results(&input, Format::from_path(&input))?;
            let format = match format {
                Some(f) => Format::parse(&f)?,
                None => Format::from_path(&out),
            };
            export_results(&rows, &out, format)?;
            eprintln!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Constellation { modulation, es } => {
            let m: Modulation = serde_json::from_value(serde_json::Value::String(modulation.clone()))
                .map_err(|_| Error::Config(format!("unknown modulation '{modulation}'")))?;
            let c = QamConstellation::new(m, es)?;
            let bits = c.bits_per_symbol();
            println!("label re im");
            for label in 0..(1usize << bits) {
                let group: Vec<u8> = (0..bits).rev().map(|k| ((label >> k) & 1) as u8).collect();
                let x = c.point(&group);
                let text: String = group.iter().map(|b| char::from(b'0' + b)).collect();
                println!("{text} {:.16e} {:.16e}", x.re, x.im);
            }
        }
    }
    Ok(())
}
