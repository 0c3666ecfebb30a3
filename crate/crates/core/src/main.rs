use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use stem_diffusion::bench::{self, BenchmarkOptions, Normalization};
use stem_diffusion::config::{self, PatternKind, SimConfig, Threads, THREADS_ENV};
use stem_diffusion::output::FrameFormat;
use stem_diffusion::sim::{self, Corruption};

#[derive(Parser)]
#[command(
    name = "stem-diffusion",
    version,
    about = "Diffusion field left by a scanned electron probe"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the frame sequence described by the config.
    Simulate(Common),
    /// Run the oracle checks against the configured parameters.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Evaluate the kernel with a negated Q0 (the mass check must fail).
        #[arg(long, hide = true)]
        corrupt_q0_sign: bool,
    },
    /// Time raster sequences over several grid sizes and fit the scaling slope.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Probe grid sides (N = side² probes).
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 12, 16, 20])]
        sides: Vec<usize>,
        /// Frame intervals in seconds.
        #[arg(long = "delta-t", value_delimiter = ',', default_values_t = [1e-5, 2e-5])]
        delta_ts: Vec<f64>,
        #[arg(long, default_value_t = Normalization::FixedPitch)]
        normalization: Normalization,
        /// Repeat cells shorter than this many milliseconds.
        #[arg(long, default_value_t = 200)]
        min_cell_ms: u64,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a commented default config.
    MakeConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    format: Option<FrameFormat>,
    /// Worker threads: "auto" or a count. Overrides STEM_DIFFUSION_THREADS and the config.
    #[arg(long)]
    threads: Option<Threads>,
    /// Seed for random scan patterns and validation sampling.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<SimConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::load(path).map_err(|e| e.to_string())?,
            None => SimConfig::default(),
        };
        if let Ok(value) = std::env::var(THREADS_ENV) {
            cfg.threads = value
                .parse()
                .map_err(|e| format!("invalid value for {THREADS_ENV}: {e}"))?;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output.directory = dir.clone();
        }
        if let Some(format) = self.format {
            cfg.output.format = format;
        }
        if let Some(seed) = self.seed {
            if matches!(
                cfg.scan.pattern,
                PatternKind::Random | PatternKind::Subsampled
            ) {
                cfg.scan.seed = Some(seed);
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Simulate(common) => {
            let setup = common.load()?.resolve().map_err(|e| e.to_string())?;
            let report = sim::run_simulation(&setup).map_err(|e| e.to_string())?;
            println!("{}", report.summary_line(&setup));
            println!(
                "wrote {} {} frame(s) to {}",
                report.summary.frames,
                setup.output.format,
                setup.output.directory.display()
            );
            Ok(true)
        }
        Command::Validate {
            common,
            corrupt_q0_sign,
        } => {
            let setup = common.load()?.resolve().map_err(|e| e.to_string())?;
            let hook = Corruption {
                flip_q0_sign: corrupt_q0_sign,
            };
            let report = sim::validate(&setup, common.seed.unwrap_or(0), hook)
                .map_err(|e| format!("oracle error: {e}"))?;
            print!("{}", report.to_text());
            Ok(report.pass())
        }
        Command::Benchmark {
            common,
            sides,
            delta_ts,
            normalization,
            min_cell_ms,
            csv,
        } => {
            let base = common.load()?;
            let options = BenchmarkOptions {
                sides,
                delta_ts,
                normalization,
                min_cell_time: Duration::from_millis(min_cell_ms),
            };
            let result = bench::run_benchmark(&base, &options, |r| {
                eprintln!(
                    "n_probes {:>4} delta_t {:e} wall {:.4} s ({} run(s))",
                    r.n_probes, r.delta_t, r.wall_time, r.repeats
                );
            })
            .map_err(|e| e.to_string())?;
            let written = match &csv {
                Some(path) => File::create(path).and_then(|f| result.write_csv(BufWriter::new(f))),
                None => result.write_csv(io::stdout().lock()),
            };
            written.map_err(|e| format!("cannot write CSV: {e}"))?;
            eprint!("{}", result.summary());
            Ok(true)
        }
        Command::MakeConfig { output } => {
            let text = config::commented_default();
            match output {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| e.to_string())?,
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
