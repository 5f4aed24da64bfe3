//! Command-line front end.
//!
//! Exit codes: 0 success, 1 comparison failure, 2 configuration error,
//! 3 numerical error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::compare::{compare, Report, Tolerances};
use crate::error::{Error, Result};
use crate::experiments::{
    in_vivo_study, null_check, oracle_reference, simulate, with_lattice, VariantTag,
};
use crate::io::{
    arrivals_csv, frequency_csv, lattice_to_toml, paths_csv, preset, read_arrivals, time_csv,
    write_atomic, RunConfig, VariantKind, PRESETS,
};
use crate::oracle::{coalesce, enumerate_paths, merge_tolerance};
use crate::plot::time_response_svg;
use crate::tdtransform::SweepConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPARE_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "HYPERLATTICE_OUT";
const DEFAULT_OUT_ROOT: &str = "hyperlattice-out";

#[derive(Debug, Parser)]
#[command(
    name = "hyperlattice",
    version,
    about = "Pulse propagation in hypercube waveguide lattices"
)]
pub struct Cli {
    /// Worker threads for frequency sweeps (defaults to all cores).
    #[arg(long, global = true, value_name = "K")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the lattice document.
    Generate(Source),
    /// Sweep, transform, pick arrivals and write the scenario bundle.
    Run(Source),
    /// Enumerate reverberation paths and write them as CSV.
    Oracle {
        #[command(flatten)]
        source: Source,
        /// Latest arrival time to enumerate (defaults to the sweep's window).
        #[arg(long, value_name = "T")]
        t_max: Option<f64>,
        /// Smallest path amplitude kept.
        #[arg(long, value_name = "A")]
        floor: Option<f64>,
    },
    /// Match candidate peaks against reference peaks.
    Compare {
        /// Arrival CSV under test (columns time, amplitude).
        candidates: PathBuf,
        /// Reference arrival or oracle path CSV.
        references: PathBuf,
        /// Accepted time difference (defaults to two time steps of the sweep).
        #[arg(long, value_name = "DT")]
        time_tolerance: Option<f64>,
        /// Accepted amplitude difference relative to the reference.
        #[arg(long, value_name = "FRACTION", default_value_t = 0.1)]
        amplitude_tolerance: f64,
        /// Config whose sweep sets the default time tolerance.
        #[arg(long, value_name = "PATH", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct Source {
    /// TOML run config.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario: paper-1d, paper-2d, paper-3d, paper-4d, matched-edge.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Output directory (defaults to a subdirectory of the output root).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
}

impl Source {
    fn resolve(&self) -> Result<(RunConfig, String)> {
        let (mut cfg, name) = match (&self.config, &self.preset) {
            (Some(path), _) => (
                RunConfig::load(path)?,
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".into()),
            ),
            (None, Some(name)) => (preset(name)?, name.clone()),
            (None, None) => {
                return Err(Error::config(
                    "config",
                    format!(
                        "give --config PATH or --preset NAME ({})",
                        PRESETS.join(", ")
                    ),
                ))
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok((cfg, name))
    }

    fn out_dir(&self, cfg: &RunConfig, name: &str) -> PathBuf {
        if let Some(dir) = &self.out {
            return dir.clone();
        }
        if let Some(dir) = &cfg.output.dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUT_ROOT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
        root.join(name)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Parse arguments, run, and return the process exit code. Diagnostics go
/// to stderr, short summaries to stdout.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.jobs {
        Some(0) => Err(Error::config("jobs", "must be at least 1")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli.command))),
        None => dispatch(&cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Generate(source) => {
            let (cfg, name) = source.resolve()?;
            let dir = source.out_dir(&cfg, &name);
            let lattice = cfg.build_lattice()?;
            let path = dir.join("lattice.toml");
            write_atomic(&path, lattice_to_toml(&lattice)?.as_bytes())?;
            println!(
                "{}: {} edges, {} nodes",
                path.display(),
                lattice.edges().len(),
                lattice.nodes().len()
            );
            Ok(EXIT_OK)
        }
        Command::Run(source) => {
            let (cfg, name) = source.resolve()?;
            let dir = source.out_dir(&cfg, &name);
            let summary = run_bundle(&cfg, &dir)?;
            println!(
                "{}: {} arrivals; oracle comparison {}",
                dir.display(),
                summary.arrivals,
                if summary.oracle.passed {
                    "passed"
                } else {
                    "FAILED"
                }
            );
            Ok(EXIT_OK)
        }
        Command::Oracle {
            source,
            t_max,
            floor,
        } => {
            let (mut cfg, name) = source.resolve()?;
            if let Some(t) = t_max {
                cfg.oracle.t_max = Some(*t);
            }
            if let Some(f) = floor {
                cfg.oracle.floor = *f;
            }
            let dir = source.out_dir(&cfg, &name);
            let inputs = cfg.build_inputs()?;
            let inputs = with_lattice(&inputs, cfg.variant_lattice(&inputs.lattice)?);
            let paths = enumerate_paths(
                &inputs.lattice,
                &inputs.drive,
                &inputs.assess,
                cfg.oracle_horizon(),
                cfg.oracle.floor,
            )?;
            let distinct = coalesce(&paths, merge_tolerance(&inputs.sweep)).len();
            let path = dir.join("oracle_paths.csv");
            write_atomic(&path, &paths_csv(&paths)?)?;
            println!(
                "{}: {} paths, {distinct} distinct times",
                path.display(),
                paths.len()
            );
            Ok(EXIT_OK)
        }
        Command::Compare {
            candidates,
            references,
            time_tolerance,
            amplitude_tolerance,
            config,
            preset: preset_name,
        } => {
            let sweep = match (config, preset_name) {
                (Some(p), _) => RunConfig::load(p)?.sweep_config(),
                (None, Some(n)) => preset(n)?.sweep_config(),
                (None, None) => SweepConfig::standard(),
            };
            let mut tol = Tolerances::for_sweep(&sweep);
            if let Some(t) = time_tolerance {
                tol.time = *t;
            }
            tol.amplitude = *amplitude_tolerance;
            if !(tol.time >= 0.0 && tol.amplitude >= 0.0) {
                return Err(Error::config("tolerance", "tolerances must be nonnegative"));
            }
            let report = compare(
                &read_arrivals(candidates)?,
                &read_arrivals(references)?,
                tol,
            );
            print!("{report}");
            Ok(if report.passed() {
                EXIT_OK
            } else {
                EXIT_COMPARE_FAILED
            })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub variant: VariantKind,
    pub arrivals: usize,
    pub oracle: OracleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_vivo: Option<InVivoSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleSummary {
    pub t_max: f64,
    pub floor: f64,
    pub paths: usize,
    pub peaks: usize,
    pub matched: usize,
    pub unmatched_candidates: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InVivoSummary {
    pub level: usize,
    /// Earliest connector arrival, absent when beyond the window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_connector_arrival: Option<f64>,
    pub guard: f64,
    pub max_excess_before: f64,
    pub max_total: f64,
    pub excess_arrivals: usize,
}

fn write_series(dir: &Path, result: &crate::experiments::ScenarioResult) -> Result<()> {
    write_atomic(
        &dir.join("lattice.toml"),
        lattice_to_toml(&result.lattice)?.as_bytes(),
    )?;
    write_atomic(
        &dir.join("frequency.csv"),
        &frequency_csv(&result.frequency)?,
    )?;
    write_atomic(&dir.join("time.csv"), &time_csv(&result.time)?)?;
    write_atomic(&dir.join("arrivals.csv"), &arrivals_csv(&result.arrivals)?)
}

/// Execute a config and write its bundle into `dir`:
/// `manifest.toml` (the resolved config, enough to re-run), `lattice.toml`,
/// `frequency.csv`, `time.csv`, `arrivals.csv`, `oracle_paths.csv`,
/// `oracle_peaks.csv`, `comparison.txt`, `summary.toml`, and `plot.svg` when
/// enabled. The excess variant adds `in_vivo/`, `excess.csv` and
/// `excess_arrivals.csv`.
pub fn run_bundle(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let base = cfg.build_inputs()?;
    let threshold = cfg.sweep.threshold;
    let inputs = with_lattice(&base, cfg.variant_lattice(&base.lattice)?);

    let (main, in_vivo) = match cfg.variant.kind {
        VariantKind::Excess => {
            let study = in_vivo_study(&inputs, threshold)?;
            let check = null_check(&study, &inputs.sweep);
            let excess_dir = dir.join("in_vivo");
            write_series(&excess_dir, &study.in_vivo)?;
            write_atomic(&dir.join("excess.csv"), &time_csv(&study.excess.time)?)?;
            write_atomic(
                &dir.join("excess_arrivals.csv"),
                &arrivals_csv(&study.excess.arrivals)?,
            )?;
            let summary = InVivoSummary {
                level: study.level,
                first_connector_arrival: study.first_connector.time(),
                guard: check.guard,
                max_excess_before: check.max_excess,
                max_total: check.max_total,
                excess_arrivals: study.excess.arrivals.len(),
            };
            (study.total, Some(summary))
        }
        kind => {
            let tag = match kind {
                VariantKind::InVivo => VariantTag::InVivo,
                VariantKind::InVitro => VariantTag::InVitro,
                _ => VariantTag::Total,
            };
            (simulate(&inputs, tag, threshold)?, None)
        }
    };
    write_series(dir, &main)?;

    // reference peaks are picked at half the threshold so that candidates
    // sitting right at the threshold still find a partner
    let reference = oracle_reference(
        &inputs,
        cfg.oracle_horizon(),
        cfg.oracle.floor,
        0.5 * threshold,
    )?;
    write_atomic(&dir.join("oracle_paths.csv"), &paths_csv(&reference.paths)?)?;
    write_atomic(
        &dir.join("oracle_peaks.csv"),
        &arrivals_csv(&reference.arrivals)?,
    )?;
    let report: Report = compare(
        &main.arrivals,
        &reference.arrivals,
        Tolerances::for_sweep(&inputs.sweep),
    );
    write_atomic(&dir.join("comparison.txt"), report.to_string().as_bytes())?;

    if cfg.output.plot {
        let title = format!(
            "N = {} seed {} ({})",
            inputs.lattice.dimension(),
            inputs.lattice.seed(),
            main.variant.name()
        );
        let svg = time_response_svg(
            &main.time,
            &main.arrivals,
            inputs.sweep.time_window(),
            &title,
        );
        write_atomic(&dir.join("plot.svg"), svg.as_bytes())?;
    }

    let summary = RunSummary {
        variant: cfg.variant.kind,
        arrivals: main.arrivals.len(),
        oracle: OracleSummary {
            t_max: cfg.oracle_horizon(),
            floor: cfg.oracle.floor,
            paths: reference.paths.len(),
            peaks: reference.arrivals.len(),
            matched: report.matched.len(),
            unmatched_candidates: report.unmatched_candidates.len(),
            passed: report.passed(),
        },
        in_vivo,
    };
    let summary_text = toml::to_string(&summary)
        .map_err(|e| Error::Usage(format!("cannot serialize summary: {e}")))?;
    write_atomic(&dir.join("summary.toml"), summary_text.as_bytes())?;
    write_atomic(&dir.join("manifest.toml"), cfg.to_toml()?.as_bytes())?;
    Ok(summary)
}
