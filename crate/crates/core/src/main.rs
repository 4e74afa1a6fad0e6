use binmat::gf2::{read_matrix, write_matrix};
use binmat::harness::{
    emit_report, load_profile, named_target, profile_names, run_experiment, ExperimentKind,
    ExperimentSpec, ReportFormat,
};
use binmat::hypergraph::{core_prediction, Hypergraph};
use binmat::pipeline::{run_pipeline, PipelineConfig};
use binmat::sampler::{sample_matrix, ModelParams};
use clap::{Parser, Subcommand};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "binmat", about = "Random GF(2) matrix experiments and minor search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named Monte Carlo experiment and report pass/fail verdicts
    Experiment {
        /// Preset from the embedded profile table
        #[arg(long)]
        profile: Option<String>,
        /// Experiment kind (overrides the profile's kind)
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
        /// List available profiles and exit
        #[arg(long)]
        list: bool,
    },
    /// Sample a random n x m matrix with k ones per column
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peel the d-core of the column hypergraph and compare to the prediction
    Core {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the minor-construction procedure against a target representation
    Pipeline {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        /// Target: a matrix file path, or the names "fano" / "single"
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 2)]
        support_multiplier: usize,
        #[arg(long, default_value_t = 0.5)]
        zeta: f64,
        #[arg(long, default_value_t = 1000)]
        omega: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write trace + certificate JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(out: Option<&PathBuf>, body: &str) -> std::io::Result<()> {
    match out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(body.as_bytes())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run() -> Result<bool, Box<dyn std::error::Error>> {
    match Cli::parse().command {
        Command::Experiment {
            profile,
            kind,
            trials,
            seed,
            out,
            format,
            list,
        } => {
            if list {
                for name in profile_names() {
                    println!("{name}");
                }
                return Ok(true);
            }
            let profile = profile.ok_or("--profile is required (or use --list)")?;
            let prof = load_profile(&profile)?;
            let kind = ExperimentKind::parse(kind.as_deref().unwrap_or(&prof.kind))?;
            let spec = ExperimentSpec {
                kind,
                trials: trials.unwrap_or(prof.trials),
                seed: seed.unwrap_or(prof.seed),
                params: prof.params,
            };
            let report = run_experiment(&spec)?;
            let body = emit_report(&report, ReportFormat::parse(&format)?);
            write_out(out.as_ref(), &body)?;
            for v in &report.verdicts {
                eprintln!(
                    "{} {}: {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.name,
                    v.detail
                );
            }
            Ok(report.all_pass())
        }
        Command::Sample { n, m, k, seed, out } => {
            let a = sample_matrix(&ModelParams { n, m, k, seed });
            let mut buf = Vec::new();
            write_matrix(&mut buf, &a)?;
            write_out(out.as_ref(), std::str::from_utf8(&buf)?)?;
            Ok(true)
        }
        Command::Core { n, m, k, d, seed } => {
            let a = sample_matrix(&ModelParams { n, m, k, seed });
            let h = Hypergraph::from_columns(&a, 0..m)?;
            let core = h.d_core(d);
            let pred = core_prediction(k as f64 * m as f64 / n as f64, k, d);
            println!(
                "core: {} vertices, {} edges",
                core.vertices.len(),
                core.edge_indices.len()
            );
            println!(
                "predicted: {:.1} vertices, {:.1} edges",
                pred.vertex_fraction * n as f64,
                pred.edge_fraction * m as f64
            );
            Ok(true)
        }
        Command::Pipeline {
            n,
            m,
            k,
            target,
            support_multiplier,
            zeta,
            omega,
            seed,
            out,
        } => {
            let t = match named_target(&target) {
                Ok(t) => t,
                Err(_) => {
                    let mut r = BufReader::new(File::open(&target)?);
                    read_matrix(&mut r)?
                }
            };
            let a = sample_matrix(&ModelParams { n, m, k, seed });
            let cfg = PipelineConfig::new(k, support_multiplier, zeta, omega);
            let (trace, result) = run_pipeline(&a, &t, &cfg);
            #[derive(Serialize)]
            struct Output<T: Serialize, C: Serialize, E: Serialize> {
                trace: T,
                certificate: Option<C>,
                failure: Option<E>,
            }
            let (ok, certificate, failure) = match result {
                Ok(cert) => (true, Some(cert), None),
                Err(e) => (false, None, Some(e)),
            };
            let body = format!(
                "{}\n",
                serde_json::to_string_pretty(&Output {
                    trace,
                    certificate,
                    failure,
                })?
            );
            write_out(out.as_ref(), &body)?;
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
