//! Command-line surface: load JSON system descriptions, run simulations,
//! characteristic propagations, quantizations and the verification suite,
//! and emit deterministic CSV/JSON artifacts (floats as `%.12e`).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::acceptance;
use crate::dynamics::{hertz_reduce, integrate, IntegrateOptions};
use crate::error::{Error, Result};
use crate::hamjac::{propagate, seed_conormal, wavefront, InitialManifold};
use crate::operator::DiffOperator;
use crate::quantize::{dequantize, quantize, SymTensorField};
use crate::schrodgrid::phase_report;
use crate::system::LoadedSystem;

#[derive(Parser)]
#[command(name = "geomech", version, about = "Geometric mechanics toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system's evolution field and export the trajectory CSV.
    Simulate {
        system: PathBuf,
        /// Energy level used for the seeding convention.
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        span: f64,
        /// Fixed step size; adaptive stepping when omitted.
        #[arg(long)]
        step: Option<f64>,
        /// Relative tolerance of the adaptive integrator.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "traj.csv")]
        out: PathBuf,
    },
    /// Propagate a characteristic bundle from a point source and export
    /// per-seed trajectories plus wavefronts.
    Hj {
        system: PathBuf,
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: f64,
        #[arg(long, default_value_t = 16)]
        seeds: usize,
        #[arg(long, default_value_t = 2.0)]
        span: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Action values at which fronts are extracted (defaults to the
        /// quartiles of the common sampled range).
        #[arg(long, value_delimiter = ',')]
        fronts: Vec<f64>,
        #[arg(long, default_value = "hj_out")]
        out: PathBuf,
    },
    /// Quantize a named tensor of the system and print the operator text.
    Quantize {
        system: PathBuf,
        /// `metric` (contravariant metric tensor) or `potential`.
        #[arg(long, default_value = "metric")]
        tensor: String,
        #[arg(long, default_value = "op.txt")]
        out: PathBuf,
    },
    /// Dequantize an operator text file against the system's connection.
    Dequantize {
        system: PathBuf,
        #[arg(long)]
        op: PathBuf,
        #[arg(long, default_value = "tensor.txt")]
        out: PathBuf,
    },
    /// Hertz-reduce an extended system and write the reduced description.
    Reduce {
        system: PathBuf,
        #[arg(long, default_value = "reduced.json")]
        out: PathBuf,
    },
    /// Classical cycle clocks and the quantum phase advance at an energy
    /// level.
    PhaseReport {
        system: PathBuf,
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: f64,
        #[arg(long, default_value_t = 100.0)]
        span: f64,
        #[arg(long, default_value = "phase.json")]
        out: PathBuf,
    },
    /// Run verification criteria and print one PASS/FAIL line per criterion.
    Verify {
        /// Run the whole suite.
        #[arg(long)]
        all: bool,
        /// Run a single criterion by number (1-11).
        #[arg(long)]
        criterion: Option<usize>,
    },
}

/// `%.12e` float formatting for JSON artifacts.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.12e}")
    }
}

fn write_json_sci<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut ser = serde_json::Serializer::with_formatter(io::BufWriter::new(file), SciFormatter);
    value.serialize(&mut ser)?;
    let mut w = ser.into_inner();
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct WavefrontOut {
    energy: f64,
    action_value: f64,
    points: Vec<Vec<f64>>,
    seed_params: Vec<f64>,
}

#[derive(Serialize)]
struct BundleIndexOut {
    energy: f64,
    seed_params: Vec<f64>,
    files: Vec<String>,
    failures: Vec<BundleFailureOut>,
}

#[derive(Serialize)]
struct BundleFailureOut {
    seed_param: f64,
    error: String,
}

#[derive(Serialize)]
struct PhaseReportOut {
    energy: f64,
    t_classical: f64,
    tau_cycle: f64,
    t0_cycle: f64,
    quantum_phase_mod_2pi: f64,
}

pub fn run() -> i32 {
    match try_run(Cli::parse()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn try_run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            system,
            energy,
            span,
            step,
            tol,
            out,
        } => {
            let loaded = LoadedSystem::from_path(&system)?;
            let energy = energy.or(loaded.energy);
            let seed = loaded.default_seed(energy)?;
            let opts = match step {
                Some(h) => IntegrateOptions::fixed(span, h),
                None => IntegrateOptions::adaptive(span, tol),
            };
            let field = loaded.sys.newton_field()?;
            let traj = integrate(&loaded.sys, &field, &seed, &opts)?;
            let file = fs::File::create(&out)?;
            traj.write_csv(io::BufWriter::new(file))?;
            println!("wrote {} samples to {}", traj.len(), out.display());
            Ok(())
        }
        Command::Hj {
            system,
            energy,
            seeds,
            span,
            tol,
            fronts,
            out,
        } => {
            let loaded = LoadedSystem::from_path(&system)?;
            let source = loaded.desc.sample_points.first().cloned().ok_or_else(|| {
                Error::Precondition("hj needs sample_points[0] as the source".into())
            })?;
            let seed_states =
                seed_conormal(&InitialManifold::Point(source), &loaded.sys, energy, seeds)?;
            let opts = IntegrateOptions::adaptive(span, tol);
            let bundle = propagate(&seed_states, &loaded.sys, span, Some(opts))?;
            fs::create_dir_all(&out)?;
            let mut files = Vec::new();
            let mut params = Vec::new();
            for (i, member) in bundle.members.iter().enumerate() {
                let name = format!("seed_{i:03}.csv");
                let file = fs::File::create(out.join(&name))?;
                member.traj.write_csv(io::BufWriter::new(file))?;
                files.push(name);
                params.push(member.param);
            }
            let failures = bundle
                .failures
                .iter()
                .map(|(p, e)| BundleFailureOut {
                    seed_param: *p,
                    error: e.to_string(),
                })
                .collect();
            write_json_sci(
                &BundleIndexOut {
                    energy: bundle.energy,
                    seed_params: params,
                    files,
                    failures,
                },
                &out.join("index.json"),
            )?;
            let front_values = if fronts.is_empty() {
                let min_last = bundle
                    .members
                    .iter()
                    .map(|m| m.traj.last().action)
                    .fold(f64::INFINITY, f64::min);
                vec![0.25 * min_last, 0.5 * min_last, 0.75 * min_last]
            } else {
                fronts
            };
            let mut front_records = Vec::new();
            for s in front_values {
                let f = wavefront(&bundle, s)?;
                front_records.push(WavefrontOut {
                    energy: f.energy,
                    action_value: f.action_value,
                    points: f.points,
                    seed_params: f.seed_params,
                });
            }
            write_json_sci(&front_records, &out.join("wavefronts.json"))?;
            println!(
                "wrote {} characteristics and {} fronts to {}",
                bundle.members.len(),
                front_records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Quantize {
            system,
            tensor,
            out,
        } => {
            let loaded = LoadedSystem::from_path(&system)?;
            let names = loaded.sys.names().to_vec();
            let phi = match tensor.as_str() {
                "metric" => SymTensorField::metric_contravariant(loaded.sys.metric())?,
                "potential" => {
                    let u = loaded
                        .sys
                        .potential()
                        .ok_or_else(|| Error::Precondition("system has no potential".into()))?;
                    SymTensorField::scalar(loaded.sys.dim(), u.clone())
                }
                other => {
                    return Err(Error::Precondition(format!(
                        "unknown tensor `{other}` (expected `metric` or `potential`)"
                    )))
                }
            };
            let op = quantize(&phi, loaded.sys.metric(), loaded.hbar)?;
            fs::write(&out, op.pretty(&names))?;
            println!("wrote operator to {}", out.display());
            Ok(())
        }
        Command::Dequantize { system, op, out } => {
            let loaded = LoadedSystem::from_path(&system)?;
            let names = loaded.sys.names().to_vec();
            let text = fs::read_to_string(&op)?;
            let operator = DiffOperator::parse_pretty(&text, &names, loaded.hbar)?;
            let tensor = dequantize(&operator, loaded.sys.metric(), loaded.hbar)?;
            fs::write(&out, tensor.pretty(&names))?;
            println!("wrote tensor to {}", out.display());
            Ok(())
        }
        Command::Reduce { system, out } => {
            let loaded = LoadedSystem::from_path(&system)?;
            let time_index = loaded
                .time_index
                .ok_or_else(|| Error::Precondition("reduce needs a time_coordinate".into()))?;
            let p0 = loaded
                .p0
                .ok_or_else(|| Error::Precondition("reduce needs the momentum level P0".into()))?;
            let reduced = hertz_reduce(&loaded.sys, time_index, p0, &loaded.desc.sample_points)?;
            write_json_sci(&loaded.reduced_description(&reduced), &out)?;
            println!("wrote reduced system to {}", out.display());
            Ok(())
        }
        Command::PhaseReport {
            system,
            energy,
            span,
            out,
        } => {
            let loaded = LoadedSystem::from_path(&system)?;
            let seed = loaded.default_seed(Some(energy))?;
            let report = phase_report(&loaded.sys, loaded.hbar, energy, &seed, span)?;
            write_json_sci(
                &PhaseReportOut {
                    energy: report.energy,
                    t_classical: report.t_classical,
                    tau_cycle: report.tau_cycle,
                    t0_cycle: report.t0_cycle,
                    quantum_phase_mod_2pi: report.quantum_phase_mod_2pi,
                },
                &out,
            )?;
            println!(
                "T = {:.9}, tau = {:.9}, t0 = {:.9}, phase mod 2pi = {:.9}",
                report.t_classical, report.tau_cycle, report.t0_cycle, report.quantum_phase_mod_2pi
            );
            Ok(())
        }
        Command::Verify { all, criterion } => {
            let outcomes = match (all, criterion) {
                (true, None) => acceptance::run_all(),
                (false, Some(id)) => vec![acceptance::run_criterion(id).ok_or_else(|| {
                    Error::Precondition(format!("no criterion {id}; valid ids are 1-11"))
                })?],
                (true, Some(_)) => {
                    return Err(Error::Precondition(
                        "--all and --criterion are mutually exclusive".into(),
                    ))
                }
                (false, None) => {
                    return Err(Error::Precondition("pass --all or --criterion <n>".into()))
                }
            };
            let mut first_failure: Option<&'static str> = None;
            for o in &outcomes {
                if o.passed {
                    println!("PASS {:02} {}: {}", o.id, o.name, o.detail);
                } else {
                    println!("FAIL {:02} {}: {}", o.id, o.name, o.detail);
                    first_failure.get_or_insert(o.name);
                }
            }
            match first_failure {
                Some(name) => Err(Error::Precondition(format!("criterion `{name}` failed"))),
                None => Ok(()),
            }
        }
    }
}
