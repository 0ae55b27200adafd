//! `adcs`: run scenarios, analyze telemetry, calibrate, inspect network files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adcs::attmath::{InertiaDiag, Quaternion, Vec3};
use adcs::calib::{estimate_dipole_bias, mt_step_response_check, CalibOptions, CalibResult, CalibWarning, RateLog};
use adcs::config::RunConfig;
use adcs::control::{
    decode_network_file, encode_network, encode_network_pair, orthogonal_network, random_network, MlpNetwork,
    MT_POLICY_DIMS, RW_POLICY_DIMS,
};
use adcs::simloop::{run_episode, run_maneuver_sequence, EpisodeResult};
use adcs::telemetry::{
    analyze_maneuvers, command_times_from_column, command_times_from_resets, euler_error_csv, format_report,
    ingest_path, report_csv, AnalysisParams, ColumnMapping, StdKind,
};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const EXIT_ERROR: u8 = 1;
const EXIT_TRIPPED: u8 = 2;
const EXIT_WARNING: u8 = 3;

#[derive(Parser)]
#[command(name = "adcs", version, about = "CubeSat attitude-control toolkit", allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a configured scenario for one or more seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds; defaults to the config's scenario seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Exit nonzero if any episode trips the safety cage.
        #[arg(long)]
        strict: bool,
        /// Omit wall-clock timestamps from the summary.
        #[arg(long)]
        deterministic: bool,
    },
    /// Steady-state analysis of telemetry CSV files.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Goal quaternion w,x,y,z.
        #[arg(long, value_delimiter = ',', num_args = 1, default_value = "1,0,0,0")]
        goal: Vec<f64>,
        /// Error threshold, deg.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Hold time, s.
        #[arg(long, default_value_t = 15.0)]
        hold: f64,
        #[arg(long, value_enum, default_value_t = StdArg::Population)]
        std: StdArg,
        /// Column mapping TOML.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Detect commands from attitude jumps larger than this (deg) when no maneuver column exists.
        #[arg(long, default_value_t = 5.0)]
        reset_jump: f64,
        /// Also write the report and Euler error traces as CSV into this directory.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Print header metadata of a network file.
    Netinfo { file: PathBuf },
    /// Write a network file with random weights.
    Netgen {
        #[arg(long)]
        out: PathBuf,
        /// Layer widths; defaults to the reaction-wheel policy shape.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        /// Write a reaction-wheel plus magnetorquer pair.
        #[arg(long)]
        pair: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Orthogonal init with this output-layer gain instead of Gaussian weights.
        #[arg(long)]
        orthogonal: Option<f64>,
    },
    /// Estimate residual dipole and gyro bias from a telemetry log.
    Calibrate {
        file: PathBuf,
        /// Diagonal inertia Ixx,Iyy,Izz in kg·m².
        #[arg(long, value_delimiter = ',', required = true)]
        inertia: Vec<f64>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Log recorded after activating one magnetorquer axis.
        #[arg(long)]
        mt_step: Option<PathBuf>,
        /// Activated axis for --mt-step: x, y or z.
        #[arg(long, default_value = "x")]
        axis: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StdArg {
    Population,
    Sample,
}

/// Failure with a machine-parsable category.
struct Failure {
    kind: &'static str,
    msg: String,
}

fn fail(kind: &'static str, msg: impl ToString) -> Failure {
    Failure {
        kind,
        msg: msg.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run {
            config,
            seeds,
            out,
            strict,
            deterministic,
        } => cmd_run(&config, &seeds, &out, strict, deterministic),
        Cmd::Analyze {
            files,
            goal,
            threshold,
            hold,
            std,
            mapping,
            reset_jump,
            csv_out,
        } => cmd_analyze(&files, &goal, threshold, hold, std, mapping.as_deref(), reset_jump, csv_out.as_deref()),
        Cmd::Netinfo { file } => cmd_netinfo(&file),
        Cmd::Netgen {
            out,
            dims,
            pair,
            seed,
            orthogonal,
        } => cmd_netgen(&out, &dims, pair, seed, orthogonal),
        Cmd::Calibrate {
            file,
            inertia,
            mapping,
            mt_step,
            axis,
        } => cmd_calibrate(&file, &inertia, mapping.as_deref(), mt_step.as_deref(), &axis),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.msg.split_whitespace().collect::<Vec<_>>().join(" "));
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn cmd_run(config: &Path, seeds: &[u64], out: &Path, strict: bool, deterministic: bool) -> Result<u8, Failure> {
    let cfg = RunConfig::from_path(config).map_err(|e| fail("config", format!("{}: {e}", config.display())))?;
    let seeds = if seeds.is_empty() {
        vec![cfg.scenario.seed]
    } else {
        seeds.to_vec()
    };
    if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
        return Err(fail("args", "seeds must be unique"));
    }
    fs::create_dir_all(out).map_err(|e| fail("io", format!("{}: {e}", out.display())))?;
    let sequence = cfg.sequence().map_err(|e| fail("config", e))?;

    let results: Vec<Result<EpisodeResult, Failure>> = seeds
        .par_iter()
        .map(|&seed| {
            let ep = cfg.episode_config(seed).map_err(|e| fail("config", e))?;
            match &sequence {
                Some(seq) => run_maneuver_sequence(&ep, seq),
                None => run_episode(&ep),
            }
            .map_err(|e| fail("sim", format!("seed {seed}: {e}")))
        })
        .collect();

    let mut summary = String::new();
    if !deterministic {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(summary, "generated_unix = {now}");
    }
    let _ = writeln!(summary, "config = {}", config.display());
    let _ = writeln!(summary, "episodes = {}", seeds.len());
    let mut any_trip = false;
    for (seed, res) in seeds.iter().zip(results) {
        let r = res?;
        let stem = format!("seed{seed}");
        let goal = r.records.first().map_or(Quaternion::IDENTITY, |m| m.goal);
        write(&out.join(format!("{stem}_telemetry.csv")), r.telemetry.to_csv_string())?;
        write(&out.join(format!("{stem}_reward.csv")), r.reward_csv())?;
        write(&out.join(format!("{stem}_report.txt")), format_report(&r.telemetry, &r.records))?;
        write(&out.join(format!("{stem}_report.csv")), report_csv(&r.telemetry, &r.records))?;
        write(&out.join(format!("{stem}_euler.csv")), euler_error_csv(&r.telemetry, goal))?;

        let attained: Vec<String> = r
            .records
            .iter()
            .filter(|m| m.attained())
            .map(|m| m.index.to_string())
            .collect();
        let total: f64 = r.rewards.iter().sum();
        let _ = writeln!(summary, "[seed{seed}]");
        let _ = writeln!(summary, "steps = {}", r.telemetry.rows.len());
        let _ = writeln!(summary, "total_reward = {total}");
        let _ = writeln!(summary, "maneuvers = {}", r.records.len());
        let _ = writeln!(summary, "attained = [{}]", attained.join(", "));
        match r.verdicts.iter().find(|v| v.is_tripped()) {
            Some(v) => {
                any_trip = true;
                let _ = writeln!(
                    summary,
                    "cage = tripped {} axis {} at {} s",
                    v.rule.map_or("?".into(), |r| r.to_string()),
                    v.axis.map_or("?".into(), |a| a.to_string()),
                    v.timestamp.unwrap_or(f64::NAN)
                );
            }
            None => {
                let _ = writeln!(summary, "cage = nominal");
            }
        }
        println!(
            "seed {seed}: {} steps, maneuvers attained [{}] of {}, cage {}",
            r.telemetry.rows.len(),
            attained.join(", "),
            r.records.len(),
            if r.tripped() { "TRIPPED" } else { "nominal" }
        );
    }
    write(&out.join("summary.txt"), summary)?;
    Ok(if strict && any_trip { EXIT_TRIPPED } else { 0 })
}

fn quat_arg(v: &[f64], name: &str) -> Result<Quaternion, Failure> {
    if v.len() != 4 {
        return Err(fail("args", format!("{name} needs 4 components, got {}", v.len())));
    }
    let q = Quaternion::new(v[0], v[1], v[2], v[3]);
    if !q.is_unit(1e-3) {
        return Err(fail("args", format!("{name} is not a unit quaternion")));
    }
    Ok(q.normalized())
}

fn load_mapping(path: Option<&Path>) -> Result<ColumnMapping, Failure> {
    match path {
        Some(p) => ColumnMapping::from_path(p).map_err(|e| fail("mapping", format!("{}: {e}", p.display()))),
        None => Ok(ColumnMapping::default()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    files: &[PathBuf],
    goal: &[f64],
    threshold: f64,
    hold: f64,
    std: StdArg,
    mapping: Option<&Path>,
    reset_jump: f64,
    csv_out: Option<&Path>,
) -> Result<u8, Failure> {
    let goal = quat_arg(goal, "--goal")?;
    if !(threshold > 0.0 && hold >= 0.0) {
        return Err(fail("args", "threshold must be positive and hold non-negative"));
    }
    let mapping = load_mapping(mapping)?;
    let params = AnalysisParams {
        threshold_deg: threshold,
        hold_s: hold,
        std_kind: match std {
            StdArg::Population => StdKind::Population,
            StdArg::Sample => StdKind::Sample,
        },
    };
    if let Some(dir) = csv_out {
        fs::create_dir_all(dir).map_err(|e| fail("io", format!("{}: {e}", dir.display())))?;
    }
    for path in files {
        let series = ingest_path(path, &mapping).map_err(|e| fail("ingest", format!("{}: {e}", path.display())))?;
        let mut cmds = command_times_from_column(&series);
        if cmds.is_empty() {
            cmds = command_times_from_resets(&series, reset_jump);
        }
        let records = analyze_maneuvers(&series, goal, &cmds, &params);
        println!("== {}", path.display());
        print!("{}", format_report(&series, &records));
        if let Some(dir) = csv_out {
            let stem = path.file_stem().map_or("log".into(), |s| s.to_string_lossy().into_owned());
            write(&dir.join(format!("{stem}_report.csv")), report_csv(&series, &records))?;
            write(&dir.join(format!("{stem}_euler.csv")), euler_error_csv(&series, goal))?;
        }
    }
    Ok(0)
}

fn describe(net: &MlpNetwork) -> String {
    let mut s = String::new();
    let dims: Vec<String> = std::iter::once(net.in_dim())
        .chain(net.layers().iter().map(|l| l.out_dim))
        .map(|d| d.to_string())
        .collect();
    let _ = writeln!(s, "dims: {}", dims.join("->"));
    let acts: Vec<String> = net.layers().iter().map(|l| l.activation.id().to_string()).collect();
    let _ = writeln!(s, "activations: {}", acts.join(","));
    let _ = writeln!(s, "params: {}", group_thousands(net.param_count()));
    let _ = writeln!(s, "bytes: {}", group_thousands(net.encoded_len()));
    s
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn cmd_netinfo(file: &Path) -> Result<u8, Failure> {
    let bytes = fs::read(file).map_err(|e| fail("io", format!("{}: {e}", file.display())))?;
    let nets = decode_network_file(&bytes).map_err(|e| fail("decode", format!("{}: {e}", file.display())))?;
    println!("file: {}", file.display());
    println!("networks: {}", nets.len());
    for (i, n) in nets.iter().enumerate() {
        println!("[network {i}]");
        print!("{}", describe(n));
    }
    let total: usize = nets.iter().map(MlpNetwork::param_count).sum();
    println!("total params: {}", group_thousands(total));
    println!("total bytes: {}", group_thousands(bytes.len()));
    Ok(0)
}

fn cmd_netgen(out: &Path, dims: &[usize], pair: bool, seed: u64, orthogonal: Option<f64>) -> Result<u8, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |d: &[usize]| -> Result<MlpNetwork, Failure> {
        if d.len() < 2 || d.contains(&0) {
            return Err(fail("args", "dims needs at least two positive widths"));
        }
        Ok(match orthogonal {
            Some(gain) => orthogonal_network(d, 2f64.sqrt(), gain, &mut rng),
            None => random_network(d, 0.1, &mut rng),
        })
    };
    let bytes = if pair {
        let rw = make(&RW_POLICY_DIMS)?;
        let mt = make(&MT_POLICY_DIMS)?;
        encode_network_pair(&rw, &mt)
    } else if dims.is_empty() {
        encode_network(&make(&RW_POLICY_DIMS)?)
    } else {
        encode_network(&make(dims)?)
    };
    write(out, &bytes)?;
    println!("wrote {} bytes to {}", bytes.len(), out.display());
    Ok(0)
}

fn print_calib(label: &str, r: &CalibResult) {
    println!("[{label}]");
    println!("mu_Am2 = [{:.6}, {:.6}, {:.6}]", r.mu.x, r.mu.y, r.mu.z);
    println!("bias_deg_s = [{:.6}, {:.6}, {:.6}]", r.bias.x, r.bias.y, r.bias.z);
    println!("residual = {:.6e}", r.final_residual);
    println!("iterations = {}", r.iterations);
}

fn warning_text(w: &CalibWarning) -> &'static str {
    match w {
        CalibWarning::DipoleUnobservable => "dipole-unobservable: field direction barely varies",
        CalibWarning::LowRateExcitation => "low-rate-excitation: body rates too steady to separate bias",
        CalibWarning::NotConverged => "not-converged: iteration limit reached",
    }
}

fn rate_log(path: &Path, mapping: &ColumnMapping) -> Result<RateLog, Failure> {
    let series = ingest_path(path, mapping).map_err(|e| fail("ingest", format!("{}: {e}", path.display())))?;
    RateLog::from_series(&series).map_err(|e| fail("calib", format!("{}: {e}", path.display())))
}

fn cmd_calibrate(
    file: &Path,
    inertia: &[f64],
    mapping: Option<&Path>,
    mt_step: Option<&Path>,
    axis: &str,
) -> Result<u8, Failure> {
    let &[a, b, c] = inertia else {
        return Err(fail("args", "--inertia needs 3 components"));
    };
    let inertia = InertiaDiag::new(a, b, c).map_err(|e| fail("args", format!("--inertia: {e}")))?;
    let mapping = load_mapping(mapping)?;
    let opts = CalibOptions::default();
    let before = rate_log(file, &mapping)?;
    let warnings = match mt_step {
        None => {
            let r = estimate_dipole_bias(&before, &inertia, &opts).map_err(|e| fail("calib", e))?;
            print_calib("calibration", &r);
            r.warnings
        }
        Some(after_path) => {
            let axis = match axis {
                "x" | "0" => 0,
                "y" | "1" => 1,
                "z" | "2" => 2,
                other => return Err(fail("args", format!("--axis: unknown axis {other}"))),
            };
            let after = rate_log(after_path, &mapping)?;
            let r = mt_step_response_check(&before, &after, &inertia, axis, &opts).map_err(|e| fail("calib", e))?;
            print_calib("before", &r.before);
            print_calib("after", &r.after);
            let d: Vec3 = r.delta_vec;
            println!("[mt-step]");
            println!("axis = {axis}");
            println!("{:<6}{:>12}", "Axis", "dMu_Am2");
            for (name, v) in [("x", d.x), ("y", d.y), ("z", d.z)] {
                println!("{name:<6}{v:>12.6}");
            }
            println!("delta_on_axis = {:.6}", r.delta);
            r.warnings
        }
    };
    for w in &warnings {
        eprintln!("warning[calib]: {}", warning_text(w));
    }
    Ok(if warnings.is_empty() { 0 } else { EXIT_WARNING })
}
