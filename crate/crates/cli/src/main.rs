//! `chainctl`: spectra, pulse compilation, schedule execution, and the
//! scripted experiments behind one command-line front end. Every table is
//! CSV with a settings digest line; `--json` mirrors the same data as JSON.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use chainctl::chain::{default_gap_tol, diagonalize, engineered_couplings, gap_report, ChainSpec};
use chainctl::compiler::{compile, frame_corrected, run_schedule_observed};
use chainctl::dynamics::{PropagatorConfig, SimState, StateBasis, Tier};
use chainctl::error::Error;
use chainctl::experiments::{
    bound_check, fig1_point, fit_scaling, oracle_check, robustness_amplitude,
    robustness_detuning, SweepPoint,
};
use chainctl::io::{
    parse_circuit, parse_config, parse_numeric_csv, parse_schedule, render_csv, render_snapshots,
    render_svg, write_schedule, write_text,
};
use chainctl::oracle::LogicalEncoding;
use chainctl::C64;

#[derive(Parser)]
#[command(name = "chainctl", about = "XY spin-chain control simulator", version)]
struct Cli {
    /// Mirror outputs as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues, overlaps and pair labels of a chain config.
    Spectrum(SpectrumArgs),
    /// Print engineered coupling values.
    Couplings(CouplingsArgs),
    /// Run a compiled schedule file against a config.
    Evolve(EvolveArgs),
    /// Compile a circuit file into a pulse schedule.
    Compile(CompileArgs),
    /// Swap-gate fidelity sweep over drive amplitudes.
    Fig1(Fig1Args),
    /// Fit a power law to a sweep CSV.
    Fit(FitArgs),
    /// Cross-tier consistency check on a random chain.
    OracleCheck(OracleCheckArgs),
    /// Amplitude-error and detuning robustness tables.
    Robustness(RobustnessArgs),
    /// Off-resonant denominator bound table.
    BoundCheck(BoundCheckArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CouplingsArgs {
    /// Number of sites for the engineered scheme.
    #[arg(long)]
    engineered: usize,
}

#[derive(Args)]
struct EvolveArgs {
    config: PathBuf,
    schedule: PathBuf,
    /// Initial state: vacuum | logical:BITS | mode:K | site:K.
    #[arg(long, default_value = "vacuum")]
    initial: String,
    /// Tier: single | sector:K | full.
    #[arg(long, default_value = "full")]
    tier: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write per-step state snapshots (time, basis index, re, im).
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Write the final state table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Apply the declared frame corrections before reporting.
    #[arg(long)]
    frame_corrected: bool,
}

#[derive(Args)]
struct CompileArgs {
    config: PathBuf,
    circuit: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    b: f64,
    #[arg(long, default_value_t = 0.02)]
    bprime: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Fig1Args {
    #[arg(long, default_value_t = 101)]
    n: usize,
    /// Comma-separated drive amplitudes.
    #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
    bgrid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an SVG of the fidelity traces.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Axis the power law is fitted against (selects the x column).
    #[arg(long, default_value = "B")]
    axis: String,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    x_col: Option<String>,
    #[arg(long, default_value = "final_infidelity")]
    y_col: String,
}

#[derive(Args)]
struct OracleCheckArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long, default_value = "0.01,0.02")]
    amplitude_errors: String,
    #[arg(long, default_value = "0.0,0.001,0.003")]
    detunings: String,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    b: f64,
    /// Output prefix; writes <out>_amplitude.csv and <out>_detuning.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundCheckArgs {
    #[arg(long, default_value = "5,21,101")]
    ngrid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse_error",
        Error::InvalidSize { .. } => "invalid_size",
        Error::ResourceGuard { .. } => "resource_guard",
        Error::FitRejected(_) => "fit_rejected",
        Error::Io(_) => "io_error",
        Error::TierIncompatible { .. } | Error::TierMismatch { .. } => "tier_error",
        _ => "invalid_input",
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = std::env::var("CHAINCTL_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let json = cli.json;
    let result = match cli.command {
        Command::Spectrum(a) => cmd_spectrum(a, json),
        Command::Couplings(a) => cmd_couplings(a, json),
        Command::Evolve(a) => cmd_evolve(a, json),
        Command::Compile(a) => cmd_compile(a, json),
        Command::Fig1(a) => cmd_fig1(a, json),
        Command::Fit(a) => cmd_fit(a, json),
        Command::OracleCheck(a) => cmd_oracle_check(a, json),
        Command::Robustness(a) => cmd_robustness(a, json),
        Command::BoundCheck(a) => cmd_bound_check(a, json),
    };
    if let Err(e) = result {
        let line = serde_json::json!({
            "error": { "code": error_code(&e), "message": e.to_string() }
        });
        eprintln!("{line}");
        std::process::exit(1);
    }
}

type CmdResult = chainctl::Result<()>;

fn emit(out: &Option<PathBuf>, text: &str) -> CmdResult {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_f64_list(text: &str, what: &str) -> chainctl::Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                file: "argument".into(),
                line: 0,
                field: what.into(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> chainctl::Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<usize>().map_err(|e| Error::Parse {
                file: "argument".into(),
                line: 0,
                field: what.into(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn load_config(path: &PathBuf) -> chainctl::Result<ChainSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

#[derive(Serialize)]
struct SpectrumSettings<'a> {
    config: &'a ChainSpec,
}

fn cmd_spectrum(a: SpectrumArgs, json: bool) -> CmdResult {
    let spec = load_config(&a.config)?;
    let spectrum = diagonalize(&spec)?;
    let report = gap_report(&spectrum, default_gap_tol(&spectrum));
    let mut rows = Vec::new();
    for m in 1..=spec.n_sites {
        let alpha = if m >= 2 { spectrum.alpha(m).to_string() } else { String::new() };
        let qubit = if m >= 2 && m / 2 <= spectrum.n_logical() {
            (m / 2).to_string()
        } else {
            String::new()
        };
        rows.push(vec![
            m.to_string(),
            spectrum.lambda(m).to_string(),
            alpha,
            qubit,
        ]);
    }
    let mut text = render_csv(
        &SpectrumSettings { config: &spec },
        &["mode", "eigenvalue", "alpha", "qubit"],
        &rows,
    );
    text.push_str(&format!(
        "# gap report: min_gap={} min_abs_eigenvalue={} min_alpha={} degenerate_pairs={:?}\n",
        report.min_gap, report.min_abs_eigenvalue, report.min_alpha, report.degenerate_pairs
    ));
    if json {
        let doc = serde_json::json!({
            "eigenvalues": spectrum.eigenvalues,
            "alphas": spectrum.alphas,
            "labeling": spectrum.labeling,
            "gap_report": report,
        });
        println!("{doc}");
    }
    emit(&a.out, &text)
}

fn cmd_couplings(a: CouplingsArgs, json: bool) -> CmdResult {
    let j = engineered_couplings(a.engineered)?;
    if json {
        println!("{}", serde_json::json!({ "n_sites": a.engineered, "couplings": j }));
        return Ok(());
    }
    for (i, v) in j.iter().enumerate() {
        println!("J_{}={:.8}", i + 2, v);
    }
    Ok(())
}

fn parse_tier(text: &str) -> chainctl::Result<Tier> {
    let bad = |m: String| Error::Parse {
        file: "argument".into(),
        line: 0,
        field: "tier".into(),
        message: m,
    };
    match text {
        "single" => Ok(Tier::SingleExcitation),
        "full" => Ok(Tier::Full),
        other => match other.strip_prefix("sector:") {
            Some(k) => Ok(Tier::NumberSector(
                k.parse().map_err(|e| bad(format!("{e}")))?,
            )),
            None => Err(bad(format!("unknown tier `{other}`"))),
        },
    }
}

fn initial_state(
    text: &str,
    spec: &ChainSpec,
    tier: Tier,
) -> chainctl::Result<SimState> {
    let bad = |m: String| Error::Parse {
        file: "argument".into(),
        line: 0,
        field: "initial".into(),
        message: m,
    };
    let n = spec.n_sites;
    if text == "vacuum" {
        if tier != Tier::Full {
            return Err(bad("vacuum needs --tier full".into()));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = C64::new(1.0, 0.0);
        return Ok(SimState {
            tier,
            basis: StateBasis::Mode,
            amplitudes,
            time: 0.0,
        });
    }
    if let Some(bits) = text.strip_prefix("logical:") {
        let spectrum = diagonalize(spec)?;
        let enc = LogicalEncoding::new(&spectrum);
        if bits.len() != enc.n_logical {
            return Err(bad(format!(
                "need {} logical bits, got {}",
                enc.n_logical,
                bits.len()
            )));
        }
        let mut packed = 0u64;
        for (i, c) in bits.chars().enumerate() {
            match c {
                '0' => {}
                '1' => packed |= 1 << i,
                _ => return Err(bad(format!("bad bit `{c}`"))),
            }
        }
        let label = enc.fock_label(packed);
        return SimState::from_fock(&label, tier);
    }
    if let Some(k) = text.strip_prefix("mode:") {
        let mode: usize = k.parse().map_err(|e| bad(format!("{e}")))?;
        return Ok(SimState::mode_excitation(n, mode));
    }
    if let Some(k) = text.strip_prefix("site:") {
        let site: usize = k.parse().map_err(|e| bad(format!("{e}")))?;
        return Ok(SimState::site_excitation(n, site));
    }
    Err(bad(format!("unknown initial state `{text}`")))
}

fn cmd_evolve(a: EvolveArgs, json: bool) -> CmdResult {
    let spec = load_config(&a.config)?;
    let text = std::fs::read_to_string(&a.schedule)?;
    let schedule = parse_schedule(&text, &a.schedule.display().to_string())?;
    let tier = parse_tier(&a.tier)?;
    let state = initial_state(&a.initial, &spec, tier)?;
    let mut snapshots: Vec<(f64, usize, f64, f64)> = Vec::new();
    let mut elapsed = 0.0;
    let durations: Vec<f64> = schedule
        .sequence
        .steps
        .iter()
        .map(|s| s.duration())
        .collect();
    let run = run_schedule_observed(
        &spec,
        &schedule,
        &state,
        &PropagatorConfig::default(),
        a.seed,
        &mut |step, s| {
            if a.snapshots.is_some() {
                elapsed += durations[step];
                for (i, amp) in s.amplitudes.iter().enumerate() {
                    if amp.norm_sqr() > 1e-12 {
                        snapshots.push((elapsed, i, amp.re, amp.im));
                    }
                }
            }
        },
    )?;
    let final_state = if a.frame_corrected {
        let spectrum = diagonalize(&spec)?;
        frame_corrected(&schedule, &spectrum, &run.state)?
    } else {
        run.state.clone()
    };
    if let Some(path) = &a.snapshots {
        write_text(path, &render_snapshots(&snapshots))?;
    }
    let rows: Vec<Vec<String>> = final_state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, amp)| {
            vec![
                final_state.time.to_string(),
                i.to_string(),
                amp.re.to_string(),
                amp.im.to_string(),
            ]
        })
        .collect();
    #[derive(Serialize)]
    struct Settings<'a> {
        config: &'a ChainSpec,
        seed: u64,
        initial: &'a str,
        tier: &'a str,
    }
    let settings = Settings {
        config: &spec,
        seed: a.seed,
        initial: &a.initial,
        tier: &a.tier,
    };
    let mut out = render_csv(&settings, &["time", "basis_index", "re", "im"], &rows);
    out.push_str(&format!(
        "# outcomes: {:?} norm: {}\n",
        run.outcomes,
        final_state.norm()
    ));
    if json {
        let doc = serde_json::json!({
            "outcomes": run.outcomes,
            "norm": final_state.norm(),
            "time": final_state.time,
        });
        println!("{doc}");
    }
    emit(&a.out, &out)
}

fn cmd_compile(a: CompileArgs, json: bool) -> CmdResult {
    let spec = load_config(&a.config)?;
    let circuit_text = std::fs::read_to_string(&a.circuit)?;
    let gates = parse_circuit(&circuit_text, &a.circuit.display().to_string())?;
    let spectrum = diagonalize(&spec)?;
    let schedule = compile(&gates, &spectrum, a.b, a.bprime)?;
    for w in &schedule.warnings {
        eprintln!("warning: {w}");
    }
    if json {
        let doc = serde_json::json!({
            "steps": schedule.sequence.steps.len(),
            "total_duration": schedule.total_duration(),
            "mode_phases": schedule.mode_phases,
            "warnings": schedule.warnings,
        });
        println!("{doc}");
    }
    emit(&a.out, &write_schedule(&schedule))
}

#[derive(Serialize)]
struct Fig1Settings {
    n: usize,
    bgrid: Vec<f64>,
    offset: f64,
    tier: &'static str,
}

fn cmd_fig1(a: Fig1Args, json: bool) -> CmdResult {
    use rayon::prelude::*;
    let bgrid = parse_f64_list(&a.bgrid, "bgrid")?;
    let results: Vec<chainctl::Result<(SweepPoint, Vec<(f64, f64)>)>> = bgrid
        .par_iter()
        .map(|&b| fig1_point(a.n, b, 400))
        .collect();
    let mut points = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (p, t) = r?;
        traces.push((p.b, t));
        points.push(p);
    }
    let settings = Fig1Settings {
        n: a.n,
        bgrid: bgrid.clone(),
        offset: chainctl::experiments::FIG1_OFFSET,
        tier: "single-excitation",
    };
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.b.to_string(),
                p.infidelity.to_string(),
                p.duration.to_string(),
            ]
        })
        .collect();
    let csv = render_csv(&settings, &["B", "final_infidelity", "duration"], &rows);
    if let Some(plot) = &a.plot {
        let series: Vec<(String, Vec<(f64, f64)>)> = traces
            .iter()
            .map(|(b, t)| (format!("B = {b}"), t.clone()))
            .collect();
        let svg = render_svg(
            &format!("swap fidelity vs time, N = {}", a.n),
            &series,
            false,
            false,
        );
        write_text(plot, &svg)?;
    }
    if json {
        println!("{}", serde_json::json!({ "points": points }));
    }
    emit(&a.out, &csv)
}

fn cmd_fit(a: FitArgs, json: bool) -> CmdResult {
    let text = std::fs::read_to_string(&a.input)?;
    let (header, rows) = parse_numeric_csv(&text)?;
    let x_name = a.x_col.unwrap_or_else(|| match a.axis.as_str() {
        "N" | "n" => "n_sites".to_string(),
        other => other.to_string(),
    });
    let col = |name: &str| -> chainctl::Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                file: a.input.display().to_string(),
                line: 1,
                field: name.to_string(),
                message: format!("column not found in {header:?}"),
            })
    };
    let xi = col(&x_name)?;
    let yi = col(&a.y_col)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[xi]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[yi]).collect();
    let fit = fit_scaling(&xs, &ys)?;
    if json {
        println!("{}", serde_json::json!(fit));
    } else {
        println!(
            "exponent={:.6} log_prefactor={:.6} r_squared={:.8}",
            fit.exponent, fit.log_prefactor, fit.r_squared
        );
    }
    Ok(())
}

fn cmd_oracle_check(a: OracleCheckArgs, json: bool) -> CmdResult {
    let report = oracle_check(a.n, a.seed)?;
    let worst = report.single_vs_full.max(report.sector_vs_full);
    if json {
        println!("{}", serde_json::json!(report));
    } else {
        println!(
            "single_vs_full={:.3e} sector_vs_full={:.3e} max={:.3e}",
            report.single_vs_full, report.sector_vs_full, worst
        );
    }
    if worst >= 1e-8 {
        return Err(Error::FitRejected(format!(
            "cross-tier deviation {worst:.3e} exceeds 1e-8"
        )));
    }
    Ok(())
}

fn cmd_robustness(a: RobustnessArgs, json: bool) -> CmdResult {
    let amps = parse_f64_list(&a.amplitude_errors, "amplitude_errors")?;
    let dets = parse_f64_list(&a.detunings, "detunings")?;
    let amp_rows = robustness_amplitude(&amps, a.n, a.b)?;
    let det_rows = robustness_detuning(&dets, 9, 0.02)?;
    #[derive(Serialize)]
    struct Settings {
        n: usize,
        b: f64,
    }
    let settings = Settings { n: a.n, b: a.b };
    let amp_csv = render_csv(
        &settings,
        &["amplitude_error", "measured_angle_error"],
        &amp_rows
            .iter()
            .map(|r| vec![r.amplitude_error.to_string(), r.measured_angle_error.to_string()])
            .collect::<Vec<_>>(),
    );
    let det_csv = render_csv(
        &settings,
        &["detuning", "predicted_tilt", "measured_tilt"],
        &det_rows
            .iter()
            .map(|r| {
                vec![
                    r.detuning.to_string(),
                    r.predicted_tilt.to_string(),
                    r.measured_tilt.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    if json {
        println!(
            "{}",
            serde_json::json!({ "amplitude": amp_rows, "detuning": det_rows })
        );
    }
    match &a.out {
        Some(prefix) => {
            let base = prefix.display().to_string();
            write_text(&PathBuf::from(format!("{base}_amplitude.csv")), &amp_csv)?;
            write_text(&PathBuf::from(format!("{base}_detuning.csv")), &det_csv)?;
            Ok(())
        }
        None => {
            print!("{amp_csv}\n{det_csv}");
            Ok(())
        }
    }
}

fn cmd_bound_check(a: BoundCheckArgs, json: bool) -> CmdResult {
    let grid = parse_usize_list(&a.ngrid, "ngrid")?;
    let rows = bound_check(&grid)?;
    #[derive(Serialize)]
    struct Settings {
        ngrid: Vec<usize>,
    }
    let csv = render_csv(
        &Settings { ngrid: grid },
        &[
            "n_sites",
            "max_signed_inverse_gap_sum",
            "max_abs_inverse_gap_sum",
            "harmonic_bound",
            "ratio_to_n_log_n",
            "holds",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.n_sites.to_string(),
                    r.max_inverse_gap_sum.to_string(),
                    r.max_abs_inverse_gap_sum.to_string(),
                    r.harmonic_bound.to_string(),
                    r.ratio_to_n_log_n.to_string(),
                    r.holds.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    if json {
        println!("{}", serde_json::json!(rows));
    }
    emit(&a.out, &csv)
}
