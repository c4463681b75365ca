//! Command-line front end: evaluate correlation measures on named state
//! families or matrix files, run the work-extraction protocol, and sweep
//! mixing parameters into plot-ready tables.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use qdemon::correlations;
use qdemon::demon;
use qdemon::error::{Error, Result};
use qdemon::optimizer::{self, CandidateGrid};
use qdemon::qcore::DensityMatrix;
use qdemon::statefile;
use qdemon::states;
use qdemon::ProductBasisSpec;

#[derive(Parser)]
#[command(name = "qdemon", version, about = "Thermal correlation measures and demon work extraction on multi-qubit states")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one correlation measure on a state.
    Measure(MeasureArgs),
    /// Run the sequential work-extraction protocol.
    Protocol(ProtocolArgs),
    /// Sweep the mixing parameter of a one-parameter family.
    Sweep(SweepArgs),
    /// Check a density-matrix file without computing anything.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct StateArgs {
    /// State family spec, e.g. `ghz:3`, `schmidt:3:0.25`, `werner-ghz:0.5`.
    #[arg(long, conflicts_with = "state_file")]
    state: Option<String>,
    /// Density-matrix file (header `qubits=<n>`, then `re+imj` entries).
    #[arg(long)]
    state_file: Option<PathBuf>,
    /// Seed for the random state families.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 25)]
    theta_steps: usize,
    #[arg(long, default_value_t = 25)]
    phi_steps: usize,
    /// Skip simplex refinement of grid minima.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Significant digits in CSV values (1..=12).
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=12))]
    precision: u8,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Measure {
    ThermalQd,
    OriginalQd,
    Gqd,
    Mid,
}

impl Measure {
    fn name(self) -> &'static str {
        match self {
            Measure::ThermalQd => "thermal_qd",
            Measure::OriginalQd => "original_qd",
            Measure::Gqd => "gqd",
            Measure::Mid => "mid",
        }
    }
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, value_enum)]
    measure: Measure,
    /// Subsystem order; the first label is the apparatus for the
    /// single-apparatus measures.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ProtocolArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Measurement order; defaults to the state's label order.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// One-parameter family to sweep: `w-ghz` or `werner-ghz`.
    #[arg(long)]
    state: String,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long, default_value_t = 1.0)]
    to: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Evaluate sweep points on all cores; rows stay ordered.
    #[arg(long)]
    parallel: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    state_file: PathBuf,
}

pub fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Measure(args) => cmd_measure(args),
        Cmd::Protocol(args) => cmd_protocol(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Validate(args) => cmd_validate(args),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation { .. } => 3,
        Error::Numerical(_) => 4,
        _ => 2,
    }
}

fn grid_of(args: &GridArgs) -> CandidateGrid {
    CandidateGrid {
        theta_steps: args.theta_steps,
        phi_steps: args.phi_steps,
        refine: !args.no_refine,
        max_refine_evals: CandidateGrid::default().max_refine_evals,
    }
}

fn resolve_state(args: &StateArgs) -> Result<(DensityMatrix, String)> {
    match (&args.state, &args.state_file) {
        (Some(spec), None) => Ok((build_state(spec, args.seed)?, spec.clone())),
        (None, Some(path)) => Ok((
            statefile::load_density(path)?,
            format!("file:{}", path.display()),
        )),
        _ => Err(Error::InvalidParameter(
            "exactly one of --state / --state-file is required".into(),
        )),
    }
}

/// Parse the `family[:param...]` state grammar.
fn build_state(spec: &str, seed: u64) -> Result<DensityMatrix> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = |msg: &str| Error::InvalidParameter(format!("state spec `{spec}`: {msg}"));
    let float = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| bad(&format!("`{s}` is not a number")))
    };
    let integer = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| bad(&format!("`{s}` is not an integer")))
    };
    match parts[0] {
        "schmidt" => {
            if parts.len() != 3 {
                return Err(bad("expected schmidt:<n>:<|alpha|^2>"));
            }
            let n = integer(parts[1])?;
            let asq = float(parts[2])?;
            if !(0.0..=1.0).contains(&asq) {
                return Err(bad("|alpha|^2 must lie in [0, 1]"));
            }
            Ok(states::make_schmidt(n, asq.sqrt())?.to_density())
        }
        "ghz" => {
            if parts.len() != 2 {
                return Err(bad("expected ghz:<n>"));
            }
            Ok(states::make_ghz(integer(parts[1])?)?.to_density())
        }
        "w" => {
            if parts.len() != 1 {
                return Err(bad("the w family takes no parameters"));
            }
            Ok(states::make_w().to_density())
        }
        "werner-ghz" => {
            if parts.len() != 2 {
                return Err(bad("expected werner-ghz:<lambda>"));
            }
            states::make_werner_ghz(float(parts[1])?)
        }
        "w-ghz" => {
            if parts.len() != 2 {
                return Err(bad("expected w-ghz:<lambda>"));
            }
            states::make_w_ghz(float(parts[1])?)
        }
        "classical" => match parts.get(1) {
            Some(&"uniform") => {
                if parts.len() != 3 {
                    return Err(bad("expected classical:uniform:<n>"));
                }
                let n = integer(parts[2])?;
                if n == 0 || n > qdemon::qcore::MAX_QUBITS {
                    return Err(bad("qubit count out of range"));
                }
                let dim = 1usize << n;
                states::make_classical(&vec![1.0 / dim as f64; dim])
            }
            Some(list) => {
                let probs: Vec<f64> = list
                    .split(',')
                    .map(float)
                    .collect::<Result<_>>()?;
                states::make_classical(&probs)
            }
            None => Err(bad("expected classical:uniform:<n> or classical:<p,p,...>")),
        },
        "random-mixed" => {
            if parts.len() != 3 {
                return Err(bad("expected random-mixed:<n>:<rank>"));
            }
            states::random_mixed(integer(parts[1])?, integer(parts[2])?, seed)
        }
        "random-pure" => {
            if parts.len() != 2 {
                return Err(bad("expected random-pure:<n>"));
            }
            Ok(states::random_pure(integer(parts[1])?, seed)?.to_density())
        }
        other => Err(bad(&format!("unknown family `{other}`"))),
    }
}

fn meta_comment(state: &str, grid: &CandidateGrid, seed: u64) -> String {
    format!(
        "# tool=qdemon {}\n# state={state}\n# grid=theta{}:phi{}:{}\n# seed={seed}\n",
        env!("CARGO_PKG_VERSION"),
        grid.theta_steps,
        grid.phi_steps,
        if grid.refine { "refine" } else { "no-refine" },
    )
}

fn meta_json(state: &str, grid: &CandidateGrid, seed: u64) -> Value {
    json!({
        "tool": "qdemon",
        "version": env!("CARGO_PKG_VERSION"),
        "state": state,
        "grid": {
            "theta_steps": grid.theta_steps,
            "phi_steps": grid.phi_steps,
            "refine": grid.refine,
        },
        "seed": seed,
    })
}

/// Format with a fixed number of significant digits, plain decimal.
fn sig(value: f64, digits: u8) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let exp = value.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{value:.decimals$}")
}

fn spec_to_json(spec: &ProductBasisSpec) -> Value {
    let mut map = serde_json::Map::new();
    for label in spec.labels() {
        let b = spec.get(label).unwrap();
        map.insert(
            label.to_string(),
            json!({ "theta": b.theta(), "phi": b.phi() }),
        );
    }
    Value::Object(map)
}

fn spec_to_text(spec: &ProductBasisSpec, digits: u8) -> String {
    spec.labels()
        .map(|l| {
            let b = spec.get(l).unwrap();
            format!("{l}={}/{}", sig(b.theta(), digits), sig(b.phi(), digits))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn emit(output: &OutputArgs, text: String) -> Result<()> {
    match &output.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_measure(args: MeasureArgs) -> Result<()> {
    let (rho, state_name) = resolve_state(&args.state)?;
    let grid = grid_of(&args.grid);
    let apparatus = args
        .order
        .first()
        .cloned()
        .unwrap_or_else(|| rho.layout().labels()[0].clone());

    let (value, spec, evaluations, refined, heuristic) = match args.measure {
        Measure::ThermalQd => {
            let r = optimizer::minimize_thermal_qd(&rho, &apparatus, &grid)?;
            (r.value, r.spec, r.evaluations, r.refined, r.heuristic)
        }
        Measure::OriginalQd => {
            let r = optimizer::minimize_original_qd(&rho, &apparatus, &grid)?;
            (r.value, r.spec, r.evaluations, r.refined, r.heuristic)
        }
        Measure::Gqd => {
            let r = optimizer::minimize_gqd(&rho, &grid)?;
            (r.value, r.spec, r.evaluations, r.refined, r.heuristic)
        }
        Measure::Mid => {
            let r = correlations::mid_multipartite(&rho)?;
            (r.value, r.basis, 0, false, false)
        }
    };

    let text = match args.output.format {
        Format::Csv => {
            let p = args.output.precision;
            let mut t = meta_comment(&state_name, &grid, args.state.seed);
            t.push_str("state,measure,value,argmin,evaluations\n");
            writeln!(
                t,
                "{state_name},{},{},{},{evaluations}",
                args.measure.name(),
                sig(value, p),
                spec_to_text(&spec, p),
            )
            .unwrap();
            t
        }
        Format::Json => {
            let doc = json!({
                "meta": meta_json(&state_name, &grid, args.state.seed),
                "state": state_name,
                "measure": args.measure.name(),
                "value": value,
                "argmin": spec_to_json(&spec),
                "evaluations": evaluations,
                "refined": refined,
                "heuristic": heuristic,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
        }
    };
    emit(&args.output, text)
}

fn cmd_protocol(args: ProtocolArgs) -> Result<()> {
    let (rho, state_name) = resolve_state(&args.state)?;
    let grid = grid_of(&args.grid);
    let order = if args.order.is_empty() {
        rho.layout().labels().to_vec()
    } else {
        args.order.clone()
    };
    let report = demon::run_protocol(&rho, &order, &grid)?;

    let text = match args.output.format {
        Format::Csv => {
            let p = args.output.precision;
            let mut t = meta_comment(&state_name, &grid, args.state.seed);
            t.push_str("step,apparatus,delta_w,dw_total,gqd_bound,mid_bound,saturated\n");
            for s in &report.per_step {
                writeln!(
                    t,
                    "{},{},{},{},{},{},{}",
                    s.index,
                    s.apparatus,
                    sig(s.delta_w, p),
                    sig(report.total_advantage, p),
                    sig(report.gqd_bound, p),
                    sig(report.mid_bound, p),
                    report.saturated,
                )
                .unwrap();
            }
            t
        }
        Format::Json => {
            let steps: Vec<Value> = report
                .per_step
                .iter()
                .map(|s| {
                    json!({
                        "step": s.index,
                        "apparatus": s.apparatus,
                        "delta_w": s.delta_w,
                        "argmin": spec_to_json(&s.spec),
                    })
                })
                .collect();
            let doc = json!({
                "meta": meta_json(&state_name, &grid, args.state.seed),
                "per_step": steps,
                "dw_total": report.total_advantage,
                "gqd_bound": report.gqd_bound,
                "mid_bound": report.mid_bound,
                "saturated": report.saturated,
                "heuristic": report.heuristic,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
        }
    };
    emit(&args.output, text)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let family = args.state.as_str();
    let make: fn(f64) -> Result<DensityMatrix> = match family {
        "w-ghz" => states::make_w_ghz,
        "werner-ghz" => states::make_werner_ghz,
        other => {
            return Err(Error::InvalidParameter(format!(
                "sweep supports the one-parameter families `w-ghz` and `werner-ghz`, got `{other}`"
            )))
        }
    };
    if args.step <= 0.0 {
        return Err(Error::InvalidParameter("--step must be positive".into()));
    }
    if !(0.0..=1.0).contains(&args.from) || !(0.0..=1.0).contains(&args.to) || args.to < args.from
    {
        return Err(Error::InvalidParameter(
            "sweep range must satisfy 0 <= from <= to <= 1".into(),
        ));
    }
    let mut lambdas = Vec::new();
    let mut k = 0usize;
    loop {
        let l = args.from + k as f64 * args.step;
        if l > args.to + 1e-12 {
            break;
        }
        lambdas.push(l.min(1.0));
        k += 1;
    }

    let grid = grid_of(&args.grid);
    let eval = |&lambda: &f64| -> Result<(f64, f64, f64, f64)> {
        let rho = make(lambda)?;
        let order = rho.layout().labels().to_vec();
        let report = demon::run_protocol(&rho, &order, &grid)?;
        Ok((
            lambda,
            report.mid_bound,
            report.gqd_bound,
            report.total_advantage,
        ))
    };
    let rows: Vec<(f64, f64, f64, f64)> = if args.parallel {
        lambdas.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        lambdas.iter().map(eval).collect::<Result<_>>()?
    };

    let text = match args.output.format {
        Format::Csv => {
            let p = args.output.precision;
            let mut t = meta_comment(family, &grid, 0);
            t.push_str("lambda,mid,gqd,dw_total\n");
            for (l, mid, gqd, dw) in &rows {
                writeln!(t, "{},{},{},{}", sig(*l, p), sig(*mid, p), sig(*gqd, p), sig(*dw, p))
                    .unwrap();
            }
            t
        }
        Format::Json => {
            let json_rows: Vec<Value> = rows
                .iter()
                .map(|(l, mid, gqd, dw)| {
                    json!({ "lambda": l, "mid": mid, "gqd": gqd, "dw_total": dw })
                })
                .collect();
            let doc = json!({
                "meta": meta_json(family, &grid, 0),
                "rows": json_rows,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
        }
    };
    emit(&args.output, text)
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let rho = statefile::load_density(&args.state_file)?;
    println!(
        "ok: {} qubits, labels {}, entropy {:.6} bits",
        rho.n_qubits(),
        rho.layout().labels().join(","),
        rho.von_neumann_entropy(),
    );
    Ok(())
}
