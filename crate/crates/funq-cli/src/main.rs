//! Command-line front end: build product quantizers, measure their
//! distortion, and emit the prediction/constant tables as CSV.
//!
//! Every output starts with `#`-comment header lines carrying the crate
//! version and the fully resolved run configuration, so any file can be
//! reproduced from its own header. Floats are printed with 17 significant
//! digits; CSV is comma-separated with a mandatory header row and LF line
//! endings. The scalar codebook cache honors `FUNQ_CACHE_DIR`.

use clap::{Args, Parser, Subcommand};
use funq::allocation::{self, CapacityTable};
use funq::asymptotics;
use funq::mc::{self, DistortionMode};
use funq::process::EigenModel;
use funq::product;
use funq::scalar;
use funq::store;
use funq::vector::{self, Quality};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "funq", version, about = "functional quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a product quantizer and write its codebook file.
    Build(BuildArgs),
    /// Measure a codebook file by Monte Carlo and compare to theory.
    Measure(MeasureArgs),
    /// Emit prediction/constant tables as CSV.
    Table(TableArgs),
    /// Export synthesized quantizer paths on a time grid as CSV.
    Paths(PathsArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Model spec: brownian | rl:RHO | ibm:BETA | rl32 | explicit:V1,V2,..[;tail=B]
    #[arg(long)]
    model: String,
    /// Codeword budget.
    #[arg(long)]
    n: u64,
    /// Block-length exponent in (0,1).
    #[arg(long, default_value_t = product::DEFAULT_THETA)]
    theta: f64,
    /// Force the block length instead of the theta rule.
    #[arg(long)]
    l: Option<usize>,
    /// Training effort for multivariate blocks: quick | standard | high.
    #[arg(long, default_value = "standard")]
    quality: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output codebook file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeasureArgs {
    /// Codebook file produced by `funq build`.
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// product-cell | voronoi
    #[arg(long, default_value = "product-cell")]
    mode: String,
    /// Simulated coefficients (default max(64, 4·m·l)).
    #[arg(long)]
    truncation: Option<usize>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// scalar-errors | scalar-codebook | capacity | rates | dimension | allocation
    #[arg(long)]
    kind: String,
    #[arg(long)]
    model: Option<String>,
    /// Level grid for rates/dimension tables, e.g. 100,1000,10000.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = product::DEFAULT_THETA)]
    theta: f64,
    #[arg(long)]
    l: Option<usize>,
    /// Largest scalar codebook size (scalar tables).
    #[arg(long, default_value_t = 200)]
    max_n: usize,
    /// Largest block length for the capacity table.
    #[arg(long, default_value_t = 1)]
    l_max: usize,
    /// Largest codebook size per block length in the capacity table.
    #[arg(long, default_value_t = 200)]
    k_max: usize,
    #[arg(long, default_value = "quick")]
    quality: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PathsArgs {
    #[arg(long)]
    codebook: PathBuf,
    /// Number of grid points on \[0,1\].
    #[arg(long, default_value_t = 257)]
    grid: usize,
    /// Refuse to enumerate more paths than this.
    #[arg(long)]
    limit: Option<u128>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Measure(args) => cmd_measure(args),
        Command::Table(args) => cmd_table(args),
        Command::Paths(args) => cmd_paths(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(command: &str, config: &[(String, String)]) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("funq".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("command".to_string(), command.to_string()),
    ];
    pairs.extend(config.iter().cloned());
    pairs
}

fn header_text(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k} {v}");
    }
    out
}

fn cmd_build(args: BuildArgs) -> funq::Result<ExitCode> {
    let model = EigenModel::parse(&args.model)?;
    let quality = Quality::parse(&args.quality)?;
    let pq = product::build(&model, args.n, args.theta, args.l, quality, args.seed)?;
    let config = vec![
        ("model".to_string(), model.descriptor()),
        ("n".to_string(), args.n.to_string()),
        ("theta".to_string(), args.theta.to_string()),
        (
            "l".to_string(),
            args.l.map_or("auto".into(), |l| l.to_string()),
        ),
        ("quality".to_string(), quality.to_string()),
        ("seed".to_string(), args.seed.to_string()),
    ];
    store::save(&pq, &args.out, &header("build", &config))?;
    let alloc_desc = pq
        .allocation()
        .map(|a| format!("l={} m={} sizes={:?}", a.l, a.m, a.sizes))
        .unwrap_or_else(|| "mixed".into());
    println!("model {}", model.descriptor());
    println!("allocation {alloc_desc}");
    println!("total_size {}", pq.total_size());
    println!("analytic_distortion {}", fmt_f(pq.analytic_distortion()));
    if let Some(exact) = pq.exact_decomposition() {
        println!("exact_decomposition {}", fmt_f(exact));
    }
    println!("written {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_measure(args: MeasureArgs) -> funq::Result<ExitCode> {
    let pq = store::load(&args.codebook)?;
    let mode = DistortionMode::parse(&args.mode)?;
    let est = mc::estimate(&pq, args.samples, args.truncation, args.seed, mode)?;
    let mut report = String::new();
    let config = vec![
        ("codebook".to_string(), args.codebook.display().to_string()),
        ("model".to_string(), pq.model().descriptor()),
        ("n".to_string(), pq.budget().to_string()),
        ("samples".to_string(), args.samples.to_string()),
        ("seed".to_string(), args.seed.to_string()),
        ("mode".to_string(), mode.to_string()),
        ("truncation".to_string(), est.truncation.to_string()),
    ];
    report.push_str(&header_text(&header("measure", &config)));
    let _ = writeln!(report, "mean {}", fmt_f(est.mean));
    let _ = writeln!(report, "stderr {}", fmt_f(est.stderr));
    let _ = writeln!(report, "tail {}", fmt_f(est.tail));
    let _ = writeln!(report, "analytic {}", fmt_f(pq.analytic_distortion()));
    let deviation = (est.mean - pq.analytic_distortion()).abs();
    let _ = writeln!(report, "deviation_sigmas {}", fmt_f(deviation / est.stderr));
    match mc::compare_to_theory(&pq, &est) {
        Ok(cmp) => {
            let _ = writeln!(report, "theory_en {}", fmt_f(cmp.predicted));
            let _ = writeln!(report, "achieved_en {}", fmt_f(cmp.achieved));
            let _ = writeln!(report, "ratio {}", fmt_f(cmp.ratio));
            let _ = writeln!(report, "ratio_stderr {}", fmt_f(cmp.ratio_stderr));
        }
        Err(_) => {
            let _ = writeln!(report, "theory_en -");
        }
    }
    // scalar blocks make the analytic value exact: a 3-sigma disagreement
    // means the file and the measurement disagree about the quantizer
    let self_check = pq.block_length() == Some(1);
    let violated = self_check && deviation > 3.0 * est.stderr;
    let _ = writeln!(
        report,
        "self_check {}",
        if !self_check {
            "skipped"
        } else if violated {
            "violated"
        } else {
            "ok"
        }
    );
    print!("{report}");
    if let Some(path) = args.out {
        std::fs::write(path, &report)?;
    }
    Ok(if violated {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn parse_grid(spec: &Option<String>) -> funq::Result<Vec<u64>> {
    let spec = spec.as_deref().unwrap_or("100,1000,10000,100000");
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| funq::FunqError::Parse {
                    location: format!("'{tok}'"),
                    message: "invalid level".into(),
                })
        })
        .collect()
}

fn cmd_table(args: TableArgs) -> funq::Result<ExitCode> {
    let quality = Quality::parse(&args.quality)?;
    let mut csv = String::new();
    let mut config = vec![("kind".to_string(), args.kind.clone())];
    match args.kind.as_str() {
        "scalar-errors" => {
            config.push(("max_n".into(), args.max_n.to_string()));
            csv.push_str("k,e_k,e_k_sq,k2_ek_sq\n");
            let table = scalar::error_table(args.max_n)?;
            for (i, e) in table.iter().enumerate() {
                let k = (i + 1) as f64;
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    i + 1,
                    fmt_f(*e),
                    fmt_f(e * e),
                    fmt_f(k * k * e * e)
                );
            }
        }
        "scalar-codebook" => {
            config.push(("max_n".into(), args.max_n.to_string()));
            csv.push_str("n,i,a_i,p_i,distortion\n");
            for n in 1..=args.max_n {
                let cb = scalar::cached_codebook(n)?;
                for (i, (a, p)) in cb.points().iter().zip(cb.probs()).enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{}",
                        n,
                        i + 1,
                        fmt_f(*a),
                        fmt_f(*p),
                        fmt_f(cb.distortion())
                    );
                }
            }
        }
        "capacity" => {
            config.push(("l_max".into(), args.l_max.to_string()));
            config.push(("k_max".into(), args.k_max.to_string()));
            config.push(("quality".into(), quality.to_string()));
            csv.push_str("l,k_max,c,q,c_over_l,q_over_l\n");
            for l in 1..=args.l_max {
                let cap = vector::capacity_constants(l, args.k_max, quality)?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    l,
                    args.k_max,
                    fmt_f(cap.c),
                    fmt_f(cap.q),
                    fmt_f(cap.c / l as f64),
                    fmt_f(cap.q / l as f64)
                );
            }
        }
        "rates" => {
            let model = EigenModel::parse(args.model.as_deref().unwrap_or("brownian"))?;
            let grid = parse_grid(&args.n_grid)?;
            config.push(("model".into(), model.descriptor()));
            csv.push_str("theorem,model,n,predicted,achieved,ratio\n");
            for &n in &grid {
                let q = asymptotics::quantization_rate(&model, n)?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},,",
                    q.label,
                    model.descriptor(),
                    n,
                    fmt_f(q.value)
                );
                let e = asymptotics::entropy_rate(&model, n)?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},,",
                    e.label,
                    model.descriptor(),
                    n,
                    fmt_f(e.value)
                );
            }
        }
        "dimension" => {
            let model = EigenModel::parse(args.model.as_deref().unwrap_or("brownian"))?;
            let grid = parse_grid(&args.n_grid)?;
            config.push(("model".into(), model.descriptor()));
            csv.push_str("model,n,c_n,lower_bound,ratio\n");
            for &n in &grid {
                let p = asymptotics::dimension_profile(&model, n)?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    model.descriptor(),
                    n,
                    p.c_n,
                    fmt_f(p.lower_bound),
                    fmt_f(p.c_n as f64 / p.lower_bound)
                );
            }
        }
        "allocation" => {
            let model = EigenModel::parse(args.model.as_deref().unwrap_or("brownian"))?;
            let n = args.n.ok_or(funq::FunqError::EmptyBudget)?;
            config.push(("model".into(), model.descriptor()));
            config.push(("n".into(), n.to_string()));
            let alloc = allocation::plan(&model, n, args.theta, args.l)?;
            let table = CapacityTable::exact_scalar(200)?;
            let objective = if alloc.l == 1 {
                fmt_f(allocation::objective(&model, &alloc, &table)?)
            } else {
                "-".into()
            };
            csv.push_str("n,theta,l,m,sizes,objective\n");
            let sizes: Vec<String> = alloc.sizes.iter().map(u64::to_string).collect();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                n,
                alloc.theta.map_or("-".into(), |t| t.to_string()),
                alloc.l,
                alloc.m,
                sizes.join(" "),
                objective
            );
        }
        other => {
            return Err(funq::FunqError::Parse {
                location: format!("'{other}'"),
                message:
                    "expected scalar-errors|scalar-codebook|capacity|rates|dimension|allocation"
                        .into(),
            })
        }
    }
    let text = format!("{}{}", header_text(&header("table", &config)), csv);
    std::fs::write(&args.out, text)?;
    println!("written {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_paths(args: PathsArgs) -> funq::Result<ExitCode> {
    let pq = store::load(&args.codebook)?;
    let paths: Vec<_> = pq.paths(args.limit)?.collect();
    let grids: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| pq.synthesize(p, args.grid))
        .collect::<funq::Result<_>>()?;
    let mut csv = String::new();
    csv.push('t');
    for (i, p) in paths.iter().enumerate() {
        let _ = write!(csv, ",path_{}_w_{}", i + 1, fmt_f(p.weight));
    }
    csv.push('\n');
    for g in 0..args.grid {
        let t = g as f64 / (args.grid - 1) as f64;
        let _ = write!(csv, "{}", fmt_f(t));
        for path in &grids {
            let _ = write!(csv, ",{}", fmt_f(path[g]));
        }
        csv.push('\n');
    }
    let config = vec![
        ("codebook".to_string(), args.codebook.display().to_string()),
        ("model".to_string(), pq.model().descriptor()),
        ("grid".to_string(), args.grid.to_string()),
        ("paths".to_string(), paths.len().to_string()),
    ];
    let text = format!("{}{}", header_text(&header("paths", &config)), csv);
    std::fs::write(&args.out, text)?;
    println!("written {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
