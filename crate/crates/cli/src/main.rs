use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l1dict::experiment::{
    boundary_table, derivative_check, fmt_sig, parse_list, read_gram_file, read_vector_file, run_phase_grid, write_boundary_csv,
    Family, ModelKind, PhaseGridConfig,
};
use l1dict::identifiability::Status;
use l1dict::norms::dual_norm_exact;
use l1dict::{dual_norm_bounds, finite_sample_report, required_samples, Error, GramMatrix, GroupNormParam, Method, SparsityModel};

const EXIT_NOT_IDENTIFIABLE: u8 = 1;
const EXIT_INDETERMINATE: u8 = 2;
/// `EX_USAGE`: bad flags, unparsable input, invalid parameters.
const EXIT_USAGE: u8 = 64;
/// `EX_SOFTWARE`: solver failures.
const EXIT_SOFTWARE: u8 = 70;
/// `EX_IOERR`
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "l1dict", version, about = "Local identifiability of dictionaries under l1-minimization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Population verdict for a Gram matrix; exit 0 identifiable, 1 not, 2 indeterminate.
    Verdict {
        #[command(flatten)]
        src: GramModel,
        #[arg(long, default_value = "exact")]
        method: Method,
    },
    /// Sandwich bounds and, within the size caps, the certified dual norm.
    Bounds {
        /// Vector file (reals separated by whitespace or commas).
        #[arg(long, conflicts_with_all = ["gram", "column"], required_unless_present = "gram")]
        vector: Option<PathBuf>,
        #[arg(long, requires = "column")]
        gram: Option<PathBuf>,
        /// Column j of the Gram; the vector is that column without its diagonal entry.
        #[arg(long)]
        column: Option<usize>,
        /// sg:<k> uses |||.|||_k, bg:<p> uses |||.|||_p.
        #[arg(long)]
        model: SparsityModel,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Critical mu per sparsity value along a one-parameter family.
    Boundary {
        #[arg(long)]
        k: Option<usize>,
        /// constant_mu, minimal_mu or gram_file (needs --gram).
        #[arg(long, default_value = "constant_mu")]
        family: String,
        #[arg(long)]
        gram: Option<PathBuf>,
        /// sg or bg.
        #[arg(long)]
        kind: ModelKind,
        /// Comma list or start:step:stop. Defaults to s = 1..K-1 or p = 0.1..0.9.
        #[arg(long)]
        sparsity: Option<String>,
        #[arg(long, default_value = "exact")]
        method: Method,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo phase diagram from a config file, written as CSV.
    PhaseDiagram {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Smallest N for which the finite-sample bound reaches the target probability.
    Samplesize {
        #[command(flatten)]
        src: GramModel,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        target: f64,
        /// Also print the bound at this N.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, default_value = "exact")]
        method: Method,
    },
    /// Signs of the one-sided directional derivatives at D0.
    Derivcheck {
        #[command(flatten)]
        src: GramModel,
        #[arg(long, default_value_t = 1000)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct GramModel {
    /// Gram file: first line K, then K rows of K reals.
    #[arg(long)]
    gram: PathBuf,
    /// sg:<s> or bg:<p>.
    #[arg(long)]
    model: SparsityModel,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NotConverged { .. } => EXIT_SOFTWARE,
        _ => EXIT_USAGE,
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn group_param(model: SparsityModel) -> GroupNormParam {
    match model {
        SparsityModel::SG(k) => GroupNormParam::Subset(k),
        SparsityModel::BG(p) => GroupNormParam::Bernoulli(p),
    }
}

fn run(cmd: Cmd) -> Result<u8, Error> {
    match cmd {
        Cmd::Verdict { src, method } => {
            let g = read_gram_file(&src.gram)?;
            let v = l1dict::population_verdict(&g, src.model, method)?;
            println!("lhs={}", fmt_sig(v.lhs));
            println!("rhs={}", fmt_sig(v.rhs));
            println!("margin={}", fmt_sig(v.margin));
            println!("lhs_bracket=[{},{}]", fmt_sig(v.lhs_bracket.0), fmt_sig(v.lhs_bracket.1));
            println!("column={}", v.column);
            println!("condition={:?}", v.condition);
            println!("status={}", v.status);
            Ok(match v.status {
                Status::Identifiable => 0,
                Status::NotIdentifiable => EXIT_NOT_IDENTIFIABLE,
                Status::Indeterminate => EXIT_INDETERMINATE,
            })
        }
        Cmd::Bounds { vector, gram, column, model, tol } => {
            let z = match (vector, gram, column) {
                (Some(v), _, _) => read_vector_file(&v)?,
                (None, Some(g), Some(j)) => {
                    let g: GramMatrix = read_gram_file(&g)?;
                    if j >= g.k() {
                        return Err(Error::Parse(format!("column {j} out of range for K={}", g.k())));
                    }
                    g.column_without_diagonal(j)
                }
                _ => return Err(Error::Parse("need --vector or --gram with --column".into())),
            };
            let param = group_param(model);
            let (lower, upper) = dual_norm_bounds(&z, param)?;
            println!("lower={}", fmt_sig(lower));
            match dual_norm_exact(&z, param, tol) {
                Ok(c) => {
                    println!("exact={}", fmt_sig(c.value));
                    println!("gap={}", fmt_sig(c.gap));
                }
                Err(e @ Error::TooLarge { .. }) => println!("note=exact value skipped: {e}"),
                Err(e) => return Err(e),
            }
            println!("upper={}", fmt_sig(upper));
            Ok(0)
        }
        Cmd::Boundary { k, family, gram, kind, sparsity, method, tol, out } => {
            let family = Family::parse(&family, gram.as_deref())?;
            let k = match (k, &family) {
                (Some(k), _) => k,
                (None, Family::GramFile(g)) => g.k(),
                (None, _) => return Err(Error::Parse("--k is required unless --family gram_file".into())),
            };
            if k < 2 {
                return Err(Error::Parse(format!("--k must be at least 2, got {k}")));
            }
            let values = match sparsity {
                Some(s) => parse_list(&s)?,
                None => match kind {
                    ModelKind::SG => (1..k).map(|s| s as f64).collect(),
                    ModelKind::BG => (1..10).map(|i| i as f64 / 10.0).collect(),
                },
            };
            let rows = boundary_table(k, &family, kind, &values, method, tol);
            let mut w = open_out(out.as_deref())?;
            write_boundary_csv(&rows, &mut w)?;
            w.flush()?;
            Ok(0)
        }
        Cmd::PhaseDiagram { config, out, seed } => {
            let mut cfg = PhaseGridConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut w = open_out(out.as_deref())?;
            let diagram = run_phase_grid(&cfg)?;
            diagram.write_csv(&mut w)?;
            w.flush()?;
            let (agree, compared) = diagram.agreement();
            eprintln!("agreement {agree}/{compared} cells with |margin| > {}", fmt_sig(cfg.margin_band));
            Ok(0)
        }
        Cmd::Samplesize { src, eps, target, n, method } => {
            let g = read_gram_file(&src.gram)?;
            if let Some(n) = n {
                let r = finite_sample_report(&g, src.model, eps, n, method)?;
                println!("side={}", r.side);
                println!("prob_lower_bound={}", fmt_sig(r.prob_lower_bound));
                println!("vacuous={}", r.vacuous);
            }
            match required_samples(&g, src.model, eps, target) {
                Ok(n) => {
                    println!("n={n}");
                    Ok(0)
                }
                Err(Error::MarginNotMet(msg)) => {
                    println!("n=none");
                    eprintln!("no sample size reaches the target: {msg}");
                    Ok(EXIT_INDETERMINATE)
                }
                Err(e) => Err(e),
            }
        }
        Cmd::Derivcheck { src, directions, seed } => {
            let g = read_gram_file(&src.gram)?;
            let c = derivative_check(&g, src.model, directions, seed)?;
            println!("status={}", c.verdict.status);
            println!("margin={}", fmt_sig(c.verdict.margin));
            println!("directions={}", c.directions);
            println!("min_plus={}", fmt_sig(c.min_plus));
            println!("max_minus={}", fmt_sig(c.max_minus));
            println!("witness_minus={}", fmt_sig(c.witness_minus));
            println!("consistent={}", c.consistent());
            Ok(if c.consistent() { 0 } else { EXIT_NOT_IDENTIFIABLE })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
