//! `ttensor`: inspect, transform, validate and benchmark tree documents.
//!
//! Exit codes: 0 on success, 1 when the data is rejected (key mismatch,
//! constraint violation, incompatible leaves), 2 on usage or parse errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treetensor::bench::{self, BenchOp, BenchRecord, CSV_HEADER};
use treetensor::func::{rise, subside};
use treetensor::io::{self, IoError};
use treetensor::padding::group_pad;
use treetensor::treelize::{LiftOutput, LiftedOp, MismatchPolicy, PolicyKind, TreeArg};
use treetensor::{Constraint, Path, Scalar, TensorLeaf, TreeTensor};

#[derive(Parser)]
#[command(name = "ttensor", version, about = "Work with tree-of-tensor documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a tree document as an indented outline.
    Show { file: PathBuf },
    /// Apply a lifted function to tree documents and raw values.
    Apply {
        /// Function name: neg, exp, pow2, sigmoid, abs, square, add, sub, mul,
        /// div, mul_sub, stack, cat, split, shape.
        #[arg(long = "fn")]
        func: String,
        #[arg(long, default_value = "strict")]
        policy: String,
        /// Leaf used where a tree lacks a key (outer and left policies).
        #[arg(long)]
        default: Option<String>,
        #[arg(long, default_value_t = 0)]
        axis: usize,
        #[arg(long, default_value_t = 1)]
        chunk: usize,
        /// Tree files, or `raw:<json leaf>` for a value broadcast to every leaf.
        #[arg(required = true)]
        args: Vec<String>,
    },
    /// Check a tree against a constraint spec and any constraints it embeds.
    Validate {
        #[arg(long)]
        constraints: Option<PathBuf>,
        file: PathBuf,
    },
    /// Turn an outer structure of trees into a tree of structures.
    Subside { file: PathBuf },
    /// Turn a tree of structures back into an outer structure of trees.
    Rise { file: PathBuf },
    /// Pad trees along axis 0 and stack them into a padded group.
    Pad {
        /// Fill value as a JSON scalar, e.g. `0`, `-1.5` or `false`.
        #[arg(long)]
        fill: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Time an operation on synthetic trees against a flat-map baseline.
    Bench {
        #[arg(long)]
        op: BenchOp,
        #[arg(long, default_value_t = 64)]
        leaves: usize,
        #[arg(long, default_value_t = 256)]
        elems: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run at 4, 16, 64 and 256 leaves and report the log-log slope.
        #[arg(long)]
        sweep: bool,
    },
}

enum Failure {
    Usage(String),
    Rejected(String),
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn rejected(e: impl Display) -> Failure {
    Failure::Rejected(e.to_string())
}

fn read(path: &FsPath) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_err(path: &FsPath) -> impl Fn(IoError) -> Failure + '_ {
    move |e| usage(format!("{}: {e}", path.display()))
}

fn load_tree(path: &FsPath) -> Result<TreeTensor, Failure> {
    io::parse_tree(&read(path)?).map_err(parse_err(path))
}

fn parse_leaf(text: &str, what: &str) -> Result<TensorLeaf, Failure> {
    let v = io::parse_value(text).map_err(|e| usage(format!("{what}: {e}")))?;
    io::leaf_from_value(&v, what).map_err(usage)
}

fn parse_scalar(text: &str) -> Result<Scalar, Failure> {
    parse_leaf(text, "--fill")?
        .scalar_value()
        .ok_or_else(|| usage("--fill must be a single value"))
}

enum Arg {
    Tree(TreeTensor),
    Raw(TensorLeaf),
}

fn apply(func: &str, policy: &str, default: Option<&str>, axis: usize, chunk: usize, args: &[String]) -> Result<String, Failure> {
    let op = LiftedOp::from_name(func, axis, chunk).map_err(usage)?;
    let kind: PolicyKind = policy.parse().map_err(usage)?;
    let default = default.map(|d| parse_leaf(d, "--default")).transpose()?;
    let policy = MismatchPolicy::new(kind, default).map_err(usage)?;
    let loaded = args
        .iter()
        .map(|a| match a.strip_prefix("raw:") {
            Some(json) => parse_leaf(json, a).map(Arg::Raw),
            None => load_tree(FsPath::new(a)).map(Arg::Tree),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<TreeArg<'_>> = loaded
        .iter()
        .map(|a| match a {
            Arg::Tree(t) => TreeArg::Tree(t),
            Arg::Raw(l) => TreeArg::Raw(l),
        })
        .collect();
    if let Some(n) = op.info().arity {
        if n != refs.len() {
            return Err(usage(format!("`{}` takes {n} arguments, got {}", op.name(), refs.len())));
        }
    }
    match op.apply(&policy, &refs).map_err(rejected)? {
        LiftOutput::Tree(t) => Ok(io::serialize_tree(&t)),
        LiftOutput::Trees(ts) => Ok(io::to_text(&ts.iter().map(io::tree_to_value).collect())),
    }
}

fn validate(constraints: Option<&FsPath>, file: &FsPath) -> Result<String, Failure> {
    let t = load_tree(file)?;
    let mut placements = t.constraints().placements();
    if let Some(spec) = constraints {
        let extra = io::parse_constraint_spec(&read(spec)?).map_err(parse_err(spec))?;
        for (p, c) in extra {
            let merged = placements.get(&p).map_or(c.clone(), |old: &Constraint| old.plus(&c));
            placements.insert(p, merged);
        }
    }
    let t = t.with_placements_unchecked(&placements).map_err(rejected)?;
    match t.validate_full() {
        Ok(()) => Ok("ok".into()),
        Err(vs) => Err(rejected(vs)),
    }
}

fn pad(fill: &str, files: &[PathBuf]) -> Result<String, Failure> {
    let fill = parse_scalar(fill)?;
    let trees = files.iter().map(|f| load_tree(f)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&TreeTensor> = trees.iter().collect();
    let g = group_pad(&refs, fill).map_err(rejected)?;
    Ok(io::to_text(&io::padded_to_value(&g)))
}

fn bench_cmd(op: BenchOp, leaves: usize, elems: usize, reps: usize, out: Option<&FsPath>, sweep: bool) -> Result<String, Failure> {
    let records: Vec<BenchRecord> = if sweep {
        let (records, slope) = bench::sweep(op, &bench::SWEEP_LEAVES, elems, reps).map_err(usage)?;
        eprintln!("{op} log-log slope over leaves {:?}: {slope:.3}", bench::SWEEP_LEAVES);
        records
    } else {
        bench::run(op, leaves, elems, reps).map_err(usage)?.to_vec()
    };
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    match out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Ok(String::new())
        }
        None => Ok(csv.trim_end().to_string()),
    }
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Show { file } => {
            let t = load_tree(&file)?;
            let mut out = t.to_string();
            let placements: BTreeMap<Path, Constraint> = t.constraints().placements();
            for (p, c) in &placements {
                out.push_str(&format!("constraint {p}: {c}\n"));
            }
            Ok(out.trim_end().to_string())
        }
        Command::Apply {
            func,
            policy,
            default,
            axis,
            chunk,
            args,
        } => apply(&func, &policy, default.as_deref(), axis, chunk, &args),
        Command::Validate { constraints, file } => validate(constraints.as_deref(), &file),
        Command::Subside { file } => {
            let v = io::parse_value(&read(&file)?).map_err(parse_err(&file))?;
            let outer = io::outer_from_value(&v).map_err(parse_err(&file))?;
            let down = subside(&outer).map_err(rejected)?;
            Ok(io::to_text(&io::struct_tree_to_value(&down)))
        }
        Command::Rise { file } => {
            let v = io::parse_value(&read(&file)?).map_err(parse_err(&file))?;
            let tree = io::struct_tree_from_value(&v).map_err(parse_err(&file))?;
            let up = rise(&tree).map_err(rejected)?;
            Ok(io::to_text(&io::outer_to_value(&up)))
        }
        Command::Pad { fill, files } => pad(&fill, &files),
        Command::Bench {
            op,
            leaves,
            elems,
            reps,
            out,
            sweep,
        } => bench_cmd(op, leaves, elems, reps, out.as_deref(), sweep),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(out) => {
            if !out.is_empty() {
                let mut stdout = std::io::stdout().lock();
                let _ = writeln!(stdout, "{out}");
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Rejected(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
