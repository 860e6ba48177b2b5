use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fpt::constructions::factorize::{constant_inputs, distinct_inputs, random_inputs};
use fpt::constructions::{
    assemble_thm1_model, assemble_thm3_model, Alphabet, Assembled, HashedPermTarget, SwapEquivTable, TripleCatalog,
};
use fpt::fp::{enumerate_all, enumerate_finite, fp_add, parse_literal, render_hex};
use fpt::linalg::MatrixJson;
use fpt::transformer::{ModelJson, TransformerModel};
use fpt::verify::{resolve_suites, run_suite, SuiteConfig, SuiteReport};
use fpt::{Fp, FpFormat, FpMatrix};

/// Bit-exact minifloat transformers: verification suites, constructed models, traces.
#[derive(Parser, Debug)]
#[command(name = "fpt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run verification suites and optionally write a JSON report.
    Verify(VerifyArgs),
    /// Build a constructed model and its manifest.
    Build(BuildArgs),
    /// Evaluate a model file on an input matrix file.
    Eval(EvalArgs),
    /// Print a worked arithmetic trace.
    Trace(TraceArgs),
    /// List every element of the format with its bit pattern.
    Enumerate(EnumerateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    E5m2,
    E4m3,
}

#[derive(Args, Debug)]
struct FormatArgs {
    /// Mantissa bits.
    #[arg(long, requires = "q", conflicts_with = "preset")]
    p: Option<u32>,
    /// Exponent bits.
    #[arg(long, requires = "p", conflicts_with = "preset")]
    q: Option<u32>,
    /// Named format: e5m2 is p=2,q=5 and e4m3 is p=3,q=4.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    format: FormatArgs,
    /// Suite names, comma separated, or `all`.
    #[arg(long, default_value = "all")]
    suite: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Override the default sample count of sampled suites.
    #[arg(long)]
    samples: Option<usize>,
    /// Write the reports as a JSON array.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Theorem {
    /// Swap-equivariant target on distinct-token inputs.
    Thm1,
    /// Permutation-equivariant target on sampled inputs.
    Thm3,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(value_enum)]
    theorem: Theorem,
    #[command(flatten)]
    format: FormatArgs,
    /// Tokens separated by commas; coordinates of one token separated by colons.
    /// Each literal is an exact decimal or a 0x bit pattern. thm3 defaults to every finite value.
    #[arg(long)]
    alphabet: Option<String>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Random inputs in the thm3 domain.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    d_out: usize,
    #[arg(long)]
    output: PathBuf,
    /// Manifest path; defaults to the output path with a `.manifest.json` extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output matrix path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TraceKind {
    /// Two summation orders of one multiset with different results.
    Nonassoc,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(value_enum)]
    kind: TraceKind,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[command(flatten)]
    format: FormatArgs,
    /// Skip ±∞ and NaN.
    #[arg(long)]
    finite: bool,
}

enum Failure {
    /// Bad arguments, unreadable files, or a rejected build; exit code 2.
    Usage(String),
    /// Some suite reported failures; exit code 1.
    Suites,
}

impl From<fpt::Error> for Failure {
    fn from(e: fpt::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

impl FormatArgs {
    fn resolve(&self) -> Outcome<FpFormat> {
        match (self.preset, self.p, self.q) {
            (Some(Preset::E5m2), ..) => Ok(FpFormat::e5m2()),
            (Some(Preset::E4m3), ..) => Ok(FpFormat::e4m3()),
            (None, Some(p), Some(q)) => FpFormat::new(p, q).map_err(|e| Failure::Usage(e.to_string())),
            _ => Err(Failure::Usage("a format is required: --p and --q, or --preset".into())),
        }
    }
}

fn to_json_text<T: Serialize>(v: &T) -> Outcome<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn parse_alphabet(spec: &str, fmt: FpFormat) -> Outcome<Alphabet> {
    let tokens = spec
        .split(',')
        .map(|tok| {
            tok.split(':')
                .map(|lit| parse_literal(lit, fmt).map_err(|e| Failure::Usage(format!("alphabet token {tok:?}: {e}"))))
                .collect::<Outcome<Vec<Fp>>>()
        })
        .collect::<Outcome<Vec<_>>>()?;
    Alphabet::new(tokens).map_err(|e| Failure::Usage(format!("alphabet: {e}")))
}

fn verify(args: &VerifyArgs) -> Outcome<()> {
    let fmt = args.format.resolve()?;
    let suites = resolve_suites(&args.suite).map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = SuiteConfig { seed: args.seed, samples: args.samples, ..SuiteConfig::default() };
    let mut reports: Vec<SuiteReport> = Vec::new();
    for name in suites {
        let r = run_suite(name, fmt, &cfg)?;
        let status = if r.ok() { "ok" } else { "FAILED" };
        println!(
            "{status:6} {:18} {}/{} passed, {} failed, {} skipped, {} ms",
            r.suite, r.passed, r.total, r.failed, r.skipped, r.wall_ms
        );
        for note in &r.notes {
            println!("       note: {note}");
        }
        for f in &r.failures {
            println!("       {}: expected {} got {}", f.case, f.expected, f.actual);
        }
        reports.push(r);
    }
    if let Some(path) = &args.report {
        write(path, &to_json_text(&reports)?)?;
    }
    if reports.iter().all(SuiteReport::ok) {
        Ok(())
    } else {
        Err(Failure::Suites)
    }
}

#[derive(Serialize)]
struct TableEntry {
    input: MatrixJson,
    output: MatrixJson,
}

fn build(args: &BuildArgs) -> Outcome<()> {
    let fmt = args.format.resolve()?;
    let alphabet = match (&args.alphabet, args.theorem) {
        (Some(spec), _) => parse_alphabet(spec, fmt)?,
        (None, Theorem::Thm3) => Alphabet::full(fmt),
        (None, Theorem::Thm1) => return Err(Failure::Usage("thm1 needs --alphabet".into())),
    };
    let (built, table) = match args.theorem {
        Theorem::Thm1 => {
            let table = SwapEquivTable::random(&alphabet, args.n, args.d_out, args.seed, fmt)?;
            let target = |x: &FpMatrix| table.eval(x);
            let catalog = TripleCatalog::new(alphabet.clone())?;
            let built = assemble_thm1_model(&target, &catalog, args.n, args.d_out, fmt)?;
            (built, tabulate(&target, distinct_inputs(&alphabet, args.n)?, fmt)?)
        }
        Theorem::Thm3 => {
            let hashed = HashedPermTarget::new(args.seed, args.d_out, fmt);
            let target = |x: &FpMatrix| hashed.eval(x);
            let mut domain = random_inputs(&alphabet, args.n, args.samples, args.seed)?;
            domain.extend(constant_inputs(&alphabet, args.n)?);
            let built = assemble_thm3_model(&target, &alphabet, &domain, args.n, args.d_out, fmt)?;
            (built, tabulate(&target, domain, fmt)?)
        }
    };
    let Assembled { model, manifest } = built;
    let mut doc = serde_json::to_value(&manifest)?;
    doc["target_table"] = serde_json::to_value(&table)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| args.output.with_extension("manifest.json"));
    write(&args.output, &to_json_text(&model.to_json())?)?;
    write(&manifest_path, &to_json_text(&doc)?)?;
    println!(
        "wrote {} (d={}, {} blocks) and {} ({} target entries)",
        args.output.display(),
        manifest.layout.d(),
        manifest.dimensions.blocks,
        manifest_path.display(),
        table.len()
    );
    Ok(())
}

fn tabulate(target: &dyn Fn(&FpMatrix) -> fpt::Result<FpMatrix>, inputs: Vec<FpMatrix>, fmt: FpFormat) -> Outcome<Vec<TableEntry>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for x in inputs {
        if seen.insert(x.clone()) {
            out.push(TableEntry { output: target(&x)?.to_json(fmt), input: x.to_json(fmt) });
        }
    }
    Ok(out)
}

fn eval(args: &EvalArgs) -> Outcome<()> {
    let model = TransformerModel::from_json(&read_json::<ModelJson>(&args.model)?)?;
    let fmt = model.format;
    let x = FpMatrix::from_json(&read_json::<MatrixJson>(&args.input)?, fmt)?;
    let text = to_json_text(&model.forward(&x)?.to_json(fmt))?;
    match &args.output {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn trace(args: &TraceArgs) -> Outcome<()> {
    let TraceKind::Nonassoc = args.kind;
    let fmt = args.format.resolve()?;
    let show = |x: Fp| format!("{} ({})", fmt.render(x), render_hex(x, fmt));
    let exact = |xs: &[Fp]| -> String {
        let sum = xs.iter().map(|&x| fmt.to_rational(x).expect("finite")).fold(num_rational::BigRational::from_integer(0.into()), |a, b| a + b);
        sum.to_string()
    };
    let fold = |xs: &[Fp]| xs[1..].iter().fold(xs[0], |acc, &x| fp_add(acc, x, fmt));

    let (a, b) = if fmt.p() >= 3 {
        let a = fmt.succ(fmt.one())?;
        (a, fmt.succ(a)?)
    } else {
        // Small formats: the first pair of positive values whose orders disagree.
        let pos: Vec<Fp> = enumerate_finite(fmt).into_iter().filter(|v| v.is_positive()).collect();
        pos.iter()
            .flat_map(|&a| pos.iter().map(move |&b| (a, b)))
            .find(|&(a, b)| fold(&[a, b, b]) != fold(&[b, b, a]))
            .ok_or_else(|| Failure::Usage("no order-dependent triple in this format".into()))?
    };
    println!("format p={} q={}", fmt.p(), fmt.q());
    println!("a = {}", show(a));
    println!("b = {}", show(b));
    for order in [[b, b, a], [a, b, b]] {
        let first = fp_add(order[0], order[1], fmt);
        let second = fp_add(first, order[2], fmt);
        let name = |x: Fp| if x == a { "a" } else { "b" };
        println!("({} + {}) + {}:", name(order[0]), name(order[1]), name(order[2]));
        println!("  {} + {} = {} exactly, rounds to {}", fmt.render(order[0]), fmt.render(order[1]), exact(&order[..2]), show(first));
        println!("  {} + {} = {} exactly, rounds to {}", fmt.render(first), fmt.render(order[2]), exact(&[first, order[2]]), show(second));
    }
    println!("exact sum {}", exact(&[a, b, b]));
    Ok(())
}

fn enumerate(args: &EnumerateArgs) -> Outcome<()> {
    let fmt = args.format.resolve()?;
    let values = if args.finite { enumerate_finite(fmt) } else { enumerate_all(fmt) };
    for v in values {
        println!("{}\t{}", render_hex(v, fmt), fmt.render(v));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Build(a) => build(a),
        Command::Eval(a) => eval(a),
        Command::Trace(a) => trace(a),
        Command::Enumerate(a) => enumerate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Suites) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
