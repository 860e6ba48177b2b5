//! Verification suites with brute-force oracles and JSON reports.

mod arith;
mod lemmas;
mod micro;
mod shadow;
mod theorems;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{enumerate_finite, fp_cmp, Fp, FpFormat};
use crate::linalg::FpMatrix;
use crate::transformer::{AttnParams, Block, BlockStack, FfParams, Head, StackDims, TransformerModel};

pub use shadow::{shadow_forward, ShadowValue};

/// Suites in the order `all` runs them.
pub const SUITES: &[&str] = &[
    "arith-conformance",
    "lemma-oneppp",
    "lemma-onep2",
    "lemma-one-plus",
    "max-distinguish",
    "saturation",
    "posenc",
    "three-max",
    "thm4-thm5",
    "thm2",
    "thm1-micro",
    "thm3-micro",
    "gadgets",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub case: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub p: u32,
    pub q: u32,
    pub total: u64,
    pub passed: u64,
    pub failed: u64,
    pub skipped: u64,
    /// At most `MAX_RECORDED` failures are kept; `failed` counts all of them.
    pub failures: Vec<Failure>,
    /// Witnesses and other facts worth keeping (e.g. a 3-cycle counterexample).
    pub notes: Vec<String>,
    pub wall_ms: u64,
    pub seed: u64,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

const MAX_RECORDED: usize = 50;

/// Result of one case.
#[derive(Clone, Debug)]
pub(crate) enum Outcome {
    Pass,
    Fail(Failure),
    Skip,
}

impl Outcome {
    pub(crate) fn check(ok: bool, case: impl FnOnce() -> (String, String, String)) -> Outcome {
        if ok {
            Outcome::Pass
        } else {
            let (case, expected, actual) = case();
            Outcome::Fail(Failure { case, expected, actual })
        }
    }
}

/// Running case counts for one suite.
#[derive(Default)]
pub(crate) struct Tally {
    total: u64,
    passed: u64,
    failed: u64,
    skipped: u64,
    failures: Vec<Failure>,
    notes: Vec<String>,
}

impl Tally {
    pub(crate) fn push(&mut self, o: Outcome) {
        self.total += 1;
        match o {
            Outcome::Pass => self.passed += 1,
            Outcome::Skip => self.skipped += 1,
            Outcome::Fail(f) => {
                self.failed += 1;
                if self.failures.len() < MAX_RECORDED {
                    self.failures.push(f);
                }
            }
        }
    }

    pub(crate) fn extend(&mut self, os: impl IntoIterator<Item = Outcome>) {
        for o in os {
            self.push(o);
        }
    }

    pub(crate) fn check(&mut self, ok: bool, case: impl FnOnce() -> (String, String, String)) {
        self.push(Outcome::check(ok, case));
    }

    /// Records a builder or evaluation error as one failed case.
    pub(crate) fn error(&mut self, case: &str, e: &Error) {
        self.push(Outcome::Fail(Failure { case: case.into(), expected: "no error".into(), actual: e.to_string() }));
    }

    pub(crate) fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

/// Sampling ranges for random models. Weights are uniform over the finite floats in
/// [-2, 2]; with probability `extreme_prob` a weight is drawn from {±Ω, ±ω, 0} instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSamplerConfig {
    pub seed: u64,
    pub d_in: (usize, usize),
    pub d_out: (usize, usize),
    pub d: (usize, usize),
    pub m: (usize, usize),
    pub r: (usize, usize),
    pub h: (usize, usize),
    pub n: (usize, usize),
    pub blocks: (usize, usize),
    pub extreme_prob: f64,
}

impl Default for ModelSamplerConfig {
    fn default() -> Self {
        ModelSamplerConfig {
            seed: 0,
            d_in: (1, 4),
            d_out: (1, 4),
            d: (1, 4),
            m: (1, 4),
            r: (1, 4),
            h: (1, 2),
            n: (2, 4),
            blocks: (1, 2),
            extreme_prob: 0.05,
        }
    }
}

impl ModelSamplerConfig {
    fn validate(&self) -> Result<()> {
        let ranges = [self.d_in, self.d_out, self.d, self.m, self.r, self.h, self.n];
        if ranges.iter().any(|&(lo, hi)| lo == 0 || lo > hi) || self.blocks.0 > self.blocks.1 {
            return Err(Error::Shape("sampler ranges must be non-empty and positive".into()));
        }
        if !(0.0..=1.0).contains(&self.extreme_prob) {
            return Err(Error::Shape("extreme_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws weights and token entries for the samplers.
pub(crate) struct WeightSampler {
    rng: ChaCha8Rng,
    pool: Vec<Fp>,
    extremes: Vec<Fp>,
    extreme_prob: f64,
}

impl WeightSampler {
    pub(crate) fn new(seed: u64, extreme_prob: f64, fmt: FpFormat) -> WeightSampler {
        let two = fmt.from_int(2);
        let pool = enumerate_finite(fmt)
            .into_iter()
            .filter(|&x| fp_cmp(x, two.neg()).is_some_and(|o| o.is_ge()) && fp_cmp(x, two).is_some_and(|o| o.is_le()))
            .collect();
        let extremes = vec![fmt.big_omega(), fmt.big_omega().neg(), fmt.omega(), fmt.omega().neg(), fmt.zero()];
        WeightSampler { rng: ChaCha8Rng::seed_from_u64(seed), pool, extremes, extreme_prob }
    }

    pub(crate) fn value(&mut self) -> Fp {
        if self.extreme_prob > 0.0 && self.rng.gen_bool(self.extreme_prob) {
            self.extremes[self.rng.gen_range(0..self.extremes.len())]
        } else {
            self.pool[self.rng.gen_range(0..self.pool.len())]
        }
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> FpMatrix {
        let data = (0..rows * cols).map(|_| self.value()).collect();
        FpMatrix::new(rows, cols, data).expect("shape")
    }

    pub(crate) fn vector(&mut self, len: usize) -> Vec<Fp> {
        (0..len).map(|_| self.value()).collect()
    }

    pub(crate) fn range(&mut self, (lo, hi): (usize, usize)) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    pub(crate) fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// A random model; identical for identical (cfg, fmt).
pub fn sample_model(cfg: &ModelSamplerConfig, fmt: FpFormat) -> Result<TransformerModel> {
    cfg.validate()?;
    let mut s = WeightSampler::new(cfg.seed, cfg.extreme_prob, fmt);
    let dims = StackDims { h: s.range(cfg.h), m: s.range(cfg.m), r: s.range(cfg.r), d: s.range(cfg.d), n: s.range(cfg.n) };
    let (d_in, d_out) = (s.range(cfg.d_in), s.range(cfg.d_out));
    let nblocks = s.range(cfg.blocks);
    let StackDims { h, m, r, d, .. } = dims;
    let blocks = (0..nblocks)
        .map(|_| Block {
            attn: AttnParams {
                heads: (0..h)
                    .map(|_| Head { wk: s.matrix(m, d), wq: s.matrix(m, d), wv: s.matrix(m, d), wo: s.matrix(d, m) })
                    .collect(),
            },
            ff: FfParams { w1: s.matrix(r, d), b1: s.vector(r), w2: s.matrix(d, r), b2: s.vector(d) },
        })
        .collect();
    let stack = BlockStack::new(blocks, dims)?;
    TransformerModel::new(fmt, s.matrix(d, d_in), s.vector(d), stack, s.matrix(d_out, d), s.vector(d_out))
}

/// Worker count from FPT_WORKERS, defaulting to the available parallelism.
pub fn workers() -> usize {
    std::env::var("FPT_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on `workers()` threads; results keep the input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let w = workers().min(items.len()).max(1);
    if w == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(w);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| scope.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Options shared by all suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Overrides the suite's default sample count (models, inputs, or pairs).
    pub samples: Option<usize>,
    pub sampler: ModelSamplerConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 42, samples: None, sampler: ModelSamplerConfig::default() }
    }
}

impl SuiteConfig {
    pub(crate) fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }
}

fn needs_condition1(name: &str) -> bool {
    matches!(name, "thm4-thm5" | "thm2" | "thm1-micro" | "thm3-micro" | "gadgets")
}

/// Runs one named suite.
pub fn run_suite(name: &str, fmt: FpFormat, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let name = canonical_name(name);
    if !SUITES.contains(&name) {
        return Err(Error::UnknownSuite(name.into()));
    }
    if needs_condition1(name) {
        fmt.require_condition1()?;
    }
    let start = Instant::now();
    let mut t = Tally::default();
    match name {
        "arith-conformance" => arith::run(fmt, &mut t),
        "lemma-oneppp" => lemmas::oneppp(fmt, &mut t),
        "lemma-onep2" => lemmas::onep2(fmt, &mut t),
        "lemma-one-plus" => lemmas::one_plus(fmt, &mut t),
        "max-distinguish" => lemmas::max_distinguish(fmt, &mut t),
        "saturation" => lemmas::saturation(fmt, &mut t),
        "posenc" => lemmas::posenc(fmt, &mut t),
        "three-max" => theorems::three_max(&mut t),
        "thm4-thm5" => theorems::thm4_thm5(fmt, cfg, &mut t),
        "thm2" => theorems::thm2(fmt, cfg, &mut t),
        "thm1-micro" => micro::thm1(fmt, cfg, &mut t),
        "thm3-micro" => micro::thm3(fmt, cfg, &mut t),
        "gadgets" => micro::gadgets(fmt, &mut t),
        _ => unreachable!("checked above"),
    }
    Ok(SuiteReport {
        suite: name.into(),
        p: fmt.p(),
        q: fmt.q(),
        total: t.total,
        passed: t.passed,
        failed: t.failed,
        skipped: t.skipped,
        failures: t.failures,
        notes: t.notes,
        wall_ms: start.elapsed().as_millis() as u64,
        seed: cfg.seed,
    })
}

fn canonical_name(name: &str) -> &str {
    match name {
        "thm2-similarity" => "thm2",
        other => other,
    }
}

/// Expands `all` and comma-separated lists into suite names.
pub fn resolve_suites(list: &[String]) -> Result<Vec<&'static str>> {
    let mut out = Vec::new();
    for item in list.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            out.extend_from_slice(SUITES);
        } else {
            let item = canonical_name(item);
            let s = SUITES.iter().find(|&&s| s == item).ok_or_else(|| Error::UnknownSuite(item.into()))?;
            out.push(*s);
        }
    }
    out.dedup();
    Ok(out)
}
