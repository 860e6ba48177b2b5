use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp::{enumerate_finite, fp_cmp, fp_div, fp_mul, left_sum, render_exact, succ, Fp, FpFormat};

/// α = 1 ⊘ (1 ⊕ 1 ⊕ ... ⊕ 1) with `n` ones: the weight uniform attention gives each token.
pub fn uniform_softmax_value(n: usize, fmt: FpFormat) -> Result<Fp> {
    if n == 0 {
        return Err(Error::Shape("uniform softmax over zero tokens".into()));
    }
    let denom = left_sum(&vec![fmt.one(); n], fmt)?;
    let alpha = fp_div(fmt.one(), denom, fmt)?;
    // The sum of ones saturates at 2^(p+1).
    let floor = fmt.pow2(-(fmt.p() as i32) - 1).expect("2^(-p-1) is representable");
    assert!(fp_cmp(alpha, floor) != Some(std::cmp::Ordering::Less), "alpha below 2^(-p-1)");
    Ok(alpha)
}

/// First y in `[lo, hi]` (ascending) with x ⊗ y = target.
pub fn solve_mul_target(x: Fp, target: Fp, lo: Fp, hi: Fp, fmt: FpFormat) -> Result<Fp> {
    if !x.is_finite() || !x.is_positive() {
        return Err(Error::NotFound(format!("solver needs a finite positive x, got {}", fmt.render(x))));
    }
    enumerate_finite(fmt)
        .into_iter()
        .filter(|&y| fp_cmp(y, lo) != Some(std::cmp::Ordering::Less) && fp_cmp(y, hi) != Some(std::cmp::Ordering::Greater))
        .find(|&y| fp_mul(x, y, fmt) == target)
        .ok_or_else(|| {
            Error::NotFound(format!(
                "no y in [{}, {}] with {} * y = {}",
                fmt.render(lo),
                fmt.render(hi),
                fmt.render(x),
                fmt.render(target)
            ))
        })
}

/// Writes a positive normal x as a·2^(-s) with a in (1, 2].
fn normalize(x: Fp, fmt: FpFormat) -> Result<(Fp, i32)> {
    match x {
        Fp::Finite { neg: false, exp, sig } if sig >= 1u64 << fmt.p() => {
            let power_of_two = sig == 1u64 << fmt.p();
            let s = if power_of_two { 1 - exp } else { -exp };
            let scale = fmt.pow2(s).ok_or_else(|| Error::NotRepresentable(format!("2^{s}")))?;
            Ok((fp_mul(x, scale, fmt), s))
        }
        _ => Err(Error::NotRepresentable(format!("{} is not a positive normal float", fmt.render(x)))),
    }
}

/// y with y ⊗ x = target, found by scaling x into (1,2], solving over [1/2, 1^+] and scaling back.
pub fn rescaled_solve(x: Fp, target: Fp, fmt: FpFormat) -> Result<Fp> {
    let (a, s) = normalize(x, fmt)?;
    let half = fmt.pow2(-1).expect("1/2 is representable");
    let y = solve_mul_target(a, target, half, succ(fmt.one(), fmt)?, fmt)?;
    let back = fmt.pow2(s).ok_or_else(|| Error::NotRepresentable(format!("2^{s}")))?;
    let beta = fp_mul(y, back, fmt);
    if fp_mul(beta, x, fmt) != target {
        return Err(Error::NotFound(format!("rescaled solution {} misses the target", fmt.render(beta))));
    }
    Ok(beta)
}

fn plus(x: Fp, k: usize, fmt: FpFormat) -> Result<Fp> {
    (0..k).try_fold(x, |v, _| succ(v, fmt))
}

/// Constants of the order-detecting attention for a sequence length n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrderDetectorConfig {
    pub n: usize,
    pub alpha: Fp,
    /// Flag for the trailing value of a rotation.
    pub beta: Fp,
    /// Flag for the two leading values of a rotation.
    pub beta_prime: Fp,
    pub delta: Fp,
}

impl OrderDetectorConfig {
    pub fn new(n: usize, fmt: FpFormat) -> Result<OrderDetectorConfig> {
        fmt.require_condition1()?;
        let alpha = uniform_softmax_value(n, fmt)?;
        let one = fmt.one();
        let three = fmt.from_int(3);
        let (t, t_prime, delta) = if fmt.p() >= 3 {
            (plus(one, 1, fmt)?, plus(one, 2, fmt)?, plus(three, 2, fmt)?)
        } else {
            (one, plus(one, 1, fmt)?, plus(three, 1, fmt)?)
        };
        let beta = rescaled_solve(alpha, t, fmt)?;
        let beta_prime = rescaled_solve(alpha, t_prime, fmt)?;
        Ok(OrderDetectorConfig { n, alpha, beta, beta_prime, delta })
    }

    pub fn summary(&self, fmt: FpFormat) -> ConfigSummary {
        ConfigSummary {
            alpha: render_exact(self.alpha, fmt),
            beta: render_exact(self.beta, fmt),
            beta_prime: Some(render_exact(self.beta_prime, fmt)),
            delta: Some(render_exact(self.delta, fmt)),
            max_distinct_count: None,
            saturation_value: None,
        }
    }
}

/// Constants of the counting attention for a sequence length n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterConfig {
    pub n: usize,
    pub alpha: Fp,
    /// β ⊗ α = 1^+.
    pub beta: Fp,
    /// Counts 0..=max_distinct_count give pairwise distinct flags.
    pub max_distinct_count: usize,
    /// The flag every count from max_distinct_count on produces, 2^(p+2).
    pub saturation_value: Fp,
}

impl CounterConfig {
    pub fn new(n: usize, fmt: FpFormat) -> Result<CounterConfig> {
        fmt.require_condition1()?;
        let alpha = uniform_softmax_value(n, fmt)?;
        let beta = rescaled_solve(alpha, plus(fmt.one(), 1, fmt)?, fmt)?;
        let p = fmt.p() as i32;
        let saturation_value = fmt.pow2(p + 2).ok_or_else(|| Error::NotRepresentable(format!("2^{}", p + 2)))?;
        Ok(CounterConfig { n, alpha, beta, max_distinct_count: 3 * (1usize << fmt.p()) - 1, saturation_value })
    }

    /// ⊕_{i=1}^k 1^+ (0 for k = 0).
    pub fn flag_for_count(&self, k: usize, fmt: FpFormat) -> Fp {
        let one_plus = succ(fmt.one(), fmt).expect("1 is finite");
        (0..k).fold(fmt.zero(), |acc, _| crate::fp::fp_add(acc, one_plus, fmt))
    }

    pub fn summary(&self, fmt: FpFormat) -> ConfigSummary {
        ConfigSummary {
            alpha: render_exact(self.alpha, fmt),
            beta: render_exact(self.beta, fmt),
            beta_prime: None,
            delta: None,
            max_distinct_count: Some(self.max_distinct_count),
            saturation_value: Some(render_exact(self.saturation_value, fmt)),
        }
    }
}

/// Constants rendered for build manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigSummary {
    pub alpha: String,
    pub beta: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_distinct_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturation_value: Option<String>,
}
