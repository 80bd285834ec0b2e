use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
}

impl TestResult {
    fn new(statistic: f64, dof: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            dof,
            p_value,
            significant: p_value < alpha,
            alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
}

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `dof`
/// degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() || dof.is_nan() || dof <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(dof / 2.0, 0.5, dof / (dof + t * t))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

fn check_sample(name: &'static str, x: &[f64], min: usize) -> Result<()> {
    if x.len() < min {
        return Err(Error::invalid(name, format!("need at least {min} values, got {}", x.len())));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(name, format!("non-finite value {v}")));
    }
    Ok(())
}

/// Mean and unbiased variance.
pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

struct Welch {
    t: f64,
    dof: f64,
}

fn welch_statistic(a: &[f64], b: &[f64]) -> Welch {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    if se2 == 0.0 {
        let t = if ma == mb {
            0.0
        } else {
            f64::INFINITY.copysign(ma - mb)
        };
        return Welch { t, dof: na + nb - 2.0 };
    }
    let dof = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Welch {
        t: (ma - mb) / se2.sqrt(),
        dof,
    }
}

/// Welch's unequal-variance two-sided t-test of `mean(a) == mean(b)`.
///
/// The statistic is positive when `a` has the larger mean. With both
/// variances zero the result is p = 1 for equal means and p = 0 otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    check_sample("a", a, 2)?;
    check_sample("b", b, 2)?;
    let w = welch_statistic(a, b);
    let p = if w.t == 0.0 { 1.0 } else { t_two_sided_p(w.t, w.dof) };
    Ok(TestResult::new(w.t, w.dof, p, alpha))
}

/// Permutation test on |Welch t| with `resamples` seeded shuffles of the
/// pooled sample; p = (count + 1) / (resamples + 1).
pub fn permutation_test(a: &[f64], b: &[f64], resamples: usize, seed: u64, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    check_sample("a", a, 2)?;
    check_sample("b", b, 2)?;
    if resamples == 0 {
        return Err(Error::invalid("resamples", "must be positive"));
    }
    let observed = welch_statistic(a, b);
    let target = observed.t.abs();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..resamples {
        pooled.shuffle(&mut rng);
        let (x, y) = pooled.split_at(a.len());
        // tolerance so ties with the observed value count as extreme
        if welch_statistic(x, y).t.abs() >= target * (1.0 - 1e-12) {
            count += 1;
        }
    }
    let p = (count + 1) as f64 / (resamples + 1) as f64;
    Ok(TestResult::new(observed.t, observed.dof, p, alpha))
}

/// Sample Pearson correlation with a two-sided t-based p-value.
///
/// `Ok(None)` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64], alpha: f64) -> Result<Option<CorrelationResult>> {
    check_alpha(alpha)?;
    if x.len() != y.len() {
        return Err(Error::invalid("y", format!("length {} differs from x length {}", y.len(), x.len())));
    }
    check_sample("x", x, 3)?;
    check_sample("y", y, 3)?;
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        beta_reg(dof / 2.0, 0.5, 1.0 - r * r)
    };
    Ok(Some(CorrelationResult {
        r,
        n,
        p_value: p,
        significant: p < alpha,
        alpha,
    }))
}
