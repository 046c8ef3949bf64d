//! The zero-mean Laplace law truncated to `[-a, a]`.
//!
//! Density `p(x) = B exp(-|x|/λ)` on the support with
//! `B = 1 / (2λ(1 - exp(-a/λ)))`. Sampling is a closed-form inverse-CDF
//! transform of one uniform per draw, so every sample lies in the support by
//! construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifier of the uniform source, recorded in every output header.
pub const GENERATOR_ID: &str = "chacha8(rand_chacha 0.9; seed_from_u64, stream=substream id)";

/// Truncation half-width `a` and scale `lambda` of the truncated Laplace law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    a: f64,
    lambda: f64,
}

impl NoiseParams {
    pub fn new(a: f64, lambda: f64) -> Result<Self> {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "truncation bound a must be finite and positive, got {a}"
            )));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "scale lambda must be finite and positive, got {lambda}"
            )));
        }
        let p = NoiseParams { a, lambda };
        let b = p.normalizer();
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "normalizer is not finite for a = {a}, lambda = {lambda}"
            )));
        }
        Ok(p)
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        NoiseParams::new(self.a, self.lambda).map(|_| ())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `1 - exp(-a/λ)`, the probability mass of the untruncated law on `[-a, a]`.
    fn kept_mass(&self) -> f64 {
        -(-self.a / self.lambda).exp_m1()
    }

    /// The normalizer `B`.
    pub fn normalizer(&self) -> f64 {
        1.0 / (2.0 * self.lambda * self.kept_mass())
    }

    /// Law of `ω/2` when `ω` follows `self`.
    pub fn halved(&self) -> NoiseParams {
        NoiseParams {
            a: self.a / 2.0,
            lambda: self.lambda / 2.0,
        }
    }

    /// `E[x²]` in closed form; the mean is zero.
    pub fn variance(&self) -> f64 {
        let t = self.a / self.lambda;
        let tail = (-t).exp() * (t * t + 2.0 * t + 2.0);
        self.lambda * self.lambda * (2.0 - tail) / self.kept_mass()
    }
}

pub fn pdf(x: f64, p: &NoiseParams) -> f64 {
    if x.abs() <= p.a {
        p.normalizer() * (-x.abs() / p.lambda).exp()
    } else {
        0.0
    }
}

pub fn cdf(x: f64, p: &NoiseParams) -> f64 {
    if x <= -p.a {
        0.0
    } else if x >= p.a {
        1.0
    } else if x <= 0.0 {
        lower_cdf(x, p)
    } else {
        1.0 - lower_cdf(-x, p)
    }
}

// x in [-a, 0]: (e^{x/λ} - e^{-a/λ}) / (2(1 - e^{-a/λ})), factored to keep
// precision near -a.
fn lower_cdf(x: f64, p: &NoiseParams) -> f64 {
    let head = (x / p.lambda).exp();
    let gap = -(-(p.a + x) / p.lambda).exp_m1();
    head * gap / (2.0 * p.kept_mass())
}

/// Closed-form quantile function.
pub fn inverse_cdf(u: f64, p: &NoiseParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("probability {u} outside [0, 1]")));
    }
    let c = p.kept_mass();
    let centered = 2.0 * u - 1.0;
    // For u <= 1/2: x = λ ln(1 + (2u - 1)c); the upper half mirrors it.
    let magnitude = -p.lambda * (-centered.abs() * c).ln_1p();
    let x = if centered < 0.0 {
        -magnitude
    } else {
        magnitude
    };
    Ok(x.clamp(-p.a, p.a))
}

/// Seedable uniform source feeding the inverse-CDF sampler.
///
/// Independent substreams are obtained from the same seed by selecting a
/// different ChaCha stream, so per-player draws do not depend on the order in
/// which players are processed.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    consumed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseStream { rng, consumed: 0 }
    }

    /// One truncated Laplace draw; consumes exactly one uniform.
    pub fn next_noise(&mut self, p: &NoiseParams) -> f64 {
        let u: f64 = self.rng.random();
        self.consumed += 1;
        // u in [0, 1) always satisfies the domain check
        inverse_cdf(u, p).expect("uniform lies in [0, 1)")
    }

    /// Number of noises drawn so far.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// `count` draws from `p` using the stream seeded by `seed`.
pub fn sample(count: usize, p: &NoiseParams, seed: u64) -> Vec<f64> {
    let mut stream = NoiseStream::new(seed);
    (0..count).map(|_| stream.next_noise(p)).collect()
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Smallest δ for which `P(X ∈ S) ≤ e^ε P(X + s ∈ S) + δ` holds for every set
/// `S`, with `X ~ p` and a fixed shift `s`.
///
/// This is the hockey-stick integral `∫ max(p(y) - e^ε p(y - s), 0) dy`,
/// evaluated exactly: on each segment between the breakpoints
/// `{-a, -a+s, 0, s, a}` both densities are single exponentials, so the
/// log-ratio is linear and has at most one sign change.
pub fn delta_at_shift(epsilon: f64, shift: f64, p: &NoiseParams) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    if !shift.is_finite() {
        return Err(Error::Domain(format!("shift must be finite, got {shift}")));
    }
    // the law is symmetric, so the sign of the shift does not matter
    let s = shift.abs();
    if s == 0.0 {
        return Ok(0.0);
    }
    let (a, lambda) = (p.a, p.lambda);

    let mut points: Vec<f64> = [-a, -a + s, 0.0, s, a]
        .into_iter()
        .filter(|y| (-a..=a).contains(y))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mass = |l: f64, r: f64| (cdf(r, p) - cdf(l, p)).max(0.0);
    let shifted_mass = |l: f64, r: f64| (cdf(r - s, p) - cdf(l - s, p)).max(0.0);
    // e^ε · m without overflowing for large ε
    let scaled = |m: f64| {
        if m > 0.0 {
            (epsilon + m.ln()).exp()
        } else {
            0.0
        }
    };
    // ln p(y) - ln(e^ε p(y - s)) on the common support
    let log_ratio = |y: f64| ((y - s).abs() - y.abs()) / lambda - epsilon;

    let mut total = 0.0;
    for w in points.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        let mid = 0.5 * (l + r);
        if (mid - s).abs() > a {
            // shifted density vanishes here
            total += mass(l, r);
            continue;
        }
        let (gl, gr) = (log_ratio(l), log_ratio(r));
        let (lo, hi) = match (gl > 0.0, gr > 0.0) {
            (false, false) => continue,
            (true, true) => (l, r),
            (true, false) => (l, l + (r - l) * gl / (gl - gr)),
            (false, true) => (l + (r - l) * gl / (gl - gr), r),
        };
        total += (mass(lo, hi) - scaled(shifted_mass(lo, hi))).max(0.0);
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `sup_{0 ≤ s ≤ shift}` of [`delta_at_shift`], searched on the grid
/// `{0, h, 2h, …}` plus the endpoint `shift`.
///
/// The profile is nondecreasing in the shift, so the endpoint attains the
/// supremum; the grid confirms it rather than replacing it. The grid is capped
/// at 10 000 points.
pub fn delta_profile(epsilon: f64, shift: f64, p: &NoiseParams, grid_step: f64) -> Result<f64> {
    if !(grid_step > 0.0) {
        return Err(Error::Domain(format!(
            "grid_step must be positive, got {grid_step}"
        )));
    }
    let shift = shift.abs();
    let step = grid_step.max(shift / 10_000.0);
    let mut sup = delta_at_shift(epsilon, shift, p)?;
    let mut s = step;
    while s < shift {
        sup = sup.max(delta_at_shift(epsilon, s, p)?);
        s += step;
    }
    Ok(sup)
}
