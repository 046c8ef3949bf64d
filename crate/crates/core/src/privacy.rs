//! Choosing `(a, λ)` for a privacy budget, μ-adjacency, and an exact audit of
//! the per-coordinate `(ε, δ)` guarantee.
//!
//! The audited mechanism releases `v − noise`, where `v` stacks the payoff
//! parameters `g_ij` (row by row over `{i} ∪ N_i`) followed by `b`. The
//! deterministic offset inside `q_ii` is post-processing and is ignored.

use serde::Serialize;

use crate::game::LqGame;
use crate::network::Network;
use crate::trunc_laplace::{delta_at_shift, NoiseParams};
use crate::{Error, Result};

/// Slack allowed when comparing an audited δ against the budget.
pub const AUDIT_TOL: f64 = 1e-6;

/// `(ε, δ)` per coordinate, adjacency radius `μ`, and group factor `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
    mu: f64,
    p: usize,
}

impl PrivacyBudget {
    /// Requires `ε > 0`, `0 < δ < 1/2`, `μ > 0` and `p ≥ 1`.
    pub fn new(epsilon: f64, delta: f64, mu: f64, p: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1/2), got {delta}"
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        if p == 0 {
            return Err(Error::InvalidParameter(
                "group factor p must be >= 1".into(),
            ));
        }
        Ok(PrivacyBudget {
            epsilon,
            delta,
            mu,
            p,
        })
    }

    /// Budget with `p` taken from the network.
    pub fn for_network(epsilon: f64, delta: f64, mu: f64, net: &Network) -> Result<Self> {
        PrivacyBudget::new(epsilon, delta, mu, net.group_factor())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

/// Lower bound on the scale: `μ / (ε − ln(1 − δ))`.
pub fn min_scale(mu: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!(
            "delta must lie in [0, 1), got {delta}"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be > 0, got {mu}")));
    }
    let denom = epsilon - (-delta).ln_1p();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon - ln(1 - delta) must be positive, got {denom}"
        )));
    }
    Ok(mu / denom)
}

// ln(1 + e^u) without overflow
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Lower bound on the truncation: `max(μ, λ ln((e^{μ/λ} − 1)/(2δ) + 1))`,
/// evaluated in log space so large `μ/λ` does not overflow.
pub fn min_bound(mu: f64, delta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be > 0, got {mu}")));
    }
    let t = mu / lambda;
    // ln(e^t − 1) = t + ln(1 − e^{−t})
    let log_numer = t + (-(-t).exp_m1()).ln();
    let log_ratio = log_numer - (2.0 * delta).ln();
    Ok(mu.max(lambda * softplus(log_ratio)))
}

/// Noise parameters at the lower bounds for `budget`.
pub fn plan(budget: &PrivacyBudget) -> Result<NoiseParams> {
    let lambda = min_scale(budget.mu, budget.epsilon, budget.delta)?;
    let a = min_bound(budget.mu, budget.delta, lambda)?;
    NoiseParams::new(a, lambda)
}

/// Comparison of given parameters with the planner's lower bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamCheck {
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_ok: bool,
    pub a: f64,
    /// Bound on `a` evaluated at the given `λ`.
    pub a_min: f64,
    pub a_ok: bool,
    /// Below a bound by less than 5%, e.g. a rounded value.
    pub near_violation: bool,
}

impl ParamCheck {
    pub fn compliant(&self) -> bool {
        self.lambda_ok && self.a_ok
    }
}

pub fn check_params(budget: &PrivacyBudget, params: &NoiseParams) -> Result<ParamCheck> {
    let lambda_min = min_scale(budget.mu, budget.epsilon, budget.delta)?;
    let a_min = min_bound(budget.mu, budget.delta, params.lambda())?;
    let lambda_ok = params.lambda() >= lambda_min;
    let a_ok = params.a() >= a_min;
    let near = |v: f64, bound: f64| v < bound && v >= 0.95 * bound;
    Ok(ParamCheck {
        lambda: params.lambda(),
        lambda_min,
        lambda_ok,
        a: params.a(),
        a_min,
        a_ok,
        near_violation: near(params.lambda(), lambda_min) || near(params.a(), a_min),
    })
}

/// Smallest `a ≥ μ` whose exact δ-profile at shift `μ` is within `δ`, for a
/// fixed `λ`, found by bisection to relative precision `1e-9`. `None` when no
/// truncation suffices, i.e. the untruncated Laplace law already needs more
/// than `δ`.
pub fn certified_bound(mu: f64, epsilon: f64, delta: f64, lambda: f64) -> Result<Option<f64>> {
    if !(mu > 0.0 && lambda > 0.0 && epsilon >= 0.0 && delta > 0.0) {
        return Err(Error::Domain(format!(
            "need mu > 0, lambda > 0, epsilon >= 0, delta > 0; got ({mu}, {lambda}, {epsilon}, {delta})"
        )));
    }
    // untruncated Laplace: 1 − exp((ε − μ/λ)/2) when μ/λ > ε
    let limit = -((epsilon - mu / lambda) / 2.0).min(0.0).exp_m1();
    if limit >= delta {
        return Ok(None);
    }
    let passes = |a: f64| -> Result<bool> {
        Ok(delta_at_shift(epsilon, mu, &NoiseParams::new(a, lambda)?)? <= delta)
    };
    if passes(mu)? {
        return Ok(Some(mu));
    }
    let mut lo = mu;
    let mut hi = 2.0 * mu;
    while !passes(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > mu + 1e4 * lambda {
            return Ok(None);
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Stacked payoff parameters `v = [g; b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismInput {
    /// `(i, j)` of each stacked `g` entry, 0-based.
    layout: Vec<(usize, usize)>,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl MechanismInput {
    /// Stacks `g_ij` for `j ∈ {i} ∪ N_i` ascending, player by player, matching
    /// the order of the nonzero `q_ij`.
    pub fn new(net: &Network, b: &[f64]) -> Result<Self> {
        if b.len() != net.n() {
            return Err(Error::DimensionMismatch {
                expected: net.n(),
                actual: b.len(),
            });
        }
        let mut layout = Vec::with_capacity(net.n() + net.total_degree());
        for i in 0..net.n() {
            let nb = net.neighbors(i)?;
            let pos = nb.partition_point(|&j| j < i);
            layout.extend(nb[..pos].iter().map(|&j| (i, j)));
            layout.push((i, i));
            layout.extend(nb[pos..].iter().map(|&j| (i, j)));
        }
        let g = layout.iter().map(|&(i, j)| net.weight(i, j)).collect();
        Ok(MechanismInput {
            layout,
            g,
            b: b.to_vec(),
        })
    }

    pub fn from_game(game: &LqGame) -> Result<Self> {
        MechanismInput::new(game.network(), game.benefits().as_slice())
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `m = n + Σ|N_i|`.
    pub fn stacked_len(&self) -> usize {
        self.g.len()
    }

    /// `l = m + n`.
    pub fn len(&self) -> usize {
        self.g.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layout(&self) -> &[(usize, usize)] {
        &self.layout
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Coordinate `k` of `v`.
    pub fn value(&self, k: usize) -> f64 {
        if k < self.g.len() {
            self.g[k]
        } else {
            self.b[k - self.g.len()]
        }
    }

    /// Player whose payoff coordinate `k` belongs to.
    pub fn owner(&self, k: usize) -> usize {
        if k < self.g.len() {
            self.layout[k].0
        } else {
            k - self.g.len()
        }
    }

    fn label(&self, k: usize) -> String {
        if k < self.g.len() {
            let (i, j) = self.layout[k];
            format!("g[{},{}]", i + 1, j + 1)
        } else {
            format!("b[{}]", k - self.g.len() + 1)
        }
    }

    fn is_diagonal(&self, k: usize) -> bool {
        k < self.g.len() && self.layout[k].0 == self.layout[k].1
    }

    /// Copy with a different `b`, e.g. to build an adjacent instance.
    pub fn with_b(&self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: b.len(),
            });
        }
        Ok(MechanismInput { b, ..self.clone() })
    }

    /// Copy with the stacked `g` replaced.
    pub fn with_g(&self, g: Vec<f64>) -> Result<Self> {
        if g.len() != self.g.len() {
            return Err(Error::DimensionMismatch {
                expected: self.g.len(),
                actual: g.len(),
            });
        }
        Ok(MechanismInput { g, ..self.clone() })
    }

    /// Extremal adjacent input: player `i0`'s neighbor weights and benefit are
    /// all moved by `shift` (use `±μ`).
    pub fn worst_case_neighbor(&self, i0: usize, shift: f64) -> Result<Self> {
        if i0 >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i0,
                n: self.n(),
            });
        }
        let mut out = self.clone();
        for (k, &(i, j)) in self.layout.iter().enumerate() {
            if i == i0 && j != i0 {
                out.g[k] += shift;
            }
        }
        out.b[i0] += shift;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Adjacency {
    pub adjacent: bool,
    /// The single player whose parameters differ, 0-based; `None` when the
    /// inputs are identical or differ in several players.
    pub i0: Option<usize>,
    pub max_gap: f64,
    pub differing_players: usize,
}

/// μ-adjacency: all players' parameters agree except possibly one player
/// `i0`, whose entries differ by at most `μ`.
pub fn adjacency_check(v: &MechanismInput, v_prime: &MechanismInput, mu: f64) -> Result<Adjacency> {
    if v.layout != v_prime.layout || v.n() != v_prime.n() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            actual: v_prime.len(),
        });
    }
    let mut players: Vec<usize> = Vec::new();
    let mut max_gap: f64 = 0.0;
    let mut within = true;
    for k in 0..v.len() {
        let (x, y) = (v.value(k), v_prime.value(k));
        if x != y || x.is_nan() || y.is_nan() {
            let owner = v.owner(k);
            if !players.contains(&owner) {
                players.push(owner);
            }
            let gap = (x - y).abs();
            max_gap = max_gap.max(gap);
            // a gap of exactly μ may round up when formed from the inputs
            within &= gap <= mu + 4.0 * f64::EPSILON * x.abs().max(y.abs());
        }
    }
    let adjacent = match players.len() {
        0 => true,
        1 => within,
        _ => false,
    };
    Ok(Adjacency {
        adjacent,
        i0: if players.len() == 1 {
            Some(players[0])
        } else {
            None
        },
        max_gap,
        differing_players: players.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateAudit {
    /// 1-based position in the stacked vector `v`.
    pub index: usize,
    pub label: String,
    pub gap: f64,
    /// δ needed with the full noise law on this coordinate.
    pub delta_required: f64,
    pub pass: bool,
    /// δ needed if the diagonal coordinate only carries `ω/2`; equals
    /// `delta_required` off the diagonal.
    pub delta_required_halved: f64,
    pub pass_halved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub budget: PrivacyBudget,
    pub params: NoiseParams,
    pub param_check: ParamCheck,
    /// 1-based differing player.
    pub i0: Option<usize>,
    pub coordinates: Vec<CoordinateAudit>,
    /// `(|V_diff| ε, |V_diff| δ)`.
    pub composed_epsilon: f64,
    pub composed_delta: f64,
    /// `(p ε, p δ)`.
    pub network_epsilon: f64,
    pub network_delta: f64,
    /// Every coordinate passes with the full noise law.
    pub pass: bool,
    /// Every coordinate passes when the diagonal carries `ω/2`.
    pub pass_halved_diagonal: bool,
    /// Smallest `a` passing the exact audit at this `λ`.
    pub certified_a: Option<f64>,
}

/// Audits the mechanism on a μ-adjacent pair coordinate by coordinate.
pub fn audit_mechanism(
    net: &Network,
    budget: &PrivacyBudget,
    params: &NoiseParams,
    v: &MechanismInput,
    v_prime: &MechanismInput,
) -> Result<AuditReport> {
    if v.n() != net.n() {
        return Err(Error::NetworkMismatch);
    }
    let adj = adjacency_check(v, v_prime, budget.mu)?;
    if !adj.adjacent {
        return Err(Error::NotAdjacent(format!(
            "{} players differ, max gap {}",
            adj.differing_players, adj.max_gap
        )));
    }
    let halved = params.halved();
    let eps = budget.epsilon;
    let mut coordinates = Vec::new();
    for k in 0..v.len() {
        let gap = (v.value(k) - v_prime.value(k)).abs();
        if gap == 0.0 {
            continue;
        }
        let delta_required = delta_at_shift(eps, gap, params)?;
        let delta_required_halved = if v.is_diagonal(k) {
            delta_at_shift(eps, gap, &halved)?
        } else {
            delta_required
        };
        coordinates.push(CoordinateAudit {
            index: k + 1,
            label: v.label(k),
            gap,
            delta_required,
            pass: delta_required <= budget.delta + AUDIT_TOL,
            delta_required_halved,
            pass_halved: delta_required_halved <= budget.delta + AUDIT_TOL,
        });
    }
    let touched = coordinates.len() as f64;
    Ok(AuditReport {
        budget: *budget,
        params: *params,
        param_check: check_params(budget, params)?,
        i0: adj.i0.map(|i| i + 1),
        pass: coordinates.iter().all(|c| c.pass),
        pass_halved_diagonal: coordinates.iter().all(|c| c.pass_halved),
        composed_epsilon: touched * eps,
        composed_delta: touched * budget.delta,
        network_epsilon: budget.p as f64 * eps,
        network_delta: budget.p as f64 * budget.delta,
        certified_a: certified_bound(budget.mu, eps, budget.delta, params.lambda())?,
        coordinates,
    })
}
