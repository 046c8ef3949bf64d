//! Payoff models: the linear-quadratic network game and a closure-backed
//! oracle for arbitrary strongly monotone games.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg;
use crate::network::Network;
use crate::{Error, Result};

/// Per-player action intervals `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    bounds: Vec<(f64, f64)>,
}

impl ActionBox {
    /// Intervals may be degenerate (`lo == hi`) but not reversed.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "action interval of player {} is [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(ActionBox { bounds })
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        ActionBox::new(vec![(lo, hi); n])
    }

    pub fn n(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.n()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&v, &(lo, hi))| lo <= v && v <= hi)
    }

    /// Every coordinate lies strictly inside its interval by more than `margin`.
    pub fn is_interior(&self, x: &DVector<f64>, margin: f64) -> bool {
        x.len() == self.n()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&v, &(lo, hi))| v - lo > margin && hi - v > margin)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(&self.bounds)
                .map(|(&v, &(lo, hi))| v.clamp(lo, hi)),
        )
    }

    pub fn clamp_coordinate(&self, i: usize, v: f64) -> f64 {
        let (lo, hi) = self.bounds[i];
        v.clamp(lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()),
        )
    }
}

/// A game with scalar actions described by its pseudo-gradient
/// `φ(x) = [∂f_1/∂x_1, …, ∂f_n/∂x_n]`.
pub trait MonotoneGame {
    fn n(&self) -> usize;
    fn pseudo_gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn action_box(&self) -> &ActionBox;
    /// Claimed `l_m > 0` with `⟨φ(x) − φ(x′), x − x′⟩ ≤ −l_m ‖x − x′‖²`.
    fn monotonicity_modulus(&self) -> f64;
}

/// Games whose pseudo-gradient is affine, `φ(x) = c − M x`.
pub trait AffineGame: MonotoneGame {
    fn system_matrix(&self) -> DMatrix<f64>;
    fn system_offset(&self) -> DVector<f64>;
}

type PseudoGradientFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A monotone game known only through a pseudo-gradient callable.
pub struct MonotoneGameOracle {
    pseudo_gradient: Box<PseudoGradientFn>,
    l_m: f64,
    action_box: ActionBox,
}

impl MonotoneGameOracle {
    pub fn new(
        action_box: ActionBox,
        l_m: f64,
        pseudo_gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        MonotoneGameOracle {
            pseudo_gradient: Box::new(pseudo_gradient),
            l_m,
            action_box,
        }
    }
}

impl std::fmt::Debug for MonotoneGameOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MonotoneGameOracle")
            .field("n", &self.action_box.n())
            .field("l_m", &self.l_m)
            .finish_non_exhaustive()
    }
}

impl MonotoneGame for MonotoneGameOracle {
    fn n(&self) -> usize {
        self.action_box.n()
    }

    fn pseudo_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.pseudo_gradient)(x)
    }

    fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    fn monotonicity_modulus(&self) -> f64 {
        self.l_m
    }
}

/// Linear-quadratic network game:
/// `f_i(x) = −x_i²/2 + b_i x_i + Σ_j g_ij x_i x_j`.
#[derive(Debug, Clone)]
pub struct LqGame {
    net: Network,
    b: DVector<f64>,
    action_box: ActionBox,
    l_m: f64,
}

impl LqGame {
    /// Fails with [`Error::NotMonotone`] when `I − G` is not positive definite.
    pub fn new(net: Network, b: DVector<f64>, action_box: ActionBox) -> Result<Self> {
        let n = net.n();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        if action_box.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: action_box.n(),
            });
        }
        if let Some(i) = b.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "marginal benefit b_{} = {} must be finite and nonnegative",
                i + 1,
                b[i]
            )));
        }
        if let Some(i) = action_box.bounds().iter().position(|&(lo, hi)| lo >= hi) {
            return Err(Error::InvalidParameter(format!(
                "action interval of player {} is empty or degenerate",
                i + 1
            )));
        }
        let l_m = monotonicity_constant(&net);
        if !(l_m > 0.0) {
            return Err(Error::NotMonotone(l_m));
        }
        Ok(LqGame {
            net,
            b,
            action_box,
            l_m,
        })
    }

    /// Uniform benefit `b` and box `[lo, hi]` for every player.
    pub fn uniform(net: Network, b: f64, lo: f64, hi: f64) -> Result<Self> {
        let n = net.n();
        LqGame::new(
            net,
            DVector::from_element(n, b),
            ActionBox::uniform(n, lo, hi)?,
        )
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn benefits(&self) -> &DVector<f64> {
        &self.b
    }

    /// Payoff of player `i` at profile `x`, which must lie in the action box.
    pub fn payoff(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_profile(i, x)?;
        Ok(self.payoff_unchecked(i, x))
    }

    pub(crate) fn check_profile(&self, i: usize, x: &DVector<f64>) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            });
        }
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: x.len(),
            });
        }
        if !self.action_box.contains(x) {
            return Err(Error::Domain("profile lies outside the action box".into()));
        }
        Ok(())
    }

    /// Payoff formula without the box check, e.g. for finite differences at
    /// the box edge.
    pub fn payoff_unchecked(&self, i: usize, x: &DVector<f64>) -> f64 {
        let xi = x[i];
        let spill: f64 = self
            .net
            .weights()
            .row(i)
            .iter()
            .zip(x.iter())
            .map(|(g, v)| g * v)
            .sum();
        -0.5 * xi * xi + self.b[i] * xi + xi * spill
    }

    /// The exact strong-monotonicity modulus of this game.
    pub fn monotonicity_constant(&self) -> f64 {
        self.l_m
    }
}

/// Smallest eigenvalue of `I − (G + Gᵀ)/2`; positive iff the LQ game on `net`
/// is strongly monotone.
pub fn monotonicity_constant(net: &Network) -> f64 {
    let n = net.n();
    if n == 0 {
        return 1.0;
    }
    let m = DMatrix::identity(n, n) - net.weights();
    linalg::min_sym_eigenvalue(&m).expect("square by construction")
}

impl MonotoneGame for LqGame {
    fn n(&self) -> usize {
        self.net.n()
    }

    fn pseudo_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - x + self.net.weights() * x
    }

    fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    fn monotonicity_modulus(&self) -> f64 {
        self.l_m
    }
}

impl AffineGame for LqGame {
    fn system_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - self.net.weights()
    }

    fn system_offset(&self) -> DVector<f64> {
        self.b.clone()
    }
}

/// Outcome of a sampled check of the strong-monotonicity inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub trials: usize,
    /// Pairs with `x ≠ x′` that were actually tested.
    pub tested_pairs: usize,
    /// `min ⟨φ(x) − φ(x′), x − x′⟩ / (−‖x − x′‖²)` over tested pairs.
    pub worst_ratio: Option<f64>,
    pub claimed_modulus: f64,
    pub pass: bool,
    /// No pair could be tested, e.g. a zero-diameter box; the pass is vacuous.
    pub degenerate: bool,
}

/// Samples `trials` profile pairs uniformly in the box and checks that the
/// observed modulus never drops below the claimed one (tolerance `1e−9`).
pub fn check_monotone(game: &impl MonotoneGame, trials: usize, seed: u64) -> Result<MonotoneCheck> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = game.action_box();
    let mut worst: Option<f64> = None;
    let mut tested = 0;
    for _ in 0..trials {
        let x = bx.sample(&mut rng);
        let y = bx.sample(&mut rng);
        let d = &x - &y;
        let dist2 = d.norm_squared();
        if dist2 == 0.0 {
            continue;
        }
        let inner = (game.pseudo_gradient(&x) - game.pseudo_gradient(&y)).dot(&d);
        let ratio = -inner / dist2;
        worst = Some(worst.map_or(ratio, |w| w.min(ratio)));
        tested += 1;
    }
    let claimed = game.monotonicity_modulus();
    let pass = worst.is_none_or(|w| w >= claimed - 1e-9);
    Ok(MonotoneCheck {
        trials,
        tested_pairs: tested,
        worst_ratio: worst,
        claimed_modulus: claimed,
        pass,
        degenerate: tested == 0,
    })
}
