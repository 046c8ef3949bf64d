//! The LLQFP perturbation: every player draws `|N_i| + 2` truncated Laplace
//! noises and subtracts `x_i q_iᵀ x + β_i x_i` from its payoff.
//!
//! With `ω_i` the noises of player `i` and `i_k` its `k`-th neighbor:
//!
//! ```text
//! q_ii      = ω_{i,|N_i|+1} / 2 + a(|N_i| + 1) / 2
//! q_{i,i_k} = ω_{i,k}
//! β_i       = ω_{i,|N_i|+2}
//! ```
//!
//! `D` has columns `d_i = [q_i1, …, 2q_ii, …, q_in]ᵀ`, so the perturbed
//! pseudo-gradient is `φ̂(x) = φ(x) − Dᵀx − β`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::game::{ActionBox, AffineGame, LqGame, MonotoneGame};
use crate::linalg;
use crate::network::Network;
use crate::trunc_laplace::{NoiseParams, NoiseStream, GENERATOR_ID};
use crate::{Error, Result};

/// Version tag of the serialized draw record.
pub const DRAW_FORMAT: &str = "llqfp-draw/1";

/// One realization of the perturbation coefficients for a network.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDraw {
    seed: u64,
    params: NoiseParams,
    neighbor_order: Vec<Vec<usize>>,
    omega: Vec<Vec<f64>>,
    q: DMatrix<f64>,
    beta: DVector<f64>,
    d: DMatrix<f64>,
}

impl PerturbationDraw {
    /// Draws the coefficients. Player `i` uses substream `i` of `seed`, so the
    /// result does not depend on the order players are visited in.
    pub fn draw(net: &Network, params: &NoiseParams, seed: u64) -> Result<Self> {
        let omega = (0..net.n())
            .map(|i| {
                let mut stream = NoiseStream::substream(seed, i as u64);
                (0..net.degree(i) + 2)
                    .map(|_| stream.next_noise(params))
                    .collect()
            })
            .collect();
        PerturbationDraw::from_noises(net, params, seed, omega)
    }

    /// Builds a draw from explicit noises, e.g. when replaying a record or
    /// constructing extreme cases. The noises are validated.
    pub fn from_noises(
        net: &Network,
        params: &NoiseParams,
        seed: u64,
        omega: Vec<Vec<f64>>,
    ) -> Result<Self> {
        params.validate()?;
        let n = net.n();
        if omega.len() != n {
            return Err(Error::InvalidDraw(format!(
                "expected noises for {n} players, got {}",
                omega.len()
            )));
        }
        let a = params.a();
        let mut q = DMatrix::zeros(n, n);
        let mut beta = DVector::zeros(n);
        for i in 0..n {
            let nb = net.neighbors(i)?;
            let w = &omega[i];
            if w.len() != nb.len() + 2 {
                return Err(Error::InvalidDraw(format!(
                    "player {} needs {} noises, got {}",
                    i + 1,
                    nb.len() + 2,
                    w.len()
                )));
            }
            if let Some(v) = w.iter().find(|v| !(v.abs() <= a)) {
                return Err(Error::InvalidDraw(format!(
                    "noise {v} of player {} lies outside [-{a}, {a}]",
                    i + 1
                )));
            }
            for (k, &j) in nb.iter().enumerate() {
                q[(i, j)] = w[k];
            }
            let deg = nb.len() as f64;
            q[(i, i)] = w[nb.len()] / 2.0 + a * (deg + 1.0) / 2.0;
            beta[i] = w[nb.len() + 1];
        }
        let mut d = q.transpose();
        for i in 0..n {
            d[(i, i)] *= 2.0;
        }
        let draw = PerturbationDraw {
            seed,
            params: *params,
            neighbor_order: (0..n)
                .map(|i| net.neighbors(i).map(<[usize]>::to_vec))
                .collect::<Result<_>>()?,
            omega,
            q,
            beta,
            d,
        };
        draw.validate()?;
        Ok(draw)
    }

    /// Support, sparsity and diagonal-dominance checks.
    pub fn validate(&self) -> Result<()> {
        let a = self.params.a();
        let n = self.n();
        // rounding slack for the bound comparisons below
        let slack = |deg: usize| 8.0 * f64::EPSILON * a * (deg as f64 + 2.0);
        for i in 0..n {
            let nb = &self.neighbor_order[i];
            let deg = nb.len();
            let qii = self.q[(i, i)];
            let lo = a * deg as f64 / 2.0;
            let hi = a * (deg as f64 + 2.0) / 2.0;
            if qii < lo - slack(deg) || qii > hi + slack(deg) {
                return Err(Error::InvalidDraw(format!(
                    "q_{0}{0} = {qii} outside [{lo}, {hi}]",
                    i + 1
                )));
            }
            if !(self.beta[i].abs() <= a) {
                return Err(Error::InvalidDraw(format!(
                    "beta_{} outside [-a, a]",
                    i + 1
                )));
            }
            let mut off = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = self.q[(i, j)];
                if !nb.contains(&j) && v != 0.0 {
                    return Err(Error::InvalidDraw(format!(
                        "q_{},{} = {v} but players are not neighbors",
                        i + 1,
                        j + 1
                    )));
                }
                if !(v.abs() <= a) {
                    return Err(Error::InvalidDraw(format!(
                        "q_{},{} = {v} outside [-a, a]",
                        i + 1,
                        j + 1
                    )));
                }
                off += v.abs();
            }
            if 2.0 * qii < off - slack(deg) {
                return Err(Error::InvalidDraw(format!(
                    "row {} of D^T is not diagonally dominant",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    /// Raw noises `ω_{i,1..|N_i|+2}` per player.
    pub fn omega(&self) -> &[Vec<f64>] {
        &self.omega
    }

    /// Coefficient matrix with rows `q_iᵀ`.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// `D = [d_1 … d_n]`.
    pub fn d_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Total number of noises drawn, `Σ_i (|N_i| + 2)`.
    pub fn noise_count(&self) -> usize {
        self.omega.iter().map(Vec::len).sum()
    }

    /// Whether this draw was made on `net`'s neighbor structure.
    pub fn matches(&self, net: &Network) -> bool {
        net.n() == self.n()
            && (0..net.n()).all(|i| {
                net.neighbors(i)
                    .is_ok_and(|nb| nb == self.neighbor_order[i])
            })
    }

    pub fn to_record(&self) -> DrawRecord {
        DrawRecord {
            format: DRAW_FORMAT.to_string(),
            generator: GENERATOR_ID.to_string(),
            seed: self.seed,
            params: self.params,
            omega: self.omega.clone(),
            q: self
                .q
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            beta: self.beta.iter().copied().collect(),
        }
    }

    /// Rebuilds a draw from its record and checks that the recorded `Q` and
    /// `β` are exactly the ones the noises produce on `net`.
    pub fn from_record(net: &Network, record: &DrawRecord) -> Result<Self> {
        if record.format != DRAW_FORMAT {
            return Err(Error::InvalidDraw(format!(
                "unsupported record format {:?}",
                record.format
            )));
        }
        let draw =
            PerturbationDraw::from_noises(net, &record.params, record.seed, record.omega.clone())?;
        let q_ok = record.q.len() == draw.n()
            && record.q.iter().enumerate().all(|(i, row)| {
                row.len() == draw.n()
                    && row
                        .iter()
                        .enumerate()
                        .all(|(j, v)| v.to_bits() == draw.q[(i, j)].to_bits())
            });
        let beta_ok = record.beta.len() == draw.n()
            && record
                .beta
                .iter()
                .zip(draw.beta.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits());
        if !q_ok || !beta_ok {
            return Err(Error::InvalidDraw(
                "recorded coefficients do not match the recorded noises".into(),
            ));
        }
        Ok(draw)
    }
}

/// Serializable form of a draw for audit replay. `Q` is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawRecord {
    pub format: String,
    pub generator: String,
    pub seed: u64,
    pub params: NoiseParams,
    pub omega: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

/// Smallest eigenvalue of `(D + Dᵀ)/2`. `xᵀ Dᵀ x ≥ 0` for every `x` iff the
/// result is nonnegative.
pub fn check_psd(d: &DMatrix<f64>) -> Result<f64> {
    linalg::min_sym_eigenvalue(d)
}

/// The game every player obtains after perturbing its payoff.
#[derive(Debug, Clone)]
pub struct PerturbedLqGame {
    base: LqGame,
    draw: PerturbationDraw,
}

/// Applies a draw to a game. The original game is not modified.
pub fn perturb(game: &LqGame, draw: &PerturbationDraw) -> Result<PerturbedLqGame> {
    if !draw.matches(game.network()) {
        return Err(Error::NetworkMismatch);
    }
    Ok(PerturbedLqGame {
        base: game.clone(),
        draw: draw.clone(),
    })
}

impl PerturbedLqGame {
    pub fn base(&self) -> &LqGame {
        &self.base
    }

    pub fn draw(&self) -> &PerturbationDraw {
        &self.draw
    }

    /// `f̂_i(x) = f_i(x) − x_i q_iᵀ x − β_i x_i`.
    pub fn payoff(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.base.check_profile(i, x)?;
        Ok(self.payoff_unchecked(i, x))
    }

    pub fn payoff_unchecked(&self, i: usize, x: &DVector<f64>) -> f64 {
        let qx: f64 = self
            .draw
            .q
            .row(i)
            .iter()
            .zip(x.iter())
            .map(|(q, v)| q * v)
            .sum();
        self.base.payoff_unchecked(i, x) - x[i] * qx - self.draw.beta[i] * x[i]
    }

    /// `∂²f̂_i/∂x_i² = −1 − 2q_ii`.
    pub fn own_curvature(&self, i: usize) -> f64 {
        -1.0 - 2.0 * self.draw.q[(i, i)]
    }
}

/// `φ(x) − Dᵀx − β` for `game` perturbed by `draw`.
pub fn perturbed_pseudo_gradient(
    game: &LqGame,
    draw: &PerturbationDraw,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !draw.matches(game.network()) {
        return Err(Error::NetworkMismatch);
    }
    Ok(game.pseudo_gradient(x) - draw.d.transpose() * x - &draw.beta)
}

impl MonotoneGame for PerturbedLqGame {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn pseudo_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.base.pseudo_gradient(x) - self.draw.d.tr_mul(x) - &self.draw.beta
    }

    fn action_box(&self) -> &ActionBox {
        self.base.action_box()
    }

    /// The modulus of the original game; the PSD perturbation can only add to it.
    fn monotonicity_modulus(&self) -> f64 {
        self.base.monotonicity_modulus()
    }
}

impl AffineGame for PerturbedLqGame {
    fn system_matrix(&self) -> DMatrix<f64> {
        self.base.system_matrix() + self.draw.d.transpose()
    }

    fn system_offset(&self) -> DVector<f64> {
        self.base.benefits() - &self.draw.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s1() -> NoiseParams {
        NoiseParams::new(0.034, 0.013).unwrap()
    }

    fn ring() -> Network {
        Network::ring_lattice(10, 4, 0.08).unwrap()
    }

    #[test]
    fn ring_draw_bounds_and_count() {
        let draw = PerturbationDraw::draw(&ring(), &s1(), 0).unwrap();
        assert_eq!(draw.noise_count(), 60);
        for i in 0..10 {
            let qii = draw.q()[(i, i)];
            assert!((0.068..=0.102).contains(&qii), "{qii}");
            assert_eq!(draw.omega()[i].len(), 6);
        }
    }

    #[test]
    fn edgeless_draw_is_diagonal() {
        let net = Network::edgeless(4);
        let draw = PerturbationDraw::draw(&net, &s1(), 9).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(draw.q()[(i, j)], 0.0);
                }
            }
            assert!((0.0..=0.034).contains(&draw.q()[(i, i)]));
        }
    }

    #[test]
    fn draws_are_deterministic_per_seed() {
        let net = ring();
        let a = PerturbationDraw::draw(&net, &s1(), 5).unwrap();
        assert_eq!(a, PerturbationDraw::draw(&net, &s1(), 5).unwrap());
        assert_ne!(
            a.omega(),
            PerturbationDraw::draw(&net, &s1(), 6).unwrap().omega()
        );
    }

    #[test]
    fn d_matrix_layout() {
        let draw = PerturbationDraw::draw(&ring(), &s1(), 1).unwrap();
        let d = draw.d_matrix();
        let dt = d.transpose();
        for i in 0..10 {
            assert_eq!(d[(i, i)], 2.0 * draw.q()[(i, i)]);
            let off: f64 = (0..10).filter(|&j| j != i).map(|j| dt[(i, j)].abs()).sum();
            assert!(off <= 0.034 * 4.0 + 1e-15);
            assert!(0.034 * 4.0 <= dt[(i, i)] + 1e-15);
            for j in 0..10 {
                if j != i {
                    assert_eq!(dt[(i, j)], draw.q()[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn psd_examples() {
        let draw = PerturbationDraw::draw(&ring(), &s1(), 2).unwrap();
        assert!(check_psd(draw.d_matrix()).unwrap() >= -1e-10);
        assert_eq!(check_psd(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert!(check_psd(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn extreme_draw_is_borderline_psd() {
        // diagonal noise at -a and every neighbor noise at -a: the symmetric
        // part is a(4I - A) with A the ring adjacency, singular at the all-ones vector
        let net = ring();
        let a = 0.034;
        let omega = (0..10)
            .map(|_| {
                let mut w = vec![-a; 4];
                w.push(-a);
                w.push(a);
                w
            })
            .collect();
        let draw = PerturbationDraw::from_noises(&net, &s1(), 0, omega).unwrap();
        let min = check_psd(draw.d_matrix()).unwrap();
        assert!(min >= -1e-10, "{min}");
        assert!(min < 1e-12, "{min}");
    }

    #[test]
    fn from_noises_rejects_corrupt_input() {
        let net = ring();
        let mut omega = PerturbationDraw::draw(&net, &s1(), 3)
            .unwrap()
            .omega()
            .to_vec();
        omega[2][1] = 0.05;
        assert!(matches!(
            PerturbationDraw::from_noises(&net, &s1(), 3, omega.clone()),
            Err(Error::InvalidDraw(_))
        ));
        omega[2][1] = 0.0;
        omega[4].pop();
        assert!(PerturbationDraw::from_noises(&net, &s1(), 3, omega).is_err());
    }

    #[test]
    fn record_round_trip_and_tamper_detection() {
        let net = ring();
        let draw = PerturbationDraw::draw(&net, &s1(), 77).unwrap();
        let json = serde_json::to_string(&draw.to_record()).unwrap();
        let record: DrawRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(PerturbationDraw::from_record(&net, &record).unwrap(), draw);

        let mut tampered = record.clone();
        tampered.beta[0] += 1e-9;
        assert!(PerturbationDraw::from_record(&net, &tampered).is_err());
        let mut wrong = record;
        wrong.format = "llqfp-draw/0".into();
        assert!(PerturbationDraw::from_record(&net, &wrong).is_err());
    }

    #[test]
    fn perturbation_rejects_other_networks() {
        let game = LqGame::uniform(ring(), 10.0, 0.0, 100.0).unwrap();
        let other = Network::ring_lattice(10, 2, 0.08).unwrap();
        let draw = PerturbationDraw::draw(&other, &s1(), 0).unwrap();
        assert!(matches!(perturb(&game, &draw), Err(Error::NetworkMismatch)));
        assert!(perturbed_pseudo_gradient(&game, &draw, &DVector::zeros(10)).is_err());
    }

    #[test]
    fn perturbed_payoff_gap_is_the_perturbation() {
        let game = LqGame::uniform(ring(), 10.0, 0.0, 100.0).unwrap();
        let draw = PerturbationDraw::draw(game.network(), &s1(), 4).unwrap();
        let pg = perturb(&game, &draw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let x = game.action_box().sample(&mut rng);
            for i in 0..10 {
                let direct: f64 = -x[i] * (0..10).map(|j| draw.q()[(i, j)] * x[j]).sum::<f64>()
                    - draw.beta()[i] * x[i];
                let gap = pg.payoff(i, &x).unwrap() - game.payoff(i, &x).unwrap();
                assert!(
                    (gap - direct).abs() <= 1e-10 * (1.0 + direct.abs()),
                    "{gap} vs {direct}"
                );
            }
        }
        for i in 0..10 {
            assert!(pg.own_curvature(i) < -1.0);
        }
    }

    #[test]
    fn perturbed_gradient_examples() {
        let game = LqGame::uniform(ring(), 10.0, 0.0, 100.0).unwrap();
        let draw = PerturbationDraw::draw(game.network(), &s1(), 12).unwrap();
        let zero = DVector::zeros(10);
        let at_zero = perturbed_pseudo_gradient(&game, &draw, &zero).unwrap();
        assert_eq!(at_zero, game.benefits() - draw.beta());

        let pg = perturb(&game, &draw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-4;
        for _ in 0..100 {
            let x = game.action_box().sample(&mut rng);
            let phi = pg.pseudo_gradient(&x);
            for i in 0..10 {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (pg.payoff_unchecked(i, &up) - pg.payoff_unchecked(i, &dn)) / (2.0 * h);
                assert!((phi[i] - fd).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_noise_limit_recovers_original_payoffs() {
        let game = LqGame::uniform(ring(), 10.0, 0.0, 100.0).unwrap();
        let x = DVector::from_fn(10, |i, _| 5.0 + i as f64);
        let mut prev = f64::INFINITY;
        for a in [1e-2, 1e-4, 1e-6, 1e-8] {
            let p = NoiseParams::new(a, a / 3.0).unwrap();
            let pg = perturb(
                &game,
                &PerturbationDraw::draw(game.network(), &p, 0).unwrap(),
            )
            .unwrap();
            let gap = (0..10)
                .map(|i| (pg.payoff(i, &x).unwrap() - game.payoff(i, &x).unwrap()).abs())
                .fold(0.0, f64::max);
            // |x_i q_iᵀx + β_i x_i| ≤ a (p ‖x‖_∞² + ‖x‖_∞) up to the diagonal offset
            let bound = a * (7.0 * x.amax() * x.amax() + x.amax());
            assert!(gap <= bound);
            assert!(gap < prev);
            prev = gap;
        }
    }
}
