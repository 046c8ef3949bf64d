//! Nash equilibria of the original and perturbed games, and the bounds on
//! their distance.

use std::fmt;

use nalgebra::DVector;
use serde::Serialize;

use crate::game::{AffineGame, LqGame, MonotoneGame};
use crate::linalg;
use crate::mechanism::{perturb, PerturbationDraw};
use crate::network::Network;
use crate::{Error, Result};

/// Coordinates closer than this to a box face do not count as interior.
pub const INTERIOR_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ClosedForm,
    ProjectedGradient,
    BestResponse,
}

impl SolveMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveMethod::ClosedForm => "closed_form",
            SolveMethod::ProjectedGradient => "projected_gradient",
            SolveMethod::BestResponse => "best_response",
        }
    }
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub x_star: DVector<f64>,
    pub method: SolveMethod,
    pub iterations: usize,
    /// Backward error of the linear solve for the closed form; last step
    /// length `‖x_{t+1} − x_t‖` for iterative methods.
    pub residual: f64,
    /// `‖φ(x)‖₂` at the returned point.
    pub gradient_norm: f64,
    pub interior: bool,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl EquilibriumResult {
    /// CSV header matching [`EquilibriumResult::csv_row`] for `n` players.
    pub fn csv_header(n: usize) -> String {
        let mut h = String::from("seed,method,residual,interior");
        for i in 1..=n {
            h.push_str(&format!(",x{i}"));
        }
        h
    }

    pub fn csv_row(&self, seed: Option<u64>) -> String {
        let mut row = format!(
            "{},{},{},{}",
            seed.map(|s| s.to_string()).unwrap_or_default(),
            self.method,
            self.residual,
            self.interior
        );
        for v in self.x_star.iter() {
            row.push_str(&format!(",{v}"));
        }
        row
    }
}

/// Closed-form zero of an affine pseudo-gradient, `x = M⁻¹c`.
pub fn solve_affine_ne(game: &impl AffineGame) -> Result<EquilibriumResult> {
    let (x, backward) = linalg::solve(&game.system_matrix(), &game.system_offset())?;
    let gradient_norm = game.pseudo_gradient(&x).norm();
    let interior = game.action_box().is_interior(&x, INTERIOR_MARGIN);
    Ok(EquilibriumResult {
        x_star: x,
        method: SolveMethod::ClosedForm,
        iterations: 0,
        residual: backward,
        gradient_norm,
        interior,
        converged: true,
        diagnostics: Vec::new(),
    })
}

/// `x* = (I − G)⁻¹ b`. A solution outside the box is returned with
/// `interior = false`; it is then not the equilibrium of the boxed game.
pub fn solve_lq_ne(game: &LqGame) -> Result<EquilibriumResult> {
    solve_affine_ne(game)
}

/// Solves `(I − G + Dᵀ) x = b − β`, the zero of the perturbed pseudo-gradient.
pub fn solve_perturbed_lq_ne(game: &LqGame, draw: &PerturbationDraw) -> Result<EquilibriumResult> {
    solve_affine_ne(&perturb(game, draw)?)
}

/// Solves `(I − G + D) x = b − β`, with `D` untransposed. Kept for comparison
/// only: it is not the zero of the perturbed pseudo-gradient unless `D` is
/// symmetric.
pub fn solve_perturbed_lq_ne_untransposed(
    game: &LqGame,
    draw: &PerturbationDraw,
) -> Result<DVector<f64>> {
    let pg = perturb(game, draw)?;
    let m = game.system_matrix() + draw.d_matrix();
    let (x, _) = linalg::solve(&m, &pg.system_offset())?;
    Ok(x)
}

/// Settings for [`projected_gradient_ne`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSettings {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Lipschitz constant `L` of the pseudo-gradient; the iteration contracts
    /// for `0 < step < 2 l_m / L²`.
    pub lipschitz: f64,
}

impl GradientSettings {
    /// Step `l_m / L²`, the midpoint of the admissible range.
    pub fn for_game(game: &impl MonotoneGame, lipschitz: f64, tol: f64, max_iter: usize) -> Self {
        let l_m = game.monotonicity_modulus();
        GradientSettings {
            step: l_m / (lipschitz * lipschitz),
            tol,
            max_iter,
            lipschitz,
        }
    }
}

/// Projected gradient ascent `x ← Proj(x + step·φ(x))` until the step length
/// drops to `tol`. Non-convergence is reported in the result, not as an error.
pub fn projected_gradient_ne(
    game: &impl MonotoneGame,
    settings: &GradientSettings,
    x0: &DVector<f64>,
) -> Result<EquilibriumResult> {
    let GradientSettings {
        step,
        tol,
        max_iter,
        lipschitz,
    } = *settings;
    if !(step >= 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step must be >= 0, got {step}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    if x0.len() != game.n() {
        return Err(Error::DimensionMismatch {
            expected: game.n(),
            actual: x0.len(),
        });
    }
    let mut diagnostics = Vec::new();
    let bound = 2.0 * game.monotonicity_modulus() / (lipschitz * lipschitz);
    if !(step < bound) {
        diagnostics.push(format!("step {step} is not below 2 l_m / L^2 = {bound}"));
    }
    if step == 0.0 {
        diagnostics.push("zero step: iterates cannot move".into());
    }

    let bx = game.action_box();
    let mut x = bx.project(x0);
    let mut last = f64::INFINITY;
    let mut iterations = 0;
    let mut monotone_steps = true;
    while iterations < max_iter {
        let next = bx.project(&(&x + game.pseudo_gradient(&x) * step));
        let moved = (&next - &x).norm();
        iterations += 1;
        if moved > last * (1.0 + 1e-12) + 1e-300 {
            monotone_steps = false;
        }
        last = moved;
        x = next;
        if moved <= tol {
            break;
        }
    }
    if !monotone_steps {
        diagnostics.push("step length increased during the run".into());
    }
    let converged = step > 0.0 && last <= tol;
    if !converged {
        diagnostics.push(format!("no convergence after {iterations} iterations"));
    }
    let gradient_norm = game.pseudo_gradient(&x).norm();
    let interior = bx.is_interior(&x, INTERIOR_MARGIN);
    Ok(EquilibriumResult {
        x_star: x,
        method: SolveMethod::ProjectedGradient,
        iterations,
        residual: last,
        gradient_norm,
        interior,
        converged,
        diagnostics,
    })
}

/// One synchronous best-response round: every player maximizes its payoff
/// given the others' current actions, clipped to its interval.
fn best_response_round(
    game: &impl AffineGame,
    m: &nalgebra::DMatrix<f64>,
    c: &DVector<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    let bx = game.action_box();
    DVector::from_fn(x.len(), |i, _| {
        let others: f64 = (0..x.len())
            .filter(|&j| j != i)
            .map(|j| m[(i, j)] * x[j])
            .sum();
        bx.clamp_coordinate(i, (c[i] - others) / m[(i, i)])
    })
}

/// Synchronous (Jacobi) best-response dynamics. Returns `rounds + 1` profiles
/// starting with the projection of `x0`.
pub fn best_response_dynamics(
    game: &impl AffineGame,
    x0: &DVector<f64>,
    rounds: usize,
) -> Result<Vec<DVector<f64>>> {
    if x0.len() != game.n() {
        return Err(Error::DimensionMismatch {
            expected: game.n(),
            actual: x0.len(),
        });
    }
    let m = game.system_matrix();
    let c = game.system_offset();
    let mut traj = Vec::with_capacity(rounds + 1);
    traj.push(game.action_box().project(x0));
    for _ in 0..rounds {
        let next = best_response_round(game, &m, &c, traj.last().expect("nonempty"));
        traj.push(next);
    }
    Ok(traj)
}

/// Runs best-response rounds until successive profiles differ by at most
/// `tol` (2-norm) or `max_rounds` is reached.
pub fn best_response_ne(
    game: &impl AffineGame,
    x0: &DVector<f64>,
    tol: f64,
    max_rounds: usize,
) -> Result<EquilibriumResult> {
    if x0.len() != game.n() {
        return Err(Error::DimensionMismatch {
            expected: game.n(),
            actual: x0.len(),
        });
    }
    let m = game.system_matrix();
    let c = game.system_offset();
    let mut x = game.action_box().project(x0);
    let mut last = f64::INFINITY;
    let mut rounds = 0;
    while rounds < max_rounds {
        let next = best_response_round(game, &m, &c, &x);
        last = (&next - &x).norm();
        x = next;
        rounds += 1;
        if last <= tol {
            break;
        }
    }
    let converged = last <= tol;
    let diagnostics = if converged {
        Vec::new()
    } else {
        vec![format!("no convergence after {rounds} rounds")]
    };
    let gradient_norm = game.pseudo_gradient(&x).norm();
    let interior = game.action_box().is_interior(&x, INTERIOR_MARGIN);
    Ok(EquilibriumResult {
        x_star: x,
        method: SolveMethod::BestResponse,
        iterations: rounds,
        residual: last,
        gradient_norm,
        interior,
        converged,
        diagnostics,
    })
}

fn check_modulus(l_m: f64) -> Result<()> {
    if !(l_m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "l_m must be positive, got {l_m}"
        )));
    }
    Ok(())
}

/// Per-draw bound `(‖β‖ + ‖D‖₂ ‖x*‖) / l_m` with the spectral norm.
pub fn gamma_realized(draw: &PerturbationDraw, x_star: &DVector<f64>, l_m: f64) -> Result<f64> {
    check_modulus(l_m)?;
    Ok((draw.beta().norm() + linalg::spectral_norm(draw.d_matrix()) * x_star.norm()) / l_m)
}

/// Same bound with the Frobenius norm of `D`, for comparison.
pub fn gamma_realized_frobenius(
    draw: &PerturbationDraw,
    x_star: &DVector<f64>,
    l_m: f64,
) -> Result<f64> {
    check_modulus(l_m)?;
    Ok((draw.beta().norm() + linalg::frobenius_norm(draw.d_matrix()) * x_star.norm()) / l_m)
}

fn gamma_from_degree_sum(
    n: usize,
    a: f64,
    degree_term: f64,
    x_star_norm: f64,
    l_m: f64,
) -> Result<f64> {
    check_modulus(l_m)?;
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("a must be >= 0, got {a}")));
    }
    Ok(((n as f64).sqrt() * a + degree_term.sqrt() * a * x_star_norm) / l_m)
}

/// Worst-case bound `(√n a + sqrt(Σ_i (4|N_i|² + 5|N_i| + 4)) a ‖x*‖) / l_m`.
pub fn gamma_worst_case(net: &Network, a: f64, x_star_norm: f64, l_m: f64) -> Result<f64> {
    let sum: f64 = (0..net.n())
        .map(|i| {
            let d = net.degree(i) as f64;
            4.0 * d * d + 5.0 * d + 4.0
        })
        .sum();
    gamma_from_degree_sum(net.n(), a, sum, x_star_norm, l_m)
}

/// Worst-case bound from `‖d_i‖² ≤ (|N_i|² + 5|N_i| + 4) a²`, which also
/// dominates every realized bound and is tighter than [`gamma_worst_case`].
pub fn gamma_worst_case_tight(net: &Network, a: f64, x_star_norm: f64, l_m: f64) -> Result<f64> {
    let sum: f64 = (0..net.n())
        .map(|i| {
            let d = net.degree(i) as f64;
            d * d + 5.0 * d + 4.0
        })
        .sum();
    gamma_from_degree_sum(net.n(), a, sum, x_star_norm, l_m)
}

/// `‖x* − x̂*‖₂ ≤ γ`.
pub fn accuracy_check(x_star: &DVector<f64>, x_hat: &DVector<f64>, gamma: f64) -> Result<bool> {
    if x_star.len() != x_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: x_star.len(),
            actual: x_hat.len(),
        });
    }
    Ok((x_star - x_hat).norm() <= gamma)
}
