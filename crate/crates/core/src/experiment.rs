//! Seeded Monte Carlo experiments on a perturbed LQ network game.
//!
//! A run draws a perturbation for every seed `base_seed + k`, solves the
//! perturbed equilibrium and compares it with the original one. The same
//! seeds are used for every noise configuration. Runs are independent and may
//! execute in parallel; results are always ordered by seed.
//!
//! Configuration is TOML. Every key is optional and defaults to the ring
//! setup below; unknown keys are rejected.
//!
//! ```toml
//! network = "ring"        # ring | star | path | edgeless | file
//! n = 10
//! k = 4
//! weight = 0.08
//! # network_file = "edges.csv"
//! b = 10.0                # or one value per player
//! box_lo = 0.0
//! box_hi = 100.0
//! executions = 500
//! base_seed = 0
//! bins = 20
//!
//! [[noise]]
//! label = "S1"
//! a = 0.034
//! lambda = 0.013
//!
//! [[noise]]
//! label = "planned"
//! epsilon = 0.6931471805599453
//! delta = 0.05
//! mu = 0.01
//!
//! [sweep]
//! epsilons = [0.1, 0.5, 1.0, 3.0]
//! mu = 0.01
//! cap = 3.0
//! executions = 50
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::equilibrium::{
    gamma_realized, gamma_realized_frobenius, gamma_worst_case, gamma_worst_case_tight,
    solve_lq_ne, solve_perturbed_lq_ne,
};
use crate::game::{ActionBox, LqGame};
use crate::mechanism::PerturbationDraw;
use crate::network::Network;
use crate::privacy::{plan, PrivacyBudget};
use crate::trunc_laplace::{NoiseParams, GENERATOR_ID};
use crate::{Error, Result, VERSION};

/// Version tag written in the first header line of every CSV.
pub const CSV_FORMAT: &str = "csv/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenefitSpec {
    Uniform(f64),
    PerPlayer(Vec<f64>),
}

/// One noise configuration: explicit `(a, lambda)` or a budget to plan from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub label: String,
    pub a: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub mu: Option<f64>,
}

impl NoiseConfig {
    pub fn explicit(label: &str, a: f64, lambda: f64) -> Self {
        NoiseConfig {
            label: label.to_string(),
            a: Some(a),
            lambda: Some(lambda),
            epsilon: None,
            delta: None,
            mu: None,
        }
    }

    pub fn budget(label: &str, epsilon: f64, delta: f64, mu: f64) -> Self {
        NoiseConfig {
            label: label.to_string(),
            a: None,
            lambda: None,
            epsilon: Some(epsilon),
            delta: Some(delta),
            mu: Some(mu),
        }
    }

    /// Resolves to noise parameters; `p` is the network's group factor.
    pub fn resolve(&self, p: usize) -> Result<NoiseParams> {
        let err = |msg: &str| Error::Config(format!("noise {:?}: {msg}", self.label));
        match (self.a, self.lambda, self.epsilon, self.delta, self.mu) {
            (Some(a), Some(lambda), None, None, None) => NoiseParams::new(a, lambda),
            (None, None, Some(epsilon), Some(delta), Some(mu)) => {
                plan(&PrivacyBudget::new(epsilon, delta, mu, p)?)
            }
            (None, None, ..) => Err(err("a budget needs epsilon, delta and mu")),
            (Some(_), Some(_), ..) => Err(err("give either (a, lambda) or a budget, not both")),
            _ => Err(err("explicit parameters need both a and lambda")),
        }
    }
}

/// Settings for the privacy/accuracy sweep. The sweep works at `δ = 0`, where
/// the planner is undefined, so it uses `λ = μ/ε` and `a = max(μ, cap·λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub mu: f64,
    pub cap: f64,
    pub executions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilons: vec![0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0],
            mu: 0.01,
            cap: 3.0,
            executions: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: String,
    pub n: usize,
    pub k: usize,
    pub weight: f64,
    pub network_file: Option<PathBuf>,
    pub b: BenefitSpec,
    pub box_lo: f64,
    pub box_hi: f64,
    pub executions: usize,
    pub base_seed: u64,
    pub bins: usize,
    pub noise: Vec<NoiseConfig>,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            network: "ring".into(),
            n: 10,
            k: 4,
            weight: 0.08,
            network_file: None,
            b: BenefitSpec::Uniform(10.0),
            box_lo: 0.0,
            box_hi: 100.0,
            executions: 500,
            base_seed: 0,
            bins: 20,
            noise: vec![
                NoiseConfig::explicit("S1", 0.034, 0.013),
                NoiseConfig::explicit("S2", 0.015, 0.0045),
                NoiseConfig::explicit("S1-compliant", 0.03344, 0.01343),
            ],
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. A relative `network_file` is resolved against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = ExperimentConfig::from_toml_str(&text)?;
        if let Some(file) = &config.network_file {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    config.network_file = Some(dir.join(file));
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.executions == 0 {
            return Err(Error::Config("executions must be >= 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        if self.noise.is_empty() {
            return Err(Error::Config(
                "at least one [[noise]] entry is required".into(),
            ));
        }
        let mut labels: Vec<&str> = self.noise.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("noise labels must be unique".into()));
        }
        if labels
            .iter()
            .any(|l| l.is_empty() || l.contains([',', '"', '\n']))
        {
            return Err(Error::Config(
                "noise labels must be non-empty and free of commas and quotes".into(),
            ));
        }
        if self.network == "file" && self.network_file.is_none() {
            return Err(Error::Config(
                "network = \"file\" needs network_file".into(),
            ));
        }
        if self.network != "file" && self.network_file.is_some() {
            return Err(Error::Config(
                "network_file is only used with network = \"file\"".into(),
            ));
        }
        let s = &self.sweep;
        if s.executions == 0 || s.epsilons.is_empty() {
            return Err(Error::Config(
                "sweep needs executions >= 1 and at least one epsilon".into(),
            ));
        }
        if s.epsilons.iter().any(|e| !(*e > 0.0)) || !(s.mu > 0.0) || !(s.cap > 0.0) {
            return Err(Error::Config(
                "sweep epsilons, mu and cap must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn build_network(&self) -> Result<Network> {
        match self.network.as_str() {
            "ring" => Network::ring_lattice(self.n, self.k, self.weight),
            "star" => Network::star(self.n, self.weight),
            "path" => Network::path(self.n, self.weight),
            "edgeless" => Ok(Network::edgeless(self.n)),
            "file" => Network::load_edge_list(self.network_file.as_ref().expect("validated")),
            other => Err(Error::Config(format!(
                "unknown network generator {other:?}; use ring, star, path, edgeless or file"
            ))),
        }
    }

    pub fn build_game(&self) -> Result<LqGame> {
        let net = self.build_network()?;
        let n = net.n();
        let b = match &self.b {
            BenefitSpec::Uniform(v) => DVector::from_element(n, *v),
            BenefitSpec::PerPlayer(v) => {
                if v.len() != n {
                    return Err(Error::Config(format!(
                        "b has {} entries for {n} players",
                        v.len()
                    )));
                }
                DVector::from_column_slice(v)
            }
        };
        LqGame::new(net, b, ActionBox::uniform(n, self.box_lo, self.box_hi)?)
    }
}

/// A validated experiment: game, original equilibrium and resolved noises.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub game: LqGame,
    pub x_star: DVector<f64>,
    pub l_m: f64,
    pub noises: Vec<(String, NoiseParams)>,
    pub config_hash: String,
}

impl Setup {
    /// Fails if the game is not strongly monotone or its equilibrium is not
    /// interior.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let game = config.build_game()?;
        let ne = solve_lq_ne(&game)?;
        if !ne.interior {
            return Err(Error::NotInterior);
        }
        let p = game.network().group_factor();
        let noises = config
            .noise
            .iter()
            .map(|c| Ok((c.label.clone(), c.resolve(p)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&config)?);
        let mut edges = Vec::new();
        game.network().write_edge_list(&mut edges)?;
        hasher.update(&edges);
        let config_hash = hasher.finalize().iter().fold(String::new(), |mut s, byte| {
            let _ = write!(s, "{byte:02x}");
            s
        });
        Ok(Setup {
            l_m: game.monotonicity_constant(),
            x_star: ne.x_star,
            config,
            game,
            noises,
            config_hash,
        })
    }

    pub fn seeds(&self, executions: usize) -> Vec<u64> {
        (0..executions as u64)
            .map(|k| self.config.base_seed.wrapping_add(k))
            .collect()
    }

    /// `# key: value` lines identifying the artifact.
    pub fn header(&self, command: &str, executions: usize, notes: &[String]) -> String {
        let mut h = format!("# llqfp {command} {CSV_FORMAT}\n");
        let _ = writeln!(h, "# version: {VERSION}");
        let _ = writeln!(h, "# generator: {GENERATOR_ID}");
        let _ = writeln!(h, "# config_sha256: {}", self.config_hash);
        let _ = writeln!(h, "# base_seed: {}", self.config.base_seed);
        let _ = writeln!(h, "# executions: {executions}");
        for note in notes {
            let _ = writeln!(h, "# note: {note}");
        }
        h
    }

    pub fn metadata(&self, command: &str, executions: usize) -> Metadata {
        Metadata {
            command: command.to_string(),
            format: CSV_FORMAT.to_string(),
            version: VERSION.to_string(),
            generator: GENERATOR_ID.to_string(),
            config_sha256: self.config_hash.clone(),
            base_seed: self.config.base_seed,
            executions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub command: String,
    pub format: String,
    pub version: String,
    pub generator: String,
    pub config_sha256: String,
    pub base_seed: u64,
    pub executions: usize,
}

/// Outcome of one perturbed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub seed: u64,
    pub x_hat: DVector<f64>,
    pub distance: f64,
    pub gamma_realized: f64,
    pub gamma_frobenius: f64,
    /// Original payoffs `f_i(x̂*)`.
    pub payoffs: Vec<f64>,
}

/// Runs one draw and solve per seed, in parallel on the current rayon pool.
pub fn run_executions(
    setup: &Setup,
    params: &NoiseParams,
    seeds: &[u64],
) -> Result<Vec<Execution>> {
    let mut runs = seeds
        .par_iter()
        .map(|&seed| {
            let draw = PerturbationDraw::draw(setup.game.network(), params, seed)?;
            let ne = solve_perturbed_lq_ne(&setup.game, &draw)?;
            if !ne.interior {
                return Err(Error::NotInterior);
            }
            let x_hat = ne.x_star;
            let payoffs = (0..x_hat.len())
                .map(|i| setup.game.payoff(i, &x_hat))
                .collect::<Result<Vec<_>>>()?;
            Ok(Execution {
                seed,
                distance: (&setup.x_star - &x_hat).norm(),
                gamma_realized: gamma_realized(&draw, &setup.x_star, setup.l_m)?,
                gamma_frobenius: gamma_realized_frobenius(&draw, &setup.x_star, setup.l_m)?,
                payoffs,
                x_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

fn csv_text<T: Serialize>(header: &str, rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!(
        "{header}{}",
        String::from_utf8(body).expect("csv output is utf-8")
    ))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp1Row {
    pub config: String,
    pub seed: u64,
    pub distance: f64,
    pub gamma_realized: f64,
    pub gamma_worst: f64,
    pub gamma_worst_tight: f64,
    pub gamma_frobenius: f64,
    pub within_gamma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp1Summary {
    pub config: String,
    pub a: f64,
    pub lambda: f64,
    pub runs: usize,
    /// Runs with `‖x* − x̂*‖ > γ_realized`.
    pub violations: usize,
    /// Runs with `γ_realized > γ_worst`.
    pub worst_bound_violations: usize,
    pub median_distance: f64,
    pub max_distance: f64,
    pub gamma_worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp1Report {
    pub metadata: Metadata,
    pub summary: Vec<Exp1Summary>,
    #[serde(skip)]
    pub rows: Vec<Exp1Row>,
}

impl Exp1Report {
    pub fn total_violations(&self) -> usize {
        self.summary
            .iter()
            .map(|s| s.violations + s.worst_bound_violations)
            .sum()
    }
}

/// Distances between the original and perturbed equilibria against the
/// realized and worst-case accuracy bounds.
pub fn experiment1(setup: &Setup) -> Result<Exp1Report> {
    let executions = setup.config.executions;
    let seeds = setup.seeds(executions);
    let x_norm = setup.x_star.norm();
    let net = setup.game.network();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (label, params) in &setup.noises {
        let worst = gamma_worst_case(net, params.a(), x_norm, setup.l_m)?;
        let tight = gamma_worst_case_tight(net, params.a(), x_norm, setup.l_m)?;
        let runs = run_executions(setup, params, &seeds)?;
        let mut distances: Vec<f64> = runs.iter().map(|r| r.distance).collect();
        summary.push(Exp1Summary {
            config: label.clone(),
            a: params.a(),
            lambda: params.lambda(),
            runs: runs.len(),
            violations: runs
                .iter()
                .filter(|r| r.distance > r.gamma_realized)
                .count(),
            worst_bound_violations: runs.iter().filter(|r| r.gamma_realized > worst).count(),
            max_distance: distances.iter().copied().fold(0.0, f64::max),
            median_distance: median(&mut distances),
            gamma_worst: worst,
        });
        rows.extend(runs.into_iter().map(|r| Exp1Row {
            config: label.clone(),
            seed: r.seed,
            within_gamma: r.distance <= r.gamma_realized,
            distance: r.distance,
            gamma_realized: r.gamma_realized,
            gamma_worst: worst,
            gamma_worst_tight: tight,
            gamma_frobenius: r.gamma_frobenius,
        }));
    }
    Ok(Exp1Report {
        metadata: setup.metadata("exp1", executions),
        summary,
        rows,
    })
}

pub fn exp1_csv(setup: &Setup, report: &Exp1Report) -> Result<String> {
    csv_text(
        &setup.header("exp1", report.metadata.executions, &[]),
        &report.rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub config: String,
    pub player: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub contains_x_star: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub config: String,
    pub player: usize,
    pub x_star: f64,
    pub mean_x_hat: f64,
    /// Mean of `x̂*_i − x*_i`.
    pub bias: f64,
    pub std_x_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp2Report {
    pub metadata: Metadata,
    pub bias: Vec<BiasRow>,
    #[serde(skip)]
    pub histogram: Vec<HistogramBin>,
}

impl Exp2Report {
    pub fn bias_for(&self, config: &str) -> Vec<f64> {
        self.bias
            .iter()
            .filter(|r| r.config == config)
            .map(|r| r.bias)
            .collect()
    }
}

/// Equal-width bins over the sample and `center`. A range narrower than
/// `1e-6 (1 + |center|)` is widened so that `center` sits mid-bin.
fn histogram(values: &[f64], center: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let mut lo = values.iter().copied().fold(center, f64::min);
    let mut hi = values.iter().copied().fold(center, f64::max);
    let floor = 1e-6 * (1.0 + center.abs());
    if hi - lo < floor {
        let w = floor / bins as f64;
        lo = center - ((bins / 2) as f64 + 0.5) * w;
        hi = lo + bins as f64 * w;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    (0..bins)
        .map(|k| {
            let a = lo + k as f64 * width;
            let b = if k + 1 == bins {
                hi
            } else {
                lo + (k + 1) as f64 * width
            };
            (a, b, counts[k])
        })
        .collect()
}

/// Per-player distribution of the perturbed equilibrium and its bias.
pub fn experiment2(setup: &Setup) -> Result<Exp2Report> {
    let executions = setup.config.executions;
    let seeds = setup.seeds(executions);
    let n = setup.x_star.len();
    let bins = setup.config.bins;
    let mut bias = Vec::new();
    let mut hist = Vec::new();
    for (label, params) in &setup.noises {
        let runs = run_executions(setup, params, &seeds)?;
        for i in 0..n {
            let values: Vec<f64> = runs.iter().map(|r| r.x_hat[i]).collect();
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let xs = setup.x_star[i];
            bias.push(BiasRow {
                config: label.clone(),
                player: i + 1,
                x_star: xs,
                mean_x_hat: mean,
                bias: values.iter().map(|v| v - xs).sum::<f64>() / m,
                std_x_hat: var.sqrt(),
            });
            let bins_i = histogram(&values, xs, bins);
            let last = bins_i.len() - 1;
            hist.extend(
                bins_i
                    .into_iter()
                    .enumerate()
                    .map(|(k, (lo, hi, count))| HistogramBin {
                        config: label.clone(),
                        player: i + 1,
                        bin_lo: lo,
                        bin_hi: hi,
                        count,
                        contains_x_star: lo <= xs && (xs < hi || (k == last && xs <= hi)),
                    }),
            );
        }
    }
    Ok(Exp2Report {
        metadata: setup.metadata("exp2", executions),
        bias,
        histogram: hist,
    })
}

pub fn exp2_histogram_csv(setup: &Setup, report: &Exp2Report) -> Result<String> {
    csv_text(
        &setup.header("exp2", report.metadata.executions, &[]),
        &report.histogram,
    )
}

pub fn exp2_bias_csv(setup: &Setup, report: &Exp2Report) -> Result<String> {
    csv_text(
        &setup.header("exp2", report.metadata.executions, &[]),
        &report.bias,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffRow {
    pub player: usize,
    pub payoff_at_x_star: f64,
    /// Mean of `f_i(x̂*)` per configuration, in config order.
    pub mean_payoff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp3Report {
    pub metadata: Metadata,
    pub configs: Vec<String>,
    pub rows: Vec<PayoffRow>,
}

impl Exp3Report {
    pub fn mean_payoffs(&self, config: &str) -> Option<Vec<f64>> {
        let c = self.configs.iter().position(|l| l == config)?;
        Some(self.rows.iter().map(|r| r.mean_payoff[c]).collect())
    }
}

/// Original payoffs at the original and perturbed equilibria.
pub fn experiment3(setup: &Setup) -> Result<Exp3Report> {
    let executions = setup.config.executions;
    let seeds = setup.seeds(executions);
    let n = setup.x_star.len();
    let mut rows: Vec<PayoffRow> = (0..n)
        .map(|i| {
            Ok(PayoffRow {
                player: i + 1,
                payoff_at_x_star: setup.game.payoff(i, &setup.x_star)?,
                mean_payoff: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    for (_, params) in &setup.noises {
        let runs = run_executions(setup, params, &seeds)?;
        for (i, row) in rows.iter_mut().enumerate() {
            row.mean_payoff
                .push(runs.iter().map(|r| r.payoffs[i]).sum::<f64>() / runs.len() as f64);
        }
    }
    Ok(Exp3Report {
        metadata: setup.metadata("exp3", executions),
        configs: setup.noises.iter().map(|(l, _)| l.clone()).collect(),
        rows,
    })
}

pub fn exp3_csv(setup: &Setup, report: &Exp3Report) -> String {
    let mut out = setup.header("exp3", report.metadata.executions, &[]);
    out.push_str("player,payoff_at_x_star");
    for c in &report.configs {
        let _ = write!(out, ",mean_payoff_{c}");
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(out, "{},{}", r.player, r.payoff_at_x_star);
        for v in &r.mean_payoff {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub lambda: f64,
    pub a: f64,
    /// Mean of `‖x* − x̂*‖ / ‖x*‖`.
    pub mean_relative_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub metadata: Metadata,
    pub note: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_NOTE: &str = "delta = 0: lambda = mu/epsilon and a = max(mu, cap*lambda) replace the planner, which needs delta > 0";

/// Relative accuracy against `ε` at `δ = 0`.
pub fn sweep(setup: &Setup) -> Result<SweepReport> {
    let s = &setup.config.sweep;
    let seeds = setup.seeds(s.executions);
    let x_norm = setup.x_star.norm();
    let rows = s
        .epsilons
        .iter()
        .map(|&epsilon| {
            let lambda = s.mu / epsilon;
            let a = s.mu.max(s.cap * lambda);
            let runs = run_executions(setup, &NoiseParams::new(a, lambda)?, &seeds)?;
            Ok(SweepRow {
                epsilon,
                lambda,
                a,
                mean_relative_distance: runs.iter().map(|r| r.distance / x_norm).sum::<f64>()
                    / runs.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        metadata: setup.metadata("sweep", s.executions),
        note: SWEEP_NOTE.to_string(),
        rows,
    })
}

pub fn sweep_csv(setup: &Setup, report: &SweepReport) -> Result<String> {
    let notes = [
        SWEEP_NOTE.to_string(),
        format!(
            "mu = {}, cap = {}",
            setup.config.sweep.mu, setup.config.sweep.cap
        ),
    ];
    csv_text(
        &setup.header("sweep", report.metadata.executions, &notes),
        &report.rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(executions: usize) -> Setup {
        let config = ExperimentConfig {
            executions,
            ..ExperimentConfig::default()
        };
        Setup::new(config).unwrap()
    }

    #[test]
    fn default_config_is_the_ring_setup() {
        let s = small(1);
        assert_eq!(s.game.network().n(), 10);
        assert!((s.l_m - 0.68).abs() < 1e-12);
        for v in s.x_star.iter() {
            assert!((v - 14.705_882_352_941_176).abs() < 1e-9);
        }
        assert_eq!(s.noises[0].1, NoiseParams::new(0.034, 0.013).unwrap());
        assert_eq!(s.config_hash.len(), 64);
    }

    #[test]
    fn toml_parsing_and_rejection() {
        let c = ExperimentConfig::from_toml_str(
            "executions = 3\nb = [1,2,3]\nn = 3\nnetwork = \"path\"\n",
        )
        .unwrap();
        assert_eq!(c.executions, 3);
        assert_eq!(c.b, BenefitSpec::PerPlayer(vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            ExperimentConfig::from_toml_str("colour = 1"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml_str("executions = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("[[noise]]\nlabel = \"x\"\na = 0.1\n").is_ok());
        let both = "[[noise]]\nlabel = \"x\"\na = 0.1\nlambda = 0.1\nepsilon = 1.0\ndelta = 0.1\nmu = 0.01\n";
        let c = ExperimentConfig::from_toml_str(both).unwrap();
        assert!(c.noise[0].resolve(5).is_err());
        let planned = NoiseConfig::budget("p", std::f64::consts::LN_2, 0.05, 0.01)
            .resolve(5)
            .unwrap();
        assert!((planned.lambda() - 0.013_432_907_447_308_37).abs() < 1e-15);
    }

    #[test]
    fn non_interior_equilibrium_aborts() {
        let config = ExperimentConfig {
            box_hi: 12.0,
            ..ExperimentConfig::default()
        };
        assert!(matches!(Setup::new(config), Err(Error::NotInterior)));
    }

    #[test]
    fn non_monotone_game_aborts() {
        let config = ExperimentConfig {
            weight: 0.3,
            ..ExperimentConfig::default()
        };
        assert!(matches!(Setup::new(config), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn executions_are_sorted_and_order_independent() {
        let s = small(8);
        let p = s.noises[0].1;
        let forward = run_executions(&s, &p, &s.seeds(8)).unwrap();
        let mut rev = s.seeds(8);
        rev.reverse();
        assert_eq!(forward, run_executions(&s, &p, &rev).unwrap());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        assert_eq!(
            forward,
            pool.install(|| run_executions(&s, &p, &s.seeds(8)))
                .unwrap()
        );
    }

    #[test]
    fn experiment1_small_run() {
        let s = small(20);
        let r = experiment1(&s).unwrap();
        assert_eq!(r.rows.len(), 60);
        assert_eq!(r.total_violations(), 0);
        let csv = exp1_csv(&s, &r).unwrap();
        assert!(csv.starts_with("# llqfp exp1 csv/1\n"));
        assert!(csv.contains("\nconfig,seed,distance,gamma_realized,gamma_worst,gamma_worst_tight,gamma_frobenius,within_gamma\n"));
        assert_eq!(csv, exp1_csv(&s, &experiment1(&s).unwrap()).unwrap());
    }

    #[test]
    fn vanishing_noise_concentrates_on_x_star() {
        let config = ExperimentConfig {
            executions: 10,
            noise: vec![NoiseConfig::explicit("tiny", 1e-13, 1e-14)],
            ..ExperimentConfig::default()
        };
        let s = Setup::new(config).unwrap();
        let r = experiment2(&s).unwrap();
        for b in r.histogram.iter().filter(|b| b.count > 0) {
            assert!(b.contains_x_star && b.count == 10, "{b:?}");
        }
        let p = experiment3(&s).unwrap();
        for row in &p.rows {
            assert!((row.mean_payoff[0] - row.payoff_at_x_star).abs() < 1e-9);
        }
    }

    #[test]
    fn histogram_covers_every_sample() {
        let h = histogram(&[1.0, 2.0, 3.0, 4.0], 2.5, 3);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 4);
        assert_eq!(h[0].0, 1.0);
        assert_eq!(h[2].1, 4.0);
    }

    #[test]
    fn sweep_header_records_the_delta_zero_substitution() {
        let mut config = ExperimentConfig::default();
        config.sweep.executions = 5;
        config.sweep.epsilons = vec![0.5, 5.0];
        let s = Setup::new(config).unwrap();
        let r = sweep(&s).unwrap();
        assert!(r.rows[0].mean_relative_distance > r.rows[1].mean_relative_distance);
        assert_eq!(r.rows[1].a, 0.01);
        let csv = sweep_csv(&s, &r).unwrap();
        assert!(csv.contains("# note: delta = 0"));
    }
}
