//! Quantum-walk-inspired population optimizer over [`BandParams`].
//!
//! Each candidate carries a complex amplitude. One iteration is:
//!
//! 1. evaluate every candidate's cost (in parallel, gathered in index order);
//! 2. rotate each amplitude's phase by `gamma` times its min-max normalized cost,
//!    which leaves magnitudes untouched;
//! 3. mix amplitudes with Gaussian kernel weights over normalized parameter
//!    distance, then renormalize to unit total probability. Coherent phases
//!    reinforce and divergent phases cancel, so this is where selection
//!    probabilities change;
//! 4. draw parents with probability `|a|^2`, apply clamped Gaussian mutation,
//!    put the best-seen parameters back unmutated as child 0, and reset
//!    amplitudes to a uniform zero-phase superposition.
//!
//! All random draws come from one ChaCha stream consumed on the calling thread,
//! so results do not depend on how evaluation is scheduled.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::image_io::ImagePlane;
use crate::quant::{build_table, BandParams, QuantTable, PARAM_DIM, PARAM_MAX, PARAM_MIN};
use crate::rd::{rd_terms, DEFAULT_LAMBDA};

/// Minimum best-cost decrease that resets the stall counter.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QwioConfig {
    pub population_n: usize,
    pub max_iters: usize,
    pub stall_limit: usize,
    /// Phase rotation strength.
    pub gamma: f64,
    pub epsilon: f64,
    /// Kernel width in unit-normalized parameter space.
    pub kernel_bandwidth: f64,
    /// Mutation standard deviation as a fraction of each parameter's range.
    pub mutation_sigma: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for QwioConfig {
    fn default() -> Self {
        QwioConfig {
            population_n: 32,
            max_iters: 100,
            stall_limit: 15,
            gamma: std::f64::consts::FRAC_PI_2,
            epsilon: 1e-12,
            kernel_bandwidth: 0.5,
            mutation_sigma: 0.05,
            lambda: DEFAULT_LAMBDA,
            seed: 42,
        }
    }
}

impl QwioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.population_n < 2 {
            return bad(format!("population must be >= 2, got {}", self.population_n));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if self.stall_limit == 0 {
            return bad("stall_limit must be >= 1".into());
        }
        for (name, v) in [("gamma", self.gamma), ("epsilon", self.epsilon), ("kernel_bandwidth", self.kernel_bandwidth)]
        {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.mutation_sigma.is_finite() && self.mutation_sigma >= 0.0) {
            return bad(format!("mutation_sigma must be finite and >= 0, got {}", self.mutation_sigma));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    /// One-line `key=value` rendering, embedded in persisted outputs.
    pub fn describe(&self) -> String {
        format!(
            "seed={} lambda={} population={} iters={} stall={} gamma={} epsilon={} bandwidth={} sigma={}",
            self.seed,
            self.lambda,
            self.population_n,
            self.max_iters,
            self.stall_limit,
            self.gamma,
            self.epsilon,
            self.kernel_bandwidth,
            self.mutation_sigma
        )
    }
}

/// Cost function over the search space.
pub trait Objective: Sync {
    fn cost(&self, params: &BandParams) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&BandParams) -> f64 + Sync,
{
    fn cost(&self, params: &BandParams) -> Result<f64> {
        Ok(self(params))
    }
}

/// Mean rate-distortion cost of `build_table(params, base)` over a set of images.
#[derive(Debug, Clone)]
pub struct RdObjective {
    images: Vec<ImagePlane>,
    base: QuantTable,
    lambda: f64,
}

impl RdObjective {
    pub fn new(images: Vec<ImagePlane>, base: QuantTable, lambda: f64) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyInput("no training images"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda {lambda} must be finite and >= 0")));
        }
        Ok(RdObjective { images, base, lambda })
    }

    pub fn images(&self) -> &[ImagePlane] {
        &self.images
    }

    pub fn table_cost(&self, table: &QuantTable) -> Result<f64> {
        let mut sum = 0.0;
        for img in &self.images {
            sum += rd_terms(img, table, self.lambda)?.cost_j;
        }
        Ok(sum / self.images.len() as f64)
    }
}

impl Objective for RdObjective {
    fn cost(&self, params: &BandParams) -> Result<f64> {
        self.table_cost(&build_table(params, &self.base))
    }
}

/// Squared distance to a fixed point; a smooth reference problem for the search.
#[derive(Debug, Clone, Copy)]
pub struct SphereObjective {
    pub optimum: [f64; PARAM_DIM],
}

impl Objective for SphereObjective {
    fn cost(&self, params: &BandParams) -> Result<f64> {
        let v = params.to_vector();
        Ok(v.iter().zip(&self.optimum).map(|(a, b)| (a - b) * (a - b)).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub params: BandParams,
    pub amplitude: Complex64,
    /// `None` until evaluated.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Best {
    pub params: BandParams,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct AmplitudePopulation {
    pub candidates: Vec<Candidate>,
    pub iteration: usize,
    pub best: Option<Best>,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl AmplitudePopulation {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.candidates.iter().map(|c| c.amplitude.norm_sqr()).sum()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.amplitude.norm()).collect()
    }

    pub fn mean_cost(&self) -> Option<f64> {
        let mut sum = 0.0;
        for c in &self.candidates {
            sum += c.cost?;
        }
        Some(sum / self.candidates.len() as f64)
    }

    fn reset_amplitudes(&mut self) {
        let a = Complex64::new(1.0 / (self.candidates.len() as f64).sqrt(), 0.0);
        for c in &mut self.candidates {
            c.amplitude = a;
        }
    }
}

fn log_uniform(rng: &mut impl Rng) -> f64 {
    let (lo, hi) = (PARAM_MIN.ln(), PARAM_MAX.ln());
    rng.random_range(lo..hi).exp().clamp(PARAM_MIN, PARAM_MAX)
}

/// Identity parameters first, the rest log-uniform over the bounds; uniform amplitudes.
pub fn init_population(config: &QwioConfig) -> Result<AmplitudePopulation> {
    config.validate()?;
    let n = config.population_n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut candidates = Vec::with_capacity(n);
    candidates.push(BandParams::IDENTITY);
    for _ in 1..n {
        let mut v = [0.0; PARAM_DIM];
        for x in v.iter_mut() {
            *x = log_uniform(&mut rng);
        }
        candidates.push(BandParams::from_vector_clamped(&v));
    }
    let mut pop = AmplitudePopulation {
        candidates: candidates
            .into_iter()
            .map(|params| Candidate { params, amplitude: Complex64::new(0.0, 0.0), cost: None })
            .collect(),
        iteration: 0,
        best: None,
        rng_seed: config.seed,
        rng,
    };
    pop.reset_amplitudes();
    Ok(pop)
}

/// Scores every candidate and updates the best snapshot on strict improvement.
pub fn evaluate_all(pop: &mut AmplitudePopulation, objective: &dyn Objective) -> Result<()> {
    evaluate_all_with(pop, objective, Parallelism::default())
}

pub fn evaluate_all_with(pop: &mut AmplitudePopulation, objective: &dyn Objective, mode: Parallelism) -> Result<()> {
    let params: Vec<BandParams> = pop.candidates.iter().map(|c| c.params).collect();
    let costs = exec::map(mode, &params, |p| objective.cost(p));
    for (cand, cost) in pop.candidates.iter_mut().zip(costs) {
        let cost = cost?;
        if cost.is_nan() {
            return Err(Error::InvalidConfig("objective returned NaN".into()));
        }
        cand.cost = Some(cost);
    }
    for cand in &pop.candidates {
        let cost = cand.cost.expect("set above");
        if pop.best.is_none_or(|b| cost < b.cost) {
            pop.best = Some(Best { params: cand.params, cost });
        }
    }
    Ok(())
}

/// Multiplies each amplitude by `exp(-i * gamma * (J - min J) / (max J - min J + epsilon))`.
pub fn phase_reinforce(pop: &mut AmplitudePopulation, gamma: f64, epsilon: f64) -> Result<()> {
    let mut costs = Vec::with_capacity(pop.len());
    for (idx, c) in pop.candidates.iter().enumerate() {
        costs.push(c.cost.ok_or(Error::UnevaluatedCandidate(idx))?);
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - min + epsilon;
    for (cand, cost) in pop.candidates.iter_mut().zip(costs) {
        let angle = gamma * (cost - min) / spread;
        if angle != 0.0 {
            cand.amplitude *= Complex64::from_polar(1.0, -angle);
        }
    }
    Ok(())
}

/// Gaussian kernel weights over unit-normalized parameter distance, row-normalized.
pub fn mixing_weights(pop: &AmplitudePopulation, bandwidth: f64) -> Vec<Vec<f64>> {
    let units: Vec<[f64; PARAM_DIM]> = pop.candidates.iter().map(|c| c.params.to_unit()).collect();
    let denom = 2.0 * bandwidth * bandwidth;
    units
        .iter()
        .map(|ui| {
            let mut row: Vec<f64> = units
                .iter()
                .map(|uk| {
                    let d2: f64 = ui.iter().zip(uk).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / denom).exp()
                })
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= sum);
            row
        })
        .collect()
}

/// Replaces each amplitude by the kernel-weighted sum of all amplitudes and
/// renormalizes so that the squared magnitudes sum to one.
pub fn mixing(pop: &mut AmplitudePopulation, bandwidth: f64) -> Result<()> {
    let mixed = mix_unnormalized(pop, bandwidth);
    let total: f64 = mixed.iter().map(|a| a.norm_sqr()).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let scale = 1.0 / total.sqrt();
    for (cand, a) in pop.candidates.iter_mut().zip(mixed) {
        cand.amplitude = a * scale;
    }
    Ok(())
}

/// The kernel-weighted sums before renormalization.
pub fn mix_unnormalized(pop: &AmplitudePopulation, bandwidth: f64) -> Vec<Complex64> {
    let weights = mixing_weights(pop, bandwidth);
    weights
        .iter()
        .map(|row| row.iter().zip(&pop.candidates).fold(Complex64::new(0.0, 0.0), |acc, (w, c)| acc + c.amplitude * *w))
        .collect()
}

/// Draws the next generation from `|a|^2`, mutates, and restores the elite.
pub fn sample_next(pop: &mut AmplitudePopulation, config: &QwioConfig) -> Result<()> {
    let n = pop.len();
    let probs: Vec<f64> = pop.candidates.iter().map(|c| c.amplitude.norm_sqr()).collect();
    let total: f64 = probs.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let dist = WeightedIndex::new(probs.iter().map(|p| p / total)).map_err(|_| Error::DegenerateDistribution)?;
    let parents: Vec<usize> = (0..n).map(|_| dist.sample(&mut pop.rng)).collect();

    let std_dev = config.mutation_sigma * (PARAM_MAX - PARAM_MIN);
    let noise = Normal::new(0.0, std_dev).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut children = Vec::with_capacity(n);
    for (k, &parent) in parents.iter().enumerate() {
        let src = pop.candidates[parent].params;
        let child = match (k, pop.best) {
            (0, Some(best)) => best.params,
            _ => {
                let mut v = src.to_vector();
                for x in v.iter_mut() {
                    *x += noise.sample(&mut pop.rng);
                }
                BandParams::from_vector_clamped(&v)
            }
        };
        children.push(child);
    }
    for (cand, params) in pop.candidates.iter_mut().zip(children) {
        cand.params = params;
        cand.cost = None;
    }
    pop.reset_amplitudes();
    pop.iteration += 1;
    Ok(())
}

/// Where in the loop a normalization point was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationPoint {
    Init,
    AfterMixing,
    AfterSampling,
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_cost: f64,
    pub mean_cost: f64,
}

/// Hooks into the optimization loop; every method defaults to a no-op.
pub trait Observer {
    fn normalized(&mut self, _point: NormalizationPoint, _pop: &AmplitudePopulation) {}
    /// Called after phase reinforcement with the magnitudes from just before it.
    fn phase_applied(&mut self, _magnitudes_before: &[f64], _pop: &AmplitudePopulation) {}
    fn iteration(&mut self, _row: &TraceRow) {}
}

pub struct NoopObserver;

impl Observer for NoopObserver {}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub best: Best,
    pub history: Vec<TraceRow>,
    /// True when the loop stopped on the stall criterion rather than `max_iters`.
    pub converged: bool,
}

pub fn optimize(objective: &dyn Objective, config: &QwioConfig) -> Result<Outcome> {
    optimize_observed(objective, config, Parallelism::default(), &mut NoopObserver)
}

pub fn optimize_observed(
    objective: &dyn Objective,
    config: &QwioConfig,
    mode: Parallelism,
    observer: &mut dyn Observer,
) -> Result<Outcome> {
    let mut pop = init_population(config)?;
    observer.normalized(NormalizationPoint::Init, &pop);
    let mut history = Vec::new();
    let mut stall = 0;
    let mut previous = f64::INFINITY;
    let mut converged = false;

    for it in 0..config.max_iters {
        evaluate_all_with(&mut pop, objective, mode)?;
        let best = pop.best.expect("population evaluated").cost;
        let row = TraceRow { iteration: it, best_cost: best, mean_cost: pop.mean_cost().expect("evaluated") };
        observer.iteration(&row);
        history.push(row);

        if previous - best > IMPROVEMENT_TOL {
            stall = 0;
        } else {
            stall += 1;
        }
        previous = best;
        if stall >= config.stall_limit {
            converged = true;
            break;
        }
        if it + 1 == config.max_iters {
            break;
        }

        let before = pop.magnitudes();
        phase_reinforce(&mut pop, config.gamma, config.epsilon)?;
        observer.phase_applied(&before, &pop);
        mixing(&mut pop, config.kernel_bandwidth)?;
        observer.normalized(NormalizationPoint::AfterMixing, &pop);
        sample_next(&mut pop, config)?;
        observer.normalized(NormalizationPoint::AfterSampling, &pop);
    }

    Ok(Outcome { best: pop.best.expect("at least one evaluation"), history, converged })
}

/// Learns a table for `images` and returns it with seed and lambda recorded.
pub fn optimize_table(
    images: Vec<ImagePlane>,
    base: &QuantTable,
    config: &QwioConfig,
) -> Result<(QuantTable, Outcome)> {
    let objective = RdObjective::new(images, base.clone(), config.lambda)?;
    let outcome = optimize(&objective, config)?;
    let mut table = build_table(&outcome.best.params, base);
    table.seed = Some(config.seed);
    table.lambda = Some(config.lambda);
    Ok((table, outcome))
}

/// CSV rendering of a trace, preceded by a `#` metadata line.
pub fn trace_csv(history: &[TraceRow], config: &QwioConfig) -> String {
    let mut out = format!("# {}\niteration,best_cost,mean_cost\n", config.describe());
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.best_cost, r.mean_cost));
    }
    out
}
