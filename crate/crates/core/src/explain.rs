//! Shapley-style attribution of a scalar anomaly score to window cells.
//!
//! Two routes are provided. [`exact_shapley`] enumerates every coalition of a
//! small cooperative game and applies the classical weighted-marginal formula;
//! it is the oracle. [`gradient_shap`] is the estimator used in production:
//! it averages `(x - b) * grad s(b + a (x - b))` over randomly drawn baselines
//! b and interpolation points a, which converges to the same attributions for
//! scores that are well approximated by their multilinear extension.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Window;

/// Enumeration bound: games beyond 20 players are refused.
pub const MAX_EXACT_PLAYERS: usize = 20;

/// Default number of baseline windows drawn from normal training data.
pub const DEFAULT_BASELINE_COUNT: usize = 100;

/// Default Monte Carlo sample count per explanation.
pub const DEFAULT_SAMPLE_COUNT: usize = 200;

/// A scalar score with an exact gradient, the interface the sampler needs.
pub trait DifferentiableScore {
    fn score(&self, x: &ArrayView2<f64>) -> Result<f64>;
    fn gradient(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Gradients for many points; implementors with a batched evaluation
    /// path override this.
    fn gradient_batch(&self, xs: &[ArrayView2<f64>]) -> Result<Vec<Array2<f64>>> {
        xs.iter().map(|x| self.gradient(x)).collect()
    }
}

/// Score backed by a pair of closures; handy for tests and fixtures.
pub struct FnScore<F, G>
where
    F: Fn(&ArrayView2<f64>) -> f64,
    G: Fn(&ArrayView2<f64>) -> Array2<f64>,
{
    score_fn: F,
    gradient_fn: G,
}

impl<F, G> FnScore<F, G>
where
    F: Fn(&ArrayView2<f64>) -> f64,
    G: Fn(&ArrayView2<f64>) -> Array2<f64>,
{
    pub fn new(score_fn: F, gradient_fn: G) -> Self {
        FnScore { score_fn, gradient_fn }
    }
}

impl<F, G> DifferentiableScore for FnScore<F, G>
where
    F: Fn(&ArrayView2<f64>) -> f64,
    G: Fn(&ArrayView2<f64>) -> Array2<f64>,
{
    fn score(&self, x: &ArrayView2<f64>) -> Result<f64> {
        Ok((self.score_fn)(x))
    }

    fn gradient(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok((self.gradient_fn)(x))
    }
}

/// A cooperative game: a value for every coalition of `players` players,
/// indexed by bitmask (bit k set means player k is present).
pub struct ShapleyGame {
    players: usize,
    values: Vec<f64>,
}

impl ShapleyGame {
    /// Tabulate a game from a coalition value function.
    pub fn from_fn(players: usize, mut value: impl FnMut(u32) -> f64) -> Result<ShapleyGame> {
        if players == 0 || players > MAX_EXACT_PLAYERS {
            return Err(Error::InvalidArgument(format!(
                "exact Shapley supports 1..={MAX_EXACT_PLAYERS} players, got {players}"
            )));
        }
        let values = (0..1u32 << players).map(&mut value).collect();
        Ok(ShapleyGame { players, values })
    }

    pub fn players(&self) -> usize {
        self.players
    }

    /// v(S) for the coalition encoded by `mask`.
    pub fn value(&self, mask: u32) -> f64 {
        self.values[mask as usize]
    }

    pub fn grand_coalition_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn empty_coalition_value(&self) -> f64 {
        self.values[0]
    }
}

/// Exact Shapley values: for each player k,
/// phi_k = sum over S not containing k of
///         |S|! (M - |S| - 1)! / M! * (v(S + k) - v(S)).
pub fn exact_shapley(game: &ShapleyGame) -> Result<Vec<f64>> {
    let m = game.players();
    if m > MAX_EXACT_PLAYERS {
        return Err(Error::InvalidArgument(format!(
            "exact Shapley refuses games beyond {MAX_EXACT_PLAYERS} players"
        )));
    }
    // s! (M-1-s)! / M! = 1 / (M * C(M-1, s)); the binomials stay exact in f64.
    let mut binom = vec![1.0f64; m];
    for s in 1..m {
        binom[s] = binom[s - 1] * (m - s) as f64 / s as f64;
    }
    let weights: Vec<f64> = binom.iter().map(|c| 1.0 / (m as f64 * c)).collect();

    let mut phi = vec![0.0; m];
    let full = 1u32 << m;
    for (k, phi_k) in phi.iter_mut().enumerate() {
        let bit = 1u32 << k;
        for mask in 0..full {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *phi_k += weights[s] * (game.value(mask | bit) - game.value(mask));
        }
    }
    Ok(phi)
}

/// Baseline windows drawn from training data.
#[derive(Debug, Clone)]
pub struct BaselineSet {
    windows: Vec<Array2<f64>>,
}

impl BaselineSet {
    pub fn new(windows: Vec<Array2<f64>>) -> Result<BaselineSet> {
        let Some(first) = windows.first() else {
            return Err(Error::EmptyInput("baseline set needs at least one window".into()));
        };
        let shape = first.raw_dim();
        if windows.iter().any(|w| w.raw_dim() != shape) {
            return Err(Error::shape(
                format!("{shape:?} for every baseline"),
                "mixed shapes".to_string(),
            ));
        }
        Ok(BaselineSet { windows })
    }

    /// Sample up to `count` baselines uniformly (seeded) from a window pool.
    /// When the pool is no larger than `count`, every window is taken.
    pub fn sample_from_windows(pool: &[Window], count: usize, seed: u64) -> Result<BaselineSet> {
        if pool.is_empty() || count == 0 {
            return Err(Error::EmptyInput("baseline sampling needs windows and count >= 1".into()));
        }
        if pool.len() <= count {
            return BaselineSet::new(pool.iter().map(|w| w.values.clone()).collect());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        // Partial Fisher-Yates: the first `count` entries become the sample.
        for i in 0..count {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        BaselineSet::new(indices[..count].iter().map(|&i| pool[i].values.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[Array2<f64>] {
        &self.windows
    }
}

/// Per-cell attributions for one explained window.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    /// l x m, same orientation as the window.
    pub values: Array2<f64>,
    /// Mean score over the baseline set (the phi_0 base value).
    pub baseline_expectation: f64,
    /// Score of the explained window.
    pub explained_score: f64,
}

impl AttributionMatrix {
    /// Completeness residual: sum of attributions minus the score gap.
    pub fn completeness_gap(&self) -> f64 {
        self.values.sum() - (self.explained_score - self.baseline_expectation)
    }
}

/// Expected-gradients estimator. For each of `n_samples` draws a baseline b
/// uniformly from the set and a in the open interval (0, 1), accumulating
/// (x - b) * grad s(b + a (x - b)); the attribution is the sample mean.
/// Deterministic for a fixed seed.
pub fn gradient_shap(
    score: &dyn DifferentiableScore,
    x: &ArrayView2<f64>,
    baselines: &BaselineSet,
    n_samples: usize,
    seed: u64,
) -> Result<AttributionMatrix> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let shape = baselines.windows[0].raw_dim();
    if x.raw_dim() != shape {
        return Err(Error::shape(format!("{shape:?}"), format!("{:?}", x.raw_dim())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(usize, f64)> = (0..n_samples)
        .map(|_| {
            let b = rng.random_range(0..baselines.len());
            let alpha = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u; // random() is in [0, 1): only 0 needs rejecting
                }
            };
            (b, alpha)
        })
        .collect();

    let mut acc = Array2::zeros(x.raw_dim());
    for chunk in draws.chunks(64) {
        let points: Vec<Array2<f64>> = chunk
            .iter()
            .map(|&(b_idx, alpha)| {
                let b = &baselines.windows[b_idx];
                b + &((x - b) * alpha)
            })
            .collect();
        let views: Vec<ArrayView2<f64>> = points.iter().map(|p| p.view()).collect();
        let grads = score.gradient_batch(&views)?;
        for (&(b_idx, _), grad) in chunk.iter().zip(&grads) {
            let diff = x - &baselines.windows[b_idx];
            acc += &(&diff * grad);
        }
    }
    acc /= n_samples as f64;

    let mut baseline_expectation = 0.0;
    for b in &baselines.windows {
        baseline_expectation += score.score(&b.view())?;
    }
    baseline_expectation /= baselines.len() as f64;

    Ok(AttributionMatrix {
        values: acc,
        baseline_expectation,
        explained_score: score.score(x)?,
    })
}

/// Build the baseline-replacement game for a window: each cell is a player,
/// and v(S) is the mean score over baselines of x with the cells outside S
/// replaced by the baseline's cells. Cells are numbered row-major.
pub fn make_game_from_model(
    score: &dyn DifferentiableScore,
    x: &ArrayView2<f64>,
    baselines: &BaselineSet,
) -> Result<ShapleyGame> {
    let cells = x.len();
    if cells > MAX_EXACT_PLAYERS {
        return Err(Error::InvalidArgument(format!(
            "window has {cells} cells; the exact game supports at most {MAX_EXACT_PLAYERS}"
        )));
    }
    let shape = baselines.windows[0].raw_dim();
    if x.raw_dim() != shape {
        return Err(Error::shape(format!("{shape:?}"), format!("{:?}", x.raw_dim())));
    }
    let m = x.ncols();
    let mut values = Vec::with_capacity(1 << cells);
    for mask in 0..1u32 << cells {
        let mut total = 0.0;
        for b in &baselines.windows {
            let mut composed = b.clone();
            for cell in 0..cells {
                if mask & (1 << cell) != 0 {
                    let (t, k) = (cell / m, cell % m);
                    composed[[t, k]] = x[[t, k]];
                }
            }
            total += score.score(&composed.view())?;
        }
        values.push(total / baselines.len() as f64);
    }
    Ok(ShapleyGame {
        players: cells,
        values,
    })
}

/// Per-feature aggregation of an attribution matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAttribution {
    /// Column sums, keeping sign.
    pub signed: Vec<f64>,
    /// Column means of absolute values.
    pub mean_abs: Vec<f64>,
    /// Feature indices sorted by descending mean_abs, ties by index.
    pub ranking: Vec<usize>,
}

/// Collapse an l x m attribution matrix to per-feature summaries:
/// signed[k] = sum_t attr[t][k], mean_abs[k] = (1/l) sum_t |attr[t][k]|.
pub fn aggregate_per_feature(attr: &AttributionMatrix) -> FeatureAttribution {
    let l = attr.values.nrows() as f64;
    let m = attr.values.ncols();
    let mut signed = vec![0.0; m];
    let mut mean_abs = vec![0.0; m];
    for row in attr.values.rows() {
        for (k, &v) in row.iter().enumerate() {
            signed[k] += v;
            mean_abs[k] += v.abs();
        }
    }
    for v in mean_abs.iter_mut() {
        *v /= l;
    }
    let mut ranking: Vec<usize> = (0..m).collect();
    ranking.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    FeatureAttribution {
        signed,
        mean_abs,
        ranking,
    }
}
