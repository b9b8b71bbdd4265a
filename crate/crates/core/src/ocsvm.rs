//! nu-one-class SVM over residual vectors.
//!
//! Solves the Schölkopf nu-OCSVM dual
//!
//! ```text
//!   min_a  (1/2) a' Q a    s.t.  0 <= a_i <= 1/(nu n),  sum a = 1
//! ```
//!
//! with Q_ij = K(x_i, x_j) for the RBF kernel, using SMO-style pairwise
//! updates with maximal-violating-pair selection. Box and simplex
//! feasibility hold by construction; the stopping rule is the maximal KKT
//! violation falling below the configured tolerance.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Solver configuration. `gamma = None` resolves at fit time to the median
/// heuristic 1/median(||x_i - x_j||^2) over the training residuals (falling
/// back to 1/d when the median distance is zero).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OcsvmConfig {
    /// Upper bound on the training outlier fraction, in (0, 1].
    pub nu: f64,
    /// RBF width; `None` selects the median-distance heuristic.
    pub gamma: Option<f64>,
    /// KKT stopping threshold.
    pub tolerance: f64,
    /// Cap on pairwise updates.
    pub max_iterations: usize,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        OcsvmConfig {
            nu: 0.05,
            gamma: None,
            tolerance: 1e-4,
            max_iterations: 1_000_000,
        }
    }
}

impl OcsvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "nu must be in (0, 1], got {}",
                self.nu
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gamma must be > 0, got {g}"
                )));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fitted model: retained support vectors, their dual coefficients, the
/// offset rho, and the kernel width.
#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmModel {
    /// k x d rows with alpha > 0.
    pub support_vectors: Array2<f64>,
    pub alpha: Array1<f64>,
    pub rho: f64,
    pub gamma: f64,
}

/// Convergence diagnostics from [`fit`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub kkt_violation: f64,
    pub converged: bool,
    pub dual_objective: f64,
    pub support_vector_count: usize,
}

/// RBF kernel exp(-gamma ||x - y||^2), always in (0, 1].
pub fn rbf_kernel(x: &ArrayView1<f64>, y: &ArrayView1<f64>, gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(
            format!("{} dims", x.len()),
            format!("{} dims", y.len()),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
    }
    let mut dist = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        dist += d * d;
    }
    Ok((-gamma * dist).exp())
}

/// 1 / median(||x_i - x_j||^2) over a deterministic subsample of at most 512
/// rows. `None` when every sampled pair coincides.
fn median_heuristic_gamma(data: &ArrayView2<f64>) -> Option<f64> {
    let n = data.nrows();
    let stride = n.div_ceil(512);
    let picks: Vec<usize> = (0..n).step_by(stride).collect();
    let mut distances = Vec::with_capacity(picks.len() * (picks.len() - 1) / 2);
    for (a, &i) in picks.iter().enumerate() {
        for &j in &picks[a + 1..] {
            let mut dist = 0.0;
            for (p, q) in data.row(i).iter().zip(data.row(j).iter()) {
                let d = p - q;
                dist += d * d;
            }
            distances.push(dist);
        }
    }
    if distances.is_empty() {
        return None;
    }
    let mid = distances.len() / 2;
    distances.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite distances"));
    let median = distances[mid];
    (median > 0.0).then(|| 1.0 / median)
}

fn rbf_rows(data: &ArrayView2<f64>, i: usize, j: usize, gamma: f64) -> f64 {
    let (xi, xj) = (data.row(i), data.row(j));
    let mut dist = 0.0;
    for (a, b) in xi.iter().zip(xj.iter()) {
        let d = a - b;
        dist += d * d;
    }
    (-gamma * dist).exp()
}

/// Kernel row provider: a dense Gram matrix for small n, lazy rows with a
/// FIFO cache above that.
enum Kernel<'a> {
    Dense(Array2<f64>),
    Lazy {
        data: ArrayView2<'a, f64>,
        gamma: f64,
        cache: std::cell::RefCell<RowCache>,
    },
}

struct RowCache {
    rows: std::collections::HashMap<usize, Vec<f64>>,
    order: std::collections::VecDeque<usize>,
    capacity: usize,
}

const DENSE_GRAM_LIMIT: usize = 4096;

impl<'a> Kernel<'a> {
    fn new(data: ArrayView2<'a, f64>, gamma: f64) -> Kernel<'a> {
        let n = data.nrows();
        if n <= DENSE_GRAM_LIMIT {
            let mut gram = Array2::zeros((n, n));
            for i in 0..n {
                gram[[i, i]] = 1.0;
                for j in 0..i {
                    let k = rbf_rows(&data, i, j, gamma);
                    gram[[i, j]] = k;
                    gram[[j, i]] = k;
                }
            }
            Kernel::Dense(gram)
        } else {
            // Budget ~64 MB of cached rows.
            let capacity = (64 * 1024 * 1024 / (8 * n)).max(16);
            Kernel::Lazy {
                data,
                gamma,
                cache: std::cell::RefCell::new(RowCache {
                    rows: std::collections::HashMap::new(),
                    order: std::collections::VecDeque::new(),
                    capacity,
                }),
            }
        }
    }

    fn with_row<R>(&self, i: usize, f: impl FnOnce(&[f64]) -> R) -> R {
        match self {
            Kernel::Dense(gram) => f(gram.row(i).to_slice().expect("dense gram is contiguous")),
            Kernel::Lazy { data, gamma, cache } => {
                let mut cache = cache.borrow_mut();
                if !cache.rows.contains_key(&i) {
                    let n = data.nrows();
                    let mut row = vec![0.0; n];
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = rbf_rows(data, i, j, *gamma);
                    }
                    if cache.order.len() >= cache.capacity {
                        if let Some(evict) = cache.order.pop_front() {
                            cache.rows.remove(&evict);
                        }
                    }
                    cache.order.push_back(i);
                    cache.rows.insert(i, row);
                }
                f(cache.rows.get(&i).expect("row just inserted"))
            }
        }
    }
}

/// Fit the dual by SMO over maximal violating pairs.
pub fn fit(residuals: &ArrayView2<f64>, config: &OcsvmConfig) -> Result<(OcsvmModel, FitReport)> {
    config.validate()?;
    let n = residuals.nrows();
    let d = residuals.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "nu-OCSVM needs at least 2 training points, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("residual dimension is 0".into()));
    }
    let gamma = config
        .gamma
        .or_else(|| median_heuristic_gamma(residuals))
        .unwrap_or(1.0 / d as f64);
    let upper = 1.0 / (config.nu * n as f64);

    // Feasible start: floor(nu n) coordinates at the upper bound, the
    // remainder on the next coordinate, so that sum(alpha) = 1 exactly.
    let mut alpha = vec![0.0; n];
    let full = (config.nu * n as f64).floor() as usize;
    for a in alpha.iter_mut().take(full.min(n)) {
        *a = upper;
    }
    if full < n {
        alpha[full] = 1.0 - full as f64 * upper;
    }

    let kernel = Kernel::new(residuals.view(), gamma);

    // Gradient of the dual objective: G = Q alpha (the kernel expansion).
    let mut gradient = vec![0.0; n];
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            kernel.with_row(i, |row| {
                for (g, &q) in gradient.iter_mut().zip(row) {
                    *g += a * q;
                }
            });
        }
    }

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    while iterations < config.max_iterations {
        // Maximal violating pair: the steepest feasible transfer direction.
        let mut up: Option<usize> = None; // argmin G with alpha < upper
        let mut low: Option<usize> = None; // argmax G with alpha > 0
        for k in 0..n {
            if alpha[k] < upper && up.is_none_or(|u| gradient[k] < gradient[u]) {
                up = Some(k);
            }
            if alpha[k] > 0.0 && low.is_none_or(|l| gradient[k] > gradient[l]) {
                low = Some(k);
            }
        }
        let (Some(i), Some(j)) = (up, low) else { break };
        violation = gradient[j] - gradient[i];
        if violation <= config.tolerance {
            break;
        }

        let q_ij = kernel.with_row(i, |row| row[j]);
        let curvature = (2.0 - 2.0 * q_ij).max(1e-12);
        let step = (violation / curvature).min(upper - alpha[i]).min(alpha[j]);
        alpha[i] += step;
        alpha[j] -= step;
        // Snap to the bounds so the at-bound predicate stays exact.
        if upper - alpha[i] < 1e-15 * upper {
            alpha[i] = upper;
        }
        if alpha[j] < 1e-15 * upper {
            alpha[j] = 0.0;
        }

        kernel.with_row(i, |row| {
            for (g, &q) in gradient.iter_mut().zip(row) {
                *g += step * q;
            }
        });
        kernel.with_row(j, |row| {
            for (g, &q) in gradient.iter_mut().zip(row) {
                *g -= step * q;
            }
        });
        iterations += 1;
    }
    let converged = violation <= config.tolerance;

    let dual_objective = 0.5
        * alpha
            .iter()
            .zip(gradient.iter())
            .map(|(a, g)| a * g)
            .sum::<f64>();

    // rho from margin support vectors; degenerate all-at-bound case falls
    // back to the midpoint of the expansion over retained vectors.
    let margin: Vec<f64> = (0..n)
        .filter(|&k| alpha[k] > 0.0 && alpha[k] < upper)
        .map(|k| gradient[k])
        .collect();
    let rho = if !margin.is_empty() {
        margin.iter().sum::<f64>() / margin.len() as f64
    } else {
        let bound: Vec<f64> = (0..n)
            .filter(|&k| alpha[k] > 0.0)
            .map(|k| gradient[k])
            .collect();
        let min = bound.iter().copied().fold(f64::INFINITY, f64::min);
        let max = bound.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (min + max)
    };

    let keep: Vec<usize> = (0..n).filter(|&k| alpha[k] > 0.0).collect();
    let mut support_vectors = Array2::zeros((keep.len(), d));
    let mut kept_alpha = Array1::zeros(keep.len());
    for (row, &k) in keep.iter().enumerate() {
        support_vectors.row_mut(row).assign(&residuals.row(k));
        kept_alpha[row] = alpha[k];
    }

    let model = OcsvmModel {
        support_vectors,
        alpha: kept_alpha,
        rho,
        gamma,
    };
    let report = FitReport {
        iterations,
        kkt_violation: violation,
        converged,
        dual_objective,
        support_vector_count: keep.len(),
    };
    Ok((model, report))
}

impl OcsvmModel {
    /// Kernel expansion minus the offset; positive values lie in the normal
    /// region.
    pub fn decision(&self, residual: &ArrayView1<f64>) -> Result<f64> {
        if residual.len() != self.support_vectors.ncols() {
            return Err(Error::shape(
                format!("{} dims", self.support_vectors.ncols()),
                format!("{} dims", residual.len()),
            ));
        }
        let mut sum = 0.0;
        for (sv, &a) in self.support_vectors.rows().into_iter().zip(self.alpha.iter()) {
            let mut dist = 0.0;
            for (p, q) in sv.iter().zip(residual.iter()) {
                let d = p - q;
                dist += d * d;
            }
            sum += a * (-self.gamma * dist).exp();
        }
        Ok(sum - self.rho)
    }

    /// Anomaly iff decision < 0; a tie at exactly 0 counts as normal.
    pub fn predict(&self, residual: &ArrayView1<f64>) -> Result<Verdict> {
        Ok(if self.decision(residual)? < 0.0 {
            Verdict::Anomaly
        } else {
            Verdict::Normal
        })
    }
}

/// Binary prediction of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Anomaly,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Normal => write!(f, "normal"),
            Verdict::Anomaly => write!(f, "anomaly"),
        }
    }
}
