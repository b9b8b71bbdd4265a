//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls into the code paths under test: gradients come from
//! central finite differences, the OCSVM dual from a dense projected-gradient
//! solver, Shapley values from permutation enumeration, and eigenvalues from
//! cyclic Jacobi rotations.

#![allow(dead_code)]

use exad_core::autoencoder::{mse_loss, AutoencoderModel};
use exad_core::explain::ShapleyGame;
use ndarray::{Array2, ArrayView2};

/// max over entries of |a - n| / max(|a|, |n|, 1e-8).
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central finite differences of the training loss over every parameter.
pub fn fd_parameter_gradient(
    model: &AutoencoderModel,
    window: &ArrayView2<f64>,
    eps: f64,
) -> Vec<f64> {
    let flat = model.to_flat();
    let mut probe = model.clone();
    let mut grad = vec![0.0; flat.len()];
    let loss_at = |probe: &mut AutoencoderModel, params: &[f64]| {
        probe.set_flat(params);
        let recon = probe.reconstruct(window).unwrap();
        mse_loss(window, &recon.view()).unwrap()
    };
    let mut params = flat.clone();
    for i in 0..flat.len() {
        params[i] = flat[i] + eps;
        let plus = loss_at(&mut probe, &params);
        params[i] = flat[i] - eps;
        let minus = loss_at(&mut probe, &params);
        params[i] = flat[i];
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Central finite differences of the anomaly surrogate over the input window.
pub fn fd_input_gradient(
    model: &AutoencoderModel,
    window: &ArrayView2<f64>,
    eps: f64,
) -> Array2<f64> {
    let mut x = window.to_owned();
    let mut grad = Array2::zeros(window.raw_dim());
    for t in 0..x.nrows() {
        for k in 0..x.ncols() {
            let original = x[[t, k]];
            x[[t, k]] = original + eps;
            let plus = model.surrogate_score(&x.view()).unwrap();
            x[[t, k]] = original - eps;
            let minus = model.surrogate_score(&x.view()).unwrap();
            x[[t, k]] = original;
            grad[[t, k]] = (plus - minus) / (2.0 * eps);
        }
    }
    grad
}

/// Euclidean projection onto { 0 <= x <= upper, sum x = 1 } by bisection on
/// the shift multiplier.
pub fn project_capped_simplex(v: &[f64], upper: f64) -> Vec<f64> {
    let clamp_sum = |lambda: f64| -> f64 {
        v.iter()
            .map(|&vi| (vi - lambda).clamp(0.0, upper))
            .sum::<f64>()
    };
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - upper - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clamp_sum(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    v.iter()
        .map(|&vi| (vi - lambda).clamp(0.0, upper))
        .collect()
}

pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    /// Kernel expansion (Q alpha) at the solution.
    pub expansion: Vec<f64>,
    pub rho: f64,
}

/// Dense projected-gradient solver for min (1/2) a'Qa over the capped
/// simplex, run to a 1e-8 KKT violation. Independent of the SMO path.
pub fn solve_ocsvm_dual_dense(gram: &Array2<f64>, upper: f64) -> QpSolution {
    let n = gram.nrows();
    assert!(upper * n as f64 >= 1.0, "infeasible bound");
    let mut alpha = vec![1.0 / n as f64; n];

    // Steepest-descent step from the infinity-norm bound on Q's spectrum.
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| gram[[i, j]].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let step = 1.0 / lipschitz;

    let expansion_of = |alpha: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| gram[[i, j]] * alpha[j]).sum())
            .collect()
    };

    let mut expansion = expansion_of(&alpha);
    for _ in 0..5_000_000usize {
        // KKT violation in the same sense as the pairwise solver: the gap
        // between the largest gradient of a decreasable coordinate and the
        // smallest gradient of an increasable one.
        let mut up = f64::INFINITY;
        let mut low = f64::NEG_INFINITY;
        for i in 0..n {
            if alpha[i] < upper {
                up = up.min(expansion[i]);
            }
            if alpha[i] > 0.0 {
                low = low.max(expansion[i]);
            }
        }
        if low - up <= 1e-8 {
            break;
        }
        let moved: Vec<f64> = alpha
            .iter()
            .zip(&expansion)
            .map(|(a, g)| a - step * g)
            .collect();
        alpha = project_capped_simplex(&moved, upper);
        expansion = expansion_of(&alpha);
    }

    let objective = 0.5
        * alpha
            .iter()
            .zip(&expansion)
            .map(|(a, g)| a * g)
            .sum::<f64>();

    // rho from margin vectors, midpoint fallback like the contract states.
    let margin: Vec<f64> = (0..n)
        .filter(|&i| alpha[i] > 1e-8 && alpha[i] < upper - 1e-8)
        .map(|i| expansion[i])
        .collect();
    let rho = if !margin.is_empty() {
        margin.iter().sum::<f64>() / margin.len() as f64
    } else {
        let sv: Vec<f64> = (0..n)
            .filter(|&i| alpha[i] > 1e-8)
            .map(|i| expansion[i])
            .collect();
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = sv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (min + max)
    };

    QpSolution {
        alpha,
        objective,
        expansion,
        rho,
    }
}

/// RBF Gram matrix, written out longhand for the oracle's independence.
pub fn rbf_gram(data: &ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let n = data.nrows();
    let mut gram = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut dist = 0.0;
            for k in 0..data.ncols() {
                let d = data[[i, k]] - data[[j, k]];
                dist += d * d;
            }
            gram[[i, j]] = (-gamma * dist).exp();
        }
    }
    gram
}

/// Oracle decision value sum_i alpha_i K(x_i, x) - rho.
pub fn oracle_decision(
    data: &ArrayView2<f64>,
    solution: &QpSolution,
    gamma: f64,
    x: &[f64],
) -> f64 {
    let mut sum = 0.0;
    for (i, &a) in solution.alpha.iter().enumerate() {
        if a > 0.0 {
            let mut dist = 0.0;
            for k in 0..data.ncols() {
                let d = data[[i, k]] - x[k];
                dist += d * d;
            }
            sum += a * (-gamma * dist).exp();
        }
    }
    sum - solution.rho
}

/// Mean marginal contribution over every player ordering, via Heap's
/// permutation enumeration. Exponential, fine for small games.
pub fn permutation_shapley(game: &ShapleyGame) -> Vec<f64> {
    let m = game.players();
    let mut phi = vec![0.0; m];
    let mut perm: Vec<usize> = (0..m).collect();
    let mut counters = vec![0usize; m];
    let mut count = 0u64;

    let accumulate = |perm: &[usize], phi: &mut Vec<f64>| {
        let mut mask = 0u32;
        for &player in perm {
            let with = game.value(mask | (1 << player));
            phi[player] += with - game.value(mask);
            mask |= 1 << player;
        }
    };

    accumulate(&perm, &mut phi);
    count += 1;
    let mut i = 0;
    while i < m {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            accumulate(&perm, &mut phi);
            count += 1;
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }

    for p in phi.iter_mut() {
        *p /= count as f64;
    }
    phi
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(matrix: &Array2<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols());
    let mut a = matrix.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}
