use crate::ctmc::RateMatrix;
use crate::error::{Error, Result};

/// Poisson mean per chunk. Keeps `e^{-λ}` far from underflow.
const CHUNK_MEAN: f64 = 50.0;

/// `exp(tG)·w = Σ_k e^{-νt} (νt)^k / k! · P̃^k w` with `P̃ = I + G/ν`.
///
/// `t` is split into chunks of Poisson mean at most 50. `G` must have
/// nonpositive row sums and nonnegative off-diagonal rates: otherwise the terms grow like
/// `‖P̃‖^k` and cancel, and accuracy is lost. Fails if `ν·t` exceeds `budget`.
pub fn uniformization_action(
    g: &impl RateMatrix,
    w: &[f64],
    t: f64,
    tol: f64,
    budget: f64,
) -> Result<Vec<f64>> {
    let n = g.dim();
    if w.len() != n {
        return Err(Error::Shape(format!(
            "vector of length {} for a {n}-state generator",
            w.len()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", "time must be finite and nonnegative"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("w", "vector must be finite"));
    }
    let nu = (0..n).map(|i| g.entry(i, i).abs()).fold(0.0, f64::max);
    if nu == 0.0 || t == 0.0 {
        return Ok(w.to_vec());
    }
    let rate_time = nu * t;
    if rate_time > budget {
        return Err(Error::Numerical(format!(
            "uniformization needs about {rate_time:e} terms (budget {budget:e}); use the contour method"
        )));
    }

    let mut row = Vec::new();
    for i in 0..n {
        g.row(i, &mut row);
        if let Some(&(_, a)) = row.iter().find(|&&(j, a)| j != i && a < 0.0) {
            return Err(Error::Numerical(format!(
                "uniformization needs nonnegative off-diagonal rates; row {i} has {a:e}"
            )));
        }
        let sum: f64 = row.iter().map(|e| e.1).sum();
        let scale: f64 = row.iter().map(|e| e.1.abs()).sum();
        if sum > 1e-12 * scale {
            return Err(Error::Numerical(format!(
                "uniformization needs row sums <= 0; row {i} sums to {sum:e}"
            )));
        }
    }

    let chunks = (rate_time / CHUNK_MEAN).ceil().max(1.0) as usize;
    let lambda = rate_time / chunks as f64;
    let chunk_tol = tol / chunks as f64;
    let mut current = w.to_vec();
    let mut power = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for _ in 0..chunks {
        let norm = current.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            break;
        }
        power.copy_from_slice(&current);
        let mut weight = (-lambda).exp();
        let mut acc: Vec<f64> = power.iter().map(|x| weight * x).collect();
        let mut mass = weight;
        let mut k = 0usize;
        // ‖P̃^k w‖ ≤ ‖w‖, so the remaining Poisson mass bounds the error.
        while (1.0 - mass) * norm > chunk_tol && k < 10_000 {
            k += 1;
            g.matvec(&power, &mut scratch);
            for (p, s) in power.iter_mut().zip(&scratch) {
                *p += s / nu;
            }
            weight *= lambda / k as f64;
            mass += weight;
            for (a, p) in acc.iter_mut().zip(&power) {
                *a += weight * p;
            }
        }
        if (1.0 - mass) * norm > chunk_tol.max(4.0 * f64::EPSILON * norm * k as f64) {
            return Err(Error::Numerical(
                "uniformization series did not converge".into(),
            ));
        }
        current = acc;
    }
    Ok(current)
}
