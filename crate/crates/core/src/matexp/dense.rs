use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest matrix the dense path accepts by default.
pub const DEFAULT_DENSE_CAP: usize = 1024;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// One-norm bound below which the degree-13 approximant is accurate to
/// double precision.
const THETA_13: f64 = 5.371_920_351_148_152;

/// `exp(t·a)` by scaling and squaring with the degree-13 Padé approximant.
pub fn expm_dense(a: &DMatrix<f64>, t: f64, cap: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(
            "matrix exponential needs a square matrix".into(),
        ));
    }
    if n > cap {
        return Err(Error::Numerical(format!(
            "dense exponential of size {n} exceeds the cap {cap}"
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", "time must be finite and nonnegative"));
    }
    let mut scaled = a * t;
    if scaled.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "non-finite entries in the exponent".into(),
        ));
    }
    let norm = one_norm(&scaled);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 0 {
        scaled /= 2f64.powi(squarings);
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &eye * b[1];
    let u = &scaled * inner_u;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &eye * b[0];

    let denominator = &v - &u;
    let numerator = &v + &u;
    let mut result = denominator
        .lu()
        .solve(&numerator)
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(result)
}

/// `exp(t·g)` for a rate matrix, checked to be a transition matrix.
///
/// Rows must sum to one within `1e-10` and entries must be above `-1e-12`;
/// small negative entries are then set to zero.
pub fn transition_matrix(g: &DMatrix<f64>, t: f64, cap: usize) -> Result<DMatrix<f64>> {
    let mut p = expm_dense(g, t, cap)?;
    for i in 0..p.nrows() {
        let row_sum: f64 = p.row(i).iter().sum();
        if (row_sum - 1.0).abs() > 1e-10 {
            return Err(Error::Numerical(format!(
                "row {i} of exp(tG) sums to {row_sum}"
            )));
        }
    }
    if let Some(&min) = p.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < -1e-12 {
            return Err(Error::Numerical(format!(
                "exp(tG) has a negative entry {min:e}"
            )));
        }
    }
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    Ok(p)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
