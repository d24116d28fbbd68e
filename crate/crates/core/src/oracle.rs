//! Brute-force reference computations.
//!
//! Deliberately naive and independent of the routines they check: paths are
//! enumerated recursively, ranks use exact rational elimination, Hessians use
//! the four-point mixed difference, and ball maxima come from a lattice scan.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::paths::PathVector;

pub const ENUMERATION_CAP: u128 = 100_000;
pub const HESSIAN_MAX_DIM: usize = 200;
pub const GRID_MAX_DIM: usize = 4;
pub const GRID_MAX_POINTS: u128 = 50_000_000;

/// Every input-to-output path, each exactly once.
pub fn enumerate_all_paths(dims: &[usize]) -> Result<Vec<PathVector>> {
    crate::net::validate_dims(dims)?;
    let count: u128 = dims.iter().map(|&d| d as u128).product();
    if count > ENUMERATION_CAP {
        return Err(Error::PathCapExceeded {
            count,
            cap: ENUMERATION_CAP,
        });
    }
    fn walk(dims: &[usize], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dims.len() {
            out.push(prefix.clone());
            return;
        }
        for node in 0..dims[prefix.len()] {
            prefix.push(node);
            walk(dims, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::with_capacity(count as usize);
    walk(dims, &mut Vec::new(), &mut raw);
    raw.into_iter().map(|nodes| PathVector::new(dims, nodes)).collect()
}

/// Exact rank of a 0/1 matrix by Gaussian elimination over the rationals.
pub fn rational_rank(rows: &[Vec<u8>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect()
        })
        .collect();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let inv = BigRational::one() / m[rank][c].clone();
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let factor = m[r][c].clone() * inv.clone();
                for k in c..cols {
                    let delta = factor.clone() * m[rank][k].clone();
                    m[r][k] -= delta;
                }
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// Dense Hessian from four-point central differences, before symmetrizing.
pub fn fd_hessian_raw(obj: &dyn Objective, center: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let n = center.len();
    if n > HESSIAN_MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "dense Hessian limited to {HESSIAN_MAX_DIM} dimensions, got {n}"
        )));
    }
    let eval = |di: (usize, f64), dj: (usize, f64)| -> Result<f64> {
        let mut x = center.to_vec();
        x[di.0] += di.1;
        x[dj.0] += dj.1;
        obj.value(&x)
    };
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let pp = eval((i, h), (j, h))?;
            let pm = eval((i, h), (j, -h))?;
            let mp = eval((i, -h), (j, h))?;
            let mm = eval((i, -h), (j, -h))?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("Hessian entry ({i}, {j})")));
            }
            hess[i][j] = v;
        }
    }
    Ok(hess)
}

/// `(H + H^T) / 2` of [`fd_hessian_raw`].
pub fn fd_hessian(obj: &dyn Objective, center: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let raw = fd_hessian_raw(obj, center, h)?;
    let n = raw.len();
    Ok((0..n)
        .map(|i| (0..n).map(|j| 0.5 * (raw[i][j] + raw[j][i])).collect())
        .collect())
}

/// Largest increase `l(x) - l(center)` over lattice points inside the ball.
///
/// The lattice has `resolution` nodes per axis spanning `[-eps, eps]`, so
/// resolution `2r - 1` contains every node of resolution `r`.
pub fn grid_max_in_ball(
    obj: &dyn Objective,
    center: &[f64],
    eps: f64,
    resolution: usize,
) -> Result<f64> {
    let d = center.len();
    if d == 0 || d > GRID_MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "grid oracle supports 1..={GRID_MAX_DIM} dimensions, got {d}"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
    }
    let points = (resolution as u128).pow(d as u32);
    if points > GRID_MAX_POINTS {
        return Err(Error::PathCapExceeded {
            count: points,
            cap: GRID_MAX_POINTS,
        });
    }
    let base = obj.value(center)?;
    let ticks: Vec<f64> = (0..resolution)
        .map(|i| eps * (2.0 * i as f64 / (resolution - 1) as f64 - 1.0))
        .collect();
    use rayon::prelude::*;
    let best = (0..points as usize)
        .into_par_iter()
        .filter_map(|mut idx| {
            let mut offset = vec![0.0; d];
            for o in offset.iter_mut() {
                *o = ticks[idx % resolution];
                idx /= resolution;
            }
            let r2: f64 = offset.iter().map(|v| v * v).sum();
            if r2 > eps * eps * (1.0 + 1e-12) {
                return None;
            }
            let x: Vec<f64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            obj.value(&x).ok()
        })
        .reduce(|| base, f64::max);
    Ok(best - base)
}
