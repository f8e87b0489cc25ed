//! Inner-maximization landscape data for offline plotting: a projection
//! plane (dominant perturbation direction x a random Rademacher direction),
//! loss values over a grid in that plane, and trajectory projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{self, Params};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Grid resolution used by the emitted landscape files.
pub const DEFAULT_GRID_RESOLUTION: usize = 100;

/// A pair of unit-norm projection axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionAxes<T = f64> {
    pub x_axis: Vec<T>,
    pub y_axis: Vec<T>,
}

/// Knobs for the dominant-eigenvector power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxesOptions<T = f64> {
    /// Relative residual `|C v - lambda v| / lambda` at which to stop.
    pub tol: T,
    pub max_iters: usize,
    /// Gram-Schmidt the Rademacher axis against the principal axis.
    pub orthogonalize: bool,
}

impl<T: Real> Default for AxesOptions<T> {
    fn default() -> Self {
        AxesOptions {
            tol: T::of(1e-10),
            max_iters: 100_000,
            orthogonalize: false,
        }
    }
}

/// X axis: dominant eigenvector of the second-moment matrix of the
/// perturbation vectors (power iteration), sign fixed so the first nonzero
/// component is positive. Y axis: seeded Rademacher draw, normalized.
pub fn compute_axes<T: Real>(perturbations: &[Vec<T>], seed: u64) -> Result<ProjectionAxes<T>> {
    compute_axes_with(perturbations, seed, AxesOptions::default())
}

pub fn compute_axes_with<T: Real>(
    perturbations: &[Vec<T>],
    seed: u64,
    opts: AxesOptions<T>,
) -> Result<ProjectionAxes<T>> {
    let dim = match perturbations.first() {
        Some(v) => v.len(),
        None => return Err(Error::Degenerate("no perturbation vectors")),
    };
    if perturbations.iter().any(|v| v.len() != dim) {
        return Err(Error::contract(
            "perturbation vectors must share one dimension",
        ));
    }
    let start = perturbations
        .iter()
        .find(|v| v.iter().any(|&c| c != T::zero()))
        .ok_or(Error::Degenerate("all perturbation vectors are zero"))?;

    // Power iteration on C = (1/n) sum_i v_i v_i^T via matrix-free products.
    let n = T::of_usize(perturbations.len());
    let apply = |v: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        for p in perturbations {
            let mut dot = T::zero();
            for (a, b) in p.iter().zip(v) {
                dot += *a * *b;
            }
            let scaled = dot / n;
            for (o, &pv) in out.iter_mut().zip(p) {
                *o += scaled * pv;
            }
        }
        out
    };

    let mut v = normalize(start.clone())?;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let w = apply(&v);
        let lambda = dot(&w, &v);
        if !(lambda > T::zero()) {
            return Err(Error::Degenerate(
                "second-moment matrix has no positive action on the start vector",
            ));
        }
        let mut residual = T::zero();
        for (wi, vi) in w.iter().zip(&v) {
            let r = *wi - lambda * *vi;
            residual += r * r;
        }
        let residual = residual.sqrt();
        v = normalize(w)?;
        if residual <= opts.tol * lambda {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::contract(format!(
            "power iteration did not reach the residual tolerance within {} iterations",
            opts.max_iters
        )));
    }
    if let Some(&first) = v.iter().find(|&&c| c != T::zero()) {
        if first < T::zero() {
            for c in v.iter_mut() {
                *c = -*c;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_sqrt_d = T::one() / T::of_usize(dim).sqrt();
    let mut y: Vec<T> = (0..dim)
        .map(|_| {
            if rng.random::<bool>() {
                inv_sqrt_d
            } else {
                -inv_sqrt_d
            }
        })
        .collect();
    if opts.orthogonalize {
        let proj = dot(&y, &v);
        for (yi, vi) in y.iter_mut().zip(&v) {
            *yi = *yi - proj * *vi;
        }
        y = normalize(y)?;
    }

    Ok(ProjectionAxes { x_axis: v, y_axis: y })
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

fn normalize<T: Real>(mut v: Vec<T>) -> Result<Vec<T>> {
    let norm = dot(&v, &v).sqrt();
    if !(norm > T::zero()) {
        return Err(Error::Degenerate("cannot normalize a zero vector"));
    }
    for c in v.iter_mut() {
        *c = *c / norm;
    }
    Ok(v)
}

/// Loss surface over the projection plane around `x0`:
/// `grid[i][j] = loss(clip(x0 + s_i x_axis + s_j y_axis), label)` with the
/// offsets s spanning `[-extent, extent]` uniformly (both endpoints
/// included). Rows evaluate in parallel and land by index.
pub fn loss_grid<T: Real>(
    params: &Params<T>,
    x0: &[T],
    label: usize,
    axes: &ProjectionAxes<T>,
    extent: T,
    resolution: usize,
    domain: Option<(T, T)>,
) -> Result<Vec<Vec<T>>> {
    if resolution < 2 {
        return Err(Error::contract("grid resolution must be at least 2"));
    }
    if x0.len() != axes.x_axis.len() || x0.len() != axes.y_axis.len() {
        return Err(Error::ShapeMismatch {
            op: "loss_grid axes",
            lhs: vec![x0.len()],
            rhs: vec![axes.x_axis.len(), axes.y_axis.len()],
        });
    }
    let offsets: Vec<T> = (0..resolution)
        .map(|i| {
            -extent + T::of(2.0) * extent * T::of_usize(i) / T::of_usize(resolution - 1)
        })
        .collect();

    let rows: Vec<Result<Vec<T>>> = offsets
        .par_iter()
        .map(|&sx| {
            let mut row = Vec::with_capacity(resolution);
            for &sy in &offsets {
                let mut point: Vec<T> = x0.to_vec();
                for (p, (&ax, &ay)) in point
                    .iter_mut()
                    .zip(axes.x_axis.iter().zip(axes.y_axis.iter()))
                {
                    let mut v = *p + sx * ax + sy * ay;
                    if let Some((lo, hi)) = domain {
                        v = v.max(lo).min(hi);
                    }
                    *p = v;
                }
                let x = Tensor::from_vec(vec![1, point.len()], point)?;
                let losses = models::per_example_losses(params, &x, &[label])?;
                row.push(losses[0]);
            }
            Ok(row)
        })
        .collect();

    let mut grid = Vec::with_capacity(resolution);
    for row in rows {
        grid.push(row?);
    }
    Ok(grid)
}

/// Projects trajectory points onto the plane:
/// `(<x - x0, x_axis>, <x - x0, y_axis>)` per point.
pub fn project_trajectory<T: Real>(
    trajectory: &[Vec<T>],
    x0: &[T],
    axes: &ProjectionAxes<T>,
) -> Vec<(T, T)> {
    trajectory
        .iter()
        .map(|point| {
            let mut sx = T::zero();
            let mut sy = T::zero();
            for ((&p, &o), (&ax, &ay)) in point
                .iter()
                .zip(x0)
                .zip(axes.x_axis.iter().zip(axes.y_axis.iter()))
            {
                let d = p - o;
                sx += d * ax;
                sy += d * ay;
            }
            (sx, sy)
        })
        .collect()
}
