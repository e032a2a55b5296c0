//! Exhaustive search over a deterministic uniform grid.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::params::InputBox;
use crate::system::Input;

use super::clock::Stopwatch;
use super::{FilterResult, MarginFn, SolveStatus, SolverStats};

/// Largest input dimension accepted by [`solve_sampling`].
pub const MAX_SAMPLING_DIM: usize = 3;
/// Largest number of grid candidates accepted by [`solve_sampling`].
pub const MAX_SAMPLING_CANDIDATES: usize = 20_000_000;

const CHUNK: usize = 512;

pub(crate) fn grid_len(samples: usize, dim: usize) -> usize {
    samples.pow(dim as u32)
}

/// Point `index` of the `samples`-per-dimension grid, first coordinate
/// varying slowest. End points are the box bounds exactly.
pub(crate) fn grid_point(bx: &InputBox, samples: usize, index: usize) -> Input {
    let dim = bx.dim();
    let mut p = DVector::zeros(dim);
    let mut rest = index;
    for i in (0..dim).rev() {
        let j = rest % samples;
        rest /= samples;
        let (lo, hi) = (bx.lower()[i], bx.upper()[i]);
        p[i] = if j + 1 == samples {
            hi
        } else {
            lo + (hi - lo) * j as f64 / (samples - 1) as f64
        };
    }
    p
}

fn lexicographic(a: &Input, b: &Input) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn worst_margin(margin_fns: &[&MarginFn<'_>], u: &Input) -> f64 {
    margin_fns
        .iter()
        .map(|f| match f(u) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(feature = "std")]
fn evaluate(margin_fns: &[&MarginFn<'_>], points: &[Input]) -> Vec<f64> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|p| worst_margin(margin_fns, p))
        .collect()
}

#[cfg(not(feature = "std"))]
fn evaluate(margin_fns: &[&MarginFn<'_>], points: &[Input]) -> Vec<f64> {
    points.iter().map(|p| worst_margin(margin_fns, p)).collect()
}

/// Nearest admissible input among the grid points and the projected
/// nominal.
///
/// Candidates are visited in order of distance to `u_nom`, ties broken by
/// the lexicographically smaller point, and the first one with every margin
/// nonnegative is returned. Margins are evaluated in parallel chunks under
/// the `std` feature; the outcome does not depend on scheduling. A margin
/// that fails to evaluate counts as violated.
pub fn solve_sampling(
    u_nom: &Input,
    margin_fns: &[&MarginFn<'_>],
    bx: &InputBox,
    samples: usize,
) -> Result<FilterResult> {
    let clock = Stopwatch::start();
    let dim = bx.dim();
    check_dim("nominal input", dim, u_nom.len())?;
    if samples < 3 {
        return Err(Error::InvalidParameter {
            field: "samples",
            reason: "need at least 3 samples per dimension",
        });
    }
    if dim > MAX_SAMPLING_DIM {
        return Err(Error::InvalidParameter {
            field: "input dimension",
            reason: "sampling supports at most 3 inputs",
        });
    }
    let total = samples
        .checked_pow(dim as u32)
        .filter(|n| *n <= MAX_SAMPLING_CANDIDATES)
        .ok_or(Error::InvalidParameter {
            field: "samples",
            reason: "grid exceeds the candidate limit",
        })?;

    let projected = bx.project(u_nom);
    let point = |index: usize| {
        if index == total {
            projected.clone()
        } else {
            grid_point(bx, samples, index)
        }
    };
    let mut order: Vec<(f64, usize)> = (0..=total)
        .map(|i| ((&point(i) - u_nom).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| lexicographic(&point(a.1), &point(b.1)))
            .then_with(|| a.1.cmp(&b.1))
    });

    let mut evaluated = 0;
    let mut chunks = 0;
    let mut least: Option<(f64, Input)> = None;
    let mut found = None;
    for chunk in order.chunks(CHUNK) {
        chunks += 1;
        let points: Vec<Input> = chunk.iter().map(|(_, i)| point(*i)).collect();
        let margins = evaluate(margin_fns, &points);
        evaluated += points.len();
        if let Some(k) = margins.iter().position(|w| *w >= 0.0) {
            found = Some((margins[k], points[k].clone()));
            break;
        }
        for (w, p) in margins.iter().zip(points) {
            if least.as_ref().is_none_or(|(best, _)| *w > *best) {
                least = Some((*w, p));
            }
        }
    }
    // The first admissible candidate solves the problem restricted to the
    // candidate set exactly.
    let (status, (margin, u)) = match found {
        Some(found) => (SolveStatus::Optimal, found),
        None => (
            SolveStatus::Infeasible,
            least.unwrap_or_else(|| (f64::NEG_INFINITY, projected.clone())),
        ),
    };
    Ok(FilterResult {
        objective: (&u - u_nom).norm(),
        u,
        margin,
        status,
        stats: SolverStats {
            iterations: chunks,
            evaluations: evaluated * margin_fns.len(),
            wall_time: clock.seconds(),
        },
    })
}
