//! Brute-force references for the loss dynamic programs.
//!
//! Every monotone alignment path through the lattice is listed explicitly
//! and the path probabilities are summed. Exponential in `T + U`; meant for
//! lattices with `T <= 4`, `U <= 3`.

use super::{LossLattice, PathRestriction};
use crate::numerics::log_sum_exp;

/// Log-probabilities of every complete alignment path.
///
/// A path moves from `(0, 0)` to `(T - 1, U)` by blanks (`t + 1`) and labels
/// (`u + 1`) and finishes with the blank at `(T - 1, U)`.
pub fn path_log_probs(lattice: &LossLattice, restriction: Option<&PathRestriction>) -> Vec<f64> {
    let mut out = Vec::new();
    walk(lattice, restriction, 0, 0, 0.0, &mut out);
    out
}

fn label_allowed(restriction: Option<&PathRestriction>, t: usize, u: usize) -> bool {
    let Some(r) = restriction else { return true };
    let centre = r.token_alignment[u] as i64;
    let t = t as i64;
    let lo_ok = r.left_slack.is_none_or(|l| t >= centre - l as i64);
    let hi_ok = r.right_slack.is_none_or(|h| t <= centre + h as i64);
    lo_ok && hi_ok
}

fn walk(
    lattice: &LossLattice,
    restriction: Option<&PathRestriction>,
    t: usize,
    u: usize,
    acc: f64,
    out: &mut Vec<f64>,
) {
    let last_t = lattice.frames() - 1;
    let big_u = lattice.target_len();
    if u < big_u && label_allowed(restriction, t, u) {
        walk(lattice, restriction, t, u + 1, acc + lattice.label_at(t, u), out);
    }
    if t < last_t {
        walk(lattice, restriction, t + 1, u, acc + lattice.blank_at(t, u), out);
    } else if u == big_u {
        out.push(acc + lattice.blank_at(t, u));
    }
}

/// `−log Σ_paths P(path)`; `+∞` when no path survives.
pub fn enumerated_loss(lattice: &LossLattice, restriction: Option<&PathRestriction>) -> f64 {
    let paths = path_log_probs(lattice, restriction);
    if paths.is_empty() {
        return f64::INFINITY;
    }
    -log_sum_exp(&paths).expect("nonempty")
}

/// Number of alignment paths, `C(T − 1 + U, U)` for an unrestricted lattice.
pub fn path_count(frames: usize, target_len: usize) -> usize {
    let n = frames - 1 + target_len;
    let k = target_len;
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every lattice entry. The denominator is floored at `1e-6` so
/// entries with (near) zero gradient compare absolutely.
pub fn max_gradient_error(lattice: &LossLattice, analytic: &[f64], h: f64, loss: &dyn Fn(&LossLattice) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (idx, &a) in analytic.iter().enumerate() {
        let x = lattice.log_probs()[idx];
        let n = (loss(&lattice.with_entry(idx, x + h)) - loss(&lattice.with_entry(idx, x - h))) / (2.0 * h);
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_paths() {
        let l = LossLattice::new(3, vec![1, 1], 2, 0, vec![-0.5; 3 * 3 * 2]).unwrap();
        assert_eq!(path_log_probs(&l, None).len(), path_count(3, 2));
        assert_eq!(path_count(3, 2), 6);
        assert_eq!(path_count(4, 0), 1);
        assert_eq!(path_count(1, 3), 1);
    }
}
