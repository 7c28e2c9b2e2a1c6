//! No-U-Turn sampler: recursive trajectory doubling with a slice variable and
//! the u-turn stopping rule, unit mass matrix.

use rand::Rng;

use super::hmc::kinetic;
use crate::stats::sample_normal;

/// Energy error beyond which a trajectory is declared divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsConfig {
    pub step_size: f64,
    pub max_tree_depth: usize,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_tree_depth: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NutsTransition {
    pub position: Vec<f64>,
    /// Number of doublings performed.
    pub depth: usize,
    pub n_leapfrog: usize,
    /// Mean Metropolis acceptance over the final tree's leaves.
    pub accept_stat: f64,
    pub diverged: bool,
}

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl Point {
    fn joint(&self) -> f64 {
        self.logp - kinetic(&self.p)
    }
}

struct Tree {
    minus: Point,
    plus: Point,
    candidate: Point,
    n_valid: usize,
    keep_going: bool,
    accept_sum: f64,
    n_leaves: usize,
}

struct Builder<'a, F, R: ?Sized> {
    target: &'a mut F,
    rng: &'a mut R,
    log_slice: f64,
    joint0: f64,
    step_size: f64,
    n_leapfrog: usize,
    diverged: bool,
}

fn no_u_turn(minus: &Point, plus: &Point) -> bool {
    let dot = |p: &[f64]| -> f64 {
        plus.q
            .iter()
            .zip(&minus.q)
            .zip(p)
            .map(|((a, b), r)| (a - b) * r)
            .sum()
    };
    dot(&minus.p) >= 0.0 && dot(&plus.p) >= 0.0
}

impl<F, R> Builder<'_, F, R>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    fn step(&mut self, from: &Point, direction: f64) -> Point {
        let eps = direction * self.step_size;
        let mut p = from.p.clone();
        for (pi, gi) in p.iter_mut().zip(&from.grad) {
            *pi += 0.5 * eps * gi;
        }
        let q: Vec<f64> = from
            .q
            .iter()
            .zip(&p)
            .map(|(qi, pi)| qi + eps * pi)
            .collect();
        let (logp, grad) = (self.target)(&q);
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
        self.n_leapfrog += 1;
        Point { q, p, grad, logp }
    }

    fn build(&mut self, from: &Point, direction: f64, depth: usize) -> Tree {
        if depth == 0 {
            let point = self.step(from, direction);
            let joint = point.joint();
            let joint = if joint.is_finite() {
                joint
            } else {
                f64::NEG_INFINITY
            };
            let n_valid = (self.log_slice <= joint) as usize;
            let keep_going = self.log_slice < MAX_ENERGY_ERROR + joint;
            if !keep_going {
                self.diverged = true;
            }
            let accept = (joint - self.joint0).exp().min(1.0);
            return Tree {
                minus: point.clone(),
                plus: point.clone(),
                candidate: point,
                n_valid,
                keep_going,
                accept_sum: if accept.is_finite() { accept } else { 0.0 },
                n_leaves: 1,
            };
        }
        let mut tree = self.build(from, direction, depth - 1);
        if !tree.keep_going {
            return tree;
        }
        let edge = if direction < 0.0 {
            tree.minus.clone()
        } else {
            tree.plus.clone()
        };
        let other = self.build(&edge, direction, depth - 1);
        if direction < 0.0 {
            tree.minus = other.minus;
        } else {
            tree.plus = other.plus;
        }
        let total = tree.n_valid + other.n_valid;
        if total > 0 && self.rng.random::<f64>() < other.n_valid as f64 / total as f64 {
            tree.candidate = other.candidate;
        }
        tree.n_valid = total;
        tree.accept_sum += other.accept_sum;
        tree.n_leaves += other.n_leaves;
        tree.keep_going = other.keep_going && no_u_turn(&tree.minus, &tree.plus);
        tree
    }
}

pub fn nuts_step<F, R>(
    target: &mut F,
    current: &[f64],
    cfg: &NutsConfig,
    rng: &mut R,
) -> NutsTransition
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let (logp, grad) = target(current);
    let p: Vec<f64> = current
        .iter()
        .map(|_| sample_normal(rng, 0.0, 1.0))
        .collect();
    let start = Point {
        q: current.to_vec(),
        p,
        grad,
        logp,
    };
    let joint0 = start.joint();
    let log_slice = joint0 + rng.random::<f64>().ln();

    let mut minus = start.clone();
    let mut plus = start.clone();
    let mut sample = current.to_vec();
    let mut n_valid = 1usize;
    let mut depth = 0usize;
    let mut accept_sum = 0.0;
    let mut n_leaves = 0usize;

    let mut builder = Builder {
        target,
        rng,
        log_slice,
        joint0,
        step_size: cfg.step_size,
        n_leapfrog: 0,
        diverged: false,
    };

    while depth < cfg.max_tree_depth {
        let direction = if builder.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        };
        let tree = if direction < 0.0 {
            let t = builder.build(&minus, direction, depth);
            minus = t.minus.clone();
            t
        } else {
            let t = builder.build(&plus, direction, depth);
            plus = t.plus.clone();
            t
        };
        accept_sum += tree.accept_sum;
        n_leaves += tree.n_leaves;
        depth += 1;
        if tree.keep_going
            && tree.n_valid > 0
            && builder.rng.random::<f64>() < (tree.n_valid as f64 / n_valid as f64).min(1.0)
        {
            sample = tree.candidate.q;
        }
        n_valid += tree.n_valid;
        if !(tree.keep_going && no_u_turn(&minus, &plus)) {
            break;
        }
    }

    NutsTransition {
        position: sample,
        depth,
        n_leapfrog: builder.n_leapfrog,
        accept_stat: if n_leaves > 0 {
            accept_sum / n_leaves as f64
        } else {
            0.0
        },
        diverged: builder.diverged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{batch_means_se, mean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = NutsConfig {
            step_size: 0.2,
            max_tree_depth: 10,
        };
        let mut target = |x: &[f64]| (-0.5 * x[0] * x[0], vec![-x[0]]);
        let mut x = vec![1.0];
        let mut draws = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            x = nuts_step(&mut target, &x, &cfg, &mut rng).position;
            draws.push(x[0]);
        }
        assert!(mean(&draws).abs() < 3.0 * batch_means_se(&draws, 50));
        let sq: Vec<f64> = draws.iter().map(|v| v * v).collect();
        assert!((mean(&sq) - 1.0).abs() < 3.0 * batch_means_se(&sq, 50));
    }

    #[test]
    fn correlated_gaussian_turns_before_max_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho: f64 = 0.99;
        let det = 1.0 - rho * rho;
        let mut target = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let quad = (a * a - 2.0 * rho * a * b + b * b) / det;
            (
                -0.5 * quad,
                vec![-(a - rho * b) / det, -(b - rho * a) / det],
            )
        };
        let cfg = NutsConfig {
            step_size: 0.05,
            max_tree_depth: 10,
        };
        let mut x = vec![0.5, 0.5];
        for _ in 0..200 {
            let tr = nuts_step(&mut target, &x, &cfg, &mut rng);
            assert!(tr.depth < cfg.max_tree_depth, "hit max depth");
            x = tr.position;
        }
    }

    #[test]
    fn depth_cap_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = NutsConfig {
            step_size: 1e-4,
            max_tree_depth: 3,
        };
        let mut target = |x: &[f64]| (-0.5 * x[0] * x[0], vec![-x[0]]);
        let tr = nuts_step(&mut target, &[0.3], &cfg, &mut rng);
        assert_eq!(tr.depth, 3);
        assert_eq!(tr.n_leapfrog, 7);
    }
}
