//! One chain of the No-U-Turn sampler with a Euclidean metric, diagonal or dense.
//!
//! Trajectories grow by doubling in a random direction. Proposals are drawn
//! multinomially (biased progressive sampling between subtrees, uniform
//! within), and growth stops on the generalized no-U-turn criterion checked
//! across the whole tree and across each pair of merged subtrees.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error beyond which a transition is marked divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

/// Outcome of one transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub logp: f64,
}

struct Subtree {
    log_sum_weight: f64,
    rho: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    proposal: Point,
    edge: Point,
}

struct TreeStats {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Inverse mass matrix of the kinetic energy.
#[derive(Debug, Clone)]
pub(crate) enum Metric {
    Diagonal(Vec<f64>),
    /// `chol` is the lower Cholesky factor of `inv_mass`.
    Dense { inv_mass: DMatrix<f64>, chol: DMatrix<f64> },
}

impl Metric {
    pub fn unit(dim: usize) -> Self {
        Metric::Diagonal(vec![1.0; dim])
    }

    /// Dense metric from a row-major covariance; `None` if it is not
    /// positive definite.
    pub fn dense(cov: &[f64], dim: usize) -> Option<Self> {
        let inv_mass = DMatrix::from_row_slice(dim, dim, cov);
        let chol = inv_mass.clone().cholesky()?.l();
        Some(Metric::Dense { inv_mass, chol })
    }

    /// `M^{-1} p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diagonal(m) => p.iter().zip(m).map(|(p, m)| p * m).collect(),
            Metric::Dense { inv_mass, .. } => {
                let v = inv_mass * DVector::from_column_slice(p);
                v.as_slice().to_vec()
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            Metric::Diagonal(m) => m.clone(),
            Metric::Dense { inv_mass, .. } => inv_mass.diagonal().as_slice().to_vec(),
        }
    }

    /// Momentum `p ~ N(0, M)` from standard normals `z`.
    fn momentum(&self, z: Vec<f64>) -> Vec<f64> {
        match self {
            Metric::Diagonal(m) => z.iter().zip(m).map(|(z, m)| z / m.sqrt()).collect(),
            Metric::Dense { chol, .. } => {
                // M = L^{-T} L^{-1}, so p = L^{-T} z
                let p = chol
                    .tr_solve_lower_triangular(&DVector::from_vec(z))
                    .expect("Cholesky factor has a positive diagonal");
                p.as_slice().to_vec()
            }
        }
    }
}

pub(crate) struct NutsChain<'a, D: LogDensity> {
    density: &'a D,
    pub rng: ChaCha8Rng,
    pub metric: Metric,
    pub step_size: f64,
    pub max_depth: usize,
    pub current: Point,
}

impl<'a, D: LogDensity> NutsChain<'a, D> {
    /// `None` when the density is not finite at `q`.
    pub fn new(density: &'a D, q: Vec<f64>, rng: ChaCha8Rng, max_depth: usize) -> Option<Self> {
        let dim = q.len();
        let mut grad = vec![0.0; dim];
        let logp = density.logp_grad(&q, &mut grad).ok()?;
        if !logp.is_finite() {
            return None;
        }
        Some(NutsChain {
            density,
            rng,
            metric: Metric::unit(dim),
            step_size: 1.0,
            max_depth,
            current: Point {
                q,
                p: vec![0.0; dim],
                grad,
                logp,
            },
        })
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * dot(p, &self.metric.apply(p))
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        self.metric.apply(p)
    }

    fn sample_momentum(&mut self) {
        let dim = self.current.q.len();
        let z: Vec<f64> = (0..dim).map(|_| self.rng.sample(StandardNormal)).collect();
        self.current.p = self.metric.momentum(z);
    }

    fn leapfrog(&self, z: &Point, eps: f64) -> Point {
        let half = 0.5 * eps;
        let mut p: Vec<f64> = z.p.iter().zip(&z.grad).map(|(p, g)| p + half * g).collect();
        let velocity = self.metric.apply(&p);
        let q: Vec<f64> = z.q.iter().zip(&velocity).map(|(q, v)| q + eps * v).collect();
        let mut grad = vec![0.0; q.len()];
        let logp = match self.density.logp_grad(&q, &mut grad) {
            Ok(lp) if lp.is_finite() => lp,
            _ => {
                grad.fill(0.0);
                f64::NEG_INFINITY
            }
        };
        for (p, g) in p.iter_mut().zip(&grad) {
            *p += half * g;
        }
        Point { q, p, grad, logp }
    }

    /// Doubles the step size until the one-step acceptance crosses 0.8.
    pub fn init_step_size(&mut self) {
        let threshold = 0.8f64.ln();
        let probe = |chain: &mut Self| {
            chain.sample_momentum();
            let h0 = chain.hamiltonian(&chain.current);
            let next = chain.leapfrog(&chain.current, chain.step_size);
            h0 - chain.hamiltonian(&next)
        };
        let delta = probe(self);
        let direction = if delta > threshold { 1 } else { -1 };
        for _ in 0..100 {
            let delta = probe(self);
            if direction == 1 && !(delta > threshold) {
                break;
            }
            if direction == -1 && !(delta < threshold) {
                break;
            }
            self.step_size = if direction == 1 {
                2.0 * self.step_size
            } else {
                0.5 * self.step_size
            };
            if !(1e-12..=1e7).contains(&self.step_size) {
                self.step_size = self.step_size.clamp(1e-12, 1e7);
                break;
            }
        }
    }

    fn build_tree(&mut self, depth: usize, start: &Point, sign: f64, h0: f64, stats: &mut TreeStats) -> Option<Subtree> {
        if depth == 0 {
            let next = self.leapfrog(start, sign * self.step_size);
            stats.n_leapfrog += 1;
            let h = self.hamiltonian(&next);
            if h - h0 > MAX_ENERGY_ERROR {
                stats.divergent = true;
            }
            let log_weight = h0 - h;
            stats.sum_metro_prob += if log_weight > 0.0 { 1.0 } else { log_weight.exp() };
            if stats.divergent {
                return None;
            }
            let p_sharp = self.p_sharp(&next.p);
            return Some(Subtree {
                log_sum_weight: log_weight,
                rho: next.p.clone(),
                p_beg: next.p.clone(),
                p_end: next.p.clone(),
                p_sharp_beg: p_sharp.clone(),
                p_sharp_end: p_sharp,
                proposal: next.clone(),
                edge: next,
            });
        }

        let init = self.build_tree(depth - 1, start, sign, h0, stats)?;
        let fin = self.build_tree(depth - 1, &init.edge, sign, h0, stats)?;

        let log_sum_weight = log_sum_exp(init.log_sum_weight, fin.log_sum_weight);
        let proposal = if fin.log_sum_weight > log_sum_weight {
            fin.proposal
        } else {
            let accept = (fin.log_sum_weight - log_sum_weight).exp();
            if self.rng.random::<f64>() < accept {
                fin.proposal
            } else {
                init.proposal
            }
        };

        let rho = add(&init.rho, &fin.rho);
        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho);
        let rho_ext = add(&init.rho, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&fin.rho, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);
        if !persist {
            return None;
        }
        Some(Subtree {
            log_sum_weight,
            rho,
            p_beg: init.p_beg,
            p_end: fin.p_end,
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
            proposal,
            edge: fin.edge,
        })
    }

    pub fn transition(&mut self) -> Transition {
        self.sample_momentum();
        let start = self.current.clone();
        let h0 = self.hamiltonian(&start);

        let mut fwd = start.clone();
        let mut bwd = start.clone();
        let p_sharp0 = self.p_sharp(&start.p);
        let mut p_fwd_bwd = start.p.clone();
        let mut p_bwd_fwd = start.p.clone();
        let (mut ps_fwd_fwd, mut ps_fwd_bwd) = (p_sharp0.clone(), p_sharp0.clone());
        let (mut ps_bwd_fwd, mut ps_bwd_bwd) = (p_sharp0.clone(), p_sharp0);
        let mut rho = start.p.clone();
        let mut log_sum_weight = 0.0;
        let mut sample = start;
        let mut depth = 0;
        let mut stats = TreeStats {
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
        };

        while depth < self.max_depth {
            let forward = self.rng.random::<f64>() > 0.5;
            let (rho_fwd, rho_bwd);
            let sub = if forward {
                let edge = fwd.clone();
                let sub = self.build_tree(depth, &edge, 1.0, h0, &mut stats);
                let Some(sub) = sub else { break };
                rho_bwd = rho.clone();
                p_bwd_fwd = p_fwd_bwd.clone();
                ps_bwd_fwd = ps_fwd_bwd.clone();
                p_fwd_bwd = sub.p_beg.clone();
                ps_fwd_bwd = sub.p_sharp_beg.clone();
                ps_fwd_fwd = sub.p_sharp_end.clone();
                rho_fwd = sub.rho.clone();
                fwd = sub.edge.clone();
                sub
            } else {
                let edge = bwd.clone();
                let sub = self.build_tree(depth, &edge, -1.0, h0, &mut stats);
                let Some(sub) = sub else { break };
                rho_fwd = rho.clone();
                p_fwd_bwd = p_bwd_fwd.clone();
                ps_fwd_bwd = ps_bwd_fwd.clone();
                p_bwd_fwd = sub.p_beg.clone();
                ps_bwd_fwd = sub.p_sharp_beg.clone();
                ps_bwd_bwd = sub.p_sharp_end.clone();
                rho_bwd = sub.rho.clone();
                bwd = sub.edge.clone();
                sub
            };
            depth += 1;

            if sub.log_sum_weight > log_sum_weight {
                sample = sub.proposal;
            } else {
                let accept = (sub.log_sum_weight - log_sum_weight).exp();
                if self.rng.random::<f64>() < accept {
                    sample = sub.proposal;
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, sub.log_sum_weight);

            rho = add(&rho_bwd, &rho_fwd);
            let mut persist = no_u_turn(&ps_bwd_bwd, &ps_fwd_fwd, &rho);
            let rho_ext = add(&rho_bwd, &p_fwd_bwd);
            persist &= no_u_turn(&ps_bwd_bwd, &ps_fwd_bwd, &rho_ext);
            let rho_ext = add(&rho_fwd, &p_bwd_fwd);
            persist &= no_u_turn(&ps_bwd_fwd, &ps_fwd_fwd, &rho_ext);
            if !persist {
                break;
            }
        }
        self.current = sample;
        let accept_stat = if stats.n_leapfrog > 0 {
            stats.sum_metro_prob / stats.n_leapfrog as f64
        } else {
            0.0
        };
        Transition {
            accept_stat,
            depth,
            n_leapfrog: stats.n_leapfrog,
            divergent: stats.divergent,
            logp: self.current.logp,
        }
    }
}
