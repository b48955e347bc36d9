//! Limited-memory BFGS with Armijo backtracking, box bounds and rejection of
//! infeasible trial points.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::linalg::dot;

pub trait Objective {
    type Info: Clone;

    fn dim(&self) -> usize;

    /// Value at `x` with its gradient written to `grad`; `None` marks `x`
    /// as infeasible (treated as `+∞`).
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Option<(f64, Self::Info)>;

    /// Box bounds of coordinate `i`.
    fn bounds(&self, _i: usize) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    /// Stop when `‖g‖∞ ≤ tolerance·‖g₀‖∞` (projected gradient).
    pub tolerance: f64,
    /// Or when `‖g‖∞ ≤ absolute_tolerance`, the rounding-noise floor.
    pub absolute_tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub memory: usize,
    /// Largest coordinate change of a step taken without curvature memory.
    pub initial_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Iterate<I> {
    pub value: f64,
    pub info: I,
    /// `‖x_k − x_{k−1}‖∞`; zero for the initial point.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult<I> {
    pub x: Vec<f64>,
    pub gradient: Vec<f64>,
    pub trace: Vec<Iterate<I>>,
    pub reason: TerminationReason,
    pub initial_gradient_norm: f64,
    pub gradient_norm: f64,
}

impl<I> LbfgsResult<I> {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn last(&self) -> &Iterate<I> {
        self.trace.last().expect("trace holds the initial point")
    }
}

fn projected_norm<O: Objective>(obj: &O, x: &[f64], g: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| {
            if active(obj, x, g, i) {
                0.0
            } else {
                g[i].abs()
            }
        })
        .fold(0.0, f64::max)
}

fn active<O: Objective>(obj: &O, x: &[f64], g: &[f64], i: usize) -> bool {
    let (lo, hi) = obj.bounds(i);
    (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0)
}

/// Two-loop recursion for `−H·g` restricted to the free coordinates.
fn direction(pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64], free: &[bool]) -> Vec<f64> {
    let mask = |v: &mut Vec<f64>| {
        v.iter_mut().zip(free).for_each(|(a, &f)| {
            if !f {
                *a = 0.0
            }
        })
    };
    let mut q = g.to_vec();
    mask(&mut q);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    mask(&mut q);
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `obj` from `x0`; returns `None` if `x0` is infeasible.
pub fn lbfgs<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    cfg: &LbfgsConfig,
) -> Option<LbfgsResult<O::Info>> {
    let n = obj.dim();
    let mut x = x0.to_vec();
    for (i, v) in x.iter_mut().enumerate() {
        let (lo, hi) = obj.bounds(i);
        *v = v.clamp(lo, hi);
    }
    let mut g = vec![0.0; n];
    let (mut f, info) = obj.evaluate(&x, &mut g)?;
    let mut trace = vec![Iterate {
        value: f,
        info,
        step: 0.0,
    }];
    let g0 = projected_norm(obj, &x, &g);
    let mut gnorm = g0;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut reason = TerminationReason::MaxIterations;
    let mut gt = vec![0.0; n];
    let small = |gnorm: f64| gnorm <= cfg.tolerance * g0 || gnorm <= cfg.absolute_tolerance;

    for _ in 0..cfg.max_iterations {
        if small(gnorm) {
            reason = TerminationReason::Converged;
            break;
        }
        let free: Vec<bool> = (0..n).map(|i| !active(obj, &x, &g, i)).collect();
        let mut p = direction(&pairs, &g, &free);
        if pairs.is_empty() || dot(&p, &g) >= 0.0 {
            pairs.clear();
            let pg: Vec<f64> = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            let scale = cfg.initial_step / gnorm;
            p = pg.iter().map(|v| v * scale).collect();
        }

        let mut a = 1.0;
        let mut clipped = false;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let mut bound_hit = false;
            let xt: Vec<f64> = (0..n)
                .map(|i| {
                    let (lo, hi) = obj.bounds(i);
                    let v = x[i] + a * p[i];
                    let c = v.clamp(lo, hi);
                    bound_hit |= c != v;
                    c
                })
                .collect();
            let decrease: f64 = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
            match obj.evaluate(&xt, &mut gt) {
                Some((ft, it)) if decrease < 0.0 && ft < f && ft <= f + cfg.armijo * decrease => {
                    accepted = Some((xt, ft, it, bound_hit));
                    break;
                }
                Some(_) => {}
                None => clipped = true,
            }
            a *= cfg.backtrack;
        }
        let Some((xt, ft, it, bound_hit)) = accepted else {
            reason = TerminationReason::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if !clipped && !bound_hit && sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, 1.0 / sy));
        }
        let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = xt;
        f = ft;
        g.copy_from_slice(&gt);
        gnorm = projected_norm(obj, &x, &g);
        trace.push(Iterate {
            value: f,
            info: it,
            step,
        });
    }
    if small(gnorm) {
        reason = TerminationReason::Converged;
    }
    Some(LbfgsResult {
        x,
        gradient: g,
        trace,
        reason,
        initial_gradient_norm: g0,
        gradient_norm: gnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;
    impl Objective for Rosenbrock {
        type Info = ();
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&mut self, x: &[f64], g: &mut [f64]) -> Option<(f64, ())> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Some(((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2), ()))
        }
    }

    /// Quadratic with an infeasible half-plane `x0 + x1 > 1.5` and a box on x0.
    struct Fenced;
    impl Objective for Fenced {
        type Info = ();
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&mut self, x: &[f64], g: &mut [f64]) -> Option<(f64, ())> {
            if x[0] + x[1] > 1.5 {
                return None;
            }
            g[0] = 2.0 * (x[0] - 2.0);
            g[1] = 2.0 * (x[1] + 1.0);
            Some(((x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2), ()))
        }
        fn bounds(&self, i: usize) -> (f64, f64) {
            if i == 0 {
                (-1.0, 0.7)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
        }
    }

    fn cfg() -> LbfgsConfig {
        LbfgsConfig {
            max_iterations: 500,
            tolerance: 1e-10,
            absolute_tolerance: 0.0,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            memory: 10,
            initial_step: 0.1,
        }
    }

    #[test]
    fn minimizes_rosenbrock_with_decreasing_trace() {
        let r = lbfgs(&mut Rosenbrock, &[-1.2, 1.0], &cfg()).unwrap();
        assert_eq!(r.reason, TerminationReason::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1].value < w[0].value));
    }

    #[test]
    fn respects_bounds_and_rejects_infeasible_points() {
        let r = lbfgs(&mut Fenced, &[0.0, 0.0], &cfg()).unwrap();
        assert_eq!(r.x[0], 0.7);
        assert!((r.x[1] + 1.0).abs() < 1e-8);
        assert!(lbfgs(&mut Fenced, &[0.5, 1.2], &cfg()).is_none());
    }
}
