//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver it is used to check.

#![allow(dead_code)]

use otconv::measures::DiscreteMeasure;
use otconv::transport::TransportPlan;

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Minimum over all `n!` assignments of `(1/n) Σ |x_k − y_{σ(k)}|²`.
pub fn brute_force_assignment(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let n = xs.len();
    permutations(n)
        .iter()
        .map(|p| (0..n).map(|k| sq(&xs[k], &ys[p[k]])).sum::<f64>() / n as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Most negative cost change over every simple cycle of at most `max_len`
/// support points, by explicit enumeration.
pub fn enumerate_cycle_gap(plan: &TransportPlan, max_len: usize) -> f64 {
    let pts: Vec<(&[f64], &[f64])> = plan
        .entries()
        .iter()
        .map(|e| (plan.source().atom(e.source), plan.target().atom(e.target)))
        .collect();
    let s = pts.len();
    let mut best: f64 = 0.0;
    let mut stack: Vec<usize> = Vec::new();
    fn extend(
        pts: &[(&[f64], &[f64])],
        stack: &mut Vec<usize>,
        used: &mut Vec<bool>,
        max_len: usize,
        best: &mut f64,
    ) {
        let l = stack.len();
        if l >= 2 {
            let mut shifted = 0.0;
            let mut own = 0.0;
            for k in 0..l {
                let (x, y) = pts[stack[k]];
                own += sq(x, y);
                shifted += sq(x, pts[stack[(k + 1) % l]].1);
            }
            *best = best.min(shifted - own);
        }
        if l == max_len {
            return;
        }
        for next in stack[0] + 1..pts.len() {
            if !used[next] {
                used[next] = true;
                stack.push(next);
                extend(pts, stack, used, max_len, best);
                stack.pop();
                used[next] = false;
            }
        }
    }
    let mut used = vec![false; s];
    for start in 0..s {
        used[start] = true;
        stack.push(start);
        extend(&pts, &mut stack, &mut used, max_len.min(s), &mut best);
        stack.pop();
        used[start] = false;
    }
    best
}

pub fn line(points: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
}
