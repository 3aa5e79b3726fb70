//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vnslab::geometry::{Point, ZERO};

/// Hungarian algorithm (shortest augmenting path, potentials). Square cost.
pub fn hungarian(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                rec(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Integer weights make the transport polytope's vertices assignments of
/// unit atoms, so the expanded assignment problem is an exact LP oracle.
pub fn w1_oracle(mu: &[(Point, u32)], nu: &[(Point, u32)], total: u32) -> f64 {
    let expand = |s: &[(Point, u32)]| -> Vec<Point> {
        s.iter()
            .flat_map(|(p, k)| std::iter::repeat_n(*p, *k as usize))
            .collect()
    };
    let (a, b) = (expand(mu), expand(nu));
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| dist(x, y)).collect())
        .collect();
    hungarian(&cost) / total as f64
}

pub fn random_integer_measure(
    rng: &mut ChaCha8Rng,
    points: usize,
    total: u32,
    dim: usize,
) -> Vec<(Point, u32)> {
    let mut counts = vec![1u32; points];
    for _ in points as u32..total {
        counts[rng.random_range(0..points)] += 1;
    }
    counts
        .into_iter()
        .map(|k| {
            let mut p = ZERO;
            for c in p.iter_mut().take(dim) {
                *c = rng.random::<f64>();
            }
            (p, k)
        })
        .collect()
}
