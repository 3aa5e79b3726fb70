//! Exact `W₁` between weighted point clouds by the transportation simplex
//! (MODI potentials on a spanning-tree basis).

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{norm, sub, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub cost: f64,
    /// Value of the dual objective `Σ p_i φ_i + Σ q_j ψ_j`.
    pub dual_value: f64,
    /// Largest violation of `φ_i + ψ_j ≤ c_ij`.
    pub dual_violation: f64,
    pub iterations: usize,
    /// Nonzero entries `(i, j, mass)` of the optimal plan.
    pub plan: Vec<(usize, usize, f64)>,
}

/// Optimal transport cost for cost matrix `cost(i, j)` between masses `p`
/// and `q`. Totals must agree to `1e-9` relative.
pub fn transport_lp(
    p: &[f64],
    q: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<TransportSolution> {
    let (m, n) = (p.len(), q.len());
    let tp: f64 = p.iter().sum();
    let tq: f64 = q.iter().sum();
    if p.iter().chain(q).any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::validation(
            "transport masses must be finite and nonnegative",
        ));
    }
    if (tp - tq).abs() > 1e-9 * tp.max(tq) || (m == 0) != (n == 0) {
        return Err(Error::validation(format!("mass mismatch: {tp} vs {tq}")));
    }
    if m == 0 || tp == 0.0 {
        return Ok(TransportSolution {
            cost: 0.0,
            dual_value: 0.0,
            dual_violation: 0.0,
            iterations: 0,
            plan: Vec::new(),
        });
    }
    let scale = tp / tq;
    let q: Vec<f64> = q.iter().map(|w| w * scale).collect();
    let c: Vec<f64> = (0..m * n).map(|k| cost(k / n, k % n)).collect();
    let cmax = c.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let tol = 1e-12 * (1.0 + cmax);

    // north-west corner basis; exactly m + n - 1 cells
    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];
    let (mut sup, mut dem) = (p.to_vec(), q.clone());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = sup[i].min(dem[j]);
        flow[i * n + j] = x;
        basic[i * n + j] = true;
        sup[i] -= x;
        dem[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (sup[i] <= dem[j] && i < m - 1) || j == n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }

    let nodes = m + n;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let max_iter = 50 * nodes * nodes + 1000;
    let mut iterations = 0;
    loop {
        // adjacency of the basis tree
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for k in 0..m * n {
            if basic[k] {
                adj[k / n].push(m + k % n);
                adj[m + k % n].push(k / n);
            }
        }
        // potentials
        let mut seen = vec![false; nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if seen[b] {
                    continue;
                }
                seen[b] = true;
                if a < m {
                    v[b - m] = c[a * n + b - m] - u[a];
                } else {
                    u[b] = c[b * n + a - m] - v[a - m];
                }
                queue.push_back(b);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::numeric("transport basis lost connectivity"));
        }
        // entering cell
        let mut best = (-tol, usize::MAX);
        for k in 0..m * n {
            if basic[k] {
                continue;
            }
            let r = c[k] - u[k / n] - v[k % n];
            if r < best.0 {
                best = (r, k);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::numeric("transport simplex did not terminate"));
        }
        let enter = best.1;
        let (ei, ej) = (enter / n, enter % n);
        // tree path from column node back to row node
        let mut parent = vec![usize::MAX; nodes];
        let mut queue = VecDeque::from([ei]);
        parent[ei] = ei;
        while let Some(a) = queue.pop_front() {
            if a == m + ej {
                break;
            }
            for &b in &adj[a] {
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        // cells along the path ej -> ... -> ei, alternating signs starting with '-'
        let mut cells = Vec::new();
        let mut node = m + ej;
        while node != ei {
            let pnode = parent[node];
            let cell = if node >= m {
                pnode * n + (node - m)
            } else {
                node * n + (pnode - m)
            };
            cells.push(cell);
            node = pnode;
        }
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (s, &cell) in cells.iter().enumerate() {
            if s % 2 == 0 && (flow[cell] < theta || (flow[cell] == theta && cell < leave)) {
                theta = flow[cell];
                leave = cell;
            }
        }
        flow[enter] += theta;
        for (s, &cell) in cells.iter().enumerate() {
            if s % 2 == 0 {
                flow[cell] -= theta;
            } else {
                flow[cell] += theta;
            }
        }
        flow[leave] = 0.0;
        basic[leave] = false;
        basic[enter] = true;
    }

    let mut total = 0.0;
    let mut plan = Vec::new();
    for k in 0..m * n {
        if basic[k] && flow[k] > 0.0 {
            total += flow[k] * c[k];
            plan.push((k / n, k % n, flow[k]));
        }
    }
    let dual_value: f64 = p.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
        + q.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    let mut viol = 0.0f64;
    for k in 0..m * n {
        viol = viol.max(u[k / n] + v[k % n] - c[k]);
    }
    if viol > 1e-9 * (1.0 + cmax)
        || (total - dual_value).abs() > 1e-9 * (1.0 + total.abs()) * tp.max(1.0)
    {
        return Err(Error::numeric(format!(
            "transport certificate failed: gap {:e}, violation {viol:e}",
            total - dual_value
        )));
    }
    Ok(TransportSolution {
        cost: total,
        dual_value,
        dual_violation: viol.max(0.0),
        iterations,
        plan,
    })
}

/// `W₁(μ, ν)` for weighted point sets with Euclidean ground cost.
pub fn w1_empirical(mu: &[(Point, f64)], nu: &[(Point, f64)]) -> Result<TransportSolution> {
    let mu: Vec<_> = mu.iter().filter(|(_, w)| *w != 0.0).collect();
    let nu: Vec<_> = nu.iter().filter(|(_, w)| *w != 0.0).collect();
    let p: Vec<f64> = mu.iter().map(|(_, w)| *w).collect();
    let q: Vec<f64> = nu.iter().map(|(_, w)| *w).collect();
    transport_lp(&p, &q, |i, j| norm(&sub(&mu[i].0, &nu[j].0)))
}
