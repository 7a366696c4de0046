//! Barnes–Hut t-SNE in two dimensions.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::seed;

pub(crate) struct Settings {
    pub perplexity: f64,
    pub theta: f64,
    pub max_iter: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

/// Symmetric sparse affinities, row-major: `(neighbor, p_ij)` per row.
pub(crate) type SparseP = Vec<Vec<(usize, f64)>>;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Conditional affinities over the `k` nearest neighbors of each point,
/// calibrated by bisection on the Gaussian precision so that each row's
/// entropy matches `ln(perplexity)`.
pub(crate) fn input_affinities(x: &[Vec<f64>], perplexity: f64) -> SparseP {
    let n = x.len();
    let k = ((3.0 * perplexity).floor() as usize).min(n - 1);
    let target = perplexity.ln();
    let mut cond: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        dist.extend((0..n).filter(|&j| j != i).map(|j| (sq_dist(&x[i], &x[j]), j)));
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nb = &dist[..k];
        let d_min = nb[0].0;
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        let mut w = vec![0.0; k];
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for (wj, &(d, _)) in w.iter_mut().zip(nb) {
                *wj = (-beta * (d - d_min)).exp();
                sum += *wj;
                weighted += *wj * (d - d_min);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let sum: f64 = w.iter().sum();
        cond.push(nb.iter().zip(&w).map(|(&(_, j), &wj)| (j, wj / sum)).collect());
    }
    let mut sym: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (i, row) in cond.iter().enumerate() {
        for &(j, p) in row {
            *sym[i].entry(j).or_insert(0.0) += p;
            *sym[j].entry(i).or_insert(0.0) += p;
        }
    }
    let norm = 2.0 * n as f64;
    sym.into_iter()
        .map(|row| row.into_iter().map(|(j, p)| (j, p / norm)).collect())
        .collect()
}

const MAX_DEPTH: usize = 48;

struct Node {
    cx: f64,
    cy: f64,
    half: f64,
    mass_x: f64,
    mass_y: f64,
    count: usize,
    children: Option<[usize; 4]>,
    points: Vec<usize>,
}

pub(crate) struct QuadTree {
    nodes: Vec<Node>,
}

impl QuadTree {
    pub(crate) fn build(y: &[[f64; 2]]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in y {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        let half = ((x1 - x0).max(y1 - y0) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let mut tree = QuadTree {
            nodes: vec![Node::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, half)],
        };
        for i in 0..y.len() {
            tree.insert(0, i, y, 0);
        }
        tree
    }

    fn insert(&mut self, node: usize, i: usize, y: &[[f64; 2]], depth: usize) {
        let n = &mut self.nodes[node];
        n.mass_x += y[i][0];
        n.mass_y += y[i][1];
        n.count += 1;
        if let Some(ch) = n.children {
            let q = n.quadrant(y[i]);
            return self.insert(ch[q], i, y, depth + 1);
        }
        if n.points.is_empty() || depth >= MAX_DEPTH {
            n.points.push(i);
            return;
        }
        let old = std::mem::take(&mut n.points);
        let (cx, cy, h) = (n.cx, n.cy, n.half / 2.0);
        let base = self.nodes.len();
        for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
            self.nodes.push(Node::new(cx + dx * h, cy + dy * h, h));
        }
        let n = &mut self.nodes[node];
        n.children = Some([base, base + 1, base + 2, base + 3]);
        for j in old.into_iter().chain(std::iter::once(i)) {
            let q = self.nodes[node].quadrant(y[j]);
            self.insert(base + q, j, y, depth + 1);
        }
    }

    /// Repulsive force on `i` and its share of the normalization,
    /// `(sum_j q_ij^2 (y_i - y_j), sum_j q_ij)` with `q_ij = 1 / (1 + d_ij^2)`.
    pub(crate) fn repulsion(&self, i: usize, y: &[[f64; 2]], theta: f64) -> ([f64; 2], f64) {
        let mut f = [0.0; 2];
        let mut z = 0.0;
        let mut stack = vec![0usize];
        let yi = y[i];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.count == 0 {
                continue;
            }
            match n.children {
                None => {
                    for &j in &n.points {
                        if j == i {
                            continue;
                        }
                        let (dx, dy) = (yi[0] - y[j][0], yi[1] - y[j][1]);
                        let q = 1.0 / (1.0 + dx * dx + dy * dy);
                        z += q;
                        f[0] += q * q * dx;
                        f[1] += q * q * dy;
                    }
                }
                Some(ch) => {
                    let c = n.count as f64;
                    let (dx, dy) = (yi[0] - n.mass_x / c, yi[1] - n.mass_y / c);
                    let d2 = dx * dx + dy * dy;
                    if theta > 0.0 && 2.0 * n.half < theta * d2.sqrt() {
                        let q = 1.0 / (1.0 + d2);
                        z += c * q;
                        f[0] += c * q * q * dx;
                        f[1] += c * q * q * dy;
                    } else {
                        stack.extend(ch);
                    }
                }
            }
        }
        (f, z)
    }
}

impl Node {
    fn new(cx: f64, cy: f64, half: f64) -> Self {
        Node {
            cx,
            cy,
            half,
            mass_x: 0.0,
            mass_y: 0.0,
            count: 0,
            children: None,
            points: Vec::new(),
        }
    }

    fn quadrant(&self, p: [f64; 2]) -> usize {
        usize::from(p[0] >= self.cx) + 2 * usize::from(p[1] >= self.cy)
    }
}

/// KL gradient for the current layout.
pub(crate) fn gradient(p: &SparseP, y: &[[f64; 2]], exaggeration: f64, theta: f64) -> Vec<[f64; 2]> {
    let tree = QuadTree::build(y);
    let n = y.len();
    let mut rep = vec![[0.0; 2]; n];
    let mut z = 0.0;
    for (i, r) in rep.iter_mut().enumerate() {
        let (f, zi) = tree.repulsion(i, y, theta);
        *r = f;
        z += zi;
    }
    let mut grad = vec![[0.0; 2]; n];
    for (i, row) in p.iter().enumerate() {
        let mut attr = [0.0; 2];
        for &(j, pij) in row {
            let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            attr[0] += exaggeration * pij * q * dx;
            attr[1] += exaggeration * pij * q * dy;
        }
        grad[i] = [4.0 * (attr[0] - rep[i][0] / z), 4.0 * (attr[1] - rep[i][1] / z)];
    }
    grad
}

pub(crate) fn run(x: &[Vec<f64>], s: &Settings) -> Vec<[f64; 2]> {
    let n = x.len();
    let p = input_affinities(x, s.perplexity);
    let mut rng = seed::rng(seed::derive(s.seed, "tsne/init"));
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [1e-4 * rng.sample::<f64, _>(StandardNormal), 1e-4 * rng.sample::<f64, _>(StandardNormal)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    for iter in 0..s.max_iter {
        let early = iter < s.exaggeration_iters;
        let exaggeration = if early { s.early_exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        let grad = gradient(&p, &y, exaggeration, s.theta);
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (velocity[i][d] > 0.0);
                gains[i][d] = if same_sign { (gains[i][d] * 0.8f64).max(0.01) } else { gains[i][d] + 0.2 };
                velocity[i][d] = momentum * velocity[i][d] - s.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        for d in 0..2 {
            let mean = y.iter().map(|p| p[d]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|p| p[d] -= mean);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_gradient(p: &SparseP, y: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let n = y.len();
        let mut dense = vec![vec![0.0; n]; n];
        for (i, row) in p.iter().enumerate() {
            for &(j, v) in row {
                dense[i][j] = v;
            }
        }
        let q = |i: usize, j: usize| {
            let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
            1.0 / (1.0 + dx * dx + dy * dy)
        };
        let z: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| q(i, j)).sum();
        (0..n)
            .map(|i| {
                let mut g = [0.0; 2];
                for j in (0..n).filter(|&j| j != i) {
                    let qij = q(i, j);
                    let c = 4.0 * (dense[i][j] - qij / z) * qij;
                    g[0] += c * (y[i][0] - y[j][0]);
                    g[1] += c * (y[i][1] - y[j][1]);
                }
                g
            })
            .collect()
    }

    fn cloud(n: usize, d: usize, s: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(s);
        (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    #[test]
    fn affinities_are_symmetric_and_normalized() {
        let x = cloud(40, 5, 1);
        let p = input_affinities(&x, 5.0);
        let total: f64 = p.iter().flatten().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (i, row) in p.iter().enumerate() {
            for &(j, v) in row {
                let back = p[j].iter().find(|e| e.0 == i).unwrap().1;
                assert!((v - back).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_tree_gradient_matches_brute_force() {
        let x = cloud(30, 4, 2);
        let p = input_affinities(&x, 4.0);
        let mut rng = seed::rng(3);
        let mut y: Vec<[f64; 2]> = (0..30).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        y[5] = y[4];
        let got = gradient(&p, &y, 1.0, 0.0);
        let want = brute_gradient(&p, &y);
        for (g, w) in got.iter().zip(&want) {
            assert!((g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12);
        }
        let approx = gradient(&p, &y, 1.0, 0.5);
        let err: f64 = approx.iter().zip(&want).map(|(a, w)| (a[0] - w[0]).abs() + (a[1] - w[1]).abs()).sum();
        let scale: f64 = want.iter().map(|w| w[0].abs() + w[1].abs()).sum();
        assert!(err / scale < 0.1, "{}", err / scale);
    }
}
