#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmam::nn::{loss_and_grad, NetworkSpec, ParamVector, Tensor};

/// Worst relative gap between analytic and central-difference gradients.
pub fn gradient_check(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.param_count();
    let params = ParamVector::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect());
    let [c, h, w] = spec.input_shape();
    let inputs: Vec<Tensor> = (0..4)
        .map(|_| {
            Tensor::new(
                vec![c, h, w],
                (0..c * h * w)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let labels: Vec<usize> = (0..4)
        .map(|_| rng.random_range(0..spec.num_classes()))
        .collect();
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let (_, grad) = loss_and_grad(&params, spec, &refs, &labels).unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let h = 1e-5 * params.as_slice()[i].abs().max(1.0);
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= h;
        let lp = loss_and_grad(&plus, spec, &refs, &labels).unwrap().0;
        let lm = loss_and_grad(&minus, spec, &refs, &labels).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        let analytic = grad.as_slice()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Krum scores by enumerating every neighbour set of the required size.
pub fn brute_scores(u: &[ParamVector], pool: &[usize], f: usize) -> Vec<f64> {
    let k = pool.len() - f - 2;
    pool.iter()
        .map(|&i| {
            let others: Vec<usize> = pool.iter().copied().filter(|&j| j != i).collect();
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << others.len()) {
                if mask.count_ones() as usize != k {
                    continue;
                }
                let s: f64 = (0..others.len())
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| u[i].squared_distance(&u[others[b]]))
                    .sum();
                best = best.min(s);
            }
            best
        })
        .collect()
}

pub fn first_argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

pub fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    r
}

/// Minimum spanning-tree weight by enumerating every (n-1)-edge subset.
pub fn brute_force_mst(d: &[Vec<f64>]) -> f64 {
    let n = d.len();
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(n - 1);
    fn rec(
        start: usize,
        edges: &[(usize, usize)],
        d: &[Vec<f64>],
        need: usize,
        chosen: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if chosen.len() == need {
            let n = need + 1;
            let mut parent: Vec<usize> = (0..n).collect();
            let mut w = 0.0;
            for &e in chosen.iter() {
                let (a, b) = edges[e];
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra == rb {
                    return;
                }
                parent[ra] = rb;
                w += d[a][b];
            }
            *best = best.min(w);
            return;
        }
        for e in start..edges.len() {
            if edges.len() - e < need - chosen.len() {
                break;
            }
            chosen.push(e);
            rec(e + 1, edges, d, need, chosen, best);
            chosen.pop();
        }
    }
    rec(0, &edges, d, n - 1, &mut chosen, &mut best);
    best
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the eigenvectors as columns.
pub fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub fn orthonormal_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut c in cols {
        for q in &out {
            let d: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().for_each(|x| *x /= n);
        out.push(c);
    }
    out
}

/// Frobenius norm of the part of span(b) outside span(a); bounds the sine
/// of the largest principal angle.
pub fn subspace_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for col in b {
        let mut r = col.clone();
        for q in a {
            let d: f64 = col.iter().zip(q).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        total += r.iter().map(|x| x * x).sum::<f64>();
    }
    total.sqrt()
}
