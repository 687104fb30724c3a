use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{ClientShard, Dataset};
use crate::error::{Error, Result};

/// Draws one point from a symmetric Dirichlet(alpha) over `n` categories.
pub(crate) fn dirichlet(n: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::arg(format!("gamma({alpha}): {e}")))?;
    let mut p: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = p.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        p.iter_mut().for_each(|v| *v /= sum);
    } else {
        p.iter_mut().for_each(|v| *v = 1.0 / n as f64);
    }
    Ok(p)
}

/// Non-i.i.d. split into `n_clients` benign shards. For each class, the
/// share each client receives is one Dirichlet(alpha) draw. A client left
/// without data takes one example from the currently largest shard.
pub fn dirichlet_partition(
    data: &Dataset,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if n_clients == 0 {
        return Err(Error::arg("need at least one client"));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
    }
    if n_clients > data.len() {
        return Err(Error::arg(format!(
            "{n_clients} clients but only {} examples",
            data.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); data.num_classes()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for mut idx in by_class {
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let p = dirichlet(n_clients, alpha, &mut rng)?;
        let n = idx.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (c, share) in p.iter().enumerate() {
            cum += share;
            let end = if c + 1 == n_clients {
                n
            } else {
                ((cum * n as f64).round() as usize).clamp(start, n)
            };
            assigned[c].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }

    while let Some(empty) = assigned.iter().position(|a| a.is_empty()) {
        let largest = (0..n_clients)
            .max_by_key(|&c| (assigned[c].len(), std::cmp::Reverse(c)))
            .expect("at least one client");
        let moved = assigned[largest].pop().expect("largest shard is nonempty");
        assigned[empty].push(moved);
    }

    assigned
        .into_iter()
        .enumerate()
        .map(|(c, mut idx)| {
            idx.sort_unstable();
            let shard = data.subset(format!("client-{c}"), &idx)?;
            Ok(ClientShard::benign(c, shard))
        })
        .collect()
}
