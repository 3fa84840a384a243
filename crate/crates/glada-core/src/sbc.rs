//! Similarity-based classification by label spreading over a kNN affinity
//! graph built on encoder features.
//!
//! Samples `i` and `j` are connected when either lies in the other's
//! k-nearest set (Euclidean). Edge weights are RBF on the squared distance
//! with bandwidth sigma = median kNN distance; if that median is zero
//! (duplicate-heavy or degenerate features) the weights fall back to
//! uniform. Propagation iterates `F <- alpha*S*F + (1-alpha)*Y0` on the
//! symmetrically normalized graph until the largest entry change drops
//! below tolerance, after which known labels overwrite their rows.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::pseudolabel::PseudoLabelState;

/// Label-spreading settings; every value is configurable because the method
/// itself is standard machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct SbcConfig {
    pub k_neighbors: usize,
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SbcConfig {
    fn default() -> Self {
        Self { k_neighbors: 7, alpha: 0.2, max_iter: 30, tol: 1e-3 }
    }
}

impl SbcConfig {
    fn validate(&self) -> Result<(), CoreError> {
        if self.k_neighbors == 0 || !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.tol > 0.0) {
            return Err(CoreError::InvalidDataset(alloc::string::String::from(
                "label spreading needs k >= 1, alpha in (0,1), tol > 0",
            )));
        }
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Predicts a label for every one of the `p` feature rows. Labeled entries
/// of `state` act as spreading seeds and keep their labels in the output.
/// Argmax ties break toward the smallest class index.
pub fn sbc_fit_predict(
    features: &[f64],
    p: usize,
    state: &PseudoLabelState,
    cfg: &SbcConfig,
) -> Result<Vec<i32>, CoreError> {
    cfg.validate()?;
    if p == 0 || features.is_empty() {
        return Err(CoreError::EmptyInput("label spreading features"));
    }
    if features.len() % p != 0 || state.entries().len() != p {
        return Err(CoreError::ShapeMismatch {
            context: "label spreading features",
            expected: p,
            got: state.entries().len(),
        });
    }
    let dim = features.len() / p;
    let k_classes = state.num_classes();

    let seeds: Vec<(usize, i32)> = state
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_labeled())
        .map(|(i, e)| (i, e.label))
        .collect();
    if seeds.is_empty() {
        return Err(CoreError::AllUnlabeled);
    }

    let knn = cfg.k_neighbors.min(p - 1);
    let mut out = vec![0i32; p];
    if knn == 0 {
        // Single sample; it is a seed by the check above.
        out[0] = seeds[0].1;
        return Ok(out);
    }

    // Squared Euclidean distances, then each row's k nearest (self excluded).
    let row = |i: usize| &features[i * dim..(i + 1) * dim];
    let mut neighbor_lists: Vec<Vec<(usize, f64)>> = Vec::with_capacity(p);
    let mut knn_dists: Vec<f64> = Vec::with_capacity(p * knn);
    for i in 0..p {
        let fi = row(i);
        let mut dists: Vec<(usize, f64)> = (0..p)
            .filter(|&j| j != i)
            .map(|j| {
                let fj = row(j);
                let mut d2 = 0.0;
                for t in 0..dim {
                    let diff = fi[t] - fj[t];
                    d2 += diff * diff;
                }
                (j, d2)
            })
            .collect();
        dists.sort_unstable_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        dists.truncate(knn);
        for &(_, d2) in &dists {
            knn_dists.push(libm::sqrt(d2));
        }
        neighbor_lists.push(dists);
    }

    let sigma = median(&mut knn_dists);
    let uniform = !(sigma > 0.0) || !sigma.is_finite();
    let weight = |d2: f64| if uniform { 1.0 } else { libm::exp(-d2 / (2.0 * sigma * sigma)) };

    // Symmetric adjacency: i-j connected if either is in the other's kNN.
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (i, list) in neighbor_lists.iter().enumerate() {
        for &(j, d2) in list {
            let w = weight(d2);
            if !adj[i].iter().any(|&(n, _)| n == j) {
                adj[i].push((j, w));
            }
            if !adj[j].iter().any(|&(n, _)| n == i) {
                adj[j].push((i, w));
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable_by_key(|&(j, _)| j);
    }

    let degree: Vec<f64> = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
    let inv_sqrt_deg: Vec<f64> =
        degree.iter().map(|&d| if d > 0.0 { 1.0 / libm::sqrt(d) } else { 0.0 }).collect();

    // Y0: one-hot seed rows, zero elsewhere. F starts at Y0.
    let mut y0 = vec![0.0; p * k_classes];
    for &(i, label) in &seeds {
        y0[i * k_classes + label as usize] = 1.0;
    }
    let mut f = y0.clone();
    let mut f_next = vec![0.0; p * k_classes];
    for _ in 0..cfg.max_iter {
        let mut max_change = 0.0f64;
        for i in 0..p {
            let base = i * k_classes;
            for c in 0..k_classes {
                let mut spread = 0.0;
                for &(j, w) in &adj[i] {
                    spread += inv_sqrt_deg[i] * w * inv_sqrt_deg[j] * f[j * k_classes + c];
                }
                let v = cfg.alpha * spread + (1.0 - cfg.alpha) * y0[base + c];
                let change = (v - f[base + c]).abs();
                if change > max_change {
                    max_change = change;
                }
                f_next[base + c] = v;
            }
        }
        core::mem::swap(&mut f, &mut f_next);
        if max_change < cfg.tol {
            break;
        }
    }

    for i in 0..p {
        let scores = &f[i * k_classes..][..k_classes];
        let mut best = 0usize;
        for c in 1..k_classes {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        out[i] = best as i32;
    }
    // Known labels win over anything the propagation produced.
    for &(i, label) in &seeds {
        out[i] = label;
    }
    Ok(out)
}
