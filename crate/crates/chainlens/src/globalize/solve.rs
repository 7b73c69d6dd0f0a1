//! Conjugate-gradient minimization of the pairwise objective with
//! per-component mean-zero gauge fixing.

use super::QuadraticObjective;

const CG_TOLERANCE: f64 = 1e-10;

/// Globalized per-segment scalar field. Values are mean-zero within each
/// connected component of the comparison+adjacency graph; `component[i]`
/// records which gauge group segment `i` belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RankField {
    values: Vec<f64>,
    component: Vec<u32>,
}

impl RankField {
    pub fn from_values(values: Vec<f64>, component: Vec<u32>) -> Self {
        assert_eq!(values.len(), component.len());
        Self { values, component }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self) -> &[u32] {
        &self.component
    }

    pub fn component_count(&self) -> u32 {
        self.component.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Minimize the objective and fix the additive gauge by subtracting the mean
/// within each connected component. The PSD system is always solvable: its
/// null space is exactly the per-component constants, and the right-hand
/// side is orthogonal to them by construction.
pub fn solve_ranks(objective: &QuadraticObjective) -> RankField {
    let k = objective.k();
    let component = components(objective);
    if objective.is_zero() {
        return RankField {
            values: vec![0.0; k],
            component,
        };
    }

    let b = objective.linear();
    let mut x = vec![0.0; k];
    let b_norm = norm(b);
    if b_norm > 0.0 {
        conjugate_gradient(objective, b, &mut x, 10 * k.max(1), CG_TOLERANCE * b_norm);
    }

    // Gauge: per-component mean zero.
    let n_comp = component.iter().copied().max().map_or(0, |m| m + 1) as usize;
    let mut sums = vec![0.0; n_comp];
    let mut counts = vec![0usize; n_comp];
    for (xi, &c) in x.iter().zip(&component) {
        sums[c as usize] += xi;
        counts[c as usize] += 1;
    }
    for (xi, &c) in x.iter_mut().zip(&component) {
        *xi -= sums[c as usize] / counts[c as usize] as f64;
    }
    RankField {
        values: x,
        component,
    }
}

fn conjugate_gradient(
    objective: &QuadraticObjective,
    b: &[f64],
    x: &mut [f64],
    max_iter: usize,
    tol: f64,
) {
    let k = b.len();
    let mut r = b.to_vec(); // x starts at 0 so r = b
    let mut p = r.clone();
    let mut ap = vec![0.0; k];
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        if rs_old.sqrt() <= tol {
            break;
        }
        objective.matvec(&p, &mut ap);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if p_ap <= 0.0 {
            break; // numerically exhausted the range space
        }
        let alpha = rs_old / p_ap;
        for i in 0..k {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for i in 0..k {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Connected components of the combined comparison+adjacency graph,
/// labeled densely in order of smallest member id.
fn components(objective: &QuadraticObjective) -> Vec<u32> {
    let k = objective.k();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(i, j) in objective.edges() {
        let (a, b) = (find(&mut parent, i as usize), find(&mut parent, j as usize));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut dense: std::collections::HashMap<usize, u32> = Default::default();
    let mut out = vec![0u32; k];
    for i in 0..k {
        let root = find(&mut parent, i);
        let next = dense.len() as u32;
        out[i] = *dense.entry(root).or_insert(next);
    }
    out
}
