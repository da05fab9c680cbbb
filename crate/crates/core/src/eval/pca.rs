//! Two-component PCA by power iteration with deflation.
//!
//! The covariance is never formed: products `C v` are computed from the
//! sparse rows as `X^T (X v) / n - mu (mu . v)`, so the cost per iteration is
//! linear in the number of non-zeros.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature::{PuDataset, SparseBinaryVector};

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub group: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub rows: Vec<PcaRow>,
    /// Unit-length principal directions.
    pub components: [Vec<f64>; 2],
    /// Variance along each direction (eigenvalues of the covariance).
    pub explained_variance: [f64; 2],
    /// Set when the data has no variance; every coordinate is then 0.
    pub degenerate: bool,
}

struct Centered<'a> {
    rows: Vec<&'a SparseBinaryVector>,
    mean: Vec<f64>,
}

impl Centered<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.rows.len() as f64;
        let mut out = vec![0.0; v.len()];
        for r in &self.rows {
            let xv = r.dot(v);
            for i in r.iter() {
                out[i] += xv;
            }
        }
        let mu_v = dot(&self.mean, v);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o = *o / n - m * mu_v;
        }
        out
    }

    fn project(&self, r: &SparseBinaryVector, direction: &[f64]) -> f64 {
        r.dot(direction) - dot(&self.mean, direction)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let c = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
    }
}

/// Leading eigenvector of `C` restricted to the complement of `found`.
fn power_iteration(c: &Centered<'_>, found: &[Vec<f64>], d: usize) -> (Vec<f64>, f64) {
    // Deterministic start with no symmetry to get stuck on.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
    orthogonalize(&mut v, found);
    if normalize(&mut v) == 0.0 {
        return (vec![0.0; d], 0.0);
    }
    let mut lambda = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let mut w = c.apply(&v);
        orthogonalize(&mut w, found);
        lambda = dot(&w, &v);
        if normalize(&mut w) == 0.0 {
            return (v, 0.0);
        }
        if dot(&w, &v) < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < TOLERANCE {
            break;
        }
    }
    let cv = c.apply(&v);
    lambda = lambda.max(dot(&cv, &v));
    (v, lambda)
}

pub fn pca_project(ds: &PuDataset) -> Result<PcaProjection> {
    if ds.is_empty() {
        return Err(Error::Dataset("PCA needs at least one sample".into()));
    }
    let d = ds.dimension();
    let rows: Vec<&SparseBinaryVector> = ds.samples().map(|s| &s.features).collect();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for i in r.iter() {
            mean[i] += 1.0;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered = Centered { rows, mean };

    let (first, l1) = power_iteration(&centered, &[], d);
    let (second, l2) = power_iteration(&centered, std::slice::from_ref(&first), d);
    let scale = l1.abs().max(1.0);
    let degenerate = l1 <= 1e-12 * scale;

    let out = ds
        .samples()
        .map(|s| {
            let (x, y) = if degenerate {
                (0.0, 0.0)
            } else {
                (centered.project(&s.features, &first), centered.project(&s.features, &second))
            };
            PcaRow { id: s.id.clone(), x, y, group: if s.discovery { "positive" } else { "unlabeled" } }
        })
        .collect();

    Ok(PcaProjection {
        rows: out,
        components: [first, second],
        explained_variance: [l1.max(0.0), l2.max(0.0)],
        degenerate,
    })
}

impl PcaProjection {
    /// CSV with header `id,x,y,group`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(["id", "x", "y", "group"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([r.id.as_str(), &format!("{:.9e}", r.x), &format!("{:.9e}", r.y), r.group])
                .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::Rng;

    use super::*;
    use crate::eval::synthetic::synthetic_space;
    use crate::feature::AppSample;
    use crate::rng;

    fn dataset(rows: Vec<Vec<usize>>, d: usize) -> PuDataset {
        let samples: Vec<AppSample> = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| AppSample::new(format!("s{i:03}"), SparseBinaryVector::from_indices(r), false, None).unwrap())
            .collect();
        PuDataset::new(Arc::new(synthetic_space(d)), Vec::new(), samples).unwrap()
    }

    fn random_rows(n: usize, densities: &[f64], seed: u64) -> Vec<Vec<usize>> {
        let mut r = rng::rng(seed);
        (0..n)
            .map(|_| (0..densities.len()).filter(|&i| r.gen::<f64>() < densities[i]).collect())
            .collect()
    }

    #[test]
    fn two_dimensional_data_is_rotated() {
        let rows = random_rows(60, &[0.3, 0.6], 1);
        let ds = dataset(rows.clone(), 2);
        let p = pca_project(&ds).unwrap();
        assert!(!p.degenerate);
        let point = |r: &[usize]| [r.contains(&0) as u8 as f64, r.contains(&1) as u8 as f64];
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                let (pa, pb) = (point(&rows[a]), point(&rows[b]));
                let original = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
                let projected = ((p.rows[a].x - p.rows[b].x).powi(2) + (p.rows[a].y - p.rows[b].y).powi(2)).sqrt();
                assert!((original - projected).abs() < 1e-6, "{a} {b}: {original} vs {projected}");
            }
        }
    }

    #[test]
    fn duplicated_data_has_the_same_directions() {
        let rows = random_rows(80, &[0.1, 0.5, 0.3, 0.7, 0.2, 0.4], 2);
        let once = pca_project(&dataset(rows.clone(), 6)).unwrap();
        let twice = pca_project(&dataset(rows.iter().chain(&rows).cloned().collect(), 6)).unwrap();
        for k in 0..2 {
            let cos = dot(&once.components[k], &twice.components[k]).abs();
            assert!((cos - 1.0).abs() < 1e-6, "component {k}: |cos| = {cos}");
            assert!((once.explained_variance[k] - twice.explained_variance[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_full_eigendecomposition() {
        let densities = [0.05, 0.5, 0.2, 0.45, 0.1, 0.3, 0.15, 0.4, 0.25, 0.35];
        let mut r = rng::rng(3);
        // A shared latent bit correlates the first three features so the
        // leading eigenvalue is well separated.
        let rows: Vec<Vec<usize>> = (0..400)
            .map(|_| {
                let latent = r.gen::<f64>() < 0.5;
                (0..10)
                    .filter(|&i| if i < 3 && latent { r.gen::<f64>() < 0.9 } else { r.gen::<f64>() < densities[i] })
                    .collect()
            })
            .collect();
        let p = pca_project(&dataset(rows.clone(), 10)).unwrap();

        let n = rows.len() as f64;
        let x = DMatrix::from_fn(rows.len(), 10, |i, j| if rows[i].contains(&j) { 1.0 } else { 0.0 });
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(rows.len(), 10, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / n;
        let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!((p.explained_variance[0] - eig[0]).abs() < 1e-6, "{} vs {}", p.explained_variance[0], eig[0]);
        assert!((p.explained_variance[1] - eig[1]).abs() < 1e-6, "{} vs {}", p.explained_variance[1], eig[1]);
    }

    #[test]
    fn constant_data_is_flagged() {
        let p = pca_project(&dataset(vec![vec![1], vec![1], vec![1]], 3)).unwrap();
        assert!(p.degenerate);
        assert!(p.rows.iter().all(|r| r.x == 0.0 && r.y == 0.0));
        assert!(p.to_csv().unwrap().starts_with("id,x,y,group\n"));
    }
}
