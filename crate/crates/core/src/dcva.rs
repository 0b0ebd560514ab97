//! Discriminative common vectors for the small-sample case (`d` much larger
//! than the number of training samples).
//!
//! Everything is computed from the sample vectors themselves: the within-class
//! scatter range is the span of the within-class difference vectors, the common
//! vector of a class is any of its samples with that span projected out, and the
//! discriminant directions are the principal axes of the centered common vectors.
//! Only `d x n` matrices (stored as columns) and `n x n` matrices are formed.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::ear::EarFeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum DcvaError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no samples")]
    EmptyClass(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "common vectors span {rank} dimensions, need {needed}: between-class scatter is degenerate"
    )]
    DegenerateClasses { rank: usize, needed: usize },
    #[error("malformed serialized model: {0}")]
    BadPayload(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSamples {
    labels: Vec<String>,
    samples: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl LabeledSamples {
    pub fn new(labels: Vec<String>, samples: Vec<Vec<Vec<f64>>>) -> Result<Self, DcvaError> {
        if labels.len() != samples.len() {
            return Err(DcvaError::DimensionMismatch {
                expected: labels.len(),
                got: samples.len(),
            });
        }
        for (label, class) in labels.iter().zip(&samples) {
            if class.is_empty() {
                return Err(DcvaError::EmptyClass(label.clone()));
            }
        }
        let dim = samples.first().map_or(0, |c| c[0].len());
        if let Some(bad) = samples.iter().flatten().find(|v| v.len() != dim) {
            return Err(DcvaError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Self {
            labels,
            samples,
            dim,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sample `i` of class `class`.
    pub fn sample(&self, class: usize, i: usize) -> &[f64] {
        &self.samples[class][i]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Removes the components of `v` along the orthonormal columns `q`, twice.
fn project_out(q: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = q.par_iter().map(|qi| dot(qi, v)).collect();
        for (c, qi) in coeffs.iter().zip(q) {
            axpy(-c, qi, v);
        }
    }
}

/// Orthonormal basis of `span(vectors)`, ordered by decreasing singular value.
///
/// Thin QR by classical Gram-Schmidt with re-orthogonalization, then an SVD of
/// the small triangular factor. Directions with singular value at or below
/// `max(d, m) * eps * sigma_max` are treated as null.
fn orthonormal_range(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = vectors.len();
    if m == 0 {
        return Vec::new();
    }
    let d = vectors[0].len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = DMatrix::<f64>::zeros(m, m);
    for (j, a) in vectors.iter().enumerate() {
        let mut v = a.clone();
        let mut before = norm(&v);
        // "twice is enough", with extra passes while cancellation is severe
        for _ in 0..4 {
            let coeffs: Vec<f64> = q.par_iter().map(|qi| dot(qi, &v)).collect();
            for (i, (c, qi)) in coeffs.iter().zip(&q).enumerate() {
                axpy(-c, qi, &mut v);
                r[(i, j)] += c;
            }
            let after = norm(&v);
            if after > 0.5 * before || after == 0.0 {
                break;
            }
            before = after;
        }
        let rjj = norm(&v);
        r[(j, j)] = rjj;
        if rjj > 0.0 {
            v.iter_mut().for_each(|x| *x /= rjj);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        q.push(v);
    }
    let svd = r.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = svd.singular_values[order[0]];
    let tol = d.max(m) as f64 * f64::EPSILON * sigma_max;
    order
        .into_iter()
        .filter(|&k| sigma_max > 0.0 && svd.singular_values[k] > tol)
        .map(|k| {
            let mut col = vec![0.0; d];
            for (i, qi) in q.iter().enumerate() {
                axpy(u[(i, k)], qi, &mut col);
            }
            col
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcvaModel {
    labels: Vec<String>,
    dim: usize,
    /// Orthonormal basis of the common-vector space (complement of the
    /// within-class scatter range inside the training span). Empty for models
    /// restored from a serialized payload.
    null_basis: Vec<Vec<f64>>,
    /// Coordinates of each class's full common vector in `null_basis`.
    null_coords: Vec<Vec<f64>>,
    /// `C - 1` orthonormal discriminant directions, each of length `d`.
    projection: Vec<Vec<f64>>,
    /// Reduced common vector per class, length `C - 1`.
    common_vectors: Vec<Vec<f64>>,
}

pub fn fit_dcva(data: &LabeledSamples) -> Result<DcvaModel, DcvaError> {
    let c = data.n_classes();
    if c < 2 {
        return Err(DcvaError::TooFewClasses(c));
    }
    let differences: Vec<Vec<f64>> = data
        .samples
        .iter()
        .flat_map(|class| {
            let first = &class[0];
            class[1..]
                .iter()
                .map(move |x| x.iter().zip(first).map(|(a, b)| a - b).collect())
        })
        .collect();
    let scatter_range = orthonormal_range(&differences);

    let common_full: Vec<Vec<f64>> = data
        .samples
        .par_iter()
        .map(|class| {
            let mut v = class[0].clone();
            project_out(&scatter_range, &mut v);
            v
        })
        .collect();
    drop(scatter_range);

    let null_basis = orthonormal_range(&common_full);
    let null_coords: Vec<Vec<f64>> = common_full
        .iter()
        .map(|v| null_basis.iter().map(|b| dot(b, v)).collect())
        .collect();

    // span of the centered common vectors = span of differences to one of them
    let last = &common_full[c - 1];
    let spread: Vec<Vec<f64>> = common_full[..c - 1]
        .iter()
        .map(|v| v.iter().zip(last).map(|(a, b)| a - b).collect())
        .collect();
    let basis = orthonormal_range(&spread);
    if basis.len() < c - 1 {
        return Err(DcvaError::DegenerateClasses {
            rank: basis.len(),
            needed: c - 1,
        });
    }

    // rotate onto the principal axes of the between-class scatter
    let k = basis.len();
    let coords: Vec<Vec<f64>> = common_full
        .iter()
        .map(|v| basis.iter().map(|b| dot(b, v)).collect())
        .collect();
    let mean: Vec<f64> = (0..k)
        .map(|i| coords.iter().map(|z| z[i]).sum::<f64>() / c as f64)
        .collect();
    let centered = DMatrix::from_fn(k, c, |i, j| coords[j][i] - mean[i]);
    let eig = SymmetricEigen::new(&centered * centered.transpose());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let projection: Vec<Vec<f64>> = order
        .iter()
        .map(|&e| {
            let mut col = vec![0.0; data.dim];
            for (i, b) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, e)], b, &mut col);
            }
            col
        })
        .collect();
    drop(basis);

    let common_vectors = common_full
        .iter()
        .map(|v| projection.iter().map(|w| dot(w, v)).collect())
        .collect();
    Ok(DcvaModel {
        labels: data.labels.clone(),
        dim: data.dim,
        null_basis,
        null_coords,
        projection,
        common_vectors,
    })
}

impl DcvaModel {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reduced_dim(&self) -> usize {
        self.projection.len()
    }

    pub fn projection(&self) -> &[Vec<f64>] {
        &self.projection
    }

    pub fn common_vectors(&self) -> &[Vec<f64>] {
        &self.common_vectors
    }

    pub fn null_basis(&self) -> &[Vec<f64>] {
        &self.null_basis
    }

    /// Class `k`'s common vector in the original `d`-dimensional space, if the
    /// null-space basis is available.
    pub fn common_vector_full(&self, k: usize) -> Option<Vec<f64>> {
        if self.null_basis.is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.dim];
        for (b, &c) in self.null_basis.iter().zip(&self.null_coords[k]) {
            axpy(c, b, &mut out);
        }
        Some(out)
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, DcvaError> {
        if v.len() != self.dim {
            return Err(DcvaError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(self.projection.par_iter().map(|w| dot(w, v)).collect())
    }

    /// Euclidean distance from the projected vector to every class's common vector.
    pub fn distances(&self, v: &[f64]) -> Result<Vec<f64>, DcvaError> {
        let p = self.project(v)?;
        Ok(self
            .common_vectors
            .iter()
            .map(|cv| {
                cv.iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }

    pub fn match_ear(&self, probe: &EarFeatureVector) -> Result<Vec<f64>, DcvaError> {
        self.distances(&probe.values)
    }

    /// Flat `[C - 1, d + C]` matrix: row `i` is discriminant direction `i`
    /// followed by the `i`-th coordinate of every class's reduced common vector.
    pub fn to_payload(&self) -> (Vec<usize>, Vec<f64>) {
        let c = self.labels.len();
        let mut payload = Vec::with_capacity(self.projection.len() * (self.dim + c));
        for (i, w) in self.projection.iter().enumerate() {
            payload.extend_from_slice(w);
            payload.extend(self.common_vectors.iter().map(|cv| cv[i]));
        }
        (vec![self.projection.len(), self.dim + c], payload)
    }

    pub fn from_payload(
        labels: Vec<String>,
        shape: &[usize],
        payload: &[f64],
    ) -> Result<Self, DcvaError> {
        let c = labels.len();
        let [k, width] = shape else {
            return Err(DcvaError::BadPayload(format!("shape {shape:?} is not 2-D")));
        };
        let (k, width) = (*k, *width);
        if c < 2 || k != c - 1 || width <= c || payload.len() != k * width {
            return Err(DcvaError::BadPayload(format!(
                "shape {shape:?} with {} values does not fit {c} classes",
                payload.len()
            )));
        }
        let dim = width - c;
        let rows: Vec<&[f64]> = payload.chunks_exact(width).collect();
        Ok(Self {
            projection: rows.iter().map(|r| r[..dim].to_vec()).collect(),
            common_vectors: (0..c)
                .map(|j| rows.iter().map(|r| r[dim + j]).collect())
                .collect(),
            labels,
            dim,
            null_basis: Vec::new(),
            null_coords: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_data(classes: usize, per_class: usize, d: usize, seed: u64) -> LabeledSamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LabeledSamples::new(
            (0..classes).map(|c| format!("c{c}")).collect(),
            (0..classes)
                .map(|_| (0..per_class).map(|_| random_vec(&mut rng, d)).collect())
                .collect(),
        )
        .unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_unit_vectors() {
        let data = LabeledSamples::new(
            vec!["a".into(), "b".into()],
            vec![vec![vec![1.0, 0.0, 0.0]], vec![vec![0.0, 1.0, 0.0]]],
        )
        .unwrap();
        let m = fit_dcva(&data).unwrap();
        assert_eq!(m.reduced_dim(), 1);
        let (a, b) = (m.common_vectors()[0][0], m.common_vectors()[1][0]);
        // direction is +-(1, -1, 0)/sqrt(2)
        assert!((a.abs() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((a + b).abs() < 1e-12);
        let h = 0.5f64.sqrt();
        let d = m.distances(&[2.0, 0.0, 0.0]).unwrap();
        assert!((d[0] - h).abs() < 1e-12 && (d[1] - 3.0 * h).abs() < 1e-12);
        let d = m.distances(&[0.0, 0.0, 1.0]).unwrap();
        assert!((d[0] - h).abs() < 1e-12 && (d[1] - h).abs() < 1e-12);
        let d = m.distances(&[1.0, 0.0, 0.0]).unwrap();
        assert!(d[0].abs() < 1e-12 && (d[1] - 2.0 * h).abs() < 1e-12);
    }

    #[test]
    fn one_sample_per_class_keeps_samples() {
        let data = random_data(5, 1, 40, 2);
        let m = fit_dcva(&data).unwrap();
        assert_eq!(m.reduced_dim(), 4);
        for k in 0..5 {
            let full = m.common_vector_full(k).unwrap();
            assert!(max_abs_diff(&full, &data.samples[k][0]) < 1e-12);
            assert!(m.distances(&data.samples[k][0]).unwrap()[k] < 1e-12);
        }
    }

    #[test]
    fn within_class_collapse() {
        let data = random_data(3, 2, 50, 3);
        let m = fit_dcva(&data).unwrap();
        assert_eq!(m.reduced_dim(), 2);
        for (k, class) in data.samples.iter().enumerate() {
            let (x, y) = (&class[0], &class[1]);
            let (px, py) = (m.project(x).unwrap(), m.project(y).unwrap());
            assert!(max_abs_diff(&px, &py) <= 1e-8 * norm(x));
            assert!(max_abs_diff(&px, &m.common_vectors()[k]) <= 1e-8);
        }
    }

    #[test]
    fn projection_is_orthonormal() {
        let m = fit_dcva(&random_data(6, 3, 80, 4)).unwrap();
        let p = m.projection();
        for i in 0..p.len() {
            for j in 0..p.len() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&p[i], &p[j]) - expected).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn linear_and_blind_to_within_class_differences() {
        let data = random_data(4, 3, 30, 5);
        let m = fit_dcva(&data).unwrap();
        assert!(m.project(&[0.0; 30]).unwrap().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = random_vec(&mut rng, 30);
        let s = &data.samples[2];
        let shifted: Vec<f64> = v
            .iter()
            .zip(&s[2])
            .zip(&s[0])
            .map(|((v, a), b)| v + a - b)
            .collect();
        assert!(max_abs_diff(&m.project(&v).unwrap(), &m.project(&shifted).unwrap()) < 1e-8);
    }

    #[test]
    fn class_order_does_not_change_rankings() {
        let data = random_data(4, 2, 25, 7);
        let m = fit_dcva(&data).unwrap();
        let perm = [2usize, 0, 3, 1];
        let permuted = LabeledSamples::new(
            perm.iter().map(|&i| data.labels[i].clone()).collect(),
            perm.iter().map(|&i| data.samples[i].clone()).collect(),
        )
        .unwrap();
        let mp = fit_dcva(&permuted).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let v = random_vec(&mut rng, 25);
            let (d, dp) = (m.distances(&v).unwrap(), mp.distances(&v).unwrap());
            for (j, &i) in perm.iter().enumerate() {
                assert!((dp[j] - d[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_and_malformed_inputs() {
        let same = vec![vec![1.0, 2.0, 3.0]];
        let data =
            LabeledSamples::new(vec!["a".into(), "b".into()], vec![same.clone(), same]).unwrap();
        assert!(matches!(
            fit_dcva(&data),
            Err(DcvaError::DegenerateClasses { rank: 0, needed: 1 })
        ));
        let one = LabeledSamples::new(vec!["a".into()], vec![vec![vec![1.0]]]).unwrap();
        assert_eq!(fit_dcva(&one), Err(DcvaError::TooFewClasses(1)));
        assert!(matches!(
            LabeledSamples::new(
                vec!["a".into(), "b".into()],
                vec![vec![vec![1.0]], vec![vec![1.0, 2.0]]]
            ),
            Err(DcvaError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            LabeledSamples::new(vec!["a".into()], vec![vec![]]),
            Err(DcvaError::EmptyClass(_))
        ));
        let m = fit_dcva(&random_data(3, 1, 10, 9)).unwrap();
        assert_eq!(
            m.project(&[0.0; 9]),
            Err(DcvaError::DimensionMismatch {
                expected: 10,
                got: 9
            })
        );
    }

    #[test]
    fn payload_round_trip() {
        let m = fit_dcva(&random_data(3, 2, 12, 10)).unwrap();
        let (shape, payload) = m.to_payload();
        assert_eq!(shape, vec![2, 15]);
        let back = DcvaModel::from_payload(m.labels().to_vec(), &shape, &payload).unwrap();
        assert_eq!(back.projection(), m.projection());
        assert_eq!(back.common_vectors(), m.common_vectors());
        assert!(back.common_vector_full(0).is_none());
        assert!(DcvaModel::from_payload(m.labels().to_vec(), &[3, 15], &payload).is_err());
    }
}
