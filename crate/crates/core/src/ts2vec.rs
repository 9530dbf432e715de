//! Hidden-layer activations as time-series features ("TimeSeries2Vec"),
//! with cosine similarity search and k-means clustering over them.
//!
//! The two hidden layers are exposed both separately and concatenated;
//! similarity and clustering operate on the concatenation.

use crate::mlp::{MlpError, MlpModel};
use crate::model::WindowSample;
use crate::seeds;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Ts2VecError {
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("k-means needs at least k = {k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },
    #[error("k must be >= 1")]
    BadK,
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Hidden-layer activation vectors of one window under a frozen model.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub layer1: Vec<f64>,
    pub layer2: Vec<f64>,
    pub source_id: String,
    pub pending_timestamp: i64,
}

impl Embedding {
    /// Concatenation of both hidden layers.
    pub fn combined(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layer1.len() + self.layer2.len());
        v.extend_from_slice(&self.layer1);
        v.extend_from_slice(&self.layer2);
        v
    }
}

/// Embed one window: post-activation hidden outputs in inference mode.
pub fn embed(model: &MlpModel, sample: &WindowSample) -> Result<Embedding, Ts2VecError> {
    let (layer1, layer2) = model.hidden_activations(&sample.joint)?;
    Ok(Embedding {
        layer1,
        layer2,
        source_id: sample.source_id.clone(),
        pending_timestamp: sample.pending_timestamp,
    })
}

/// Cosine similarity; defined as 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, Ts2VecError> {
    if u.len() != v.len() {
        return Err(Ts2VecError::LengthMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

/// One ranked similarity hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHit {
    pub index: usize,
    pub source_id: String,
    pub pending_timestamp: i64,
    pub similarity: f64,
}

/// Top-k corpus entries by cosine similarity on combined vectors,
/// descending, ties broken by corpus order. Entries matching the query's
/// (id, timestamp) are excluded.
pub fn top_k_similar(
    query: &Embedding,
    corpus: &[Embedding],
    k: usize,
) -> Result<Vec<SimilarityHit>, Ts2VecError> {
    let qv = query.combined();
    let mut hits = Vec::new();
    for (index, e) in corpus.iter().enumerate() {
        if e.source_id == query.source_id && e.pending_timestamp == query.pending_timestamp {
            continue;
        }
        let similarity = cosine(&qv, &e.combined())?;
        hits.push(SimilarityHit {
            index,
            source_id: e.source_id.clone(),
            pending_timestamp: e.pending_timestamp,
            similarity,
        });
    }
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.index.cmp(&b.index))
    });
    hits.truncate(k);
    Ok(hits)
}

/// K-means result: per-point assignments, final centroids, total inertia,
/// and the inertia after each Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding; deterministic per seed. An
/// emptied cluster is reseeded at the point farthest from its own centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KmeansResult, Ts2VecError> {
    if k < 1 {
        return Err(Ts2VecError::BadK);
    }
    if points.len() < k {
        return Err(Ts2VecError::TooFewPoints {
            k,
            points: points.len(),
        });
    }
    let mut rng = seeds::rng(seeds::derive(seed, "kmeans.init"));

    // k-means++: first centroid uniform, then D^2-weighted.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut min_d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // All remaining points coincide with a centroid.
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in min_d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let dim = points[0].len();
    let mut assignments = vec![0usize; points.len()];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // Assign.
        let mut inertia = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, centroid)| (c, sq_dist(p, centroid)))
                .min_by(|(_, d1), (_, d2)| d1.total_cmp(d2))
                .unwrap();
            *a = best;
            inertia += d;
        }
        inertia_trace.push(inertia);

        // Update.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed at the point farthest from its assigned centroid.
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        sq_dist(&points[i], &centroids[assignments[i]])
                            .total_cmp(&sq_dist(&points[j], &centroids[assignments[j]]))
                    })
                    .unwrap();
                movement = movement.max(sq_dist(&centroids[c], &points[far]).sqrt());
                centroids[c] = points[far].clone();
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            movement = movement.max(sq_dist(&centroids[c], &new).sqrt());
            centroids[c] = new;
        }
        if movement < tol {
            break;
        }
    }

    // Final assignment against the last centroids.
    let mut inertia = 0.0;
    for (a, p) in assignments.iter_mut().zip(points) {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, centroid)| (c, sq_dist(p, centroid)))
            .min_by(|(_, d1), (_, d2)| d1.total_cmp(d2))
            .unwrap();
        *a = best;
        inertia += d;
    }
    inertia_trace.push(inertia);

    Ok(KmeansResult {
        assignments,
        centroids,
        inertia,
        inertia_trace,
        iterations,
    })
}

/// Fraction of points whose cluster's majority family matches their own.
pub fn cluster_purity(assignments: &[usize], families: &[usize], k: usize) -> f64 {
    assert_eq!(assignments.len(), families.len());
    let n_families = families.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; n_families]; k];
    for (&a, &f) in assignments.iter().zip(families) {
        table[a][f] += 1;
    }
    let majority: usize = table
        .iter()
        .map(|row| row.iter().max().copied().unwrap_or(0))
        .sum();
    majority as f64 / assignments.len() as f64
}
