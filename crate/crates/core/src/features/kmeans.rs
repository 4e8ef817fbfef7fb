//! Lloyd's k-means with k-means++ seeding, and the visual-word codebook.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::Descriptor;

/// `K` centroids; word `K` is reserved for low-variance patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Array2<f64>,
}

impl Codebook {
    pub fn new(centroids: Array2<f64>) -> Result<Self> {
        if centroids.nrows() == 0 || centroids.ncols() == 0 {
            return Err(Error::rejected("codebook must have at least one centroid"));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::rejected("codebook centroids must be finite"));
        }
        Ok(Codebook { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    /// Little-endian: magic `CBK1`, `u32` K, `u32` dim, then `f64` centroids row by row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.centroids.len());
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in self.centroids.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = |offset| Error::Format {
            offset,
            msg: "codebook stream truncated".into(),
        };
        if bytes.len() < 12 {
            return Err(truncated(bytes.len()));
        }
        if &bytes[..4] != CODEBOOK_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected \"CBK1\"".into(),
            });
        }
        let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = 12 + 8 * k * dim;
        if bytes.len() < expected {
            return Err(truncated(bytes.len()));
        }
        if bytes.len() > expected {
            return Err(Error::Format {
                offset: expected,
                msg: "trailing bytes after centroids".into(),
            });
        }
        let values = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let centroids = Array2::from_shape_vec((k, dim), values).expect("length checked");
        Codebook::new(centroids).map_err(|e| Error::Format {
            offset: 4,
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::harness::output::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const CODEBOOK_MAGIC: &[u8; 4] = b"CBK1";

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Visual word for a descriptor: `K` when low-variance, else the nearest centroid.
pub fn quantize(d: &Descriptor, cb: &Codebook) -> Result<usize> {
    if d.low_variance {
        return Ok(cb.k());
    }
    if d.values.len() != cb.dim() {
        return Err(Error::rejected(format!(
            "descriptor has {} dimensions, codebook has {}",
            d.values.len(),
            cb.dim()
        )));
    }
    Ok(nearest(ArrayView1::from(&d.values[..]), &cb.centroids).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after the initial assignment and after each
    /// Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

impl KmeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    points.rows().into_iter().map(|p| nearest(p, centroids)).unzip()
}

fn plus_plus_init<R: Rng>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // All remaining points coincide with chosen centers.
            Err(_) => (0..n).find(|i| !chosen.contains(i)).unwrap(),
        };
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points.rows()) {
            *d = d.min(sq_dist(p, points.row(next)));
        }
    }
    let mut centroids = Array2::zeros((k, points.ncols()));
    for (row, &i) in chosen.iter().enumerate() {
        centroids.row_mut(row).assign(&points.row(i));
    }
    centroids
}

/// Seeded k-means over the rows of `points`.
///
/// Stops after `max_iters` Lloyd iterations or when assignments no longer
/// change. A cluster that ends up empty is moved onto the point farthest from
/// its current centroid.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KmeansResult> {
    if k == 0 {
        return Err(Error::rejected("k must be positive"));
    }
    if points.nrows() < k {
        return Err(Error::rejected(format!(
            "{} points cannot form {k} clusters",
            points.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let (mut assignments, mut dists) = assign(points, &centroids);
    let mut trace = vec![dists.iter().sum::<f64>()];

    for _ in 0..max_iters {
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (p, &a) in points.rows().into_iter().zip(&assignments) {
            let mut row = sums.row_mut(a);
            row += &p;
            counts[a] += 1;
        }
        let mut taken = vec![false; points.nrows()];
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            } else {
                let far = (0..points.nrows())
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("at least k points");
                taken[far] = true;
                centroids.row_mut(c).assign(&points.row(far));
            }
        }
        let (next, next_dists) = assign(points, &centroids);
        trace.push(next_dists.iter().sum());
        let converged = next == assignments;
        assignments = next;
        dists = next_dists;
        if converged {
            break;
        }
    }
    Ok(KmeansResult {
        centroids,
        assignments,
        objective_trace: trace,
    })
}

/// Clusters the non-low-variance descriptors into `k` visual words.
pub fn kmeans_codebook(descriptors: &[Descriptor], k: usize, seed: u64, max_iters: usize) -> Result<Codebook> {
    let usable: Vec<&Descriptor> = descriptors.iter().filter(|d| !d.low_variance).collect();
    if usable.len() < k {
        return Err(Error::rejected(format!(
            "{} usable descriptors for {k} visual words",
            usable.len()
        )));
    }
    let dim = usable[0].values.len();
    if usable.iter().any(|d| d.values.len() != dim) {
        return Err(Error::rejected("descriptors have inconsistent lengths"));
    }
    let points = Array2::from_shape_fn((usable.len(), dim), |(i, j)| usable[i].values[j]);
    let result = kmeans(points.view(), k, seed, max_iters)?;
    Codebook::new(result.centroids)
}
