//! Feature-frame quantization with a one-dimensional self-organizing map.
//!
//! The trained codebook is used in both directions: `encode` maps each frame
//! to its winner neuron, `decode` maps winner indices back to prototype
//! frames. A codebook is never modified after training.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::memory::euclidean;
use crate::rng::seeded_rng;

/// Default feature dimension (MFCC coefficients per frame).
pub const DEFAULT_FEATURE_DIM: usize = 20;

/// An `M × d` prototype matrix whose row order follows the SOM chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    neurons: usize,
    dim: usize,
    seed: u64,
    prototypes: Vec<f64>,
}

impl Codebook {
    pub fn from_rows(rows: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("codebook needs at least one prototype");
        };
        let dim = first.len();
        if dim == 0 {
            return invalid("prototypes must have at least one coefficient");
        }
        let neurons = rows.len();
        let mut prototypes = Vec::with_capacity(neurons * dim);
        for (j, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return invalid(format!("prototype {j} has dimension {}, expected {dim}", row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return invalid(format!("prototype {j} has a non-finite coefficient"));
            }
            prototypes.extend(row);
        }
        Ok(Self { neurons, dim, seed, prototypes })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Seed of the training run that produced this codebook.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prototype(&self, j: usize) -> &[f64] {
        &self.prototypes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.prototypes.chunks_exact(self.dim)
    }

    /// Nearest prototype to `frame`; equal distances go to the lower index.
    pub fn winner(&self, frame: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (j, p) in self.rows().enumerate() {
            let d = squared_distance(p, frame);
            if d < best_dist {
                best = j;
                best_dist = d;
            }
        }
        best
    }
}

/// SOM training hyperparameters.
///
/// Learning rate and neighbourhood radius both decay as
/// `exp(-decay * step / total_steps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub neurons: usize,
    pub epochs: usize,
    pub alpha0: f64,
    pub sigma0: f64,
    pub decay: f64,
    pub seed: u64,
}

impl SomConfig {
    pub fn new(neurons: usize, epochs: usize, seed: u64) -> Self {
        Self {
            neurons,
            epochs,
            alpha0: 0.5,
            sigma0: (neurons as f64 / 2.0).max(1.0),
            decay: 4.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neurons == 0 {
            return invalid("SOM needs at least one neuron");
        }
        if self.epochs == 0 {
            return invalid("SOM needs at least one epoch");
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return invalid(format!("alpha0 must lie in (0, 1], got {}", self.alpha0));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return invalid(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return invalid(format!("decay must be positive, got {}", self.decay));
        }
        Ok(())
    }
}

fn check_frames(frames: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = frames.first() else {
        return invalid("no feature frames given");
    };
    let dim = first.len();
    if dim == 0 {
        return invalid("feature frames must not be empty");
    }
    for (i, f) in frames.iter().enumerate() {
        if f.len() != dim {
            return invalid(format!("frame {i} has dimension {}, expected {dim}", f.len()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return invalid(format!("frame {i} has a non-finite coefficient"));
        }
    }
    Ok(dim)
}

/// Trains a chain-topology Kohonen map on `frames`.
///
/// Prototypes start at frames drawn with the configured seed; every epoch
/// presents the frames in a freshly shuffled order. For each frame the winner
/// `w` and every neuron `j` move towards it by
/// `alpha * exp(-(j - w)^2 / (2 sigma^2))`.
pub fn train_som(frames: &[Vec<f64>], config: &SomConfig) -> Result<Codebook> {
    config.validate()?;
    let dim = check_frames(frames)?;
    let m = config.neurons;
    let mut rng = seeded_rng(config.seed);

    let mut prototypes = Vec::with_capacity(m * dim);
    for _ in 0..m {
        prototypes.extend_from_slice(&frames[rng.gen_range(0..frames.len())]);
    }
    let mut book = Codebook { neurons: m, dim, seed: config.seed, prototypes };

    let total = (config.epochs * frames.len()) as f64;
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let frame = &frames[i];
            let fade = (-config.decay * step as f64 / total).exp();
            let alpha = config.alpha0 * fade;
            let sigma = config.sigma0 * fade;
            let w = book.winner(frame);
            // beyond this radius the neighbourhood weight drops under 1e-16
            let reach = (sigma * (2.0 * 37.0f64).sqrt()).ceil() as usize;
            let lo = w.saturating_sub(reach);
            let hi = (w + reach).min(m - 1);
            for j in lo..=hi {
                let offset = j as f64 - w as f64;
                let h = (-(offset * offset) / (2.0 * sigma * sigma)).exp();
                let rate = alpha * h;
                let row = &mut book.prototypes[j * dim..(j + 1) * dim];
                for (p, x) in row.iter_mut().zip(frame) {
                    *p += rate * (x - *p);
                }
            }
            step += 1;
        }
    }
    Ok(book)
}

/// Winner index of every frame.
pub fn encode(frames: &[Vec<f64>], codebook: &Codebook) -> Result<Vec<usize>> {
    for (i, f) in frames.iter().enumerate() {
        if f.len() != codebook.dim {
            return invalid(format!(
                "frame {i} has dimension {}, codebook expects {}",
                f.len(),
                codebook.dim
            ));
        }
    }
    Ok(frames.iter().map(|f| codebook.winner(f)).collect())
}

/// Prototype row of every index.
pub fn decode(indices: &[usize], codebook: &Codebook) -> Result<Vec<Vec<f64>>> {
    indices
        .iter()
        .map(|&j| {
            if j >= codebook.neurons {
                invalid(format!("index {j} out of range for {} prototypes", codebook.neurons))
            } else {
                Ok(codebook.prototype(j).to_vec())
            }
        })
        .collect()
}

/// Mean distance between chain neighbours divided by the mean distance over
/// all prototype pairs. Values well below 1 mean the chain order follows
/// feature-space proximity.
pub fn topology_score(codebook: &Codebook) -> Result<f64> {
    let m = codebook.neurons;
    if m < 3 {
        return invalid(format!("topology score needs at least 3 prototypes, got {m}"));
    }
    let adjacent: f64 = (0..m - 1)
        .map(|j| euclidean(codebook.prototype(j), codebook.prototype(j + 1)))
        .sum::<f64>()
        / (m - 1) as f64;
    let mut total = 0.0;
    for j in 0..m {
        for k in j + 1..m {
            total += euclidean(codebook.prototype(j), codebook.prototype(k));
        }
    }
    let all_pairs = total / (m * (m - 1) / 2) as f64;
    if all_pairs == 0.0 {
        return invalid("all prototypes coincide");
    }
    Ok(adjacent / all_pairs)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn clusters(centers: &[Vec<f64>], per: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut frames = Vec::new();
        for c in centers {
            for _ in 0..per {
                frames.push(c.iter().map(|v| v + noise.sample(&mut rng)).collect());
            }
        }
        frames.shuffle(&mut rng);
        frames
    }

    fn line_codebook(m: usize) -> Codebook {
        Codebook::from_rows((0..m).map(|j| vec![j as f64, 2.0 * j as f64]).collect(), 0).unwrap()
    }

    #[test]
    fn exact_prototype_encodes_to_its_index() {
        let book = line_codebook(10);
        assert_eq!(encode(&[book.prototype(7).to_vec()], &book).unwrap(), vec![7]);
    }

    #[test]
    fn equidistant_frame_takes_lower_index() {
        let rows = vec![
            vec![10.0, 10.0],
            vec![20.0, 20.0],
            vec![-1.0, 0.0],
            vec![30.0, 30.0],
            vec![40.0, 40.0],
            vec![1.0, 0.0],
        ];
        let book = Codebook::from_rows(rows, 0).unwrap();
        assert_eq!(encode(&[vec![0.0, 0.0]], &book).unwrap(), vec![2]);
    }

    #[test]
    fn encode_matches_brute_force_scan() {
        let mut rng = seeded_rng(9);
        let rows: Vec<Vec<f64>> = (0..25).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let book = Codebook::from_rows(rows.clone(), 0).unwrap();
        let frames: Vec<Vec<f64>> = (0..500).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let got = encode(&frames, &book).unwrap();
        for (f, &idx) in frames.iter().zip(&got) {
            let dists: Vec<f64> = rows.iter().map(|r| squared_distance(r, f)).collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(idx, dists.iter().position(|&d| d == min).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let book = line_codebook(4);
        assert!(encode(&[vec![1.0, 2.0, 3.0]], &book).is_err());
    }

    #[test]
    fn decode_round_trips_prototypes() {
        let book = line_codebook(6);
        let rows: Vec<Vec<f64>> = book.rows().map(|r| r.to_vec()).collect();
        let idx = encode(&rows, &book).unwrap();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert_eq!(decode(&idx, &book).unwrap(), rows);
    }

    #[test]
    fn decode_edge_cases() {
        let book = line_codebook(6);
        assert!(decode(&[], &book).unwrap().is_empty());
        let out = decode(&[3, 3, 3], &book).unwrap();
        assert!(out.iter().all(|r| r.as_slice() == book.prototype(3)));
        assert!(decode(&[6], &book).is_err());
    }

    #[test]
    fn training_rejects_bad_input() {
        let config = SomConfig::new(4, 2, 1);
        assert!(train_som(&[], &config).is_err());
        assert!(train_som(&[vec![1.0, f64::NAN]], &config).is_err());
        assert!(train_som(&[vec![1.0, 2.0], vec![1.0]], &config).is_err());
        let mut bad = config.clone();
        bad.alpha0 = 0.0;
        assert!(train_som(&[vec![1.0]], &bad).is_err());
    }

    #[test]
    fn single_neuron_tracks_the_mean() {
        let frames = clusters(&[vec![3.0, -2.0]], 2000, 0.5, 4);
        let mut config = SomConfig::new(1, 3, 4);
        config.alpha0 = 0.1;
        let book = train_som(&frames, &config).unwrap();
        let p = book.prototype(0);
        assert!((p[0] - 3.0).abs() < 0.15 && (p[1] + 2.0).abs() < 0.15, "{p:?}");
    }

    #[test]
    fn two_clusters_do_not_interleave() {
        let frames = clusters(&[vec![0.0, 0.0], vec![10.0, 10.0]], 300, 0.5, 5);
        let book = train_som(&frames, &SomConfig::new(10, 20, 5)).unwrap();
        let labels: Vec<usize> = book
            .rows()
            .map(|p| usize::from(squared_distance(p, &[10.0, 10.0]) < squared_distance(p, &[0.0, 0.0])))
            .collect();
        let boundaries = labels.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(boundaries <= 1, "labels {labels:?}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let frames = clusters(&[vec![0.0, 1.0], vec![5.0, 5.0]], 100, 1.0, 6);
        let config = SomConfig::new(8, 5, 77);
        assert_eq!(train_som(&frames, &config).unwrap(), train_som(&frames, &config).unwrap());
    }

    #[test]
    fn topology_of_ordered_and_shuffled_lines() {
        let book = line_codebook(40);
        let ordered = topology_score(&book).unwrap();
        assert!(ordered < 0.2, "{ordered}");

        let mut rows: Vec<Vec<f64>> = book.rows().map(|r| r.to_vec()).collect();
        let mut scores = Vec::new();
        for seed in 0..50 {
            rows.shuffle(&mut seeded_rng(seed));
            scores.push(topology_score(&Codebook::from_rows(rows.clone(), 0).unwrap()).unwrap());
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
        assert!(topology_score(&line_codebook(2)).is_err());
    }

    #[test]
    fn trained_map_preserves_topology() {
        let frames = clusters(&[vec![0.0, 0.0], vec![8.0, 0.0], vec![4.0, 7.0]], 200, 0.6, 8);
        let book = train_som(&frames, &SomConfig::new(12, 20, 8)).unwrap();
        assert!(book.rows().flatten().all(|v| v.is_finite()));
        assert!(topology_score(&book).unwrap() < 1.0);
    }
}
