//! Synthetic cohorts with planted hierarchical connectivity signal: per-node
//! latent intensities drive negative-binomial fiber counts on the ROI pairs
//! under each node, and traits are linear in chosen node latents plus noise.
//! Ground truth is emitted alongside the data so tests never compare against
//! invented constants.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use thiserror::Error;

use crate::atlas::{AtlasError, AtlasHierarchy, NodeId};
use crate::connectome::{AdjacencyMatrix, ConnectomeError, FeatureMatrix};
use crate::derive_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("subject count must be positive")]
    NoSubjects,
    #[error("rate must be nonnegative and finite, got {0}")]
    BadRate(f64),
    #[error("missing fraction must lie in [0,1), got {0}")]
    BadMissingFraction(f64),
    #[error("requested {requested} zero-variance pairs but only {available} pairs exist")]
    TooManyZeroVariancePairs { requested: usize, available: usize },
    #[error("signal node {0} does not exist in the hierarchy")]
    UnknownSignalNode(NodeId),
    #[error("duplicate trait name `{0}`")]
    DuplicateTrait(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Feature(#[from] ConnectomeError),
}

/// One synthetic trait: a linear combination of node latents plus noise, with
/// an exact planted missing fraction.
#[derive(Debug, Clone)]
pub struct TraitSpec {
    pub name: String,
    /// (internal node, effect size) pairs; empty for a pure-noise trait.
    pub effects: Vec<(NodeId, f64)>,
    pub noise_sd: f64,
    pub missing_fraction: f64,
}

impl TraitSpec {
    pub fn noise(name: impl Into<String>, noise_sd: f64) -> Self {
        Self {
            name: name.into(),
            effects: Vec::new(),
            noise_sd,
            missing_fraction: 0.0,
        }
    }
}

/// Cohort-generation parameters.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    /// Mean fiber count per ROI pair before latent modulation.
    pub base_rate: f64,
    /// Negative-binomial dispersion (smaller = more overdispersed).
    pub dispersion: f64,
    /// Spread of the per-node log intensities.
    pub latent_sd: f64,
    pub traits: Vec<TraitSpec>,
    /// This many leading row-major pairs are held at a constant count.
    pub zero_variance_pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 200,
            base_rate: 8.0,
            dispersion: 8.0,
            latent_sd: 0.4,
            traits: Vec::new(),
            zero_variance_pairs: 0,
            seed: 0,
        }
    }
}

/// Planted coefficients, recorded for downstream tests and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// (trait name, node id, node name, effect size)
    pub effects: Vec<(String, NodeId, String, f64)>,
    /// (i, j) ROI pairs held constant across subjects.
    pub zero_variance_pairs: Vec<(usize, usize)>,
}

impl GroundTruth {
    /// CSV: `trait,node_id,node_name,effect`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trait,node_id,node_name,effect\n");
        for (trait_name, id, name, effect) in &self.effects {
            out.push_str(&format!("{trait_name},{id},{name},{effect}\n"));
        }
        out
    }
}

/// A generated cohort: adjacency matrices, a trait table with missing cells,
/// and the planted ground truth.
#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub matrices: Vec<AdjacencyMatrix>,
    pub traits: FeatureMatrix,
    pub ground_truth: GroundTruth,
}

fn validate(h: &AtlasHierarchy, config: &SynthConfig) -> Result<(), SynthError> {
    if config.n == 0 {
        return Err(SynthError::NoSubjects);
    }
    for rate in [config.base_rate, config.dispersion, config.latent_sd] {
        if !rate.is_finite() || rate < 0.0 {
            return Err(SynthError::BadRate(rate));
        }
    }
    let available = h.p() * (h.p() - 1) / 2;
    if config.zero_variance_pairs > available {
        return Err(SynthError::TooManyZeroVariancePairs {
            requested: config.zero_variance_pairs,
            available,
        });
    }
    let mut names = std::collections::HashSet::new();
    for spec in &config.traits {
        if !names.insert(spec.name.as_str()) {
            return Err(SynthError::DuplicateTrait(spec.name.clone()));
        }
        if !(0.0..1.0).contains(&spec.missing_fraction) {
            return Err(SynthError::BadMissingFraction(spec.missing_fraction));
        }
        for &(node, _) in &spec.effects {
            let ok = h.position(node).is_some()
                && !h.is_leaf(node).map_err(SynthError::Atlas)?;
            if !ok {
                return Err(SynthError::UnknownSignalNode(node));
            }
        }
    }
    Ok(())
}

/// Generate a cohort. Every subject's randomness is a pure function of
/// (seed, subject index), so generation order and parallelism cannot change
/// the output.
pub fn generate_cohort(
    h: &AtlasHierarchy,
    config: &SynthConfig,
) -> Result<SynthCohort, SynthError> {
    validate(h, config)?;
    let p = h.p();
    let internal = h.internal_nodes().to_vec();
    let roi_names: Vec<String> = (0..p)
        .map(|roi| {
            let leaf = h.leaf_by_roi(roi).expect("valid roi");
            h.node(leaf).expect("leaf node").name.clone()
        })
        .collect();
    // Pair -> LCA position in internal order, precomputed once.
    let mut pair_node = vec![usize::MAX; p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let lca = h.lowest_common_ancestor(i, j).expect("valid pair");
            let idx = internal.iter().position(|&v| v == lca).expect("lca internal");
            pair_node[i * p + j] = idx;
        }
    }
    let constant_count = config.base_rate.round().max(0.0) as u64;

    let mut matrices = Vec::with_capacity(config.n);
    let mut trait_values = DMatrix::zeros(config.n, config.traits.len());
    let mut subject_ids = Vec::with_capacity(config.n);

    for subject in 0..config.n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[1, subject as u64]));
        // Per-node latents, mean-preserving lognormal intensity.
        let latents: Vec<f64> = internal
            .iter()
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let intensities: Vec<f64> = latents
            .iter()
            .map(|z| {
                config.base_rate
                    * (config.latent_sd * z - 0.5 * config.latent_sd * config.latent_sd).exp()
            })
            .collect();

        let mut counts = vec![0u64; p * p];
        let mut pair_index = 0usize;
        for i in 0..p {
            for j in (i + 1)..p {
                let value = if pair_index < config.zero_variance_pairs {
                    constant_count
                } else {
                    let mean = intensities[pair_node[i * p + j]];
                    sample_negative_binomial(&mut rng, mean, config.dispersion)
                };
                counts[i * p + j] = value;
                counts[j * p + i] = value;
                pair_index += 1;
            }
        }
        let subject_id = format!("synth-{subject:04}");
        subject_ids.push(subject_id.clone());
        matrices.push(
            AdjacencyMatrix::from_counts(subject_id, p, counts, roi_names.clone())
                .expect("construction is symmetric"),
        );

        for (t, spec) in config.traits.iter().enumerate() {
            let mut value = 0.0;
            for &(node, effect) in &spec.effects {
                let idx = internal.iter().position(|&v| v == node).expect("validated");
                value += effect * latents[idx];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            trait_values[(subject, t)] = value + spec.noise_sd * e;
        }
    }

    // Exact planted missingness: round(fraction * n) cells per trait, chosen
    // by a seeded shuffle so the count never drifts with sampling noise.
    for (t, spec) in config.traits.iter().enumerate() {
        let k = (spec.missing_fraction * config.n as f64).round() as usize;
        if k == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[2, t as u64]));
        let mut order: Vec<usize> = (0..config.n).collect();
        for i in (1..config.n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for &subject in &order[..k] {
            trait_values[(subject, t)] = f64::NAN;
        }
    }

    let labels: Vec<String> = config.traits.iter().map(|s| s.name.clone()).collect();
    let mask = (0..labels.len()).collect();
    let traits = FeatureMatrix::new(trait_values, labels, mask, subject_ids)?;

    let mut effects = Vec::new();
    for spec in &config.traits {
        for &(node, effect) in &spec.effects {
            effects.push((
                spec.name.clone(),
                node,
                h.node(node).expect("validated").name.clone(),
                effect,
            ));
        }
    }
    let mut zero_pairs = Vec::with_capacity(config.zero_variance_pairs);
    let mut pair_index = 0usize;
    'outer: for i in 0..p {
        for j in (i + 1)..p {
            if pair_index >= config.zero_variance_pairs {
                break 'outer;
            }
            zero_pairs.push((i, j));
            pair_index += 1;
        }
    }

    Ok(SynthCohort {
        matrices,
        traits,
        ground_truth: GroundTruth {
            effects,
            zero_variance_pairs: zero_pairs,
        },
    })
}

/// Negative binomial via the gamma-Poisson mixture; `dispersion` is the gamma
/// shape (Poisson in the limit of large dispersion).
fn sample_negative_binomial(rng: &mut ChaCha8Rng, mean: f64, dispersion: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let rate = if dispersion > 0.0 {
        let gamma = Gamma::new(dispersion, mean / dispersion).expect("valid gamma");
        gamma.sample(rng)
    } else {
        mean
    };
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// A random hierarchy for oracle stress tests: every internal node has 2-6
/// children, depth is capped, and the leaf count never exceeds `max_leaves`
/// (each unexpanded internal node reserves two future leaves).
pub fn random_hierarchy(seed: u64, max_depth: u32, max_leaves: usize) -> AtlasHierarchy {
    assert!(max_depth >= 2, "need at least a root and leaves");
    assert!(max_leaves >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    // Rows: (node_id, parent, level, is_leaf).
    let mut rows: Vec<(usize, Option<usize>, u32, bool)> = vec![(0, None, 1, false)];
    let mut frontier = vec![0usize];
    let mut next_id = 1usize;
    // Leaves created so far plus two reserved per pending internal node.
    let mut projected = 2usize;
    while let Some(node) = frontier.pop() {
        let level = rows[node].2;
        projected -= 2;
        let room = max_leaves - projected;
        let children = rng.random_range(2..=6usize.min(room));
        for idx in 0..children {
            let id = next_id;
            next_id += 1;
            let siblings_left = children - idx - 1;
            let can_internal =
                level + 1 < max_depth && projected + 2 + siblings_left <= max_leaves;
            let is_leaf = !can_internal || rng.random_range(0..100) < 45;
            rows.push((id, Some(node), level + 1, is_leaf));
            if is_leaf {
                projected += 1;
            } else {
                projected += 2;
                frontier.push(id);
            }
        }
    }
    let mut csv = String::from("node_id,name,parent_id,level,roi_index\n");
    let mut roi = 0usize;
    for &(id, parent, level, is_leaf) in &rows {
        let parent_str = parent.map(|v| v.to_string()).unwrap_or_default();
        if is_leaf {
            csv.push_str(&format!("{id},leaf-{id},{parent_str},{level},{roi}\n"));
            roi += 1;
        } else {
            csv.push_str(&format!("{id},node-{id},{parent_str},{level},\n"));
        }
    }
    AtlasHierarchy::parse(&csv).expect("generated hierarchy is valid")
}

/// A random symmetric integer matrix with entries in [0, max_entry] and zero
/// diagonal, matching the oracle's assumptions about recorded self-edges.
pub fn random_matrix(h: &AtlasHierarchy, seed: u64, max_entry: u64) -> AdjacencyMatrix {
    let p = h.p();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[4]));
    let mut counts = vec![0u64; p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let v = rng.random_range(0..=max_entry);
            counts[i * p + j] = v;
            counts[j * p + i] = v;
        }
    }
    let names = (0..p).map(|i| format!("r{i}")).collect();
    AdjacencyMatrix::from_counts(format!("rand-{seed}"), p, counts, names)
        .expect("symmetric by construction")
}
