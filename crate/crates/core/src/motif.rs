//! Structural motif library for pattern-similarity scoring.
//!
//! Motifs are unit-length operator-histogram directions grouped by problem
//! category. A workflow's pattern score is its best cosine similarity to a
//! motif of its category. The library starts from seeded baseline templates
//! and is periodically refined by clustering observed histograms.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::NEUTRAL;
use crate::workflow::{OperatorRegistry, WorkflowState};

pub const LIBRARY_FORMAT_VERSION: u32 = 1;
const KMEANS_MAX_ITERS: usize = 50;
const TEMPLATE_ATTEMPTS: usize = 20_000;

/// Cosine of the angle between `a` and `b`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MotifError> {
    if a.len() != b.len() {
        return Err(MotifError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(MotifError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, MotifError> {
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

fn unit_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifOrigin {
    BaselineTemplate,
    Clustered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Motif {
    pub category: String,
    /// Unit-length, non-negative direction over the registry.
    pub vector: Vec<f64>,
    pub origin: MotifOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySettings {
    pub templates_per_category: usize,
    pub refinement_period: usize,
    pub cluster_count_per_category: usize,
    /// Minimum pairwise cosine distance within a category.
    pub min_separation: f64,
    /// Upper bound on motifs per category.
    pub capacity_per_category: usize,
}

impl Default for LibrarySettings {
    fn default() -> Self {
        Self {
            templates_per_category: 10,
            refinement_period: 3,
            cluster_count_per_category: 20,
            min_separation: 0.3,
            capacity_per_category: 30,
        }
    }
}

impl LibrarySettings {
    pub fn validate(&self) -> Result<(), MotifError> {
        let ok = (10..=15).contains(&self.templates_per_category)
            && self.refinement_period >= 1
            && self.cluster_count_per_category >= 1
            && (0.0..=2.0).contains(&self.min_separation)
            && self.capacity_per_category >= self.templates_per_category;
        if !ok {
            return Err(MotifError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotifLibrary {
    pub registry: Vec<String>,
    /// Declared categories, in order. A category may hold no motifs.
    pub categories: Vec<String>,
    pub motifs: Vec<Motif>,
    pub settings: LibrarySettings,
    pub frozen: bool,
}

impl MotifLibrary {
    /// A library with declared categories and no motifs.
    pub fn empty(registry: &OperatorRegistry, categories: &[String], settings: LibrarySettings) -> Self {
        Self {
            registry: registry.names(),
            categories: categories.to_vec(),
            motifs: Vec::new(),
            settings,
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    pub fn category(&self, name: &str) -> impl Iterator<Item = &Motif> {
        let name = name.to_string();
        self.motifs.iter().filter(move |m| m.category == name)
    }

    /// Histogram of `state` as a vector over this library's registry.
    pub fn histogram(&self, state: &WorkflowState) -> Vec<f64> {
        self.registry
            .iter()
            .map(|n| state.operator_histogram.get(n).copied().unwrap_or(0) as f64)
            .collect()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Smallest pairwise cosine distance within each category.
    pub fn min_pairwise_distance(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for cat in &self.categories {
            let ms: Vec<&Motif> = self.category(cat).collect();
            let mut best = f64::INFINITY;
            for i in 0..ms.len() {
                for j in i + 1..ms.len() {
                    best = best.min(unit_distance(&ms[i].vector, &ms[j].vector));
                }
            }
            out.insert(cat.clone(), best);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LibraryFile::from(self)).expect("library serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MotifError> {
        let file: LibraryFile = serde_json::from_str(text).map_err(|e| MotifError::Parse(e.to_string()))?;
        file.try_into()
    }
}

/// Best cosine similarity between the state's histogram and the motifs of
/// `category`; neutral when the category has no motifs or the histogram is empty.
pub fn score_pattern(state: &WorkflowState, category: &str, lib: &MotifLibrary) -> f64 {
    let hist = lib.histogram(state);
    let Some(h) = normalized(&hist) else {
        return NEUTRAL;
    };
    lib.category(category)
        .map(|m| (1.0 - unit_distance(&h, &m.vector)).clamp(0.0, 1.0))
        .fold(None, |best: Option<f64>, s| Some(best.map_or(s, |b| b.max(s))))
        .unwrap_or(NEUTRAL)
}

/// Seeded, well-spread baseline templates: sparse non-negative directions
/// over the registry, each pair at least `min_separation` apart.
pub fn init_templates(
    registry: &OperatorRegistry,
    categories: &[String],
    settings: LibrarySettings,
    seed: u64,
) -> Result<MotifLibrary, MotifError> {
    place_templates(registry, categories, settings, seed, true)
}

/// Like [`init_templates`], but a category that cannot fit the full quota
/// (small registries leave too little room at the required separation)
/// keeps the templates that were placed.
pub fn init_templates_best_effort(
    registry: &OperatorRegistry,
    categories: &[String],
    settings: LibrarySettings,
    seed: u64,
) -> Result<MotifLibrary, MotifError> {
    place_templates(registry, categories, settings, seed, false)
}

fn place_templates(
    registry: &OperatorRegistry,
    categories: &[String],
    settings: LibrarySettings,
    seed: u64,
    strict: bool,
) -> Result<MotifLibrary, MotifError> {
    settings.validate()?;
    let dim = registry.len();
    if dim == 0 {
        return Err(MotifError::Config("empty registry".into()));
    }
    let mut lib = MotifLibrary::empty(registry, categories, settings);
    for (ci, cat) in categories.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(ci as u64 + 1)));
        let mut accepted: Vec<Vec<f64>> = Vec::new();
        let mut attempts = 0;
        while accepted.len() < settings.templates_per_category {
            attempts += 1;
            if attempts > TEMPLATE_ATTEMPTS {
                if !strict && !accepted.is_empty() {
                    break;
                }
                return Err(MotifError::Infeasible {
                    category: cat.clone(),
                    wanted: settings.templates_per_category,
                    found: accepted.len(),
                });
            }
            let support = rng.random_range(1..=dim.min(3));
            let mut v = vec![0.0; dim];
            for _ in 0..support {
                let k = rng.random_range(0..dim);
                v[k] += rng.random_range(0.25..1.0);
            }
            let v = normalized(&v).expect("at least one positive entry");
            if accepted.iter().all(|a| unit_distance(a, &v) >= settings.min_separation) {
                accepted.push(v);
            }
        }
        lib.motifs.extend(accepted.into_iter().map(|vector| Motif {
            category: cat.clone(),
            vector,
            origin: MotifOrigin::BaselineTemplate,
        }));
    }
    Ok(lib)
}

impl MotifLibrary {
    /// Clusters the observed histograms of each category and merges the
    /// centroids into a new library value. Centroids are taken largest
    /// cluster first; one within `min_separation` of a retained clustered
    /// motif is discarded, and baseline templates within `min_separation` of
    /// an accepted centroid are replaced by it.
    pub fn refine(&self, observed: &[(String, Vec<f64>)], round_index: usize, seed: u64) -> Result<Self, MotifError> {
        if self.frozen {
            return Err(MotifError::Frozen);
        }
        let mut next = self.clone();
        let min_sep = self.settings.min_separation;
        for cat in &self.categories {
            let points: Vec<Vec<f64>> = observed
                .iter()
                .filter(|(c, _)| c == cat)
                .filter_map(|(_, v)| {
                    if v.len() != self.registry.len() || v.iter().any(|x| *x < 0.0) {
                        return None;
                    }
                    normalized(v)
                })
                .collect();
            if points.is_empty() {
                continue;
            }
            let k = self.settings.cluster_count_per_category.min(points.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((round_index as u64) << 32) ^ fxhash(cat));
            let clusters = spherical_kmeans(&points, k, &mut rng);
            let mut order: Vec<usize> = (0..clusters.len()).collect();
            order.sort_by(|&a, &b| clusters[b].1.cmp(&clusters[a].1).then(a.cmp(&b)));

            for ci in order {
                let (centroid, size) = &clusters[ci];
                if *size == 0 {
                    continue;
                }
                let near_clustered = next
                    .category(cat)
                    .any(|m| m.origin == MotifOrigin::Clustered && unit_distance(&m.vector, centroid) < min_sep);
                if near_clustered {
                    continue;
                }
                let dominated = next
                    .motifs
                    .iter()
                    .filter(|m| &m.category == cat && unit_distance(&m.vector, centroid) < min_sep)
                    .count();
                let current = next.category(cat).count();
                if current - dominated + 1 > self.settings.capacity_per_category {
                    continue;
                }
                next.motifs
                    .retain(|m| !(&m.category == cat && unit_distance(&m.vector, centroid) < min_sep));
                next.motifs.push(Motif {
                    category: cat.clone(),
                    vector: centroid.clone(),
                    origin: MotifOrigin::Clustered,
                });
            }
        }
        Ok(next)
    }
}

fn fxhash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Cosine k-means over unit vectors with farthest-point initialization.
/// Returns (unit centroid, member count) per cluster.
pub(crate) fn spherical_kmeans(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<(Vec<f64>, usize)> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| unit_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        centers.push(points[far].clone());
        let c = centers.last().unwrap();
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(unit_distance(p, c));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = unit_distance(p, &centers[0]);
                for (j, c) in centers.iter().enumerate().skip(1) {
                    let d = unit_distance(p, c);
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..KMEANS_MAX_ITERS {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if let Some(u) = normalized(s) {
                *c = u;
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    centers.into_iter().zip(sizes).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    version: u32,
    registry: Vec<String>,
    categories: Vec<CategoryFile>,
    frozen: bool,
    #[serde(default)]
    settings: LibrarySettings,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryFile {
    name: String,
    motifs: Vec<MotifFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotifFile {
    vector: Vec<f64>,
    origin: MotifOrigin,
}

impl From<&MotifLibrary> for LibraryFile {
    fn from(lib: &MotifLibrary) -> Self {
        Self {
            version: LIBRARY_FORMAT_VERSION,
            registry: lib.registry.clone(),
            categories: lib
                .categories
                .iter()
                .map(|c| CategoryFile {
                    name: c.clone(),
                    motifs: lib
                        .category(c)
                        .map(|m| MotifFile {
                            vector: m.vector.clone(),
                            origin: m.origin,
                        })
                        .collect(),
                })
                .collect(),
            frozen: lib.frozen,
            settings: lib.settings,
        }
    }
}

impl TryFrom<LibraryFile> for MotifLibrary {
    type Error = MotifError;
    fn try_from(f: LibraryFile) -> Result<Self, MotifError> {
        if f.version != LIBRARY_FORMAT_VERSION {
            return Err(MotifError::Parse(format!("unsupported version {}", f.version)));
        }
        let dim = f.registry.len();
        let mut motifs = Vec::new();
        let mut categories = Vec::new();
        for c in f.categories {
            for m in c.motifs {
                let vector = if (norm(&m.vector) - 1.0).abs() < 1e-9 {
                    m.vector
                } else {
                    normalized(&m.vector).ok_or(MotifError::ZeroVector)?
                };
                if vector.len() != dim || vector.iter().any(|x| *x < 0.0) {
                    return Err(MotifError::Dimension {
                        expected: dim,
                        got: vector.len(),
                    });
                }
                motifs.push(Motif {
                    category: c.name.clone(),
                    vector,
                    origin: m.origin,
                });
            }
            categories.push(c.name);
        }
        Ok(Self {
            registry: f.registry,
            categories,
            motifs,
            settings: f.settings,
            frozen: f.frozen,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MotifError {
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("vector dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot place {wanted} templates for `{category}` (placed {found})")]
    Infeasible {
        category: String,
        wanted: usize,
        found: usize,
    },
    #[error("library is frozen")]
    Frozen,
    #[error("invalid library settings: {0}")]
    Config(String),
    #[error("library file: {0}")]
    Parse(String),
}
