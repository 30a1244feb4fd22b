//! Synthetic multilingual classification worlds.
//!
//! Every language is a Gaussian mixture with one isotropic cluster per
//! class. Target languages share class prototypes up to a per-language
//! offset. Each source language is derived from one target language: its
//! class means are pulled towards language-specific prototypes and shifted
//! away, both in proportion to `1 - proximity` (proximity 1 = on top of the
//! target, 0 = at least `separation` away from every target cluster).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::probe::ProbeModel;
use super::SimError;
use crate::model::{fnv1a64, l2_distance, Dataset, Example, Role, TaskKind, UncertaintyPayload};

const SOURCE_NAMES: &[&str] = &[
    "de", "es", "fr", "ru", "zh", "ar", "tr", "vi", "bg", "el", "fi", "ko", "ja", "id", "it", "nl",
];
const TARGET_NAMES: &[&str] = &["hi", "ur", "sw", "th", "te", "mr"];
pub const SEED_LANGUAGE: &str = "en";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimTask {
    pub source_languages: usize,
    pub target_languages: usize,
    pub dim: usize,
    pub classes: usize,
    pub source_per_language: usize,
    /// Unlabeled target pool size per target language.
    pub target_per_language: usize,
    pub test_per_language: usize,
    /// Labeled target-language pool per target language, for the gold arm.
    pub gold_per_language: usize,
    /// Labeled English examples the initial model is trained on.
    pub seed_set_size: usize,
    pub overlap: f64,
    /// Relative spread of source-language proximity around `overlap`.
    pub proximity_spread: f64,
    /// Proximity of the English seed language.
    pub seed_language_proximity: f64,
    pub separation: f64,
    pub class_scale: f64,
    pub language_offset: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SimTask {
    fn default() -> Self {
        SimTask {
            source_languages: 8,
            target_languages: 2,
            dim: 16,
            classes: 4,
            source_per_language: 150,
            target_per_language: 50,
            test_per_language: 250,
            gold_per_language: 150,
            seed_set_size: 100,
            overlap: 0.7,
            proximity_spread: 0.8,
            seed_language_proximity: 0.5,
            separation: 2.0,
            class_scale: 1.5,
            language_offset: 1.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SimTask {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(SimError::DegenerateCovariance(self.noise_std));
        }
        if self.dim == 0 || self.classes < 2 {
            return bad("need dim >= 1 and at least 2 classes");
        }
        if self.source_languages == 0 || self.target_languages == 0 {
            return bad("need at least one source and one target language");
        }
        for (name, v) in [
            ("overlap", self.overlap),
            ("proximity_spread", self.proximity_spread),
            ("seed_language_proximity", self.seed_language_proximity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        if !(self.separation >= 0.0 && self.class_scale >= 0.0 && self.language_offset >= 0.0) {
            return bad("separation, class_scale and language_offset must be non-negative");
        }
        Ok(())
    }

    /// Proximity of source language `l` to its anchor target language.
    pub fn proximity(&self, l: usize) -> f64 {
        let r = if self.source_languages > 1 {
            l as f64 / (self.source_languages - 1) as f64
        } else {
            0.0
        };
        self.overlap * (1.0 - self.proximity_spread * r)
    }
}

fn language_name(list: &[&str], prefix: &str, i: usize) -> String {
    list.get(i)
        .map_or_else(|| format!("{prefix}{i}"), |s| s.to_string())
}

/// A labeled example of the synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct SimExample {
    pub id: String,
    pub language: String,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPool {
    pub examples: Vec<SimExample>,
}

impl LabeledPool {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The pool as a dataset scored by `probe`; labels stay hidden.
    pub fn to_dataset(&self, probe: &ProbeModel, role: Role) -> Result<Dataset, SimError> {
        let dim = self
            .examples
            .first()
            .map_or(probe.dim(), |e| e.features.len());
        let examples = self
            .examples
            .iter()
            .map(|e| {
                Example::new(
                    e.id.clone(),
                    e.language.clone(),
                    fnv1a64(&e.id),
                    e.features.clone(),
                    UncertaintyPayload::SeqProbs(probe.predict_proba(&e.features)),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset::new(TaskKind::SequenceLevel, role, dim, examples)?)
    }

    pub fn accuracy(&self, probe: &ProbeModel) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let correct = self
            .examples
            .iter()
            .filter(|e| probe.predict(&e.features) == e.label)
            .count();
        correct as f64 / self.examples.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimWorld {
    pub task: SimTask,
    /// Cluster means per language, indexed `[class]`.
    pub source_means: Vec<(String, Vec<Vec<f64>>)>,
    pub target_means: Vec<(String, Vec<Vec<f64>>)>,
    pub seed_means: Vec<Vec<f64>>,
    pub source: LabeledPool,
    pub target: LabeledPool,
    pub test: LabeledPool,
    pub gold: LabeledPool,
    pub seed_set: LabeledPool,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn shifted(means: &[Vec<f64>], dir: &[f64], amount: f64) -> Vec<Vec<f64>> {
    means
        .iter()
        .map(|m| m.iter().zip(dir).map(|(a, d)| a + amount * d).collect())
        .collect()
}

fn draw(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    language: &str,
    means: &[Vec<f64>],
    n: usize,
    noise: f64,
) -> Vec<SimExample> {
    (0..n)
        .map(|i| {
            let label = i % means.len();
            let features = means[label]
                .iter()
                .map(|m| m + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            SimExample {
                id: format!("{prefix}-{language}-{i:05}"),
                language: language.to_string(),
                features,
                label,
            }
        })
        .collect()
}

/// Class means of a language at `proximity` to `anchor`: interpolated
/// towards language-specific prototypes, then translated away. At
/// proximity 0 every mean is at least `separation` from every target mean.
fn drifted(
    rng: &mut ChaCha8Rng,
    task: &SimTask,
    anchor: &[Vec<f64>],
    targets: &[(String, Vec<Vec<f64>>)],
    proximity: f64,
) -> Vec<Vec<f64>> {
    let d = task.dim;
    let own: Vec<Vec<f64>> = (0..task.classes)
        .map(|_| gaussian_vec(rng, d, task.class_scale))
        .collect();
    let dir = unit_vec(rng, d);
    let mixed: Vec<Vec<f64>> = anchor
        .iter()
        .zip(&own)
        .map(|(a, o)| {
            a.iter()
                .zip(o)
                .map(|(x, y)| proximity * x + (1.0 - proximity) * y)
                .collect()
        })
        .collect();
    // any shift of `reach` clears every target cluster by `separation`
    let pts: Vec<&Vec<f64>> = targets.iter().flat_map(|(_, m)| m).chain(&mixed).collect();
    let diameter = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| l2_distance(a, b)))
        .fold(0.0, f64::max);
    let reach = task.separation + diameter;
    shifted(&mixed, &dir, (1.0 - proximity) * reach)
}

/// Generates a world deterministically from `task.seed`.
pub fn make_synthetic_task(task: &SimTask) -> Result<SimWorld, SimError> {
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let d = task.dim;
    let prototypes: Vec<Vec<f64>> = (0..task.classes)
        .map(|_| gaussian_vec(&mut rng, d, task.class_scale))
        .collect();
    let target_means: Vec<(String, Vec<Vec<f64>>)> = (0..task.target_languages)
        .map(|t| {
            let offset = gaussian_vec(&mut rng, d, task.language_offset);
            let means = prototypes
                .iter()
                .map(|p| p.iter().zip(&offset).map(|(a, b)| a + b).collect())
                .collect();
            (language_name(TARGET_NAMES, "t", t), means)
        })
        .collect();

    let source_means: Vec<(String, Vec<Vec<f64>>)> = (0..task.source_languages)
        .map(|l| {
            let anchor = &target_means[l % task.target_languages].1;
            let means = drifted(&mut rng, task, anchor, &target_means, task.proximity(l));
            (language_name(SOURCE_NAMES, "s", l), means)
        })
        .collect();
    let seed_means = drifted(
        &mut rng,
        task,
        &target_means[0].1,
        &target_means,
        task.seed_language_proximity,
    );

    let noise = task.noise_std;
    let mut source = LabeledPool::default();
    for (lang, means) in &source_means {
        source.examples.extend(draw(
            &mut rng,
            "src",
            lang,
            means,
            task.source_per_language,
            noise,
        ));
    }
    let mut target = LabeledPool::default();
    let mut test = LabeledPool::default();
    let mut gold = LabeledPool::default();
    for (lang, means) in &target_means {
        target.examples.extend(draw(
            &mut rng,
            "tgt",
            lang,
            means,
            task.target_per_language,
            noise,
        ));
        test.examples.extend(draw(
            &mut rng,
            "test",
            lang,
            means,
            task.test_per_language,
            noise,
        ));
        gold.examples.extend(draw(
            &mut rng,
            "gold",
            lang,
            means,
            task.gold_per_language,
            noise,
        ));
    }
    let seed_set = LabeledPool {
        examples: draw(
            &mut rng,
            "seed",
            SEED_LANGUAGE,
            &seed_means,
            task.seed_set_size,
            noise,
        ),
    };
    Ok(SimWorld {
        task: task.clone(),
        source_means,
        target_means,
        seed_means,
        source,
        target,
        test,
        gold,
        seed_set,
    })
}
