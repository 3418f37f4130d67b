//! Multi-bucket sampling with hard-positive upsampling.
//!
//! Every batch holds Normal, Human, Animal, Object and Interaction records in
//! an exact 4:1:1:1:1 ratio. Each bucket is an independently shuffled pool
//! drawn without replacement and reshuffled when exhausted. Normal records
//! tagged as hard positives (e.g. anatomically correct hands) appear in the
//! Normal pool several times.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::AnnotationRecord;
use crate::taxonomy::L2Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Bucket {
    Normal,
    Human,
    Animal,
    Object,
    Interaction,
}

impl Bucket {
    /// Batch order, matching the ratio order.
    pub const ALL: [Bucket; 5] = [
        Bucket::Normal,
        Bucket::Human,
        Bucket::Animal,
        Bucket::Object,
        Bucket::Interaction,
    ];

    /// Share of a batch in eighths.
    pub fn ratio(self) -> usize {
        match self {
            Bucket::Normal => 4,
            _ => 1,
        }
    }

    pub fn for_label(l2: L2Label) -> Option<Bucket> {
        match l2 {
            L2Label::AbnormalHumanAnatomy => Some(Bucket::Human),
            L2Label::AbnormalAnimalAnatomy => Some(Bucket::Animal),
            L2Label::AbnormalObjectMorphology => Some(Bucket::Object),
            L2Label::IrrationalElementInteraction => Some(Bucket::Interaction),
            L2Label::IrrationalElementAttributes | L2Label::OtherIrrationalities => None,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Bucket::Normal => "Normal",
            Bucket::Human => "Human",
            Bucket::Animal => "Animal",
            Bucket::Object => "Object",
            Bucket::Interaction => "Interaction",
        })
    }
}

pub const RATIO_SUM: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplerError {
    #[error("batch size must be a positive multiple of {RATIO_SUM}, got {0}")]
    BatchSize(usize),
    #[error("hard-positive multiplier must be at least 1")]
    Multiplier,
    #[error("bucket {0} is empty")]
    EmptyBucket(Bucket),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub hard_positive_tags: Vec<String>,
    pub hard_positive_multiplier: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        SamplerConfig {
            batch_size,
            hard_positive_tags: vec!["hard_positive_hand".to_string()],
            hard_positive_multiplier: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(RATIO_SUM) {
            return Err(SamplerError::BatchSize(self.batch_size));
        }
        if self.hard_positive_multiplier == 0 {
            return Err(SamplerError::Multiplier);
        }
        Ok(())
    }

    pub fn count_for(&self, bucket: Bucket) -> usize {
        self.batch_size / RATIO_SUM * bucket.ratio()
    }
}

/// Number of records carrying each main L2 label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelPopulation(BTreeMap<L2Label, usize>);

impl LabelPopulation {
    pub fn count(records: &[AnnotationRecord]) -> Self {
        let mut m = BTreeMap::new();
        for r in records.iter().filter(|r| !r.labels.normal) {
            for &l2 in r.labels.l2.keys() {
                if Bucket::for_label(l2).is_some() {
                    *m.entry(l2).or_insert(0) += 1;
                }
            }
        }
        LabelPopulation(m)
    }

    pub fn get(&self, l2: L2Label) -> usize {
        self.0.get(&l2).copied().unwrap_or(0)
    }
}

/// Bucket for one record. Records with several main L2 labels go to the
/// label with the smallest population, ties broken by taxonomy order.
/// Records with only the two rare L2 labels get no bucket.
pub fn assign_bucket(record: &AnnotationRecord, population: &LabelPopulation) -> Option<Bucket> {
    if record.labels.normal {
        return Some(Bucket::Normal);
    }
    record
        .labels
        .l2
        .keys()
        .copied()
        .filter(|l| Bucket::for_label(*l).is_some())
        .min_by_key(|l| (population.get(*l), *l))
        .and_then(Bucket::for_label)
}

/// Immutable sampling pools: record indices per bucket, hard positives
/// repeated.
#[derive(Debug, Clone)]
pub struct BucketIndex {
    ids: Vec<String>,
    pools: [Vec<usize>; 5],
    excluded: usize,
}

impl BucketIndex {
    pub fn build(records: &[AnnotationRecord], cfg: &SamplerConfig) -> Self {
        let population = LabelPopulation::count(records);
        let mut pools: [Vec<usize>; 5] = Default::default();
        let mut excluded = 0;
        for (i, r) in records.iter().enumerate() {
            match assign_bucket(r, &population) {
                Some(b) => {
                    let hard = b == Bucket::Normal
                        && r.tags.iter().any(|t| cfg.hard_positive_tags.contains(t));
                    let copies = if hard {
                        cfg.hard_positive_multiplier
                    } else {
                        1
                    };
                    pools[b.slot()].extend(std::iter::repeat_n(i, copies));
                }
                None => excluded += 1,
            }
        }
        BucketIndex {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            pools,
            excluded,
        }
    }

    pub fn pool(&self, bucket: Bucket) -> &[usize] {
        &self.pools[bucket.slot()]
    }

    pub fn id(&self, record: usize) -> &str {
        &self.ids[record]
    }

    /// Records that fall in no bucket.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn histogram(&self) -> BTreeMap<Bucket, usize> {
        Bucket::ALL
            .into_iter()
            .map(|b| (b, self.pool(b).len()))
            .collect()
    }
}

/// Sampling stream state: RNG plus the current shuffled epoch of each bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerState {
    rng: ChaCha8Rng,
    epochs: [Vec<usize>; 5],
    cursors: [usize; 5],
    epoch_counts: [u64; 5],
}

impl SamplerState {
    pub fn seeded(seed: u64) -> Self {
        SamplerState {
            rng: ChaCha8Rng::seed_from_u64(seed),
            epochs: Default::default(),
            cursors: [0; 5],
            epoch_counts: [0; 5],
        }
    }

    /// Completed-or-started epochs per bucket.
    pub fn epochs_started(&self, bucket: Bucket) -> u64 {
        self.epoch_counts[bucket.slot()]
    }

    fn draw(&mut self, index: &BucketIndex, bucket: Bucket) -> usize {
        let s = bucket.slot();
        if self.cursors[s] >= self.epochs[s].len() {
            let mut order = index.pools[s].clone();
            order.shuffle(&mut self.rng);
            self.epochs[s] = order;
            self.cursors[s] = 0;
            self.epoch_counts[s] += 1;
        }
        let rec = self.epochs[s][self.cursors[s]];
        self.cursors[s] += 1;
        rec
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchEntry {
    pub bucket: Bucket,
    pub record: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    pub entries: Vec<BatchEntry>,
}

impl Batch {
    pub fn count(&self, bucket: Bucket) -> usize {
        self.entries.iter().filter(|e| e.bucket == bucket).count()
    }

    pub fn ids<'a>(&'a self, index: &'a BucketIndex) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().map(move |e| index.id(e.record))
    }
}

/// Draws one batch. Entries are grouped by bucket in [`Bucket::ALL`] order.
pub fn sample_batch(
    index: &BucketIndex,
    cfg: &SamplerConfig,
    mut state: SamplerState,
) -> Result<(Batch, SamplerState), SamplerError> {
    cfg.validate()?;
    if let Some(b) = Bucket::ALL.into_iter().find(|b| index.pool(*b).is_empty()) {
        return Err(SamplerError::EmptyBucket(b));
    }
    let mut entries = Vec::with_capacity(cfg.batch_size);
    for bucket in Bucket::ALL {
        for _ in 0..cfg.count_for(bucket) {
            entries.push(BatchEntry {
                bucket,
                record: state.draw(index, bucket),
            });
        }
    }
    Ok((Batch { entries }, state))
}

/// Convenience iterator over successive batches.
pub struct MultiBucketSampler<'a> {
    index: &'a BucketIndex,
    cfg: SamplerConfig,
    state: Option<SamplerState>,
}

impl<'a> MultiBucketSampler<'a> {
    pub fn new(index: &'a BucketIndex, cfg: SamplerConfig) -> Result<Self, SamplerError> {
        cfg.validate()?;
        if let Some(b) = Bucket::ALL.into_iter().find(|b| index.pool(*b).is_empty()) {
            return Err(SamplerError::EmptyBucket(b));
        }
        let state = SamplerState::seeded(cfg.seed);
        Ok(MultiBucketSampler {
            index,
            cfg,
            state: Some(state),
        })
    }
}

impl Iterator for MultiBucketSampler<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let state = self.state.take()?;
        // config and buckets were checked in `new`
        let (batch, state) = sample_batch(self.index, &self.cfg, state).ok()?;
        self.state = Some(state);
        Some(batch)
    }
}
