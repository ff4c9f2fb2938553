use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledSentence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), CorpusError> {
        let r = [self.train, self.validation, self.test];
        let ok = r.iter().all(|x| x.is_finite() && *x >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidRatios(r))
        }
    }

    /// Per-stratum sizes: floors of ratio * n, leftovers dealt round-robin
    /// starting with train.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let mut sizes = [floor(self.train), floor(self.validation), floor(self.test)];
        let mut remainder = n - sizes.iter().sum::<usize>().min(n);
        let mut k = 0;
        while remainder > 0 {
            sizes[k % 3] += 1;
            remainder -= 1;
            k += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSentence>,
    pub validation: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates two splits part-wise (used to add negatives to a
    /// positive split).
    pub fn merged(mut self, other: DatasetSplit) -> DatasetSplit {
        self.train.extend(other.train);
        self.validation.extend(other.validation);
        self.test.extend(other.test);
        self
    }
}

/// Seeded shuffle followed by a stratified-by-class partition. Expects
/// deduplicated input.
pub fn split(items: &[LabeledSentence], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, CorpusError> {
    if items.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    ratios.validate()?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut strata: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        strata.entry(items[i].class_id).or_default().push(i);
    }
    // 0 = train, 1 = validation, 2 = test
    let mut assignment = vec![0u8; items.len()];
    for members in strata.values() {
        let [n_train, n_val, _] = ratios.sizes(members.len());
        for (rank, &i) in members.iter().enumerate() {
            assignment[i] = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
        }
    }

    let mut out = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for &i in &order {
        let target = match assignment[i] {
            0 => &mut out.train,
            1 => &mut out.validation,
            _ => &mut out.test,
        };
        target.push(items[i].clone());
    }
    Ok(out)
}
