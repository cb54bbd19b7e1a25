//! Stratified train / validation / test splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;

use crate::data::sample::{Dataset, Task};
use crate::error::{Error, Result};
use crate::seed::stream;

pub const TEST_FRACTION: f64 = 0.2;
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Disjoint, sorted index lists into the split dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub key: Task,
    pub seed: u64,
}

/// Sizes `(train, val, test)` for one stratum of `n` samples.
pub fn stratum_sizes(n: usize) -> (usize, usize, usize) {
    let test = (n as f64 * TEST_FRACTION).round() as usize;
    let rest = n - test;
    let val = (rest as f64 * VALIDATION_FRACTION).round() as usize;
    (rest - val, val, test)
}

/// Per stratum of `key`: shuffle with a stream derived from the seed and the
/// stratum, hold out 20% for test, then 10% of the remainder for validation.
pub fn split(dataset: &Dataset, key: Task, seed: u64) -> Result<SplitSpec> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if let Some(s) = dataset.samples.iter().find(|s| s.is_augmented()) {
        return Err(Error::invalid(format!("sample `{}` is augmented; split before augmenting", s.image_id)));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        strata.entry(s.label(key)).or_default().push(i);
    }
    let mut spec = SplitSpec { train: Vec::new(), val: Vec::new(), test: Vec::new(), key, seed };
    for (label, mut members) in strata {
        if members.len() < 5 {
            warn!("stratum {label} has only {} samples; split proportions are approximate", members.len());
        }
        members.shuffle(&mut stream(seed, &format!("{key}:{label}"), 0));
        let (tr, va, _) = stratum_sizes(members.len());
        spec.train.extend_from_slice(&members[..tr]);
        spec.val.extend_from_slice(&members[tr..tr + va]);
        spec.test.extend_from_slice(&members[tr + va..]);
    }
    spec.train.sort_unstable();
    spec.val.sort_unstable();
    spec.test.sort_unstable();
    Ok(spec)
}

impl SplitSpec {
    /// `image_id,partition` lines in dataset order.
    pub fn to_csv(&self, dataset: &Dataset) -> String {
        let mut part = vec![""; dataset.len()];
        for (list, name) in [(&self.train, "train"), (&self.val, "val"), (&self.test, "test")] {
            for &i in list {
                part[i] = name;
            }
        }
        let mut out = String::from("image_id,partition\n");
        for (s, p) in dataset.samples.iter().zip(part) {
            let _ = writeln!(out, "{},{p}", s.image_id);
        }
        out
    }

    pub fn save(&self, dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv(dataset))?;
        Ok(())
    }

    /// Reads a split file back against the dataset it was written for.
    pub fn load(dataset: &Dataset, path: impl AsRef<Path>, key: Task, seed: u64) -> Result<SplitSpec> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let index: std::collections::HashMap<&str, usize> =
            dataset.samples.iter().enumerate().map(|(i, s)| (s.image_id.as_str(), i)).collect();
        let mut spec = SplitSpec { train: Vec::new(), val: Vec::new(), test: Vec::new(), key, seed };
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (id, part) =
                line.split_once(',').ok_or_else(|| Error::parse(path, n + 1, "expected `image_id,partition`"))?;
            let &i = index.get(id).ok_or_else(|| Error::parse(path, n + 1, format!("unknown image `{id}`")))?;
            match part.trim() {
                "train" => spec.train.push(i),
                "val" => spec.val.push(i),
                "test" => spec.test.push(i),
                other => return Err(Error::parse(path, n + 1, format!("unknown partition `{other}`"))),
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::GrayImage;
    use crate::data::landmarks::LandmarkSet;
    use crate::data::sample::{Gender, Sample};

    fn dataset(per_class: usize, classes: usize) -> Dataset {
        let samples = (0..per_class * classes)
            .map(|i| Sample {
                image_id: format!("s{i}"),
                pixels: GrayImage::filled(2, 2, 0.0).unwrap(),
                class_label: i % classes,
                gender: if i % 3 == 0 { Gender::Female } else { Gender::Male },
                landmarks: LandmarkSet::missing(),
                augmented_from: None,
            })
            .collect();
        Dataset::new((0..classes).map(|c| c.to_string()).collect(), samples).unwrap()
    }

    #[test]
    fn hundred_per_class_gives_72_8_20() {
        assert_eq!(stratum_sizes(100), (72, 8, 20));
        let d = dataset(100, 3);
        let s = split(&d, Task::Character, 7).unwrap();
        for c in 0..3 {
            let count = |l: &[usize]| l.iter().filter(|&&i| d.samples[i].class_label == c).count();
            assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (72, 8, 20));
        }
    }

    #[test]
    fn partitions_are_disjoint_and_cover() {
        let d = dataset(37, 4);
        let s = split(&d, Task::Gender, 1).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_and_round_trips() {
        let d = dataset(20, 2);
        let a = split(&d, Task::Character, 3).unwrap();
        assert_eq!(a, split(&d, Task::Character, 3).unwrap());
        assert_ne!(a, split(&d, Task::Character, 4).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.csv");
        a.save(&d, &p).unwrap();
        let mut back = SplitSpec::load(&d, &p, Task::Character, 3).unwrap();
        back.train.sort_unstable();
        assert_eq!(back, a);
    }

    #[test]
    fn augmented_input_rejected() {
        let mut d = dataset(10, 1);
        d.samples[0].augmented_from = Some("x".into());
        assert!(split(&d, Task::Character, 0).is_err());
    }
}
