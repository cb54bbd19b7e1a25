//! Class and gender rebalancing by augmentation and subsampling.

use log::info;
use rand::seq::index;

use crate::data::augment::{augment_chain, random_chain};
use crate::data::sample::{Dataset, Gender, Sample};
use crate::error::{Error, Result};
use crate::seed::stream;

pub const MIN_PER_CLASS: usize = 600;
pub const MAX_PER_CLASS: usize = 800;

/// `need` augmented copies drawn round-robin from `sources`. Copy `j` uses
/// its own RNG stream derived from the seed, the source id and `j`, so the
/// result does not depend on processing order.
fn oversample(dataset: &Dataset, sources: &[usize], need: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(need);
    for j in 0..need {
        let src = &dataset.samples[sources[j % sources.len()]];
        let mut rng = stream(seed, &src.image_id, j as u64);
        let ops = random_chain(&mut rng, src.pixels.width(), src.pixels.height());
        let mut copy = augment_chain(src, &ops)?;
        copy.image_id = format!("{}~aug{j}", src.image_id);
        out.push(copy);
    }
    Ok(out)
}

/// Brings every class to between `min` and `max` samples. Small classes keep
/// all originals and gain augmented copies up to `min`; large classes are
/// subsampled uniformly to `max`.
pub fn balance_classes(dataset: &Dataset, min: usize, max: usize, seed: u64) -> Result<Dataset> {
    if min == 0 || min > max {
        return Err(Error::invalid(format!("class bounds [{min}, {max}] are empty")));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); dataset.classes.len()];
    for (i, s) in dataset.samples.iter().enumerate() {
        groups[s.class_label].push(i);
    }
    if let Some(c) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Empty(format!("class `{}` has no samples", dataset.classes[c])));
    }
    let mut keep = vec![false; dataset.len()];
    let mut extra = Vec::new();
    for (c, group) in groups.iter().enumerate() {
        if group.len() > max {
            let mut rng = stream(seed, &dataset.classes[c], u64::MAX);
            for k in index::sample(&mut rng, group.len(), max) {
                keep[group[k]] = true;
            }
        } else {
            for &i in group {
                keep[i] = true;
            }
            if group.len() < min {
                extra.extend(oversample(dataset, group, min - group.len(), seed)?);
            }
        }
    }
    let mut samples: Vec<Sample> =
        dataset.samples.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect();
    info!("class balancing: {} originals kept, {} augmented", samples.len(), extra.len());
    samples.extend(extra);
    Dataset::new(dataset.classes.clone(), samples)
}

/// Oversamples the minority gender until both genders are equally frequent;
/// the majority is left untouched.
pub fn balance_gender(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let (male, female): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| dataset.samples[i].gender == Gender::Male);
    if male.is_empty() || female.is_empty() {
        return Err(Error::Empty(format!(
            "gender balancing needs both genders ({} male, {} female)",
            male.len(),
            female.len()
        )));
    }
    let (minority, need) = if male.len() < female.len() {
        (&male, female.len() - male.len())
    } else {
        (&female, male.len() - female.len())
    };
    let mut out = dataset.clone();
    out.samples.extend(oversample(dataset, minority, need, seed)?);
    Ok(out)
}
