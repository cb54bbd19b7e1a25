//! Labeled samples and datasets.

use std::fmt;
use std::str::FromStr;

use crate::data::image::GrayImage;
use crate::data::landmarks::LandmarkSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn index(self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            other => Err(Error::invalid(format!("unknown gender `{other}`"))),
        }
    }
}

/// Which label a recognizer predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Character,
    Gender,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "character" => Ok(Task::Character),
            "gender" => Ok(Task::Gender),
            other => Err(Error::invalid(format!("unknown task `{other}` (character or gender)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Character => "character",
            Task::Gender => "gender",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image_id: String,
    /// Normalized pixels in `[0, 1]`.
    pub pixels: GrayImage,
    pub class_label: usize,
    pub gender: Gender,
    pub landmarks: LandmarkSet,
    /// Id of the original this sample was augmented from.
    pub augmented_from: Option<String>,
}

impl Sample {
    pub fn is_augmented(&self) -> bool {
        self.augmented_from.is_some()
    }

    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Character => self.class_label,
            Task::Gender => self.gender.index(),
        }
    }
}

/// Samples plus the class-name vocabulary (`class_label` indexes it).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(classes: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.class_label >= classes.len()) {
            return Err(Error::invalid(format!(
                "sample `{}` has class {} but only {} classes are declared",
                s.image_id,
                s.class_label,
                classes.len()
            )));
        }
        Ok(Dataset { classes, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_labels(&self, task: Task) -> usize {
        match task {
            Task::Character => self.classes.len(),
            Task::Gender => 2,
        }
    }

    pub fn labels(&self, task: Task) -> Vec<usize> {
        self.samples.iter().map(|s| s.label(task)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.class_label] += 1;
        }
        counts
    }

    pub fn gender_counts(&self) -> (usize, usize) {
        let female = self.samples.iter().filter(|s| s.gender == Gender::Female).count();
        (self.samples.len() - female, female)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { classes: self.classes.clone(), samples: indices.iter().map(|&i| self.samples[i].clone()).collect() }
    }
}
