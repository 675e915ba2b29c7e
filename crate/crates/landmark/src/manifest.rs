//! `manifest.json`: one dataset directory described by its domain fields
//! plus a list of image/annotation records.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use landmark_core::data::{holdout_validation, resize_with_landmarks, DomainSpec, Sample};
use landmark_core::heatmap::{CoordinateSpace, LandmarkSet};
use serde::{Deserialize, Serialize};

use crate::error::{require_file, Error, Result};
use crate::io::{read_image, read_json, read_points};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Defaults to the image file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub image: PathBuf,
    pub landmarks: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(flatten)]
    pub spec: DomainSpec,
    pub records: Vec<Record>,
}

/// A record with its id settled and paths resolved against the manifest
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: String,
    pub image: PathBuf,
    pub landmarks: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    /// The training split minus its validation tail.
    Fit,
    /// The last tenth of the training split.
    Val,
    Train,
    Test,
    /// Training followed by test records.
    All,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub spec: DomainSpec,
    /// Sorted by id.
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        require_file(path, "manifest")?;
        let file: ManifestFile = read_json(path, "manifest")?;
        let ctx = |e: Error| e.context(format!("manifest {}", path.display()));
        file.spec.validate(1).map_err(|e| ctx(e.into()))?;
        if file.spec.in_channels != 1 {
            return Err(ctx(Error::Validation(
                "images are loaded as grayscale; in_channels must be 1".into(),
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::with_capacity(file.records.len());
        for r in &file.records {
            let id = match &r.id {
                Some(id) => id.clone(),
                None => r
                    .image
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| {
                        ctx(Error::Validation(format!(
                            "record {} has no usable id",
                            r.image.display()
                        )))
                    })?,
            };
            entries.push(Entry {
                id,
                image: base.join(&r.image),
                landmarks: base.join(&r.landmarks),
            });
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        let mut seen = BTreeSet::new();
        let dups: Vec<&str> = entries
            .iter()
            .filter(|e| !seen.insert(&e.id))
            .map(|e| e.id.as_str())
            .collect();
        if !dups.is_empty() {
            return Err(ctx(Error::Validation(format!(
                "duplicate record ids: {}",
                dups.join(", ")
            ))));
        }
        let missing: Vec<&str> = entries
            .iter()
            .filter(|e| !e.image.is_file() || !e.landmarks.is_file())
            .map(|e| e.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(ctx(Error::Validation(format!(
                "missing image or landmark files for records: {}",
                missing.join(", ")
            ))));
        }
        let (train, test) = file.spec.split;
        if train + test > entries.len() {
            return Err(ctx(Error::Validation(format!(
                "split ({train}, {test}) needs {} records, found {}",
                train + test,
                entries.len()
            ))));
        }
        Ok(Self {
            path: path.to_path_buf(),
            spec: file.spec,
            entries,
        })
    }

    pub fn entries(&self, split: Split) -> &[Entry] {
        let (train, test) = self.spec.split;
        match split {
            Split::Train => &self.entries[..train],
            Split::Test => &self.entries[train..train + test],
            Split::All => &self.entries[..train + test],
            Split::Fit | Split::Val => {
                let (fit, val) = holdout_validation((0..train).collect::<Vec<_>>());
                let range = if split == Split::Fit { fit } else { val };
                match (range.first(), range.last()) {
                    (Some(&a), Some(&b)) => &self.entries[a..=b],
                    _ => &[],
                }
            }
        }
    }

    /// Loads and resizes every sample of `split`.
    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.entries(split).iter().map(|e| self.sample(e)).collect()
    }

    pub fn sample(&self, entry: &Entry) -> Result<Sample> {
        let spec = &self.spec;
        let image = read_image(&entry.image)?;
        let points = read_points(&entry.landmarks)?;
        if points.len() != spec.num_landmarks {
            return Err(Error::Validation(format!(
                "{}: expected {} landmarks, found {}",
                entry.landmarks.display(),
                spec.num_landmarks,
                points.len()
            )));
        }
        let set = LandmarkSet::new(
            spec.domain_id.clone(),
            entry.id.clone(),
            points,
            CoordinateSpace::Native,
        );
        resize_with_landmarks(&image, &set, spec.resize_to)
            .map_err(|e| Error::from(e).context(entry.landmarks.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_annotation, write_gray_png, write_json};
    use landmark_core::data::{Raster, Spacing};
    use landmark_core::heatmap::Point;

    fn spec(split: (usize, usize)) -> DomainSpec {
        DomainSpec {
            domain_id: "toy".into(),
            name: "toy".into(),
            num_landmarks: 2,
            in_channels: 1,
            resize_to: (8, 8),
            spacing: Spacing::PixelOnly,
            split,
            sdr_thresholds: None,
        }
    }

    fn write_dataset(dir: &Path, ids: &[&str], split: (usize, usize)) -> PathBuf {
        let mut records = Vec::new();
        for id in ids {
            let img = format!("{id}.png");
            let csv = format!("{id}.csv");
            write_gray_png(&dir.join(&img), &Raster::new(1, 16, 16, vec![0.5; 256])).unwrap();
            write_annotation(&dir.join(&csv), &[Point::new(2.0, 4.0), Point::new(10.0, 12.0)]).unwrap();
            records.push(Record {
                id: None,
                image: img.into(),
                landmarks: csv.into(),
            });
        }
        let path = dir.join("manifest.json");
        write_json(
            &path,
            &ManifestFile {
                spec: spec(split),
                records,
            },
        )
        .unwrap();
        path
    }

    #[test]
    fn ordering_splits_and_resizing() {
        let dir = tempfile::tempdir().unwrap();
        let ids = ["c", "a", "e", "b", "d", "g", "f", "h", "j", "i", "k", "l"];
        let m = Manifest::load(&write_dataset(dir.path(), &ids, (10, 2))).unwrap();
        let order: Vec<&str> = m.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(order, ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"]);
        let ids_of = |s| m.entries(s).iter().map(|e| e.id.as_str()).collect::<Vec<_>>();
        assert_eq!(ids_of(Split::Test), ["k", "l"]);
        assert_eq!(ids_of(Split::Val), ["j"]);
        assert_eq!(ids_of(Split::Fit).len(), 9);
        let s = m.samples(Split::Test).unwrap();
        assert_eq!(s[0].landmarks.points, [Point::new(1.0, 2.0), Point::new(5.0, 6.0)]);
        assert_eq!(s[0].native_size, (16, 16));
        let again = Manifest::load(&m.path).unwrap();
        assert_eq!(again.entries, m.entries);
    }

    #[test]
    fn missing_files_are_listed_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &["a", "b", "c"], (2, 1));
        std::fs::remove_file(dir.path().join("b.png")).unwrap();
        std::fs::remove_file(dir.path().join("c.csv")).unwrap();
        let err = Manifest::load(&path).unwrap_err().to_string();
        assert!(err.contains("b, c"), "{err}");
    }

    #[test]
    fn landmark_count_mismatch_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &["a", "b"], (1, 1));
        write_annotation(&dir.path().join("b.csv"), &[Point::new(1.0, 1.0)]).unwrap();
        let m = Manifest::load(&path).unwrap();
        let err = m.samples(Split::Test).unwrap_err().to_string();
        assert!(err.contains("b.csv") && err.contains("expected 2"), "{err}");
    }

    #[test]
    fn split_larger_than_dataset_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &["a", "b"], (2, 1));
        assert!(matches!(Manifest::load(&path), Err(Error::Validation(_))));
        assert!(Manifest::load(&dir.path().join("nope.json"))
            .unwrap_err()
            .to_string()
            .contains("nope.json"));
    }
}
