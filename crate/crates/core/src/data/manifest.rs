use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::images::load_image;
use crate::error::{Error, Result};
use crate::image::validate_image;
use crate::pair::{MakeupPair, MAX_AGE_YEARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Self::Train),
            "val" | "validation" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub clean_path: PathBuf,
    pub madeup_path: PathBuf,
    pub age_years: f64,
    pub subject_id: String,
    pub split: Option<SplitTag>,
    /// Free-form makeup style label.
    pub style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub root: PathBuf,
    pub entries: Vec<PairEntry>,
}

#[derive(Debug, Deserialize)]
struct Row {
    clean_path: String,
    madeup_path: String,
    age: String,
    subject_id: String,
    #[serde(default)]
    split: Option<String>,
    #[serde(default)]
    style: Option<String>,
}

/// Reads a CSV with header `clean_path,madeup_path,age,subject_id` and
/// optional `split` and `style` columns. Relative paths resolve against the
/// manifest's directory; every referenced file must exist.
pub fn load_pair_manifest(path: impl AsRef<Path>) -> Result<PairManifest> {
    let path = path.as_ref();
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut entries = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::data(path, format!("row {line}: {e}")))?;
        let age: f64 = row
            .age
            .parse()
            .map_err(|_| Error::data(path, format!("row {line}: age {:?} is not a number", row.age)))?;
        if !(0.0..=MAX_AGE_YEARS).contains(&age) {
            return Err(Error::data(path, format!("row {line}: age {age} outside [0, {MAX_AGE_YEARS}]")));
        }
        let resolve = |p: &str| -> Result<PathBuf> {
            let p = PathBuf::from(p);
            let full = if p.is_absolute() { p } else { root.join(p) };
            if !full.is_file() {
                return Err(Error::data(path, format!("row {line}: missing image {}", full.display())));
            }
            Ok(full)
        };
        let split = match row.split.as_deref().filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(|e: Error| Error::data(path, format!("row {line}: {e}")))?),
            None => None,
        };
        entries.push(PairEntry {
            clean_path: resolve(&row.clean_path)?,
            madeup_path: resolve(&row.madeup_path)?,
            age_years: age,
            subject_id: row.subject_id,
            split,
            style: row.style.filter(|s| !s.is_empty()),
        });
    }
    Ok(PairManifest { root, entries })
}

impl PairManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries with the given split tag; untagged entries count as training data.
    pub fn split(&self, tag: SplitTag) -> PairManifest {
        PairManifest {
            root: self.root.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| e.split.unwrap_or(SplitTag::Train) == tag)
                .cloned()
                .collect(),
        }
    }

    /// Decodes every pair; with `side` set, images must be `side`×`side`.
    pub fn load_pairs(&self, side: Option<usize>) -> Result<Vec<MakeupPair>> {
        self.entries
            .iter()
            .map(|e| {
                let load = |p: &Path| -> Result<_> {
                    let img = load_image(p)?;
                    match side {
                        Some(s) => validate_image(img, s).map_err(|err| Error::data(p, err.to_string())),
                        None => Ok(img),
                    }
                };
                MakeupPair::new(load(&e.clean_path)?, load(&e.madeup_path)?, e.age_years, e.subject_id.clone())
                    .map_err(|err| Error::data(&e.madeup_path, format!("subject {}: {err}", e.subject_id)))
            })
            .collect()
    }

    /// Number of entries per style tag (`"untagged"` for none).
    pub fn style_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.style.clone().unwrap_or_else(|| "untagged".into())).or_insert(0) += 1;
        }
        counts
    }
}

/// Image id to exact age in years.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgeMetadata {
    pub ages: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MetadataFile {
    Map(BTreeMap<String, f64>),
    Records(Vec<Record>),
}

#[derive(Deserialize)]
struct Record {
    id: String,
    age: f64,
}

impl AgeMetadata {
    pub fn get(&self, id: &str) -> Result<f64> {
        self.ages.get(id).copied().ok_or_else(|| Error::NotFound(format!("age for id {id:?}")))
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }
}

/// Reads JSON either as an object `{"id": age, ..}` or as an array of
/// `{"id": .., "age": ..}` records.
pub fn load_age_metadata(path: impl AsRef<Path>) -> Result<AgeMetadata> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
    let parsed: MetadataFile =
        serde_json::from_str(&text).map_err(|e| Error::data(path, format!("malformed metadata: {e}")))?;
    let pairs: Vec<(String, f64)> = match parsed {
        MetadataFile::Map(m) => m.into_iter().collect(),
        MetadataFile::Records(r) => r.into_iter().map(|r| (r.id, r.age)).collect(),
    };
    let mut ages = BTreeMap::new();
    for (id, age) in pairs {
        if !(0.0..=MAX_AGE_YEARS).contains(&age) {
            return Err(Error::data(path, format!("id {id}: age {age} outside [0, {MAX_AGE_YEARS}]")));
        }
        if ages.insert(id.clone(), age).is_some() {
            return Err(Error::data(path, format!("duplicate id {id}")));
        }
    }
    Ok(AgeMetadata { ages })
}
