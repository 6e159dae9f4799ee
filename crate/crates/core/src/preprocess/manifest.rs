use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::BoundingBox;

/// Binary target. The positive class is calculus present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    NoCalculus = 0,
    Calculus = 1,
}

impl Label {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Label::NoCalculus),
            1 => Ok(Label::Calculus),
            other => Err(Error::Data(format!("label {other} is not 0 or 1"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::NoCalculus => "no_calculus",
            Label::Calculus => "calculus",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::usage(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub label: Label,
    pub bbox: BoundingBox,
    pub split: Option<Split>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    path: String,
    label: u8,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

/// Labeled image list, read from CSV with header `path,label,x,y,w,h` and an
/// optional trailing `split` column.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative image paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        DatasetManifest {
            records,
            base_dir: PathBuf::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::Data(format!("manifest row {}: {e}", line + 1)))?;
            let bbox = BoundingBox::new(row.x, row.y, row.w, row.h);
            if bbox.w == 0 || bbox.h == 0 {
                return Err(Error::Data(format!("manifest row {}: empty bounding box", line + 1)));
            }
            records.push(ManifestRecord {
                path: PathBuf::from(row.path),
                label: Label::from_index(row.label)?,
                bbox,
                split: row.split,
            });
        }
        Ok(DatasetManifest::new(records))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = DatasetManifest::from_csv_reader(file)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let with_split = self.records.iter().any(|r| r.split.is_some());
        if with_split {
            wtr.write_record(["path", "label", "x", "y", "w", "h", "split"])
        } else {
            wtr.write_record(["path", "label", "x", "y", "w", "h"])
        }
        .map_err(csv_error)?;
        for r in &self.records {
            let mut fields = vec![
                r.path.to_string_lossy().into_owned(),
                r.label.index().to_string(),
                r.bbox.x.to_string(),
                r.bbox.y.to_string(),
                r.bbox.w.to_string(),
                r.bbox.h.to_string(),
            ];
            if with_split {
                fields.push(r.split.map(|s| s.to_string()).unwrap_or_default());
            }
            wtr.write_record(&fields).map_err(csv_error)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Records carrying `split`, with their indices.
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = (usize, &ManifestRecord)> {
        self.records
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.split == Some(split))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}
