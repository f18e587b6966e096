use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use segbench_core::geometry::{BoundingBox, Mask, Volume};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    TestRetro,
    TestPro,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validation, Split::TestRetro, Split::TestPro];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::TestRetro => "test_retro",
            Split::TestPro => "test_pro",
        }
    }

    pub fn is_test(self) -> bool {
        matches!(self, Split::TestRetro | Split::TestPro)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .with_context(|| format!("unknown split {s:?} (expected train, validation, test_retro or test_pro)"))
    }
}

/// One case of a study. Paths are relative to the manifest's directory
/// unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub volume_path: PathBuf,
    pub gt_mask_path: PathBuf,
    /// Tight box around the lesion in world mm, the stand-in for the
    /// manually placed box.
    pub tumor_box: BoundingBox,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub cases: Vec<CaseEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(seed: Option<u64>, cases: Vec<CaseEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Manifest {
            seed,
            cases,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut m: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate().with_context(|| format!("manifest {}", path.display()))?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.cases {
            if c.case_id.is_empty() {
                bail!("empty case id");
            }
            if !seen.insert(c.case_id.as_str()) {
                bail!("duplicate case id {:?}", c.case_id);
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CaseEntry> {
        self.cases.iter().filter(move |c| c.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// Loads case files and records every path it opens, so callers can prove
/// which cases a run touched.
#[derive(Clone, Debug, Default)]
pub struct CaseLoader {
    log: Arc<Mutex<Vec<PathBuf>>>,
}

impl CaseLoader {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, p: &Path) {
        self.log.lock().expect("audit log poisoned").push(p.to_path_buf());
    }

    pub fn volume(&self, m: &Manifest, c: &CaseEntry) -> Result<Volume> {
        let p = m.resolve(&c.volume_path);
        self.record(&p);
        Volume::read_nrrd(&p).with_context(|| format!("case {}: loading volume", c.case_id))
    }

    pub fn ground_truth(&self, m: &Manifest, c: &CaseEntry) -> Result<Mask> {
        let p = m.resolve(&c.gt_mask_path);
        self.record(&p);
        Mask::read_nrrd(&p).with_context(|| format!("case {}: loading ground truth", c.case_id))
    }

    /// Every path opened so far, sorted and deduplicated.
    pub fn accessed(&self) -> Vec<PathBuf> {
        let mut v = self.log.lock().expect("audit log poisoned").clone();
        v.sort();
        v.dedup();
        v
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for p in self.accessed() {
            text.push_str(&p.display().to_string());
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing audit log {}", path.display()))
    }
}
