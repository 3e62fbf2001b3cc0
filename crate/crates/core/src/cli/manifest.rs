use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fusion::MethodOutputs;
use crate::image::{load_raster, ImagePairRecord, Raster};
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Dataset description shared by every pipeline stage.
///
/// Relative paths resolve against the directory holding the manifest file.
/// Method outputs live at `<methods[name]>/<id>.png`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub pairs: Vec<ImagePairRecord>,
    #[serde(default)]
    pub methods: BTreeMap<String, PathBuf>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Ids become file names, so they must be plain file-name stems.
pub(crate) fn check_name(kind: &str, name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name == "."
        || name == ".."
        || name.contains(['/', '\\'])
        || name.chars().any(char::is_control);
    if bad {
        Err(Error::Manifest(format!("invalid {kind} {name:?}")))
    } else {
        Ok(())
    }
}

impl Manifest {
    pub fn new(pairs: Vec<ImagePairRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest = Self {
            version: MANIFEST_VERSION,
            pairs,
            methods: BTreeMap::new(),
            base_dir: base_dir.into(),
        };
        manifest.pairs.sort_by(|a, b| a.id.cmp(&b.id));
        manifest.check_structure()?;
        Ok(manifest)
    }

    /// Reads and validates a manifest, including the presence of every
    /// method output file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.pairs.sort_by(|a, b| a.id.cmp(&b.id));
        manifest.check_structure()?;
        manifest.check_method_files()?;
        Ok(manifest)
    }

    /// Writes the manifest as pretty JSON followed by a newline.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn check_structure(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported version {}; expected {MANIFEST_VERSION}",
                self.version
            )));
        }
        let mut seen = BTreeSet::new();
        for pair in &self.pairs {
            check_name("pair id", &pair.id)?;
            if !seen.insert(pair.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate pair id {}", pair.id)));
            }
        }
        for name in self.methods.keys() {
            check_name("method name", name)?;
        }
        Ok(())
    }

    fn check_method_files(&self) -> Result<()> {
        for name in self.methods.keys() {
            let missing: Vec<&str> = self
                .pairs
                .iter()
                .filter(|p| !self.method_output_path(name, &p.id).is_file())
                .map(|p| p.id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(Error::Manifest(format!(
                    "method {name} has no output for [{}]",
                    missing.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.id.clone()).collect()
    }

    pub fn gt_path(&self, pair: &ImagePairRecord) -> PathBuf {
        self.resolve(&pair.gt_path)
    }

    pub fn low_path(&self, pair: &ImagePairRecord) -> Result<PathBuf> {
        pair.low_path
            .as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Manifest(format!("pair {} has no low_path; run degrade first", pair.id)))
    }

    pub fn method_dir(&self, method: &str) -> Option<PathBuf> {
        self.methods.get(method).map(|d| self.resolve(d))
    }

    pub fn method_output_path(&self, method: &str, id: &str) -> PathBuf {
        self.method_dir(method).unwrap_or_default().join(format!("{id}.png"))
    }

    pub fn load_gts(&self) -> Result<BTreeMap<String, Raster>> {
        load_all(self.pairs.iter().map(|p| (p.id.clone(), self.gt_path(p))))
    }

    pub fn load_method_outputs(&self, methods: &[String]) -> Result<MethodOutputs> {
        methods
            .iter()
            .map(|m| {
                if !self.methods.contains_key(m) {
                    return Err(Error::Manifest(format!("unknown method {m}")));
                }
                let outputs = load_all(
                    self.pairs
                        .iter()
                        .map(|p| (p.id.clone(), self.method_output_path(m, &p.id))),
                )
                .map_err(|e| e.for_item(m.clone()))?;
                Ok((m.clone(), outputs))
            })
            .collect()
    }

    /// Rewrites every path so the manifest can be saved into `dir`: paths
    /// under `dir` become relative, all others absolute.
    pub fn rebased(&self, dir: &Path) -> Result<Manifest> {
        let dir_abs = absolute(dir)?;
        let rebase = |p: &Path| -> Result<PathBuf> {
            let abs = absolute(&self.resolve(p))?;
            Ok(abs.strip_prefix(&dir_abs).map(Path::to_path_buf).unwrap_or(abs))
        };
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                Ok(ImagePairRecord {
                    id: p.id.clone(),
                    low_path: p.low_path.as_deref().map(rebase).transpose()?,
                    gt_path: rebase(&p.gt_path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let methods = self
            .methods
            .iter()
            .map(|(k, v)| Ok((k.clone(), rebase(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Manifest {
            version: self.version,
            pairs,
            methods,
            base_dir: dir.to_path_buf(),
        })
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
    // Normalize `.`/`..` through the filesystem when the path exists.
    Ok(fs::canonicalize(&abs).unwrap_or(abs))
}

fn load_all(items: impl Iterator<Item = (String, PathBuf)>) -> Result<BTreeMap<String, Raster>> {
    use rayon::prelude::*;
    let items: Vec<(String, PathBuf)> = items.collect();
    items
        .into_par_iter()
        .map(|(id, path)| load_raster(&path).map(|r| (id.clone(), r)).map_err(|e| e.for_item(id)))
        .collect()
}
