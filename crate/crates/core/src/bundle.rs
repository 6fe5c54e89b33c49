//! On-disk model bundles.
//!
//! A bundle is a directory:
//!
//! ```text
//! manifest.json        format version, model kind, seed, metrics
//! normalize.json       normalizer settings
//! merges.txt           BPE merge table
//! taxonomy.json
//! model.json           flat and pseudo-label models
//! pseudo_report.json   pseudo-label models only
//! upper/node.json      hierarchy: upper-level node
//! lower/index.json     hierarchy: upper class per lower directory
//! lower/NN/node.json   hierarchy: lower-level node for class NN
//! ```
//!
//! Bundles are written to a temporary sibling directory and renamed into
//! place, so a failed save never leaves a partial bundle behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bpe::MergeTable;
use crate::corpus::Taxonomy;
use crate::error::{Error, Result};
use crate::normalize::NormalizeConfig;
use crate::pipeline::{FeatureModel, Tokenizer};
use crate::strategies::{HierarchyModel, ModelKind, Node, PseudoReport, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: String,
    pub seed: u64,
    #[serde(default)]
    pub metrics: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub model: TrainedModel,
    pub taxonomy: Taxonomy,
}

impl Bundle {
    pub fn new(model: TrainedModel, taxonomy: Taxonomy, seed: u64, metrics: Option<serde_json::Value>) -> Self {
        let taxonomy = match &model.kind {
            ModelKind::Hierarchy(h) => h.taxonomy.clone(),
            _ => taxonomy,
        };
        Bundle {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                kind: model.kind_name().to_string(),
                seed,
                metrics,
            },
            model,
            taxonomy,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_contents(dir: &Path, bundle: &Bundle) -> Result<()> {
    write_json(&dir.join("manifest.json"), &bundle.manifest)?;
    write_json(&dir.join("normalize.json"), &bundle.model.tokenizer.normalize)?;
    bundle.model.tokenizer.table.save(&dir.join("merges.txt"))?;
    let taxonomy_path = dir.join("taxonomy.json");
    fs::write(&taxonomy_path, bundle.taxonomy.to_json()).map_err(|e| Error::io(&taxonomy_path, e))?;
    match &bundle.model.kind {
        ModelKind::Flat { model } => write_json(&dir.join("model.json"), model)?,
        ModelKind::Pseudo { model, report } => {
            write_json(&dir.join("model.json"), model)?;
            write_json(&dir.join("pseudo_report.json"), report)?;
        }
        ModelKind::Hierarchy(h) => {
            mkdir(&dir.join("upper"))?;
            write_json(&dir.join("upper").join("node.json"), &h.upper)?;
            let lower = dir.join("lower");
            mkdir(&lower)?;
            let names: Vec<&String> = h.lower.keys().collect();
            write_json(&lower.join("index.json"), &names)?;
            for (i, node) in h.lower.values().enumerate() {
                let sub = lower.join(format!("{i:02}"));
                mkdir(&sub)?;
                write_json(&sub.join("node.json"), node)?;
            }
        }
    }
    Ok(())
}

/// Writes `bundle` to `path`, replacing any existing bundle there.
pub fn save(bundle: &Bundle, path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    mkdir(&parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".codesem-bundle-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    write_contents(staging.path(), bundle)?;
    let staged = staging.keep();
    if path.exists() {
        let old = tempfile::Builder::new()
            .prefix(".codesem-old-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(&parent, e))?;
        let backup = old.path().join("bundle");
        fs::rename(path, &backup).map_err(|e| Error::io(path, e))?;
        if let Err(e) = fs::rename(&staged, path) {
            let _ = fs::rename(&backup, path);
            let _ = fs::remove_dir_all(&staged);
            return Err(Error::io(path, e));
        }
    } else if let Err(e) = fs::rename(&staged, path) {
        let _ = fs::remove_dir_all(&staged);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Reads the manifest and checks its format version.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&path.join("manifest.json"))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

pub fn load(path: &Path) -> Result<Bundle> {
    let manifest = read_manifest(path)?;
    let normalize: NormalizeConfig = read_json(&path.join("normalize.json"))?;
    let table = MergeTable::load(&path.join("merges.txt"))?;
    let taxonomy = Taxonomy::load(&path.join("taxonomy.json"))?;
    let kind = match manifest.kind.as_str() {
        "flat" => ModelKind::Flat {
            model: read_json::<FeatureModel>(&path.join("model.json"))?,
        },
        "pseudo" => ModelKind::Pseudo {
            model: read_json(&path.join("model.json"))?,
            report: read_json::<PseudoReport>(&path.join("pseudo_report.json"))?,
        },
        "hierarchy" => {
            let upper: Node = read_json(&path.join("upper").join("node.json"))?;
            let lower_dir = path.join("lower");
            let names: Vec<String> = read_json(&lower_dir.join("index.json"))?;
            let mut lower = std::collections::BTreeMap::new();
            for (i, name) in names.into_iter().enumerate() {
                let node: Node = read_json(&lower_dir.join(format!("{i:02}")).join("node.json"))?;
                lower.insert(name, node);
            }
            ModelKind::Hierarchy(HierarchyModel {
                taxonomy: taxonomy.clone(),
                upper,
                lower,
            })
        }
        other => return Err(Error::config(format!("unknown bundle kind {other:?}"))),
    };
    let mut model = TrainedModel {
        tokenizer: Tokenizer { normalize, table },
        kind,
    };
    model.prepare();
    Ok(Bundle {
        manifest,
        model,
        taxonomy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Snippet;
    use crate::pipeline::{ModelSpec, TokenizerSpec};
    use crate::strategies::{fit, HierarchySpec, StrategySpec, TrainSpec};
    use std::collections::BTreeMap;

    fn data() -> Vec<Snippet> {
        let rows = [
            ("Load.csv", "df = pd.read_csv('a.csv')"),
            ("Load.csv", "train = pd.read_csv(path)"),
            ("Load.json", "cfg = json.load(fh)"),
            ("Load.json", "data = json.load(open(p))"),
            ("Plot.hist", "plt.hist(df.age)"),
            ("Plot.hist", "ax.hist(values, bins=20)"),
        ];
        rows.iter()
            .enumerate()
            .map(|(i, (l, c))| Snippet::labeled(format!("s{i}"), *c, l))
            .collect()
    }

    fn spec(strategy: StrategySpec) -> TrainSpec {
        TrainSpec {
            tokenizer: TokenizerSpec {
                vocab_size: 200,
                dropout: 0.0,
                ..Default::default()
            },
            strategy,
            augment: None,
        }
    }

    fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.insert(rel, fs::read(&p).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let snippets = data();
        let refs: Vec<&Snippet> = snippets.iter().collect();
        let taxonomy = Taxonomy::from_snippets(&snippets);
        let tmp = tempfile::tempdir().unwrap();
        for strategy in [
            StrategySpec::Flat(ModelSpec::default()),
            StrategySpec::Hierarchy(HierarchySpec {
                upper: ModelSpec::default(),
                lower_default: ModelSpec::default(),
                lower: BTreeMap::new(),
            }),
        ] {
            let model = fit(&refs, &[], &taxonomy, &spec(strategy), 3).unwrap();
            let codes: Vec<&str> = snippets.iter().map(|s| s.code.as_str()).collect();
            let before = model.predict(&codes).unwrap();
            let b = Bundle::new(model, taxonomy.clone(), 3, None);
            let first = tmp.path().join(b.manifest.kind.clone()).join("a");
            let second = tmp.path().join(b.manifest.kind.clone()).join("b");
            save(&b, &first).unwrap();
            let loaded = load(&first).unwrap();
            assert_eq!(loaded.model.predict(&codes).unwrap(), before);
            assert_eq!(loaded, b);
            save(&loaded, &second).unwrap();
            assert_eq!(files(&first), files(&second));
            // Overwriting an existing bundle works.
            save(&loaded, &first).unwrap();
            assert_eq!(files(&first), files(&second));
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let snippets = data();
        let refs: Vec<&Snippet> = snippets.iter().collect();
        let taxonomy = Taxonomy::from_snippets(&snippets);
        let model = fit(&refs, &[], &taxonomy, &spec(StrategySpec::Flat(ModelSpec::default())), 0).unwrap();
        let mut b = Bundle::new(model, taxonomy, 0, None);
        b.manifest.format_version = 99;
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("b");
        save(&b, &path).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("v99") && err.contains("v1"), "{err}");
    }
}
