//! Dataset loading and the on-disk graph cache.
//!
//! A cache directory holds one file per measure subgraph, the co-occurrence counts,
//! the PPMI matrix and its normalized form, plus `manifest.tsv`:
//!
//! ```text
//! input_hash	<sha256 of features, topology and graph settings>
//! measure	cosine
//! file	subgraph_0.bin	<sha256 of the file>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mlsg_core::cache::{load_sparse, save_sparse, save_sparse_counts};
use mlsg_core::dataset::{load_dataset, make_splits, LabeledDataset, Splits};
use mlsg_core::graph::SparseGraph;
use mlsg_core::linalg::CsrMatrix;
use mlsg_core::measures::{default_measures, mean_pairwise_sq_distance, MeasureKind};
use mlsg_core::pipeline::{prepare_graphs, GraphPrepConfig};
use mlsg_core::synthetic::{two_blob_dataset, BlobConfig};
use mlsg_core::training::GraphInputs;
use sha2::{Digest, Sha256};

use crate::config::{DataSource, MeasureSpec, RunConfig};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.tsv";
const FREQUENCY_FILE: &str = "frequency.bin";
const PPMI_FILE: &str = "ppmi.bin";
const PPMI_NORMALIZED_FILE: &str = "ppmi_normalized.bin";

pub fn load_data(cfg: &RunConfig) -> Result<LabeledDataset> {
    let d = &cfg.data;
    match &d.source {
        None => Err(CliError::usage("no dataset configured: set [data] features/edges/labels or source = synthetic")),
        Some(DataSource::Synthetic(blob)) => {
            let blob = BlobConfig {
                labels_per_class: d.labels_per_class.unwrap_or(blob.labels_per_class),
                val: d.val.unwrap_or(blob.val),
                test: d.test.unwrap_or(blob.test),
                ..*blob
            };
            Ok(two_blob_dataset(&blob)?)
        }
        Some(DataSource::Files {
            features,
            edges,
            labels,
            splits,
        }) => {
            let ds = load_dataset(features, edges, labels)?;
            match splits {
                Some(path) => Ok(ds.with_splits(Splits::load(path)?)?),
                None => Ok(make_splits(
                    &ds,
                    d.labels_per_class.unwrap_or(20),
                    d.val.unwrap_or(500),
                    d.test.unwrap_or(1000),
                    d.split_seed,
                )?),
            }
        }
    }
}

/// Fills in data-dependent measure parameters.
pub fn resolve_measures(cfg: &RunConfig, ds: &LabeledDataset) -> Result<Vec<MeasureKind>> {
    let k = cfg.graph.k;
    let Some(specs) = &cfg.measures else {
        return Ok(default_measures(&ds.features, k)?);
    };
    let mut bandwidth = None;
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        out.push(match *spec {
            MeasureSpec::Cosine => MeasureKind::Cosine,
            MeasureSpec::Gaussian(Some(t)) => MeasureKind::Gaussian { bandwidth: t },
            MeasureSpec::Gaussian(None) => MeasureKind::Gaussian {
                bandwidth: *bandwidth.get_or_insert_with(|| mean_pairwise_sq_distance(&ds.features)),
            },
            MeasureSpec::Sparsity(neighbors) => MeasureKind::Sparsity {
                neighbors: neighbors.unwrap_or(k),
            },
        });
    }
    Ok(out)
}

pub fn graph_config(cfg: &RunConfig, ds: &LabeledDataset) -> Result<GraphPrepConfig> {
    Ok(GraphPrepConfig {
        measures: Some(resolve_measures(cfg, ds)?),
        ..cfg.graph.clone()
    })
}

/// Content hash of everything graph preparation reads.
pub fn input_hash(ds: &LabeledDataset, prep: &GraphPrepConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"mlsg-prepare 1\n");
    let x = ds.features.values();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in x.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((ds.topology.entries().len() as u64).to_le_bytes());
    for &(i, j, w) in ds.topology.entries() {
        h.update((i as u64).to_le_bytes());
        h.update((j as u64).to_le_bytes());
        h.update(w.to_bits().to_le_bytes());
    }
    let w = &prep.walk;
    let mut text = format!(
        "k={} gamma={} path_len={} window={} tail={} cap={:?} shift={} seed={}\n",
        prep.k,
        w.gamma,
        w.path_len,
        w.window,
        w.tail_threshold,
        w.tail_walk_cap,
        w.neg_shift.to_bits(),
        w.seed
    );
    for m in prep.measures.iter().flatten() {
        let _ = match m {
            MeasureKind::Cosine => writeln!(text, "cosine"),
            MeasureKind::Gaussian { bandwidth } => writeln!(text, "gaussian {}", bandwidth.to_bits()),
            MeasureKind::Sparsity { neighbors } => writeln!(text, "sparsity {neighbors}"),
        };
    }
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub input_hash: String,
    pub measures: Vec<String>,
    /// `(file name, sha256)` in write order.
    pub files: Vec<(String, String)>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("input_hash\t{}\n", self.input_hash);
        for m in &self.measures {
            let _ = writeln!(out, "measure\t{m}");
        }
        for (name, digest) in &self.files {
            let _ = writeln!(out, "file\t{name}\t{digest}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut input_hash = None;
        let mut measures = Vec::new();
        let mut files = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["input_hash", h] => input_hash = Some(h.to_string()),
                ["measure", m] => measures.push(m.to_string()),
                ["file", name, digest] => files.push((name.to_string(), digest.to_string())),
                _ => {
                    return Err(mlsg_core::Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("unrecognized manifest line {line:?}"),
                    }
                    .into())
                }
            }
        }
        let input_hash = input_hash.ok_or_else(|| mlsg_core::Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "manifest has no input_hash line".into(),
        })?;
        Ok(Self {
            input_hash,
            measures,
            files,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheStatus {
    /// No cache existed.
    Computed,
    /// The manifest and every checksum matched; nothing was written.
    Reused,
    /// A cache existed but was stale or damaged.
    Regenerated(String),
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub dir: PathBuf,
    pub status: CacheStatus,
    pub measures: Vec<MeasureKind>,
    pub subgraphs: Vec<SparseGraph>,
    /// Normalized PPMI matrix.
    pub semantic: CsrMatrix,
}

impl Prepared {
    pub fn inputs(&self, topology: &SparseGraph) -> Result<GraphInputs> {
        Ok(GraphInputs::new(&self.subgraphs, topology, self.semantic.clone())?)
    }
}

fn subgraph_file(q: usize) -> String {
    format!("subgraph_{q}.bin")
}

fn expected_files(q: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..q).map(subgraph_file).collect();
    names.extend([FREQUENCY_FILE, PPMI_FILE, PPMI_NORMALIZED_FILE].map(String::from));
    names
}

/// Loads a verified cache, or explains why it cannot be used.
fn try_reuse(dir: &Path, hash: &str, q: usize) -> std::result::Result<(Vec<SparseGraph>, CsrMatrix), String> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| format!("manifest unreadable: {e}"))?;
    let manifest = Manifest::parse(&text, &manifest_path).map_err(|e| e.to_string())?;
    if manifest.input_hash != hash {
        return Err("inputs or graph settings changed since the cache was written".into());
    }
    let names: Vec<&String> = manifest.files.iter().map(|(n, _)| n).collect();
    if names != expected_files(q).iter().collect::<Vec<_>>() {
        return Err("manifest lists an unexpected set of files".into());
    }
    for (name, digest) in &manifest.files {
        let bytes = fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if &file_digest(&bytes) != digest {
            return Err(format!("{name}: checksum mismatch"));
        }
    }
    let subgraphs = (0..q)
        .map(|i| {
            let m = load_sparse(&dir.join(subgraph_file(i)))?;
            SparseGraph::from_csr(&m)
        })
        .collect::<mlsg_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let semantic = load_sparse(&dir.join(PPMI_NORMALIZED_FILE)).map_err(|e| e.to_string())?;
    Ok((subgraphs, semantic))
}

fn write_cache(dir: &Path, hash: &str, measures: &[MeasureKind], ds: &LabeledDataset, prep: &GraphPrepConfig) -> Result<(Vec<SparseGraph>, CsrMatrix)> {
    let graphs = prepare_graphs(ds, prep)?;
    fs::create_dir_all(dir).map_err(|e| CliError::file(format!("creating {}", dir.display()), e))?;
    // A half-written cache must never look valid.
    let _ = fs::remove_file(dir.join(MANIFEST));
    for (q, g) in graphs.subgraphs.iter().enumerate() {
        save_sparse(&dir.join(subgraph_file(q)), &g.to_csr())?;
    }
    let f = &graphs.frequency;
    save_sparse_counts(&dir.join(FREQUENCY_FILE), f.n(), f.n(), f.entries())?;
    save_sparse(&dir.join(PPMI_FILE), &graphs.ppmi.ppmi)?;
    save_sparse(&dir.join(PPMI_NORMALIZED_FILE), &graphs.ppmi.normalized)?;
    let mut files = Vec::new();
    for name in expected_files(graphs.subgraphs.len()) {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| CliError::file(format!("reading back {}", path.display()), e))?;
        files.push((name, file_digest(&bytes)));
    }
    let manifest = Manifest {
        input_hash: hash.to_string(),
        measures: measures.iter().map(|m| m.name().to_string()).collect(),
        files,
    };
    let tmp = dir.join("manifest.tsv.tmp");
    fs::write(&tmp, manifest.to_text()).map_err(|e| CliError::file("writing manifest", e))?;
    fs::rename(&tmp, dir.join(MANIFEST)).map_err(|e| CliError::file("writing manifest", e))?;
    Ok((graphs.subgraphs, graphs.ppmi.normalized))
}

/// Returns verified cached graphs for `ds`, computing them when the cache is absent,
/// stale or damaged.
pub fn ensure_prepared(cfg: &RunConfig, ds: &LabeledDataset, cache_root: &Path) -> Result<Prepared> {
    let prep = graph_config(cfg, ds)?;
    let measures = prep.measures.clone().expect("resolved above");
    let hash = input_hash(ds, &prep);
    let dir = cache_root.join(&cfg.data.name);
    let had_cache = dir.join(MANIFEST).exists();
    let (status, (subgraphs, semantic)) = match try_reuse(&dir, &hash, measures.len()) {
        Ok(found) => (CacheStatus::Reused, found),
        Err(reason) => {
            let status = if had_cache {
                log::warn!("regenerating graph cache {}: {reason}", dir.display());
                CacheStatus::Regenerated(reason)
            } else {
                CacheStatus::Computed
            };
            (status, write_cache(&dir, &hash, &measures, ds, &prep)?)
        }
    };
    Ok(Prepared {
        dir,
        status,
        measures,
        subgraphs,
        semantic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            input_hash: "ab".repeat(32),
            measures: vec!["cosine".into(), "gaussian".into()],
            files: vec![("subgraph_0.bin".into(), "00".repeat(32))],
        };
        assert_eq!(Manifest::parse(&m.to_text(), Path::new("m")).unwrap(), m);
        assert!(Manifest::parse("file\tx\n", Path::new("m")).is_err());
        assert!(Manifest::parse("input_hash\tab\nbogus\n", Path::new("m")).is_err());
    }

    #[test]
    fn hash_tracks_data_and_settings() {
        let cfg = parse_config("[data]\nsource = synthetic\n", Path::new("c"), None).unwrap();
        let ds = load_data(&cfg).unwrap();
        let prep = graph_config(&cfg, &ds).unwrap();
        let h = input_hash(&ds, &prep);
        assert_eq!(h, input_hash(&ds, &prep));
        let mut other = prep.clone();
        other.walk.seed += 1;
        assert_ne!(h, input_hash(&ds, &other));
        let mut moved = ds.clone();
        let mut x = moved.features.values().clone();
        x[[0, 0]] += 1e-9;
        moved.features = mlsg_core::graph::FeatureMatrix::new(x).unwrap();
        assert_ne!(h, input_hash(&moved, &prep));
    }

    #[test]
    fn explicit_measures_resolve_against_data() {
        let cfg = parse_config(
            "[data]\nsource = synthetic\n[graph]\nk = 5\nmeasures = gaussian, sparsity, sparsity:3, gaussian:2\n",
            Path::new("c"),
            None,
        )
        .unwrap();
        let ds = load_data(&cfg).unwrap();
        let m = resolve_measures(&cfg, &ds).unwrap();
        let t = mean_pairwise_sq_distance(&ds.features);
        assert_eq!(
            m,
            vec![
                MeasureKind::Gaussian { bandwidth: t },
                MeasureKind::Sparsity { neighbors: 5 },
                MeasureKind::Sparsity { neighbors: 3 },
                MeasureKind::Gaussian { bandwidth: 2.0 },
            ]
        );
    }
}
