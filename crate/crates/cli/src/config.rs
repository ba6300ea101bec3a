//! Run configuration: `[section]` headers with `key = value` lines.
//!
//! ```text
//! [data]
//! name = citeseer
//! features = citeseer.features
//! edges = citeseer.edges
//! labels = citeseer.labels
//!
//! [train]
//! lr = 0.0005
//! channels = fea+ori
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown sections and keys are errors.
//! Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use mlsg_core::pipeline::GraphPrepConfig;
use mlsg_core::synthetic::BlobConfig;
use mlsg_core::training::{ChannelSet, TrainConfig};

use crate::error::{CliError, Result};
use crate::presets::{self, Preset};

/// One configured measure; an omitted bandwidth or neighbour count is filled in
/// from the data (mean pairwise squared distance) or from `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureSpec {
    Cosine,
    Gaussian(Option<f64>),
    Sparsity(Option<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        features: PathBuf,
        edges: PathBuf,
        labels: PathBuf,
        splits: Option<PathBuf>,
    },
    Synthetic(BlobConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub name: String,
    pub source: Option<DataSource>,
    pub labels_per_class: Option<usize>,
    pub val: Option<usize>,
    pub test: Option<usize>,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub measures: Option<Vec<MeasureSpec>>,
    /// Walk settings and `k`; `graph.measures` is filled in when the data is loaded.
    pub graph: GraphPrepConfig,
    pub train: TrainConfig,
    /// Training runs per command; run `r` uses seed `train.seed + r`.
    pub runs: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub out: PathBuf,
    pub preset: Option<String>,
}

pub fn default_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                name: "dataset".into(),
                source: None,
                labels_per_class: None,
                val: None,
                test: None,
                split_seed: 0,
            },
            measures: None,
            graph: GraphPrepConfig::default(),
            train: TrainConfig::default(),
            runs: 1,
            alphas: default_grid(),
            betas: default_grid(),
            out: PathBuf::from("out"),
            preset: None,
        }
    }
}

/// Keys a preset fixes; setting them in a config file that also names a preset is an error.
const PRESET_KEYS: &[(&str, &str)] = &[
    ("train", "lr"),
    ("train", "weight_decay"),
    ("train", "nhid1"),
    ("train", "nhid2"),
    ("train", "alpha"),
    ("train", "beta"),
    ("train", "dropout"),
    ("train", "runs"),
    ("graph", "walks_per_node"),
    ("graph", "path_len"),
    ("graph", "neg_shift"),
    ("data", "labels_per_class"),
];

struct Entry<'a> {
    line: usize,
    section: &'a str,
    key: &'a str,
    value: &'a str,
}

fn tokenize<'a>(text: &'a str, path: &Path) -> Result<Vec<Entry<'a>>> {
    let mut section = "";
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err(format!("malformed section header {line:?}")))?;
            let name = name.trim();
            if !["data", "graph", "train", "sweep", "output", "run"].contains(&name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            section = name;
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        if section.is_empty() {
            return Err(err("key outside any section".into()));
        }
        out.push(Entry {
            line: i + 1,
            section,
            key: key.trim(),
            value: value.trim(),
        });
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(v: &str, what: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("{what}: cannot parse {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let out: Vec<f64> = v
        .split(',')
        .map(|s| parse_num::<f64>(s.trim(), "grid value"))
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(out)
}

pub fn parse_measures(v: &str) -> std::result::Result<Vec<MeasureSpec>, String> {
    v.split(',')
        .map(|item| {
            let item = item.trim();
            let (name, arg) = match item.split_once(':') {
                Some((n, a)) => (n.trim(), Some(a.trim())),
                None => (item, None),
            };
            match (name, arg) {
                ("cosine", None) => Ok(MeasureSpec::Cosine),
                ("gaussian", a) => Ok(MeasureSpec::Gaussian(a.map(|a| parse_num(a, "bandwidth")).transpose()?)),
                ("sparsity", a) => Ok(MeasureSpec::Sparsity(a.map(|a| parse_num(a, "neighbours")).transpose()?)),
                _ => Err(format!("unknown measure {item:?}")),
            }
        })
        .collect()
}

fn synthetic_mut(cfg: &mut RunConfig) -> std::result::Result<&mut BlobConfig, String> {
    match cfg.data.source.as_mut() {
        Some(DataSource::Synthetic(b)) => Ok(b),
        _ => Err("synthetic keys require `source = synthetic` earlier in [data]".into()),
    }
}

fn file_source(cfg: &mut RunConfig) -> std::result::Result<&mut DataSource, String> {
    if cfg.data.source.is_none() {
        cfg.data.source = Some(DataSource::Files {
            features: PathBuf::new(),
            edges: PathBuf::new(),
            labels: PathBuf::new(),
            splits: None,
        });
    }
    match cfg.data.source.as_mut() {
        Some(s @ DataSource::Files { .. }) => Ok(s),
        _ => Err("file keys cannot be combined with `source = synthetic`".into()),
    }
}

fn apply(cfg: &mut RunConfig, e: &Entry<'_>, base: &Path) -> std::result::Result<(), String> {
    let v = e.value;
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    let t = &mut cfg.train;
    let w = &mut cfg.graph.walk;
    match (e.section, e.key) {
        ("run", "preset") => cfg.preset = Some(v.to_string()),
        ("output", "dir") => cfg.out = resolve(v),

        ("data", "name") => cfg.data.name = v.to_string(),
        ("data", "source") => match v {
            "synthetic" => cfg.data.source = Some(DataSource::Synthetic(BlobConfig::default())),
            "files" => {
                file_source(cfg)?;
            }
            _ => return Err(format!("source must be files or synthetic, got {v:?}")),
        },
        ("data", "features" | "edges" | "labels" | "splits") => {
            let path = resolve(v);
            if let DataSource::Files {
                features,
                edges,
                labels,
                splits,
            } = file_source(cfg)?
            {
                match e.key {
                    "features" => *features = path,
                    "edges" => *edges = path,
                    "labels" => *labels = path,
                    _ => *splits = Some(path),
                }
            }
        }
        ("data", "labels_per_class") => cfg.data.labels_per_class = Some(parse_num(v, e.key)?),
        ("data", "val") => cfg.data.val = Some(parse_num(v, e.key)?),
        ("data", "test") => cfg.data.test = Some(parse_num(v, e.key)?),
        ("data", "split_seed") => cfg.data.split_seed = parse_num(v, e.key)?,
        ("data", "n") => synthetic_mut(cfg)?.n = parse_num(v, e.key)?,
        ("data", "d") => synthetic_mut(cfg)?.d = parse_num(v, e.key)?,
        ("data", "offset") => synthetic_mut(cfg)?.offset = parse_num(v, e.key)?,
        ("data", "sigma") => synthetic_mut(cfg)?.sigma = parse_num(v, e.key)?,
        ("data", "p_in") => synthetic_mut(cfg)?.p_in = parse_num(v, e.key)?,
        ("data", "p_out") => synthetic_mut(cfg)?.p_out = parse_num(v, e.key)?,
        ("data", "blob_seed") => synthetic_mut(cfg)?.seed = parse_num(v, e.key)?,

        ("graph", "k") => cfg.graph.k = parse_num(v, e.key)?,
        ("graph", "measures") => cfg.measures = Some(parse_measures(v)?),
        ("graph", "walks_per_node") => w.gamma = parse_num(v, e.key)?,
        ("graph", "path_len") => w.path_len = parse_num(v, e.key)?,
        ("graph", "window") => w.window = parse_num(v, e.key)?,
        ("graph", "tail_threshold") => w.tail_threshold = parse_num(v, e.key)?,
        ("graph", "tail_walk_cap") => w.tail_walk_cap = if v == "none" { None } else { Some(parse_num(v, e.key)?) },
        ("graph", "neg_shift") => w.neg_shift = parse_num(v, e.key)?,
        ("graph", "walk_seed") => w.seed = parse_num(v, e.key)?,

        ("train", "lr") => t.lr = parse_num(v, e.key)?,
        ("train", "weight_decay") => t.weight_decay = parse_num(v, e.key)?,
        ("train", "alpha") => t.alpha = parse_num(v, e.key)?,
        ("train", "beta") => t.beta = parse_num(v, e.key)?,
        ("train", "nhid1") => t.nhid1 = parse_num(v, e.key)?,
        ("train", "nhid2") => t.nhid2 = parse_num(v, e.key)?,
        ("train", "dropout") => t.dropout = parse_num(v, e.key)?,
        ("train", "max_epochs") => t.max_epochs = parse_num(v, e.key)?,
        ("train", "patience") => t.patience = parse_num(v, e.key)?,
        ("train", "seed") => t.seed = parse_num(v, e.key)?,
        ("train", "l21_epsilon") => t.l21_epsilon = parse_num(v, e.key)?,
        ("train", "attention_hidden") => t.attention_hidden = parse_num(v, e.key)?,
        ("train", "activate_output") => t.activate_output = parse_bool(v)?,
        ("train", "regularizers") => t.regularizers = parse_bool(v)?,
        ("train", "channels") => t.channels = ChannelSet::parse(v).map_err(|e| e.to_string())?,
        ("train", "runs") => cfg.runs = parse_num(v, e.key)?,

        ("sweep", "alphas") => cfg.alphas = parse_list(v)?,
        ("sweep", "betas") => cfg.betas = parse_list(v)?,
        _ => return Err(format!("unknown key `{}` in [{}]", e.key, e.section)),
    }
    Ok(())
}

pub fn apply_preset(cfg: &mut RunConfig, preset: &Preset) {
    cfg.data.name = preset.dataset.to_string();
    cfg.data.labels_per_class = Some(preset.labels_per_class);
    cfg.data.val.get_or_insert(presets::PRESET_VAL);
    cfg.data.test.get_or_insert(presets::PRESET_TEST);
    let t = &mut cfg.train;
    t.lr = preset.lr;
    t.weight_decay = preset.weight_decay;
    t.nhid1 = preset.nhid1;
    t.nhid2 = preset.nhid2;
    t.alpha = preset.alpha;
    t.beta = preset.beta;
    t.dropout = presets::PRESET_DROPOUT;
    cfg.graph.walk.gamma = presets::PRESET_WALKS_PER_NODE;
    cfg.graph.walk.path_len = presets::PRESET_PATH_LEN;
    cfg.graph.walk.neg_shift = presets::PRESET_NEG_SHIFT;
    cfg.runs = presets::PRESET_RUNS;
    cfg.preset = Some(preset.name());
}

/// Parses `text` on top of the defaults, then applies the preset named either in the
/// file or by `preset_override`.
pub fn parse_config(text: &str, path: &Path, preset_override: Option<&str>) -> Result<RunConfig> {
    let base = path.parent().unwrap_or(Path::new("."));
    let entries = tokenize(text, path)?;
    let mut cfg = RunConfig::default();
    for e in &entries {
        apply(&mut cfg, e, base).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            line: e.line,
            message,
        })?;
    }
    let preset_name = preset_override.map(str::to_string).or_else(|| cfg.preset.clone());
    if let Some(name) = preset_name {
        let preset = presets::find(&name).ok_or_else(|| {
            CliError::usage(format!("unknown preset {name:?}; known presets: {}", presets::names().join(", ")))
        })?;
        if let Some(e) = entries.iter().find(|e| PRESET_KEYS.contains(&(e.section, e.key))) {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                line: e.line,
                message: format!("`{}` is fixed by preset {name}", e.key),
            });
        }
        apply_preset(&mut cfg, preset);
    }
    cfg.validate().map_err(|message| CliError::Config {
        path: path.to_path_buf(),
        line: 0,
        message,
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path, preset_override: Option<&str>) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(format!("reading config {}", path.display()), e))?;
    parse_config(&text, path, preset_override)
}

impl RunConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.graph.k == 0 {
            return Err("k must be positive".into());
        }
        if self.runs == 0 {
            return Err("runs must be positive".into());
        }
        self.train.validate().map_err(|e| e.to_string())?;
        self.graph.walk.validate().map_err(|e| e.to_string())?;
        if let Some(DataSource::Files {
            features,
            edges,
            labels,
            ..
        }) = &self.data.source
        {
            for (name, p) in [("features", features), ("edges", edges), ("labels", labels)] {
                if p.as_os_str().is_empty() {
                    return Err(format!("[data] {name} path is missing"));
                }
            }
        }
        Ok(())
    }

    /// Seeds of the configured runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|r| self.train.seed + r).collect()
    }
}
