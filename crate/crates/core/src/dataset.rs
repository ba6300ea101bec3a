//! Labeled datasets: text file formats, split generation and split files.
//!
//! Feature files are either dense (one comma-separated row per node) or sparse
//! (a `sparse n d` header followed by `i j v` triplets). Edge files hold one
//! whitespace-separated `src dst` pair per line with `#` comments. Label files hold
//! `node class` pairs and may start with a `classes C` header; nodes that do not
//! appear are unlabeled.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, SparseGraph};

/// Disjoint train / validation / test node sets, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.val.is_empty() && self.test.is_empty()
    }

    fn validate(&self, labels: &[Option<usize>]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in set {
                if id >= labels.len() {
                    return Err(Error::Bounds {
                        id,
                        n: labels.len(),
                        context: format!("{name} split"),
                    });
                }
                if !seen.insert(id) {
                    return Err(Error::Label(format!("node {id} appears in more than one split")));
                }
            }
        }
        if let Some(&id) = self.train.iter().find(|&&id| labels[id].is_none()) {
            return Err(Error::Label(format!("training node {id} is unlabeled")));
        }
        Ok(())
    }

    /// Renders the `train:` / `val:` / `test:` split file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            let _ = writeln!(out, "{name}:");
            for id in set {
                let _ = writeln!(out, "{id}");
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut splits = Splits::default();
        let mut current: Option<&mut Vec<usize>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            match line {
                "train:" => current = Some(&mut splits.train),
                "val:" => current = Some(&mut splits.val),
                "test:" => current = Some(&mut splits.test),
                _ => {
                    let id: usize = line
                        .parse()
                        .map_err(|_| parse_err(format!("expected a node id, got {line:?}")))?;
                    current
                        .as_mut()
                        .ok_or_else(|| parse_err("node id before any section header".into()))?
                        .push(id);
                }
            }
        }
        splits.train.sort_unstable();
        splits.val.sort_unstable();
        splits.test.sort_unstable();
        Ok(splits)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: FeatureMatrix,
    pub topology: SparseGraph,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub splits: Splits,
}

impl LabeledDataset {
    pub fn new(
        features: FeatureMatrix,
        topology: SparseGraph,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.n();
        if topology.n() != n || labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} feature rows, {} graph nodes, {} labels",
                n,
                topology.n(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Label(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some((node, class)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&c| c >= num_classes).map(|c| (i, c)))
        {
            return Err(Error::Label(format!(
                "node {node} has class {class} but only {num_classes} classes exist"
            )));
        }
        splits.validate(&labels)?;
        Ok(Self {
            features,
            topology,
            labels,
            num_classes,
            splits,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    /// Labeled-node count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for c in self.labels.iter().flatten() {
            counts[*c] += 1;
        }
        counts
    }

    pub fn with_splits(&self, splits: Splits) -> Result<Self> {
        splits.validate(&self.labels)?;
        Ok(Self {
            splits,
            ..self.clone()
        })
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with `#` comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub fn parse_features(text: &str, path: &Path) -> Result<FeatureMatrix> {
    let mut lines = content_lines(text).peekable();
    let sparse_header = lines
        .peek()
        .map(|(_, l)| l.split_whitespace().next() == Some("sparse"))
        .unwrap_or(false);

    let values = if sparse_header {
        let (lineno, header) = lines.next().expect("peeked");
        let fields: Vec<&str> = header.split_whitespace().collect();
        let dims = match fields.as_slice() {
            ["sparse", n, d] => n.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        let (n, d) = dims.ok_or_else(|| parse_error(path, lineno, "expected header `sparse n d`"))?;
        let mut values = Array2::zeros((n, d));
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [i, j, v] = fields.as_slice() else {
                return Err(parse_error(path, lineno, "expected `i j v`"));
            };
            let i: usize = i.parse().map_err(|_| parse_error(path, lineno, "bad row index"))?;
            let j: usize = j.parse().map_err(|_| parse_error(path, lineno, "bad column index"))?;
            let v: f64 = v.parse().map_err(|_| parse_error(path, lineno, "bad value"))?;
            if i >= n {
                return Err(Error::Bounds { id: i, n, context: format!("{}:{lineno}", path.display()) });
            }
            if j >= d {
                return Err(parse_error(path, lineno, format!("column {j} >= dimension {d}")));
            }
            values[[i, j]] = v;
        }
        values
    } else {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines {
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_error(path, lineno, format!("bad feature value: {e}")))?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(parse_error(
                        path,
                        lineno,
                        format!("row has {} values, expected {}", row.len(), first.len()),
                    ));
                }
            }
            rows.push(row);
        }
        let d = rows.first().map_or(0, Vec::len);
        Array2::from_shape_vec((rows.len(), d), rows.into_iter().flatten().collect())
            .expect("rows have equal length")
    };
    FeatureMatrix::new(values)
}

pub fn parse_edges(text: &str, path: &Path, n: usize) -> Result<SparseGraph> {
    let mut edges = Vec::new();
    for (lineno, line) in content_lines(text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [src, dst] = fields.as_slice() else {
            return Err(parse_error(path, lineno, "expected `src dst`"));
        };
        let src: usize = src.parse().map_err(|_| parse_error(path, lineno, "bad source id"))?;
        let dst: usize = dst.parse().map_err(|_| parse_error(path, lineno, "bad target id"))?;
        for id in [src, dst] {
            if id >= n {
                return Err(Error::Bounds { id, n, context: format!("{}:{lineno}", path.display()) });
            }
        }
        edges.push((src, dst));
    }
    SparseGraph::from_undirected_edges(n, &edges)
}

/// Parses a label file. Returns per-node labels and the class count.
pub fn parse_labels(text: &str, path: &Path, n: usize) -> Result<(Vec<Option<usize>>, usize)> {
    let mut labels = vec![None; n];
    let mut declared: Option<usize> = None;
    for (lineno, line) in content_lines(text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["classes", c] if declared.is_none() && labels.iter().all(Option::is_none) => {
                declared = Some(c.parse().map_err(|_| parse_error(path, lineno, "bad class count"))?);
            }
            [node, class] => {
                let node: usize = node.parse().map_err(|_| parse_error(path, lineno, "bad node id"))?;
                let class: usize = class.parse().map_err(|_| parse_error(path, lineno, "bad class id"))?;
                if node >= n {
                    return Err(Error::Bounds { id: node, n, context: format!("{}:{lineno}", path.display()) });
                }
                if let Some(c) = declared {
                    if class >= c {
                        return Err(Error::Label(format!(
                            "{}:{lineno}: class {class} but only {c} classes declared",
                            path.display()
                        )));
                    }
                }
                match labels[node] {
                    Some(prev) if prev != class => {
                        return Err(Error::Label(format!(
                            "{}:{lineno}: node {node} labeled both {prev} and {class}",
                            path.display()
                        )));
                    }
                    _ => labels[node] = Some(class),
                }
            }
            _ => return Err(parse_error(path, lineno, "expected `node class`")),
        }
    }
    let num_classes = declared.unwrap_or_else(|| labels.iter().flatten().max().map_or(0, |m| m + 1));
    let mut counts = vec![0usize; num_classes];
    for c in labels.iter().flatten() {
        counts[*c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Label(format!("class {empty} has no labeled nodes")));
    }
    Ok((labels, num_classes))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Loads features, topology and labels; splits are left empty.
pub fn load_dataset(feature_path: &Path, edge_path: &Path, label_path: &Path) -> Result<LabeledDataset> {
    let features = parse_features(&read(feature_path)?, feature_path)?;
    let n = features.n();
    let topology = parse_edges(&read(edge_path)?, edge_path, n)?;
    let (labels, num_classes) = parse_labels(&read(label_path)?, label_path, n)?;
    LabeledDataset::new(features, topology, labels, num_classes, Splits::default())
}

pub fn format_features(features: &FeatureMatrix, sparse: bool) -> String {
    let mut out = String::new();
    if sparse {
        let _ = writeln!(out, "sparse {} {}", features.n(), features.d());
        for (i, j, v) in features.sparse().triplets() {
            let _ = writeln!(out, "{i} {j} {v}");
        }
    } else {
        for row in features.values().rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
    }
    out
}

pub fn format_edges(graph: &SparseGraph) -> String {
    let mut out = String::new();
    for &(i, j, _) in graph.entries() {
        if i < j {
            let _ = writeln!(out, "{i} {j}");
        }
    }
    out
}

pub fn format_labels(labels: &[Option<usize>], num_classes: usize) -> String {
    let mut out = format!("classes {num_classes}\n");
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            let _ = writeln!(out, "{i} {c}");
        }
    }
    out
}

/// Paths written by [`save_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: PathBuf,
}

/// Writes the three text files into `dir` under `stem.{features,edges,labels}`.
pub fn save_dataset(dataset: &LabeledDataset, dir: &Path, stem: &str, sparse_features: bool) -> Result<DatasetFiles> {
    fs::create_dir_all(dir)?;
    let files = DatasetFiles {
        features: dir.join(format!("{stem}.features")),
        edges: dir.join(format!("{stem}.edges")),
        labels: dir.join(format!("{stem}.labels")),
    };
    fs::write(&files.features, format_features(&dataset.features, sparse_features))?;
    fs::write(&files.edges, format_edges(&dataset.topology))?;
    fs::write(&files.labels, format_labels(&dataset.labels, dataset.num_classes))?;
    Ok(files)
}

/// Draws `labels_per_class` training nodes per class, then `val_size` and
/// `test_size` further labeled nodes, from a seeded shuffle of labeled nodes.
pub fn make_splits(
    dataset: &LabeledDataset,
    labels_per_class: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if labels_per_class == 0 {
        return Err(Error::Label("labels_per_class must be at least 1".into()));
    }
    let mut labeled: Vec<usize> = (0..dataset.n()).filter(|&i| dataset.labels[i].is_some()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labeled.shuffle(&mut rng);

    let mut taken = vec![0usize; dataset.num_classes];
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for id in labeled {
        let class = dataset.labels[id].expect("filtered to labeled");
        if taken[class] < labels_per_class {
            taken[class] += 1;
            train.push(id);
        } else {
            rest.push(id);
        }
    }
    if let Some((class, &available)) = taken.iter().enumerate().find(|(_, &t)| t < labels_per_class) {
        return Err(Error::InsufficientLabels {
            class,
            available,
            requested: labels_per_class,
        });
    }
    if rest.len() < val_size + test_size {
        return Err(Error::Label(format!(
            "{} labeled nodes remain after training selection, {} needed for validation and test",
            rest.len(),
            val_size + test_size
        )));
    }
    let mut val = rest[..val_size].to_vec();
    let mut test = rest[val_size..val_size + test_size].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    dataset.with_splits(Splits { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    fn toy(dir: &Path, edges: &str) -> Result<LabeledDataset> {
        let f = write(dir, "f", "1,0\n0,1\n1,1\n");
        let e = write(dir, "e", edges);
        let l = write(dir, "l", "0 0\n1 1\n2 1\n");
        load_dataset(&f, &e, &l)
    }

    #[test]
    fn empty_edge_file_gives_empty_topology() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(dir.path(), "").unwrap();
        assert_eq!(ds.n(), 3);
        assert!(ds.topology.entries().is_empty());
        assert_eq!(ds.num_classes, 2);
    }

    #[test]
    fn reverse_edges_collapse_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(dir.path(), "# comment\n0 1\n1 0\n2 2\n").unwrap();
        assert_eq!(ds.topology.undirected_edge_count(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        match toy(dir.path(), "0 1\n1 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_edge_is_a_bounds_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(toy(dir.path(), "0 3\n"), Err(Error::Bounds { id: 3, n: 3, .. })));
    }

    #[test]
    fn label_beyond_declared_classes_is_rejected() {
        let p = Path::new("labels");
        assert!(matches!(parse_labels("classes 2\n0 2\n", p, 3), Err(Error::Label(_))));
        assert!(matches!(parse_labels("classes 3\n0 0\n1 1\n", p, 3), Err(Error::Label(_))));
        let (labels, c) = parse_labels("0 1\n2 0\n", p, 3).unwrap();
        assert_eq!(labels, vec![Some(1), None, Some(0)]);
        assert_eq!(c, 2);
    }

    #[test]
    fn sparse_feature_format() {
        let m = parse_features("sparse 2 3\n0 2 1.5\n1 0 -2\n", Path::new("x")).unwrap();
        assert_eq!(m.values()[[0, 2]], 1.5);
        assert_eq!(m.values()[[1, 0]], -2.0);
        assert_eq!(m.d(), 3);
    }

    fn labeled(n_per_class: usize, classes: usize) -> LabeledDataset {
        let n = n_per_class * classes;
        let features = FeatureMatrix::new(Array2::from_shape_fn((n, 2), |(i, j)| (i + j) as f64)).unwrap();
        let labels = (0..n).map(|i| Some(i % classes)).collect();
        LabeledDataset::new(features, SparseGraph::empty(n), labels, classes, Splits::default()).unwrap()
    }

    #[test]
    fn splits_have_requested_sizes_and_are_deterministic() {
        let ds = labeled(50, 3);
        let a = make_splits(&ds, 10, 40, 60, 7).unwrap();
        let b = make_splits(&ds, 10, 40, 60, 7).unwrap();
        assert_eq!(a.splits, b.splits);
        assert_eq!(a.splits.train.len(), 30);
        assert_eq!(a.splits.val.len(), 40);
        assert_eq!(a.splits.test.len(), 60);
        let mut per_class = [0; 3];
        for &i in &a.splits.train {
            per_class[a.labels[i].unwrap()] += 1;
        }
        assert_eq!(per_class, [10, 10, 10]);
        let all: BTreeSet<_> = a.splits.train.iter().chain(&a.splits.val).chain(&a.splits.test).collect();
        assert_eq!(all.len(), 130);
        assert_ne!(make_splits(&ds, 10, 40, 60, 8).unwrap().splits, a.splits);
    }

    #[test]
    fn split_errors() {
        let ds = labeled(5, 2);
        assert!(matches!(make_splits(&ds, 0, 1, 1, 0), Err(Error::Label(_))));
        assert!(matches!(
            make_splits(&ds, 6, 0, 0, 0),
            Err(Error::InsufficientLabels { requested: 6, .. })
        ));
        assert!(make_splits(&ds, 2, 3, 4, 0).is_err());
    }

    #[test]
    fn split_file_round_trip() {
        let s = Splits { train: vec![1, 4], val: vec![0], test: vec![2, 3] };
        assert_eq!(Splits::parse(&s.to_text(), Path::new("s")).unwrap(), s);
    }

    #[test]
    fn save_and_reload_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let values = Array2::from_shape_fn((4, 3), |(i, j)| {
            if (i + j) % 2 == 0 { 0.0 } else { (i as f64 + 0.1) / (j as f64 + 3.0) * 1e-3 }
        });
        let ds = LabeledDataset::new(
            FeatureMatrix::new(values).unwrap(),
            SparseGraph::from_undirected_edges(4, &[(0, 1), (2, 3), (1, 3)]).unwrap(),
            vec![Some(0), None, Some(1), Some(1)],
            2,
            Splits::default(),
        )
        .unwrap();
        for sparse in [false, true] {
            let files = save_dataset(&ds, dir.path(), "toy", sparse).unwrap();
            let back = load_dataset(&files.features, &files.edges, &files.labels).unwrap();
            assert_eq!(back, ds);
            for (a, b) in back.features.values().iter().zip(ds.features.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
