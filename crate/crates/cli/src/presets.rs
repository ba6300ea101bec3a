//! Replication presets: one per dataset and label rate.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub dataset: &'static str,
    pub labels_per_class: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub nhid1: usize,
    pub nhid2: usize,
    pub alpha: f64,
    pub beta: f64,
}

const fn p(
    dataset: &'static str,
    labels_per_class: usize,
    lr: f64,
    weight_decay: f64,
    nhid1: usize,
    nhid2: usize,
    alpha: f64,
    beta: f64,
) -> Preset {
    Preset {
        dataset,
        labels_per_class,
        lr,
        weight_decay,
        nhid1,
        nhid2,
        alpha,
        beta,
    }
}

pub const PRESETS: [Preset; 18] = [
    p("citeseer", 20, 5e-4, 5e-3, 768, 128, 100.0, 0.001),
    p("citeseer", 40, 5e-4, 5e-3, 768, 128, 10.0, 0.001),
    p("citeseer", 60, 5e-4, 5e-3, 768, 128, 10.0, 0.01),
    p("uai2010", 20, 5e-4, 5e-4, 512, 128, 1.0, 0.01),
    p("uai2010", 40, 5e-4, 5e-4, 512, 128, 0.1, 0.01),
    p("uai2010", 60, 5e-4, 5e-4, 512, 128, 0.1, 0.01),
    p("acm", 20, 1e-4, 6e-4, 768, 256, 0.001, 0.001),
    p("acm", 40, 1e-4, 5e-4, 768, 256, 1.0, 0.001),
    p("acm", 60, 5e-4, 5e-4, 768, 256, 1.0, 0.001),
    p("blogcatalog", 20, 3e-4, 1e-5, 768, 128, 1000.0, 0.001),
    p("blogcatalog", 40, 5e-4, 1e-5, 768, 128, 100.0, 0.001),
    p("blogcatalog", 60, 3e-4, 1e-5, 768, 128, 100.0, 0.001),
    p("flickr", 20, 5e-4, 1e-5, 512, 128, 0.1, 1.0),
    p("flickr", 40, 5e-4, 1e-5, 512, 128, 0.1, 10.0),
    p("flickr", 60, 5e-4, 1e-5, 512, 128, 0.1, 10.0),
    p("corafull", 20, 1e-3, 5e-4, 512, 32, 0.001, 0.001),
    p("corafull", 40, 1e-3, 5e-4, 512, 32, 0.001, 0.001),
    p("corafull", 60, 1e-3, 5e-4, 512, 32, 0.001, 0.001),
];

/// Shared by every preset: dropout, walk settings, PPMI shift and the number of runs.
pub const PRESET_DROPOUT: f64 = 0.5;
pub const PRESET_WALKS_PER_NODE: usize = 100;
pub const PRESET_PATH_LEN: usize = 3;
pub const PRESET_NEG_SHIFT: f64 = 2.0;
pub const PRESET_RUNS: usize = 3;
pub const PRESET_VAL: usize = 500;
pub const PRESET_TEST: usize = 1000;

impl Preset {
    pub fn name(&self) -> String {
        format!("{}-{}", self.dataset, self.labels_per_class)
    }
}

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name() == name)
}

pub fn names() -> Vec<String> {
    PRESETS.iter().map(Preset::name).collect()
}
