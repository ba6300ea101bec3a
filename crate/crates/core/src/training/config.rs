use crate::error::{Error, Result};

/// Which of the three channels (feature, semantic, topology) take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSet {
    pub fea: bool,
    pub sem: bool,
    pub ori: bool,
}

impl ChannelSet {
    pub const ALL: ChannelSet = ChannelSet {
        fea: true,
        sem: true,
        ori: true,
    };

    pub fn count(&self) -> usize {
        [self.fea, self.sem, self.ori].iter().filter(|b| **b).count()
    }

    /// Short name such as `fea+ori`.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.fea, "fea"), (self.sem, "sem"), (self.ori, "ori")]
            .iter()
            .filter(|p| p.0)
            .map(|p| p.1)
            .collect();
        parts.join("+")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = ChannelSet {
            fea: false,
            sem: false,
            ori: false,
        };
        for part in text.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "fea" => set.fea = true,
                "sem" => set.sem = true,
                "ori" => set.ori = true,
                "all" => set = ChannelSet::ALL,
                other => return Err(Error::Domain(format!("unknown channel {other:?}"))),
            }
        }
        if set.count() == 0 {
            return Err(Error::Domain("at least one channel must be active".into()));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    pub beta: f64,
    pub nhid1: usize,
    pub nhid2: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Smoothing inside the l2,1 gradient.
    pub l21_epsilon: f64,
    /// Hidden width of both attention perception layers.
    pub attention_hidden: usize,
    /// ReLU on the second convolution layer too.
    pub activate_output: bool,
    pub channels: ChannelSet,
    /// When false the l2,1 terms are skipped entirely rather than weighted by zero.
    pub regularizers: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            weight_decay: 5e-4,
            alpha: 1.0,
            beta: 1.0,
            nhid1: 512,
            nhid2: 128,
            dropout: 0.5,
            max_epochs: 500,
            patience: 100,
            seed: 0,
            l21_epsilon: 1e-8,
            attention_hidden: 64,
            activate_output: false,
            channels: ChannelSet::ALL,
            regularizers: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        for (name, v) in [("weight_decay", self.weight_decay), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self.nhid1 == 0 || self.nhid2 == 0 || self.attention_hidden == 0 {
            return fail("hidden sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.patience > self.max_epochs {
            return fail(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if !(self.l21_epsilon >= 0.0) {
            return fail("l21_epsilon must be nonnegative".into());
        }
        if self.channels.count() == 0 {
            return fail("at least one channel must be active".into());
        }
        Ok(())
    }
}
