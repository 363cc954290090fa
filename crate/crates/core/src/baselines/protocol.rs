//! Access-tracked view of a panel.
//!
//! Estimators never touch a [`PanelDataset`] directly. They read through a
//! [`ProtocolView`], which hands out contexts and treatments freely but
//! records every outcome block it serves. The recorded set is then checked
//! against the settings matrix.

use std::cell::Cell;
use std::fmt;

use crate::datagen::{PanelDataset, Role};
use crate::error::{Error, Result};
use crate::ndcore::Tensor;

/// One of the four outcome blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    /// Short-term outcomes of source units.
    SourceShort,
    /// Long-term outcomes of source units.
    SourceLong,
    /// Short-term outcomes of target units.
    TargetShort,
    /// Long-term outcomes of target units: ground truth only.
    TargetLong,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::SourceShort, Block::SourceLong, Block::TargetShort, Block::TargetLong];

    pub fn label(self) -> &'static str {
        match self {
            Block::SourceShort => "O_ST",
            Block::SourceLong => "O_LT",
            Block::TargetShort => "E_ST",
            Block::TargetLong => "E_LT",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Small set of [`Block`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BlockSet(u8);

impl BlockSet {
    pub const EMPTY: BlockSet = BlockSet(0);

    pub fn of(blocks: &[Block]) -> Self {
        BlockSet(blocks.iter().fold(0, |acc, b| acc | b.bit()))
    }

    pub fn insert(&mut self, b: Block) {
        self.0 |= b.bit();
    }

    pub fn contains(self, b: Block) -> bool {
        self.0 & b.bit() != 0
    }

    pub fn is_subset(self, other: BlockSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: BlockSet) -> BlockSet {
        BlockSet(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Block> {
        Block::ALL.into_iter().filter(move |b| self.contains(*b))
    }
}

impl fmt::Display for BlockSet {
    /// Labels joined by `+`, or `-` for the empty set.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let labels: Vec<&str> = self.iter().map(Block::label).collect();
        f.write_str(&labels.join("+"))
    }
}

/// Read-only panel wrapper that records which outcome blocks were served.
///
/// Build a fresh view per estimator call so [`ProtocolView::reads`] reflects
/// that call alone.
pub struct ProtocolView<'a> {
    ds: &'a PanelDataset,
    source: Vec<usize>,
    target: Vec<usize>,
    reads: Cell<BlockSet>,
}

impl<'a> ProtocolView<'a> {
    pub fn new(ds: &'a PanelDataset) -> Self {
        ProtocolView {
            ds,
            source: ds.indices(Role::Source),
            target: ds.indices(Role::Target),
            reads: Cell::new(BlockSet::EMPTY),
        }
    }

    fn record(&self, b: Block) {
        let mut s = self.reads.get();
        s.insert(b);
        self.reads.set(s);
    }

    /// Outcome blocks served so far.
    pub fn reads(&self) -> BlockSet {
        self.reads.get()
    }

    pub fn t0(&self) -> usize {
        self.ds.t0()
    }

    pub fn horizon(&self) -> usize {
        self.ds.config.horizon
    }

    pub fn context_dim(&self) -> usize {
        self.ds.context_dim()
    }

    pub fn n_source(&self) -> usize {
        self.source.len()
    }

    pub fn n_target(&self) -> usize {
        self.target.len()
    }

    pub fn source_contexts(&self) -> Tensor {
        self.ds.contexts(&self.source)
    }

    pub fn target_contexts(&self) -> Tensor {
        self.ds.contexts(&self.target)
    }

    pub fn source_treatments(&self) -> Vec<u8> {
        self.source.iter().map(|&i| self.ds.w[i]).collect()
    }

    pub fn target_treatments(&self) -> Vec<u8> {
        self.target.iter().map(|&i| self.ds.w[i]).collect()
    }

    /// `[n_source, t0]` factual short-term outcomes.
    pub fn source_short(&self) -> Tensor {
        self.record(Block::SourceShort);
        self.ds.short_outcomes(&self.source)
    }

    pub fn source_long(&self) -> Vec<f64> {
        self.record(Block::SourceLong);
        self.ds.long_outcomes(&self.source)
    }

    /// `[n_target, t0]` factual short-term outcomes.
    pub fn target_short(&self) -> Tensor {
        self.record(Block::TargetShort);
        self.ds.short_outcomes(&self.target)
    }

    /// Ground-truth long-term outcomes of target units. No estimator calls
    /// this; it exists so the audit has something to catch.
    pub fn target_long(&self) -> Vec<f64> {
        self.record(Block::TargetLong);
        self.ds.long_outcomes(&self.target)
    }
}

/// Every estimator known to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ltee,
    /// LTEE with one recurrent path and head shared by both arms.
    SingleHeadLtee,
    /// LTEE without the balancing term.
    Rnn,
    SurrogateIndex,
    NaiveI,
    NaiveII,
    NaiveIII,
    TarnetLite,
    Interpolate,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Ltee,
        Method::SingleHeadLtee,
        Method::Rnn,
        Method::SurrogateIndex,
        Method::NaiveI,
        Method::NaiveII,
        Method::NaiveIII,
        Method::TarnetLite,
        Method::Interpolate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ltee => "ltee",
            Method::SingleHeadLtee => "s_ltee",
            Method::Rnn => "rnn",
            Method::SurrogateIndex => "sind",
            Method::NaiveI => "naive_i",
            Method::NaiveII => "naive_ii",
            Method::NaiveIII => "naive_iii",
            Method::TarnetLite => "tarnet_lite",
            Method::Interpolate => "inter",
        }
    }

    /// Whether this method trains the recurrent model.
    pub fn is_sequence_model(self) -> bool {
        matches!(self, Method::Ltee | Method::SingleHeadLtee | Method::Rnn)
    }

    /// Outcome blocks the method is entitled to read.
    pub fn allowed_blocks(self) -> BlockSet {
        use Block::*;
        match self {
            Method::Ltee | Method::SingleHeadLtee | Method::Rnn => BlockSet::of(&[SourceShort, SourceLong]),
            Method::SurrogateIndex => BlockSet::of(&[SourceShort, SourceLong, TargetShort]),
            Method::NaiveI => BlockSet::of(&[SourceLong]),
            Method::NaiveII | Method::NaiveIII => BlockSet::of(&[TargetShort]),
            Method::TarnetLite => BlockSet::of(&[SourceShort, TargetShort]),
            Method::Interpolate => BlockSet::of(&[SourceShort, TargetShort]),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Checks recorded reads against the method's row of the settings matrix.
pub fn audit(method: Method, reads: BlockSet) -> Result<()> {
    if reads.contains(Block::TargetLong) {
        return Err(Error::Estimation(format!("{method} read E_LT, which no estimator may see")));
    }
    let extra = reads.difference(method.allowed_blocks());
    if !extra.is_empty() {
        return Err(Error::Estimation(format!(
            "{method} read {extra}, outside its allowed {}",
            method.allowed_blocks()
        )));
    }
    Ok(())
}
