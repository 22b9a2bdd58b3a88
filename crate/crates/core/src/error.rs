use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::mdp::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid MDP: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidMdp(Vec<Violation>),
    #[error("index out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("grid overflow at stage {stage}: multiple {multiple} exceeds {max}")]
    GridOverflow { stage: usize, multiple: u32, max: u32 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("trajectory enumeration cap exceeded: {count} > {cap}")]
    EnumerationCap { count: u64, cap: u64 },
    #[error("policy kind `{0}` cannot be evaluated by dynamic programming")]
    NotDpCompatible(&'static str),
    #[error("reward values would lose precision: (H+1)*S*A = {product} exceeds {max}")]
    RewardUnderflow { product: usize, max: usize },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration cap {0} exceeded")]
    IterationCap(usize),
    #[error("malformed linear program: {0}")]
    MalformedLp(String),
}
