//! Symbolic expressions shared by the DSR search and KAN extraction.

mod constraints;
mod optimize;
mod prepared;
mod token;
mod tree;

pub use constraints::{
    count_token, hard_violations, repeat_penalty, valid_next_tokens, ConstraintSet, PrefixState, RepeatBound,
};
pub use optimize::{mse_or_inf, nelder_mead, optimize_constants, ConstantFit, SimplexResult, MAX_ITERATIONS};
pub use prepared::PreparedTree;
pub use token::{Token, Vocabulary, VocabularyConfig};
pub use tree::{format_sig, is_complete, Columns, ExpressionRecord, ExpressionTree, StructuralScan};
