//! Minimax linear-programming classifiers over indicator feature maps.

pub mod bounds;
pub mod classifiers;
pub mod data;
pub mod error;
pub mod learning;
pub mod lp;
pub mod numeric;
pub mod phi;
pub mod pipeline;
pub mod prediction;
pub mod selfcheck;
pub mod uncertainty;

pub use error::{LpError, LpcError, Result};
pub use learning::LpcModel;
