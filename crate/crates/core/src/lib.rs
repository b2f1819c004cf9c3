pub mod certify;
pub mod cli;
pub mod error;
pub mod extract;
pub mod linalg;
pub mod moments;
pub mod oracle;
pub mod parse;
pub mod poly;
pub mod relaxation;
pub mod sdp;

pub use error::{Error, Result};
