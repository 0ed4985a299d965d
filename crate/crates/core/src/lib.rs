pub mod error;
pub mod hedge;
pub mod io;
pub mod lp;
pub mod mlp;
pub mod model;
pub mod mot;
pub mod pipeline;

pub use error::{Error, Result};
