pub mod balance;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod grid;
pub mod hydro;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod schrodinger;
pub mod stats;
pub mod zpf;

pub use error::{Error, Result};
