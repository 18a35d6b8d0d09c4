pub mod accel;
pub mod benders;
pub mod error;
pub mod instance;
pub mod linalg;
pub mod lp;
pub mod master;
pub mod oracle;
pub mod reformulation;

pub use error::{Error, Result};
