pub mod error;
pub mod linalg;
pub mod lti;
pub mod powergrid;
pub mod projection;
pub mod retrofit;
pub mod sim;

pub use error::{Error, Result};
