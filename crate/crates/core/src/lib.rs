pub mod compensated;
pub mod error;
pub mod gramians;
pub mod h2;
pub mod linalg;
pub mod lyap;
pub mod model;
pub mod quadrature;
pub mod random;
pub mod reduction;
pub mod sim;

pub use error::{LssError, Result};
pub use model::{LssModel, Matrix, Mode, SwitchingSignal, Vector};
