//! Locally Lipschitz, weakly bi-Lipschitz triangulations of sets given as
//! cylindrical stacks of piecewise-polynomial functions, conical refinement
//! of such triangulations, and sampling-based checkers for Whitney (B),
//! Verdier, and weak (bi-)Lipschitz conditions on stratified pairs.

pub mod cones;
pub mod defnfun;
pub mod error;
pub mod exact;
pub mod grassmann;
pub mod io;
pub mod pipeline;
pub mod regularity;
pub mod simplicial;
pub mod stacks;

pub use error::{GeomError, Result};
pub use exact::Q;
pub use grassmann::{LinearMap, Subspace};
pub use simplicial::{Point, Simplex, SimplicialComplex};
