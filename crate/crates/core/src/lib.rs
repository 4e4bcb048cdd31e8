//! Computational toolkit for the critically marked polynomial family
//! `P_{c,a}`: Green functions and the bifurcation measure, exact enumeration
//! of postcritically finite parameters, multiplier curves, external-angle
//! combinatorics and arithmetic heights.

pub mod angle_dynamics;
pub mod error;
pub mod exact;
pub mod green_arch;
pub mod green_padic;
pub mod heights;
pub mod measure_equidist;
pub mod multiplier_curves;
pub mod numeric;
pub mod pcf_solver;
pub mod poly_family;
pub mod symbolic;
pub mod upoly;

pub use error::{Error, Result};
pub use exact::{GaussRat, Rational, Scalar};
pub use poly_family::{ExactPoint, FloatPoint, ParamPoint};
pub use symbolic::SymbolicPoly;
