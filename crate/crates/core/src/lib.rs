//! Numerical laboratory for Hermite-type matrix orthogonal polynomials:
//! Christoffel-Darboux kernels, Fredholm determinants, coupled Painleve IV
//! systems and the Airy edge limit.

pub mod airy;
pub mod fredholm;
pub mod jet;
pub mod kernels;
pub mod matrix;
pub mod mop;
pub mod painleve;
pub mod quadrature;

pub use matrix::{C64, IntDiag, Mat, MatrixError};
pub use mop::{FamilyKind, MatrixPoly, MopError, MopFamily, WeightFamily};
pub use quadrature::{QuadError, QuadRule, RuleKind};
pub use airy::{AiryError, AiryValue, ScalingReport};
pub use fredholm::{FredholmContext, FredholmError, GramSystem, SigmaData};
pub use jet::MatJet;
pub use kernels::{ContourRules, KernelError, KernelFactors, KernelForm};
pub use painleve::{Closure, NcpivReading, PainleveError, PivState, SymForm, SymState, Variant};
