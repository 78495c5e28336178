//! No-signaling two-prover games built from Boolean circuits, their exact
//! values, and the single-prover quantum protocol derived from them.
//!
//! - [`circuits`] and [`game`] build the game from an instance.
//! - [`lp`] and [`nosig`] compute exact no-signaling values over the rationals.
//! - [`qip`] simulates the quantum protocol on a state vector.
//! - [`inequalities`] checks the trace inequalities behind soundness.
//! - [`proveropt`] searches for good provers by gradient ascent.
//! - [`algnum`] does exact linear algebra over number fields.
//!
//! The guide in `book/` walks through each of these with runnable examples.

pub mod algnum;
pub mod circuits;
pub mod game;
pub mod inequalities;
pub mod linalg;
pub mod lp;
pub mod nosig;
pub mod proveropt;
pub mod qip;
pub mod rational;
pub mod strategy;

// The guide's code blocks run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/circuits.md")]
    mod circuits {}
    #[doc = include_str!("../../../book/src/no-signaling.md")]
    mod no_signaling {}
    #[doc = include_str!("../../../book/src/quantum-protocol.md")]
    mod quantum_protocol {}
    #[doc = include_str!("../../../book/src/inequalities.md")]
    mod inequalities {}
    #[doc = include_str!("../../../book/src/seesaw.md")]
    mod seesaw {}
    #[doc = include_str!("../../../book/src/number-fields.md")]
    mod number_fields {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
