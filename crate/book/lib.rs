//! The guide's code listings, checked by `cargo test --doc`. One module per
//! chapter so a failing listing points at its chapter.

#[cfg(doctest)]
#[doc = include_str!("src/introduction.md")]
mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("src/networks.md")]
mod networks {}

#[cfg(doctest)]
#[doc = include_str!("src/systems.md")]
mod systems {}

#[cfg(doctest)]
#[doc = include_str!("src/projection.md")]
mod projection {}

#[cfg(doctest)]
#[doc = include_str!("src/design.md")]
mod design {}

#[cfg(doctest)]
#[doc = include_str!("src/simulation.md")]
mod simulation {}

#[cfg(doctest)]
#[doc = include_str!("src/cli.md")]
mod cli {}
