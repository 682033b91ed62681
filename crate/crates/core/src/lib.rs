//! Endorsement-driven identity registry for IoT devices.
//!
//! Manufacturers anchor a web of trust; users who gather enough trust from
//! endorsements become credential issuers for the devices they own. All
//! state lives on a hash-chained ledger that can be replayed and audited.
//! The guide in `book/` walks through each module with runnable examples.

pub mod bench;
pub mod canonical;
pub mod crypto;
pub mod identity;
pub mod ledger;
pub mod node;
pub mod sim;
pub mod trust;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/identity.md")]
    mod identity {}
    #[doc = include_str!("../../../book/src/trust.md")]
    mod trust {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/lifecycle.md")]
    mod lifecycle {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
