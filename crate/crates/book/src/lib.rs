//! The guide in `book/` as doc-tests.
//!
//! mdbook cannot run listings that depend on a library, so every chapter is
//! pulled in here as the documentation of an empty module and
//! `cargo test -p scribe-book --doc` compiles and runs each listing. A
//! failing listing is reported under its chapter's module name.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/ink.md")]
pub mod ink {}

#[doc = include_str!("../../../book/src/preprocessing.md")]
pub mod preprocessing {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}

#[doc = include_str!("../../../book/src/ctc.md")]
pub mod ctc {}

#[doc = include_str!("../../../book/src/decoding.md")]
pub mod decoding {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    /// Every chapter listed in SUMMARY.md is included above and vice versa.
    #[test]
    fn summary_matches_included_chapters() {
        let summary = include_str!("../../../book/src/SUMMARY.md");
        let listed: BTreeSet<&str> = summary
            .lines()
            .filter_map(|l| l.split_once("](")?.1.strip_suffix(".md)"))
            .collect();
        let lib = include_str!("lib.rs");
        let included: BTreeSet<&str> = lib
            .lines()
            .filter_map(|l| {
                l.strip_prefix("#[doc = include_str!(\"../../../book/src/")?
                    .strip_suffix(".md\")]")
            })
            .collect();
        assert_eq!(listed, included);
    }
}
