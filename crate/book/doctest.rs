// mdbook cannot run listings that depend on workspace crates, so every
// chapter is pulled in as a module doc and `cargo test` runs its code blocks.
// One module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/audio.md")]
pub mod audio {}
#[doc = include_str!("src/segmentation.md")]
pub mod segmentation {}
#[doc = include_str!("src/features.md")]
pub mod features {}
#[doc = include_str!("src/statistics.md")]
pub mod statistics {}
#[doc = include_str!("src/augmentation.md")]
pub mod augmentation {}
#[doc = include_str!("src/rendering.md")]
pub mod rendering {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
