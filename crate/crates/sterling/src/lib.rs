//! Self-supervised embeddings for bipartite graphs, without negative
//! sampling: an online network trains against an EMA target under local
//! (edge and neighbor agreement) and global (co-cluster mutual
//! information) objectives. See the guide under `book/` for a tour; its
//! code samples compile as doc-tests via the [`guide`] module.

pub mod bigraph;
pub mod diff;
pub mod evalkit;
pub mod gradcheck;
pub mod nets;
pub mod objectives;
pub mod scalar;
pub mod synth;
pub mod trainer;

/// Keeps the guide honest: every fenced Rust block in `book/src/*.md`
/// runs under `cargo test --doc`.
#[cfg(any(doc, doctest))]
pub mod guide {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(graphs, "../../../book/src/graphs.md");
    chapter!(autodiff, "../../../book/src/autodiff.md");
    chapter!(model, "../../../book/src/model.md");
    chapter!(objectives, "../../../book/src/objectives.md");
    chapter!(training, "../../../book/src/training.md");
    chapter!(evaluation, "../../../book/src/evaluation.md");
    chapter!(cli, "../../../book/src/cli.md");
}
