//! Write the planted two-block benchmark to disk in the TSV layout the CLI
//! ingests: data/planted/{train.tsv,labels_u.tsv,labels_v.tsv}.
//!
//!     cargo run --example make_planted [out_dir]

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use sterling::bigraph::Side;
use sterling::synth::planted_two_block;

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data/planted".into()).into();
    let planted = planted_two_block(40, 40, 0.5, 0.05, 7);

    let mut train = String::new();
    for &(u, v) in planted.graph.edges() {
        writeln!(train, "u{u}\tv{v}").unwrap();
    }
    let label_file = |labels: &[usize], prefix: &str| {
        let mut s = String::new();
        for (i, l) in labels.iter().enumerate() {
            writeln!(s, "{prefix}{i}\tblock{l}").unwrap();
        }
        s
    };

    fs::create_dir_all(&out).expect("create output directory");
    fs::write(out.join("train.tsv"), train).unwrap();
    fs::write(out.join("labels_u.tsv"), label_file(&planted.labels_u, "u")).unwrap();
    fs::write(out.join("labels_v.tsv"), label_file(&planted.labels_v, "v")).unwrap();
    println!(
        "wrote {} edges over {}+{} nodes to {}",
        planted.graph.edges().len(),
        planted.graph.n(Side::U),
        planted.graph.n(Side::V),
        out.display()
    );
}
