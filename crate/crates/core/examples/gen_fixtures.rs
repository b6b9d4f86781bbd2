//! Regenerates the checked-in synthetic treebanks under `tests/data/`.
//! Deterministic: same seeds, same bytes.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bootparse::bracketed::{save_treebank, Treebank};
use bootparse::fixtures::source_grammar;
use bootparse::sampling::ToyGrammar;

fn sample_bank(grammar: &ToyGrammar, n: usize, seed: u64, max_len: usize) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(n);
    while trees.len() < n {
        match grammar.sample_tree(&mut rng) {
            Ok(tree) if tree.len() <= max_len => trees.push(tree),
            _ => continue,
        }
    }
    Treebank::from_trees(trees)
}

fn main() {
    let grammar = source_grammar();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    std::fs::create_dir_all(&data).expect("create data dir");

    let bank_200 = sample_bank(&grammar, 200, 0xB00 + 200, 60);
    save_treebank(&bank_200, &data.join("synthetic_200.mrg")).expect("write 200-tree bank");
    println!("wrote synthetic_200.mrg ({} trees)", bank_200.len());

    let bank_300 = sample_bank(&grammar, 300, 0xB00 + 300, 60);
    save_treebank(&bank_300, &data.join("source_300.mrg")).expect("write 300-tree bank");
    println!("wrote source_300.mrg ({} trees)", bank_300.len());
}
