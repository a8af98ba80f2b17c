//! Write a small synthetic corpus for trying the pipeline end to end.
//!
//! ```text
//! cargo run --example toy_data -- <dir> [train] [test] [triplets] [seed]
//! ```

use std::path::PathBuf;

use anyhow::{bail, Context, Result};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first().map(PathBuf::from) else {
        bail!("usage: toy_data <dir> [train] [test] [triplets] [seed]");
    };
    let num = |i: usize, default: u64| -> Result<u64> {
        match args.get(i) {
            Some(s) => s.parse().with_context(|| format!("argument {i} is not a number: {s:?}")),
            None => Ok(default),
        }
    };
    let (train, test, triplets, seed) = (num(1, 128)?, num(2, 48)?, num(3, 128)?, num(4, 0)?);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cidg_core::synthetic::write_toy_data(&dir, train as usize, test as usize, triplets as usize, seed)?;
    println!("wrote dialogues.jsonl, test_dialogues.jsonl and triplets.jsonl to {}", dir.display());
    Ok(())
}
