//! Write a labelled embedding table to CSV, read it back and split it.
//!
//! cargo run --example embedding_csv

use fedlwf::{load_embedding_csv, split_dataset, synth_gaussian, write_embedding_csv, SplitFractions};

fn main() -> fedlwf::Result<()> {
    let dir = std::env::temp_dir().join("fedlwf-embedding-csv");
    std::fs::create_dir_all(&dir).map_err(|e| fedlwf::Error::io(&dir, e))?;
    let path = dir.join("event.csv");

    let data = synth_gaussian(20, 10, 512, 3.0, 1.0, 5, 6)?;
    write_embedding_csv(&data, &path)?;
    let back = load_embedding_csv(&path)?;
    assert_eq!(back.features().data(), data.features().data());
    println!("{} rows x {} dims, labels {:?}", back.len(), back.dim(), back.label_names());

    let splits = split_dataset(&back, SplitFractions { train: 0.7, valid: 0.1, test: 0.2 }, 1)?;
    println!(
        "train {}  valid {}  test {}",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len()
    );
    Ok(())
}
